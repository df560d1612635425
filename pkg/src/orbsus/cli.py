"""Command-line front end: susceptibility runs and sweeps, band dumps,
finite-lattice studies and the validation suite.  Results go to CSV."""

from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ComputeError, ConfigError, OrbsusError
from .lattice import LatticeModel, Zone, default_grid, load_model_file, reciprocal
from .models import REGISTRY, get_model

EXIT_OK, EXIT_CONFIG, EXIT_COMPUTE, EXIT_VALIDATION = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


# --------------------------------------------------------------------------
# configuration helpers


def parse_sweep(text: str) -> tuple[str, np.ndarray]:
    """``name=start:stop:lin|log:count`` to a parameter name and its values."""
    try:
        name, spec = text.split("=", 1)
        start, stop, kind, count = spec.split(":")
        start, stop, count = float(start), float(stop), int(count)
    except ValueError:
        raise ConfigError(f"sweep must look like name=start:stop:log:count, got {text!r}") from None
    if count < 1 or not (math.isfinite(start) and math.isfinite(stop)):
        raise ConfigError(f"sweep range must be finite and nonempty, got {text!r}")
    if kind == "log":
        if start <= 0 or stop <= 0:
            raise ConfigError("log sweep needs positive bounds")
        values = np.logspace(math.log10(start), math.log10(stop), count)
    elif kind == "lin":
        values = np.linspace(start, stop, count)
    else:
        raise ConfigError(f"sweep spacing must be 'lin' or 'log', got {kind!r}")
    return name.strip(), values


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in str(text).split(",")]
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from None


def resolve_model(model: str, params: dict):
    """Registry name or TOML file path to a model object."""
    if model in REGISTRY:
        p = dict(params)
        if model.startswith("dirac"):
            p["zone"] = Zone(p.pop("zone_shape", "disk"), p.pop("K", 5.0))
            p = {k: v for k, v in p.items() if k in ("delta", "zone")}
        else:
            p = {k: v for k, v in p.items() if k in ("t", "onsite_gap", "a")}
        return get_model(model, **p)
    path = Path(model)
    if path.suffix == ".toml" or path.exists():
        m, _ = load_model_file(path)
        return m
    raise ConfigError(f"{model!r} is neither a built-in model ({', '.join(sorted(REGISTRY))}) nor a file")


def provenance(model, **fields) -> str:
    parts = [f"orbsus {__version__}", f"model={getattr(model, 'name', '?')}", f"hash={model.fingerprint()}"]
    parts += [f"{k}={v}" for k, v in fields.items()]
    return "# " + " ".join(parts)


def csv_text(header: list[str], rows: list[list], comment: str = "") -> str:
    buf = io.StringIO()
    if comment:
        buf.write(comment + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow(["" if v is None else (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for v in row])
    return buf.getvalue()


def _emit(text: str, output: str | None) -> None:
    if output:
        Path(output).write_text(text)
    else:
        sys.stdout.write(text)


# --------------------------------------------------------------------------
# chi


CHI_HEADER = ["beta", "rho0", "mu0", "chi", "err_estimate", "chi_P", "chi_Ib"]


def _chi_one(model, grid, method: str, beta: float, rho0: float, tol: float):
    from .residue import chi_residue, chi_zero_temperature, peierls_split
    from .thermo import chi_contour

    if method == "zerot":
        return chi_zero_temperature(model, grid, rho0)
    if method == "contour":
        return chi_contour(model, grid, beta, rho0, tol)
    if method == "residue":
        return chi_residue(model, grid, beta, rho0)
    if method == "split":
        return peierls_split(model, grid, beta, rho0)
    raise ConfigError(f"unknown method {method!r}")


def chi_rows(model: str, params: dict, method: str, beta, rho0, grid: int, tol: float = 1e-10, sweep=None):
    """Header, rows and provenance line for a susceptibility run or sweep."""
    sweep_name, sweep_values = sweep if sweep else (None, [None])
    header = ([sweep_name] if sweep_name else []) + CHI_HEADER
    rows = []
    m = None
    for sv in sweep_values:
        p = dict(params)
        if sweep_name:
            p[sweep_name] = float(sv)
        m = resolve_model(model, p)
        g = default_grid(m, grid)
        for b in beta:
            for r in rho0:
                res = _chi_one(m, g, method, b, r, tol)
                vals = [res.beta if res.beta is not None else math.inf, res.rho0, res.mu0, res.chi,
                        res.err_estimate, res.chi_P, res.chi_Ib]
                if not all(math.isfinite(v) or v == math.inf for v in vals if v is not None):
                    raise ComputeError("non-finite value in result row")
                rows.append(([float(sv)] if sweep_name else []) + vals)
    comment = provenance(m, method=method, grid=grid, tol=tol, params=",".join(f"{k}:{v}" for k, v in sorted(params.items())))
    return header, rows, comment


def cmd_chi(args) -> int:
    params = {"delta": args.delta, "t": args.t, "onsite_gap": args.onsite_gap, "K": args.K}
    sweep = parse_sweep(args.sweep) if args.sweep else None
    beta = [math.inf] if args.method == "zerot" else _float_list(args.beta)
    header, rows, comment = chi_rows(args.model, params, args.method, beta, _float_list(args.rho0), args.grid,
                                     args.tol, sweep)
    _emit(csv_text(header, rows, comment), args.output)
    return EXIT_OK


# --------------------------------------------------------------------------
# bands


def default_path(model) -> np.ndarray:
    """Corner points of a standard k-path: zone centre, edge midpoint, corner, centre."""
    if isinstance(model, LatticeModel):
        rc = reciprocal(model, 2)
        return np.array([[0.0, 0.0], 0.5 * rc.b1, (2 * rc.b1 + rc.b2) / 3, [0.0, 0.0]])
    K = model.zone.K
    return np.array([[-K, 0.0], [K, 0.0]])


def cmd_bands(args) -> int:
    from .bloch import fiber

    params = {"delta": args.delta, "t": args.t, "onsite_gap": args.onsite_gap, "K": args.K}
    m = resolve_model(args.model, params)
    corners = default_path(m) if not args.path else np.array([_float_list(p) for p in args.path.split(";")])
    if corners.ndim != 2 or corners.shape[1] != 2 or len(corners) < 2:
        raise ConfigError("path must be 'k1,k2;k1,k2;...' with at least two points")
    ks, s = [], []
    length = 0.0
    for a, b in zip(corners[:-1], corners[1:]):
        t = np.linspace(0, 1, args.points, endpoint=False)[:, None]
        ks.append(a + t * (b - a))
        s.append(length + t[:, 0] * np.linalg.norm(b - a))
        length += float(np.linalg.norm(b - a))
    ks.append(corners[-1:])
    s.append(np.array([length]))
    k = np.concatenate(ks)
    E = fiber(m, k).E
    header = ["s", "k1", "k2"] + [f"E{j + 1}" for j in range(E.shape[1])]
    rows = [[si, *ki, *ei] for si, ki, ei in zip(np.concatenate(s), k, E)]
    _emit(csv_text(header, rows, provenance(m, points=args.points)), args.output)
    return EXIT_OK


# --------------------------------------------------------------------------
# finite lattice


def cmd_finite(args) -> int:
    from . import finite_lattice as fl

    m = resolve_model(args.model, {"t": args.t, "onsite_gap": args.onsite_gap})
    if not isinstance(m, LatticeModel):
        raise ConfigError("finite-lattice studies need a hopping-table model")
    Ns = [int(v) for v in _float_list(args.N)]
    xi = complex(args.xi.replace(" ", ""))
    if args.study == "pressure":
        st = fl.pressure_study(m, Ns, args.beta, args.z, args.b)
        header = ["N", "P_N", "P_bulk", "abs_err"]
        rows = [[n, p, st.P_bulk, e] for n, p, e in zip(st.N, st.P_N, st.errors)]
        comment = provenance(m, study="pressure", beta=args.beta, z=args.z, b=args.b)
        if len(Ns) > 3:
            comment += f" edge_fit_limit={fl.extrapolate_pressure(st.N[1:], st.P_N[1:])!r}"
    elif args.study == "kernels":
        header = ["N", "b0", "site", "order", "analytic_re", "analytic_im", "fd_re", "fd_im", "rel_err"]
        rows = []
        for n in Ns:
            for b0 in _float_list(args.b0):
                op = fl.build_harper(m, n, b0)
                R = op.resolvent(xi)
                for site in op.lattice.interior()[:: max(1, len(op.lattice.interior()) // 4)]:
                    for order in (1, 2):
                        an = fl.kernel_db(op, site, site, xi, order)
                        fd = fl.kernel_fd(m, n, b0, site, site, xi, order)
                        err = abs(an - fd) / max(abs(fd), abs(R[site, site]))
                        rows.append([n, b0, int(site), order, an.real, an.imag, fd.real, fd.imag, err])
        comment = provenance(m, study="kernels", xi=xi, fd_step=fl.FD_STEP)
    else:
        header = ["N", "b0", "delta_b", "norm", "identity_residual"]
        rows = []
        for n in Ns:
            for b0 in _float_list(args.b0):
                op = fl.build_harper(m, n, b0)
                for db in (1e-1, 5e-2, 2e-2, 1e-2, 5e-3, 2e-3, 1e-3):
                    rows.append([n, b0, db, fl.ttilde_norm(op, db, xi), fl.identity_residual(m, n, b0, db, xi)])
        comment = provenance(m, study="ttilde", xi=xi)
    _emit(csv_text(header, rows, comment), args.output)
    return EXIT_OK


# --------------------------------------------------------------------------
# validate


def cmd_validate(args) -> int:
    from .validation import run_checks

    def show(chk):
        print(chk.line(), f"[{chk.seconds:.1f}s]", flush=True)

    results = run_checks(args.seed, args.only, progress=show)
    if not results:
        raise ConfigError(f"no check matches {args.only!r}")
    failed = [c for c in results if not c.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_VALIDATION if failed else EXIT_OK


# --------------------------------------------------------------------------


def _model_args(p):
    p.add_argument("--model", default="dirac-l", help="registry name or TOML model file")
    p.add_argument("--delta", type=float, default=1.0, help="Dirac gap parameter")
    p.add_argument("--t", type=float, default=1.0, help="honeycomb hopping")
    p.add_argument("--onsite-gap", type=float, default=0.0, help="honeycomb staggered on-site energy")
    p.add_argument("--K", type=float, default=5.0, help="disk radius of the Dirac zone")
    p.add_argument("--output", "-o", help="CSV path (default: stdout)")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="orbsus", description="Orbital magnetic susceptibility of 2-D tight-binding crystals.")
    ap.add_argument("--version", action="version", version=f"orbsus {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("chi", help="zero-field susceptibility")
    _model_args(p)
    p.add_argument("--method", choices=["contour", "residue", "zerot", "split"], default="residue")
    p.add_argument("--beta", default="1.0", help="inverse temperature(s), comma separated")
    p.add_argument("--rho0", default="0.5", help="density per site, comma separated")
    p.add_argument("--grid", type=int, default=64, help="quadrature order per direction")
    p.add_argument("--tol", type=float, default=1e-10, help="contour tolerance")
    p.add_argument("--sweep", help="parameter sweep, e.g. delta=1e-3:1e-1:log:9")
    p.set_defaults(func=cmd_chi)

    p = sub.add_parser("bands", help="band energies along a k-path")
    _model_args(p)
    p.add_argument("--path", help="corner points 'k1,k2;k1,k2;...' (Cartesian)")
    p.add_argument("--points", type=int, default=100, help="points per path segment")
    p.set_defaults(func=cmd_bands)

    p = sub.add_parser("finite", help="finite-lattice magnetic operator studies")
    _model_args(p)
    p.set_defaults(model="honeycomb")
    p.add_argument("--study", choices=["pressure", "kernels", "ttilde"], default="pressure")
    p.add_argument("--N", default="4,6,8,10,12", help="patch half-widths, comma separated")
    p.add_argument("--beta", type=float, default=2.0)
    p.add_argument("--z", type=float, default=1.0, help="fugacity")
    p.add_argument("--b", type=float, default=0.0, help="field for the pressure study")
    p.add_argument("--b0", default="0,0.3", help="expansion points for kernel studies")
    p.add_argument("--xi", default="0.3+0.5j", help="spectral parameter")
    p.set_defaults(func=cmd_finite)

    p = sub.add_parser("validate", help="run acceptance checks and invariants")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--only", help="glob over check keys, e.g. 'C*' or 'F?'")
    p.set_defaults(func=cmd_validate)
    return ap


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"orbsus: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ComputeError as exc:
        print(f"orbsus: computation failed ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    except OrbsusError as exc:  # pragma: no cover - every library error is one of the two above
        print(f"orbsus: {exc}", file=sys.stderr)
        return EXIT_COMPUTE


if __name__ == "__main__":
    sys.exit(main())

"""Zero-field orbital magnetic susceptibility of non-interacting electrons on
2-D tight-binding crystals, by contour quadrature and by residue expansion."""

__version__ = "0.1.0"

from .errors import ComputeError, ConfigError, OrbsusError  # noqa: E402
from .estimator import OrbitalSusceptibility  # noqa: E402
from .lattice import KGrid, LatticeModel, Zone, build_model, default_grid, load_model_file  # noqa: E402
from .models import dirac_diagonal, dirac_gapped, get_model, honeycomb  # noqa: E402
from .residue import chi_residue, chi_zero_temperature, peierls_split, residue_weights  # noqa: E402
from .thermo import chi_contour, pressure_bulk  # noqa: E402

__all__ = [
    "ComputeError",
    "ConfigError",
    "KGrid",
    "LatticeModel",
    "OrbitalSusceptibility",
    "OrbsusError",
    "Zone",
    "build_model",
    "chi_contour",
    "chi_residue",
    "chi_zero_temperature",
    "default_grid",
    "dirac_diagonal",
    "dirac_gapped",
    "get_model",
    "honeycomb",
    "load_model_file",
    "peierls_split",
    "pressure_bulk",
    "residue_weights",
]

"""scikit-learn style front end: fit once per model and grid, then evaluate the
susceptibility at many ``(beta, rho0)`` pairs."""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .errors import ConfigError
from .lattice import KGrid, LatticeModel, Zone
from .models import AnalyticFiber, get_model
from .residue import chi_residue, chi_zero_temperature, peierls_split, precompute_weights
from .thermo import as_grid, chi_contour, grid_fibers

METHODS = ("residue", "contour", "split")


class OrbitalSusceptibility(BaseEstimator):
    """Zero-field orbital susceptibility of a non-interacting 2-D crystal.

    Parameters
    ----------
    model : str
        Registry name (``dirac-l``, ``dirac-d`` or ``honeycomb``); ignored when
        a model object is passed to :meth:`fit`.
    delta, t, onsite_gap : float
        Parameters forwarded to the registry constructor.
    K : float
        Radius of the disk zone of the Dirac models.
    grid : int
        Quadrature order per direction.
    method : {"residue", "contour", "split"}
        Finite-temperature route.  Rows with ``beta = inf`` always use the
        zero-temperature band-insulator formula.
    tol : float
        Contour panel-doubling tolerance.
    charge : float
        Value of ``e/c``.

    Attributes
    ----------
    model_ : LatticeModel or AnalyticFiber
    grid_ : KGrid
    weights_ : BandWeights
        Temperature-independent residue weights on ``grid_``.
    fallback_ : ndarray of bool
        k-points handled by the per-k contour instead of the weights.
    """

    def __init__(
        self,
        model: str = "dirac-l",
        delta: float = 1.0,
        t: float = 1.0,
        onsite_gap: float = 0.0,
        K: float = 5.0,
        grid: int = 64,
        method: str = "residue",
        tol: float = 1e-10,
        charge: float = 1.0,
    ):
        self.model = model
        self.delta = delta
        self.t = t
        self.onsite_gap = onsite_gap
        self.K = K
        self.grid = grid
        self.method = method
        self.tol = tol
        self.charge = charge

    def _make_model(self):
        if self.model.startswith("dirac"):
            return get_model(self.model, delta=self.delta, zone=Zone("disk", self.K))
        return get_model(self.model, t=self.t, onsite_gap=self.onsite_gap)

    def fit(self, X=None, y=None):
        """Build the model, its fibers on the grid and the residue weight table.

        ``X`` may be a :class:`LatticeModel` or :class:`AnalyticFiber` to use
        instead of the registry model; ``y`` is ignored.
        """
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if isinstance(X, (LatticeModel, AnalyticFiber)):
            self.model_ = X
        else:
            self.model_ = self._make_model()
        self.grid_: KGrid = as_grid(self.model_, int(self.grid))
        f = grid_fibers(self.model_, self.grid_)
        M = f.M
        if M > 1:
            thresh = np.maximum(1e-3 * (f.E[:, -1] - f.E[:, 0] + 1.0), f.deg_tol())
            self.fallback_ = f.min_gap() <= thresh
        else:
            self.fallback_ = np.zeros(len(f.E), bool)
        self.weights_ = precompute_weights(f, self.fallback_) if self.method == "residue" else None
        return self

    def _one(self, beta: float, rho0: float):
        if math.isinf(beta):
            return chi_zero_temperature(self.model_, self.grid_, rho0, self.charge)
        if self.method == "residue":
            return chi_residue(self.model_, self.grid_, beta, rho0, self.charge, weights=self.weights_)
        if self.method == "contour":
            return chi_contour(self.model_, self.grid_, beta, rho0, self.tol, charge=self.charge)
        return peierls_split(self.model_, self.grid_, beta, rho0, self.charge)

    def compute(self, X) -> list:
        """Full :class:`ChiResult` records for each row ``(beta, rho0)`` of ``X``."""
        check_is_fitted(self, "grid_")
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != 2:
            raise ConfigError("rows must be (beta, rho0)")
        return [self._one(float(b), float(r)) for b, r in X]

    def predict(self, X) -> np.ndarray:
        """Susceptibility for each row ``(beta, rho0)`` of ``X``."""
        return np.array([res.chi for res in self.compute(X)])

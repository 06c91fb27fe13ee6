"""Likelihood, maximum likelihood and grid posteriors for location-scale models.

Observations are modeled as ``x_i | mu, sigma ~ (1/sigma) f((x_i - mu)/sigma)``
for a known standardized density ``f`` (any object from :mod:`robls.dist`).
With the noninformative prior ``pi(mu, sigma) ~ 1/sigma`` the likelihood is
proportional to ``sigma * pi(mu, sigma | x)``.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Callable

import numpy as np

from ._backend import kernels, threads
from .exceptions import DegenerateDataError, InvalidInputError, NumericalUnderflowError

logger = logging.getLogger(__name__)

__all__ = [
    "Prior",
    "FitResult",
    "GridSpec",
    "PosteriorGrid",
    "OutlierConfig",
    "as_data",
    "log_likelihood",
    "default_starts",
    "mle_fit",
    "posterior_grid",
    "common_grid_spec",
    "posterior_log_density",
    "posterior_summaries",
    "posterior_l1_distance",
    "marginal_ratio",
]

DEFAULT_TOL = 1e-8
DEFAULT_MAXITER = 10_000
COVERAGE_RATIO = 1e-6


def as_data(x) -> np.ndarray:
    """Validate a sample: at least two finite observations."""
    x = np.ascontiguousarray(x, dtype=float).ravel()
    if x.size < 2:
        raise InvalidInputError(f"need n >= 2 observations, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("observations must be finite")
    return x


def _params(family):
    return np.ascontiguousarray(family.kernel_params())


@dataclass(frozen=True)
class Prior:
    """Joint prior on ``(mu, sigma)``.

    ``log_density`` must accept broadcastable arrays ``(mu, sigma)``. The
    default is the improper noninformative prior ``1/sigma``. Custom priors
    must keep ``sigma * pi(mu, sigma)`` bounded; this is checked on every grid
    they are evaluated on.
    """

    kind: str = "noninformative"
    log_density: Callable | None = None

    def __post_init__(self):
        if self.kind not in ("noninformative", "custom"):
            raise InvalidInputError(f"unknown prior kind {self.kind!r}")
        if self.kind == "custom" and self.log_density is None:
            raise InvalidInputError("custom prior needs a log_density")

    @classmethod
    def custom(cls, log_density):
        return cls("custom", log_density)

    def log_pdf(self, mu, sigma):
        mu = np.asarray(mu, dtype=float)
        sigma = np.asarray(sigma, dtype=float)
        if self.kind == "noninformative":
            return np.broadcast_to(-np.log(sigma), np.broadcast(mu, sigma).shape)
        with np.errstate(divide="ignore"):
            return np.broadcast_to(np.asarray(self.log_density(mu, sigma), dtype=float),
                                   np.broadcast(mu, sigma).shape)


NONINFORMATIVE = Prior()


def log_likelihood(family, data, mu: float, sigma: float) -> float:
    """``sum_i log[(1/sigma) f((x_i - mu)/sigma)]``."""
    if not sigma > 0:
        raise InvalidInputError(f"sigma must be positive, got {sigma}")
    return float(kernels.loglik(as_data(data), _params(family), float(mu), float(sigma)))


@dataclass(frozen=True)
class FitResult:
    mu_hat: float
    sigma_hat: float
    log_likelihood_at_max: float
    iterations: int
    converged: bool

    def to_dict(self):
        return asdict(self)


def _robust_center_scale(x):
    q25, med, q75 = np.percentile(x, [25, 50, 75], axis=-1)
    scale = (q75 - q25) / 1.349
    mad = 1.4826 * np.median(np.abs(x - np.expand_dims(med, -1)), axis=-1)
    sd = np.std(x, axis=-1)
    scale = np.where(scale > 0, scale, np.where(mad > 0, mad, sd))
    return med, scale


def default_starts(data, init=None, multistart=True) -> np.ndarray:
    """Starting points in ``(mu, log sigma)``.

    Defaults to the median and ``IQR/1.349``; with ``multistart`` the scale is
    also tried at half and double that value.
    """
    if init is None:
        mu0, s0 = _robust_center_scale(np.asarray(data, dtype=float))
    else:
        mu0, s0 = init
        if not s0 > 0:
            raise InvalidInputError("initial sigma must be positive")
    factors = (1.0, 0.5, 2.0) if multistart else (1.0,)
    return np.array([[float(mu0), math.log(float(s0) * f)] for f in factors])


def mle_fit(family, data, init=None, tolerance: float = DEFAULT_TOL,
            maxiter: int = DEFAULT_MAXITER, multistart: bool = True,
            extra_starts=None) -> FitResult:
    """Local maximum-likelihood estimate of ``(mu, sigma)``.

    A Nelder-Mead simplex runs in ``(mu, log sigma)`` from each start and the
    best local maximum is kept. ``converged`` means the winning simplex shrank
    below ``tolerance`` in diameter within ``maxiter`` iterations.

    Parameters
    ----------
    family
        Standardized density (``normal``, ``log-pareto`` or ``student-t``
        from :func:`robls.dist.reference_models`, or any other).
    data
        Observations, ``n >= 2`` and not all identical.
    init
        Optional ``(mu0, sigma0)``; defaults to the median and ``IQR/1.349``.
    extra_starts
        Additional ``(mu, sigma)`` starts, e.g. a previous solution when
        tracing a path of datasets.
    """
    x = as_data(data)
    if np.ptp(x) == 0:
        raise DegenerateDataError("all observations are identical; sigma-hat would be 0")
    starts = default_starts(x, init, multistart)
    if extra_starts is not None:
        extra = np.asarray(extra_starts, dtype=float).reshape(-1, 2)
        extra = np.column_stack([extra[:, 0], np.log(extra[:, 1])])
        starts = np.vstack([extra, starts])
    mu, sigma, ll, it, conv = kernels.fit(x, _params(family), np.ascontiguousarray(starts),
                                          float(tolerance), int(maxiter))
    return FitResult(float(mu), float(sigma), float(ll), int(it), bool(conv))


def mle_fit_batch(family, X, tolerance=DEFAULT_TOL, maxiter=DEFAULT_MAXITER, n_threads=None):
    """Fit every row of ``X`` with the default multistart; returns arrays."""
    X = np.ascontiguousarray(X, dtype=float)
    mu0, s0 = _robust_center_scale(X)
    factors = np.array([1.0, 0.5, 2.0])
    starts = np.empty((X.shape[0], factors.size, 2))
    starts[:, :, 0] = mu0[:, None]
    starts[:, :, 1] = np.log(s0[:, None] * factors[None, :])
    return kernels.fit_batch(X, _params(family), np.ascontiguousarray(starts), float(tolerance),
                             int(maxiter), n_threads or threads())


# --------------------------------------------------------------------------
# posterior grids
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class GridSpec:
    """Rectangle ``mu_range x sigma_range``; nodes uniform in mu and in log sigma."""

    mu_range: tuple[float, float]
    sigma_range: tuple[float, float]
    n_mu: int = 400
    n_sigma: int = 400

    def __post_init__(self):
        lo, hi = self.sigma_range
        if not (lo > 0 and hi > lo):
            raise InvalidInputError(f"sigma range must be strictly positive and increasing, got {self.sigma_range}")
        if not self.mu_range[1] > self.mu_range[0]:
            raise InvalidInputError(f"mu range must be increasing, got {self.mu_range}")
        if self.n_mu < 3 or self.n_sigma < 3:
            raise InvalidInputError("grids need at least 3 nodes per axis")

    def expanded(self, factor=2.0) -> "GridSpec":
        c = 0.5 * (self.mu_range[0] + self.mu_range[1])
        h = 0.5 * (self.mu_range[1] - self.mu_range[0]) * factor
        lc = 0.5 * (math.log(self.sigma_range[0]) + math.log(self.sigma_range[1]))
        lh = 0.5 * (math.log(self.sigma_range[1]) - math.log(self.sigma_range[0])) * factor
        return replace(self, mu_range=(c - h, c + h), sigma_range=(math.exp(lc - lh), math.exp(lc + lh)))

    def refined(self, factor=2) -> "GridSpec":
        return replace(self, n_mu=(self.n_mu - 1) * factor + 1, n_sigma=(self.n_sigma - 1) * factor + 1)

    def union(self, other: "GridSpec") -> "GridSpec":
        return GridSpec((min(self.mu_range[0], other.mu_range[0]), max(self.mu_range[1], other.mu_range[1])),
                        (min(self.sigma_range[0], other.sigma_range[0]),
                         max(self.sigma_range[1], other.sigma_range[1])),
                        max(self.n_mu, other.n_mu), max(self.n_sigma, other.n_sigma))

    def nodes(self):
        mu = np.linspace(*self.mu_range, self.n_mu)
        t = np.linspace(math.log(self.sigma_range[0]), math.log(self.sigma_range[1]), self.n_sigma)
        return mu, t

    @classmethod
    def around(cls, data, n_mu=400, n_sigma=400, mu_width=6.0, log_sigma_width=2.5):
        """Default rectangle centered on the median with ``IQR/1.349`` as unit."""
        med, s = _robust_center_scale(np.asarray(data, dtype=float))
        med, s = float(med), float(s)
        return cls((med - mu_width * s, med + mu_width * s),
                   (s * math.exp(-log_sigma_width), s * math.exp(log_sigma_width)), n_mu, n_sigma)


def _trapezoid_weights(nodes):
    h = np.diff(nodes)
    w = np.zeros_like(nodes)
    w[:-1] += 0.5 * h
    w[1:] += 0.5 * h
    return w


@dataclass(frozen=True)
class PosteriorGrid:
    """Normalized joint posterior on a ``(mu, sigma)`` grid.

    ``values[i, j]`` is the posterior density with respect to ``dmu dsigma``
    at ``(mu_nodes[i], sigma_nodes[j])``. ``cell_weights`` are the matching
    trapezoidal weights (in ``mu`` and ``log sigma``, times the Jacobian
    ``sigma``), so ``(values * cell_weights).sum() == 1``.
    """

    mu_nodes: np.ndarray
    sigma_nodes: np.ndarray
    values: np.ndarray
    cell_weights: np.ndarray
    log_marginal: float
    spec: GridSpec
    boundary_ratio: float
    warnings: tuple = field(default=())

    @property
    def coverage_ok(self):
        return self.boundary_ratio < COVERAGE_RATIO

    @property
    def mass(self):
        return float(np.sum(self.values * self.cell_weights))

    def log_sigma_density(self):
        """Posterior density w.r.t. ``dmu dlog(sigma)``."""
        return self.values * self.sigma_nodes[None, :]

    def argmax(self, weight_sigma=False):
        """Grid argmax of the density (times ``sigma`` if ``weight_sigma``).

        Ties resolve to the lowest ``mu`` index, then the lowest ``sigma`` index.
        """
        v = self.values * self.sigma_nodes[None, :] if weight_sigma else self.values
        i, j = np.unravel_index(int(np.argmax(v)), v.shape)
        return float(self.mu_nodes[i]), float(self.sigma_nodes[j])

    def to_csv(self, path_or_file):
        """Write ``mu, sigma, density`` rows."""
        own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
        fh = open(path_or_file, "w", newline="") if own else path_or_file
        try:
            w = csv.writer(fh)
            w.writerow(["mu", "sigma", "density"])
            for i, m in enumerate(self.mu_nodes):
                for j, s in enumerate(self.sigma_nodes):
                    w.writerow([repr(float(m)), repr(float(s)), repr(float(self.values[i, j]))])
        finally:
            if own:
                fh.close()


def _log_posterior_unnormalized(family, x, prior, mu, sigma):
    ll = kernels.loglik_grid(x, _params(family), np.ascontiguousarray(mu),
                             np.ascontiguousarray(sigma), threads())
    lp = prior.log_pdf(mu[:, None], sigma[None, :])
    if prior.kind == "custom":
        with np.errstate(over="ignore"):
            bound = np.max(lp + np.log(sigma)[None, :])
        if not np.isfinite(bound) and bound > 0:
            raise InvalidInputError("sigma * prior is unbounded on the grid")
    return ll + lp


def _evaluate_grid(family, x, prior, spec):
    mu, t = spec.nodes()
    sigma = np.exp(t)
    logpost = _log_posterior_unnormalized(family, x, prior, mu, sigma)
    top = np.max(logpost)
    if not np.isfinite(top):
        raise NumericalUnderflowError(
            "posterior is zero on every grid node; move the grid or work in log space")
    w = _trapezoid_weights(mu)[:, None] * _trapezoid_weights(t)[None, :] * sigma[None, :]
    mass = float(np.sum(np.exp(logpost - top) * w))
    if not mass > 0:
        raise NumericalUnderflowError("posterior mass underflowed on the grid; use a log-space grid")
    log_m = top + math.log(mass)
    values = np.exp(logpost - log_m)
    dens = values * sigma[None, :]
    edge = max(dens[0].max(), dens[-1].max(), dens[:, 0].max(), dens[:, -1].max())
    ratio = float(edge / dens.max())
    return PosteriorGrid(mu, sigma, values, w, log_m, spec, ratio)


def posterior_grid(family, data, prior: Prior = NONINFORMATIVE, grid_spec: GridSpec | None = None,
                   max_expansions: int = 3) -> PosteriorGrid:
    """Joint posterior of ``(mu, sigma)`` by trapezoidal quadrature.

    ``log_marginal`` is ``log m(x)``, the log of the unnormalized mass. If the
    largest density on the grid boundary exceeds ``1e-6`` times the overall
    maximum, the rectangle is doubled (up to ``max_expansions`` times), and a
    coverage warning is attached if it still fails.
    """
    x = as_data(data)
    spec = grid_spec or GridSpec.around(x)
    g = _evaluate_grid(family, x, prior, spec)
    tries = 0
    while not g.coverage_ok and tries < max_expansions:
        spec = spec.expanded(2.0)
        g = _evaluate_grid(family, x, prior, spec)
        tries += 1
    if not g.coverage_ok:
        msg = f"grid boundary density ratio {g.boundary_ratio:.3g} exceeds {COVERAGE_RATIO:g}"
        logger.warning(msg)
        g = replace(g, warnings=(msg,))
    return g


def common_grid_spec(family, datasets, prior: Prior = NONINFORMATIVE, n_mu=400, n_sigma=400,
                     max_expansions=3) -> GridSpec:
    """A rectangle covering the posteriors of every dataset in ``datasets``."""
    spec = None
    for d in datasets:
        g = posterior_grid(family, d, prior, GridSpec.around(d, n_mu, n_sigma), max_expansions)
        spec = g.spec if spec is None else spec.union(g.spec)
    return spec


def posterior_log_density(family, data, prior, log_marginal, mu, sigma):
    """``log pi(mu, sigma | x)`` at arbitrary points given ``log m(x)``."""
    x = as_data(data)
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    sigma = np.atleast_1d(np.asarray(sigma, dtype=float))
    ll = kernels.loglik_grid(x, _params(family), np.ascontiguousarray(mu),
                             np.ascontiguousarray(sigma), threads())
    return ll + prior.log_pdf(mu[:, None], sigma[None, :]) - log_marginal


def _cdf_inverse(nodes, density, probs):
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (density[1:] + density[:-1]) * np.diff(nodes))])
    cum /= cum[-1]
    return np.interp(probs, cum, nodes)


def posterior_summaries(g: PosteriorGrid, level: float = 0.95) -> dict:
    """Marginal medians and equal-tailed credible intervals.

    Marginal CDFs are cumulative trapezoids along each axis (``log sigma``
    for the scale), inverted by linear interpolation between nodes.
    """
    if not 0.0 < level < 1.0:
        raise InvalidInputError(f"credible level must lie in (0, 1), got {level}")
    mu_w = _trapezoid_weights(g.mu_nodes)
    t = np.log(g.sigma_nodes)
    t_w = _trapezoid_weights(t)
    dens = g.log_sigma_density()
    mu_marg = dens @ t_w
    t_marg = mu_w @ dens
    lo, hi = 0.5 * (1 - level), 0.5 * (1 + level)
    mu_q = _cdf_inverse(g.mu_nodes, mu_marg, [0.5, lo, hi])
    t_q = _cdf_inverse(t, t_marg, [0.5, lo, hi])
    return {
        "mu_median": float(mu_q[0]),
        "sigma_median": float(math.exp(t_q[0])),
        "level": level,
        "mu_interval": (float(mu_q[1]), float(mu_q[2])),
        "sigma_interval": (float(math.exp(t_q[1])), float(math.exp(t_q[2]))),
    }


def posterior_l1_distance(g1: PosteriorGrid, g2: PosteriorGrid) -> float:
    """``integral |pi_1 - pi_2| dmu dsigma`` on a shared grid."""
    if not (np.array_equal(g1.mu_nodes, g2.mu_nodes) and np.array_equal(g1.sigma_nodes, g2.sigma_nodes)):
        raise InvalidInputError("posterior grids differ; evaluate both on the same GridSpec")
    return float(np.sum(np.abs(g1.values - g2.values) * g1.cell_weights))


# --------------------------------------------------------------------------
# outlier configurations
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class OutlierConfig:
    """Observations ``x_i = a_i + b_i * omega``.

    ``b_i = 0`` marks a nonoutlier, ``b_i < 0`` a left outlier and
    ``b_i > 0`` a right outlier.
    """

    a: tuple
    b: tuple
    omega: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "a", tuple(float(v) for v in self.a))
        object.__setattr__(self, "b", tuple(float(v) for v in self.b))
        if len(self.a) != len(self.b):
            raise InvalidInputError("a and b must have the same length")
        if not self.omega >= 0:
            raise InvalidInputError("omega must be nonnegative")

    @classmethod
    def with_outliers(cls, nonoutliers, right=(), left=(), omega=0.0):
        """``nonoutliers`` fixed; ``right``/``left`` hold ``(a, |b|)`` pairs."""
        a = list(nonoutliers) + [p[0] for p in right] + [p[0] for p in left]
        b = [0.0] * len(nonoutliers) + [abs(p[1]) for p in right] + [-abs(p[1]) for p in left]
        return cls(tuple(a), tuple(b), omega)

    def at(self, omega) -> "OutlierConfig":
        return replace(self, omega=float(omega))

    @property
    def data(self) -> np.ndarray:
        return np.asarray(self.a) + np.asarray(self.b) * self.omega

    @property
    def outlier_mask(self) -> np.ndarray:
        return np.asarray(self.b) != 0

    @property
    def nonoutliers(self) -> np.ndarray:
        return self.data[~self.outlier_mask]

    @property
    def k(self):
        return int(np.sum(np.asarray(self.b) == 0))

    @property
    def l(self):  # noqa: E743
        return int(np.sum(np.asarray(self.b) < 0))

    @property
    def r(self):
        return int(np.sum(np.asarray(self.b) > 0))


def marginal_ratio(config: OutlierConfig, family, prior: Prior = NONINFORMATIVE,
                   grid_spec: GridSpec | None = None) -> float:
    """``m(x_n) / (m(x_k) * prod_outliers f(x_i))``; tends to 1 as omega grows."""
    if config.k < 2:
        raise InvalidInputError("need at least k = 2 nonoutliers")
    if config.l + config.r == 0:
        return 1.0
    xn, xk = config.data, config.nonoutliers
    spec = grid_spec or common_grid_spec(family, [xn, xk], prior)
    gn = posterior_grid(family, xn, prior, spec, max_expansions=0)
    gk = posterior_grid(family, xk, prior, spec, max_expansions=0)
    log_f_out = float(np.sum(np.asarray(family.logpdf(xn[config.outlier_mask]))))
    log_ratio = gn.log_marginal - gk.log_marginal - log_f_out
    # light tails make the ratio astronomically large rather than undefined
    return math.exp(log_ratio) if log_ratio < 709.0 else math.inf

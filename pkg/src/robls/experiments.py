"""Experiment harness: threshold sweep, MSE simulation study, outlier convergence.

All three studies compare the ``normal``, ``log-pareto`` and ``student-t``
reference models from :func:`robls.dist.reference_models`.
"""

from __future__ import annotations

import logging
import math
import zlib
from dataclasses import asdict, dataclass, field

import numpy as np

from ._backend import threads
from .dist import reference_models, spawn_seed
from .exceptions import InvalidInputError, RoblsError
from .infer import (
    NONINFORMATIVE,
    OutlierConfig,
    Prior,
    common_grid_spec,
    marginal_ratio,
    mle_fit,
    mle_fit_batch,
    posterior_grid,
    posterior_l1_distance,
    posterior_log_density,
    posterior_summaries,
)

logger = logging.getLogger(__name__)

MODEL_NAMES = ("normal", "log-pareto", "student-t")


def _models(names):
    allm = reference_models()
    unknown = [m for m in names if m not in allm]
    if unknown:
        raise InvalidInputError(f"unknown models {unknown}; choose from {list(allm)}")
    return {m: allm[m] for m in names}


# --------------------------------------------------------------------------
# threshold sweep
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ThresholdSweepSpec:
    x_k: tuple = tuple(float(v) for v in range(-10, 11))
    omega_values: tuple = tuple(float(v) for v in range(0, 101))
    models: tuple = MODEL_NAMES
    estimator: str = "mle"

    def __post_init__(self):
        w = np.asarray(self.omega_values, dtype=float)
        if w.size == 0 or np.any(w < 0) or np.any(np.diff(w) <= 0):
            raise InvalidInputError("omega_values must be nonnegative and strictly increasing")
        if self.estimator not in ("mle", "posterior_median"):
            raise InvalidInputError(f"estimator must be 'mle' or 'posterior_median', got {self.estimator!r}")
        if len(self.x_k) < 1:
            raise InvalidInputError("x_k must not be empty")
        _models(self.models)


@dataclass(frozen=True)
class SweepRow:
    omega: float
    model: str
    mu: float
    sigma: float
    loglik: float = math.nan
    converged: bool = True
    error: str = ""


def threshold_sweep(spec: ThresholdSweepSpec = ThresholdSweepSpec()) -> list[SweepRow]:
    """Estimate ``(mu, sigma)`` as one observation moves through ``omega_values``.

    MLE rows are traced by continuation: each fit also starts from the
    previous omega's solution, and the better of that and the default
    multistart wins. Where they disagree (the branch switch at the threshold)
    both optima are logged. Errors are recorded per row.
    """
    rows = []
    x_k = np.asarray(spec.x_k, dtype=float)
    for name, family in _models(spec.models).items():
        prev = None
        for w in spec.omega_values:
            x = np.append(x_k, w)
            try:
                if spec.estimator == "mle":
                    fresh = mle_fit(family, x)
                    best = fresh
                    if prev is not None:
                        warm = mle_fit(family, x, init=prev, multistart=False)
                        if warm.log_likelihood_at_max > fresh.log_likelihood_at_max:
                            best = warm
                        if (abs(warm.mu_hat - fresh.mu_hat) > 1e-3
                                or abs(warm.sigma_hat - fresh.sigma_hat) > 1e-3):
                            logger.info("omega=%g %s: competing optima warm=(%.6g, %.6g, ll=%.8g) "
                                        "fresh=(%.6g, %.6g, ll=%.8g)", w, name,
                                        warm.mu_hat, warm.sigma_hat, warm.log_likelihood_at_max,
                                        fresh.mu_hat, fresh.sigma_hat, fresh.log_likelihood_at_max)
                    prev = (best.mu_hat, best.sigma_hat)
                    rows.append(SweepRow(float(w), name, best.mu_hat, best.sigma_hat,
                                         best.log_likelihood_at_max, best.converged))
                else:
                    g = posterior_grid(family, x)
                    s = posterior_summaries(g)
                    rows.append(SweepRow(float(w), name, s["mu_median"], s["sigma_median"],
                                         converged=g.coverage_ok, error="; ".join(g.warnings)))
            except RoblsError as exc:
                rows.append(SweepRow(float(w), name, math.nan, math.nan, converged=False, error=str(exc)))
    return rows


# --------------------------------------------------------------------------
# MSE simulation study
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ScenarioSpec:
    """Normal mixture ``sum_c weight_c N(mean_c, sd_c^2)``; each draw picks its component independently."""

    name: str
    components: tuple  # (weight, mean, sd) triples
    n: int = 30
    replications: int = 5000
    seed: int = 42

    def __post_init__(self):
        comps = np.asarray(self.components, dtype=float).reshape(-1, 3)
        if np.any(comps[:, 0] < 0) or not math.isclose(comps[:, 0].sum(), 1.0, abs_tol=1e-12):
            raise InvalidInputError("mixture weights must be nonnegative and sum to 1")
        if np.any(comps[:, 2] <= 0):
            raise InvalidInputError("component standard deviations must be positive")
        if self.n < 2 or self.replications < 1:
            raise InvalidInputError("need n >= 2 and replications >= 1")

    def simulate(self) -> np.ndarray:
        """``(replications, n)`` array of draws; deterministic per ``(seed, name)``."""
        comps = np.asarray(self.components, dtype=float).reshape(-1, 3)
        rng = np.random.default_rng(spawn_seed(self.seed, zlib.crc32(self.name.encode())))
        shape = (self.replications, self.n)
        which = rng.choice(len(comps), size=shape, p=comps[:, 0])
        z = rng.standard_normal(shape)
        return comps[which, 1] + comps[which, 2] * z


# the "6" in N(0, 6) is a standard deviation
SCENARIOS = {
    "normal": ((1.0, 0.0, 1.0),),
    "contaminated-scale": ((0.9, 0.0, 1.0), (0.1, 0.0, 6.0)),
    "contaminated-location": ((0.95, 0.0, 1.0), (0.05, 8.0, 1.0)),
}

# reference MSE values of the contamination study, keyed (model, scenario)
REFERENCE_MSE_MU = {
    ("log-pareto", "normal"): 0.03, ("log-pareto", "contaminated-scale"): 0.05,
    ("log-pareto", "contaminated-location"): 0.07,
    ("student-t", "normal"): 0.03, ("student-t", "contaminated-scale"): 0.06,
    ("student-t", "contaminated-location"): 0.09,
    ("normal", "normal"): 0.03, ("normal", "contaminated-scale"): 0.15,
    ("normal", "contaminated-location"): 0.29,
}
REFERENCE_MSE_SIGMA = {
    ("log-pareto", "normal"): 0.02, ("log-pareto", "contaminated-scale"): 0.11,
    ("log-pareto", "contaminated-location"): 0.09,
    ("student-t", "normal"): 0.02, ("student-t", "contaminated-scale"): 0.32,
    ("student-t", "contaminated-location"): 0.30,
    ("normal", "normal"): 0.02, ("normal", "contaminated-scale"): 1.46,
    ("normal", "contaminated-location"): 1.14,
}

MAX_FAILURE_RATE = 1e-3


def scenario(name, replications=5000, seed=42, n=30) -> ScenarioSpec:
    if name not in SCENARIOS:
        raise InvalidInputError(f"unknown scenario {name!r}; choose from {list(SCENARIOS)}")
    return ScenarioSpec(name, SCENARIOS[name], n, replications, seed)


@dataclass(frozen=True)
class MseCell:
    model: str
    scenario: str
    mse_mu: float
    se_mu: float
    mse_sigma: float
    se_sigma: float
    replications: int
    failed: int


@dataclass
class MseReport:
    cells: list = field(default_factory=list)

    @property
    def ok(self):
        return all(c.failed <= MAX_FAILURE_RATE * c.replications for c in self.cells)

    def cell(self, model, scenario_name) -> MseCell:
        for c in self.cells:
            if c.model == model and c.scenario == scenario_name:
                return c
        raise KeyError((model, scenario_name))

    def rows(self):
        return [asdict(c) for c in self.cells]


def mse_study(scenarios, models=MODEL_NAMES, true_mu=0.0, true_sigma=1.0, n_threads=None) -> MseReport:
    """Monte-Carlo MSE of the MLE of ``mu`` and ``sigma`` per (model, scenario).

    Every model sees the same simulated samples. Replicates whose fit does
    not converge are excluded and counted; a failure rate above 0.1% makes
    ``report.ok`` false. Standard errors are ``sd(squared error)/sqrt(reps)``.
    """
    fams = _models(models)
    report = MseReport()
    for sc in scenarios:
        X = sc.simulate()
        for name, family in fams.items():
            mu, sigma, _, _, conv = mle_fit_batch(family, X, n_threads=n_threads or threads())
            ok = conv & np.isfinite(mu) & np.isfinite(sigma)
            e_mu = (mu[ok] - true_mu) ** 2
            e_sig = (sigma[ok] - true_sigma) ** 2
            m = int(ok.sum())
            se = (lambda e: float(np.std(e, ddof=1) / math.sqrt(m)) if m > 1 else math.nan)
            report.cells.append(MseCell(name, sc.name, float(e_mu.mean()) if m else math.nan, se(e_mu),
                                        float(e_sig.mean()) if m else math.nan, se(e_sig),
                                        sc.replications, int((~ok).sum())))
            if (~ok).sum():
                logger.warning("%s / %s: %d of %d fits failed", name, sc.name, int((~ok).sum()), sc.replications)
    return report


def check_against_reference(report: MseReport, min_tol=0.02, n_se=4.0):
    """Per-cell comparison with the reference MSE values.

    Returns ``(model, scenario, quantity, value, reference, tolerance, passed)``
    tuples; tolerance is ``max(min_tol, n_se * standard error)``.
    """
    out = []
    for c in report.cells:
        for qty, val, se, ref in (("mu", c.mse_mu, c.se_mu, REFERENCE_MSE_MU),
                                  ("sigma", c.mse_sigma, c.se_sigma, REFERENCE_MSE_SIGMA)):
            key = (c.model, c.scenario)
            if key not in ref:
                continue
            tol = max(min_tol, n_se * se)
            out.append((c.model, c.scenario, qty, val, ref[key], tol, abs(val - ref[key]) <= tol))
    return out


# --------------------------------------------------------------------------
# convergence as the outliers move away
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ConvergenceRow:
    omega: float
    marginal_ratio: float
    sup_density_gap: float
    l1_distance: float
    sup_likelihood_gap: float
    mu_gap: float
    sigma_gap: float
    sigma_ratio: float  # sigma_hat(x_n) / sigma_hat(x_k)

    @property
    def ratio_gap(self):
        return abs(self.marginal_ratio - 1.0)


METRICS = ("ratio_gap", "sup_density_gap", "l1_distance", "sup_likelihood_gap", "mu_gap", "sigma_gap")


@dataclass
class ConvergenceReport:
    rows: list
    tail: int

    def decreasing(self) -> dict:
        """Whether each metric strictly decreases over the last ``tail`` omegas."""
        last = self.rows[-self.tail:]
        return {m: all(getattr(b, m) < getattr(a, m) for a, b in zip(last, last[1:])) for m in METRICS}

    def as_dicts(self):
        return [dict(asdict(r), ratio_gap=r.ratio_gap) for r in self.rows]


def theorem1_convergence(config: OutlierConfig, omega_schedule, family, prior: Prior = NONINFORMATIVE,
                         probe_lambda=5.0, probe_tau=10.0, probe_n=41, tail=3,
                         n_mu=400, n_sigma=400) -> ConvergenceReport:
    """Distances between inference on ``x_n`` and on the nonoutliers ``x_k`` along omega.

    For each omega: the marginal ratio ``m(x_n) / (m(x_k) prod f(x_i))``; the
    sup over a probe grid ``[-lambda, lambda] x [1/tau, tau]`` of the
    posterior gap and of the likelihood gap (likelihood normalized as
    ``sigma * posterior`` under the ``1/sigma`` prior); the L1 distance of the
    joint posteriors; and the MLE gaps.
    """
    if config.k < 2:
        raise InvalidInputError("need k >= 2 nonoutliers")
    sched = np.asarray(omega_schedule, dtype=float)
    if np.any(np.diff(sched) <= 0):
        raise InvalidInputError("omega schedule must be strictly increasing")
    pm = np.linspace(-probe_lambda, probe_lambda, probe_n)
    ps = np.geomspace(1.0 / probe_tau, probe_tau, probe_n)
    xk = config.nonoutliers
    fit_k = mle_fit(family, xk)
    rows = []
    for w in sched:
        c = config.at(w)
        xn = c.data
        spec = common_grid_spec(family, [xn, xk], prior, n_mu, n_sigma)
        gn = posterior_grid(family, xn, prior, spec, max_expansions=0)
        gk = posterior_grid(family, xk, prior, spec, max_expansions=0)
        ratio = marginal_ratio(c, family, prior, spec)
        dn = np.exp(posterior_log_density(family, xn, prior, gn.log_marginal, pm, ps))
        dk = np.exp(posterior_log_density(family, xk, prior, gk.log_marginal, pm, ps))
        gap = np.abs(dn - dk)
        fit_n = mle_fit(family, xn, extra_starts=[(fit_k.mu_hat, fit_k.sigma_hat)])
        rows.append(ConvergenceRow(
            float(w), ratio, float(gap.max()), posterior_l1_distance(gn, gk),
            float((gap * ps[None, :]).max()),
            abs(fit_n.mu_hat - fit_k.mu_hat), abs(fit_n.sigma_hat - fit_k.sigma_hat),
            fit_n.sigma_hat / fit_k.sigma_hat))
    return ConvergenceReport(rows, min(tail, len(rows)))


def standard_config():
    """21 nonoutliers ``-10..10`` and one right outlier ``x = omega``."""
    return OutlierConfig.with_outliers(range(-10, 11), right=[(0.0, 1.0)])


def violation_config():
    """Two nonoutliers ``{-1, 1}`` against three right outliers at ``omega, 2 omega, 3 omega``."""
    return OutlierConfig.with_outliers([-1.0, 1.0], right=[(0.0, 1.0), (0.0, 2.0), (0.0, 3.0)])

"""Numeric diagnostics for log-regularly varying functions.

``g`` is log-regularly varying with index ``rho`` when
``nu**rho * g(z**nu) / g(z) -> 1`` as ``z -> inf``, uniformly for ``nu`` in
compact subsets of ``(0, inf)``. Equivalently ``g(z) = (log z)**-rho * s(z)``
with ``s`` log-slowly varying, so ``rho`` is the negated slope of ``log g``
against ``log log z``.

The thresholds beyond which these limits hold are not constructive, so every
diagnostic takes an explicit probe grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .dist import TailedDistribution
from .exceptions import InvalidInputError

__all__ = [
    "TailFunction",
    "LrvDiagnostic",
    "tail_of",
    "lrv_ratio",
    "estimate_tail_index",
    "locscale_ratio",
    "locscale_sup_deviation",
    "geometric_grid",
]


@dataclass(frozen=True)
class TailFunction:
    """A positive function of ``z > z_min``.

    ``log_evaluator`` is optional; when given it is used instead of
    ``log(evaluator(z))`` so probes far out in the tail do not underflow.
    """

    evaluator: Callable[[float], float]
    label: str = ""
    z_min: float = 1.0
    log_evaluator: Callable[[float], float] | None = None

    def log(self, z):
        self._check_domain(z)
        if self.log_evaluator is not None:
            value = float(self.log_evaluator(z))
        else:
            v = float(self.evaluator(z))
            if not (v > 0 and math.isfinite(v)):
                raise InvalidInputError(f"{self.label or 'f'}({z}) = {v} is not finite and positive")
            value = math.log(v)
        if not math.isfinite(value):
            raise InvalidInputError(f"log {self.label or 'f'}({z}) = {value} is not finite")
        return value

    def __call__(self, z):
        return math.exp(self.log(z))

    def _check_domain(self, z):
        if not z > self.z_min:
            raise InvalidInputError(f"z={z} is outside the domain z > {self.z_min} of {self.label or 'f'}")


@dataclass(frozen=True)
class LrvDiagnostic:
    rho_estimate: float
    max_ratio_deviation: float
    probe_points: tuple  # (z, nu, ratio) triples


def tail_of(d: TailedDistribution) -> TailFunction:
    """``z * f(z)`` of a tailed distribution, evaluated in log space."""
    return TailFunction(
        evaluator=lambda z: z * float(d.pdf(z)),
        label=f"z*f[{d.label}]",
        z_min=1.0,
        log_evaluator=lambda z: math.log(z) + float(d.logpdf(z)),
    )


def lrv_ratio(f: TailFunction, rho: float, z: float, nu: float) -> float:
    """``nu**rho * f(z**nu) / f(z)``; tends to 1 for members of ``L_rho``."""
    if not z > 1:
        raise InvalidInputError(f"z must exceed 1, got {z}")
    if not nu > 0:
        raise InvalidInputError(f"nu must be positive, got {nu}")
    try:
        z_nu = z ** nu
    except OverflowError:
        raise InvalidInputError(f"z**nu overflows for z={z}, nu={nu}") from None
    return math.exp(rho * math.log(nu) + f.log(z_nu) - f.log(z))


def estimate_tail_index(f: TailFunction, z_grid, rho_probe: float | None = None,
                        nus=(0.5, 2.0)) -> LrvDiagnostic:
    """Least-squares tail index from ``log f`` against ``log log z``.

    ``probe_points`` records the ratio :func:`lrv_ratio` at each grid point
    for each ``nu`` in ``nus`` using ``rho_probe`` (defaults to the estimate);
    probes that leave ``f``'s domain are skipped.
    """
    z = np.asarray(z_grid, dtype=float)
    if z.ndim != 1 or z.size < 3:
        raise InvalidInputError("z_grid needs at least 3 points")
    if np.any(np.diff(z) <= 0):
        raise InvalidInputError("z_grid must be strictly increasing")
    if z[0] <= math.e:
        raise InvalidInputError("z_grid must lie above e so that log log z is defined and positive")
    x = np.log(np.log(z))
    y = np.array([f.log(zi) for zi in z])
    slope = np.polyfit(x, y, 1)[0]
    rho = -float(slope)

    rho_p = rho if rho_probe is None else rho_probe
    probes = []
    for zi in z:
        for nu in nus:
            try:
                r = lrv_ratio(f, rho_p, float(zi), nu)
            except InvalidInputError:
                continue
            probes.append((float(zi), float(nu), r))
    dev = max((abs(r - 1.0) for _, _, r in probes), default=0.0)
    return LrvDiagnostic(rho, dev, tuple(probes))


def locscale_ratio(dist, mu: float, sigma: float, z: float) -> float:
    """``(1/sigma) f((z - mu)/sigma) / f(z)``; tends to 1 as ``z -> inf``."""
    if not sigma > 0:
        raise InvalidInputError(f"sigma must be positive, got {sigma}")
    log_fz = float(dist.logpdf(z))
    if not math.isfinite(log_fz):
        raise InvalidInputError(f"f({z}) must be positive")
    return math.exp(float(dist.logpdf((z - mu) / sigma)) - math.log(sigma) - log_fz)


def locscale_sup_deviation(dist, z: float, lam: float, tau: float, n: int = 21) -> float:
    """Sup of ``|locscale_ratio - 1|`` over an ``n x n`` grid of ``[-lam, lam] x [1/tau, tau]``."""
    mus = np.linspace(-lam, lam, n)
    sigmas = np.geomspace(1.0 / tau, tau, n)
    return max(abs(locscale_ratio(dist, m, s, z) - 1.0) for m in mus for s in sigmas)


def geometric_grid(start: float, stop: float, num: int = 8) -> np.ndarray:
    return np.geomspace(start, stop, num)

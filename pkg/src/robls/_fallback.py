"""Pure-Python/NumPy implementation of the hot kernels.

Used when the compiled extension is unavailable or when ``ROBLS_BACKEND=python``.
Operation order follows ``_kernels.pyx`` so both backends walk the same
simplex path up to floating-point summation order.
"""

import math

import numpy as np


def _unpack(p):
    p = np.asarray(p, dtype=float)
    return (int(p[0]), p[1], p[2], p[3], int(p[4]), p[5], p[6], p[7], p[8], p[9], p[10])


def _log1p_sq(u, nu):
    """``log1p(u**2 / nu)`` for ``u >= 0`` without overflow at large ``u``."""
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        far = np.log(u) * 2.0 - math.log(nu) + np.log1p(nu / (u * u))
        return np.where(u > 1e100, far, np.log1p(u * u / nu))


def _core_logpdf(a, kind, shape, scale, log_const):
    u = a / scale
    if kind == 0:
        with np.errstate(over="ignore"):
            return log_const - 0.5 * u * u
    if kind == 1:
        return log_const - 0.5 * (shape + 1.0) * _log1p_sq(u, shape)
    return np.where(u <= shape, log_const, -np.inf)


def logpdf(z, params):
    kind, shape, scale, log_const, has_tail, alpha, beta, log_k, log_ga, log_a, llog_a = _unpack(params)
    a = np.abs(np.asarray(z, dtype=float))
    core = log_k + _core_logpdf(a, kind, shape, scale, log_const)
    if not has_tail:
        return core
    with np.errstate(divide="ignore", invalid="ignore"):
        la = np.log(np.where(a > alpha, a, np.e))
        tail = log_k + log_ga + log_a - la + beta * (llog_a - np.log(la))
    return np.where(a <= alpha, core, tail)


def loglik(x, params, mu, sigma):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        return float(np.sum(logpdf((x - mu) / sigma, params) - math.log(sigma)))


def loglik_grid(x, params, mu_nodes, sigma_nodes, threads=1):
    x = np.asarray(x, dtype=float)
    mu = np.asarray(mu_nodes, dtype=float)
    sig = np.asarray(sigma_nodes, dtype=float)
    out = np.empty((mu.size, sig.size))
    # chunk over mu rows to bound the (rows, sigma, n) temporary
    chunk = max(1, 2_000_000 // max(1, sig.size * x.size))
    for i0 in range(0, mu.size, chunk):
        m = mu[i0:i0 + chunk, None, None]
        z = (x[None, None, :] - m) / sig[None, :, None]
        out[i0:i0 + chunk] = logpdf(z, params).sum(axis=2) - x.size * np.log(sig)[None, :]
    return out


def _objective(x, params, mu, t):
    try:
        sigma = math.exp(t)
    except OverflowError:
        return math.inf
    if sigma == 0.0:
        return math.inf
    with np.errstate(all="ignore"):
        f = -loglik(x, params, mu, sigma)
    if f != f:
        return math.inf
    return f


def _nelder_mead(x, params, mu0, t0, step_mu, step_t, tol, maxiter):
    vx = [mu0, mu0 + step_mu, mu0]
    vy = [t0, t0, t0 + step_t]
    fv = [_objective(x, params, vx[i], vy[i]) for i in range(3)]
    converged = False
    it = 0
    while True:
        for i in range(1, 3):
            j = i
            while j > 0 and fv[j] < fv[j - 1]:
                fv[j], fv[j - 1] = fv[j - 1], fv[j]
                vx[j], vx[j - 1] = vx[j - 1], vx[j]
                vy[j], vy[j - 1] = vy[j - 1], vy[j]
                j -= 1

        dmax = 0.0
        for i in range(3):
            for j in range(i + 1, 3):
                d = math.sqrt((vx[i] - vx[j]) ** 2 + (vy[i] - vy[j]) ** 2)
                dmax = max(dmax, d)
        if dmax < tol:
            converged = True
            break
        if it >= maxiter:
            break
        it += 1

        cx = 0.5 * (vx[0] + vx[1])
        cy = 0.5 * (vy[0] + vy[1])
        rx = cx + (cx - vx[2])
        ry = cy + (cy - vy[2])
        fr = _objective(x, params, rx, ry)

        if fr < fv[0]:
            ex = cx + 2.0 * (cx - vx[2])
            ey = cy + 2.0 * (cy - vy[2])
            fe = _objective(x, params, ex, ey)
            if fe < fr:
                vx[2], vy[2], fv[2] = ex, ey, fe
            else:
                vx[2], vy[2], fv[2] = rx, ry, fr
            continue
        if fr < fv[1]:
            vx[2], vy[2], fv[2] = rx, ry, fr
            continue
        if fr < fv[2]:
            kx = cx + 0.5 * (rx - cx)
            ky = cy + 0.5 * (ry - cy)
            fk = _objective(x, params, kx, ky)
            if fk <= fr:
                vx[2], vy[2], fv[2] = kx, ky, fk
                continue
        else:
            kx = cx + 0.5 * (vx[2] - cx)
            ky = cy + 0.5 * (vy[2] - cy)
            fk = _objective(x, params, kx, ky)
            if fk < fv[2]:
                vx[2], vy[2], fv[2] = kx, ky, fk
                continue
        for i in (1, 2):
            vx[i] = vx[0] + 0.5 * (vx[i] - vx[0])
            vy[i] = vy[0] + 0.5 * (vy[i] - vy[0])
            fv[i] = _objective(x, params, vx[i], vy[i])

    return vx[0], vy[0], fv[0], it, converged


def fit(x, params, starts, tol, maxiter):
    x = np.ascontiguousarray(x, dtype=float)
    starts = np.asarray(starts, dtype=float).reshape(-1, 2)
    best = None
    total = 0
    for mu0, t0 in starts:
        cur = _nelder_mead(x, params, mu0, t0, 0.5 * math.exp(t0), 0.5, tol, maxiter)
        total += cur[3]
        if best is None or cur[2] < best[2]:
            best = cur
    mu, t, fval, _, conv = best
    return mu, math.exp(t), -fval, total, conv


def fit_batch(X, params, starts, tol, maxiter, threads=1):
    X = np.asarray(X, dtype=float)
    reps = X.shape[0]
    mu = np.empty(reps)
    sigma = np.empty(reps)
    ll = np.empty(reps)
    iters = np.empty(reps, dtype=np.int64)
    conv = np.empty(reps, dtype=bool)
    for r in range(reps):
        mu[r], sigma[r], ll[r], iters[r], conv[r] = fit(X[r], params, starts[r], tol, maxiter)
    return mu, sigma, ll, iters, conv

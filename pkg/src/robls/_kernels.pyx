# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled log-likelihood and simplex-search kernels.

Mirrors :mod:`robls._fallback` operation for operation; the two modules must
stay in lock-step (see ``tests/test_backends.py``).
"""

import numpy as np

from cython.parallel cimport prange
from libc.math cimport exp, fabs, log, log1p, sqrt, INFINITY

ctypedef struct Model:
    int kind
    double shape
    double scale
    double log_const
    int has_tail
    double alpha
    double beta
    double log_k
    double log_g_alpha
    double log_alpha
    double loglog_alpha


cdef Model _unpack(const double[::1] p):
    cdef Model m
    m.kind = <int>p[0]
    m.shape = p[1]
    m.scale = p[2]
    m.log_const = p[3]
    m.has_tail = <int>p[4]
    m.alpha = p[5]
    m.beta = p[6]
    m.log_k = p[7]
    m.log_g_alpha = p[8]
    m.log_alpha = p[9]
    m.loglog_alpha = p[10]
    return m


cdef inline double _core_logpdf(double a, const Model* m) noexcept nogil:
    cdef double u = a / m.scale
    if m.kind == 0:
        return m.log_const - 0.5 * u * u
    elif m.kind == 1:
        if u > 1e100:
            # u * u would overflow; log1p(u^2/nu) = 2 log u - log nu + log1p(nu/u^2)
            return m.log_const - 0.5 * (m.shape + 1.0) * (2.0 * log(u) - log(m.shape) + log1p(m.shape / (u * u)))
        return m.log_const - 0.5 * (m.shape + 1.0) * log1p(u * u / m.shape)
    if u <= m.shape:
        return m.log_const
    return -INFINITY


cdef inline double _std_logpdf(double z, const Model* m) noexcept nogil:
    cdef double a = fabs(z)
    cdef double la
    if m.has_tail == 0 or a <= m.alpha:
        return m.log_k + _core_logpdf(a, m)
    la = log(a)
    return m.log_k + m.log_g_alpha + m.log_alpha - la + m.beta * (m.loglog_alpha - log(la))


cdef double _loglik(const double* x, Py_ssize_t n, const Model* m,
                    double mu, double sigma) noexcept nogil:
    cdef double ls = log(sigma)
    cdef double s = 0.0
    cdef Py_ssize_t i
    for i in range(n):
        s += _std_logpdf((x[i] - mu) / sigma, m) - ls
    return s


cdef inline double _objective(const double* x, Py_ssize_t n, const Model* m,
                              double mu, double t) noexcept nogil:
    # negative log-likelihood in (mu, log sigma); non-finite values map to +inf
    cdef double f = -_loglik(x, n, m, mu, exp(t))
    if f != f:
        return INFINITY
    return f


ctypedef struct SimplexResult:
    double mu
    double t
    double fval
    int iterations
    int converged


cdef SimplexResult _nelder_mead(const double* x, Py_ssize_t n, const Model* m,
                                double mu0, double t0, double step_mu, double step_t,
                                double tol, int maxiter) noexcept nogil:
    cdef double vx[3]
    cdef double vy[3]
    cdef double fv[3]
    cdef double cx, cy, rx, ry, fr, ex, ey, fe, kx, ky, fk, d, dmax, tmp
    cdef int i, j, it = 0
    cdef SimplexResult res

    vx[0] = mu0; vy[0] = t0
    vx[1] = mu0 + step_mu; vy[1] = t0
    vx[2] = mu0; vy[2] = t0 + step_t
    for i in range(3):
        fv[i] = _objective(x, n, m, vx[i], vy[i])

    res.converged = 0
    while True:
        # insertion sort by objective, stable for ties
        for i in range(1, 3):
            j = i
            while j > 0 and fv[j] < fv[j - 1]:
                tmp = fv[j]; fv[j] = fv[j - 1]; fv[j - 1] = tmp
                tmp = vx[j]; vx[j] = vx[j - 1]; vx[j - 1] = tmp
                tmp = vy[j]; vy[j] = vy[j - 1]; vy[j - 1] = tmp
                j -= 1

        dmax = 0.0
        for i in range(3):
            for j in range(i + 1, 3):
                d = sqrt((vx[i] - vx[j]) ** 2 + (vy[i] - vy[j]) ** 2)
                if d > dmax:
                    dmax = d
        if dmax < tol:
            res.converged = 1
            break
        if it >= maxiter:
            break
        it += 1

        cx = 0.5 * (vx[0] + vx[1])
        cy = 0.5 * (vy[0] + vy[1])
        rx = cx + (cx - vx[2])
        ry = cy + (cy - vy[2])
        fr = _objective(x, n, m, rx, ry)

        if fr < fv[0]:
            ex = cx + 2.0 * (cx - vx[2])
            ey = cy + 2.0 * (cy - vy[2])
            fe = _objective(x, n, m, ex, ey)
            if fe < fr:
                vx[2] = ex; vy[2] = ey; fv[2] = fe
            else:
                vx[2] = rx; vy[2] = ry; fv[2] = fr
            continue
        if fr < fv[1]:
            vx[2] = rx; vy[2] = ry; fv[2] = fr
            continue
        if fr < fv[2]:
            kx = cx + 0.5 * (rx - cx)
            ky = cy + 0.5 * (ry - cy)
            fk = _objective(x, n, m, kx, ky)
            if fk <= fr:
                vx[2] = kx; vy[2] = ky; fv[2] = fk
                continue
        else:
            kx = cx + 0.5 * (vx[2] - cx)
            ky = cy + 0.5 * (vy[2] - cy)
            fk = _objective(x, n, m, kx, ky)
            if fk < fv[2]:
                vx[2] = kx; vy[2] = ky; fv[2] = fk
                continue
        for i in range(1, 3):
            vx[i] = vx[0] + 0.5 * (vx[i] - vx[0])
            vy[i] = vy[0] + 0.5 * (vy[i] - vy[0])
            fv[i] = _objective(x, n, m, vx[i], vy[i])

    res.mu = vx[0]
    res.t = vy[0]
    res.fval = fv[0]
    res.iterations = it
    return res


cdef SimplexResult _multistart(const double* x, Py_ssize_t n, const Model* m,
                               const double* starts, Py_ssize_t nstarts,
                               double tol, int maxiter) noexcept nogil:
    cdef SimplexResult best, cur
    cdef Py_ssize_t s
    cdef int total = 0
    best.fval = INFINITY
    best.mu = starts[0]
    best.t = starts[1]
    best.converged = 0
    for s in range(nstarts):
        # initial simplex: half the starting scale in mu, 0.5 in log sigma
        cur = _nelder_mead(x, n, m, starts[2 * s], starts[2 * s + 1],
                           0.5 * exp(starts[2 * s + 1]), 0.5, tol, maxiter)
        total += cur.iterations
        if cur.fval < best.fval:
            best = cur
    best.iterations = total
    return best


def logpdf(const double[::1] z, const double[::1] params):
    """Standardized log-density ``log f(z)`` for every element of ``z``."""
    cdef Model m = _unpack(params)
    cdef Py_ssize_t i, n = z.shape[0]
    out = np.empty(n)
    cdef double[::1] o = out
    for i in range(n):
        o[i] = _std_logpdf(z[i], &m)
    return out


def loglik(const double[::1] x, const double[::1] params, double mu, double sigma):
    """Location-scale log-likelihood of the sample ``x``."""
    cdef Model m = _unpack(params)
    return _loglik(&x[0], x.shape[0], &m, mu, sigma)


def loglik_grid(const double[::1] x, const double[::1] params,
                const double[::1] mu_nodes, const double[::1] sigma_nodes,
                int threads=1):
    """Log-likelihood on the outer product ``mu_nodes x sigma_nodes``."""
    cdef Model m = _unpack(params)
    cdef Py_ssize_t i, j, nm = mu_nodes.shape[0], ns = sigma_nodes.shape[0]
    cdef Py_ssize_t n = x.shape[0]
    out = np.empty((nm, ns))
    cdef double[:, ::1] o = out
    for i in prange(nm, nogil=True, num_threads=max(threads, 1), schedule="static"):
        for j in range(ns):
            o[i, j] = _loglik(&x[0], n, &m, mu_nodes[i], sigma_nodes[j])
    return out


def fit(const double[::1] x, const double[::1] params, const double[:, ::1] starts,
        double tol, int maxiter):
    """Best simplex fit over the ``(mu, log sigma)`` rows of ``starts``.

    Returns ``(mu, sigma, loglik, iterations, converged)``.
    """
    cdef Model m = _unpack(params)
    cdef SimplexResult r
    with nogil:
        r = _multistart(&x[0], x.shape[0], &m, &starts[0, 0], starts.shape[0], tol, maxiter)
    return r.mu, exp(r.t), -r.fval, r.iterations, bool(r.converged)


def fit_batch(const double[:, ::1] X, const double[::1] params,
              const double[:, :, ::1] starts, double tol, int maxiter, int threads=1):
    """Row-wise :func:`fit`; ``starts`` has shape ``(rows, nstarts, 2)``."""
    cdef Model m = _unpack(params)
    cdef Py_ssize_t r, reps = X.shape[0], n = X.shape[1], ns = starts.shape[1]
    mu = np.empty(reps)
    sigma = np.empty(reps)
    ll = np.empty(reps)
    iters = np.empty(reps, dtype=np.int64)
    conv = np.empty(reps, dtype=np.uint8)
    cdef double[::1] mu_v = mu, sigma_v = sigma, ll_v = ll
    cdef long long[::1] it_v = iters
    cdef unsigned char[::1] cv = conv
    cdef SimplexResult res
    for r in prange(reps, nogil=True, num_threads=max(threads, 1), schedule="dynamic"):
        res = _multistart(&X[r, 0], n, &m, &starts[r, 0, 0], ns, tol, maxiter)
        mu_v[r] = res.mu
        sigma_v[r] = exp(res.t)
        ll_v[r] = -res.fval
        it_v[r] = res.iterations
        cv[r] = res.converged
    return mu, sigma, ll, iters, conv.astype(bool)

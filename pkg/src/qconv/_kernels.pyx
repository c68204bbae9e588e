# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels; semantics and operation order mirror ``_fallback.py``."""

import numpy as np

from libc.math cimport sqrt, pow, exp, log1p, fabs, isfinite
from scipy.special.cython_special cimport ndtri, stdtrit

cdef double TINY_U = 2.0 ** -54


cdef inline double _reward(long code, double p0, double p1, double p2, double u) noexcept nogil:
    if u == 0.0:
        u = TINY_U
    if code == 0:
        return p0 + p1 * ndtri(u)
    if code == 1:
        return p0 + (p1 - p0) * u
    if code == 2:
        return p1 + p2 * stdtrit(p0, u)
    if code == 3:
        return p1 - log1p(-u) / p0
    return p0


cdef inline double _step(long code, double c0, double p, double t, double k) noexcept nogil:
    if code == 0:
        return c0 / (k + 1.0)
    if code == 1:
        return c0 / pow(t + 1.0, p)
    return c0


cdef inline double _decay(long code, double t) noexcept nogil:
    if code == 0:
        return 1.0
    if code == 1:
        return 1.0 / sqrt(t + 1.0)
    return 1.0 / (t + 1.0)


cdef inline long _greedy(double[::1] Q, long base, long A) noexcept nogil:
    cdef long best = 0, b
    cdef double bv = Q[base]
    for b in range(1, A):
        if Q[base + b] > bv:
            bv = Q[base + b]
            best = b
    return best


cdef inline long _uniform_action(double u_a, long A) noexcept nogil:
    cdef long a = <long>(u_a * A)
    if a >= A:
        a = A - 1
    return a


cdef long _choose(double[::1] Q, long s, long A, double t, long bcode, double p0,
                  double floor_, long decay, double u_e, double u_a) noexcept nogil:
    cdef long base = s * A, b
    cdef double eps, tau, m, total, target, acc
    if bcode == 0:
        return _uniform_action(u_a, A)
    if bcode == 1:
        eps = p0 * _decay(decay, t)
        if eps < floor_:
            eps = floor_
        if u_e < eps:
            return _uniform_action(u_a, A)
        return _greedy(Q, base, A)
    tau = p0 * _decay(decay, t)
    if tau < floor_:
        tau = floor_
    m = Q[base]
    for b in range(1, A):
        if Q[base + b] > m:
            m = Q[base + b]
    total = 0.0
    for b in range(A):
        total += exp((Q[base + b] - m) / tau)
    target = u_a * total
    acc = 0.0
    for b in range(A):
        acc += exp((Q[base + b] - m) / tau)
        if acc > target:
            return b
    return A - 1


cdef inline long _search(const double[:, ::1] cdf, long row, double u) noexcept nogil:
    # first index j with cdf[row, j] > u (bisect_right)
    cdef long lo = 0, hi = cdf.shape[1], mid
    while lo < hi:
        mid = (lo + hi) // 2
        if u < cdf[row, mid]:
            hi = mid
        else:
            lo = mid + 1
    return lo


cdef void _record(double[:, ::1] rec, long n_rec, double t, double[::1] Q,
                  const double[::1] qstar, double[::1] mass) noexcept nogil:
    cdef long n = Q.shape[0], i
    cdef double err_max = 0.0, err_sum = 0.0, lmax = 0.0
    cdef double qmax = Q[0], qmin = Q[0], mmin = mass[0], mmax = mass[0], msum = 0.0
    cdef double q, e, m
    for i in range(n):
        q = Q[i]
        e = fabs(q - qstar[i])
        if e > err_max:
            err_max = e
        err_sum += e
        if fabs(q) > lmax:
            lmax = fabs(q)
        if q > qmax:
            qmax = q
        if q < qmin:
            qmin = q
        m = mass[i]
        if m < mmin:
            mmin = m
        if m > mmax:
            mmax = m
        msum += m
    rec[n_rec, 0] = t
    rec[n_rec, 1] = err_max
    rec[n_rec, 2] = err_sum / n
    rec[n_rec, 3] = lmax
    rec[n_rec, 4] = qmax - qmin
    rec[n_rec, 5] = mmin
    rec[n_rec, 6] = mmax
    rec[n_rec, 7] = msum


def run_learner(const double[:, ::1] cdf, const long[::1] rcode, const double[:, ::1] rpar,
                double gamma, const double[::1] qstar, double[::1] Q, double[::1] mass,
                const double[:, ::1] spread, sink, sched, behav, bint sarsa,
                const double[:, ::1] u, long[::1] state, long horizon, long record_every,
                double[:, ::1] rec, double[::1] alpha_out):
    cdef long S = cdf.shape[1]
    cdef long n_cells = Q.shape[0]
    cdef long A = n_cells // S
    cdef bint tabular = spread.shape[0] == 0
    cdef bint want_alpha = alpha_out.shape[0] > 0
    cdef long sc = sched[0]
    cdef double c0 = sched[1], sp = sched[2]
    cdef long bcode = behav[0], decay = behav[3]
    cdef double bp0 = behav[1], bfloor = behav[2]
    cdef long s = state[0], a = state[1], t = state[2]
    cdef long n_rec = 0, status = 0, i, j, b, cell, c, s2, a2 = 0, base2
    cdef long n = u.shape[0]
    cdef double r, boot, tgt, alpha, w, coef
    cdef unsigned char[::1] is_sink = bytearray([1 if x else 0 for x in sink])

    if t == 0:
        _record(rec, n_rec, 0.0, Q, qstar, mass)
        n_rec += 1

    with nogil:
        for i in range(n):
            if not sarsa:
                a = _choose(Q, s, A, t, bcode, bp0, bfloor, decay, u[i, 0], u[i, 1])
            cell = s * A + a
            s2 = _search(cdf, cell, u[i, 2])
            r = _reward(rcode[cell], rpar[cell, 0], rpar[cell, 1], rpar[cell, 2], u[i, 3])
            base2 = s2 * A
            if sarsa:
                a2 = _choose(Q, s2, A, t + 1, bcode, bp0, bfloor, decay, u[i, 5], u[i, 6])
                boot = Q[base2 + a2]
            else:
                boot = Q[base2]
                for b in range(1, A):
                    if Q[base2 + b] > boot:
                        boot = Q[base2 + b]
            tgt = r + gamma * boot
            if tabular:
                alpha = _step(sc, c0, sp, t, mass[cell])
                mass[cell] += 1.0
                Q[cell] = (1.0 - alpha) * Q[cell] + alpha * tgt
                if want_alpha:
                    alpha_out[t] = alpha
                if not isfinite(Q[cell]):
                    status = 1
            else:
                for j in range(S):
                    w = spread[j, s]
                    if w == 0.0:
                        continue
                    c = j * A + a
                    alpha = _step(sc, c0, sp, t, mass[c])
                    mass[c] += w
                    coef = w * alpha
                    Q[c] = (1.0 - coef) * Q[c] + coef * tgt
                    if not isfinite(Q[c]):
                        status = 1
            t += 1
            if is_sink[s]:
                s = <long>(u[i, 4] * S)
                if s >= S:
                    s = S - 1
                if sarsa:
                    a = _choose(Q, s, A, t, bcode, bp0, bfloor, decay, u[i, 0], u[i, 1])
            else:
                s = s2
                if sarsa:
                    a = a2
            if status or t % record_every == 0 or t == horizon:
                _record(rec, n_rec, <double>t, Q, qstar, mass)
                n_rec += 1
            if status:
                break

    state[0] = s
    state[1] = a
    state[2] = t
    return n_rec, status


cdef void _record_decomp(double[:, ::1] rec, long n_rec, double t, double[::1] Q,
                         const double[::1] qstar, double[::1] W, double[::1] D,
                         double[::1] noise, double max_resid, double max_margin) noexcept nogil:
    cdef double dmax = 0.0, wmax = 0.0, demax = 0.0, rnow = 0.0, nmax = 0.0, delta, rr
    cdef long i
    for i in range(Q.shape[0]):
        delta = Q[i] - qstar[i]
        if fabs(delta) > dmax:
            dmax = fabs(delta)
        if fabs(W[i]) > wmax:
            wmax = fabs(W[i])
        if fabs(D[i]) > demax:
            demax = fabs(D[i])
        rr = fabs(delta - (W[i] + D[i]))
        if rr > rnow:
            rnow = rr
        if noise[i] > nmax:
            nmax = noise[i]
    rec[n_rec, 0] = t
    rec[n_rec, 1] = dmax
    rec[n_rec, 2] = wmax
    rec[n_rec, 3] = demax
    rec[n_rec, 4] = rnow
    rec[n_rec, 5] = nmax
    rec[n_rec, 6] = max_resid
    rec[n_rec, 7] = max_margin


def run_decompose(const double[:, ::1] cdf, const double[:, ::1] P, const double[::1] rmean,
                  const long[::1] rcode, const double[:, ::1] rpar, double gamma,
                  const double[::1] qstar, double[::1] Q, double[::1] mass, double[::1] W,
                  double[::1] D, double[::1] noise, sink, sched, behav,
                  const double[:, ::1] u, long[::1] state, double[::1] fstate, long horizon,
                  long record_every, double[:, ::1] rec, double[::1] alpha_out,
                  double[::1] p_out, double[::1] ef_out, double[::1] gd_out):
    cdef long S = cdf.shape[1]
    cdef long n_cells = Q.shape[0]
    cdef long A = n_cells // S
    cdef long sc = sched[0]
    cdef double c0 = sched[1], sp = sched[2]
    cdef long bcode = behav[0], decay = behav[3]
    cdef double bp0 = behav[1], bfloor = behav[2]
    cdef long s = state[0], a = state[1], t = state[2]
    cdef double max_resid = fstate[0], max_margin = fstate[1]
    cdef long n_rec = 0, status = 0, i, j, cell, s2, base
    cdef long n = u.shape[0]
    cdef double r, boot, tgt, ev, ef, f, pt, dnorm, d, gd, margin, alpha, resid
    cdef unsigned char[::1] is_sink = bytearray([1 if x else 0 for x in sink])
    cdef double[::1] V = np.zeros(S)

    for j in range(S):
        V[j] = Q[j * A + _greedy(Q, j * A, A)]
    if t == 0:
        _record_decomp(rec, n_rec, 0.0, Q, qstar, W, D, noise, max_resid, max_margin)
        n_rec += 1

    with nogil:
        for i in range(n):
            a = _choose(Q, s, A, t, bcode, bp0, bfloor, decay, u[i, 0], u[i, 1])
            cell = s * A + a
            s2 = _search(cdf, cell, u[i, 2])
            r = _reward(rcode[cell], rpar[cell, 0], rpar[cell, 1], rpar[cell, 2], u[i, 3])
            boot = V[s2]
            tgt = r + gamma * boot
            ev = 0.0
            for j in range(S):
                ev += P[cell, j] * V[j]
            ef = rmean[cell] + gamma * ev - qstar[cell]
            f = tgt - qstar[cell]
            pt = f - ef
            dnorm = 0.0
            for j in range(n_cells):
                d = fabs(Q[j] - qstar[j])
                if d > dnorm:
                    dnorm = d
            gd = gamma * dnorm
            margin = fabs(ef) - gd
            if margin > max_margin:
                max_margin = margin

            alpha = _step(sc, c0, sp, t, mass[cell])
            mass[cell] += 1.0
            Q[cell] = (1.0 - alpha) * Q[cell] + alpha * tgt
            W[cell] = (1.0 - alpha) * W[cell] + alpha * pt
            D[cell] = (1.0 - alpha) * D[cell] + alpha * ef
            noise[cell] += alpha * alpha * pt * pt
            resid = fabs((Q[cell] - qstar[cell]) - (W[cell] + D[cell]))
            if resid > max_resid:
                max_resid = resid
            alpha_out[t] = alpha
            p_out[t] = pt
            ef_out[t] = ef
            gd_out[t] = gd
            base = s * A
            V[s] = Q[base + _greedy(Q, base, A)]
            if not isfinite(Q[cell]):
                status = 1

            t += 1
            if is_sink[s]:
                s = <long>(u[i, 4] * S)
                if s >= S:
                    s = S - 1
            else:
                s = s2
            if status or t % record_every == 0 or t == horizon:
                _record_decomp(rec, n_rec, <double>t, Q, qstar, W, D, noise, max_resid, max_margin)
                n_rec += 1
            if status:
                break

    state[0] = s
    state[1] = a
    state[2] = t
    fstate[0] = max_resid
    fstate[1] = max_margin
    return n_rec, status


def recurrence(double x0, double gamma, const double[::1] a, const double[::1] c, double[::1] out):
    cdef long n = a.shape[0], i
    cdef double x = x0
    out[0] = x
    with nogil:
        for i in range(n):
            x = (1.0 - a[i]) * x + gamma * a[i] * fabs(x + c[i])
            out[i + 1] = x


def kahan_cumsum(const double[::1] v, double[::1] out):
    cdef long n = v.shape[0], i
    cdef double s = 0.0, comp = 0.0, y, tt
    out[0] = 0.0
    with nogil:
        for i in range(n):
            y = v[i] - comp
            tt = s + y
            comp = (tt - s) - y
            s = tt
            out[i + 1] = s

"""Pure-Python kernels.

Operation-for-operation mirror of ``_kernels.pyx``: same floating-point
expressions in the same order, so both backends produce bit-identical
trajectories from the same uniforms. Keep the two files in lockstep.

Uniform columns per step: 0/1 choose a_t (Q-learning) or re-choose after a
restart (SARSA), 2 next state, 3 reward, 4 restart state, 5/6 choose
a_{t+1} (SARSA only).
"""

import math
from bisect import bisect_right

from scipy.special import ndtri, stdtrit

TINY_U = 2.0**-54


def _reward(code, p0, p1, p2, u):
    if u == 0.0:
        u = TINY_U
    if code == 0:
        return p0 + p1 * float(ndtri(u))
    if code == 1:
        return p0 + (p1 - p0) * u
    if code == 2:
        return p1 + p2 * float(stdtrit(p0, u))
    if code == 3:
        return p1 - math.log1p(-u) / p0
    return p0


def _step(code, c0, p, t, k):
    if code == 0:
        return c0 / (k + 1.0)
    if code == 1:
        return c0 / (t + 1.0) ** p
    return c0


def _decay(code, t):
    if code == 0:
        return 1.0
    if code == 1:
        return 1.0 / math.sqrt(t + 1.0)
    return 1.0 / (t + 1.0)


def _greedy(Q, base, A):
    best = 0
    bv = Q[base]
    for b in range(1, A):
        if Q[base + b] > bv:
            bv = Q[base + b]
            best = b
    return best


def _choose(Q, s, A, t, behav, u_e, u_a):
    code, p0, floor_, decay = behav
    if code == 0:
        a = int(u_a * A)
        return A - 1 if a >= A else a
    base = s * A
    if code == 1:
        eps = p0 * _decay(decay, t)
        if eps < floor_:
            eps = floor_
        if u_e < eps:
            a = int(u_a * A)
            return A - 1 if a >= A else a
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
        total += math.exp((Q[base + b] - m) / tau)
    target = u_a * total
    acc = 0.0
    for b in range(A):
        acc += math.exp((Q[base + b] - m) / tau)
        if acc > target:
            return b
    return A - 1


def _record(rec, n_rec, t, Q, qstar, mass):
    n = len(Q)
    err_max = 0.0
    err_sum = 0.0
    lmax = 0.0
    qmax = Q[0]
    qmin = Q[0]
    mmin = mass[0]
    mmax = mass[0]
    msum = 0.0
    for i in range(n):
        q = Q[i]
        e = abs(q - qstar[i])
        if e > err_max:
            err_max = e
        err_sum += e
        if abs(q) > lmax:
            lmax = abs(q)
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
    row = rec[n_rec]
    row[0] = t
    row[1] = err_max
    row[2] = err_sum / n
    row[3] = lmax
    row[4] = qmax - qmin
    row[5] = mmin
    row[6] = mmax
    row[7] = msum


def run_learner(cdf, rcode, rpar, gamma, qstar, Q_arr, mass_arr, spread, sink, sched,
                behav, sarsa, u, state, horizon, record_every, rec, alpha_out):
    """Advance one chunk of Q-learning / SARSA (optionally ripple-spread).

    Mutates ``Q_arr``, ``mass_arr``, ``state`` ([s, a, t]), ``rec`` and
    ``alpha_out`` in place; returns ``(n_records, status)`` with status 1 on
    a non-finite Q entry.
    """
    S = cdf.shape[1]
    n_cells = Q_arr.shape[0]
    A = n_cells // S
    cdf_rows = cdf.tolist()
    codes = rcode.tolist()
    pars = rpar.tolist()
    qs = qstar.tolist()
    Q = Q_arr.tolist()
    mass = mass_arr.tolist()
    is_sink = [bool(x) for x in sink]
    tabular = spread.shape[0] == 0
    spread_cols = None if tabular else spread.T.tolist()  # spread_cols[s][j] = f(x_j, x_s)
    want_alpha = alpha_out.shape[0] > 0
    sc, c0, sp = sched
    behav = (int(behav[0]), float(behav[1]), float(behav[2]), int(behav[3]))
    s, a, t = int(state[0]), int(state[1]), int(state[2])
    n_rec = 0
    status = 0
    if t == 0:
        _record(rec, n_rec, 0.0, Q, qs, mass)
        n_rec += 1

    for row in u.tolist():
        if not sarsa:
            a = _choose(Q, s, A, t, behav, row[0], row[1])
        cell = s * A + a
        s2 = bisect_right(cdf_rows[cell], row[2])
        pr = pars[cell]
        r = _reward(codes[cell], pr[0], pr[1], pr[2], row[3])
        base2 = s2 * A
        if sarsa:
            a2 = _choose(Q, s2, A, t + 1, behav, row[5], row[6])
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
            if not math.isfinite(Q[cell]):
                status = 1
        else:
            col = spread_cols[s]
            for j in range(S):
                w = col[j]
                if w == 0.0:
                    continue
                c = j * A + a
                alpha = _step(sc, c0, sp, t, mass[c])
                mass[c] += w
                coef = w * alpha
                Q[c] = (1.0 - coef) * Q[c] + coef * tgt
                if not math.isfinite(Q[c]):
                    status = 1
        t += 1
        if is_sink[s]:
            s = int(row[4] * S)
            if s >= S:
                s = S - 1
            if sarsa:
                a = _choose(Q, s, A, t, behav, row[0], row[1])
        else:
            s = s2
            if sarsa:
                a = a2
        if status or t % record_every == 0 or t == horizon:
            _record(rec, n_rec, float(t), Q, qs, mass)
            n_rec += 1
        if status:
            break

    Q_arr[:] = Q
    mass_arr[:] = mass
    state[0], state[1], state[2] = s, a, t
    return n_rec, status


def run_decompose(cdf, P, rmean, rcode, rpar, gamma, qstar, Q_arr, mass_arr, W_arr, D_arr,
                  noise_arr, sink, sched, behav, u, state, fstate, horizon, record_every,
                  rec, alpha_out, p_out, ef_out, gd_out):
    """Q-learning chunk that also evolves the w / delta decomposition.

    Per-step outputs (indexed by t): step size, p_t and E[F_t | F_t] at the
    visited cell, and gamma * ||Delta_t||. ``fstate`` carries the running
    maxima [identity residual, contraction margin].
    """
    S = cdf.shape[1]
    n_cells = Q_arr.shape[0]
    A = n_cells // S
    cdf_rows = cdf.tolist()
    P_rows = P.tolist()
    rm = rmean.tolist()
    codes = rcode.tolist()
    pars = rpar.tolist()
    qs = qstar.tolist()
    Q = Q_arr.tolist()
    mass = mass_arr.tolist()
    W = W_arr.tolist()
    D = D_arr.tolist()
    noise = noise_arr.tolist()
    is_sink = [bool(x) for x in sink]
    sc, c0, sp = sched
    behav = (int(behav[0]), float(behav[1]), float(behav[2]), int(behav[3]))
    s, a, t = int(state[0]), int(state[1]), int(state[2])
    max_resid, max_margin = float(fstate[0]), float(fstate[1])
    V = [0.0] * S
    for j in range(S):
        V[j] = Q[j * A + _greedy(Q, j * A, A)]
    n_rec = 0
    status = 0
    if t == 0:
        _record_decomp(rec, n_rec, 0.0, Q, qs, W, D, noise, max_resid, max_margin)
        n_rec += 1

    for row in u.tolist():
        a = _choose(Q, s, A, t, behav, row[0], row[1])
        cell = s * A + a
        s2 = bisect_right(cdf_rows[cell], row[2])
        pr = pars[cell]
        r = _reward(codes[cell], pr[0], pr[1], pr[2], row[3])
        boot = V[s2]
        tgt = r + gamma * boot
        # E[F_t | F_t] at the visited cell, from the exact model
        prow = P_rows[cell]
        ev = 0.0
        for j in range(S):
            ev += prow[j] * V[j]
        ef = rm[cell] + gamma * ev - qs[cell]
        f = tgt - qs[cell]
        pt = f - ef
        dnorm = 0.0
        for i in range(n_cells):
            d = abs(Q[i] - qs[i])
            if d > dnorm:
                dnorm = d
        gd = gamma * dnorm
        margin = abs(ef) - gd
        if margin > max_margin:
            max_margin = margin

        alpha = _step(sc, c0, sp, t, mass[cell])
        mass[cell] += 1.0
        Q[cell] = (1.0 - alpha) * Q[cell] + alpha * tgt
        W[cell] = (1.0 - alpha) * W[cell] + alpha * pt
        D[cell] = (1.0 - alpha) * D[cell] + alpha * ef
        noise[cell] += alpha * alpha * pt * pt
        resid = abs((Q[cell] - qs[cell]) - (W[cell] + D[cell]))
        if resid > max_resid:
            max_resid = resid
        alpha_out[t] = alpha
        p_out[t] = pt
        ef_out[t] = ef
        gd_out[t] = gd
        base = s * A
        V[s] = Q[base + _greedy(Q, base, A)]
        if not math.isfinite(Q[cell]):
            status = 1

        t += 1
        if is_sink[s]:
            s = int(row[4] * S)
            if s >= S:
                s = S - 1
        else:
            s = s2
        if status or t % record_every == 0 or t == horizon:
            _record_decomp(rec, n_rec, float(t), Q, qs, W, D, noise, max_resid, max_margin)
            n_rec += 1
        if status:
            break

    Q_arr[:] = Q
    mass_arr[:] = mass
    W_arr[:] = W
    D_arr[:] = D
    noise_arr[:] = noise
    state[0], state[1], state[2] = s, a, t
    fstate[0], fstate[1] = max_resid, max_margin
    return n_rec, status


def _record_decomp(rec, n_rec, t, Q, qstar, W, D, noise, max_resid, max_margin):
    dmax = wmax = demax = rnow = nmax = 0.0
    for i in range(len(Q)):
        delta = Q[i] - qstar[i]
        if abs(delta) > dmax:
            dmax = abs(delta)
        if abs(W[i]) > wmax:
            wmax = abs(W[i])
        if abs(D[i]) > demax:
            demax = abs(D[i])
        r = abs(delta - (W[i] + D[i]))
        if r > rnow:
            rnow = r
        if noise[i] > nmax:
            nmax = noise[i]
    row = rec[n_rec]
    row[0] = t
    row[1] = dmax
    row[2] = wmax
    row[3] = demax
    row[4] = rnow
    row[5] = nmax
    row[6] = max_resid
    row[7] = max_margin


def recurrence(x0, gamma, a, c, out):
    """x_{n+1} = (1 - a_n) x_n + gamma a_n |x_n + c_n|; fills out[0..N]."""
    x = float(x0)
    out[0] = x
    vals = [x]
    for an, cn in zip(a.tolist(), c.tolist()):
        x = (1.0 - an) * x + gamma * an * abs(x + cn)
        vals.append(x)
    out[:] = vals


def kahan_cumsum(v, out):
    """Compensated prefix sums; out[0] = 0 and out[i+1] = sum(v[:i+1])."""
    s = 0.0
    comp = 0.0
    vals = [0.0]
    for x in v.tolist():
        y = x - comp
        tt = s + y
        comp = (tt - s) - y
        s = tt
        vals.append(s)
    out[:] = vals

"""Compiled training loop: samples triples and applies row updates in place.

Mirrors the reference functions in :mod:`bprlab.objective`,
:mod:`bprlab.optim` and :mod:`bprlab.sampling`; tests replay the triples it
records through those functions and compare parameters.
"""
import math

import numpy as np
from numba import njit

SGD, MOMENTUM, RMSPROP, ADAM = 0, 1, 2, 3

# status slots
ST_ERR, ST_STEP, ST_ROW, ST_TABLE = 0, 1, 2, 3
# telemetry state slots
TL_IN_WINDOW, TL_N_TOUCHED, TL_N_OUT, TL_GLOBAL, TL_WINDOW_ID = 0, 1, 2, 3, 4


@njit(cache=True)
def seed_rng(seed):
    np.random.seed(seed)


@njit(cache=True)
def _contains(indices, start, end, j):
    lo, hi = start, end
    while lo < hi:
        mid = (lo + hi) >> 1
        if indices[mid] < j:
            lo = mid + 1
        else:
            hi = mid
    return lo < end and indices[lo] == j


@njit(cache=True)
def _uniform_negative(u, indptr, indices, n_items):
    s, e = indptr[u], indptr[u + 1]
    while True:
        j = np.random.randint(0, n_items)
        if not _contains(indices, s, e, j):
            return j


@njit(cache=True)
def _adaptive_negative(u, P, indptr, indices, n_items, orderings, fstd, temperature, retry_cap):
    f_dim = P.shape[1]
    total = 0.0
    for f in range(f_dim):
        total += abs(P[u, f]) * fstd[f]
    if total > 0.0:
        s, e = indptr[u], indptr[u + 1]
        mass = -math.expm1(-n_items / temperature) if temperature > 0.0 else 1.0
        for _ in range(retry_cap):
            x = np.random.random() * total
            acc = 0.0
            chosen = f_dim - 1
            for f in range(f_dim):
                acc += abs(P[u, f]) * fstd[f]
                if acc > x:
                    chosen = f
                    break
            if temperature > 0.0:
                r = int(math.floor(-temperature * math.log1p(-np.random.random() * mass)))
                if r < 0:
                    r = 0
                if r > n_items - 1:
                    r = n_items - 1
            else:
                np.random.random()
                r = 0
            pos = r if P[u, chosen] > 0 else n_items - 1 - r
            j = orderings[chosen, pos]
            if not _contains(indices, s, e, j):
                return j
    return _uniform_negative(u, indptr, indices, n_items)


@njit(cache=True)
def _update_row(theta, r, g, m, v, t, kind, lr, beta, rho, beta1, beta2, eps):
    """Update ``theta[r]`` with gradient ``g``; returns False on a non-finite result."""
    t[r] += 1
    step = t[r]
    ok = True
    if kind == ADAM:
        c1 = 1.0 - beta1 ** step
        c2 = 1.0 - beta2 ** step
    for k in range(g.shape[0]):
        gk = g[k]
        if kind == SGD:
            val = theta[r, k] - lr * gk
        elif kind == MOMENTUM:
            mk = beta * m[r, k] + gk
            m[r, k] = mk
            val = theta[r, k] - lr * mk
        elif kind == RMSPROP:
            vk = rho * v[r, k] + (1.0 - rho) * gk * gk
            v[r, k] = vk
            val = theta[r, k] - lr * gk / (math.sqrt(vk) + eps)
        else:
            mk = beta1 * m[r, k] + (1.0 - beta1) * gk
            vk = beta2 * v[r, k] + (1.0 - beta2) * gk * gk
            m[r, k] = mk
            v[r, k] = vk
            val = theta[r, k] - lr * (mk / c1) / (math.sqrt(vk / c2) + eps)
        if not math.isfinite(val):
            ok = False
        theta[r, k] = val
    return ok


@njit(cache=True)
def _touch(stamp, table, row, window_id, buf, tl):
    if stamp[row] != window_id:
        stamp[row] = window_id
        n = tl[TL_N_TOUCHED]
        buf[n, 0] = table
        buf[n, 1] = row
        tl[TL_N_TOUCHED] = n + 1


@njit(cache=True)
def _close_window(Pm, Qm, buf, tl, tele_iter, tele_val):
    total = 0.0
    count = 0
    for n in range(tl[TL_N_TOUCHED]):
        mat = Pm if buf[n, 0] == 0 else Qm
        row = buf[n, 1]
        for k in range(mat.shape[1]):
            total += abs(mat[row, k])
        count += mat.shape[1]
    out = tl[TL_N_OUT]
    if out < tele_val.shape[0]:
        tele_iter[out] = tl[TL_GLOBAL]
        tele_val[out] = total / count if count > 0 else 0.0
        tl[TL_N_OUT] = out + 1
    tl[TL_N_TOUCHED] = 0
    tl[TL_IN_WINDOW] = 0
    tl[TL_WINDOW_ID] += 1


@njit(cache=True)
def run_triples(
    n_steps, P, Q, b, use_bias, ev_u, ev_i, indptr, indices,
    lu, li, lj, lb, kind, lr, beta, rho, beta1, beta2, eps,
    Pm, Pv, Pt, Qm, Qv, Qt, bm, bv, bt,
    adaptive, orderings, fstd, temperature, retry_cap,
    tele_on, tele_window, tl, buf, P_stamp, Q_stamp, tele_iter, tele_val,
    record, triples_out, status,
):
    n_items = Q.shape[0]
    f_dim = P.shape[1]
    n_events = ev_u.shape[0]
    gp = np.empty(f_dim)
    gi = np.empty(f_dim)
    gj = np.empty(f_dim)
    gb = np.empty(1)
    b2 = b.reshape(-1, 1)
    for step in range(n_steps):
        k = np.random.randint(0, n_events)
        u = ev_u[k]
        i = ev_i[k]
        if adaptive:
            j = _adaptive_negative(u, P, indptr, indices, n_items, orderings, fstd, temperature, retry_cap)
        else:
            j = _uniform_negative(u, indptr, indices, n_items)
        if record:
            triples_out[step, 0] = u
            triples_out[step, 1] = i
            triples_out[step, 2] = j

        x = 0.0
        for f in range(f_dim):
            x += P[u, f] * (Q[i, f] - Q[j, f])
        if use_bias:
            x += b[i] - b[j]
        if -x >= 0:
            s = 1.0 / (1.0 + math.exp(x))
        else:
            e = math.exp(-x)
            s = e / (1.0 + e)
        for f in range(f_dim):
            pu = P[u, f]
            gp[f] = -s * (Q[i, f] - Q[j, f]) + 2.0 * lu * pu
            gi[f] = -s * pu + 2.0 * li * Q[i, f]
            gj[f] = s * pu + 2.0 * lj * Q[j, f]
        ok = _update_row(P, u, gp, Pm, Pv, Pt, kind, lr, beta, rho, beta1, beta2, eps)
        bad_row, bad_table = u, 0
        if ok:
            ok = _update_row(Q, i, gi, Qm, Qv, Qt, kind, lr, beta, rho, beta1, beta2, eps)
            bad_row, bad_table = i, 1
        if ok:
            ok = _update_row(Q, j, gj, Qm, Qv, Qt, kind, lr, beta, rho, beta1, beta2, eps)
            bad_row, bad_table = j, 1
        if ok and use_bias:
            gbi = -s + 2.0 * lb * b[i]
            gbj = s + 2.0 * lb * b[j]
            gb[0] = gbi
            ok = _update_row(b2, i, gb, bm, bv, bt, kind, lr, beta, rho, beta1, beta2, eps)
            bad_row, bad_table = i, 2
            if ok:
                gb[0] = gbj
                ok = _update_row(b2, j, gb, bm, bv, bt, kind, lr, beta, rho, beta1, beta2, eps)
                bad_row, bad_table = j, 2
        if not ok:
            status[ST_ERR] = 1
            status[ST_STEP] = step
            status[ST_ROW] = bad_row
            status[ST_TABLE] = bad_table
            return

        if tele_on:
            wid = tl[TL_WINDOW_ID] + 1
            _touch(P_stamp, 0, u, wid, buf, tl)
            _touch(Q_stamp, 1, i, wid, buf, tl)
            _touch(Q_stamp, 1, j, wid, buf, tl)
            tl[TL_GLOBAL] += 1
            tl[TL_IN_WINDOW] += 1
            if tl[TL_IN_WINDOW] == tele_window:
                _close_window(Pm, Qm, buf, tl, tele_iter, tele_val)


@njit(cache=True)
def draw_adaptive(n_draws, users, P, indptr, indices, orderings, fstd, temperature, retry_cap):
    out = np.empty(n_draws, dtype=np.int64)
    n_items = orderings.shape[1]
    for k in range(n_draws):
        out[k] = _adaptive_negative(users[k % users.shape[0]], P, indptr, indices, n_items,
                                    orderings, fstd, temperature, retry_cap)
    return out


@njit(cache=True)
def draw_uniform(n_draws, users, indptr, indices, n_items):
    out = np.empty(n_draws, dtype=np.int64)
    for k in range(n_draws):
        out[k] = _uniform_negative(users[k % users.shape[0]], indptr, indices, n_items)
    return out

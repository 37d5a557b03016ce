"""Compiled kernels for event-driven hard-sphere dynamics.

Particle state is stored lazily: particle i sits at ``x[i]`` (wrapped to the
unit torus) at its own local time ``tl[i]``; only collisions move the stored
position.  Pair predictions are pure functions of the two stored states, which
is what lets the cell-list driver and the all-pairs oracle agree bit for bit.
"""
import math

import numpy as np
from numba import njit

GRAZING_TOL = 1e-12

STATUS_OK = 0
STATUS_OVERFLOW = 1
STATUS_INCONSISTENT = 2

KIND_COLLISION = 0
KIND_CROSSING = 1


@njit(cache=True)
def wrap_scalar(y):
    y = y - math.floor(y)
    if y >= 1.0:
        y = 0.0
    return y


@njit(cache=True)
def pair_time(x, v, tl, i, j, eps, t_end, ws):
    """Absolute time of the first contact of i and j before t_end (inf if none).

    Every periodic image reachable within the horizon is solved for the root
    of |dx + s dv|^2 = eps^2 with approach (dx + s dv) . dv < 0.
    """
    if i > j:
        i, j = j, i
    d = x.shape[1]
    t0 = max(tl[i], tl[j])
    horizon = t_end - t0
    if horizon < 0.0:
        return np.inf
    a = 0.0
    for k in range(d):
        r = (x[j, k] + v[j, k] * (t0 - tl[j])) - (x[i, k] + v[i, k] * (t0 - tl[i]))
        r -= math.floor(r + 0.5)
        ws[k] = r
        dvk = v[j, k] - v[i, k]
        ws[3 + k] = dvk
        a += dvk * dvk
    if a == 0.0:
        return np.inf
    # reachable image offsets per axis
    for k in range(3):
        if k < d:
            end = ws[k] + ws[3 + k] * horizon
            lo = min(ws[k], end)
            hi = max(ws[k], end)
            ws[6 + k] = math.ceil(-hi - eps)
            ws[9 + k] = math.floor(-lo + eps)
        else:
            ws[6 + k] = 0.0
            ws[9 + k] = 0.0
    eps2 = eps * eps
    best = np.inf
    for o0 in range(int(ws[6]), int(ws[9]) + 1):
        for o1 in range(int(ws[7]), int(ws[10]) + 1):
            for o2 in range(int(ws[8]), int(ws[11]) + 1):
                b = 0.0
                c = 0.0
                for k in range(d):
                    off = o0 if k == 0 else (o1 if k == 1 else o2)
                    rk = ws[k] + off
                    b += rk * ws[3 + k]
                    c += rk * rk
                if b >= 0.0:
                    continue
                c -= eps2
                disc = b * b - a * c
                if disc <= 0.0:
                    continue
                sq = math.sqrt(disc)
                if sq <= GRAZING_TOL * eps:
                    continue
                if c <= 0.0:
                    s = 0.0
                else:
                    s = c / (-b + sq)
                if s <= horizon and s < best:
                    best = s
    if best == np.inf:
        return np.inf
    return t0 + best


@njit(cache=True)
def collide(x, v, tl, a, b, t, omega_out):
    """Move a and b to time t, scatter them, and return (v.omega) transfer."""
    d = x.shape[1]
    for k in range(d):
        x[a, k] = wrap_scalar(x[a, k] + v[a, k] * (t - tl[a]))
        x[b, k] = wrap_scalar(x[b, k] + v[b, k] * (t - tl[b]))
    tl[a] = t
    tl[b] = t
    norm = 0.0
    for k in range(d):
        r = x[b, k] - x[a, k]
        r -= math.floor(r + 0.5)
        omega_out[k] = r
        norm += r * r
    norm = math.sqrt(norm)
    g = 0.0
    for k in range(d):
        omega_out[k] /= norm
        g += (v[a, k] - v[b, k]) * omega_out[k]
    for k in range(d):
        v[a, k] -= g * omega_out[k]
        v[b, k] += g * omega_out[k]
    return g


@njit(cache=True)
def _log_event(log, n_log, t, a, b, omega, vpre, v):
    d = v.shape[1]
    if n_log >= log.shape[0]:
        new = np.empty((2 * log.shape[0] + 16, log.shape[1]))
        new[:n_log] = log[:n_log]
        log = new
    row = log[n_log]
    row[0] = t
    row[1] = a
    row[2] = b
    for k in range(d):
        row[3 + k] = omega[k]
        row[3 + d + k] = vpre[k]
        row[3 + 2 * d + k] = vpre[d + k]
        row[3 + 3 * d + k] = v[a, k]
        row[3 + 4 * d + k] = v[b, k]
    return log, n_log + 1


@njit(cache=True)
def synchronize(x, v, tl, t):
    n, d = x.shape
    for i in range(n):
        for k in range(d):
            x[i, k] = wrap_scalar(x[i, k] + v[i, k] * (t - tl[i]))
        tl[i] = t


# ---------------------------------------------------------------------------
# all-pairs oracle


@njit(cache=True)
def advance_bruteforce(x, v, tl, t_now, t_end, eps, event_cap):
    n, d = x.shape
    ws = np.empty(12)
    omega = np.empty(d)
    vpre = np.empty(2 * d)
    log = np.empty((64, 3 + 5 * d))
    n_log = 0
    t_last = t_now
    while True:
        best = np.inf
        bi = -1
        bj = -1
        for i in range(n):
            for j in range(i + 1, n):
                t = pair_time(x, v, tl, i, j, eps, t_end, ws)
                if t < best:
                    best = t
                    bi = i
                    bj = j
        if bi < 0 or best > t_end:
            break
        if best < t_last - 1e-9:
            synchronize(x, v, tl, t_end)
            return STATUS_INCONSISTENT, log, n_log
        texec = max(best, t_last)
        for k in range(d):
            vpre[k] = v[bi, k]
            vpre[d + k] = v[bj, k]
        collide(x, v, tl, bi, bj, texec, omega)
        log, n_log = _log_event(log, n_log, texec, bi, bj, omega, vpre, v)
        t_last = texec
        if n_log > event_cap:
            synchronize(x, v, tl, t_end)
            return STATUS_OVERFLOW, log, n_log
    synchronize(x, v, tl, t_end)
    return STATUS_OK, log, n_log


# ---------------------------------------------------------------------------
# binary heap keyed on (time, kind, a, b)


@njit(cache=True)
def _less(ht, hk, p, q):
    if ht[p] != ht[q]:
        return ht[p] < ht[q]
    for c in range(3):
        if hk[p, c] != hk[q, c]:
            return hk[p, c] < hk[q, c]
    return False


@njit(cache=True)
def _swap(ht, hk, p, q):
    tmp = ht[p]
    ht[p] = ht[q]
    ht[q] = tmp
    for c in range(5):
        tmpi = hk[p, c]
        hk[p, c] = hk[q, c]
        hk[q, c] = tmpi


@njit(cache=True)
def _sift_up(ht, hk, pos):
    while pos > 0:
        parent = (pos - 1) >> 1
        if _less(ht, hk, pos, parent):
            _swap(ht, hk, pos, parent)
            pos = parent
        else:
            break


@njit(cache=True)
def _sift_down(ht, hk, pos, size):
    while True:
        left = 2 * pos + 1
        if left >= size:
            break
        child = left
        right = left + 1
        if right < size and _less(ht, hk, right, left):
            child = right
        if _less(ht, hk, child, pos):
            _swap(ht, hk, child, pos)
            pos = child
        else:
            break


@njit(cache=True)
def _push(ht, hk, size, t, kind, a, b, sa, sb):
    ht[size] = t
    hk[size, 0] = kind
    hk[size, 1] = a
    hk[size, 2] = b
    hk[size, 3] = sa
    hk[size, 4] = sb
    _sift_up(ht, hk, size)
    return size + 1


@njit(cache=True)
def _pop(ht, hk, size):
    size -= 1
    _swap(ht, hk, 0, size)
    _sift_down(ht, hk, 0, size)
    return size


@njit(cache=True)
def _compact(ht, hk, size, stamp):
    """Drop stale entries and re-heapify; returns the new size."""
    keep = 0
    for p in range(size):
        kind = hk[p, 0]
        ok = stamp[hk[p, 1]] == hk[p, 3]
        if kind == KIND_COLLISION:
            ok = ok and stamp[hk[p, 2]] == hk[p, 4]
        if ok:
            ht[keep] = ht[p]
            for c in range(5):
                hk[keep, c] = hk[p, c]
            keep += 1
    for p in range(keep // 2 - 1, -1, -1):
        _sift_down(ht, hk, p, keep)
    return keep


# ---------------------------------------------------------------------------
# cell-list driver


@njit(cache=True)
def _cell_id(cu, i, nc):
    d = cu.shape[1]
    cid = 0
    mult = 1
    for k in range(d):
        c = cu[i, k] % nc
        if c < 0:
            c += nc
        cid += c * mult
        mult *= nc
    return cid


@njit(cache=True)
def _unlink(i, cell_of, head, nxt, prv):
    c = cell_of[i]
    if prv[i] >= 0:
        nxt[prv[i]] = nxt[i]
    else:
        head[c] = nxt[i]
    if nxt[i] >= 0:
        prv[nxt[i]] = prv[i]
    nxt[i] = -1
    prv[i] = -1
    cell_of[i] = -1


@njit(cache=True)
def _link(i, c, cell_of, head, nxt, prv):
    nxt[i] = head[c]
    prv[i] = -1
    if head[c] >= 0:
        prv[head[c]] = i
    head[c] = i
    cell_of[i] = c


@njit(cache=True)
def _reset_cell(x, cu, i, nc):
    d = x.shape[1]
    for k in range(d):
        c = int(math.floor(x[i, k] * nc))
        if c >= nc:
            c = nc - 1
        if c < 0:
            c = 0
        cu[i, k] = c


@njit(cache=True)
def _cross_time(x, v, tl, cu, i, nc):
    d = x.shape[1]
    best = np.inf
    code = -1
    for k in range(d):
        vk = v[i, k]
        if vk > 0.0:
            dt = ((cu[i, k] + 1) / nc - x[i, k]) / vk
            c = 2 * k + 1
        elif vk < 0.0:
            dt = (cu[i, k] / nc - x[i, k]) / vk
            c = 2 * k
        else:
            continue
        if dt < best:
            best = dt
            code = c
    return tl[i] + best, code


@njit(cache=True)
def _predict(i, x, v, tl, cu, nc, head, nxt, stamp, eps, now, t_end, ht, hk, size, ws):
    d = x.shape[1]
    if nc == 1:
        j = head[0]
        while j >= 0:
            if j != i:
                t = pair_time(x, v, tl, i, j, eps, t_end, ws)
                if t <= t_end:
                    a = min(i, j)
                    b = max(i, j)
                    size = _push(ht, hk, size, t, KIND_COLLISION, a, b, stamp[a], stamp[b])
            j = nxt[j]
        return size
    c0 = cu[i, 0] % nc
    c1 = cu[i, 1] % nc
    c2 = cu[i, 2] % nc if d == 3 else 0
    r2 = 1 if d == 3 else 0
    for o2 in range(-r2, r2 + 1):
        n2 = (c2 + o2) % nc if d == 3 else 0
        for o1 in range(-1, 2):
            n1 = (c1 + o1) % nc
            for o0 in range(-1, 2):
                n0 = (c0 + o0) % nc
                cell = n0 + nc * (n1 + nc * n2)
                j = head[cell]
                while j >= 0:
                    if j != i:
                        t = pair_time(x, v, tl, i, j, eps, t_end, ws)
                        if t <= t_end:
                            a = min(i, j)
                            b = max(i, j)
                            size = _push(ht, hk, size, t, KIND_COLLISION, a, b, stamp[a], stamp[b])
                    j = nxt[j]
    tc, code = _cross_time(x, v, tl, cu, i, nc)
    if tc <= t_end:
        size = _push(ht, hk, size, max(tc, now), KIND_CROSSING, i, code, stamp[i], 0)
    return size


@njit(cache=True)
def advance_cells(x, v, tl, t_now, t_end, eps, nc, event_cap):
    """Event-driven advance to t_end; returns (status, log, n_log, n_crossings)."""
    n, d = x.shape
    ncell = nc**d
    ws = np.empty(12)
    omega = np.empty(d)
    vpre = np.empty(2 * d)
    log = np.empty((64, 3 + 5 * d))
    n_log = 0
    n_cross = 0
    stamp = np.zeros(n, dtype=np.int64)
    cu = np.zeros((n, d), dtype=np.int64)
    head = -np.ones(ncell, dtype=np.int64)
    nxt = -np.ones(n, dtype=np.int64)
    prv = -np.ones(n, dtype=np.int64)
    cell_of = -np.ones(n, dtype=np.int64)
    for i in range(n):
        if nc > 1:
            _reset_cell(x, cu, i, nc)
            _link(i, _cell_id(cu, i, nc), cell_of, head, nxt, prv)
        else:
            _link(i, 0, cell_of, head, nxt, prv)
    neigh_bound = n + 2
    cap = max(1024, 32 * n)
    ht = np.empty(cap)
    hk = np.empty((cap, 5), dtype=np.int64)
    size = 0
    now = t_now
    t_last = t_now
    for i in range(n):
        if size + neigh_bound > cap:
            cap = 2 * cap + neigh_bound
            ht2 = np.empty(cap)
            hk2 = np.empty((cap, 5), dtype=np.int64)
            ht2[:size] = ht[:size]
            hk2[:size] = hk[:size]
            ht = ht2
            hk = hk2
        size = _predict(i, x, v, tl, cu, nc, head, nxt, stamp, eps, now, t_end, ht, hk, size, ws)
    status = STATUS_OK
    while size > 0:
        t = ht[0]
        if t > t_end:
            break
        kind = hk[0, 0]
        a = hk[0, 1]
        b = hk[0, 2]
        sa = hk[0, 3]
        sb = hk[0, 4]
        size = _pop(ht, hk, size)
        if kind == KIND_COLLISION:
            if stamp[a] != sa or stamp[b] != sb:
                continue
            if t < t_last - 1e-9:
                status = STATUS_INCONSISTENT
                break
            texec = max(t, t_last)
            for k in range(d):
                vpre[k] = v[a, k]
                vpre[d + k] = v[b, k]
            collide(x, v, tl, a, b, texec, omega)
            log, n_log = _log_event(log, n_log, texec, a, b, omega, vpre, v)
            if n_log > event_cap:
                status = STATUS_OVERFLOW
                break
            t_last = texec
            now = max(now, texec)
            stamp[a] += 1
            stamp[b] += 1
            if nc > 1:
                for p in (a, b):
                    _reset_cell(x, cu, p, nc)
                    c = _cell_id(cu, p, nc)
                    if c != cell_of[p]:
                        _unlink(p, cell_of, head, nxt, prv)
                        _link(p, c, cell_of, head, nxt, prv)
            if size + 2 * neigh_bound > cap:
                size = _compact(ht, hk, size, stamp)
                if size + 2 * neigh_bound > cap // 2:
                    cap = 2 * cap + 2 * neigh_bound
                    ht2 = np.empty(cap)
                    hk2 = np.empty((cap, 5), dtype=np.int64)
                    ht2[:size] = ht[:size]
                    hk2[:size] = hk[:size]
                    ht = ht2
                    hk = hk2
            size = _predict(a, x, v, tl, cu, nc, head, nxt, stamp, eps, now, t_end, ht, hk, size, ws)
            size = _predict(b, x, v, tl, cu, nc, head, nxt, stamp, eps, now, t_end, ht, hk, size, ws)
        else:
            if stamp[a] != sa:
                continue
            now = max(now, t)
            k = b // 2
            if b % 2 == 1:
                cu[a, k] += 1
            else:
                cu[a, k] -= 1
            _unlink(a, cell_of, head, nxt, prv)
            _link(a, _cell_id(cu, a, nc), cell_of, head, nxt, prv)
            n_cross += 1
            if size + neigh_bound > cap:
                size = _compact(ht, hk, size, stamp)
                if size + neigh_bound > cap // 2:
                    cap = 2 * cap + 2 * neigh_bound
                    ht2 = np.empty(cap)
                    hk2 = np.empty((cap, 5), dtype=np.int64)
                    ht2[:size] = ht[:size]
                    hk2[:size] = hk[:size]
                    ht = ht2
                    hk = hk2
            size = _predict(a, x, v, tl, cu, nc, head, nxt, stamp, eps, now, t_end, ht, hk, size, ws)
    synchronize(x, v, tl, t_end)
    return status, log, n_log, n_cross

"""Minimum-loss grid paths.

The loss of a path is ``F + 10 p log10(l) + min(sum turn, cap) + sum wall``.
The log of the *total* length makes it non-additive over edges, so plain
Dijkstra on a scalar cost is not exact. Instead every search state
(cell, incoming direction) keeps a Pareto set of labels
(length, capped turn sum, wall sum), popped in lexicographic order of that
triple. A label A at a cell dominates B when A is no worse in length and wall
sum and ``T_A + scale * angle(dir_A, dir_B) <= T_B``: whatever B does next, A
can copy it and pay at most that much more in turns. This is exact for the
loss above because every term is monotone in the label components.

Moves: 8 neighbours, direction k points at angle k * 45 degrees.
Turns: charged at intermediate cells as scale * angle, where scale is the
cell's own material rate if it is obstructing, else the largest rate among
obstructing 8-neighbours, else 0 (free-space turns are free).
Crossings: entering an obstructing cell charges its transmission loss unless
the previous cell belongs to the same object.
"""
from __future__ import annotations

import math

import numba as nb
import numpy as np

DR = np.array([0, 1, 1, 1, 0, -1, -1, -1], dtype=np.int64)
DC = np.array([1, 1, 0, -1, -1, -1, 0, 1], dtype=np.int64)
START_DIR = 8
SQRT2 = math.sqrt(2.0)
QUARTER_PI = math.pi / 4.0


def effective_turn_scale(blocking: np.ndarray, turn_scale: np.ndarray) -> np.ndarray:
    """Per-cell dB/rad used for a direction change at that cell."""
    n, m = blocking.shape
    rates = np.where(blocking, turn_scale, 0.0)
    padded = np.pad(rates, 1)
    neigh = np.zeros_like(rates)
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            if dr or dc:
                neigh = np.maximum(neigh, padded[1 + dr:1 + dr + n, 1 + dc:1 + dc + m])
    return np.where(blocking, rates, neigh)


@nb.njit(cache=True, inline="always")
def _turn_units(d_from, d_to):
    if d_from == 8:
        return 0
    k = abs(d_from - d_to)
    return min(k, 8 - k)


@nb.njit(cache=True, inline="always")
def _less(a, b, lab_len, lab_t, lab_w):
    if lab_len[a] != lab_len[b]:
        return lab_len[a] < lab_len[b]
    if lab_t[a] != lab_t[b]:
        return lab_t[a] < lab_t[b]
    if lab_w[a] != lab_w[b]:
        return lab_w[a] < lab_w[b]
    return a < b


@nb.njit(cache=True, nogil=True)
def _search(blocking, loss, scale, eff_id, tx_r, tx_c, px, fspl, ten_p, cap, omega, capacity):
    n = blocking.shape[0]
    m = blocking.shape[1]
    n_states = n * m * 9
    head = np.full(n_states, -1, np.int64)
    best = np.full((n, m), np.inf)
    best_label = np.full((n, m), -1, np.int64)

    lab_no = np.empty(capacity, np.int64)
    lab_nd = np.empty(capacity, np.int64)
    lab_len = np.empty(capacity, np.float64)
    lab_t = np.empty(capacity, np.float64)
    lab_w = np.empty(capacity, np.float64)
    lab_cell = np.empty(capacity, np.int64)
    lab_dir = np.empty(capacity, np.int64)
    lab_parent = np.empty(capacity, np.int64)
    lab_next = np.empty(capacity, np.int64)
    lab_alive = np.empty(capacity, np.bool_)
    lab_done = np.empty(capacity, np.bool_)
    heap = np.empty(capacity, np.int64)
    hsize = 0
    count = 0

    # start label
    lab_no[0] = 0
    lab_nd[0] = 0
    lab_len[0] = 0.0
    lab_t[0] = 0.0
    lab_w[0] = 0.0
    lab_cell[0] = tx_r * m + tx_c
    lab_dir[0] = 8
    lab_parent[0] = -1
    lab_alive[0] = True
    lab_done[0] = False
    s0 = (tx_r * m + tx_c) * 9 + 8
    lab_next[0] = head[s0]
    head[s0] = 0
    heap[0] = 0
    hsize = 1
    count = 1

    while hsize > 0:
        # pop min
        cur = heap[0]
        hsize -= 1
        if hsize > 0:
            heap[0] = heap[hsize]
            i = 0
            while True:
                l = 2 * i + 1
                if l >= hsize:
                    break
                c = l
                if l + 1 < hsize and _less(heap[l + 1], heap[l], lab_len, lab_t, lab_w):
                    c = l + 1
                if _less(heap[c], heap[i], lab_len, lab_t, lab_w):
                    tmp = heap[c]
                    heap[c] = heap[i]
                    heap[i] = tmp
                    i = c
                else:
                    break
        if not lab_alive[cur]:
            continue
        lab_done[cur] = True
        cell = lab_cell[cur]
        ur = cell // m
        uc = cell - ur * m
        lm = lab_len[cur] * px
        if lm < px:
            lm = px
        pl = fspl + ten_p * math.log10(lm) + lab_t[cur] + lab_w[cur] - omega
        if pl < best[ur, uc]:
            best[ur, uc] = pl
            best_label[ur, uc] = cur
        din = lab_dir[cur]
        u_id = eff_id[ur, uc]
        u_scale = scale[ur, uc]
        for d in range(8):
            vr = ur + DR[d]
            vc = uc + DC[d]
            if vr < 0 or vr >= n or vc < 0 or vc >= m:
                continue
            k = _turn_units(din, d)
            t2 = lab_t[cur]
            if k > 0 and u_scale > 0.0:
                t2 = t2 + u_scale * (k * QUARTER_PI)
                if t2 > cap:
                    t2 = cap
            w2 = lab_w[cur]
            if blocking[vr, vc] and eff_id[vr, vc] != u_id:
                w2 = w2 + loss[vr, vc]
            no2 = lab_no[cur]
            nd2 = lab_nd[cur]
            if d % 2 == 0:
                no2 += 1
            else:
                nd2 += 1
            len2 = no2 + SQRT2 * nd2
            v_cell = vr * m + vc
            v_scale = scale[vr, vc]
            # dominance against every label already at this cell
            dominated = False
            for dj in range(9):
                sj = v_cell * 9 + dj
                prev = -1
                j = head[sj]
                while j != -1:
                    nxt = lab_next[j]
                    if not lab_alive[j]:
                        # unlink dead label
                        if prev == -1:
                            head[sj] = nxt
                        else:
                            lab_next[prev] = nxt
                        j = nxt
                        continue
                    if lab_len[j] <= len2 and lab_w[j] <= w2:
                        slack = v_scale * (_turn_units(dj, d) * QUARTER_PI) if dj != d else 0.0
                        if lab_t[j] + slack <= t2:
                            dominated = True
                            break
                    if (not lab_done[j]) and len2 <= lab_len[j] and w2 <= lab_w[j]:
                        slack = v_scale * (_turn_units(d, dj) * QUARTER_PI) if dj != d else 0.0
                        if dj != 8 and t2 + slack <= lab_t[j]:
                            lab_alive[j] = False
                    prev = j
                    j = nxt
                if dominated:
                    break
            if dominated:
                continue
            if count >= capacity:
                return best, best_label, lab_cell[:count], lab_parent[:count], lab_no[:count], lab_nd[:count], False
            new = count
            count += 1
            lab_no[new] = no2
            lab_nd[new] = nd2
            lab_len[new] = len2
            lab_t[new] = t2
            lab_w[new] = w2
            lab_cell[new] = v_cell
            lab_dir[new] = d
            lab_parent[new] = cur
            lab_alive[new] = True
            lab_done[new] = False
            s2 = v_cell * 9 + d
            lab_next[new] = head[s2]
            head[s2] = new
            # push
            i = hsize
            heap[i] = new
            hsize += 1
            while i > 0:
                p = (i - 1) // 2
                if _less(heap[i], heap[p], lab_len, lab_t, lab_w):
                    tmp = heap[i]
                    heap[i] = heap[p]
                    heap[p] = tmp
                    i = p
                else:
                    break
    return best, best_label, lab_cell[:count], lab_parent[:count], lab_no[:count], lab_nd[:count], True


class SearchResult:
    """Per-cell minimum loss (dB) plus the label tree for path reconstruction."""

    def __init__(self, loss_db, best_label, lab_cell, lab_parent, lab_no, lab_nd, shape):
        self.loss_db = loss_db
        self._best_label = best_label
        self._cell = lab_cell
        self._parent = lab_parent
        self._no = lab_no
        self._nd = lab_nd
        self._m = shape[1]

    def path_to(self, r: int, c: int) -> tuple:
        """(cells from source to (r, c), n_orth, n_diag) of the minimum-loss path."""
        lab = int(self._best_label[r, c])
        n_o, n_d = int(self._no[lab]), int(self._nd[lab])
        cells = []
        while lab != -1:
            cell = int(self._cell[lab])
            cells.append(divmod(cell, self._m))
            lab = int(self._parent[lab])
        return cells[::-1], n_o, n_d


def min_loss_search(blocking, loss, turn_scale, obj_id, tx_cell, pixel_m, fspl_db, exponent, cap_db,
                    omega_db=0.0) -> SearchResult:
    blocking = np.ascontiguousarray(blocking, dtype=np.bool_)
    loss = np.ascontiguousarray(loss, dtype=np.float64)
    scale = effective_turn_scale(blocking, np.asarray(turn_scale, dtype=np.float64))
    eff_id = np.where(blocking, obj_id, -1).astype(np.int64)
    capacity = blocking.size * 12
    while True:
        out = _search(blocking, loss, scale, eff_id, int(tx_cell[0]), int(tx_cell[1]), float(pixel_m),
                      float(fspl_db), 10.0 * float(exponent), float(cap_db), float(omega_db), capacity)
        if out[-1]:
            break
        capacity *= 2
    best, best_label, lab_cell, lab_parent, lab_no, lab_nd, _ = out
    return SearchResult(best, best_label, lab_cell, lab_parent, lab_no, lab_nd, blocking.shape)

# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernel backend; see _pure.py for the reference implementation.

Arithmetic and iteration order match _pure exactly so outputs are
bit-identical between backends.
"""

from libc.stdint cimport int64_t

import numpy as np

NAME = "compiled"

cdef int64_t _INF = <int64_t>1 << 62


def ibm1_run(int64_t[::1] pids, int64_t[::1] offsets, int64_t[::1] ns_arr,
             int64_t[::1] nt_arr, int64_t[::1] pair_src, long n_src,
             long n_pairs, long iterations):
    cdef double[::1] prob = np.empty(n_pairs, dtype=np.float64)
    cdef double[::1] counts = np.empty(n_pairs, dtype=np.float64)
    cdef double[::1] totals = np.empty(n_src, dtype=np.float64)
    cdef int64_t[::1] fanout = np.zeros(n_src, dtype=np.int64)
    cdef Py_ssize_t n_sents = ns_arr.shape[0]
    cdef Py_ssize_t si, i, j, pid, it
    cdef int64_t off, ns, nt, base
    cdef double denom

    for pid in range(n_pairs):
        fanout[pair_src[pid]] += 1
    for pid in range(n_pairs):
        prob[pid] = 1.0 / fanout[pair_src[pid]]

    for it in range(iterations):
        for pid in range(n_pairs):
            counts[pid] = 0.0
        for si in range(n_sents):
            off = offsets[si]
            ns = ns_arr[si]
            nt = nt_arr[si]
            for j in range(nt):
                base = off + j * ns
                denom = 0.0
                for i in range(ns):
                    denom += prob[pids[base + i]]
                for i in range(ns):
                    pid = pids[base + i]
                    counts[pid] += prob[pid] / denom
        for i in range(n_src):
            totals[i] = 0.0
        for pid in range(n_pairs):
            totals[pair_src[pid]] += counts[pid]
        for pid in range(n_pairs):
            prob[pid] = counts[pid] / totals[pair_src[pid]]
    return [prob[pid] for pid in range(n_pairs)]


cdef void _solve_assignment(int64_t[::1] cost, Py_ssize_t k, int64_t[::1] row_of_col,
                            int64_t[::1] u_out, int64_t[::1] v_out):
    cdef int64_t[::1] u = np.zeros(k + 1, dtype=np.int64)
    cdef int64_t[::1] v = np.zeros(k + 1, dtype=np.int64)
    cdef int64_t[::1] p = np.zeros(k + 1, dtype=np.int64)
    cdef int64_t[::1] way = np.zeros(k + 1, dtype=np.int64)
    cdef int64_t[::1] minv = np.empty(k + 1, dtype=np.int64)
    cdef char[::1] used = np.zeros(k + 1, dtype=np.int8)
    cdef Py_ssize_t i, j, j0, j1, i0
    cdef int64_t delta, cur, row

    for i in range(1, k + 1):
        p[0] = i
        j0 = 0
        for j in range(k + 1):
            minv[j] = _INF
            used[j] = 0
        while True:
            used[j0] = 1
            i0 = p[j0]
            delta = _INF
            j1 = 0
            row = (i0 - 1) * k
            for j in range(1, k + 1):
                if used[j]:
                    continue
                cur = cost[row + j - 1] - u[i0] - v[j]
                if cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if minv[j] < delta:
                    delta = minv[j]
                    j1 = j
            for j in range(k + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    for j in range(k):
        row_of_col[j] = p[j + 1] - 1
    for i in range(k):
        u_out[i] = u[i + 1]
        v_out[i] = v[i + 1]


def solve_assignment(cost_in, k):
    """Exposed for cross-backend tests; see _pure.solve_assignment."""
    cdef Py_ssize_t kk = k
    cdef int64_t[::1] cost = np.asarray(cost_in, dtype=np.int64)
    cdef int64_t[::1] row_of_col = np.empty(kk, dtype=np.int64)
    cdef int64_t[::1] u = np.empty(kk, dtype=np.int64)
    cdef int64_t[::1] v = np.empty(kk, dtype=np.int64)
    _solve_assignment(cost, kk, row_of_col, u, v)
    cdef int64_t total = 0
    cdef Py_ssize_t j
    for j in range(kk):
        total += cost[row_of_col[j] * kk + j]
    return (
        [row_of_col[j] for j in range(kk)],
        [u[j] for j in range(kk)],
        [v[j] for j in range(kk)],
        total,
    )


cdef bint _augment(int64_t[::1] cost, int64_t[::1] u, int64_t[::1] v,
                   int64_t[::1] row_of_col, int64_t[::1] col_of_row,
                   char[::1] forced_row, char[::1] forced_col,
                   Py_ssize_t r, char[::1] visited, Py_ssize_t k):
    cdef Py_ssize_t c, owner
    cdef int64_t base = r * k
    for c in range(k):
        if visited[c] or forced_col[c]:
            continue
        if cost[base + c] - u[r] - v[c] != 0:
            continue
        visited[c] = 1
        owner = row_of_col[c]
        if owner == -1 or (not forced_row[owner] and _augment(
                cost, u, v, row_of_col, col_of_row, forced_row, forced_col,
                owner, visited, k)):
            row_of_col[c] = r
            col_of_row[r] = c
            return True
    return False


cdef bint _repair(int64_t[::1] cost, int64_t[::1] u, int64_t[::1] v,
                  int64_t[::1] row_of_col, int64_t[::1] col_of_row,
                  char[::1] forced_row, char[::1] forced_col,
                  Py_ssize_t i, Py_ssize_t j, Py_ssize_t k):
    cdef Py_ssize_t r0 = row_of_col[j]
    cdef Py_ssize_t c0 = col_of_row[i]
    cdef char[::1] visited = np.zeros(k, dtype=np.int8)
    row_of_col[j] = i
    col_of_row[i] = j
    row_of_col[c0] = -1
    visited[j] = 1
    if _augment(cost, u, v, row_of_col, col_of_row, forced_row, forced_col,
                r0, visited, k):
        return True
    row_of_col[j] = r0
    col_of_row[r0] = j
    row_of_col[c0] = i
    col_of_row[i] = c0
    return False


def matching_links(q_in, n, m):
    """See _pure.matching_links."""
    cdef Py_ssize_t nn = n, mm = m
    cdef Py_ssize_t k = nn if nn > mm else mm
    cdef int64_t[::1] q = np.asarray(q_in, dtype=np.int64)
    cdef int64_t qmax = 0
    cdef Py_ssize_t i, j
    for i in range(nn * mm):
        if q[i] > qmax:
            qmax = q[i]
    if qmax == 0:
        return []
    cdef int64_t[::1] cost = np.empty(k * k, dtype=np.int64)
    cdef int64_t w
    for i in range(k):
        for j in range(k):
            w = q[i * mm + j] if (i < nn and j < mm) else 0
            cost[i * k + j] = qmax - w
    cdef int64_t[::1] row_of_col = np.empty(k, dtype=np.int64)
    cdef int64_t[::1] u = np.empty(k, dtype=np.int64)
    cdef int64_t[::1] v = np.empty(k, dtype=np.int64)
    _solve_assignment(cost, k, row_of_col, u, v)
    cdef int64_t[::1] col_of_row = np.empty(k, dtype=np.int64)
    for j in range(k):
        col_of_row[row_of_col[j]] = j
    cdef char[::1] forced_row = np.zeros(k, dtype=np.int8)
    cdef char[::1] forced_col = np.zeros(k, dtype=np.int8)
    links = []
    cdef bint committed
    for i in range(nn):
        for j in range(mm):
            if q[i * mm + j] <= 0:
                continue
            if forced_row[i] or forced_col[j]:
                continue
            committed = False
            if col_of_row[i] == j:
                committed = True
            elif cost[i * k + j] - u[i] - v[j] == 0:
                committed = _repair(cost, u, v, row_of_col, col_of_row,
                                    forced_row, forced_col, i, j, k)
            if committed:
                links.append((i, j))
                forced_row[i] = 1
                forced_col[j] = 1
    return links


def extract_spans(int64_t[::1] link_i, int64_t[::1] link_j, long n, long m,
                  long max_len):
    """See _pure.extract_spans."""
    cdef Py_ssize_t n_links = link_i.shape[0]
    cdef int64_t[::1] row_start = np.zeros(n + 1, dtype=np.int64)
    cdef int64_t[::1] col_start = np.zeros(m + 1, dtype=np.int64)
    cdef int64_t[::1] row_j = np.empty(n_links, dtype=np.int64)
    cdef int64_t[::1] col_i = np.empty(n_links, dtype=np.int64)
    cdef char[::1] col_aligned = np.zeros(m, dtype=np.int8)
    cdef Py_ssize_t idx, i, j

    # counting sort of links into per-row and per-column adjacency
    for idx in range(n_links):
        row_start[link_i[idx] + 1] += 1
        col_start[link_j[idx] + 1] += 1
        col_aligned[link_j[idx]] = 1
    for i in range(n):
        row_start[i + 1] += row_start[i]
    for j in range(m):
        col_start[j + 1] += col_start[j]
    cdef int64_t[::1] row_fill = np.asarray(row_start[:n]).copy()
    cdef int64_t[::1] col_fill = np.asarray(col_start[:m]).copy()
    for idx in range(n_links):
        i = link_i[idx]
        j = link_j[idx]
        row_j[row_fill[i]] = j
        row_fill[i] += 1
        col_i[col_fill[j]] = i
        col_fill[j] += 1

    out = []
    cdef Py_ssize_t i1, i2, i2_max, t, l1, l2
    cdef int64_t k1, k2
    cdef bint ok
    for i1 in range(n):
        k1 = m
        k2 = -1
        i2_max = i1 + max_len
        if i2_max > n:
            i2_max = n
        for i2 in range(i1, i2_max):
            for t in range(row_start[i2], row_start[i2 + 1]):
                j = row_j[t]
                if j < k1:
                    k1 = j
                if j > k2:
                    k2 = j
            if k2 < 0:
                continue
            if k2 - k1 + 1 > max_len:
                break
            ok = True
            for j in range(k1, k2 + 1):
                for t in range(col_start[j], col_start[j + 1]):
                    i = col_i[t]
                    if i < i1 or i > i2:
                        ok = False
                        break
                if not ok:
                    break
            if not ok:
                continue
            l1 = k1
            while l1 >= 0:
                if l1 < k1 and col_aligned[l1]:
                    break
                if k2 - l1 + 1 <= max_len:
                    l2 = k2
                    while l2 < m:
                        if l2 > k2 and col_aligned[l2]:
                            break
                        if l2 - l1 + 1 > max_len:
                            break
                        out.append((i1, i2, l1, l2))
                        l2 += 1
                l1 -= 1
    return out

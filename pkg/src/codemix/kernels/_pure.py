"""Pure-Python kernel backend.

Mirrors _core.pyx operation for operation. Both backends accumulate in the
same order with double precision, so their outputs are bit-identical; tests
rely on that to compare backends with plain equality.
"""

from __future__ import annotations

NAME = "pure"

_INF = 1 << 62


def ibm1_run(pids, offsets, ns_arr, nt_arr, pair_src, n_src, n_pairs, iterations):
    """EM over int-encoded cooccurrence pairs.

    pids: flat pid matrix per sentence, pid[off + j*ns + i].
    pair_src: source type id per pid. Returns per-pid probabilities
    normalized over each source type.
    """
    pids = list(pids)
    offsets = list(offsets)
    ns_arr = list(ns_arr)
    nt_arr = list(nt_arr)
    pair_src = list(pair_src)
    n_sents = len(ns_arr)

    fanout = [0] * n_src
    for s in pair_src:
        fanout[s] += 1
    prob = [0.0] * n_pairs
    for pid in range(n_pairs):
        prob[pid] = 1.0 / fanout[pair_src[pid]]

    for _ in range(iterations):
        counts = [0.0] * n_pairs
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
        totals = [0.0] * n_src
        for pid in range(n_pairs):
            totals[pair_src[pid]] += counts[pid]
        for pid in range(n_pairs):
            prob[pid] = counts[pid] / totals[pair_src[pid]]
    return prob


def solve_assignment(cost, k):
    """Min-cost perfect assignment on a k x k matrix (flat, row-major).

    Returns (row_of_col, u, v, total): row_of_col[j] is the row assigned to
    column j, u/v the dual potentials (cost - u - v >= 0 everywhere, == 0 on
    assigned cells), total the optimal cost. Scan order is fixed so ties
    resolve deterministically.
    """
    cost = list(cost)
    u = [0] * (k + 1)
    v = [0] * (k + 1)
    p = [0] * (k + 1)  # p[j]: row (1-based) assigned to column j; p[0] is scratch
    way = [0] * (k + 1)
    for i in range(1, k + 1):
        p[0] = i
        j0 = 0
        minv = [_INF] * (k + 1)
        used = [False] * (k + 1)
        while True:
            used[j0] = True
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
    row_of_col = [p[j] - 1 for j in range(1, k + 1)]
    total = 0
    for j in range(k):
        total += cost[row_of_col[j] * k + j]
    u_out = [u[i] for i in range(1, k + 1)]
    v_out = [v[j] for j in range(1, k + 1)]
    return row_of_col, u_out, v_out, total


def matching_links(q, n, m):
    """Max-weight bipartite matching of an n x m integer weight matrix (flat,
    row-major), ties broken toward the lexicographically smallest link set.

    Zero-weight cells never produce links. Every optimal matching lives in the
    equality graph of the dual solution (cells with zero reduced cost), and
    every perfect matching inside that graph is optimal; so after one exact
    solve, each candidate link is committed greedily in (i, j) order if the
    current matching can be repaired around it with an augmenting path through
    tight cells only.
    """
    k = n if n > m else m
    qmax = 0
    for w in q:
        if w > qmax:
            qmax = w
    if qmax == 0:
        return []
    cost = [0] * (k * k)
    for i in range(k):
        qrow = i * m
        crow = i * k
        for j in range(k):
            w = q[qrow + j] if (i < n and j < m) else 0
            cost[crow + j] = qmax - w
    row_of_col, u, v, _ = solve_assignment(cost, k)
    col_of_row = [0] * k
    for j in range(k):
        col_of_row[row_of_col[j]] = j

    forced_row = [False] * k
    forced_col = [False] * k
    links = []
    for i in range(n):
        for j in range(m):
            if q[i * m + j] <= 0:
                continue
            if forced_row[i] or forced_col[j]:
                continue
            committed = False
            if col_of_row[i] == j:
                committed = True
            elif cost[i * k + j] - u[i] - v[j] == 0:
                committed = _repair(
                    cost, u, v, row_of_col, col_of_row, forced_row, forced_col, i, j, k
                )
            if committed:
                links.append((i, j))
                forced_row[i] = True
                forced_col[j] = True
    return links


def _repair(cost, u, v, row_of_col, col_of_row, forced_row, forced_col, i, j, k):
    """Try to rebuild a perfect matching in the tight graph with (i, j) fixed."""
    r0 = row_of_col[j]
    c0 = col_of_row[i]
    row_of_col[j] = i
    col_of_row[i] = j
    row_of_col[c0] = -1
    visited = [False] * k
    visited[j] = True
    if _augment(cost, u, v, row_of_col, col_of_row, forced_row, forced_col, r0, visited, k):
        return True
    row_of_col[j] = r0
    col_of_row[r0] = j
    row_of_col[c0] = i
    col_of_row[i] = c0
    return False


def _augment(cost, u, v, row_of_col, col_of_row, forced_row, forced_col, r, visited, k):
    base = r * k
    for c in range(k):
        if visited[c] or forced_col[c]:
            continue
        if cost[base + c] - u[r] - v[c] != 0:
            continue
        visited[c] = True
        owner = row_of_col[c]
        if owner == -1 or (
            not forced_row[owner]
            and _augment(cost, u, v, row_of_col, col_of_row, forced_row, forced_col, owner, visited, k)
        ):
            row_of_col[c] = r
            col_of_row[r] = c
            return True
    return False


def extract_spans(link_i, link_j, n, m, max_len):
    """All consistent phrase spans (i1, i2, j1, j2), each side <= max_len.

    A span pair is consistent when no link leaves it: links out of rows
    i1..i2 land in columns j1..j2 and vice versa, with at least one link
    inside. Target spans extend over flanking unaligned columns.
    """
    row_links = [[] for _ in range(n)]
    col_links = [[] for _ in range(m)]
    for i, j in zip(link_i, link_j):
        row_links[i].append(j)
        col_links[j].append(i)
    col_aligned = [bool(c) for c in col_links]

    out = []
    for i1 in range(n):
        k1 = m
        k2 = -1
        i2_max = min(i1 + max_len, n)
        for i2 in range(i1, i2_max):
            for j in row_links[i2]:
                if j < k1:
                    k1 = j
                if j > k2:
                    k2 = j
            if k2 < 0:
                continue
            if k2 - k1 + 1 > max_len:
                break  # target projection only grows with i2
            ok = True
            for j in range(k1, k2 + 1):
                for i in col_links[j]:
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

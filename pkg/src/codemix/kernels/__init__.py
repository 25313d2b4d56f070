"""Hot numeric kernels with a compiled core and a pure-Python fallback.

The compiled extension is preferred when importable; CODEMIX_PURE_PYTHON=1
forces the fallback. Both implementations perform identical arithmetic in
identical order, so results are bit-equal across backends.
"""

from __future__ import annotations

import os
from typing import Optional, Sequence

from . import _pure

if os.environ.get("CODEMIX_PURE_PYTHON") == "1":
    _active = _pure
else:
    try:
        from . import _core as _active  # type: ignore[no-redef]
    except ImportError:
        _active = _pure

BACKEND: str = _active.NAME

# Probabilities are quantized to integers for exact tie handling in the
# matching solver; differences below ~1e-12 collapse into ties.
PROB_SCALE = 1 << 40

# Above this size the exact assignment solver gives way to greedy linking.
EXACT_MATCHING_LIMIT = 64


def available_backends() -> dict[str, object]:
    out: dict[str, object] = {"pure": _pure}
    try:
        from . import _core

        out["compiled"] = _core
    except ImportError:
        pass
    return out


def _to_backend_arrays(backend, *int_lists):
    if backend.NAME == "pure":
        return int_lists
    import numpy as np

    return tuple(np.asarray(xs, dtype=np.int64) for xs in int_lists)


def ibm1_probs(
    sentences: Sequence[tuple[Sequence[int], Sequence[int]]],
    iterations: int,
    backend=None,
) -> dict[tuple[int, int], float]:
    """Train word-translation probabilities p(target | source) by EM.

    sentences holds int-encoded (source tokens, target tokens) pairs. Only
    cooccurring (source, target) type pairs get probability mass; the result
    maps those pairs to probabilities, normalized per source type.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    backend = backend or _active
    pair_ids: dict[tuple[int, int], int] = {}
    pair_src: list[int] = []
    pids: list[int] = []
    offsets: list[int] = []
    ns_arr: list[int] = []
    nt_arr: list[int] = []
    n_src = 0
    for src, tgt in sentences:
        if not src or not tgt:
            continue
        offsets.append(len(pids))
        ns_arr.append(len(src))
        nt_arr.append(len(tgt))
        for t in tgt:
            for s in src:
                key = (s, t)
                pid = pair_ids.get(key)
                if pid is None:
                    pid = len(pair_src)
                    pair_ids[key] = pid
                    pair_src.append(s)
                pids.append(pid)
        for s in src:
            if s + 1 > n_src:
                n_src = s + 1
    if not pair_ids:
        return {}
    args = _to_backend_arrays(backend, pids, offsets, ns_arr, nt_arr, pair_src)
    probs = backend.ibm1_run(*args, n_src, len(pair_src), iterations)
    return {key: probs[pid] for key, pid in pair_ids.items()}


def quantize(p: float) -> int:
    if p <= 0.0:
        return 0
    return int(round(p * PROB_SCALE))


def max_weight_matching(
    weights: Sequence[Sequence[float]],
    backend=None,
) -> tuple[frozenset[tuple[int, int]], str]:
    """Best one-to-one link set for an n x m probability matrix.

    Exact Hungarian solution with lexicographic tie-breaking up to
    EXACT_MATCHING_LIMIT tokens per side, greedy competitive linking beyond.
    Zero-probability cells never link. Returns (links, solver name).
    """
    backend = backend or _active
    n = len(weights)
    m = len(weights[0]) if n else 0
    if n == 0 or m == 0:
        return frozenset(), "exact"
    q = [quantize(weights[i][j]) for i in range(n) for j in range(m)]
    if max(n, m) <= EXACT_MATCHING_LIMIT:
        links = backend.matching_links(q, n, m)
        return frozenset((int(i), int(j)) for i, j in links), "exact"
    order = sorted(
        ((i, j) for i in range(n) for j in range(m) if q[i * m + j] > 0),
        key=lambda ij: (-q[ij[0] * m + ij[1]], ij[0], ij[1]),
    )
    links = set()
    used_i: set[int] = set()
    used_j: set[int] = set()
    for i, j in order:
        if i in used_i or j in used_j:
            continue
        links.add((i, j))
        used_i.add(i)
        used_j.add(j)
    return frozenset(links), "greedy"


def extract_spans(
    links: Sequence[tuple[int, int]],
    n: int,
    m: int,
    max_len: int,
    backend=None,
) -> list[tuple[int, int, int, int]]:
    """Consistent phrase span pairs (i1, i2, j1, j2), sorted, sides <= max_len."""
    backend = backend or _active
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    ordered = sorted(links)
    link_i = [i for i, _ in ordered]
    link_j = [j for _, j in ordered]
    if backend.NAME != "pure":
        import numpy as np

        link_i = np.asarray(link_i, dtype=np.int64)
        link_j = np.asarray(link_j, dtype=np.int64)
    spans = backend.extract_spans(link_i, link_j, n, m, max_len)
    return sorted((int(a), int(b), int(c), int(d)) for a, b, c, d in spans)

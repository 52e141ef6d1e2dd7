"""Cache-blocked pairwise kernel summation with deterministic reduction.

Computes sums of the form

    S = sum_{i < j} w_i w_j |v_i - v_j|^p / |x_i - x_j|^q

over a weighted point cloud, excluding the diagonal.  The double loop is
tiled into blocks; per-block partial sums are accumulated in a fixed
order and combined by a pairwise tree reduction, so the result is
bit-stable for any worker count.  Blocks whose values are two identical
constants are skipped exactly (their contribution is zero).

An optional integer group id per point supports composite quadratures:
pairs within the same nonnegative group are excluded (they are accounted
for separately, e.g. by an exact rescaling identity).  Group id -1 means
"no group"; such self-pairs are kept.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np
from numpy.typing import NDArray

DEFAULT_BLOCK = 1024


def fast_pow(x: NDArray, e: float) -> NDArray:
    """x**e for x >= 0, using sqrt chains when 4e is a small integer.

    Quarter-integer exponents cover every kernel used here (m + sp and p
    are quarter-integers in all shipped configurations); other exponents
    fall back to np.power.
    """
    if e == 1.0:
        return x.copy()
    if e == 2.0:
        return x * x
    a4 = 4.0 * e
    if a4 == round(a4) and 0 < a4 <= 16:
        a = int(round(a4))
        out = None
        if a % 2:  # needs the quarter root
            sq = np.sqrt(x)
            out = np.sqrt(sq)
            if a % 4 >= 2:
                out = out * sq
        elif a % 4 >= 2:  # needs the half root only
            out = np.sqrt(x)
        whole = a // 4
        if whole:
            acc = x
            for _ in range(whole - 1):
                acc = acc * x
            out = acc if out is None else out * acc
        return out
    return np.power(x, e)


def tree_reduce(values) -> float:
    """Sum a list of floats by fixed pairwise tree; order independent of workers."""
    vals = list(values)
    if not vals:
        return 0.0
    while len(vals) > 1:
        nxt = []
        for i in range(0, len(vals) - 1, 2):
            nxt.append(vals[i] + vals[i + 1])
        if len(vals) % 2:
            nxt.append(vals[-1])
        vals = nxt
    return float(vals[0])


def _block_meta(values: NDArray, starts: NDArray, stops: NDArray):
    """Per block: (is_constant, constant_row) for the exact skip."""
    const = []
    for a, b in zip(starts, stops):
        chunk = values[a:b]
        row = chunk[0]
        if np.array_equal(chunk, np.broadcast_to(row, chunk.shape)):
            const.append(row.copy())
        else:
            const.append(None)
    return const


_TRI_CACHE: dict[int, NDArray] = {}


def _strict_upper(n: int) -> NDArray:
    got = _TRI_CACHE.get(n)
    if got is None:
        got = np.triu(np.ones((n, n)), k=1)
        got.setflags(write=False)
        _TRI_CACHE[n] = got
    return got


def _outer_sq_dist(ax: NDArray, ay: NDArray) -> NDArray:
    """Squared distances via per-coordinate outer differences (no cancellation)."""
    d = np.subtract.outer(ax[:, 0], ay[:, 0])
    d *= d
    for k in range(1, ax.shape[1]):
        t = np.subtract.outer(ax[:, k], ay[:, k])
        t *= t
        d += t
    return d


def _pair_block(
    px: NDArray,
    vx: NDArray,
    wx: NDArray,
    gx: NDArray | None,
    py: NDArray,
    vy: NDArray,
    wy: NDArray,
    gy: NDArray | None,
    p: float,
    q: float,
    triangular: bool,
) -> float:
    dr2 = _outer_sq_dist(px, py)
    dv2 = _outer_sq_dist(vx, vy)
    wmat = np.multiply.outer(wx, wy)
    if triangular:
        wmat *= _strict_upper(wmat.shape[0])
    if gx is not None:
        wmat[(gx[:, None] == gy[None, :]) & (gx[:, None] >= 0)] = 0.0
    coincident = dr2 <= 0.0
    if coincident.any():
        wmat[coincident] = 0.0
        dr2[coincident] = 1.0
    out = fast_pow(dv2, 0.5 * p)
    out *= wmat
    out /= fast_pow(dr2, 0.5 * q)
    return float(out.sum())


def pair_kernel_sum(
    points: NDArray,
    values: NDArray,
    p: float,
    q: float,
    weights: NDArray | float = 1.0,
    groups: NDArray | None = None,
    block: int = DEFAULT_BLOCK,
    workers: int = 1,
) -> float:
    """Off-diagonal weighted kernel sum over unordered pairs (counted once).

    Parameters
    ----------
    points : (N, m) coordinates
    values : (N, nu) map values
    p : numerator exponent applied to |v_i - v_j|
    q : kernel exponent applied to |x_i - x_j|
    weights : scalar or (N,) quadrature weights
    groups : optional (N,) int ids; pairs sharing a nonnegative id are skipped
    block : tile edge length
    workers : thread count; results are identical for any value
    """
    pts = np.ascontiguousarray(points, dtype=float)
    vals = np.ascontiguousarray(values, dtype=float)
    if vals.ndim == 1:
        vals = vals[:, None]
    n = pts.shape[0]
    if n < 2:
        return 0.0
    if np.isscalar(weights):
        w = np.full(n, float(weights))
    else:
        w = np.ascontiguousarray(weights, dtype=float)
    g = None if groups is None else np.ascontiguousarray(groups, dtype=np.int64)

    starts = np.arange(0, n, block)
    stops = np.minimum(starts + block, n)
    nb = len(starts)
    const = _block_meta(vals, starts, stops)

    tasks = []
    for bi in range(nb):
        for bj in range(bi, nb):
            if const[bi] is not None and const[bj] is not None and np.array_equal(const[bi], const[bj]):
                # identical constants: every |v_i - v_j| vanishes exactly
                continue
            tasks.append((bi, bj))

    def run(task):
        bi, bj = task
        a0, a1 = starts[bi], stops[bi]
        b0, b1 = starts[bj], stops[bj]
        return _pair_block(
            pts[a0:a1], vals[a0:a1], w[a0:a1], None if g is None else g[a0:a1],
            pts[b0:b1], vals[b0:b1], w[b0:b1], None if g is None else g[b0:b1],
            p, q, triangular=(bi == bj),
        )

    if workers > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            partials = list(pool.map(run, tasks))
    else:
        partials = [run(t) for t in tasks]
    return tree_reduce(partials)

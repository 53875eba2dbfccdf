"""Multi-resolution search over products of probability simplices.

A search point is a tuple of probability vectors ("rows"), each living on
its own simplex: e.g. the rows of a kernel, or a marginal together with a
kernel. The coarse level enumerates every point whose coordinates are
multiples of ``1/resolution``; each refinement level re-grids a
neighbourhood of the best points with a step ``refine_factor`` times finer.

Evaluation is chunked with a chunk size that does not depend on the number
of workers, and the reductions run in cell order, so results are identical
for any worker count.
"""
from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .instance import ResourceLimitError, SolverGrid

LOCAL_CAP = 20_000  # cells per refinement neighbourhood


def compositions(total: int, parts: int) -> np.ndarray:
    """All nonnegative integer vectors of length ``parts`` summing to ``total``.

    Ordered lexicographically by the stars-and-bars bar positions.
    """
    if parts == 1:
        return np.full((1, 1), total, dtype=np.int64)
    bars = np.array(list(itertools.combinations(range(total + parts - 1), parts - 1)), dtype=np.int64)
    edges = np.concatenate([np.full((len(bars), 1), -1), bars, np.full((len(bars), 1), total + parts - 1)], axis=1)
    return np.diff(edges, axis=1) - 1


def simplex_points(k: int, res: int) -> np.ndarray:
    """All points of the ``k``-simplex with coordinates in ``{0, 1/res, ..., 1}``."""
    if k == 1:
        return np.ones((1, 1))
    return compositions(res, k) / res


def simplex_count(k: int, res: int) -> int:
    return math.comb(res + k - 1, k - 1)


def local_points(center: np.ndarray, step: float, radius: int) -> np.ndarray:
    """Points ``center + step * z`` with integer ``z`` summing to zero, ``|z_i| <= radius`` on the free coordinates."""
    k = center.size
    if k == 1 or radius == 0:
        return center[None, :].copy()
    offs = np.array(list(itertools.product(range(-radius, radius + 1), repeat=k - 1)), dtype=float)
    z = np.concatenate([offs, -offs.sum(axis=1, keepdims=True)], axis=1)
    pts = center[None, :] + step * z
    keep = (pts >= -1e-12).all(axis=1) & (pts <= 1 + 1e-12).all(axis=1)
    pts = np.clip(pts[keep], 0.0, 1.0)
    return pts / pts.sum(axis=1, keepdims=True)


def _local_radius(dims: Sequence[int], factor: int) -> int:
    free = sum(k - 1 for k in dims)
    if free == 0:
        return 0
    r = factor
    while r > 0 and (2 * r + 1) ** free > LOCAL_CAP:
        r -= 1
    return r


Evaluator = Callable[[list[np.ndarray]], dict[str, np.ndarray]]


@dataclass
class SearchResult:
    value: float
    point: tuple[np.ndarray, ...]
    extras: dict
    step: float
    evaluated: int
    levels: list[float] = field(default_factory=list)  # best value after each level


def _product_rows(blocks: Sequence[np.ndarray], idx: np.ndarray) -> list[np.ndarray]:
    sub = np.unravel_index(idx, [len(b) for b in blocks])
    return [b[s] for b, s in zip(blocks, sub)]


def evaluate_product(blocks: Sequence[np.ndarray], evaluate: Evaluator, grid: SolverGrid) -> dict[str, np.ndarray]:
    """Evaluate every cell of the cartesian product of ``blocks`` in index order."""
    total = int(np.prod([len(b) for b in blocks]))
    if total > grid.max_cells:
        raise ResourceLimitError(f"grid has {total} cells, limit is {grid.max_cells}")
    starts = range(0, total, grid.chunk)

    def run(s):
        return evaluate(_product_rows(blocks, np.arange(s, min(s + grid.chunk, total))))

    if grid.workers > 1:
        with ThreadPoolExecutor(grid.workers) as ex:
            parts = list(ex.map(run, starts))
    else:
        parts = [run(s) for s in starts]
    return {key: np.concatenate([p[key] for p in parts]) for key in parts[0]}


def _top(values: np.ndarray, k: int) -> np.ndarray:
    order = np.argsort(values, kind="stable")
    order = order[np.isfinite(values[order])]
    return order[:k]


def multires_search(dims: Sequence[int], evaluate: Evaluator, grid: SolverGrid,
                    coarse: Sequence[np.ndarray] | None = None) -> SearchResult:
    """Minimize ``evaluate(...)["value"]`` over the product of simplices of sizes ``dims``.

    Infeasible cells must evaluate to ``inf``. ``coarse`` overrides the
    coarse per-block point sets.
    """
    blocks = list(coarse) if coarse is not None else [simplex_points(k, grid.resolution) for k in dims]
    out = evaluate_product(blocks, evaluate, grid)
    vals = out["value"]
    evaluated = vals.size
    top = _top(vals, grid.top_k)
    if top.size == 0:
        raise ValueError("no feasible cell on the coarse grid")
    centers = [tuple(r[0] for r in _product_rows(blocks, np.array([i]))) for i in top]
    best_i = top[0]
    best = (float(vals[best_i]), centers[0], {k: v[best_i] for k, v in out.items()})
    levels = [best[0]]
    step = grid.coarse_step
    radius = _local_radius(dims, grid.refine_factor)
    for _ in range(grid.refine_depth):
        step /= grid.refine_factor
        cand_vals, cand_pts, cand_extra = [], [], []
        for c in centers:
            c_val = math.inf
            # Re-center the window while its best point keeps improving
            # (the optimum may sit outside the first window).
            for _ in range(grid.max_moves + 1):
                local = [local_points(row, step, radius) for row in c]
                res = evaluate_product(local, evaluate, grid)
                evaluated += res["value"].size
                for i in _top(res["value"], grid.top_k):
                    cand_vals.append(float(res["value"][i]))
                    cand_pts.append(tuple(r[0] for r in _product_rows(local, np.array([i]))))
                    cand_extra.append({k: v[i] for k, v in res.items()})
                i0 = _top(res["value"], 1)
                if i0.size == 0 or res["value"][i0[0]] >= c_val:
                    break
                c_val = float(res["value"][i0[0]])
                c = tuple(r[0] for r in _product_rows(local, i0))
        order = _top(np.array(cand_vals), grid.top_k)
        centers = [cand_pts[i] for i in order]
        if order.size and cand_vals[order[0]] < best[0]:
            best = (cand_vals[order[0]], cand_pts[order[0]], cand_extra[order[0]])
        levels.append(best[0])
    return SearchResult(best[0], best[1], best[2], step, evaluated, levels)

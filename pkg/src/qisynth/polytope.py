"""Small-polytope utilities for the per-step disturbance set ``{w : Aw w <= bw}``."""
from __future__ import annotations

import itertools

import numpy as np
from scipy.optimize import linprog


class UnboundedPolytopeError(ValueError):
    pass


class EmptyPolytopeError(ValueError):
    pass


def bounding_box(Aw, bw) -> tuple[np.ndarray, np.ndarray]:
    """Axis-aligned bounds of the polytope via 2n LPs.

    Raises if the polytope is empty or unbounded.
    """
    Aw = np.asarray(Aw, dtype=float)
    bw = np.asarray(bw, dtype=float)
    n = Aw.shape[1]
    lo = np.empty(n)
    hi = np.empty(n)
    for i in range(n):
        for sign, out in ((1.0, lo), (-1.0, hi)):
            c = np.zeros(n)
            c[i] = sign
            res = linprog(c, A_ub=Aw, b_ub=bw, bounds=[(None, None)] * n, method="highs")
            if res.status == 2:
                raise EmptyPolytopeError("disturbance polytope is empty")
            if res.status == 3:
                raise UnboundedPolytopeError("disturbance polytope is unbounded")
            if res.status != 0:
                raise RuntimeError(f"LP failed while bounding polytope: {res.message}")
            out[i] = sign * res.fun
    return lo, hi


def vertices(Aw, bw, tol: float = 1e-9) -> np.ndarray:
    """Enumerate the vertices of a bounded polytope in ``R^n``.

    Every choice of ``n`` constraint rows is solved as an equality system and
    kept if feasible. Exponential in ``n`` but exact and robust to degenerate
    (e.g. single-point) polytopes, which is what matters for the small
    disturbance sets used here.
    """
    Aw = np.asarray(Aw, dtype=float)
    bw = np.asarray(bw, dtype=float)
    q, n = Aw.shape
    found: list[np.ndarray] = []
    scale = max(1.0, float(np.max(np.abs(bw))) if bw.size else 1.0)
    for rows in itertools.combinations(range(q), n):
        sub = Aw[list(rows)]
        if abs(np.linalg.det(sub)) < 1e-12 * max(1.0, np.linalg.norm(sub) ** n):
            continue
        w = np.linalg.solve(sub, bw[list(rows)])
        if np.all(Aw @ w <= bw + tol * scale):
            if not any(np.allclose(w, f, atol=tol * scale, rtol=0) for f in found):
                found.append(w)
    if not found:
        # unbounded or empty; surface the precise reason
        bounding_box(Aw, bw)
        raise EmptyPolytopeError("polytope has no vertices")
    out = np.array(found)
    # deterministic order regardless of row order
    order = np.lexsort(out.T[::-1])
    return out[order]


def sample_uniform(Aw, bw, count: int, rng: np.random.Generator,
                   max_tries: int = 200) -> np.ndarray:
    """Uniform samples by rejection from the bounding box, with hit-and-run fallback."""
    Aw = np.asarray(Aw, dtype=float)
    bw = np.asarray(bw, dtype=float)
    lo, hi = bounding_box(Aw, bw)
    n = Aw.shape[1]
    width = hi - lo
    if np.any(width <= 1e-12):
        # lower-dimensional polytope: rejection has zero acceptance
        return _hit_and_run(Aw, bw, count, rng, lo, hi)
    samples = []
    for _ in range(max_tries):
        cand = lo + width * rng.random((max(count, 16) * 4, n))
        ok = np.all(cand @ Aw.T <= bw, axis=1)
        samples.extend(cand[ok])
        if len(samples) >= count:
            return np.array(samples[:count])
    return _hit_and_run(Aw, bw, count, rng, lo, hi)


def _hit_and_run(Aw, bw, count, rng, lo, hi, burn: int = 50, thin: int = 5) -> np.ndarray:
    n = Aw.shape[1]
    x = vertices(Aw, bw).mean(axis=0)
    out = []
    step = 0
    while len(out) < count:
        d = rng.standard_normal(n)
        d /= np.linalg.norm(d)
        ad = Aw @ d
        slack = np.maximum(bw - Aw @ x, 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratios = slack / ad
        tmax = np.min(ratios[ad > 1e-14], initial=np.inf)
        tmin = np.max(ratios[ad < -1e-14], initial=-np.inf)
        if np.isfinite(tmax) and np.isfinite(tmin) and tmax > tmin:
            x = x + rng.uniform(tmin, tmax) * d
        step += 1
        if step > burn and step % thin == 0:
            out.append(x.copy())
    return np.array(out)

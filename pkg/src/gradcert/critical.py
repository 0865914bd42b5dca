"""Locating zeros of vector fields and classifying critical points.

Zeros are found by damped-free Newton iteration started from every grid
point, using the exact symbolic Jacobian.  Critical points are Morse
(nondegenerate Hessian, index = number of negative eigenvalues),
embryonic (1-dimensional Hessian kernel with nonvanishing third
derivative along it) or degenerate.  Zero sets that are visibly not
isolated (e.g. a whole zero section) are reported as a degenerate
manifold rather than classified pointwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .backend import compiled
from .expr import Const, Expr, diff, simplify
from .fields import Chart, ScalarField, VectorField, gradient
from .params import Tolerances, DEFAULT_TOL

KIND_MORSE = "morse"
KIND_EMBRYONIC = "embryonic"
KIND_DEGENERATE = "degenerate"
KIND_DEGENERATE_MANIFOLD = "degenerate_manifold"


class NotCritical(Exception):
    """classify() was asked about a point where the gradient does not
    vanish."""


@dataclass(frozen=True)
class CriticalPoint:
    location: tuple[float, ...]
    kind: str
    hessian_eigenvalues: tuple[float, ...]
    index: int | None = None
    kernel_direction: tuple[float, ...] | None = None
    third_derivative: float | None = None

    def is_morse(self) -> bool:
        return self.kind == KIND_MORSE


def _jacobian_exprs(F: VectorField) -> list[list[Expr]]:
    m = F.chart.dim
    return [[simplify(diff(F.components[i], j)) for j in range(m)]
            for i in range(m)]


def jacobian_values(F: VectorField, pts) -> np.ndarray:
    """(N, m, m) exact Jacobian of F at each point."""
    m = F.chart.dim
    cache = getattr(F, "_jac_c", None)
    if cache is None:
        exprs = _jacobian_exprs(F)
        cache = [[compiled(e, m) for e in row] for row in exprs]
        F._jac_c = cache
    pts = np.ascontiguousarray(pts, dtype=np.float64)
    out = np.empty((pts.shape[0], m, m))
    for i in range(m):
        for j in range(m):
            out[:, i, j] = cache[i][j].eval_many(pts, nan_on_error=True)
    return out


def hessian_exprs(phi: ScalarField) -> list[list[Expr]]:
    m = phi.chart.dim
    firsts = [simplify(diff(phi.expr, j)) for j in range(m)]
    return [[simplify(diff(firsts[i], j)) for j in range(m)] for i in range(m)]


def hessian_values(phi: ScalarField, pts) -> np.ndarray:
    """(N, m, m) symmetrized Hessian of phi at each point."""
    m = phi.chart.dim
    cache = getattr(phi, "_hess_c", None)
    if cache is None:
        cache = [[compiled(e, m) for e in row] for row in hessian_exprs(phi)]
        phi._hess_c = cache
    pts = np.ascontiguousarray(pts, dtype=np.float64)
    H = np.empty((pts.shape[0], m, m))
    for i in range(m):
        for j in range(m):
            H[:, i, j] = cache[i][j].eval_many(pts, nan_on_error=True)
    return 0.5 * (H + np.transpose(H, (0, 2, 1)))


def hessian_at(phi: ScalarField, p) -> np.ndarray:
    return hessian_values(phi, np.asarray(p, dtype=float)[None, :])[0]


def find_zeros(F: VectorField, chart: Chart | None = None,
               tol: Tolerances = DEFAULT_TOL) -> list[np.ndarray]:
    """Multi-start Newton on F from every grid point.

    Converged points (|F| < newton_tol within newton_max_iter steps) are
    deduplicated at dedup_tol and returned sorted lexicographically;
    starts with a singular Jacobian are skipped silently, points landing
    outside the chart box are discarded.
    """
    chart = chart or F.chart
    m = chart.dim
    pts = chart.grid_points()
    span = max(b - a for a, b in zip(chart.lo, chart.hi))
    lo = np.asarray(chart.lo) - 5 * span
    hi = np.asarray(chart.hi) + 5 * span

    # Every trajectory gets the full iteration budget (Newton is
    # stationary at roots, and polishing tightens the scatter around
    # degenerate zeros); the best iterate per start is what counts.
    n = pts.shape[0]
    cur = pts.copy()
    best_pts = pts.copy()
    best_norm = np.full(n, np.inf)
    alive = np.ones(n, dtype=bool)
    for it in range(tol.newton_max_iter + 1):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        vals = F.values(cur[idx], nan_on_error=True)
        norms = np.linalg.norm(vals, axis=1)
        finite = np.isfinite(norms)
        improved = finite & (norms < best_norm[idx])
        best_norm[idx[improved]] = norms[improved]
        best_pts[idx[improved]] = cur[idx[improved]]
        alive[idx[~finite]] = False
        if it == tol.newton_max_iter:
            break
        idx = idx[finite]
        vals = vals[finite]
        if idx.size == 0:
            break
        jac = jacobian_values(F, cur[idx])
        ok = np.isfinite(jac).all(axis=(1, 2))
        dets = np.zeros(idx.size)
        dets[ok] = np.linalg.det(jac[ok])
        regular = ok & (np.abs(dets) > 1e-300)
        alive[idx[~regular]] = False  # singular Jacobian: skipped silently
        idx = idx[regular]
        if idx.size == 0:
            break
        step = np.linalg.solve(jac[regular], -vals[regular][..., None])[..., 0]
        nxt = cur[idx] + step
        inside = np.isfinite(nxt).all(axis=1)
        inside &= ((nxt >= lo[None, :]) & (nxt <= hi[None, :])).all(axis=1)
        alive[idx[~inside]] = False
        cur[idx[inside]] = nxt[inside]

    hit = (best_norm < tol.newton_tol) & chart.contains(best_pts)
    found = best_pts[hit]
    if found.shape[0] == 0:
        return []
    order = np.lexsort(tuple(found[:, j] for j in range(m - 1, -1, -1)))
    found = found[order]
    reps: list[np.ndarray] = []
    for p in found:
        if not any(np.linalg.norm(p - r) < tol.dedup_tol for r in reps):
            reps.append(p)
    return reps


def cluster_zeros(points, linkage: float) -> list[list[np.ndarray]]:
    """Single-linkage clustering; points within linkage distance chain
    into one cluster."""
    remaining = [np.asarray(p, dtype=float) for p in points]
    clusters = []
    while remaining:
        seed = remaining.pop(0)
        cluster = [seed]
        changed = True
        while changed:
            changed = False
            rest = []
            for q in remaining:
                if any(np.linalg.norm(q - c) <= linkage for c in cluster):
                    cluster.append(q)
                    changed = True
                else:
                    rest.append(q)
            remaining = rest
        clusters.append(cluster)
    return clusters


def _cluster_diameter(cluster) -> float:
    if len(cluster) < 2:
        return 0.0
    arr = np.asarray(cluster)
    diffs = arr[:, None, :] - arr[None, :, :]
    return float(np.max(np.linalg.norm(diffs, axis=2)))


def classify(phi: ScalarField, p, tol: Tolerances = DEFAULT_TOL) -> CriticalPoint:
    """Classify a critical point of phi by its Hessian spectrum.

    Kernel detection is scale-relative: an eigenvalue counts as zero
    when |eig| <= eig_zero_rel * max(max |eig|, 1).  For a 1-dimensional
    kernel with unit vector e, the third derivative of phi along e
    decides embryonic vs degenerate.
    """
    p = np.asarray(p, dtype=float)
    m = phi.chart.dim
    grad = gradient(phi)
    g = grad.values(p[None, :])[0]
    if np.linalg.norm(g) >= tol.newton_tol * 100:
        raise NotCritical(
            f"|grad phi| = {np.linalg.norm(g):.3e} at {tuple(p)}")
    H = hessian_at(phi, p)
    eigvals, eigvecs = np.linalg.eigh(H)
    eig_zero = tol.eig_zero_rel * max(float(np.max(np.abs(eigvals))), 1.0)
    small = np.abs(eigvals) <= eig_zero
    eig_tuple = tuple(float(v) for v in eigvals)
    if not small.any():
        index = int(np.sum(eigvals < 0))
        return CriticalPoint(tuple(p), KIND_MORSE, eig_tuple, index=index)
    if int(np.sum(small)) == 1:
        k = int(np.argmax(small))
        e = eigvecs[:, k]
        d3 = _third_directional(phi, e, p)
        if abs(d3) > tol.third_tol:
            return CriticalPoint(tuple(p), KIND_EMBRYONIC, eig_tuple,
                                 kernel_direction=tuple(float(v) for v in e),
                                 third_derivative=float(d3))
        return CriticalPoint(tuple(p), KIND_DEGENERATE, eig_tuple,
                             kernel_direction=tuple(float(v) for v in e),
                             third_derivative=float(d3))
    return CriticalPoint(tuple(p), KIND_DEGENERATE, eig_tuple)


def _third_directional(phi: ScalarField, e, p) -> float:
    """d^3 phi(e, e, e) via three symbolic directional derivatives."""
    m = phi.chart.dim
    expr = phi.expr
    for _ in range(3):
        acc: Expr = Const(0.0)
        for i in range(m):
            if abs(e[i]) > 1e-14:
                acc = acc + Const(float(e[i])) * diff(expr, i)
        expr = simplify(acc)
    return compiled(expr, m).eval_many(np.asarray(p, float)[None, :])[0]


@dataclass
class ZeroSetMatch:
    status: str                      # pass | fail | inconclusive
    phi_zeros: list
    x_zeros: list
    unmatched_phi: list
    unmatched_x: list
    non_isolated: bool
    notes: str = ""


def zero_sets_match(phi: ScalarField, X: VectorField,
                    chart: Chart | None = None,
                    tol: Tolerances = DEFAULT_TOL) -> ZeroSetMatch:
    """Compare Zero(X) with Crit(phi) by Hausdorff pairing at match_tol.

    Non-isolated zero sets (cluster diameter beyond 10x the dedup
    tolerance) make the verdict inconclusive rather than an error.
    """
    chart = chart or phi.chart
    zphi = find_zeros(gradient(phi), chart, tol)
    zx = find_zeros(X, chart, tol)

    spacing = max((b - a) / (chart.n - 1) for a, b in zip(chart.lo, chart.hi))
    linkage = 1.5 * spacing
    non_isolated = False
    for zs in (zphi, zx):
        for cluster in cluster_zeros(zs, linkage):
            if _cluster_diameter(cluster) > 10 * tol.dedup_tol:
                non_isolated = True

    def unmatched(src, dst):
        out = []
        for p in src:
            if not dst or min(np.linalg.norm(p - q) for q in dst) > tol.match_tol:
                out.append(p)
        return out

    un_phi = unmatched(zphi, zx)
    un_x = unmatched(zx, zphi)
    if non_isolated:
        return ZeroSetMatch("inconclusive", zphi, zx, un_phi, un_x, True,
                            notes="zero set is not isolated; pointwise "
                                  "matching is not meaningful")
    if un_phi or un_x:
        return ZeroSetMatch("fail", zphi, zx, un_phi, un_x, False,
                            notes="zero sets differ beyond match tolerance")
    return ZeroSetMatch("pass", zphi, zx, [], [], False)

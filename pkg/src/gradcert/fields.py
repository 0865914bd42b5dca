"""Geometric objects on a box chart in R^m and their exterior calculus.

A Chart is a single coordinate box with a uniform evaluation lattice; no
atlases.  Scalar fields, vector fields, one-forms, two-forms and (2,0)
tensor fields are shaped collections of expressions on a chart, plus
numeric-callable variants used where closed forms are unavailable
(deformations in dimension > 4, pointwise tensor constructions).

Matrix conventions, fixed once for the whole package:

* two-form matrix O:   w(u, v) = <O u, v>  (so O^T = -O, and the entry
  O[i][j] equals w(e_j, e_i));
* tensor matrix M:     g(v, w) = <M v, w>  (so "dphi = g(X, .)" is the
  column identity M X = grad phi);
* d of a one-form with coefficients L: O[i][j] = d_j L_i - d_i L_j.

The orientation is pinned by the worked example L = p dq on (q, p):
dL = dp ^ dq, i.e. (dL)(d_q, d_p) = -1.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import symmat
from .backend import compiled
from .expr import Const, Expr, diff, max_var_index, simplify

GRID_CAP = 200_000


class NotClosed(Exception):
    """Two-form failed its closedness check."""


class OddDimension(Exception):
    """Operation requires an even-dimensional chart."""


class Chart:
    """A coordinate box [lo, hi] in R^m with an n^m evaluation lattice
    (boundary included) and an exclusion radius used by checks that only
    hold away from marked zeros."""

    def __init__(self, names, lo, hi, n: int = 33, r_excl: float = 1e-3):
        self.names = tuple(str(s) for s in names)
        self.lo = tuple(float(v) for v in lo)
        self.hi = tuple(float(v) for v in hi)
        m = len(self.names)
        if m < 1:
            raise ValueError("chart dimension must be >= 1")
        if len(self.lo) != m or len(self.hi) != m:
            raise ValueError("lo/hi must match the number of coordinates")
        if any(a >= b for a, b in zip(self.lo, self.hi)):
            raise ValueError("chart bounds must satisfy lo < hi componentwise")
        if n < 3:
            raise ValueError("grid resolution n must be >= 3")
        n_eff = n
        while n_eff**m > GRID_CAP and n_eff > 3:
            n_eff = max(3, int(GRID_CAP ** (1.0 / m)))
        if n_eff != n:
            warnings.warn(
                f"grid resolution reduced from {n} to {n_eff} to respect the "
                f"{GRID_CAP}-sample cap", stacklevel=2)
        self.n = n_eff
        self.r_excl = float(r_excl)
        self._grid = None

    @property
    def dim(self) -> int:
        return len(self.names)

    def axes(self):
        return [np.linspace(a, b, self.n) for a, b in zip(self.lo, self.hi)]

    def grid_points(self) -> np.ndarray:
        """The n^m lattice as an (N, m) array, in row-major (lexicographic
        by first coordinate) order."""
        if self._grid is None:
            mesh = np.meshgrid(*self.axes(), indexing="ij")
            self._grid = np.ascontiguousarray(
                np.stack([a.ravel() for a in mesh], axis=1))
        return self._grid

    def grid_points_excluding(self, centers) -> np.ndarray:
        """Lattice minus closed balls of radius r_excl around centers."""
        pts = self.grid_points()
        centers = np.atleast_2d(np.asarray(centers, dtype=float))
        if centers.size == 0:
            return pts
        keep = np.ones(pts.shape[0], dtype=bool)
        for c in centers:
            keep &= np.linalg.norm(pts - c[None, :], axis=1) > self.r_excl
        return np.ascontiguousarray(pts[keep])

    def ball_points(self, center, radius: float, n: int = 17) -> np.ndarray:
        """Lattice on the bounding box of a ball, clipped to the ball and
        to the chart box.  Includes the center for odd n."""
        center = np.asarray(center, dtype=float)
        axes = [np.linspace(max(c - radius, a), min(c + radius, b), n)
                for c, a, b in zip(center, self.lo, self.hi)]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([a.ravel() for a in mesh], axis=1)
        inside = np.linalg.norm(pts - center[None, :], axis=1) <= radius + 1e-12
        return np.ascontiguousarray(pts[inside])

    def contains(self, pts, tol: float = 1e-9) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        ok = np.ones(pts.shape[0], dtype=bool)
        for j in range(self.dim):
            ok &= (pts[:, j] >= self.lo[j] - tol) & (pts[:, j] <= self.hi[j] + tol)
        return ok

    def __repr__(self):
        return (f"Chart({self.names}, lo={self.lo}, hi={self.hi}, n={self.n}, "
                f"r_excl={self.r_excl})")


def _check_indices(chart: Chart, exprs):
    for e in exprs:
        if max_var_index(e) >= chart.dim:
            raise ValueError("expression references a variable beyond the "
                             f"chart dimension {chart.dim}")


class ScalarField:
    def __init__(self, chart: Chart, expr: Expr):
        _check_indices(chart, [expr])
        self.chart = chart
        self.expr = expr
        self._c = None

    def values(self, pts, nan_on_error: bool = False) -> np.ndarray:
        if self._c is None:
            self._c = compiled(self.expr, self.chart.dim)
        return self._c.eval_many(pts, nan_on_error=nan_on_error)

    def __repr__(self):
        return f"ScalarField({self.expr})"


class _ExprVector:
    """Common behaviour of the m-tuple-of-expressions field types."""

    def __init__(self, chart: Chart, components):
        comps = tuple(components)
        if len(comps) != chart.dim:
            raise ValueError(f"expected {chart.dim} components, got {len(comps)}")
        _check_indices(chart, comps)
        self.chart = chart
        self.components = comps
        self._c = None

    def values(self, pts, nan_on_error: bool = False) -> np.ndarray:
        """(N, m) array of component values."""
        if self._c is None:
            self._c = [compiled(e, self.chart.dim) for e in self.components]
        pts = np.ascontiguousarray(pts, dtype=np.float64)
        out = np.empty((pts.shape[0], self.chart.dim))
        for j, c in enumerate(self._c):
            out[:, j] = c.eval_many(pts, nan_on_error=nan_on_error)
        return out

    def __repr__(self):
        return f"{type(self).__name__}({', '.join(str(e) for e in self.components)})"


class VectorField(_ExprVector):
    pass


class OneForm(_ExprVector):
    """Coefficients with respect to dx_1 .. dx_m."""


class NumericVectorField:
    """Vector field given by a batch-callable (N, m) -> (N, m)."""

    def __init__(self, chart: Chart, fn):
        self.chart = chart
        self.fn = fn

    def values(self, pts, nan_on_error: bool = False) -> np.ndarray:
        return self.fn(np.ascontiguousarray(pts, dtype=np.float64))


class NumericOneForm(NumericVectorField):
    pass


class TwoForm:
    """Antisymmetric matrix of expressions under the package pairing
    convention."""

    def __init__(self, chart: Chart, matrix):
        mat = symmat.as_matrix(matrix)
        m = chart.dim
        if len(mat) != m or any(len(r) != m for r in mat):
            raise ValueError(f"two-form matrix must be {m}x{m}")
        _check_indices(chart, [e for row in mat for e in row])
        self.chart = chart
        self.matrix = mat
        self._c = None

    def values(self, pts, nan_on_error: bool = False) -> np.ndarray:
        """(N, m, m) array of matrix values."""
        m = self.chart.dim
        if self._c is None:
            self._c = [[compiled(e, m) for e in row] for row in self.matrix]
        pts = np.ascontiguousarray(pts, dtype=np.float64)
        out = np.empty((pts.shape[0], m, m))
        for i in range(m):
            for j in range(m):
                out[:, i, j] = self._c[i][j].eval_many(
                    pts, nan_on_error=nan_on_error)
        return out

    def antisymmetry_residual(self, pts=None) -> float:
        pts = self.chart.grid_points() if pts is None else pts
        vals = self.values(pts)
        return float(np.max(np.abs(vals + np.transpose(vals, (0, 2, 1)))))


class NumericTwoForm:
    def __init__(self, chart: Chart, fn):
        self.chart = chart
        self.fn = fn

    def values(self, pts, nan_on_error: bool = False) -> np.ndarray:
        return self.fn(np.ascontiguousarray(pts, dtype=np.float64))


class TensorField:
    """(2,0) tensor as an m x m matrix of expressions; no symmetry is
    required, positivity refers to the symmetric part."""

    def __init__(self, chart: Chart, matrix):
        mat = symmat.as_matrix(matrix)
        m = chart.dim
        if len(mat) != m or any(len(r) != m for r in mat):
            raise ValueError(f"tensor matrix must be {m}x{m}")
        _check_indices(chart, [e for row in mat for e in row])
        self.chart = chart
        self.matrix = mat
        self._c = None

    def values(self, pts, nan_on_error: bool = False) -> np.ndarray:
        m = self.chart.dim
        if self._c is None:
            self._c = [[compiled(e, m) for e in row] for row in self.matrix]
        pts = np.ascontiguousarray(pts, dtype=np.float64)
        out = np.empty((pts.shape[0], m, m))
        for i in range(m):
            for j in range(m):
                out[:, i, j] = self._c[i][j].eval_many(
                    pts, nan_on_error=nan_on_error)
        return out


class CallableTensor:
    """(2,0) tensor given by a batch-callable (N, m) -> (N, m, m)."""

    def __init__(self, chart: Chart, fn):
        self.chart = chart
        self.fn = fn

    def values(self, pts, nan_on_error: bool = False) -> np.ndarray:
        return self.fn(np.ascontiguousarray(pts, dtype=np.float64))


def identity_tensor(chart: Chart) -> TensorField:
    return TensorField(chart, symmat.identity(chart.dim))


# ---------------------------------------------------------------------------
# Exterior calculus
# ---------------------------------------------------------------------------

def differential(phi: ScalarField) -> OneForm:
    """d(phi): component j is the j-th partial derivative."""
    m = phi.chart.dim
    return OneForm(phi.chart, [simplify(diff(phi.expr, j)) for j in range(m)])


def gradient(phi: ScalarField) -> VectorField:
    """Euclidean gradient: same components as the differential."""
    m = phi.chart.dim
    return VectorField(phi.chart, [simplify(diff(phi.expr, j)) for j in range(m)])


_FD6_OFFSETS = (-3, -2, -1, 1, 2, 3)
_FD6_WEIGHTS = (-1.0 / 60, 3.0 / 20, -3.0 / 4, 3.0 / 4, -3.0 / 20, 1.0 / 60)


def _fd_jacobian(values_fn, pts, m, h=1e-4):
    """(N, m, m) Jacobian J[i][j] = d_j of component i, 6th-order central
    differences."""
    n = pts.shape[0]
    jac = np.zeros((n, m, m))
    for j in range(m):
        acc = np.zeros((n, m))
        for off, w in zip(_FD6_OFFSETS, _FD6_WEIGHTS):
            shifted = pts.copy()
            shifted[:, j] += off * h
            acc += w * values_fn(shifted)
        jac[:, :, j] = acc / h
    return jac


def exterior_derivative_1(lam) -> TwoForm | NumericTwoForm:
    """d of a one-form.  Exact for expression coefficients; a 6th-order
    finite-difference two-form for numeric coefficients."""
    chart = lam.chart
    m = chart.dim
    if isinstance(lam, OneForm):
        mat = []
        for i in range(m):
            row = []
            for j in range(m):
                row.append(simplify(diff(lam.components[i], j)
                                    - diff(lam.components[j], i)))
            mat.append(tuple(row))
        return TwoForm(chart, tuple(mat))

    def omega_values(pts):
        jac = _fd_jacobian(lam.values, pts, m)
        return jac - np.transpose(jac, (0, 2, 1))

    return NumericTwoForm(chart, omega_values)


def exterior_derivative_2(omega):
    """d of a two-form: the cyclic sums d_i O_jk + d_j O_ki + d_k O_ij
    for i < j < k, as (indices, expression) pairs (or (indices, callable)
    for numeric two-forms).  Empty for m < 3."""
    chart = omega.chart
    m = chart.dim
    triples = [(i, j, k) for i in range(m) for j in range(i + 1, m)
               for k in range(j + 1, m)]
    if isinstance(omega, TwoForm):
        out = []
        for (i, j, k) in triples:
            e = simplify(diff(omega.matrix[j][k], i)
                         + diff(omega.matrix[k][i], j)
                         + diff(omega.matrix[i][j], k))
            out.append(((i, j, k), e))
        return out

    def component(i, j, k):
        def fn(pts):
            acc = np.zeros(pts.shape[0])
            for d, (a, b) in ((i, (j, k)), (j, (k, i)), (k, (i, j))):
                for off, w in zip(_FD6_OFFSETS, _FD6_WEIGHTS):
                    shifted = pts.copy()
                    shifted[:, d] += off * 1e-4
                    acc += w * omega.values(shifted)[:, a, b]
            return acc / 1e-4
        return fn

    return [((i, j, k), component(i, j, k)) for (i, j, k) in triples]


def closedness_residual(omega, chart: Chart | None = None,
                        pts=None) -> float:
    """Max absolute d(omega) component over the grid; 0 for m < 3."""
    chart = chart or omega.chart
    pts = chart.grid_points() if pts is None else pts
    comps = exterior_derivative_2(omega)
    worst = 0.0
    for (_ijk, e) in comps:
        if isinstance(e, Expr):
            vals = compiled(e, chart.dim).eval_many(pts)
        else:
            vals = e(pts)
        worst = max(worst, float(np.max(np.abs(vals))))
    return worst


def interior_product(X, omega):
    """i_X omega: the one-form with coefficient vector O X."""
    chart = omega.chart
    if chart.dim != X.chart.dim:
        raise ValueError("vector field and two-form live on charts of "
                         "different dimension")
    if isinstance(omega, TwoForm) and isinstance(X, VectorField):
        coeffs = symmat.matvec(omega.matrix, X.components)
        return OneForm(chart, coeffs)

    def values(pts):
        O = omega.values(pts)
        Xv = X.values(pts)
        return np.einsum("nij,nj->ni", O, Xv)

    return NumericOneForm(chart, values)


def lie_derivative_residual(X, omega, chart: Chart | None = None,
                            closed_tol: float = 1e-10) -> float:
    """Max grid residual of d(i_X omega) - omega; by Cartan's formula
    (with d omega = 0) this is the Liouville defect L_X omega - omega."""
    chart = chart or omega.chart
    res = closedness_residual(omega, chart)
    if res >= closed_tol:
        raise NotClosed(f"two-form is not closed: d-residual {res:.3e} >= "
                        f"{closed_tol:.1e}")
    lam = interior_product(X, omega)
    dlam = exterior_derivative_1(lam)
    pts = chart.grid_points()
    diff_vals = dlam.values(pts) - omega.values(pts)
    return float(np.max(np.abs(diff_vals)))


def nondegeneracy_margin(omega, chart: Chart | None = None) -> float:
    """min over the grid of |det O|; only defined in even dimension."""
    chart = chart or omega.chart
    if chart.dim % 2 != 0:
        raise OddDimension(f"chart dimension {chart.dim} is odd")
    vals = omega.values(chart.grid_points())
    return float(np.min(np.abs(np.linalg.det(vals))))


def constant_two_form(chart: Chart, matrix) -> TwoForm:
    return TwoForm(chart, symmat.const_matrix(matrix))


def standard_area_form(chart: Chart) -> TwoForm:
    """dx ^ dy on a 2-d chart (matrix [[0, -1], [1, 0]])."""
    if chart.dim != 2:
        raise ValueError("standard area form needs a 2-d chart")
    return constant_two_form(chart, [[0.0, -1.0], [1.0, 0.0]])

"""The four gradient-like conditions and explicit tensor certificates.

For a pair (X, phi) on a chart, in increasing strength:

1. d phi(X) > 0 outside the common zero set;
2. d phi(X) >= delta (|X|^2 + |d phi|^2) for a positive function delta;
3. d phi = g(X, .) for a positive (not necessarily symmetric) tensor g;
4. same with g a Riemannian metric (symmetric positive definite).

All checks are grid reductions; a "pass" is a statement about tested
samples only and carries the caveat string verbatim.  Certificates are
concrete tensor fields with measured equation residual (max of
|M(p) X(p) - grad phi(p)| over samples) and positivity margin (min
eigenvalue of the symmetric part).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import symmat
from .backend import compiled
from .critical import (KIND_MORSE, CriticalPoint, classify, hessian_values,
                       jacobian_values, zero_sets_match)
from .expr import Const, Div, Expr, Mul, Neg, Pow, SgnCase, Sub, simplify, sqrt
from .fields import (CallableTensor, Chart, ScalarField, TensorField,
                     NumericVectorField, VectorField, gradient)
from .params import DEFAULT_TOL, Tolerances

CAVEAT = "grid-verified, not a proof"

PASS = "pass"
FAIL = "fail"
INCONCLUSIVE = "inconclusive"


class ZeroDenominator(Exception):
    """Lyapunov ratio requested where |X|^2 + |d phi|^2 vanishes."""


class NotPositive(Exception):
    """Certificate tensor is not positive at the requested point."""


class SingularTensor(Exception):
    """Tensor field is singular or not positive on the chart."""


class NotMorse(Exception):
    pass


class LinearizationNotLyapunov(Exception):
    """<Hess v, DX v> is not bounded below by a positive multiple of
    |v|^2 at the critical point."""


class NoPositiveRadius(Exception):
    """Positivity margin stayed nonpositive after all radius halvings."""


class NormalFormViolation(Exception):
    pass


class NotTransverse(Exception):
    """d phi(X) <= 0 where a regular-point tensor was requested."""


class PartitionInvalid(Exception):
    pass


class PieceInvalidOnSupport(Exception):
    pass


class Condition1Fails(Exception):
    def __init__(self, verdict):
        self.verdict = verdict
        super().__init__(f"condition (1) fails: {verdict.notes}")


class NotOneDimensional(Exception):
    pass


@dataclass(frozen=True)
class Witness:
    point: tuple[float, ...]
    values: dict


@dataclass(frozen=True)
class Verdict:
    status: str
    margin: float | None = None
    witness: Witness | None = None
    notes: str = ""

    @property
    def caveat(self) -> str | None:
        return CAVEAT if self.status == PASS else None


@dataclass(frozen=True)
class Region:
    kind: str                      # "chart" | "ball"
    center: tuple[float, ...] | None = None
    radius: float | None = None

    @staticmethod
    def chart() -> "Region":
        return Region("chart")

    @staticmethod
    def ball(center, radius: float) -> "Region":
        return Region("ball", tuple(float(v) for v in center), float(radius))


class Certificate:
    """A tensor field g witnessing d phi = g(X, .) on a region.

    Diagnostics are recomputed from g on every call, never cached, so
    they cannot go stale.
    """

    def __init__(self, phi: ScalarField, X, g, region: Region):
        self.phi = phi
        self.X = X
        self.g = g
        self.region = region
        self.chart = phi.chart

    def sample_points(self) -> np.ndarray:
        if self.region.kind == "chart":
            return self.chart.grid_points()
        return self.chart.ball_points(self.region.center, self.region.radius)

    def residual(self, pts=None) -> float:
        pts = self.sample_points() if pts is None else pts
        M = self.g.values(pts)
        Xv = self.X.values(pts)
        grad = gradient(self.phi).values(pts)
        return float(np.max(np.abs(np.einsum("nij,nj->ni", M, Xv) - grad)))

    def positivity_margin(self, pts=None) -> float:
        pts = self.sample_points() if pts is None else pts
        M = self.g.values(pts)
        sym = 0.5 * (M + np.transpose(M, (0, 2, 1)))
        return float(np.min(np.linalg.eigvalsh(sym)))

    def scale(self, pts=None) -> float:
        pts = self.sample_points() if pts is None else pts
        grad = gradient(self.phi).values(pts)
        return max(1.0, float(np.max(np.abs(grad))))

    def passes(self, tol: Tolerances = DEFAULT_TOL) -> bool:
        pts = self.sample_points()
        return (self.residual(pts) < tol.cert_residual_rtol * self.scale(pts)
                and self.positivity_margin(pts) > 0)

    def verdict(self, tol: Tolerances = DEFAULT_TOL) -> Verdict:
        pts = self.sample_points()
        res = self.residual(pts)
        margin = self.positivity_margin(pts)
        ok = res < tol.cert_residual_rtol * self.scale(pts) and margin > 0
        if ok:
            return Verdict(PASS, margin=margin,
                           notes=f"residual {res:.3e}")
        return Verdict(FAIL, witness=self._worst_witness(pts),
                       notes=f"residual {res:.3e}, margin {margin:.3e}")

    def _worst_witness(self, pts) -> Witness:
        M = self.g.values(pts)
        Xv = self.X.values(pts)
        grad = gradient(self.phi).values(pts)
        res = np.max(np.abs(np.einsum("nij,nj->ni", M, Xv) - grad), axis=1)
        sym = 0.5 * (M + np.transpose(M, (0, 2, 1)))
        eig = np.linalg.eigvalsh(sym)[:, 0]
        score = np.maximum(res, -eig)
        i = int(np.argmax(score))
        return Witness(tuple(pts[i]), {"residual": float(res[i]),
                                       "min_sym_eigenvalue": float(eig[i])})


@dataclass(frozen=True)
class DecayProfile:
    """Annulus infima of the Lyapunov ratio around one zero, on radii
    r_k = r0 * 2^-k."""
    center: tuple[float, ...]
    radii: tuple[float, ...]
    infima: tuple[float | None, ...]
    samples_per_annulus: int


@dataclass
class Condition2Result:
    verdict: Verdict
    profiles: list[DecayProfile] = field(default_factory=list)


# ---------------------------------------------------------------------------
# Conditions (1) and (2)
# ---------------------------------------------------------------------------

def pairing_values(phi: ScalarField, X, pts) -> np.ndarray:
    """d phi(X) at each point."""
    grad = gradient(phi).values(pts, nan_on_error=True)
    Xv = X.values(pts, nan_on_error=True)
    return np.einsum("nj,nj->n", grad, Xv)


def _condition1(phi: ScalarField, X, chart: Chart,
                tol: Tolerances):
    zm = zero_sets_match(phi, X, chart, tol)
    if zm.status == FAIL:
        un = (zm.unmatched_phi + zm.unmatched_x)[0]
        verdict = Verdict(FAIL, witness=Witness(tuple(un), {}),
                          notes="Zero(X) and Crit(phi) do not coincide")
        return verdict, zm
    centers = list(zm.phi_zeros) + list(zm.x_zeros)
    pts = chart.grid_points_excluding(centers) if centers else chart.grid_points()
    if pts.shape[0] == 0:
        return Verdict(INCONCLUSIVE, notes="no sample points outside "
                                           "exclusion balls"), zm
    vals = pairing_values(phi, X, pts)
    i = int(np.argmin(vals))
    if not np.isfinite(vals[i]) or vals[i] <= 0:
        verdict = Verdict(FAIL,
                          witness=Witness(tuple(pts[i]),
                                          {"dphi_X": float(vals[i])}),
                          notes="d phi(X) <= 0 at a tested point away from "
                                "the zero set")
        return verdict, zm
    if zm.status == INCONCLUSIVE:
        return Verdict(INCONCLUSIVE, margin=float(vals[i]),
                       notes=zm.notes), zm
    return Verdict(PASS, margin=float(vals[i]),
                   notes="d phi(X) > 0 on all tested points outside "
                         "exclusion balls"), zm


def check_condition1(phi: ScalarField, X, chart: Chart | None = None,
                     tol: Tolerances = DEFAULT_TOL) -> Verdict:
    """Positivity of d phi(X) away from the (matching) zero sets."""
    chart = chart or phi.chart
    verdict, _zm = _condition1(phi, X, chart, tol)
    return verdict


def lyapunov_ratio(phi: ScalarField, X, p) -> float:
    """d phi(X) / (|X|^2 + |d phi|^2) at a single point (Euclidean
    norms)."""
    pt = np.atleast_1d(np.asarray(p, dtype=float))[None, :]
    grad = gradient(phi).values(pt)[0]
    Xv = X.values(pt)[0]
    denom = float(Xv @ Xv + grad @ grad)
    if denom == 0.0:
        raise ZeroDenominator(f"|X|^2 + |d phi|^2 vanishes at {tuple(pt[0])}")
    return float(grad @ Xv) / denom


def _ratio_values(phi: ScalarField, X, pts):
    """(ratios, valid_mask): lanes with vanishing denominator or
    non-finite values are masked out, not errors (they are numerically
    indistinguishable from zeros of the pair)."""
    grad = gradient(phi).values(pts, nan_on_error=True)
    Xv = X.values(pts, nan_on_error=True)
    num = np.einsum("nj,nj->n", grad, Xv)
    denom = np.einsum("nj,nj->n", Xv, Xv) + np.einsum("nj,nj->n", grad, grad)
    valid = np.isfinite(num) & np.isfinite(denom) & (denom > 0)
    ratios = np.full(pts.shape[0], np.nan)
    np.divide(num, denom, out=ratios, where=valid)
    return ratios, valid


def _annulus_samples(center, r_in, r_out, m, n_samples, rng):
    if m == 1:
        nr = max(2, n_samples // 2)
        radii = np.linspace(r_in, r_out, nr)
        xs = np.concatenate([center[0] - radii, center[0] + radii])
        return xs[:, None]
    n_dir = max(8, n_samples // 4)
    dirs = rng.standard_normal((n_dir, m))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = np.linspace(r_in, r_out, max(4, n_samples // n_dir))
    pts = (center[None, None, :]
           + radii[:, None, None] * dirs[None, :, :]).reshape(-1, m)
    return pts


def decay_profile(phi: ScalarField, X, center, tol: Tolerances = DEFAULT_TOL,
                  seed: int = 0) -> DecayProfile:
    """Lyapunov-ratio infima on geometric annuli shrinking into a zero."""
    center = np.asarray(center, dtype=float)
    m = center.shape[0]
    radii = tuple(tol.annulus_r0 * 2.0 ** (-k)
                  for k in range(tol.annulus_levels + 1))
    rng = np.random.default_rng(seed)
    infima: list[float | None] = []
    count = 0
    for k in range(tol.annulus_levels):
        pts = _annulus_samples(center, radii[k + 1], radii[k], m,
                               tol.annulus_min_samples, rng)
        count = max(count, pts.shape[0])
        ratios, valid = _ratio_values(phi, X, pts)
        infima.append(float(np.min(ratios[valid])) if valid.any() else None)
    return DecayProfile(tuple(center), radii, tuple(infima), count)


def _profile_decays(profile: DecayProfile, tol: Tolerances) -> bool:
    vals = [v for v in profile.infima if v is not None]
    if len(vals) < tol.decay_scales + 1:
        return False
    tail = vals[-tol.decay_scales:]
    decreasing = all(a > b for a, b in zip(tail, tail[1:]))
    return decreasing and vals[-1] < tol.decay_drop * vals[0]


def check_condition2(phi: ScalarField, X, chart: Chart | None = None,
                     tol: Tolerances = DEFAULT_TOL,
                     seed: int = 0) -> Condition2Result:
    """Lyapunov-ratio check with per-zero decay profiles.

    Pass: global ratio infimum (grid minus exclusion balls) and all
    annulus infima stay >= delta_floor.  Fail: condition (1) fails, or
    at some zero the annulus infima strictly decrease over the last
    decay_scales annuli and the final one drops below decay_drop times
    the first (the ratio is heading to zero, so no positive continuous
    delta can exist).  Anything else is inconclusive.
    """
    chart = chart or phi.chart
    v1, zm = _condition1(phi, X, chart, tol)
    if v1.status == FAIL:
        return Condition2Result(
            Verdict(FAIL, witness=v1.witness,
                    notes="condition (1) fails: " + v1.notes))
    centers = list(zm.phi_zeros)
    for q in zm.x_zeros:
        if not centers or min(np.linalg.norm(q - c) for c in centers) > tol.match_tol:
            centers.append(q)
    profiles = [decay_profile(phi, X, c, tol, seed=seed + i)
                for i, c in enumerate(centers)]

    for prof in profiles:
        if _profile_decays(prof, tol):
            vals = [v for v in prof.infima if v is not None]
            return Condition2Result(
                Verdict(FAIL,
                        witness=Witness(prof.center,
                                        {"first_annulus_infimum": vals[0],
                                         "final_annulus_infimum": vals[-1]}),
                        notes="Lyapunov ratio decays to zero along annuli "
                              "around this zero"),
                profiles)

    pts = chart.grid_points_excluding(centers) if centers else chart.grid_points()
    ratios, valid = _ratio_values(phi, X, pts)
    candidates = [float(np.min(ratios[valid]))] if valid.any() else []
    candidates += [v for prof in profiles for v in prof.infima if v is not None]
    if not candidates:
        return Condition2Result(
            Verdict(INCONCLUSIVE, notes="no valid sample points"), profiles)
    margin = min(candidates)
    if margin >= tol.delta_floor and zm.status != INCONCLUSIVE:
        return Condition2Result(
            Verdict(PASS, margin=margin,
                    notes=f"ratio infimum {margin:.6g} over grid and annuli"),
            profiles)
    notes = (zm.notes if zm.status == INCONCLUSIVE else
             f"ratio infimum {margin:.6g} below floor {tol.delta_floor:g} "
             "but no decay to zero detected")
    return Condition2Result(Verdict(INCONCLUSIVE, margin=margin, notes=notes),
                            profiles)


# ---------------------------------------------------------------------------
# Conditions (3) and (4): certificate checks
# ---------------------------------------------------------------------------

def check_certificate(phi: ScalarField, X, g,
                      chart: Chart | None = None) -> Certificate:
    """Wrap (phi, X, g) as a chart-wide certificate; diagnostics are
    recomputed on demand."""
    chart = chart or phi.chart
    if getattr(g, "chart", chart).dim != chart.dim:
        raise ValueError("tensor and chart dimensions differ")
    return Certificate(phi, X, g, Region.chart())


def is_riemannian(g, chart: Chart | None = None,
                  tol: Tolerances = DEFAULT_TOL) -> Verdict:
    """Symmetry plus positivity of the tensor on the grid."""
    chart = chart or g.chart
    pts = chart.grid_points()
    M = g.values(pts)
    asym = float(np.max(np.abs(M - np.transpose(M, (0, 2, 1)))))
    sym = 0.5 * (M + np.transpose(M, (0, 2, 1)))
    eigs = np.linalg.eigvalsh(sym)
    margin = float(np.min(eigs))
    if asym < tol.asym_tol and margin > 0:
        return Verdict(PASS, margin=margin,
                       notes=f"max asymmetry {asym:.3e}")
    i = int(np.argmin(eigs[:, 0])) if margin <= 0 else int(
        np.argmax(np.max(np.abs(M - np.transpose(M, (0, 2, 1))), axis=(1, 2))))
    return Verdict(FAIL, witness=Witness(tuple(pts[i]),
                                         {"asymmetry": asym,
                                          "min_sym_eigenvalue": margin}),
                   notes="tensor is not a Riemannian metric on the grid")


def delta_from_certificate(phi: ScalarField, X, g, p,
                           tol: Tolerances = DEFAULT_TOL) -> float:
    """Pointwise Lyapunov constant delta(p) = a / (1 + B^2) with a the
    smallest eigenvalue of the symmetric part and B the operator norm.

    From g(v,v) >= a|v|^2 one gets d phi(X) >= a|X|^2, and |d phi| =
    |M X| <= B |X| bounds the denominator; the resulting inequality is
    asserted at p before returning.
    """
    pt = np.atleast_1d(np.asarray(p, dtype=float))[None, :]
    M = g.values(pt)[0]
    a = float(np.min(np.linalg.eigvalsh(0.5 * (M + M.T))))
    if a <= 0:
        raise NotPositive(f"certificate tensor not positive at {tuple(pt[0])}"
                          f" (a = {a:.3e})")
    B = float(np.linalg.norm(M, 2))
    delta = a / (1.0 + B * B)
    grad = gradient(phi).values(pt)[0]
    Xv = X.values(pt)[0]
    lhs = float(grad @ Xv)
    rhs = delta * float(Xv @ Xv + grad @ grad)
    if lhs < rhs - 1e-12:
        raise RuntimeError(
            f"delta contract violated at {tuple(pt[0])}: {lhs} < {rhs}")
    return delta


# ---------------------------------------------------------------------------
# The lift: solve for X given (phi, g)
# ---------------------------------------------------------------------------

def solve_vector_field(phi: ScalarField, g, tol: Tolerances = DEFAULT_TOL):
    """The unique X with g(X, .) = d phi, i.e. M X = grad phi pointwise.

    Returns a symbolic VectorField when the tensor matrix is constant
    and m <= 4 (inverse by adjugate); otherwise a numeric-callable
    field.
    """
    chart = phi.chart
    pts = chart.grid_points()
    M = g.values(pts)
    sym = 0.5 * (M + np.transpose(M, (0, 2, 1)))
    margin = float(np.min(np.linalg.eigvalsh(sym)))
    if margin <= 0:
        raise SingularTensor(f"tensor positivity margin {margin:.3e} <= 0 "
                             "on the chart grid")
    grad = gradient(phi)
    if (isinstance(g, TensorField) and chart.dim <= 4
            and symmat.is_const_matrix(g.matrix)):
        inv = symmat.inverse(g.matrix)
        comps = [simplify(e) for e in symmat.matvec(inv, grad.components)]
        return VectorField(chart, comps)

    def values(qts):
        Mq = g.values(qts)
        gq = grad.values(qts, nan_on_error=True)
        return np.linalg.solve(Mq, gq[..., None])[..., 0]

    return NumericVectorField(chart, values)


# ---------------------------------------------------------------------------
# Local certificate constructions
# ---------------------------------------------------------------------------

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)
_GL_T = 0.5 * (_GL_NODES + 1.0)
_GL_W = 0.5 * _GL_WEIGHTS


def _segment_average(batch_fn, p, pts, m):
    """Integral over [0,1] of batch_fn along segments p -> pts, by
    fixed-order Gauss-Legendre quadrature; (N, m, m)."""
    acc = np.zeros((pts.shape[0], m, m))
    for t, w in zip(_GL_T, _GL_W):
        seg = p[None, :] + t * (pts - p[None, :])
        acc += w * batch_fn(np.ascontiguousarray(seg))
    return acc


def construct_certificate_morse(phi: ScalarField, X, p, radius: float,
                                tol: Tolerances = DEFAULT_TOL) -> Certificate:
    """Certificate near a Morse critical point, coordinate-free.

    Factor X(z) = A(z)(z - p) and grad phi(z) = H(z)(z - p) with A, H
    the line-averaged Jacobian/Hessian along the segment from p; then
    M(z) = H(z) A(z)^{-1} satisfies M X = grad phi up to quadrature
    error, and is positive near p whenever <Hess v, DX v> is bounded
    below at p.  The radius is halved (up to 6 times) until the
    positivity margin on the ball is positive.
    """
    chart = phi.chart
    m = chart.dim
    p = np.asarray(p, dtype=float)
    cp = classify(phi, p, tol)
    if cp.kind != KIND_MORSE:
        raise NotMorse(f"critical point at {tuple(p)} classified as {cp.kind}")
    Xp = X.values(p[None, :])[0]
    if np.linalg.norm(Xp) > 1e-8:
        raise ValueError(f"X does not vanish at {tuple(p)}: |X| = "
                         f"{np.linalg.norm(Xp):.3e}")
    B = hessian_values(phi, p[None, :])[0]
    A0 = jacobian_values(X, p[None, :])[0]
    BA = B @ A0
    lyap = float(np.min(np.linalg.eigvalsh(0.5 * (BA + BA.T))))
    if lyap <= 0:
        raise LinearizationNotLyapunov(
            f"min eig of sym(Hess . DX) = {lyap:.3e} at {tuple(p)}")

    def tensor_values(pts):
        A = _segment_average(lambda s: jacobian_values(X, s), p, pts, m)
        H = _segment_average(lambda s: hessian_values(phi, s), p, pts, m)
        # M = H A^{-1}  <=>  A^T M^T = H^T
        Mt = np.linalg.solve(np.transpose(A, (0, 2, 1)),
                             np.transpose(H, (0, 2, 1)))
        return np.transpose(Mt, (0, 2, 1))

    g = CallableTensor(chart, tensor_values)
    r = float(radius)
    for _ in range(7):
        cert = Certificate(phi, X, g, Region.ball(p, r))
        if cert.positivity_margin() > 0:
            return cert
        r *= 0.5
    raise NoPositiveRadius(
        f"no positive margin down to radius {r:.3e} around {tuple(p)}")


def construct_certificate_embryonic(B, c: float, A, a1: Expr, a2,
                                    radius: float,
                                    tol: Tolerances = DEFAULT_TOL) -> Certificate:
    """Certificate in birth-death normal form coordinates Z = (w, z):
    phi = <Bw, w>/2 + c z^3/3, X = (A(Z)w, a1(Z) z^2 + a2(Z) w).

    Builds the lower-triangular block tensor g11 = B A^{-1},
    g22 = c / a1, g21 = -g22 a2 A^{-1}, which satisfies g X = grad phi
    identically; the radius is shrunk until the positivity margin is
    positive.
    """
    B = np.asarray(B, dtype=float)
    if B.ndim != 2 or B.shape[0] != B.shape[1]:
        raise NormalFormViolation("B must be a square matrix")
    k = B.shape[0]
    m = k + 1
    if np.max(np.abs(B - B.T)) > 1e-12:
        raise NormalFormViolation("B must be symmetric")
    if abs(np.linalg.det(B)) < 1e-12:
        raise NormalFormViolation("B must be invertible")
    if not c > 0:
        raise NormalFormViolation(f"c must be positive, got {c}")
    A = symmat.as_matrix(A)
    if len(A) != k or any(len(r) != k for r in A):
        raise NormalFormViolation(f"A must be {k}x{k}")
    a2 = tuple(a2)
    if len(a2) != k:
        raise NormalFormViolation(f"a2 must have {k} entries")

    names = tuple(f"w{i+1}" for i in range(k)) + ("z",)
    chart = Chart(names, [-radius] * m, [radius] * m, n=9)
    origin = np.zeros((1, m))
    A0 = np.array([[compiled(e, m).eval_many(origin)[0] for e in row]
                   for row in A])
    if abs(np.linalg.det(A0)) < 1e-12:
        raise NormalFormViolation("A(0) must be invertible")
    a1_0 = compiled(a1, m).eval_many(origin)[0]
    if abs(a1_0 - 1.0) > 1e-9:
        raise NormalFormViolation(f"a1(0) must be 1, got {a1_0}")
    a2_0 = [compiled(e, m).eval_many(origin)[0] for e in a2]
    if max((abs(v) for v in a2_0), default=0.0) > 1e-9:
        raise NormalFormViolation(f"a2(0) must vanish, got {a2_0}")

    from .expr import Var
    w = [Var(i, names[i]) for i in range(k)]
    z = Var(k, "z")
    # phi = <Bw, w>/2 + c z^3 / 3
    quad: Expr = Const(0.0)
    for i in range(k):
        for j in range(k):
            quad = quad + Const(B[i, j]) * w[i] * w[j]
    phi_expr = simplify(Div(quad, Const(2.0)) + Div(Const(float(c)) * Pow(z, 3),
                                                    Const(3.0)))
    phi = ScalarField(chart, phi_expr)
    Aw = symmat.matvec(A, w)
    last = simplify(Mul(a1, Pow(z, 2))
                    + sum((Mul(a2[i], w[i]) for i in range(k)), Const(0.0)))
    X = VectorField(chart, list(Aw) + [last])

    Ainv = symmat.inverse(A)
    Bmat = symmat.const_matrix(B)
    g11 = symmat.matmul(Bmat, Ainv)
    g22 = simplify(Div(Const(float(c)), a1))
    a2row = symmat.matmul((a2,), Ainv)[0]
    g21 = [simplify(Neg(Mul(g22, e))) for e in a2row]
    mat = [list(g11[i]) + [Const(0.0)] for i in range(k)]
    mat.append(list(g21) + [g22])
    g = TensorField(chart, mat)

    r = float(radius)
    for _ in range(7):
        cert = Certificate(phi, X, g, Region.ball(np.zeros(m), r))
        if cert.positivity_margin() > 0:
            return cert
        r *= 0.5
    raise NoPositiveRadius(
        f"no positive margin down to radius {r:.3e} at the origin")


def _regular_tensor(grad_vals, X_vals, pairing):
    """Batched M0 = grad grad^T / dphi(X) + P^T P with P the projection
    onto ker dphi along X; symmetric positive definite wherever
    dphi(X) > 0."""
    n, m = grad_vals.shape
    s = pairing[:, None, None]
    gg = np.einsum("ni,nj->nij", grad_vals, grad_vals)
    P = np.eye(m)[None, :, :] - np.einsum("ni,nj->nij", X_vals, grad_vals) / s
    return gg / s + np.einsum("nki,nkj->nij", P, P)


def construct_certificate_regular(phi: ScalarField, X, p) -> np.ndarray:
    """Pointwise symmetric positive tensor at a regular point: with
    P = Id - X dphi / dphi(X), returns grad grad^T / dphi(X) + P^T P.
    Satisfies M0 X = grad phi exactly."""
    pt = np.atleast_1d(np.asarray(p, dtype=float))[None, :]
    grad = gradient(phi).values(pt)
    Xv = X.values(pt)
    pairing = np.einsum("nj,nj->n", grad, Xv)
    if pairing[0] <= 0:
        raise NotTransverse(f"d phi(X) = {pairing[0]:.3e} <= 0 at "
                            f"{tuple(pt[0])}")
    return _regular_tensor(grad, Xv, pairing)[0]


class BlendTensor:
    """Pointwise convex combination sum_i chi_i(p) M_i(p); each piece is
    only evaluated where its cutoff is positive."""

    def __init__(self, chart: Chart, pieces):
        self.chart = chart
        self.pieces = pieces  # list of (tensor-like, cutoff ScalarField)

    def values(self, pts, nan_on_error: bool = False) -> np.ndarray:
        pts = np.ascontiguousarray(pts, dtype=np.float64)
        m = self.chart.dim
        out = np.zeros((pts.shape[0], m, m))
        for g, chi in self.pieces:
            w = chi.values(pts)
            mask = w > 1e-15
            if mask.any():
                sub = np.ascontiguousarray(pts[mask])
                out[mask] += w[mask, None, None] * g.values(sub)
        return out


def blend_certificates(pieces, tol: Tolerances = DEFAULT_TOL) -> Certificate:
    """Glue local certificates with a partition of unity.

    pieces: list of (Certificate, cutoff ScalarField).  The cutoffs must
    be nonnegative and sum to 1 on the grid; each piece must pass its
    residual/positivity check on the closure of its cutoff's support.
    By convexity the blend's residual is at most the worst piece's and
    its margin at least the best lower bound over supports.
    """
    if not pieces:
        raise ValueError("no pieces to blend")
    phi = pieces[0][0].phi
    X = pieces[0][0].X
    chart = pieces[0][1].chart
    for cert, _chi in pieces[1:]:
        if cert.phi is not phi or cert.X is not X:
            raise ValueError("all pieces must certify the same pair")
    pts = chart.grid_points()
    weights = [chi.values(pts) for _cert, chi in pieces]
    total = np.sum(weights, axis=0)
    if float(np.min(np.asarray(weights))) < -tol.partition_tol:
        i = int(np.argmin(np.min(np.asarray(weights), axis=0)))
        raise PartitionInvalid(f"negative cutoff value at {tuple(pts[i])}")
    if float(np.max(np.abs(total - 1.0))) > tol.partition_tol:
        i = int(np.argmax(np.abs(total - 1.0)))
        raise PartitionInvalid(
            f"cutoffs sum to {total[i]:.12g} at {tuple(pts[i])}")
    for (cert, _chi), w in zip(pieces, weights):
        support = w > 1e-12
        if not support.any():
            continue
        sub = np.ascontiguousarray(pts[support])
        res = cert.residual(sub)
        margin = cert.positivity_margin(sub)
        if res >= tol.cert_residual_rtol * cert.scale(sub) or margin <= 0:
            raise PieceInvalidOnSupport(
                f"piece on region {cert.region.kind} has residual "
                f"{res:.3e}, margin {margin:.3e} on its support")
    g = BlendTensor(chart, [(cert.g, chi) for cert, chi in pieces])
    return Certificate(phi, X, g, Region.chart())


# ---------------------------------------------------------------------------
# Full certification pipeline
# ---------------------------------------------------------------------------

def smoothstep_cutoff(chart: Chart, center, radius: float) -> ScalarField:
    """Quintic cutoff: 1 on the half ball, 0 outside the ball, the
    6t^5 - 15t^4 + 10t^3 ramp in between."""
    from .expr import Var
    center = np.asarray(center, dtype=float)
    d2: Expr = Const(0.0)
    for i in range(chart.dim):
        d2 = d2 + Pow(Sub(Var(i, chart.names[i]), Const(center[i])), 2)
    d = sqrt(d2)
    half = Const(radius / 2.0)
    t = Div(Sub(d, half), half)
    s = (Const(6.0) * Pow(t, 5) - Const(15.0) * Pow(t, 4)
         + Const(10.0) * Pow(t, 3))
    ramp = simplify(Sub(Const(1.0), s))
    inner = SgnCase(Sub(d, Const(float(radius))), ramp, Const(0.0), Const(0.0))
    chi = SgnCase(Sub(d, half), Const(1.0), Const(1.0), inner)
    return ScalarField(chart, chi)


def complement_cutoff(chart: Chart, cutoffs) -> ScalarField:
    expr: Expr = Const(1.0)
    for chi in cutoffs:
        expr = Sub(expr, chi.expr)
    return ScalarField(chart, simplify(expr))


@dataclass
class PointStatus:
    point: CriticalPoint
    status: str
    notes: str = ""


@dataclass
class CertifyResult:
    status: str
    certificate: Certificate | None
    condition1: Verdict
    points: list[PointStatus]
    notes: str = ""


def certify(phi: ScalarField, X, chart: Chart | None = None,
            tol: Tolerances = DEFAULT_TOL) -> CertifyResult:
    """Global certificate search: Morse points get the line-averaged
    local construction, the regular region gets the pointwise symmetric
    tensor, and the parts are blended with quintic cutoffs.

    Embryonic and degenerate points cannot be auto-normalized, so their
    presence makes the result inconclusive (never a false pass).
    Raises Condition1Fails when the base positivity check fails.
    """
    chart = chart or phi.chart
    v1, zm = _condition1(phi, X, chart, tol)
    if v1.status == FAIL:
        raise Condition1Fails(v1)
    if zm.non_isolated:
        return CertifyResult(
            INCONCLUSIVE, None, v1, [],
            notes="critical set is not isolated; pointwise classification "
                  "does not apply")

    crits = [classify(phi, np.asarray(p), tol) for p in zm.phi_zeros]
    statuses: list[PointStatus] = []
    local: list[tuple[Certificate, np.ndarray]] = []
    boundary_gap = 0.5 * min(b - a for a, b in zip(chart.lo, chart.hi))
    for i, cp in enumerate(crits):
        p = np.asarray(cp.location)
        if cp.kind != KIND_MORSE:
            statuses.append(PointStatus(
                cp, INCONCLUSIVE,
                notes=f"{cp.kind} critical point: no automatic local "
                      "certificate; supply one in normal form"))
            continue
        r = boundary_gap
        for j, other in enumerate(crits):
            if j != i:
                r = min(r, 0.45 * float(np.linalg.norm(
                    p - np.asarray(other.location))))
        try:
            cert = construct_certificate_morse(phi, X, p, r, tol)
            statuses.append(PointStatus(cp, PASS))
            local.append((cert, p))
        except (LinearizationNotLyapunov, NoPositiveRadius) as exc:
            statuses.append(PointStatus(cp, INCONCLUSIVE, notes=str(exc)))

    if any(s.status == INCONCLUSIVE for s in statuses):
        return CertifyResult(
            INCONCLUSIVE, None, v1, statuses,
            notes="local certificate missing at one or more critical points")

    cutoffs = [smoothstep_cutoff(chart, p, cert.region.radius)
               for cert, p in local]
    chi0 = complement_cutoff(chart, cutoffs)
    grad = gradient(phi)

    def regular_values(pts):
        gv = grad.values(pts, nan_on_error=True)
        Xv = X.values(pts, nan_on_error=True)
        pairing = np.einsum("nj,nj->n", gv, Xv)
        if np.any(~np.isfinite(pairing) | (pairing <= 0)):
            i = int(np.argmin(pairing))
            raise NotTransverse(
                f"d phi(X) = {pairing[i]:.3e} <= 0 at {tuple(pts[i])}")
        return _regular_tensor(gv, Xv, pairing)

    reg_cert = Certificate(phi, X, CallableTensor(chart, regular_values),
                           Region.chart())
    try:
        pieces = [(reg_cert, chi0)] + [(cert, chi)
                                       for (cert, _p), chi in zip(local, cutoffs)]
        blended = blend_certificates(pieces, tol)
    except (NotTransverse, PartitionInvalid, PieceInvalidOnSupport) as exc:
        return CertifyResult(FAIL, None, v1, statuses, notes=str(exc))
    verdict = blended.verdict(tol)
    return CertifyResult(verdict.status, blended, v1, statuses,
                         notes=verdict.notes)


# ---------------------------------------------------------------------------
# One-dimensional obstruction detector
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ZeroLimits:
    point: float
    left: float | None
    right: float | None
    obstruction: bool
    reason: str


@dataclass
class ForcedTensor1D:
    """In one dimension g = phi' / X is forced off the zeros; one-sided
    limits at each zero decide condition (3)."""
    sample_x: np.ndarray
    sample_g: np.ndarray
    zeros: list[ZeroLimits]

    @property
    def obstruction(self) -> bool:
        return any(z.obstruction for z in self.zeros)


def _one_sided_limit(pairs, tol: Tolerances):
    """Limit of f(r) as r -> 0+ from samples (k, f_k) at r = r0 2^-k,
    by Richardson extrapolation on the longest consecutive tail."""
    if len(pairs) < 2:
        return None, "insufficient finite samples"
    ks = [k for k, _v in pairs]
    end = len(pairs)
    start = end - 1
    while start > 0 and ks[start - 1] == ks[start] - 1:
        start -= 1
    tail = [v for _k, v in pairs[start:end]][-4:]
    if len(tail) < 2:
        return None, "insufficient consecutive samples"
    if abs(tail[-1] - tail[-2]) > tol.limit_tol * max(1.0, abs(tail[-1])):
        return None, "values do not converge"
    work = list(tail)
    while len(work) > 1:
        work = [2.0 * b - a for a, b in zip(work, work[1:])]
    return work[0], ""


def forced_tensor_1d(phi: ScalarField, X, chart: Chart | None = None,
                     tol: Tolerances = DEFAULT_TOL) -> ForcedTensor1D:
    """Sample g = phi'/X off the zeros of X and estimate one-sided
    limits at each zero; differing, nonpositive or divergent limits
    refute condition (3)."""
    from .critical import find_zeros

    chart = chart or phi.chart
    if chart.dim != 1:
        raise NotOneDimensional(f"chart dimension is {chart.dim}")
    zeros = find_zeros(X, chart, tol)
    pts = chart.grid_points()
    phi_p = gradient(phi).values(pts, nan_on_error=True)[:, 0]
    Xv = X.values(pts, nan_on_error=True)[:, 0]
    off = np.isfinite(Xv) & (Xv != 0) & np.isfinite(phi_p)
    sample_x = pts[off, 0]
    sample_g = phi_p[off] / Xv[off]

    results = []
    for z in zeros:
        z0 = float(z[0])
        sides = {}
        for label, sign in (("left", -1.0), ("right", 1.0)):
            pairs = []
            for k in range(tol.annulus_levels + 1):
                x = z0 + sign * tol.annulus_r0 * 2.0 ** (-k)
                q = np.array([[x]])
                fp = gradient(phi).values(q, nan_on_error=True)[0, 0]
                xv = X.values(q, nan_on_error=True)[0, 0]
                if np.isfinite(fp) and np.isfinite(xv) and xv != 0:
                    val = fp / xv
                    if np.isfinite(val):
                        pairs.append((k, float(val)))
            sides[label] = _one_sided_limit(pairs, tol)
        left, lreason = sides["left"]
        right, rreason = sides["right"]
        if left is None or right is None:
            obstruction = True
            reason = ("no finite one-sided limit: "
                      + "; ".join(r for r in (lreason, rreason) if r))
        elif abs(left - right) > tol.limit_tol:
            obstruction = True
            reason = f"one-sided limits differ: {left:.6g} vs {right:.6g}"
        elif min(left, right) <= 0:
            obstruction = True
            reason = f"limit not positive: {min(left, right):.6g}"
        else:
            obstruction = False
            reason = ""
        results.append(ZeroLimits(z0, left, right, obstruction, reason))
    return ForcedTensor1D(sample_x, sample_g, results)

"""Small symbolic matrix algebra over expression entries.

Matrices are tuples of tuples of Expr.  Only what the geometry needs:
transpose, products, determinant/adjugate by cofactor expansion (meant
for m <= 4; entries stay closed-form), and inverse as adjugate/det.
"""

from __future__ import annotations

from .expr import Const, Div, Expr, Mul, Neg, simplify

Matrix = tuple[tuple[Expr, ...], ...]


def as_matrix(rows) -> Matrix:
    return tuple(tuple(e for e in row) for row in rows)


def const_matrix(values) -> Matrix:
    return tuple(tuple(Const(float(v)) for v in row) for row in values)


def identity(m: int) -> Matrix:
    return tuple(tuple(Const(1.0 if i == j else 0.0) for j in range(m))
                 for i in range(m))


def transpose(a: Matrix) -> Matrix:
    return tuple(tuple(a[j][i] for j in range(len(a))) for i in range(len(a[0])))


def matmul(a: Matrix, b: Matrix) -> Matrix:
    n, k, p = len(a), len(b), len(b[0])
    assert len(a[0]) == k
    out = []
    for i in range(n):
        row = []
        for j in range(p):
            acc: Expr = Const(0.0)
            for t in range(k):
                acc = acc + Mul(a[i][t], b[t][j])
            row.append(simplify(acc))
        out.append(tuple(row))
    return tuple(out)


def matvec(a: Matrix, v) -> tuple[Expr, ...]:
    out = []
    for i in range(len(a)):
        acc: Expr = Const(0.0)
        for t in range(len(v)):
            acc = acc + Mul(a[i][t], v[t])
        out.append(simplify(acc))
    return tuple(out)


def scale(a: Matrix, s: Expr) -> Matrix:
    return tuple(tuple(simplify(Mul(s, e)) for e in row) for row in a)


def add(a: Matrix, b: Matrix) -> Matrix:
    return tuple(tuple(simplify(x + y) for x, y in zip(ra, rb))
                 for ra, rb in zip(a, b))


def sub(a: Matrix, b: Matrix) -> Matrix:
    return tuple(tuple(simplify(x - y) for x, y in zip(ra, rb))
                 for ra, rb in zip(a, b))


def neg(a: Matrix) -> Matrix:
    return tuple(tuple(simplify(Neg(e)) for e in row) for row in a)


def _minor(a: Matrix, i: int, j: int) -> Matrix:
    return tuple(tuple(e for cj, e in enumerate(row) if cj != j)
                 for ci, row in enumerate(a) if ci != i)


def det(a: Matrix) -> Expr:
    m = len(a)
    if m == 1:
        return simplify(a[0][0])
    if m == 2:
        return simplify(Mul(a[0][0], a[1][1]) - Mul(a[0][1], a[1][0]))
    acc: Expr = Const(0.0)
    for j in range(m):
        term = Mul(a[0][j], det(_minor(a, 0, j)))
        acc = acc + (Neg(term) if j % 2 else term)
    return simplify(acc)


def adjugate(a: Matrix) -> Matrix:
    m = len(a)
    if m == 1:
        return ((Const(1.0),),)
    cof = []
    for i in range(m):
        row = []
        for j in range(m):
            c = det(_minor(a, i, j))
            row.append(simplify(Neg(c)) if (i + j) % 2 else c)
        cof.append(tuple(row))
    return transpose(tuple(cof))


def inverse(a: Matrix) -> Matrix:
    """adj(a)/det(a); the determinant is left symbolic, so the result is
    exact wherever it is defined."""
    d = det(a)
    adj = adjugate(a)
    if isinstance(d, Const):
        if d.value == 0.0:
            raise ZeroDivisionError("singular symbolic matrix")
        return tuple(tuple(simplify(Div(e, d)) for e in row) for row in adj)
    return tuple(tuple(simplify(Div(e, d)) for e in row) for row in adj)


def is_const_matrix(a: Matrix) -> bool:
    return all(isinstance(e, Const) for row in a for e in row)

"""Numeric evaluation backend.

Expressions are compiled once into a flat instruction tape (a stack
program; each sgncase branch is its own sub-tape so unselected branches
are never executed).  Two executors share the tape format:

* ``gradcert._tape`` — Cython kernel, built at install time;
* ``gradcert._tape_py`` — pure NumPy fallback.

The compiled kernel is preferred; set ``GRADCERT_PURE_PY=1`` to force
the fallback.  ``GRADCERT_THREADS`` caps parallelism of large batch
evaluations (default 1); results are independent of the thread count.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .expr import (Add, Call, Const, Div, EvalError, Expr, Mul, Neg, Pow,
                   SgnCase, Sub, Var)

OP_CONST = 0
OP_VAR = 1
OP_ADD = 2
OP_SUB = 3
OP_MUL = 4
OP_DIV = 5
OP_NEG = 6
OP_POW = 7
OP_EXP = 8
OP_SIN = 9
OP_COS = 10
OP_SQRT = 11
OP_LN = 12
OP_SGNCASE = 13

_FUNC_OPS = {"exp": OP_EXP, "sin": OP_SIN, "cos": OP_COS, "sqrt": OP_SQRT,
             "ln": OP_LN}

ERR_NONE = 0
ERR_DIV = 1
ERR_DOMAIN = 2
_ERR_KINDS = {ERR_DIV: EvalError.DIV_BY_ZERO, ERR_DOMAIN: EvalError.DOMAIN}


@dataclass(frozen=True)
class Program:
    """Flattened expression: concatenated sub-tapes plus a constant pool.

    Tape t occupies code[starts[t]:starts[t+1]]; tape 0 is the entry
    point.  depths[t] is the stack need of tape t alone; scratch for a
    full evaluation is bounded by sum(depths).
    """

    code: np.ndarray
    starts: np.ndarray
    depths: np.ndarray
    consts: np.ndarray
    nvars: int


def compile_expr(e: Expr, nvars: int) -> Program:
    tapes: list[list[int]] = [[]]
    depths: list[int] = [0]
    consts: list[float] = []

    def emit(tid: int, *vals: int):
        tapes[tid].extend(vals)

    def walk(e: Expr, tid: int) -> int:
        if isinstance(e, Const):
            consts.append(float(e.value))
            emit(tid, OP_CONST, len(consts) - 1)
            return 1
        if isinstance(e, Var):
            if e.index >= nvars:
                raise ValueError(
                    f"variable {e.name!r} (index {e.index}) exceeds chart "
                    f"dimension {nvars}")
            emit(tid, OP_VAR, e.index)
            return 1
        if isinstance(e, (Add, Sub, Mul, Div)):
            d1 = walk(e.left, tid)
            d2 = walk(e.right, tid)
            op = {Add: OP_ADD, Sub: OP_SUB, Mul: OP_MUL, Div: OP_DIV}[type(e)]
            emit(tid, op)
            return max(d1, d2 + 1)
        if isinstance(e, Neg):
            d = walk(e.arg, tid)
            emit(tid, OP_NEG)
            return d
        if isinstance(e, Pow):
            d = walk(e.base, tid)
            emit(tid, OP_POW, int(e.exponent))
            return d
        if isinstance(e, Call):
            d = walk(e.arg, tid)
            emit(tid, _FUNC_OPS[e.func])
            return d
        if isinstance(e, SgnCase):
            ids = []
            for sub in (e.test, e.negative, e.zero, e.positive):
                tapes.append([])
                depths.append(0)
                sid = len(tapes) - 1
                depths[sid] = walk(sub, sid)
                ids.append(sid)
            emit(tid, OP_SGNCASE, *ids)
            return 1
        raise TypeError(f"not an expression node: {e!r}")

    depths[0] = walk(e, 0)
    code = []
    starts = [0]
    for t in tapes:
        code.extend(t)
        starts.append(len(code))
    if not consts:
        consts = [0.0]
    return Program(
        code=np.asarray(code, dtype=np.int32),
        starts=np.asarray(starts, dtype=np.int32),
        depths=np.asarray(depths, dtype=np.int32),
        consts=np.asarray(consts, dtype=np.float64),
        nvars=nvars,
    )


# Executor selection happens once at import.
if os.environ.get("GRADCERT_PURE_PY"):
    from . import _tape_py as _impl
    BACKEND_NAME = "pure"
else:
    try:
        from . import _tape as _impl  # type: ignore[attr-defined]
        BACKEND_NAME = "compiled"
    except ImportError:
        from . import _tape_py as _impl
        BACKEND_NAME = "pure"


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("GRADCERT_THREADS", "1")))
    except ValueError:
        return 1


class CompiledExpr:
    """An expression bound to an executor, evaluable over point batches."""

    def __init__(self, e: Expr, nvars: int):
        self.program = compile_expr(e, nvars)
        self.nvars = nvars

    def eval_many(self, pts, nan_on_error: bool = False) -> np.ndarray:
        """Evaluate over an (N, m) batch.  With nan_on_error, failing
        points yield NaN; otherwise the first failing point (lowest
        index) raises EvalError."""
        pts = np.ascontiguousarray(pts, dtype=np.float64)
        if pts.ndim != 2:
            raise ValueError("points must be a 2-d array")
        n = pts.shape[0]
        if pts.shape[1] < self.nvars:
            raise ValueError(
                f"points have dimension {pts.shape[1]}, program needs "
                f"{self.nvars}")
        out = np.empty(n, dtype=np.float64)
        if n == 0:
            return out
        nthreads = _threads()
        if nthreads > 1 and n >= 4096:
            self._eval_chunked(pts, out, nan_on_error, nthreads)
            return out
        kind, idx = _impl.run_many(
            self.program.code, self.program.starts, self.program.depths,
            self.program.consts, pts, out, nan_on_error)
        if kind != ERR_NONE:
            raise EvalError(_ERR_KINDS[kind], at=tuple(pts[idx]))
        return out

    def _eval_chunked(self, pts, out, nan_on_error, nthreads):
        from concurrent.futures import ThreadPoolExecutor

        n = pts.shape[0]
        bounds = np.linspace(0, n, nthreads + 1).astype(int)
        chunks = [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])
                  if b > a]

        def run(span):
            a, b = span
            return span, _impl.run_many(
                self.program.code, self.program.starts, self.program.depths,
                self.program.consts, pts[a:b], out[a:b], nan_on_error)

        first_err = None
        with ThreadPoolExecutor(max_workers=nthreads) as pool:
            for (a, _b), (kind, idx) in pool.map(run, chunks):
                if kind != ERR_NONE:
                    g = a + idx
                    if first_err is None or g < first_err[1]:
                        first_err = (kind, g)
        if first_err is not None:
            kind, g = first_err
            raise EvalError(_ERR_KINDS[kind], at=tuple(pts[g]))

    def eval_one(self, pt) -> float:
        pt = np.atleast_1d(np.asarray(pt, dtype=np.float64))
        if pt.shape[0] < self.nvars:
            raise ValueError(
                f"point has dimension {pt.shape[0]}, program needs "
                f"{self.nvars}")
        return float(self.eval_many(pt[None, :])[0])


def compiled(e: Expr, nvars: int) -> CompiledExpr:
    return CompiledExpr(e, nvars)

"""Pure NumPy tape executor (fallback for the compiled kernel).

Interprets the same instruction format as the Cython kernel, but
vectorized over the point batch.  sgncase branches are evaluated only on
the subset of points that select them, preserving lazy branch semantics.
Error lanes are NaN-poisoned and the first (lowest-index) error is
reported to the caller.
"""

from __future__ import annotations

import numpy as np

_OP_CONST = 0
_OP_VAR = 1
_OP_ADD = 2
_OP_SUB = 3
_OP_MUL = 4
_OP_DIV = 5
_OP_NEG = 6
_OP_POW = 7
_OP_EXP = 8
_OP_SIN = 9
_OP_COS = 10
_OP_SQRT = 11
_OP_LN = 12
_OP_SGNCASE = 13

_ERR_DIV = 1
_ERR_DOMAIN = 2


def _mark(err_kind, sel, mask, kind):
    lanes = sel[mask]
    fresh = err_kind[lanes] == 0
    err_kind[lanes[fresh]] = kind


def _run_tape(code, starts, consts, pts, tid, sel, err_kind):
    stack: list[np.ndarray] = []
    i = int(starts[tid])
    end = int(starts[tid + 1])
    n = sel.shape[0]
    while i < end:
        op = int(code[i])
        i += 1
        if op == _OP_CONST:
            stack.append(np.full(n, consts[int(code[i])]))
            i += 1
        elif op == _OP_VAR:
            stack.append(pts[sel, int(code[i])].copy())
            i += 1
        elif op == _OP_ADD:
            b = stack.pop()
            stack[-1] = stack[-1] + b
        elif op == _OP_SUB:
            b = stack.pop()
            stack[-1] = stack[-1] - b
        elif op == _OP_MUL:
            b = stack.pop()
            stack[-1] = stack[-1] * b
        elif op == _OP_DIV:
            b = stack.pop()
            a = stack[-1]
            bad = b == 0.0
            if bad.any():
                _mark(err_kind, sel, bad, _ERR_DIV)
            res = np.full(n, np.nan)
            np.divide(a, b, out=res, where=~bad)
            stack[-1] = res
        elif op == _OP_NEG:
            stack[-1] = -stack[-1]
        elif op == _OP_POW:
            expo = int(code[i])
            i += 1
            a = stack[-1]
            if expo == 0:
                res = np.ones(n)
                res[np.isnan(a)] = np.nan
                stack[-1] = res
            elif expo < 0:
                bad = a == 0.0
                if bad.any():
                    _mark(err_kind, sel, bad, _ERR_DIV)
                res = np.full(n, np.nan)
                np.power(a, expo, out=res, where=~bad)
                stack[-1] = res
            else:
                stack[-1] = np.power(a, expo)
        elif op == _OP_EXP:
            stack[-1] = np.exp(stack[-1])
        elif op == _OP_SIN:
            stack[-1] = np.sin(stack[-1])
        elif op == _OP_COS:
            stack[-1] = np.cos(stack[-1])
        elif op == _OP_SQRT:
            a = stack[-1]
            bad = a < 0.0
            if bad.any():
                _mark(err_kind, sel, bad, _ERR_DOMAIN)
            res = np.full(n, np.nan)
            np.sqrt(a, out=res, where=~bad)
            stack[-1] = res
        elif op == _OP_LN:
            a = stack[-1]
            bad = a <= 0.0
            if bad.any():
                _mark(err_kind, sel, bad, _ERR_DOMAIN)
            res = np.full(n, np.nan)
            np.log(a, out=res, where=~bad)
            stack[-1] = res
        elif op == _OP_SGNCASE:
            t_id, neg_id, zero_id, pos_id = (int(code[i]), int(code[i + 1]),
                                             int(code[i + 2]), int(code[i + 3]))
            i += 4
            t = _run_tape(code, starts, consts, pts, t_id, sel, err_kind)
            res = np.full(n, np.nan)
            for branch, mask in ((neg_id, t < 0), (zero_id, t == 0),
                                 (pos_id, t > 0)):
                if mask.any():
                    res[mask] = _run_tape(code, starts, consts, pts, branch,
                                          sel[mask], err_kind)
            stack.append(res)
        else:
            raise RuntimeError(f"bad opcode {op}")
    return stack[-1]


def run_many(code, starts, depths, consts, pts, out, nan_on_error):
    """Evaluate the program over pts into out.  Returns (err_kind,
    err_index): (0, -1) on success; in strict mode the first failing
    point, with out contents unspecified past it."""
    n = pts.shape[0]
    err_kind = np.zeros(n, dtype=np.int8)
    with np.errstate(all="ignore"):
        out[:] = _run_tape(code, starts, consts, pts, 0,
                           np.arange(n), err_kind)
    bad = err_kind != 0
    if bad.any():
        if not nan_on_error:
            idx = int(np.argmax(bad))
            return int(err_kind[idx]), idx
        out[bad] = np.nan
    return 0, -1

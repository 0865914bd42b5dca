# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled tape executor: scalar stack machine run point by point.

Shares the instruction format produced by backend.compile_expr.  Each
sgncase sub-tape is evaluated in its own stack frame carved from a
shared scratch buffer, so only the selected branch ever runs.
"""

from libc.math cimport NAN, cos, exp, isnan, log, pow, sin, sqrt

import numpy as np

DEF OP_CONST = 0
DEF OP_VAR = 1
DEF OP_ADD = 2
DEF OP_SUB = 3
DEF OP_MUL = 4
DEF OP_DIV = 5
DEF OP_NEG = 6
DEF OP_POW = 7
DEF OP_EXP = 8
DEF OP_SIN = 9
DEF OP_COS = 10
DEF OP_SQRT = 11
DEF OP_LN = 12
DEF OP_SGNCASE = 13

DEF ERR_DIV = 1
DEF ERR_DOMAIN = 2


cdef double _eval_tape(int tid, const int* code, const int* starts,
                       const int* depths, const double* consts,
                       const double* pt, double* stack, int* err) noexcept nogil:
    cdef Py_ssize_t i = starts[tid]
    cdef Py_ssize_t end = starts[tid + 1]
    cdef int sp = 0
    cdef int op, arg
    cdef double x, y

    while i < end:
        op = code[i]
        i += 1
        if op == OP_CONST:
            stack[sp] = consts[code[i]]
            i += 1
            sp += 1
        elif op == OP_VAR:
            stack[sp] = pt[code[i]]
            i += 1
            sp += 1
        elif op == OP_ADD:
            sp -= 1
            stack[sp - 1] = stack[sp - 1] + stack[sp]
        elif op == OP_SUB:
            sp -= 1
            stack[sp - 1] = stack[sp - 1] - stack[sp]
        elif op == OP_MUL:
            sp -= 1
            stack[sp - 1] = stack[sp - 1] * stack[sp]
        elif op == OP_DIV:
            sp -= 1
            y = stack[sp]
            if y == 0.0:
                err[0] = ERR_DIV
                return NAN
            stack[sp - 1] = stack[sp - 1] / y
        elif op == OP_NEG:
            stack[sp - 1] = -stack[sp - 1]
        elif op == OP_POW:
            arg = code[i]
            i += 1
            x = stack[sp - 1]
            if arg == 0:
                if not isnan(x):
                    stack[sp - 1] = 1.0
            elif x == 0.0 and arg < 0:
                err[0] = ERR_DIV
                return NAN
            else:
                stack[sp - 1] = pow(x, <double> arg)
        elif op == OP_EXP:
            stack[sp - 1] = exp(stack[sp - 1])
        elif op == OP_SIN:
            stack[sp - 1] = sin(stack[sp - 1])
        elif op == OP_COS:
            stack[sp - 1] = cos(stack[sp - 1])
        elif op == OP_SQRT:
            x = stack[sp - 1]
            if x < 0.0:
                err[0] = ERR_DOMAIN
                return NAN
            stack[sp - 1] = sqrt(x)
        elif op == OP_LN:
            x = stack[sp - 1]
            if x <= 0.0:
                err[0] = ERR_DOMAIN
                return NAN
            stack[sp - 1] = log(x)
        elif op == OP_SGNCASE:
            # args: test, negative, zero, positive sub-tape ids
            x = _eval_tape(code[i], code, starts, depths, consts, pt,
                           stack + depths[tid], err)
            if err[0] != 0:
                return NAN
            if isnan(x):
                stack[sp] = NAN
            else:
                if x < 0.0:
                    arg = code[i + 1]
                elif x == 0.0:
                    arg = code[i + 2]
                else:
                    arg = code[i + 3]
                stack[sp] = _eval_tape(arg, code, starts, depths, consts, pt,
                                       stack + depths[tid], err)
                if err[0] != 0:
                    return NAN
            i += 4
            sp += 1
    return stack[0]


def run_many(int[::1] code, int[::1] starts, int[::1] depths,
             double[::1] consts, double[:, ::1] pts, double[::1] out,
             bint nan_on_error):
    """Evaluate the program over pts into out.  Returns (err_kind,
    err_index): (0, -1) on success; in strict mode the first failing
    point."""
    cdef Py_ssize_t n = pts.shape[0]
    if n == 0:
        return 0, -1
    cdef Py_ssize_t total = 0
    cdef Py_ssize_t k
    for k in range(depths.shape[0]):
        total += depths[k]
    scratch_arr = np.empty(max(total, 1), dtype=np.float64)
    cdef double[::1] scratch = scratch_arr
    cdef int err = 0
    cdef int kind = 0
    cdef Py_ssize_t i, idx = -1
    cdef double v
    with nogil:
        for i in range(n):
            err = 0
            v = _eval_tape(0, &code[0], &starts[0], &depths[0], &consts[0],
                           &pts[i, 0], &scratch[0], &err)
            if err != 0:
                if nan_on_error:
                    out[i] = NAN
                else:
                    kind = err
                    idx = i
                    break
            else:
                out[i] = v
    return kind, idx

"""Small expression grammar used by JSON configs.

Expressions are polynomial/trigonometric strings such as ``"y+y^3"`` or
``"(1+0.3*sin(x1))^-2"``. They are parsed with sympy into a restricted
namespace and compiled to numpy callables, together with the derivatives
the callers need.
"""

from __future__ import annotations

import re

import numpy as np
import sympy as sp
from sympy.parsing.sympy_parser import (
    convert_xor,
    implicit_multiplication_application,
    parse_expr,
    standard_transformations,
)

from .errors import DomainError

_FUNCS = {
    "sin": sp.sin,
    "cos": sp.cos,
    "tan": sp.tan,
    "exp": sp.exp,
    "log": sp.log,
    "sqrt": sp.sqrt,
    "sinh": sp.sinh,
    "cosh": sp.cosh,
    "tanh": sp.tanh,
    "atan": sp.atan,
    "abs": sp.Abs,
    "sign": sp.sign,
    "pi": sp.pi,
}
_TRANSFORMS = standard_transformations + (convert_xor, implicit_multiplication_application)


def variables(prefix, n):
    """Symbols ``prefix1..prefixn``; the bare ``prefix`` aliases ``prefix1`` when n = 1."""
    syms = [sp.Symbol(f"{prefix}{k + 1}", real=True) for k in range(n)]
    names = {str(s): s for s in syms}
    if n == 1:
        names[prefix] = syms[0]
    return syms, names


def parse(text, names):
    """Parse ``text`` allowing only the given symbol names and the known functions."""
    if not isinstance(text, str):
        text = str(text)
    local = dict(_FUNCS)
    local.update(names)
    # implicit multiplication would read an unknown name such as "y0" as y*0
    unknown = sorted({w for w in re.findall(r"(?<![0-9.])[A-Za-z_][A-Za-z_0-9]*", text) if w not in local})
    if unknown:
        raise DomainError(f"unknown names {unknown} in expression {text!r}")
    try:
        expr = parse_expr(text, local_dict=local, transformations=_TRANSFORMS, evaluate=True)
    except Exception as exc:  # sympy raises a zoo of types here
        raise DomainError(f"cannot parse expression {text!r}: {exc}") from exc
    unknown = {str(s) for s in expr.free_symbols} - set(names)
    if unknown:
        raise DomainError(f"unknown names {sorted(unknown)} in expression {text!r}")
    return expr


def _lambdify(syms, expr):
    f = sp.lambdify(syms, expr, modules="numpy")

    def call(*args):
        out = f(*args)
        if np.ndim(out) == 0 and args and np.ndim(args[0]) > 0:
            out = np.full(np.shape(args[0]), out, dtype=float)
        return out

    return call


def vector_field_with_derivatives(exprs, prefix="y"):
    """Compile a map ``R^n -> R^n`` given by expressions with its Jacobian and Hessian.

    Returns callables on points of shape ``(..., n)``: ``f -> (..., n)``,
    ``jac -> (..., n, n)``, ``hess -> (..., n, n, n)``.
    """
    if isinstance(exprs, str):
        exprs = [exprs]
    n = len(exprs)
    syms, names = variables(prefix, n)
    F = [parse(e, names) for e in exprs]
    J = [[sp.diff(f, s) for s in syms] for f in F]
    H = [[[sp.diff(f, a, b) for b in syms] for a in syms] for f in F]
    f_num = [_lambdify(syms, e) for e in F]
    j_num = [[_lambdify(syms, e) for e in row] for row in J]
    h_num = [[[_lambdify(syms, e) for e in r2] for r2 in r1] for r1 in H]

    def unpack(x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 0:
            x = x[None]
        return [x[..., k] for k in range(n)]

    def _bcast(v, like):
        return np.broadcast_to(np.asarray(v, dtype=float), np.shape(like))

    def f(x):
        a = unpack(x)
        return np.stack([_bcast(g(*a), a[0]) for g in f_num], axis=-1)

    def jac(x):
        a = unpack(x)
        return np.stack([np.stack([_bcast(g(*a), a[0]) for g in row], -1) for row in j_num], -2)

    def hess(x):
        a = unpack(x)
        return np.stack(
            [np.stack([np.stack([_bcast(g(*a), a[0]) for g in r2], -1) for r2 in r1], -2) for r1 in h_num],
            -3,
        )

    f.exprs = F
    return f, jac, hess


def scalar_in(text, prefixes_and_sizes):
    """Compile a scalar expression in several variable groups, e.g. ``[("y", 2), ("eh", 2)]``.

    The callable takes one array of shape ``(..., size)`` per group.
    """
    groups = []
    names = {}
    for prefix, size in prefixes_and_sizes:
        syms, nm = variables(prefix, size)
        groups.append(syms)
        names.update(nm)
    expr = parse(text, names)
    flat = [s for g in groups for s in g]
    fn = _lambdify(flat, expr)

    def call(*arrays):
        args = []
        shape = None
        for arr, (prefix, size) in zip(arrays, prefixes_and_sizes):
            arr = np.asarray(arr, dtype=float)
            if arr.ndim == 0:
                arr = arr[None]
            shape = np.broadcast_shapes(shape, arr.shape[:-1]) if shape is not None else arr.shape[:-1]
            args.extend(arr[..., k] for k in range(size))
        out = np.asarray(fn(*args))
        return np.broadcast_to(out, shape).astype(complex if np.iscomplexobj(out) else float)

    call.expr = expr
    return call


def metric_hamiltonian(metric, n=None):
    """Sympy data for ``h(x, xi) = sqrt(xi^T g(x)^-1 xi)`` from a matrix of expression strings."""
    rows = [list(r) for r in metric]
    n = n or len(rows)
    xs, names = variables("x", n)
    # plain symbols keep sqrt(p**2) from collapsing to Abs
    ps = [sp.Symbol(f"p{k + 1}") for k in range(n)]
    G = sp.Matrix([[parse(str(e), names) for e in r] for r in rows])
    if G.shape != (n, n):
        raise DomainError(f"metric must be {n}x{n}")
    Ginv = sp.simplify(G.inv()) if not G.is_diagonal() else sp.diag(*[1 / G[k, k] for k in range(n)])
    p = sp.Matrix(ps)
    h = sp.sqrt((p.T * Ginv * p)[0, 0])
    return xs, ps, h

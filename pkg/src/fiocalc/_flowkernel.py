"""Compiled implicit-midpoint integrator for Hamiltonians given by sympy expressions."""

from __future__ import annotations

import math

import numba
import numpy as np
import sympy as sp
from sympy.printing.pycode import PythonCodePrinter


def compile_grad_hess(zs, h):
    """njit function ``f(z, g, H)`` filling the gradient and Hessian of ``h`` at ``z``."""
    m = len(zs)
    grad = [sp.diff(h, s) for s in zs]
    hess = [sp.diff(grad[i], zs[j]) for i in range(m) for j in range(m)]
    repl, reduced = sp.cse(grad + hess)
    pr = PythonCodePrinter({"fully_qualified_modules": True})
    lines = ["def _gh(z, g, H):"]
    for k, s in enumerate(zs):
        lines.append(f"    {s} = z[{k}]")
    for sym, expr in repl:
        lines.append(f"    {sym} = {pr.doprint(expr)}")
    for i in range(m):
        lines.append(f"    g[{i}] = {pr.doprint(reduced[i])}")
    for i in range(m):
        for j in range(m):
            lines.append(f"    H[{i}, {j}] = {pr.doprint(reduced[m + i * m + j])}")
    ns = {"math": math}
    exec("\n".join(lines), ns)  # noqa: S102 - source generated from parsed sympy expressions
    return numba.njit(cache=False)(ns["_gh"])


@numba.njit(cache=False)
def _midpoint(gh, z0, dt, steps, tol, bounds, n):
    m = z0.shape[0]
    d = 2 * n
    zout = np.empty((m, d))
    Zout = np.empty((m, d, d))
    exit_step = -1
    g = np.empty(d)
    H = np.empty((d, d))
    eye = np.eye(d)
    Om = np.zeros((d, d))
    for i in range(n):
        Om[i, n + i] = 1.0
        Om[n + i, i] = -1.0
    for b in range(m):
        z = z0[b].copy()
        Z = eye.copy()
        for k in range(steps):
            gh(z, g, H)
            z1 = z + dt * (Om @ g)
            for _ in range(30):
                mid = 0.5 * (z + z1)
                gh(mid, g, H)
                G = z1 - z - dt * (Om @ g)
                DG = eye - 0.5 * dt * (Om @ H)
                step = np.linalg.solve(DG, G)
                z1 = z1 - step
                if np.max(np.abs(step)) <= tol * (1.0 + np.max(np.abs(z1))):
                    break
            mid = 0.5 * (z + z1)
            gh(mid, g, H)
            K = 0.5 * dt * (Om @ H)
            Z = np.ascontiguousarray(np.linalg.solve(eye - K, (eye + K) @ Z))
            z = z1
            if bounds > 0.0 and np.max(np.abs(z[:n])) > bounds:
                if exit_step < 0 or k + 1 < exit_step:
                    exit_step = k + 1
                break
        zout[b] = z
        Zout[b] = Z
    return zout, Zout, exit_step

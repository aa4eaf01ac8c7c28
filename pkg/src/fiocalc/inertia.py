"""Inertia of real symmetric matrices and the argument of det+ for complex
symmetric matrices with nonnegative real part."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, RefinementError

DEFAULT_RTOL = 1e-9


@dataclass(frozen=True)
class Inertia:
    kappa_plus: int
    kappa_minus: int
    rank: int
    sgn: int

    def __iter__(self):
        return iter((self.kappa_plus, self.kappa_minus, self.rank, self.sgn))


def default_tol(S, rtol=DEFAULT_RTOL):
    """Absolute eigenvalue threshold ``rtol * max(1, ||S||)``."""
    S = np.asarray(S)
    if S.size == 0:
        return rtol
    return rtol * max(1.0, float(np.linalg.norm(S, 2)))


def asymmetry(S):
    S = np.asarray(S)
    return float(np.max(np.abs(S - S.T))) if S.size else 0.0


def inertia(S, tol=None):
    """Count positive, negative and zero eigenvalues of a real symmetric matrix.

    Eigenvalues with ``|lambda| <= tol`` are counted into the kernel.

    Raises
    ------
    DomainError
        If ``S`` is not symmetric to within ``tol``.
    """
    S = np.atleast_2d(np.asarray(S, dtype=float))
    if S.shape[0] != S.shape[1]:
        raise DomainError(f"inertia needs a square matrix, got shape {S.shape}")
    if tol is None:
        tol = default_tol(S)
    asym = asymmetry(S)
    if asym > tol:
        raise DomainError(f"matrix is not symmetric (max |S - S^T| = {asym:.3e})")
    ev = np.linalg.eigvalsh(0.5 * (S + S.T))
    kp = int(np.sum(ev > tol))
    km = int(np.sum(ev < -tol))
    return Inertia(kp, km, kp + km, kp - km)


def kappa_plus(S, tol=None):
    return inertia(S, tol).kappa_plus


def kappa_minus(S, tol=None):
    return inertia(S, tol).kappa_minus


def signature(S, tol=None):
    return inertia(S, tol).sgn


def rank_sym(S, tol=None):
    return inertia(S, tol).rank


def numerical_rank(M, tol=None):
    """Rank of a general matrix from its singular values."""
    M = np.atleast_2d(np.asarray(M))
    if M.size == 0:
        return 0
    sv = np.linalg.svd(M, compute_uv=False)
    if tol is None:
        tol = DEFAULT_RTOL * max(1.0, float(sv[0]))
    return int(np.sum(sv > tol))


def kernel_projector(C, tol=None):
    """Orthogonal projector onto the numerical kernel of ``C``."""
    C = np.atleast_2d(np.asarray(C, dtype=complex))
    n = C.shape[0]
    _, sv, vh = np.linalg.svd(C)
    if tol is None:
        tol = DEFAULT_RTOL * max(1.0, float(sv[0]) if n else 1.0)
    null = vh[sv <= tol].conj().T
    return null @ null.conj().T


def _split(C):
    C = np.atleast_2d(np.asarray(C, dtype=complex))
    return C.real, C.imag


def _check_det_plus_domain(C, tol):
    C1, C2 = _split(C)
    scale = max(1.0, float(np.linalg.norm(C, 2)))
    if tol is None:
        tol = DEFAULT_RTOL * scale
    for part, name in ((C1, "real"), (C2, "imaginary")):
        a = asymmetry(part)
        if a > tol:
            raise DomainError(f"{name} part is not symmetric (asymmetry {a:.3e})")
    lo = float(np.min(np.linalg.eigvalsh(0.5 * (C1 + C1.T)))) if C1.size else 0.0
    if lo < -tol:
        raise DomainError(
            f"real part is not positive semidefinite (min eigenvalue {lo:.3e})"
        )
    return tol


def det_plus(C, tol=None):
    """``det(C + Pi_C)`` with ``Pi_C`` the projector onto ``ker C``."""
    C = np.atleast_2d(np.asarray(C, dtype=complex))
    tol = _check_det_plus_domain(C, tol)
    return complex(np.linalg.det(C + kernel_projector(C, tol)))


def det_plus_arg(C, tol=None):
    """Branch-resolved argument of ``det+ C`` for ``C = C1 + i C2``, ``C1 >= 0``.

    Every eigenvalue of ``C + Pi_C`` has nonnegative real part, so the sum of
    their principal arguments lies in ``[-n pi/2, n pi/2]``, vanishes when
    ``C2 = 0`` and is continuous on matrices with a fixed kernel.
    """
    C = np.atleast_2d(np.asarray(C, dtype=complex))
    if C.size == 0:
        return 0.0
    tol = _check_det_plus_domain(C, tol)
    ev = np.linalg.eigvals(C + kernel_projector(C, tol))
    if np.min(ev.real) < -10 * tol:
        raise DomainError(
            f"eigenvalue with negative real part {np.min(ev.real):.3e} in det+"
        )
    # eigenvalues on the imaginary axis: clamp rounding noise to +0
    ev = np.where(np.abs(ev.real) <= 10 * tol, 0.0 + 1j * ev.imag, ev)
    return float(np.sum(np.angle(ev)))


def det_plus_arg_continued(path, tol=None, max_step=np.pi / 2):
    """Continuous branch of ``arg det+ C(s)`` along a sampled matrix curve.

    The branch is anchored at ``det_plus_arg(path[0])`` and then follows the
    increments of ``arg det+``.

    Raises
    ------
    RefinementError
        If an increment reaches ``max_step``; carries the offending index pair.
    """
    mats = [np.atleast_2d(np.asarray(C, dtype=complex)) for C in path]
    if not mats:
        return np.zeros(0)
    out = np.empty(len(mats))
    out[0] = det_plus_arg(mats[0], tol)
    prev = det_plus(mats[0], tol)
    for k in range(1, len(mats)):
        cur = det_plus(mats[k], tol)
        step = float(np.angle(cur / prev))
        if abs(step) >= max_step:
            raise RefinementError(
                f"arg det+ increment {step:.3f} rad between samples {k - 1} and {k}",
                interval=(k - 1, k),
            )
        out[k] = out[k - 1] + step
        prev = cur
    return out

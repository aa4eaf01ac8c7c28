"""Lagrangian subspaces of the tangent space to T*M at a point.

A subspace is stored as a 2n x n frame ``(B; C)``: its vectors are
``B w . d/dx + C w . d/dxi``. The vertical subspace is ``B = 0, C = I``, the
horizontal subspace of the current chart is ``B = I, C = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import inertia as _in
from .errors import DomainError, TransversalityError


@dataclass(frozen=True)
class BasePoint:
    x: np.ndarray
    xi: np.ndarray
    chart_id: str = "default"

    def __post_init__(self):
        object.__setattr__(self, "x", np.atleast_1d(np.asarray(self.x, dtype=float)))
        object.__setattr__(self, "xi", np.atleast_1d(np.asarray(self.xi, dtype=float)))

    @property
    def n(self):
        return self.x.shape[0]

    def same_as(self, other, tol=1e-9):
        return (
            self.chart_id == other.chart_id
            and np.allclose(self.x, other.x, atol=tol, rtol=tol)
            and np.allclose(self.xi, other.xi, atol=tol, rtol=tol)
        )


@dataclass(frozen=True)
class LagrangianFrame:
    B: np.ndarray
    C: np.ndarray
    base: BasePoint | None = None

    def __post_init__(self):
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        C = np.atleast_2d(np.asarray(self.C, dtype=float))
        if B.shape != C.shape or B.shape[0] != B.shape[1]:
            raise DomainError(f"frame blocks must be square and equal, got {B.shape}, {C.shape}")
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)

    @property
    def n(self):
        return self.B.shape[0]

    @property
    def stacked(self):
        return np.vstack([self.B, self.C])

    @classmethod
    def vertical(cls, n, base=None):
        return cls(np.zeros((n, n)), np.eye(n), base)

    @classmethod
    def horizontal(cls, n, base=None):
        return cls(np.eye(n), np.zeros((n, n)), base)

    @classmethod
    def from_graph(cls, A, orientation="over-vertical", base=None):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        eye = np.eye(A.shape[0])
        if Orientation(orientation) is Orientation.OVER_VERTICAL:
            return cls(A, eye, base)
        return cls(eye, A, base)


class Orientation(str, Enum):
    # L = {A v . d/dx + v . d/dxi}: transversal to the chart horizontal
    OVER_VERTICAL = "over-vertical"
    # L = {w . d/dx + A w . d/dxi}: transversal to the vertical
    OVER_HORIZONTAL = "over-horizontal"


@dataclass(frozen=True)
class GraphForm:
    A: np.ndarray
    orientation: Orientation = Orientation.OVER_VERTICAL

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        if _in.asymmetry(A) > _in.default_tol(A) * 1e3:
            raise DomainError(f"graph matrix is not symmetric (asymmetry {_in.asymmetry(A):.3e})")
        object.__setattr__(self, "A", 0.5 * (A + A.T))
        object.__setattr__(self, "orientation", Orientation(self.orientation))

    def frame(self, base=None):
        return LagrangianFrame.from_graph(self.A, self.orientation, base)


@dataclass
class FrameReport:
    valid: bool
    asymmetry: float
    rank_defect: int
    details: dict = field(default_factory=dict)


def _frame_tol(F, tol):
    if tol is not None:
        return tol
    return _in.DEFAULT_RTOL * max(1.0, float(np.linalg.norm(F.stacked, 2)))


def validate_frame(F, tol=None):
    """Check ``rank(B; C) = n`` and ``B^T C = C^T B``."""
    tol = _frame_tol(F, tol)
    S = F.B.T @ F.C
    asym = float(np.max(np.abs(S - S.T)))
    defect = F.n - _in.numerical_rank(F.stacked, tol)
    return FrameReport(asym <= tol and defect == 0, asym, defect)


def _require_valid(*frames, tol=None):
    for F in frames:
        rep = validate_frame(F, tol)
        if not rep.valid:
            raise DomainError(
                f"invalid Lagrangian frame (asymmetry {rep.asymmetry:.3e}, rank defect {rep.rank_defect})"
            )


def _require_common_base(F1, F2):
    if F1.n != F2.n:
        raise DomainError("frames have different dimensions")
    if F1.base is not None and F2.base is not None and not F1.base.same_as(F2.base):
        raise DomainError("frames are attached to different base points or charts")


def intersection_dims(L1, L2, tol=None):
    """Return ``(dim L1 & V, dim L2 & V, dim L1 & L2)``."""
    _require_common_base(L1, L2)
    n = L1.n
    t1 = _frame_tol(L1, tol)
    t2 = _frame_tol(L2, tol)
    d1 = n - _in.numerical_rank(L1.B, t1)
    d2 = n - _in.numerical_rank(L2.B, t2)
    # span equality is scale-free: orthonormalise before the joint rank test
    q1 = np.linalg.qr(L1.stacked)[0]
    q2 = np.linalg.qr(L2.stacked)[0]
    d12 = 2 * n - _in.numerical_rank(np.hstack([q1, q2]), tol or _in.DEFAULT_RTOL * 10)
    return d1, d2, d12


def symplectic_form(n):
    """Matrix of ``omega = dx ^ dxi`` on ``(x, xi)`` coordinates."""
    eye = np.eye(n)
    zero = np.zeros((n, n))
    return np.block([[zero, eye], [-eye, zero]])


def kashiwara_gram(L1, L2):
    """Gram matrix of ``Q[t1, t, t2] = w(t1,t) + w(t,t2) + w(t2,t1)`` on L1 + V + L2."""
    n = L1.n
    Om = symplectic_form(n)
    F1, F2 = L1.stacked, L2.stacked
    FV = LagrangianFrame.vertical(n).stacked
    b1v = F1.T @ Om @ FV
    bv2 = FV.T @ Om @ F2
    b21 = F2.T @ Om @ F1
    zero = np.zeros((n, n))
    upper = np.block([[zero, b1v, zero], [zero, zero, bv2], [b21, zero, zero]])
    return 0.5 * (upper + upper.T)


def kashiwara_direct(L1, L2, tol=None):
    """Kashiwara index of ``(L1, V, L2)`` as the signature of the 3n x 3n form."""
    _require_common_base(L1, L2)
    _require_valid(L1, L2, tol=tol)
    Q = kashiwara_gram(L1, L2)
    # frames are not normalised; scale the threshold with the form itself
    return _in.signature(Q, tol if tol is not None else _in.default_tol(Q) * 10)


def r_index(L1, L2, tol=None):
    n = L1.n
    d1, d2, d12 = intersection_dims(L1, L2, tol)
    return n + d1 - d2 - d12


def varkappa_direct(L1, L2, tol=None):
    """Modified index ``(kappa + r) / 2`` from the direct route."""
    k = kashiwara_direct(L1, L2, tol)
    r = r_index(L1, L2, tol)
    if (k + r) % 2:
        raise ArithmeticError(f"kappa + r = {k + r} is odd")
    return (k + r) // 2


@dataclass(frozen=True)
class KashiwaraGraphs:
    kappa: int
    r: int
    varkappa: int

    def __iter__(self):
        return iter((self.kappa, self.r, self.varkappa))


def kashiwara_graphs(A1, A2, tol=None):
    """Indices of two subspaces given as graphs over the vertical subspace.

    ``kappa = sgn A1 - sgn A2 - sgn(A1 - A2)``,
    ``r = rank A2 - rank A1 + rank(A1 - A2)``,
    ``varkappa = k_-(A2) - k_-(A1) + k_-(A1 - A2)``.
    """
    G1 = A1 if isinstance(A1, GraphForm) else GraphForm(A1)
    G2 = A2 if isinstance(A2, GraphForm) else GraphForm(A2)
    for G in (G1, G2):
        if G.orientation is not Orientation.OVER_VERTICAL:
            raise DomainError("kashiwara_graphs needs graph-over-vertical forms")
    a1, a2 = G1.A, G2.A
    i1 = _in.inertia(a1, tol)
    i2 = _in.inertia(a2, tol)
    i12 = _in.inertia(a1 - a2, tol)
    kappa = i1.sgn - i2.sgn - i12.sgn
    r = i2.rank - i1.rank + i12.rank
    vk = i2.kappa_minus - i1.kappa_minus + i12.kappa_minus
    if 2 * vk != kappa + r:
        raise ArithmeticError(f"varkappa={vk} but (kappa + r)/2 = {(kappa + r) / 2}")
    return KashiwaraGraphs(kappa, r, vk)


def kashiwara_vs_horizontal(L, tol=None):
    """``kappa(L, H) = sgn(B^T C)`` for the chart horizontal ``H``.

    This is what the 3n x 3n form gives; ``k_+(B^T C)`` agrees with it only
    when ``B^T C`` has no negative eigenvalues.
    """
    _require_valid(L, tol=tol)
    S = L.B.T @ L.C
    return _in.signature(0.5 * (S + S.T), tol)


def graph_form(F, orientation="over-vertical", tol=None):
    """Graph matrix of a frame: ``B C^-1`` over the vertical, ``C B^-1`` over the horizontal."""
    orientation = Orientation(orientation)
    if orientation is Orientation.OVER_VERTICAL:
        num, den, name = F.B, F.C, "C"
    else:
        num, den, name = F.C, F.B, "B"
    t = _frame_tol(F, tol)
    if _in.numerical_rank(den, t) < F.n:
        raise DomainError(f"frame is not a graph {orientation.value}: block {name} is singular")
    A = num @ np.linalg.inv(den)
    return GraphForm(A, orientation)


def shear_to_horizontal(F, S):
    """Frame in coordinates where the subspace ``{w, S w}`` becomes horizontal."""
    return LagrangianFrame(F.B, F.C - S @ F.B, F.base)


def common_graph_forms(L1, L2, rng=None, retries=5, cond_max=1e8):
    """Graph forms of two frames over a random horizontal transversal to both.

    The horizontal ``{w, S w}`` uses a random symmetric ``S``; both frames are
    sheared so it becomes the chart horizontal, then written as graphs over
    the vertical.
    """
    _require_common_base(L1, L2)
    rng = np.random.default_rng(rng)
    n = L1.n
    scale = max(1.0, float(np.linalg.norm(L1.C, 2)), float(np.linalg.norm(L2.C, 2)))
    scale /= max(1e-12, min(1.0, float(np.linalg.norm(L1.B, 2)) + float(np.linalg.norm(L2.B, 2))))
    for _ in range(retries):
        G = rng.standard_normal((n, n))
        S = scale * (G + G.T) / 2
        M1 = shear_to_horizontal(L1, S)
        M2 = shear_to_horizontal(L2, S)
        if np.linalg.cond(M1.C) < cond_max and np.linalg.cond(M2.C) < cond_max:
            return graph_form(M1).A, graph_form(M2).A
    raise TransversalityError(f"no transversal horizontal found after {retries} draws")


def varkappa_graphs(L1, L2, rng=None, tol=None):
    A1, A2 = common_graph_forms(L1, L2, rng)
    return kashiwara_graphs(A1, A2, tol)


@dataclass(frozen=True)
class ChartMap:
    """A change of coordinates ``x -> x~`` with its first two derivatives.

    ``forward(x)`` gives ``x~``, ``jacobian(x)`` the matrix ``x~_x`` and
    ``hessian(x)`` the array ``H[l, a, b] = d^2 x~_l / dx_a dx_b``.
    """

    forward: object
    jacobian: object
    hessian: object
    chart_id: str = "transformed"

    def inverse_hessian(self, x):
        """``d^2 x_k / dx~_i dx~_j`` at ``x~(x)``."""
        Ji = np.linalg.inv(np.atleast_2d(self.jacobian(x)))
        H = np.asarray(self.hessian(x), dtype=float).reshape((Ji.shape[0],) * 3)
        return -np.einsum("kl,lab,ai,bj->kij", Ji, H, Ji, Ji)

    def curvature(self, x, xi):
        """``C_ij = sum_k xi_k d^2 x_k / dx~_i dx~_j``."""
        return np.einsum("k,kij->ij", np.atleast_1d(xi), self.inverse_hessian(x))

    def transform_point(self, x, xi):
        J = np.atleast_2d(self.jacobian(x))
        return np.atleast_1d(self.forward(x)), np.linalg.solve(J.T, np.atleast_1d(xi))

    def transform_vectors(self, x, xi, X, V):
        """Push tangent vectors ``X . d/dx + V . d/dxi`` to the new chart."""
        J = np.atleast_2d(self.jacobian(x))
        if abs(np.linalg.det(J)) < 1e-14 * max(1.0, np.linalg.norm(J)) ** J.shape[0]:
            raise DomainError("chart map has a singular Jacobian at the base point")
        X = np.asarray(X, dtype=float)
        V = np.asarray(V, dtype=float)
        C = self.curvature(x, xi)
        Xt = J @ X
        Vt = np.linalg.solve(J.T, V) + C @ Xt
        return Xt, Vt

    @classmethod
    def linear(cls, J, shift=None, chart_id="linear"):
        J = np.atleast_2d(np.asarray(J, dtype=float))
        n = J.shape[0]
        b = np.zeros(n) if shift is None else np.asarray(shift, dtype=float)
        return cls(lambda x: J @ np.atleast_1d(x) + b, lambda x: J, lambda x: np.zeros((n, n, n)), chart_id)

    @classmethod
    def quadratic(cls, center, Q, J=None, chart_id="quadratic"):
        """``x~ = x0 + J (x - x0) + 1/2 Q[x - x0, x - x0]`` with ``Q[l, a, b]`` symmetric in ``a, b``."""
        x0 = np.atleast_1d(np.asarray(center, dtype=float))
        n = x0.shape[0]
        Q = np.asarray(Q, dtype=float).reshape(n, n, n)
        Q = 0.5 * (Q + Q.transpose(0, 2, 1))
        J0 = np.eye(n) if J is None else np.atleast_2d(np.asarray(J, dtype=float))

        def fwd(x):
            d = np.atleast_1d(x) - x0
            return x0 + J0 @ d + 0.5 * np.einsum("lab,a,b->l", Q, d, d)

        def jac(x):
            d = np.atleast_1d(x) - x0
            return J0 + np.einsum("lab,b->la", Q, d)

        return cls(fwd, jac, lambda x: Q, chart_id)

    @classmethod
    def from_expressions(cls, exprs, chart_id="expr"):
        """Chart from expression strings in ``x1..xn`` (or ``x`` when n = 1)."""
        from .expressions import vector_field_with_derivatives

        f, jf, hf = vector_field_with_derivatives(exprs, prefix="x")
        return cls(f, jf, hf, chart_id)


def transform_frame(F, chart):
    """Express a frame in the coordinates of ``chart``."""
    if F.base is None:
        raise DomainError("transform_frame needs a frame with a base point")
    x, xi = F.base.x, F.base.xi
    Bt, Ct = chart.transform_vectors(x, xi, F.B, F.C)
    xt, xit = chart.transform_point(x, xi)
    return LagrangianFrame(Bt, Ct, BasePoint(xt, xit, chart.chart_id))


def zeroing_chart(base, A):
    """Quadratic chart in which the subspace ``{w, A w}`` at ``base`` becomes horizontal.

    Requires ``xi != 0``: the inverse map is ``x = x~ - 1/2 <A(x~-x0), x~-x0> xi/|xi|^2``.
    """
    xi = base.xi
    nrm2 = float(xi @ xi)
    if nrm2 == 0.0:
        raise DomainError("zeroing_chart requires xi != 0")
    A = np.atleast_2d(np.asarray(A, dtype=float))
    # forward Hessian of x~ = x + 1/2 <A d, d> xi/|xi|^2 + O(d^3) inverts the quadratic term
    Q = np.einsum("l,ab->lab", xi / nrm2, A)
    return ChartMap.quadratic(base.x, Q, chart_id="zeroing")

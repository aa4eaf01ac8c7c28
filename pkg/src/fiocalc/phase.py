"""Phase functions of the class attached to a canonical map, and their jets at ``x = x*``.

Three kinds are constructed:

* ``real_chart``: ``phi = (x~ - x~*) . xi~*`` in a chart ``x~`` (default: the
  identity chart, i.e. ``phi = (x - x*) . xi*``);
* ``gaussian``: ``phi = (x - x*) . xi* + (i eps / 2) |eta| |x - x*|^2``;
* ``quadratic``: ``phi = (x - x*) . xi* + (|eta| / 2) Q[x - x*, x - x*]`` for a
  fixed complex symmetric ``Q`` with ``Im Q >= 0``.

Jets are always expressed in the base coordinates ``x``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import inertia as _in
from .errors import DomainError
from .lagrangian import BasePoint, LagrangianFrame

KINDS = ("real_chart", "gaussian", "quadratic")


def _norm(eta):
    return np.linalg.norm(eta, axis=-1)


@dataclass
class PhaseSpec:
    kind: str
    map: object
    chart: object = None
    Q: np.ndarray | None = None
    eps: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown phase kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "quadratic":
            if self.Q is None:
                raise DomainError("quadratic phase needs Q")
            Q = np.atleast_2d(np.asarray(self.Q, dtype=complex))
            if _in.asymmetry(Q.real) > 1e-12 or _in.asymmetry(Q.imag) > 1e-12:
                raise DomainError("Q must be symmetric")
            if np.min(np.linalg.eigvalsh(Q.imag)) < -1e-12:
                raise DomainError("Im Q must be positive semidefinite")
            self.Q = Q
        if self.kind == "gaussian" and not self.eps > 0:
            raise DomainError("gaussian width eps must be positive")

    @property
    def chart_id(self):
        return "default" if self.chart is None else self.chart.chart_id

    @property
    def is_real(self):
        if self.kind == "real_chart":
            return True
        return self.kind == "quadratic" and not np.any(self.Q.imag)

    # -- values ---------------------------------------------------------------

    def value(self, x, y, eta):
        """``phi(x; y, eta)`` on broadcastable batches."""
        y = np.asarray(y, dtype=float)
        eta = np.asarray(eta, dtype=float)
        xs, xis = self.map.evaluate(y, eta)
        x = np.asarray(x, dtype=float)
        return self.value_from_star(x, xs, xis, eta)

    def value_from_star(self, x, xs, xis, eta):
        """``phi`` given precomputed ``x*``, ``xi*``; all arrays broadcast on leading axes."""
        d = x - xs
        if self.kind == "real_chart" and self.chart is not None:
            return self._chart_value(x, xs, xis)
        out = np.sum(d * xis, axis=-1).astype(complex)
        if self.kind == "gaussian":
            out = out + 0.5j * self.eps * _norm(eta) * np.sum(d * d, axis=-1)
        elif self.kind == "quadratic":
            out = out + 0.5 * _norm(eta) * np.einsum("...a,ab,...b->...", d, self.Q, d)
        return out

    def _chart_value(self, x, xs, xis):
        ch = self.chart
        x, xs, xis = np.broadcast_arrays(x, xs, xis)
        out = np.empty(x.shape[:-1], dtype=complex)
        for idx in np.ndindex(out.shape):
            J = np.atleast_2d(ch.jacobian(xs[idx]))
            xit = np.linalg.solve(J.T, xis[idx])
            out[idx] = (np.atleast_1d(ch.forward(x[idx])) - np.atleast_1d(ch.forward(xs[idx]))) @ xit
        return out

    # -- second derivative in x at x* ---------------------------------------

    def phi_xx(self, xs, xis, eta):
        n = xs.shape[-1]
        batch = xs.shape[:-1]
        r = _norm(eta)[..., None, None]
        if self.kind == "gaussian":
            return 1j * self.eps * r * np.eye(n)
        if self.kind == "quadratic":
            return r * self.Q
        out = np.zeros(batch + (n, n), dtype=complex)
        if self.chart is not None:
            for idx in np.ndindex(batch):
                J = np.atleast_2d(self.chart.jacobian(xs[idx]))
                H = np.asarray(self.chart.hessian(xs[idx]), dtype=float).reshape(n, n, n)
                xit = np.linalg.solve(J.T, xis[idx])
                out[idx] = np.einsum("l,lab->ab", xit, H)
        return out


@dataclass
class PhaseJet:
    """Second-order data of a phase at ``x = x*(y, eta)`` (batched on leading axes)."""

    phi_xx: np.ndarray
    phi_x_eta: np.ndarray
    phi_eta_eta: np.ndarray
    y: np.ndarray
    eta: np.ndarray
    x_star: np.ndarray
    xi_star: np.ndarray
    x_eta: np.ndarray
    xi_eta: np.ndarray

    @property
    def n(self):
        return self.x_star.shape[-1]

    def rank_x_eta(self, tol=None):
        return _batched(lambda B: _in.numerical_rank(B, tol), self.x_eta)

    def rank_phi_eta_eta(self, tol=None):
        return _batched(lambda S: _in.numerical_rank(S, tol), self.phi_eta_eta)

    def identity_residuals(self):
        """Residuals of ``phi_x_eta = xi*_eta - phi_xx x*_eta`` and ``phi_eta_eta = -(x*_eta)^T phi_x_eta``."""
        r1 = self.phi_x_eta - (self.xi_eta - self.phi_xx @ self.x_eta)
        r2 = self.phi_eta_eta + np.swapaxes(self.x_eta, -1, -2) @ self.phi_x_eta
        return float(np.max(np.abs(r1))), float(np.max(np.abs(r2)))


def _batched(f, arr, dtype=int):
    batch = arr.shape[:-2]
    if not batch:
        return f(arr)
    out = np.empty(batch, dtype=dtype)
    for idx in np.ndindex(batch):
        out[idx] = f(arr[idx])
    return out


def phase_jet(spec, y, eta):
    """Jet of ``spec`` over ``(y, eta)`` from the Jacobian blocks of the map."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    eta = np.atleast_1d(np.asarray(eta, dtype=float))
    if np.any(_norm(eta) == 0):
        raise DomainError("phase jets need eta != 0")
    xs, xis, J = spec.map.full(y, eta)
    pxx = spec.phi_xx(xs, xis, eta)
    pxe = J.xi_eta - pxx @ J.x_eta
    pee = -np.swapaxes(J.x_eta, -1, -2) @ pxe
    pee = 0.5 * (pee + np.swapaxes(pee, -1, -2))
    return PhaseJet(pxx, pxe, pee, y, eta, xs, xis, J.x_eta, J.xi_eta)


def phi_xx_in_chart(phi_xx, chart, x, xi):
    """Second derivative of the phase in the coordinates of ``chart`` at ``x``."""
    J = np.atleast_2d(chart.jacobian(x))
    Ji = np.linalg.inv(J)
    return Ji.T @ phi_xx @ Ji + chart.curvature(x, xi)


def horizontal_of_phase(jet_or_spec, y=None, eta=None):
    """Horizontal subspace ``{w . d/dx + (Re phi_xx) w . d/dxi}`` at ``Phi(y, eta)``.

    This is the subspace along which ``x*`` and ``xi* - phi_x`` are compared,
    so that ``phi_x_eta`` is the projection of ``dPhi(V)`` along it.
    """
    jet = jet_or_spec if isinstance(jet_or_spec, PhaseJet) else phase_jet(jet_or_spec, y, eta)
    C = np.real(jet.phi_xx)
    n = jet.n
    B = np.broadcast_to(np.eye(n), C.shape).copy()
    return LagrangianFrame(B, C, BasePoint(jet.x_star, jet.xi_star))


# -- validation ---------------------------------------------------------------


@dataclass
class PhaseReport:
    a1: float
    a2_value: float
    a2_gradient: float
    a2_remainder: float
    a3_margin: np.ndarray
    c1_degenerate: np.ndarray
    tol: float

    @property
    def a1_ok(self):
        return self.a1 < self.tol

    @property
    def a2_ok(self):
        return self.a2_value < self.tol and self.a2_gradient < 1e-6 and np.isfinite(self.a2_remainder)

    @property
    def a3_ok(self):
        return bool(np.all(self.a3_margin > self.tol))

    @property
    def passed(self):
        return self.a1_ok and self.a2_ok and self.a3_ok


def _a3_margin(jet):
    P = jet.phi_x_eta
    n = jet.n
    scale = np.maximum(np.linalg.norm(P, ord=2, axis=(-2, -1)), 1e-300) ** n
    return np.abs(np.linalg.det(P)) / scale


def validate_phase(spec, samples, tol=1e-8, rel_step=1e-4, rng=None):
    """Check conditions (a1) homogeneity, (a2) expansion, (a3) nondegeneracy at samples.

    ``a3_margin`` is ``|det phi_x_eta| / ||phi_x_eta||^n`` per sample and
    ``c1_degenerate`` flags samples where ``det xi*_eta`` vanishes in the chart.
    """
    rng = np.random.default_rng(rng)
    y, eta = (np.atleast_2d(np.asarray(a, dtype=float)) for a in samples)
    n = y.shape[-1]
    xs, xis = spec.map.evaluate(y, eta)

    # (a1): phi(x; y, 2 eta) = 2 phi(x; y, eta) at off-diagonal x
    xoff = xs + rng.uniform(-0.5, 0.5, size=xs.shape)
    v1 = spec.value(xoff, y, eta)
    v2 = spec.value(xoff, y, 2 * eta)
    a1 = float(np.max(np.abs(v2 - 2 * v1) / (1 + np.abs(v1))))

    # (a2): phi(x*) = 0, phi_x(x*) = xi*, remainder O(|x - x*|^2)
    val0 = float(np.max(np.abs(spec.value(xs, y, eta))))
    d = rng.standard_normal(xs.shape)
    d /= np.linalg.norm(d, axis=-1, keepdims=True)
    h = rel_step * (1 + np.linalg.norm(xs, axis=-1, keepdims=True))

    def f(s):
        return spec.value(xs + s * h * d, y, eta)

    grad = (-f(2) + 8 * f(1) - 8 * f(-1) + f(-2)) / (12 * h[..., 0])
    slope = np.sum(d * xis, axis=-1)
    a2_grad = float(np.max(np.abs(grad - slope) / (1 + np.abs(slope))))
    big = 100 * h
    rem = np.abs(spec.value(xs + big * d, y, eta) - big[..., 0] * slope) / big[..., 0] ** 2
    a2_rem = float(np.max(rem))

    jet = phase_jet(spec, y, eta)
    margin = _a3_margin(jet)
    detc = np.abs(np.linalg.det(jet.xi_eta))
    degenerate = detc <= tol * np.maximum(1.0, np.linalg.norm(jet.xi_eta, ord=2, axis=(-2, -1))) ** n
    return PhaseReport(a1, val0, a2_grad, a2_rem, margin, degenerate, tol)


def complex_nondegeneracy_check(spec, samples):
    """Minimum of ``|det phi_x_eta|`` over samples for a phase with ``Im phi_xx > 0``."""
    y, eta = samples
    jet = phase_jet(spec, y, eta)
    im = np.imag(jet.phi_xx)
    lo = np.min(np.linalg.eigvalsh(0.5 * (im + np.swapaxes(im, -1, -2))))
    if lo <= 0:
        raise DomainError("complex_nondegeneracy_check needs Im phi_xx positive definite")
    margin = float(np.min(np.abs(np.linalg.det(jet.phi_x_eta))))
    return margin > 0, margin


def build_phase(config, phi_map):
    """Phase from a JSON-style dict such as ``{"phase": "gaussian"}``."""
    if isinstance(config, str):
        config = {"phase": config}
    kind = config.get("phase", "real_chart")
    if kind == "gaussian":
        return PhaseSpec("gaussian", phi_map, eps=float(config.get("eps", 1.0)))
    if kind == "real_chart":
        chart = config.get("chart", "default")
        if chart not in (None, "default"):
            from .lagrangian import ChartMap

            chart = ChartMap.from_expressions(chart, chart_id=str(chart))
        else:
            chart = None
        return PhaseSpec("real_chart", phi_map, chart=chart)
    if kind == "quadratic":
        Q = np.asarray(config["Q_re"], dtype=float) + 1j * np.asarray(config.get("Q_im", 0.0))
        return PhaseSpec("quadratic", phi_map, Q=Q)
    raise DomainError(f"unknown phase kind {kind!r}")

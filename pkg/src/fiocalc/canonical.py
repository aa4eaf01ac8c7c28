"""Homogeneous canonical transformations ``(y, eta) -> (x*, xi*)``.

Every map works on batches: points have shape ``(..., n)`` and Jacobian
blocks shape ``(..., n, n)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import expressions as _ex
from .errors import ChartError, DomainError
from .lagrangian import BasePoint, LagrangianFrame


@dataclass
class Blocks:
    """The four Jacobian blocks of a map at a batch of points."""

    x_y: np.ndarray
    x_eta: np.ndarray
    xi_y: np.ndarray
    xi_eta: np.ndarray

    @property
    def matrix(self):
        top = np.concatenate([self.x_y, self.x_eta], axis=-1)
        bot = np.concatenate([self.xi_y, self.xi_eta], axis=-1)
        return np.concatenate([top, bot], axis=-2)

    @classmethod
    def from_matrix(cls, D):
        n = D.shape[-1] // 2
        return cls(D[..., :n, :n], D[..., :n, n:], D[..., n:, :n], D[..., n:, n:])


def _pts(y, eta):
    y = np.asarray(y, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if y.ndim == 0:
        y = y[None]
    if eta.ndim == 0:
        eta = eta[None]
    return y, eta


def _check_eta(eta):
    if np.any(np.linalg.norm(eta, axis=-1) == 0):
        raise DomainError("eta = 0 is outside the domain of a homogeneous map")


class CanonicalMap:
    """Base class. Subclasses implement ``full`` or both ``evaluate`` and ``jacobian``."""

    provenance = "analytic-catalog"

    def __init__(self, n, name="map"):
        self.n = n
        self.name = name

    def full(self, y, eta):
        y, eta = _pts(y, eta)
        x, xi = self.evaluate(y, eta)
        return x, xi, self.jacobian(y, eta)

    def evaluate(self, y, eta):
        x, xi, _ = self.full(y, eta)
        return x, xi

    def jacobian(self, y, eta):
        return self.full(y, eta)[2]

    def __call__(self, y, eta):
        return self.evaluate(y, eta)

    def inverse(self):
        return NewtonInverse(self)

    def image_of_vertical(self, y, eta, chart_id="default"):
        """Frame of ``dPhi(V)`` at ``Phi(y, eta)``: ``B = x*_eta``, ``C = xi*_eta``."""
        y, eta = _pts(y, eta)
        _check_eta(eta)
        x, xi, J = self.full(y, eta)
        return LagrangianFrame(J.x_eta, J.xi_eta, BasePoint(x, xi, chart_id))

    def __repr__(self):
        return f"<{type(self).__name__} {self.name} n={self.n}>"


class Identity(CanonicalMap):
    def __init__(self, n):
        super().__init__(n, "identity")

    def full(self, y, eta):
        y, eta = _pts(y, eta)
        eye = np.broadcast_to(np.eye(self.n), y.shape + (self.n,))
        zero = np.zeros_like(eye)
        return y.copy(), eta.copy(), Blocks(eye.copy(), zero, zero.copy(), eye.copy())

    def inverse(self):
        return self


class LinearSymplectic(CanonicalMap):
    """``(y, eta) -> (L y, L^-T eta)``."""

    def __init__(self, L):
        L = np.atleast_2d(np.asarray(L, dtype=float))
        super().__init__(L.shape[0], "linear")
        self.L = L
        self.Lit = np.linalg.inv(L).T

    def full(self, y, eta):
        y, eta = _pts(y, eta)
        shape = y.shape + (self.n,)
        zero = np.zeros(shape)
        return (
            y @ self.L.T,
            eta @ self.Lit.T,
            Blocks(np.broadcast_to(self.L, shape).copy(), zero, zero.copy(), np.broadcast_to(self.Lit, shape).copy()),
        )

    def inverse(self):
        return LinearSymplectic(np.linalg.inv(self.L))


class HalfWave(CanonicalMap):
    """Translation flow of ``|xi|``: ``x* = y + t eta/|eta|``, ``xi* = eta``."""

    def __init__(self, n, t=1.0):
        super().__init__(n, f"half_wave(t={t:g})")
        self.t = float(t)

    def full(self, y, eta):
        y, eta = _pts(y, eta)
        _check_eta(eta)
        r = np.linalg.norm(eta, axis=-1)[..., None]
        e = eta / r
        eye = np.broadcast_to(np.eye(self.n), y.shape + (self.n,))
        proj = eye - e[..., :, None] * e[..., None, :]
        x_eta = self.t * proj / r[..., None]
        zero = np.zeros_like(x_eta)
        return y + self.t * e, eta.copy(), Blocks(eye.copy(), x_eta, zero, eye.copy())

    def inverse(self):
        return HalfWave(self.n, -self.t)


class CotangentLift(CanonicalMap):
    """Lift of a diffeomorphism ``f``: ``x* = f(y)``, ``xi* = f'(y)^-T eta``."""

    def __init__(self, f, jac, hess, n, name="lift", f_inverse=None):
        super().__init__(n, name)
        self.f, self.fj, self.fh = f, jac, hess
        self.f_inverse = f_inverse

    @classmethod
    def from_expressions(cls, exprs):
        f, j, h = _ex.vector_field_with_derivatives(exprs, prefix="y")
        exprs = [exprs] if isinstance(exprs, str) else list(exprs)
        return cls(f, j, h, len(exprs), name=f"lift({', '.join(map(str, exprs))})")

    def full(self, y, eta):
        y, eta = _pts(y, eta)
        Df = self.fj(y)
        M = np.linalg.inv(Df)
        xi = np.einsum("...ki,...k->...i", M, eta)
        H = self.fh(y)  # H[..., a, b, j] = d^2 f_a / dy_b dy_j
        # d M / dy_j = -M (dDf/dy_j) M
        dM = -np.einsum("...ka,...abj,...bi->...kij", M, H, M)
        xi_y = np.einsum("...kij,...k->...ij", dM, eta)
        zero = np.zeros_like(Df)
        return self.f(y), xi, Blocks(Df, zero, xi_y, np.swapaxes(M, -1, -2))

    def solve_f(self, x, guess=None, iters=50):
        """Invert ``f`` by Newton's method, warm-started at ``guess`` (default ``x``)."""
        x = np.asarray(x, dtype=float)
        y = np.array(x if guess is None else guess, dtype=float)
        for _ in range(iters):
            res = self.f(y) - x
            step = np.linalg.solve(self.fj(y), res[..., None])[..., 0]
            y = y - step
            if np.max(np.abs(step)) < 1e-15 * (1 + np.max(np.abs(y))):
                break
        return y

    def inverse(self):
        lift = self

        class _LiftInverse(CanonicalMap):
            def full(self, x, xi):
                x, xi = _pts(x, xi)
                y = lift.f_inverse(x) if lift.f_inverse is not None else lift.solve_f(x)
                eta = np.einsum("...ki,...k->...i", lift.fj(y), xi)
                _, _, J = lift.full(y, eta)
                Dinv = np.linalg.inv(J.matrix)
                return y, eta, Blocks.from_matrix(Dinv)

            def inverse(self):
                return lift

        return _LiftInverse(self.n, f"inverse {self.name}")


class FiniteDifferenceMap(CanonicalMap):
    """User map given only by evaluation; Jacobian by central differences."""

    provenance = "user"

    def __init__(self, evaluate, n, name="user", rel_step=1e-5):
        super().__init__(n, name)
        self._eval = evaluate
        self.rel_step = rel_step

    def evaluate(self, y, eta):
        y, eta = _pts(y, eta)
        return self._eval(y, eta)

    def jacobian(self, y, eta):
        y, eta = _pts(y, eta)
        z = np.concatenate([y, eta], axis=-1)
        n = self.n
        cols = []
        for k in range(2 * n):
            h = self.rel_step * np.maximum(1.0, np.abs(z[..., k]))[..., None]
            e = np.zeros(2 * n)
            e[k] = 1.0
            zp, zm = z + h * e, z - h * e
            fp = np.concatenate(self._eval(zp[..., :n], zp[..., n:]), axis=-1)
            fm = np.concatenate(self._eval(zm[..., :n], zm[..., n:]), axis=-1)
            cols.append((fp - fm) / (2 * h))
        return Blocks.from_matrix(np.stack(cols, axis=-1))

    def full(self, y, eta):
        x, xi = self.evaluate(y, eta)
        return x, xi, self.jacobian(y, eta)


class Composed(CanonicalMap):
    """``outer o inner`` with the chain rule on the 2n x 2n Jacobians."""

    provenance = "composed"

    def __init__(self, outer, inner):
        if outer.n != inner.n:
            raise DomainError("cannot compose maps of different dimension")
        super().__init__(inner.n, f"{outer.name} o {inner.name}")
        self.outer, self.inner = outer, inner

    def full(self, y, eta):
        z, zeta, J1 = self.inner.full(y, eta)
        x, xi, J2 = self.outer.full(z, zeta)
        return x, xi, Blocks.from_matrix(J2.matrix @ J1.matrix)

    def inverse(self):
        return Composed(self.inner.inverse(), self.outer.inverse())


def compose_maps(phi1, phi2):
    """The map ``phi2 o phi1``."""
    return Composed(phi2, phi1)


class NewtonInverse(CanonicalMap):
    """Inverse of a map by Newton iteration on its full 2n x 2n Jacobian."""

    def __init__(self, phi, guess=None, iters=60):
        super().__init__(phi.n, f"inverse {phi.name}")
        self.phi = phi
        self.guess = guess
        self.iters = iters

    def full(self, x, xi):
        x, xi = _pts(x, xi)
        n = self.n
        target = np.concatenate([x, xi], axis=-1)
        z = target.copy() if self.guess is None else np.asarray(self.guess(x, xi), dtype=float)
        for _ in range(self.iters):
            fx, fxi, J = self.phi.full(z[..., :n], z[..., n:])
            res = np.concatenate([fx, fxi], axis=-1) - target
            step = np.linalg.solve(J.matrix, res[..., None])[..., 0]
            z = z - step
            if np.max(np.abs(step)) < 1e-14 * (1 + np.max(np.abs(z))):
                break
        _, _, J = self.phi.full(z[..., :n], z[..., n:])
        return z[..., :n], z[..., n:], Blocks.from_matrix(np.linalg.inv(J.matrix))

    def inverse(self):
        return self.phi


# -- Hamiltonian flows ------------------------------------------------------


@dataclass
class Hamiltonian:
    """A degree-1 homogeneous ``h(x, xi)`` with gradient and Hessian on ``z = (x, xi)``."""

    n: int
    value: Callable
    grad: Callable
    hess: Callable
    name: str = "h"
    kernel: Callable | None = None

    @classmethod
    def flat(cls, n):
        def value(z):
            return np.linalg.norm(z[..., n:], axis=-1)

        def grad(z):
            p = z[..., n:]
            r = np.linalg.norm(p, axis=-1)[..., None]
            return np.concatenate([np.zeros_like(p), p / r], axis=-1)

        def hess(z):
            p = z[..., n:]
            r = np.linalg.norm(p, axis=-1)[..., None, None]
            e = p / r[..., 0]
            eye = np.broadcast_to(np.eye(n), p.shape + (n,))
            H = np.zeros(p.shape[:-1] + (2 * n, 2 * n))
            H[..., n:, n:] = (eye - e[..., :, None] * e[..., None, :]) / r
            return H

        return cls(n, value, grad, hess, "flat", _flat_kernel(n))

    @classmethod
    def from_metric(cls, metric):
        """``h = |xi|_g = sqrt(xi^T g(x)^-1 xi)`` for a metric given as expression strings.

        Results are memoized on the metric text, since compiling the kernel is slow.
        """
        key = tuple(tuple(str(e) for e in row) for row in metric)
        if key not in _METRIC_CACHE:
            _METRIC_CACHE[key] = cls._from_metric(metric)
        return _METRIC_CACHE[key]

    @classmethod
    def _from_metric(cls, metric):
        import sympy as sp

        xs, ps, h = _ex.metric_hamiltonian(metric)
        n = len(xs)
        zs = list(xs) + list(ps)
        g = [sp.diff(h, s) for s in zs]
        H = [[sp.diff(gi, s) for s in zs] for gi in g]
        fv = sp.lambdify(zs, h, "numpy")
        fg = sp.lambdify(zs, g, "numpy", cse=True)
        fh = sp.lambdify(zs, [e for row in H for e in row], "numpy", cse=True)

        def args(z):
            return [z[..., k] for k in range(2 * n)]

        def stack(vals, z):
            shape = z.shape[:-1]
            return np.stack([np.broadcast_to(np.asarray(v, dtype=float), shape) for v in vals], axis=-1)

        def value(z):
            return np.broadcast_to(np.asarray(fv(*args(z)), dtype=float), z.shape[:-1])

        def grad(z):
            return stack(fg(*args(z)), z)

        def hess(z):
            return stack(fh(*args(z)), z).reshape(z.shape[:-1] + (2 * n, 2 * n))

        from ._flowkernel import compile_grad_hess

        return cls(n, value, grad, hess, f"metric{metric}", compile_grad_hess(zs, h))


_FLAT_KERNELS = {}
_METRIC_CACHE = {}


def _flat_kernel(n):
    if n not in _FLAT_KERNELS:
        import sympy as sp

        from ._flowkernel import compile_grad_hess

        # no real=True: sqrt(p1**2) would collapse to Abs, whose derivatives do not codegen
        xs = sp.symbols(f"x1:{n + 1}")
        ps = sp.symbols(f"p1:{n + 1}")
        _FLAT_KERNELS[n] = compile_grad_hess(list(xs) + list(ps), sp.sqrt(sum(p**2 for p in ps)))
    return _FLAT_KERNELS[n]


@dataclass
class FlowSpec:
    hamiltonian: Hamiltonian
    time: float
    steps: int = 1000
    bounds: float | None = None
    newton_tol: float = 1e-14
    meta: dict = field(default_factory=dict)


def _omega(n):
    eye = np.eye(n)
    zero = np.zeros((n, n))
    return np.block([[zero, eye], [-eye, zero]])


class FlowMap(CanonicalMap):
    """Time-``t`` map of a homogeneous Hamiltonian flow by the implicit midpoint rule.

    The Jacobian is propagated with the exact derivative of each midpoint step
    (a Cayley transform of ``dt * Omega * Hess h``), so it is the Jacobian of
    the discrete map itself.
    """

    provenance = "numeric-flow"

    def __init__(self, spec):
        super().__init__(spec.hamiltonian.n, f"flow({spec.hamiltonian.name}, t={spec.time:g})")
        self.spec = spec

    def full(self, y, eta):
        y, eta = _pts(y, eta)
        _check_eta(eta)
        spec = self.spec
        n = self.n
        Om = _omega(n)
        z = np.concatenate([y, eta], axis=-1)
        batch = z.shape[:-1]
        Z = np.broadcast_to(np.eye(2 * n), batch + (2 * n, 2 * n)).copy()
        if spec.time == 0 or spec.steps == 0:
            return z[..., :n].copy(), z[..., n:].copy(), Blocks.from_matrix(Z)
        dt = spec.time / spec.steps
        ham = spec.hamiltonian
        if ham.kernel is not None:
            from ._flowkernel import _midpoint

            flat = np.ascontiguousarray(z.reshape(-1, 2 * n))
            bounds = -1.0 if spec.bounds is None else float(spec.bounds)
            zf, Zf, exit_step = _midpoint(ham.kernel, flat, dt, spec.steps, spec.newton_tol, bounds, n)
            if exit_step >= 0:
                raise ChartError(
                    f"trajectory left the chart |x| <= {spec.bounds} at t = {exit_step * dt:.6g}",
                    exit_time=exit_step * dt,
                )
            z = zf.reshape(batch + (2 * n,))
            return z[..., :n], z[..., n:], Blocks.from_matrix(Zf.reshape(batch + (2 * n, 2 * n)))
        eye = np.eye(2 * n)
        for k in range(spec.steps):
            z1 = z + dt * ham.grad(z) @ Om.T
            for _ in range(30):
                m = 0.5 * (z + z1)
                G = z1 - z - dt * ham.grad(m) @ Om.T
                DG = eye - 0.5 * dt * Om @ ham.hess(m)
                step = np.linalg.solve(DG, G[..., None])[..., 0]
                z1 = z1 - step
                if np.max(np.abs(step)) <= spec.newton_tol * (1.0 + np.max(np.abs(z1))):
                    break
            m = 0.5 * (z + z1)
            K = 0.5 * dt * Om @ ham.hess(m)
            Z = np.linalg.solve(eye - K, (eye + K) @ Z)
            z = z1
            if spec.bounds is not None and np.any(np.abs(z[..., :n]) > spec.bounds):
                raise ChartError(
                    f"trajectory left the chart |x| <= {spec.bounds} at t = {(k + 1) * dt:.6g}",
                    exit_time=(k + 1) * dt,
                )
        return z[..., :n], z[..., n:], Blocks.from_matrix(Z)

    def inverse(self):
        s = self.spec
        return FlowMap(FlowSpec(s.hamiltonian, -s.time, s.steps, s.bounds, s.newton_tol, dict(s.meta)))


def flow_map(spec):
    return FlowMap(spec)


# -- validation ---------------------------------------------------------------


@dataclass
class CanonicalReport:
    residuals: dict
    tol: float

    @property
    def passed(self):
        return all(v < self.tol for v in self.residuals.values())

    @property
    def failures(self):
        return {k: v for k, v in self.residuals.items() if v >= self.tol}


def _tr(a):
    return np.swapaxes(a, -1, -2)


def canonical_residuals(x, xi, J, y, eta):
    """Residuals of the 2-form, homogeneity and 1-form identities (max-abs over the batch)."""
    n = J.x_y.shape[-1]
    eye = np.eye(n)

    def mx(a):
        return float(np.max(np.abs(a))) if np.size(a) else 0.0

    return {
        "preserve-2a(y)": mx(_tr(J.xi_y) @ J.x_y - _tr(J.x_y) @ J.xi_y),
        "preserve-2a(eta)": mx(_tr(J.xi_eta) @ J.x_eta - _tr(J.x_eta) @ J.xi_eta),
        "preserve-2b": mx(_tr(J.xi_eta) @ J.x_y - _tr(J.x_eta) @ J.xi_y - eye),
        "homo(x)": mx(np.einsum("...ij,...j->...i", J.x_eta, eta)),
        "homo(xi)": mx(np.einsum("...ij,...j->...i", J.xi_eta, eta) - xi),
        "preserve-1(eta)": mx(np.einsum("...ji,...j->...i", J.x_eta, xi)),
        "preserve-1(y)": mx(np.einsum("...ji,...j->...i", J.x_y, xi) - eta),
    }


def validate_canonical(phi, samples, tol=1e-10):
    """Max residual of each defining identity over ``samples = (y, eta)`` batches."""
    y, eta = _pts(*samples)
    _check_eta(eta)
    try:
        x, xi, J = phi.full(y, eta)
    except Exception as exc:
        raise DomainError(f"evaluation of {phi.name} failed on the sample batch: {exc}") from exc
    return CanonicalReport(canonical_residuals(x, xi, J, y, eta), tol)


def image_of_vertical(phi, y, eta, chart_id="default"):
    return phi.image_of_vertical(y, eta, chart_id)


def random_samples(n, count, rng=None, y_scale=1.0, eta_range=(0.5, 2.0)):
    rng = np.random.default_rng(rng)
    y = rng.uniform(-y_scale, y_scale, size=(count, n))
    d = rng.standard_normal((count, n))
    d /= np.linalg.norm(d, axis=-1, keepdims=True)
    r = rng.uniform(*eta_range, size=(count, 1))
    return y, d * r


def jacobian_fd_error(phi, y, eta, h=1e-5):
    """Max difference between supplied Jacobian and central differences of ``evaluate``."""
    fd = FiniteDifferenceMap(phi.evaluate, phi.n, rel_step=h)
    return float(np.max(np.abs(fd.jacobian(y, eta).matrix - phi.jacobian(y, eta).matrix)))


# -- catalog ----------------------------------------------------------------

CATALOG_KINDS = ("identity", "lift", "linear", "half_wave", "flow")


def build_map(config, n=None):
    """Construct a map from a JSON-style dict, e.g. ``{"map": "half_wave", "t": 1.0}``."""
    if isinstance(config, str):
        config = {"map": config}
    kind = config.get("map")
    n = config.get("n", n)
    if kind == "identity":
        return Identity(n or 1)
    if kind == "half_wave":
        return HalfWave(n or 1, config.get("t", 1.0))
    if kind == "lift":
        f = config.get("f")
        if f is None:
            raise DomainError("lift map needs an expression 'f'")
        return CotangentLift.from_expressions(f)
    if kind == "linear":
        return LinearSymplectic(np.asarray(config["L"], dtype=float))
    if kind == "flow":
        metric = config.get("metric")
        if metric is None:
            ham = Hamiltonian.flat(n or 2)
        else:
            ham = Hamiltonian.from_metric(metric)
        return FlowMap(FlowSpec(ham, float(config.get("t", 1.0)), int(config.get("steps", 1000)), config.get("bounds")))
    raise DomainError(f"unknown catalog map {kind!r}; expected one of {CATALOG_KINDS}")

"""Principal symbols of FIOs and their calculus: adjoints, compositions, Egorov.

Symbols are callables ``(y, eta) -> complex`` with an order and the canonical
map they belong to. All formulas are pointwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import expressions as _ex
from .canonical import Identity
from .errors import DomainError, FIOError
from .lagrangian import LagrangianFrame, kashiwara_direct, r_index, varkappa_graphs
from .maslov import Path, branch_state, theta_s
from .phase import PhaseSpec, phase_jet


def ipow(k):
    """``i**k`` for real ``k``, exact for integers."""
    k = np.asarray(k, dtype=float)
    if np.all(k == np.round(k)):
        return np.array([1, 1j, -1, -1j])[np.mod(np.round(k).astype(int), 4)][()]
    return np.exp(0.5j * np.pi * k)


# -- amplitudes ---------------------------------------------------------------


@dataclass
class Amplitude:
    """A positively homogeneous function of degree ``order`` in ``eta``."""

    func: Callable
    order: float = 0.0
    text: str = ""

    def __call__(self, y, eta):
        y = np.asarray(y, dtype=float)
        eta = np.asarray(eta, dtype=float)
        return np.asarray(self.func(y, eta), dtype=complex)

    @classmethod
    def constant(cls, value=1.0, order=0.0):
        def f(y, eta):
            r = np.linalg.norm(np.atleast_1d(eta), axis=-1)
            return value * r**order

        return cls(f, order, str(value))

    @classmethod
    def from_expression(cls, text, n, order=0.0):
        """Amplitude ``|eta|^order * g(y, eta_hat)`` from an expression in ``y``, ``eh`` (and ``r = |eta|``)."""
        g = _ex.scalar_in(text, [("y", n), ("eh", n), ("r", 1)])

        def f(y, eta):
            y = np.atleast_1d(y)
            eta = np.atleast_1d(eta)
            r = np.linalg.norm(eta, axis=-1, keepdims=True)
            return g(y, eta / r, r) * r[..., 0] ** order

        return cls(f, order, text)


def homogeneity_residual(amp, samples, lams=(0.5, 2.0, 7.0)):
    y, eta = samples
    base = amp(y, eta)
    worst = 0.0
    for lam in lams:
        worst = max(worst, float(np.max(np.abs(amp(y, lam * eta) - lam**amp.order * base))))
    return worst


# -- symbols ------------------------------------------------------------------


@dataclass
class PrincipalSymbol:
    """Singular principal symbol ``s_V`` of a FIO associated with ``map``.

    ``values`` evaluates ``s_V`` at a single point. ``amplitude`` and
    ``phase`` record how the symbol was built when it came from a kernel
    amplitude; composite symbols only carry ``values``.
    """

    order: float
    map: object
    values: Callable
    amplitude: Amplitude | None = None
    phase_kind: str = "real_chart"
    meta: dict = field(default_factory=dict)

    def __call__(self, y, eta):
        return complex(self.values(np.atleast_1d(np.asarray(y, float)), np.atleast_1d(np.asarray(eta, float))))

    @classmethod
    def from_amplitude(cls, amp, phi_map, phase_kind="real_chart", eps=1.0):
        spec = PhaseSpec(phase_kind, phi_map, eps=eps)

        def values(y, eta):
            return singular_from_amplitude(amp, spec, y, eta)

        return cls(amp.order, phi_map, values, amp, phase_kind)

    @classmethod
    def unit(cls, phi_map):
        return cls.from_amplitude(Amplitude.constant(1.0), phi_map)


def singular_from_amplitude(p, spec, y, eta):
    """``i^(-Theta^s) p_m`` at a single point; ``p`` may be a callable or a number."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    eta = np.atleast_1d(np.asarray(eta, dtype=float))
    pv = complex(p(y, eta)) if callable(p) else complex(p)
    ts = float(theta_s(phase_jet(spec, y, eta)))
    return complex(ipow(-ts) * pv)


def theta_r_homotopy(jet_from, jet_to, steps=64):
    """Change of the continuous branch of Theta^r along ``phi_xx(tau) = (1-tau) A + tau B``.

    Both jets must belong to the same map and point. For a real starting
    phase and a target with ``Im phi_xx > 0`` every intermediate phase keeps
    ``det phi_x_eta != 0``.
    """
    A, B = jet_from.phi_xx, jet_to.phi_xx
    tau = np.linspace(0.0, 1.0, steps + 1)
    P = jet_from.xi_eta[None] - ((1 - tau)[:, None, None] * A + tau[:, None, None] * B) @ jet_from.x_eta[None]
    d = np.linalg.det(P)
    if np.any(np.abs(d) < 1e-13):
        raise DomainError("phase homotopy passes through det phi_x_eta = 0")
    d2 = d * d
    inc = np.angle(d2[1:] / d2[:-1])
    if np.any(np.abs(inc) >= np.pi / 2):
        return theta_r_homotopy(jet_from, jet_to, 4 * steps)
    return float(np.sum(inc) / (2 * np.pi))


def transfer_amplitude(p_value, spec_from, spec_to, y, eta):
    """Amplitude for ``spec_to`` describing the same operator as ``p_value`` with ``spec_from``.

    Uses the phase-independence of ``q = i^(-Theta^r) p`` along a homotopy of
    phases, not the Theta^s formula.
    """
    j0 = phase_jet(spec_from, y, eta)
    j1 = phase_jet(spec_to, y, eta)
    return complex(ipow(theta_r_homotopy(j0, j1)) * p_value)


# -- classical branch -----------------------------------------------------------


def classical_branch(symbol, anchor, query, path=None, phase_kind="gaussian", samples=41):
    """``sigma_{V, anchor}(query) = i^(-Theta_{Phi, anchor}(query)) s_V(query)``.

    The branch of Theta_Phi is tracked from ``anchor`` (where it is 0) along
    ``path`` (default: the straight segment to ``query``).
    """
    if path is None:
        path = Path.from_waypoints([anchor, query], per_segment=samples - 1)
    st = branch_state(PhaseSpec(phase_kind, symbol.map), path, phi_anchor=0)
    y, eta = path(np.array([1.0]))
    return complex(ipow(-int(st.theta_phi[-1])) * symbol(y[0], eta[0])), st


# -- indices --------------------------------------------------------------------


@dataclass(frozen=True)
class IndexReport:
    varkappa: int
    kappa: int
    r: int

    def __int__(self):
        return self.varkappa


def modified_index(L1, L2, rng=None):
    """``varkappa(L1, L2)`` via graph forms, checked against the direct signature route."""
    g = varkappa_graphs(L1, L2, rng)
    kd = kashiwara_direct(L1, L2)
    rd = r_index(L1, L2)
    if g.kappa != kd or 2 * g.varkappa != kd + rd:
        raise FIOError(
            f"index mismatch: graph route (kappa={g.kappa}, varkappa={g.varkappa}) vs "
            f"direct route (kappa={kd}, r={rd})"
        )
    return IndexReport(g.varkappa, kd, rd)


def _point(y, eta):
    return np.atleast_1d(np.asarray(y, dtype=float)), np.atleast_1d(np.asarray(eta, dtype=float))


def _single(frame):
    return LagrangianFrame(frame.B[0] if frame.B.ndim == 3 else frame.B,
                           frame.C[0] if frame.C.ndim == 3 else frame.C,
                           None)


def vertical_preimage_frame(phi, y, eta):
    """``dPhi^-1(V)`` at ``(y, eta)`` where ``V`` is vertical at ``Phi(y, eta)``."""
    y, eta = _point(y, eta)
    _, _, J = phi.full(y, eta)
    D = np.linalg.inv(J.matrix[0] if J.matrix.ndim == 3 else J.matrix)
    n = phi.n
    return LagrangianFrame(D[:n, n:], D[n:, n:], None)


def composition_index(phi1, phi2, y, eta, rng=None):
    """``k = varkappa(dPhi1(V_theta), dPhi2(V_{Phi(theta)}))`` for ``Phi = Phi2^-1 o Phi1``.

    Both frames live at ``Phi1(theta)``; ``dPhi2(V)`` there is computed from the
    Jacobian of ``Phi2`` at ``Phi(theta)``.
    """
    y, eta = _point(y, eta)
    z, zeta = phi1(y, eta)
    w, omega = phi2.inverse()(z, zeta)
    L1 = _single(phi1.image_of_vertical(y, eta))
    L2 = _single(phi2.image_of_vertical(w, omega))
    return modified_index(L1, L2, rng)


@dataclass(frozen=True)
class RoutedValue:
    """A symbol value computed by the step-by-step index arithmetic and by the printed corollary."""

    step5: complex
    corollary: complex
    k_step5: int
    k_corollary: int

    @property
    def differ(self):
        return self.k_step5 % 4 != self.k_corollary % 4


def star_composition(s1, s2, y, eta, rng=None):
    """``s_{V2* V1}(theta) = i^k s1(theta) conj(s2(Phi(theta)))`` with ``Phi = Phi2^-1 o Phi1``."""
    y, eta = _point(y, eta)
    k = composition_index(s1.map, s2.map, y, eta, rng).varkappa
    z, zeta = s1.map(y, eta)
    w, omega = s2.map.inverse()(z, zeta)
    return complex(ipow(k) * s1(y, eta) * np.conj(s2(w, omega))), k


def star_symbol(s1, s2, rng=None):
    """Symbol object of ``V2* V1`` (map ``Phi2^-1 o Phi1``)."""
    from .canonical import Composed

    def values(y, eta):
        return star_composition(s1, s2, y, eta, rng)[0]

    return PrincipalSymbol(s1.order + s2.order, Composed(s2.map.inverse(), s1.map), values)


def adjoint_symbol(s, y, eta, rng=None):
    """Symbol of ``V*`` at ``theta`` (map ``Phi^-1``), by both routes.

    The step-by-step route is ``V* = V* I``: ``i^k conj(s(Phi^-1 theta))`` with
    ``k = varkappa(V_theta, dPhi(V_{Phi^-1 theta}))``. The printed corollary
    drops the index.
    """
    y, eta = _point(y, eta)
    ident = PrincipalSymbol.unit(Identity(s.map.n))
    val, k = star_composition(ident, s, y, eta, rng)
    w, omega = s.map.inverse()(y, eta)
    printed = complex(np.conj(s(w, omega)))
    return RoutedValue(val, printed, k, 0)


def adjoint(s, route="step5", rng=None):
    """Symbol object of ``V*`` using the chosen route."""
    inv = s.map.inverse()

    def values(y, eta):
        r = adjoint_symbol(s, y, eta, rng)
        return r.step5 if route == "step5" else r.corollary

    return PrincipalSymbol(s.order, inv, values)


def composition_symbol(s1, s2, y, eta, rng=None):
    """Symbol of ``V2 V1`` at ``theta`` (map ``Phi2 o Phi1``), by both routes.

    Printed corollary: ``i^k s1(theta) s2(Phi1 theta)`` with
    ``k = varkappa(dPhi1(V_theta), dPhi2^-1(V_{Phi theta}))``. Writing
    ``V2 V1 = (V2*)* V1`` and using the step-by-step adjoint changes the index
    to ``k - varkappa(V_{Phi theta}, dPhi2(V_{Phi1 theta}))``.
    """
    y, eta = _point(y, eta)
    phi1, phi2 = s1.map, s2.map
    z, zeta = phi1(y, eta)
    L1 = _single(phi1.image_of_vertical(y, eta))
    xs, xis = phi2(z, zeta)
    L2 = _single(vertical_preimage_frame(phi2, z, zeta))
    k = modified_index(L1, L2, rng).varkappa
    # adjoint index of V2 at Phi(theta)
    a = composition_index(Identity(phi2.n), phi2, xs, xis, rng).varkappa
    base = s1(y, eta) * s2(z, zeta)
    return RoutedValue(complex(ipow(k - a) * base), complex(ipow(k) * base), k - a, k)


def composed_symbol(s1, s2, route="step5", rng=None):
    """Symbol object of ``V2 V1`` (map ``Phi2 o Phi1``)."""
    from .canonical import Composed

    def values(y, eta):
        r = composition_symbol(s1, s2, y, eta, rng)
        return r.step5 if route == "step5" else r.corollary

    return PrincipalSymbol(s1.order + s2.order, Composed(s2.map, s1.map), values)


def egorov_symbol(sv1, sv2, a, anchor, query, path=None):
    """``sigma_{V1,anchor}(query) a(Phi(query)) conj(sigma_{V2,anchor}(query))``.

    ``a`` is a callable ``(x, xi) -> complex`` (the principal symbol of the
    pseudodifferential factor).
    """
    if sv1.map is not sv2.map:
        raise DomainError("Egorov's formula needs V1 and V2 associated with the same map")
    y, eta = _point(*query)
    sig1, _ = classical_branch(sv1, anchor, (y, eta), path)
    sig2, _ = classical_branch(sv2, anchor, (y, eta), path)
    x, xi = sv1.map(y, eta)
    return complex(sig1 * complex(np.asarray(a(x, xi)).ravel()[0]) * np.conj(sig2))


# -- cone supports ----------------------------------------------------------------


@dataclass(frozen=True)
class ConeBox:
    """Conic set ``{(y, eta): lo <= y <= hi, eta/|eta| in dirs}``, ``dirs`` an angle interval (n = 2) or signs (n = 1)."""

    lo: tuple
    hi: tuple
    dirs: tuple = ()

    def contains(self, y, eta):
        y = np.atleast_2d(y)
        eta = np.atleast_2d(eta)
        ok = np.all((y >= np.asarray(self.lo) - 1e-12) & (y <= np.asarray(self.hi) + 1e-12), axis=-1)
        if self.dirs:
            if eta.shape[-1] == 1:
                ok &= np.isin(np.sign(eta[:, 0]), self.dirs)
            else:
                a0, a1 = self.dirs
                ang = np.mod(np.arctan2(eta[:, 1], eta[:, 0]) - a0, 2 * np.pi)
                ok &= ang <= np.mod(a1 - a0, 2 * np.pi) + 1e-12
        return ok

    def intersect(self, other):
        lo = tuple(np.maximum(self.lo, other.lo))
        hi = tuple(np.minimum(self.hi, other.hi))
        dirs = self.dirs or other.dirs
        if self.dirs and other.dirs and len(self.dirs) and isinstance(self.dirs[0], (int, np.integer)):
            dirs = tuple(sorted(set(self.dirs) & set(other.dirs)))
        return ConeBox(lo, hi, dirs)

    def empty(self):
        return bool(np.any(np.asarray(self.lo) > np.asarray(self.hi)))


def preimage_box(phi, box, domain, samples=2000, rng=None):
    """Bounding box of ``{theta in domain: Phi(theta) in box}`` from random samples (an over-approximation up to sampling)."""
    rng = np.random.default_rng(rng)
    n = phi.n
    y = rng.uniform(domain.lo, domain.hi, size=(samples, n))
    eta = rng.standard_normal((samples, n))
    eta /= np.linalg.norm(eta, axis=-1, keepdims=True)
    keep = domain.contains(y, eta)
    x, xi = phi(y[keep], eta[keep])
    hit = box.contains(x, xi)
    if not np.any(hit):
        return ConeBox(tuple(np.full(n, np.inf)), tuple(np.full(n, -np.inf)), domain.dirs)
    yy = y[keep][hit]
    return ConeBox(tuple(yy.min(axis=0)), tuple(yy.max(axis=0)), domain.dirs)


def star_support(supp1, supp2, phi, domain, rng=None):
    """Over-approximation of ``cone supp V1  intersected with  Phi^-1(cone supp V2)``."""
    return supp1.intersect(preimage_box(phi, supp2, domain, rng=rng))

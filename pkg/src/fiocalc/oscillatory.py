"""Brute-force oscillatory-integral oracle for FIO kernels at n = 1, 2.

Kernels are evaluated by direct quadrature of

    V(x, y) = (2 pi)^-n  int e^{i phi(x; y, eta)} p(y, eta) |det phi_x_eta|^{1/2} w(x; y, eta) d eta

and probed with a Gaussian window ``rho`` at frequency ``lam * xi0``. Products
of kernels (``V2^* V1``, ``V2 V1``, ``V2^* A V1``) are evaluated by quadrature
in the intermediate variable. No stationary-phase formula is used anywhere in
the numerics; the known constant ``c`` only normalises the result.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import erfc

from . import inertia as _in
from .canonical import Composed
from .errors import DomainError, FIOError, QuadratureBudgetError
from .phase import PhaseSpec
from .symbols import Amplitude, ipow

DEFAULT_BUDGET = 2_000_000_000


def smooth_step(t):
    """C-infinity step: 0 for ``t <= 0``, 1 for ``t >= 1``."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
        b = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return a / (a + b)


def plateau(d, radius, taper):
    """Smooth plateau in the distance ``d``: 1 well inside ``radius``, Gaussian-fast decay outside."""
    return 0.5 * erfc((np.asarray(d, dtype=float) - radius) / taper)


# -- specifications -----------------------------------------------------------


@dataclass
class Cutoff:
    """Cutoff ``w(x; y, eta)`` of the kernel.

    ``r0`` is the low-frequency radius: ``w = 0`` for ``|eta| <= r0 / 2`` and
    the radial factor is 1 from ``|eta| >= r0`` on. ``width`` is the plateau
    radius of the spatial factor in ``|x - x*(y, eta)|`` (``None`` means the
    spatial factor is identically 1, admissible when ``phi_eta`` vanishes only
    at ``x*``). Both factors are homogeneous of degree 0 for large ``eta``.
    """

    r0: float = 1.0
    width: float | None = None
    taper: float = 0.5

    def radial(self, r):
        return smooth_step((np.asarray(r) - 0.5 * self.r0) / (0.5 * self.r0))

    def spatial(self, dist):
        if self.width is None:
            return np.ones_like(dist)
        return plateau(dist, self.width, self.taper)


@dataclass
class KernelSpec:
    """Data of the kernel of one FIO.

    ``phase`` must be a real-chart phase in the default chart or a gaussian
    phase. ``nr``/``nang``/``radius`` set the polar quadrature used by
    :func:`synthesize_kernel`.
    """

    map: object
    phase: PhaseSpec
    amplitude: Amplitude = field(default_factory=Amplitude.constant)
    cutoff: Cutoff = field(default_factory=Cutoff)
    nr: int = 256
    nang: int = 256
    radius: float = 60.0

    def __post_init__(self):
        if self.map.n not in (1, 2):
            raise DomainError("the oscillatory oracle supports n = 1 and n = 2 only")
        if self.phase.kind not in ("real_chart", "gaussian") or self.phase.chart is not None:
            raise DomainError("kernels use the default-chart real phase or the gaussian phase")
        if self.phase.map is not self.map:
            raise DomainError("phase and kernel must refer to the same canonical map")

    @property
    def n(self):
        return self.map.n

    @property
    def order(self):
        return self.amplitude.order

    @classmethod
    def build(cls, phi_map, kind="real_chart", amplitude=None, eps=1.0, **kw):
        amp = Amplitude.constant() if amplitude is None else amplitude
        return cls(phi_map, PhaseSpec(kind, phi_map, eps=eps), amp, **kw)

    def with_phase(self, kind, eps=1.0):
        """Same operator written with another phase kind (amplitude transferred)."""
        target = PhaseSpec(kind, self.map, eps=eps)
        source, amp = self.phase, self.amplitude

        def f(y, eta):
            return amp(y, eta) * transfer_factor(source, target, y, eta)

        return replace(self, phase=target, amplitude=Amplitude(f, amp.order, amp.text))


@dataclass
class Window:
    """Frequency window used for a probe.

    ``kind="absolute"``: plateau of radius ``plateau`` around the centre with
    erfc taper ``taper``. ``kind="conic"``: radial plateau ``plateau * |c|``
    and taper ``taper * |c|`` around ``|c|`` (``plateau``, ``taper`` are then
    relative), times an angular plateau of half-width ``angle`` (n = 2).
    """

    kind: str = "absolute"
    plateau: float = 11.0
    taper: float = 2.0
    tail: float = 4.5
    angle: float = 0.5

    def weights(self, eta, c):
        c = np.asarray(c, dtype=float)
        if self.kind == "absolute":
            return plateau(np.linalg.norm(eta - c, axis=-1), self.plateau, self.taper)
        rc = np.linalg.norm(c)
        r = np.linalg.norm(eta, axis=-1)
        w = plateau(np.abs(r - rc), self.plateau * rc, self.taper * rc)
        if c.shape[-1] == 2:
            ang = np.angle((eta[..., 0] + 1j * eta[..., 1]) * np.exp(-1j * np.arctan2(c[1], c[0])))
            w = w * plateau(np.abs(ang), self.angle, 0.25 * self.angle)
        elif c.shape[-1] == 1:
            w = w * (np.sign(eta[..., 0]) == np.sign(c[0]))
        return w

    def extent(self, c):
        """Half-width of a box containing the support of ``weights`` around ``c``."""
        if self.kind == "absolute":
            return self.plateau + self.tail * self.taper
        rc = np.linalg.norm(c)
        return rc * (self.plateau + self.tail * self.taper)

    def taper_abs(self, c):
        return self.taper if self.kind == "absolute" else self.taper * np.linalg.norm(c)


@dataclass
class ExtractionSpec:
    """Probe ``(y0, eta0)``, Gaussian window ``rho`` of width ``sigma`` and the lambda grid.

    ``window`` is the frequency window of every kernel stage (default: conic
    at n = 1, absolute at n = 2). ``box`` is the spatial half-width of the
    output grid in units of ``sigma``; ``mid_box`` that of intermediate grids.
    ``oversample`` scales all automatically chosen node densities.
    """

    y0: np.ndarray
    eta0: np.ndarray
    lambdas: np.ndarray = field(default_factory=lambda: np.array([50.0, 80.0, 120.0, 200.0, 300.0, 400.0]))
    sigma: float = 0.5
    window: Window | None = None
    box: float = 6.0
    mid_box: float = 2.5
    oversample: float = 1.0
    prune: float = 1e-11
    fit_tol: float = 0.02
    c_sign: int = -1
    budget: int = DEFAULT_BUDGET

    def __post_init__(self):
        self.y0 = np.atleast_1d(np.asarray(self.y0, dtype=float))
        self.eta0 = np.atleast_1d(np.asarray(self.eta0, dtype=float))
        self.lambdas = np.sort(np.atleast_1d(np.asarray(self.lambdas, dtype=float)))
        if np.any(self.lambdas <= 0):
            raise DomainError("lambda grid must be positive")
        if self.c_sign not in (-1, 1):
            raise DomainError("c_sign must be -1 or +1")
        if self.window is None:
            if self.y0.size == 1:
                self.window = Window("conic", plateau=0.35, taper=0.08, tail=4.5)
            else:
                self.window = Window("absolute")

    def rho(self, x, x0):
        return np.exp(-np.sum((x - x0) ** 2, axis=-1) / (2 * self.sigma**2))


# -- amplitude transfer between phases ------------------------------------------


def transfer_factor(source, target, y, eta, steps=64):
    """``i^(Delta Theta^r)`` along ``phi_xx(tau) = (1 - tau) A + tau B``, batched over points."""
    if source.kind == target.kind and source.eps == target.eps:
        return np.ones(np.shape(eta)[:-1], dtype=complex)
    y = np.asarray(y, dtype=float)
    eta = np.asarray(eta, dtype=float)
    y, eta = np.broadcast_arrays(y, eta)
    xs, xis, J = source.map.full(y, eta)
    A = source.phi_xx(xs, xis, eta)
    B = target.phi_xx(xs, xis, eta)
    tau = np.linspace(0.0, 1.0, steps + 1).reshape((-1,) + (1,) * A.ndim)
    P = J.xi_eta[None] - ((1 - tau) * A[None] + tau * B[None]) @ J.x_eta[None]
    d = np.linalg.det(P)
    if np.any(np.abs(d) < 1e-13):
        raise DomainError("phase homotopy passes through det phi_x_eta = 0")
    inc = np.angle((d[1:] / d[:-1]) ** 2)
    if np.any(np.abs(inc) >= np.pi / 2):
        return transfer_factor(source, target, y, eta, 4 * steps)
    return np.exp(0.5j * np.pi * np.sum(inc, axis=0) / (2 * np.pi))


# -- kernel quadrature ----------------------------------------------------------


@dataclass
class EtaNodes:
    """Quadrature nodes in one cotangent fibre with all weights folded in except ``e^{i phi}``."""

    eta: np.ndarray
    weight: np.ndarray


def _terms(spec, y, nodes, x, conj=False):
    """Matrix ``T[x, k]`` with ``sum_k T[x, k] = V(x, y)`` for the nodes ``k``."""
    n = spec.n
    eta = nodes.eta
    yb = np.broadcast_to(y, eta.shape)
    xs, xis, J = spec.map.full(yb, eta)
    amp = spec.amplitude(yb, eta) * nodes.weight * spec.cutoff.radial(np.linalg.norm(eta, axis=-1))
    amp = amp * (2 * np.pi) ** (-n)
    base = np.einsum("ka,ka->k", xs, xis)
    ph = x @ xis.T - base[None]
    if spec.phase.kind == "gaussian":
        eps = spec.phase.eps
        r = np.linalg.norm(eta, axis=-1)
        d2 = np.sum(x * x, axis=-1)[:, None] - 2 * x @ xs.T + np.sum(xs * xs, axis=-1)[None]
        M = J.xi_eta - 1j * eps * r[:, None, None] * J.x_eta
        detM = np.linalg.det(M)
        v = np.linalg.solve(np.swapaxes(M, -1, -2), (eta / r[:, None])[..., None])[..., 0]
        det = detM[None] * (1 + 1j * eps * (x @ v.T - np.einsum("ka,ka->k", xs, v)[None]))
        ph = ph + 0.5j * eps * r[None] * d2
        half = np.sqrt(np.abs(det))
    else:
        half = np.sqrt(np.abs(np.linalg.det(J.xi_eta)))[None]
    T = np.exp(1j * ph) * half * amp[None]
    if spec.cutoff.width is not None:
        dist = np.sqrt(np.maximum(np.sum(x * x, axis=-1)[:, None] - 2 * x @ xs.T + np.sum(xs * xs, axis=-1)[None], 0))
        T = T * spec.cutoff.spatial(dist)
    return np.conj(T) if conj else T


@dataclass
class Lattice:
    """Nodes ``origin + h * idx`` of a uniform grid, a subset of the box ``counts``."""

    origin: np.ndarray
    h: float
    counts: tuple
    idx: np.ndarray

    @property
    def points(self):
        return self.origin + self.h * self.idx

    @property
    def weights(self):
        return np.full(len(self.idx), self.h ** len(self.origin))

    def __len__(self):
        return len(self.idx)

    def subset(self, keep):
        return Lattice(self.origin, self.h, self.counts, self.idx[keep])

    def _axis(self, a, Q, sign):
        ax = self.origin[a] + self.h * np.arange(self.counts[a])
        return np.exp(sign * 1j * np.outer(ax, Q[:, a]))

    def plane_out(self, Q, coef):
        """``sum_k coef_k exp(i x . Q_k)`` at the nodes."""
        E0 = self._axis(0, Q, 1.0)
        if len(self.origin) == 1:
            return E0 @ coef
        full = (E0 * coef[None]) @ self._axis(1, Q, 1.0).T
        return full[self.idx[:, 0], self.idx[:, 1]]

    def plane_in(self, vals, Q):
        """``sum_nodes vals(z) exp(-i z . Q_k)`` for every ``k``."""
        W = np.zeros(self.counts, dtype=complex)
        W[tuple(self.idx.T)] = vals
        E0 = self._axis(0, Q, -1.0).T
        if len(self.origin) == 1:
            return E0 @ W
        return np.sum((E0 @ W) * self._axis(1, Q, -1.0).T, axis=1)


def _plane_data(spec, y, nodes):
    """For real-chart kernels ``V(x, y) = sum_k coef_k exp(i x . xi_k)``; returns ``(xi, coef)``."""
    eta = nodes.eta
    yb = np.broadcast_to(y, eta.shape)
    xs, xis, J = spec.map.full(yb, eta)
    amp = spec.amplitude(yb, eta) * nodes.weight * spec.cutoff.radial(np.linalg.norm(eta, axis=-1))
    amp = amp * (2 * np.pi) ** (-spec.n) * np.sqrt(np.abs(np.linalg.det(J.xi_eta)))
    return np.ascontiguousarray(xis), amp * np.exp(-1j * np.einsum("ka,ka->k", xs, xis))


def _is_plane(spec):
    return spec.phase.kind == "real_chart" and spec.cutoff.width is None


def _kernel_column(spec, y, nodes, x, conj=False, chunk=4_000_000):
    """``V(x, y)`` (or its conjugate) at the nodes of ``x`` (a Lattice or an array of points)."""
    if isinstance(x, Lattice):
        if _is_plane(spec):
            out = x.plane_out(*_plane_data(spec, y, nodes))
            return np.conj(out) if conj else out
        x = x.points
    out = np.empty(len(x), dtype=complex)
    step = max(1, chunk // max(1, len(nodes.eta)))
    for a in range(0, len(x), step):
        out[a : a + step] = _terms(spec, y, nodes, x[a : a + step], conj).sum(axis=1)
    return out


def polar_nodes(n, r_min, r_max, nr, nang):
    """Gauss-Legendre in ``|eta|`` on ``[r_min, r_max]`` times the trapezoid rule on the circle."""
    t, w = np.polynomial.legendre.leggauss(nr)
    r = 0.5 * (r_max - r_min) * t + 0.5 * (r_max + r_min)
    wr = 0.5 * (r_max - r_min) * w
    if n == 1:
        eta = np.concatenate([r, -r])[:, None]
        return EtaNodes(eta, np.concatenate([wr, wr]))
    th = 2 * np.pi * np.arange(nang) / nang
    R, TH = np.meshgrid(r, th, indexing="ij")
    W = (wr * r)[:, None] * np.full(nang, 2 * np.pi / nang)[None]
    eta = np.stack([R * np.cos(TH), R * np.sin(TH)], axis=-1).reshape(-1, 2)
    return EtaNodes(eta, W.ravel())


def synthesize_kernel(spec, x, y, budget=DEFAULT_BUDGET):
    """Kernel values ``V(x_j, y)`` by polar quadrature with a super-exponential upper window.

    Parameters
    ----------
    spec : KernelSpec
    x : array_like, shape (m, n) or (n,)
    y : array_like, shape (n,)
    budget : int
        Maximal number of (point, node) evaluations.

    Returns
    -------
    ndarray of complex, shape (m,)
    """
    n = spec.n
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if n == 1 and x.shape[0] == 1 and x.shape[1] != 1:
        x = x.T
    y = np.atleast_1d(np.asarray(y, dtype=float))
    nang = 1 if n == 1 else spec.nang
    count = spec.nr * (2 if n == 1 else nang)
    if count * len(x) > budget:
        raise QuadratureBudgetError(
            f"synthesize_kernel needs {spec.nr} radial x {nang} angular nodes at {len(x)} points, "
            f"{count * len(x)} evaluations > budget {budget}"
        )
    r_max = spec.radius * 37.0 ** 0.125
    nodes = polar_nodes(n, 0.5 * spec.cutoff.r0, r_max, spec.nr, nang)
    r = np.linalg.norm(nodes.eta, axis=-1)
    nodes.weight = nodes.weight * np.exp(-((r / spec.radius) ** 8))
    return _kernel_column(spec, y, nodes, x)


# -- chains of kernels ----------------------------------------------------------


@dataclass
class Stage:
    """One factor of a kernel product; ``adjoint`` uses ``conj V(z, x)``."""

    spec: KernelSpec
    adjoint: bool = False

    @property
    def map(self):
        return self.spec.map.inverse() if self.adjoint else self.spec.map


def chain_map(stages):
    """Canonical map of the product ``stages[-1] ... stages[0]``."""
    total = stages[0].map
    for st in stages[1:]:
        total = Composed(st.map, total)
    return total


def _grid(center, half, h):
    center = np.atleast_1d(np.asarray(center, float))
    n = len(center)
    k = int(np.ceil(half / h))
    ax = np.arange(-k, k + 1)
    idx = np.stack(np.meshgrid(*([ax] * n), indexing="ij"), axis=-1).reshape(-1, n)
    keep = np.linalg.norm(idx * h, axis=-1) <= half * (1 + 1e-12) if n > 1 else np.ones(len(idx), bool)
    return Lattice(center - k * h, h, (2 * k + 1,) * n, idx[keep] + k)


def _window_nodes(window, c, h, n):
    c = np.asarray(c, dtype=float)
    ext = window.extent(c)
    lat = _grid(c, ext, h)
    pts, w = lat.points, lat.weights
    wt = window.weights(pts, c)
    keep = (wt > 1e-17) & (np.linalg.norm(pts, axis=-1) > 0)
    return EtaNodes(pts[keep], w[keep] * wt[keep])


@dataclass
class StagePlan:
    stage: Stage
    slot: np.ndarray
    center: np.ndarray
    nodes: EtaNodes
    out_point: np.ndarray
    out_freq: np.ndarray
    bandwidth: float


def _plan_stage(stage, slot, freq, window, box, oversample):
    """Window nodes in the fibre over ``slot`` centred at ``freq`` and the output base point."""
    spec = stage.spec
    n = spec.n
    ext = window.extent(freq)
    probe = freq + ext * np.concatenate([np.eye(n), -np.eye(n), np.zeros((1, n))]) * 0.999
    probe = probe[np.linalg.norm(probe, axis=-1) > 0]
    if stage.adjoint:
        x_out, xi_out = spec.map.inverse()(slot, freq)
        xi_out = np.asarray(xi_out, float)
        probe = xi_out + (probe - freq)
        xs, xis, J = spec.map.full(np.broadcast_to(x_out, probe.shape), probe)
        spread = window.extent(xi_out)
        xspread = float(np.max(np.linalg.norm(xs - slot, axis=-1)))
    else:
        x_out, xi_out = spec.map(slot, freq)
        xs, xis, J = spec.map.full(np.broadcast_to(slot, probe.shape), probe)
        spread = float(np.max(np.linalg.norm(xis - xi_out, axis=-1)))
        xspread = float(np.max(np.linalg.norm(xs - x_out, axis=-1)))
    xi_norm = float(np.max(np.linalg.norm(J.xi_eta, ord=2, axis=(-2, -1))))
    L = (box + xspread) * xi_norm * 1.2 + 1.0
    h_eta = 2 * np.pi / (L + 10.0 / window.taper_abs(freq) + 2.0) / oversample
    center = xi_out if stage.adjoint else freq
    nodes = _window_nodes(window, center, h_eta, n)
    if spec.phase.kind == "gaussian":
        spread += 6.0 * np.sqrt(spec.phase.eps * np.linalg.norm(freq) * 1.5)
    return StagePlan(stage, np.asarray(slot, float), center, nodes, np.asarray(x_out[0] if np.ndim(x_out) > 1 else x_out, float),
                     np.asarray(xi_out[0] if np.ndim(xi_out) > 1 else xi_out, float), spread + 2.0)


@dataclass
class ProbeResult:
    """Raw probe integrals and the normalised symbol estimates per lambda."""

    lambdas: np.ndarray
    integrals: np.ndarray
    normalised: np.ndarray
    order: float
    x0: np.ndarray
    xi0: np.ndarray
    nodes: list = field(default_factory=list)


def probe_integrals(stages, probe):
    """``I(lam) = int e^{-i lam x.xi0} rho(x) K(x, y0) dx`` for the kernel ``K`` of the chained product."""
    total = chain_map(stages)
    n = total.n
    x0, xi0 = (np.atleast_1d(a).reshape(-1)[:n] for a in total(probe.y0, probe.eta0))
    order = sum(st.spec.order for st in stages)
    c_unit = extraction_constant(total, probe.y0, probe.eta0, sign=probe.c_sign)
    vals = []
    counts = []
    for lam in probe.lambdas:
        val, cnt = _probe_one(stages, probe, lam, x0, xi0)
        vals.append(val)
        counts.append(cnt)
    vals = np.array(vals)
    c = np.exp(-1j * probe.lambdas * (x0 @ xi0)) * c_unit
    norm = vals / (c * probe.lambdas**order)
    return ProbeResult(probe.lambdas, vals, norm, order, x0, xi0, counts)


def _probe_one(stages, probe, lam, x0, xi0):
    n = len(x0)
    slot = probe.y0
    freq = lam * probe.eta0
    plans = []
    for k, st in enumerate(stages):
        last = k == len(stages) - 1
        box = probe.box * probe.sigma if last else probe.mid_box
        plan = _plan_stage(st, slot, freq, probe.window, box, probe.oversample)
        plans.append(plan)
        slot, freq = plan.out_point, plan.out_freq
    if np.linalg.norm(slot - x0) > 1e-6 * (1 + np.linalg.norm(x0)) or np.linalg.norm(freq - lam * xi0) > 1e-6 * lam:
        raise FIOError("kernel chain does not follow the probe ray")
    evals = 0
    src = None
    for k, plan in enumerate(plans):
        last = k == len(plans) - 1
        half = probe.box * probe.sigma if last else probe.mid_box + _x_spread(plan)
        nxt = 16.0 / probe.sigma if last else plans[k + 1].bandwidth + 4.0
        h = 2 * np.pi / (plan.bandwidth + nxt) / probe.oversample
        lat = _grid(plan.out_point, half, h)
        x, wx = lat.points, lat.weights
        if src is None:
            u = _kernel_column(plan.stage.spec, probe.y0, plan.nodes, lat)
            evals += len(x) * len(plan.nodes.eta)
        else:
            z, wz, uz = src
            u, cnt = _apply(plan, z, wz, uz, lat, probe.budget - evals)
            evals += cnt
        if evals > probe.budget:
            raise QuadratureBudgetError(f"probe at lambda={lam} needs {evals} evaluations > budget {probe.budget}")
        if not last:
            keep = np.abs(u) > probe.prune * np.max(np.abs(u))
            src = (lat.subset(keep), wx[keep], u[keep])
    rho = probe.rho(x, x0)
    val = np.sum(wx * rho * np.exp(-1j * lam * (x @ xi0)) * u)
    return complex(val), evals


def _x_spread(plan):
    spec = plan.stage.spec
    eta = plan.nodes.eta
    if plan.stage.adjoint:
        return 0.0
    xs, _ = spec.map(np.broadcast_to(plan.slot, eta.shape), eta)
    return float(np.max(np.linalg.norm(xs - plan.out_point, axis=-1)))


def _apply(plan, zlat, wz, uz, xlat, budget):
    """Apply one stage to samples ``uz`` on the lattice ``zlat``; returns values on ``xlat``."""
    spec = plan.stage.spec
    m = len(plan.nodes.eta)
    cnt = len(zlat) * len(xlat) * m
    if cnt > budget:
        raise QuadratureBudgetError(
            f"stage {spec.map.name} needs {len(zlat)} x {len(xlat)} x {m} = {cnt} evaluations > remaining budget {budget}"
        )
    x = xlat.points
    z = zlat.points
    out = np.zeros(len(x), dtype=complex)
    wu = wz * uz
    if plan.stage.adjoint:
        for j in range(len(x)):
            nodes = _recentre(plan, x[j])
            if _is_plane(spec):
                # sum_z wu(z) conj V(z, x_j) = sum_k conj(coef_k) sum_z wu(z) e^{-i z . xi_k}
                xi, coef = _plane_data(spec, x[j], nodes)
                out[j] = np.sum(np.conj(coef) * zlat.plane_in(wu, xi))
            else:
                out[j] = np.sum(wu * _kernel_column(spec, x[j], nodes, z, conj=True))
    else:
        for j in range(len(z)):
            nodes = _recentre(plan, z[j])
            out += wu[j] * _kernel_column(spec, z[j], nodes, xlat)
    return out, cnt


def _recentre(plan, slot):
    return plan.nodes


# -- extraction -----------------------------------------------------------------


def extraction_constant(phi_map, y0, eta0, sign=-1):
    """``i^(sign * kappa_-(x*_eta^T xi*_eta)) |det xi*_eta|^(-1/2)`` at the probe (without the plane-wave factor)."""
    _, _, J = phi_map.full(np.atleast_1d(y0), np.atleast_1d(eta0))
    xe = np.atleast_2d(J.x_eta.reshape(-1, len(np.atleast_1d(y0)))[: len(np.atleast_1d(y0))])
    ce = np.atleast_2d(J.xi_eta.reshape(-1, len(np.atleast_1d(y0)))[: len(np.atleast_1d(y0))])
    det = np.linalg.det(ce)
    if abs(det) < 1e-10:
        raise DomainError("extraction needs det xi*_eta != 0 at the probe")
    S = xe.T @ ce
    km = _in.kappa_minus(0.5 * (S + S.T))
    return complex(ipow(sign * km) * abs(det) ** -0.5)


@dataclass
class Extraction:
    """Fitted symbol value with error bar and diagnostics."""

    value: complex
    error: float
    slope: float
    low_confidence: bool
    probe: ProbeResult
    b: complex = 0.0

    @property
    def phase_deg(self):
        return float(np.degrees(np.angle(self.value)))


def fit_limit(lambdas, values, order, fit_tol=0.02, integrals=None):
    """Least squares ``values ~ a + b / lam``; error bar from the residual and the 1/lam^2 model change."""
    lam = np.asarray(lambdas, float)
    v = np.asarray(values, complex)
    A = np.stack([np.ones_like(lam), 1 / lam], axis=1)
    coef, *_ = np.linalg.lstsq(A, v, rcond=None)
    res = v - A @ coef
    err = float(np.linalg.norm(res))
    if len(lam) >= 4:
        A2 = np.stack([np.ones_like(lam), 1 / lam, 1 / lam**2], axis=1)
        c2, *_ = np.linalg.lstsq(A2, v, rcond=None)
        err = max(err, float(abs(c2[0] - coef[0])))
    ints = v if integrals is None else np.asarray(integrals)
    slope = float(np.polyfit(np.log(lam), np.log(np.abs(ints)), 1)[0]) if len(lam) > 1 else float("nan")
    low = err > fit_tol or (np.isfinite(slope) and abs(slope - order) > 0.05)
    return complex(coef[0]), complex(coef[1]), err, slope, bool(low)


def extract_chain(stages, probe):
    pr = probe_integrals(stages, probe)
    a, b, err, slope, low = fit_limit(pr.lambdas, pr.normalised, pr.order, probe.fit_tol, pr.integrals)
    return Extraction(a, err, slope, low, pr, b)


def extract_symbol(spec, probe):
    """Estimate ``s_V(y0, eta0)`` from the lambda sweep of the probe integral.

    Parameters
    ----------
    spec : KernelSpec
    probe : ExtractionSpec

    Returns
    -------
    Extraction
        ``value`` is the fitted limit; ``error`` the residual-based error bar;
        ``low_confidence`` flags a poor fit or a lambda exponent off by more
        than 0.05.
    """
    return extract_chain([Stage(spec)], probe)


def compose_numeric(spec1, spec2, probe, mode="star"):
    """Extracted symbol of ``V2^* V1`` (``mode="star"``) or ``V2 V1`` (``mode="product"``)."""
    if mode not in ("star", "product"):
        raise DomainError("mode must be 'star' or 'product'")
    return extract_chain([Stage(spec1), Stage(spec2, adjoint=mode == "star")], probe)


def egorov_numeric(spec_v1, spec_a, spec_v2, probe):
    """Extracted symbol of ``B = V2^* A V1``."""
    return extract_chain([Stage(spec_v1), Stage(spec_a), Stage(spec_v2, adjoint=True)], probe)


def phase_independence_residual(spec_real, spec_gaussian, probe):
    """``|extract(real) - extract(gaussian)|`` together with both extractions."""
    a = extract_symbol(spec_real, probe)
    b = extract_symbol(spec_gaussian, probe)
    return abs(a.value - b.value), a, b


# -- stationary-phase diagnostics of V2^* V1 --------------------------------------


def solve_xi_hat(phi1, phi2, x, y, eta, guess, tol=1e-14, iters=60):
    """Damped Newton solve of ``zeta2(x, xi) = zeta1(y, eta)`` for ``xi``, warm-started at ``guess``."""
    x = np.atleast_1d(np.asarray(x, float))
    target = np.atleast_1d(phi1(y, eta)[1])
    xi = np.atleast_1d(np.asarray(guess, float)).copy()

    def resid(v):
        return np.atleast_1d(phi2(x, v)[1]) - target

    r = resid(xi)
    for _ in range(iters):
        if np.linalg.norm(r) <= tol * (1 + np.linalg.norm(target)):
            return xi
        J = np.atleast_2d(phi2.full(x, xi)[2].xi_eta)
        step = np.linalg.solve(J, r)
        t = 1.0
        while t > 1e-6:
            cand = xi - t * step
            rc = resid(cand)
            if np.linalg.norm(rc) < np.linalg.norm(r):
                xi, r = cand, rc
                break
            t *= 0.5
        else:
            break
    if np.linalg.norm(r) > 1e-10 * (1 + np.linalg.norm(target)):
        raise FIOError(f"xi-hat solve did not converge (residual {np.linalg.norm(r):.3e})")
    return xi


_D1 = np.array([1 / 280, -4 / 105, 1 / 5, -4 / 5, 0.0, 4 / 5, -1 / 5, 4 / 105, -1 / 280])
_D2 = np.array([-1 / 560, 8 / 315, -1 / 5, 8 / 5, -205 / 72, 8 / 5, -1 / 5, 8 / 315, -1 / 560])


def _grad(f, p, h):
    g = np.zeros(len(p))
    for a in range(len(p)):
        e = np.zeros(len(p))
        e[a] = h
        g[a] = sum(c * f(p + k * e) for k, c in zip(range(-4, 5), _D1)) / h
    return g


def _hess(f, p, h):
    n = len(p)
    H = np.zeros((n, n))
    for a in range(n):
        ea = np.zeros(n)
        ea[a] = h
        H[a, a] = sum(c * f(p + k * ea) for k, c in zip(range(-4, 5), _D2)) / h**2
        for b in range(a + 1, n):
            eb = np.zeros(n)
            eb[b] = h
            H[a, b] = H[b, a] = sum(c * _grad(lambda q: f(q + k * ea), p, h)[b] for k, c in zip(range(-4, 5), _D1)) / h
    return H


@dataclass
class ComposedPhaseReport:
    """Residuals of the identities satisfied by the phase of ``V2^* V1`` at one point."""

    phi_zero: float
    phi_x: float
    phi_x_eta: float
    phi_eta_eta: float
    hessian_signature: int
    hessian_rank: int

    @property
    def max_residual(self):
        return max(self.phi_zero, self.phi_x, self.phi_x_eta, self.phi_eta_eta)


def composed_phase_check(phi1, phi2, y, eta, h=2e-2):
    """Build ``phi(x; y, eta) = (z2(x, xi_hat) - z1(y, eta)) . zeta1(y, eta)`` numerically and test its identities.

    Requires ``det zeta1_eta != 0`` and ``det zeta2_xi != 0`` (real-chart
    phases in the default chart). Derivatives are 8th-order central
    differences; ``xi_hat`` comes from a damped Newton solve.
    """
    y = np.atleast_1d(np.asarray(y, float))
    eta = np.atleast_1d(np.asarray(eta, float))
    total = Composed(phi2.inverse(), phi1)
    xs, xis, Jt = total.full(y, eta)
    xs, xis = np.atleast_1d(xs), np.atleast_1d(xis)
    z1, zeta1, J1 = phi1.full(y, eta)
    z1 = np.atleast_1d(z1)
    zeta1 = np.atleast_1d(zeta1)
    cache = {}

    def xi_hat(x, yy, ee):
        key = (tuple(np.round(x, 15)), tuple(yy), tuple(ee))
        if key not in cache:
            cache[key] = solve_xi_hat(phi1, phi2, x, yy, ee, xis)
        return cache[key]

    def phi(x, yy=y, ee=eta):
        z1v, zeta1v = (np.atleast_1d(a) for a in phi1(yy, ee))
        z2 = np.atleast_1d(phi2(x, xi_hat(x, yy, ee))[0])
        return float((z2 - z1v) @ zeta1v)

    n = len(y)
    hx = h * (1 + np.linalg.norm(xs))
    he = h * np.linalg.norm(eta)
    r0 = abs(phi(xs))
    rx = float(np.max(np.abs(_grad(phi, xs, hx) - xis)))
    # mixed derivative phi_x_eta at x*
    mixed = np.zeros((n, n))
    for b in range(n):
        eb = np.zeros(n)
        eb[b] = he
        mixed[:, b] = sum(c * _grad(lambda q: phi(q, y, eta + k * eb), xs, hx) for k, c in zip(range(-4, 5), _D1)) / he
    J2 = phi2.full(xs, xis)[2]
    pred_xe = np.linalg.solve(np.atleast_2d(J2.xi_eta), np.atleast_2d(J1.xi_eta))
    rxe = float(np.max(np.abs(mixed - pred_xe)))
    Hee = _hess(lambda e: phi(xs, y, e), eta, he)
    A1 = np.atleast_2d(J1.x_eta) @ np.linalg.inv(np.atleast_2d(J1.xi_eta))
    A2 = np.atleast_2d(J2.x_eta) @ np.linalg.inv(np.atleast_2d(J2.xi_eta))
    Ze = np.atleast_2d(J1.xi_eta)
    pred_ee = Ze.T @ (A2 - A1) @ Ze
    ree = float(np.max(np.abs(Hee - pred_ee)))
    # Hessian of psi in (z, xi) at the stationary point
    Zx = np.atleast_2d(J2.xi_eta)
    psi_xx = np.atleast_2d(J2.x_eta).T @ Zx
    Hs = np.block([[np.zeros((n, n)), Zx], [Zx.T, 0.5 * (psi_xx + psi_xx.T)]])
    inr = _in.inertia(Hs)
    return ComposedPhaseReport(r0, rx, rxe, ree, inr.sgn, inr.rank)


# -- output ---------------------------------------------------------------------


def _fmt(v):
    return repr(float(v)) if np.isfinite(v) else str(v)


def write_probe_csv(path, extraction):
    """Per-lambda probe values followed by the fit, 17 significant digits."""
    pr = extraction.probe
    lines = ["lambda,re_integral,im_integral,re_normalised,im_normalised,abs_normalised,evaluations"]
    for lam, v, s, cnt in zip(pr.lambdas, pr.integrals, pr.normalised, pr.nodes):
        lines.append(",".join([f"{lam:.17g}", f"{v.real:.17g}", f"{v.imag:.17g}", f"{s.real:.17g}", f"{s.imag:.17g}", f"{abs(s):.17g}", str(cnt)]))
    v = extraction.value
    lines.append(f"fit,{v.real:.17g},{v.imag:.17g},{extraction.error:.17g},{extraction.slope:.17g},{int(extraction.low_confidence)},")
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


_DTYPES = {"f8": np.float64, "c16": np.complex128}


def dump_array(path, arr):
    """Binary dump: magic ``FIOK``, dtype tag, ndim, dims (uint64), then row-major little-endian data."""
    arr = np.ascontiguousarray(arr)
    tag = "c16" if np.iscomplexobj(arr) else "f8"
    arr = arr.astype(_DTYPES[tag]).astype(np.dtype(_DTYPES[tag]).newbyteorder("<"))
    with open(path, "wb") as fh:
        fh.write(b"FIOK")
        fh.write(tag.ljust(4).encode("ascii"))
        fh.write(struct.pack("<Q", arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        fh.write(arr.tobytes(order="C"))


def load_array(path):
    with open(path, "rb") as fh:
        if fh.read(4) != b"FIOK":
            raise DomainError(f"{path} is not a kernel dump")
        tag = fh.read(4).decode("ascii").strip()
        (ndim,) = struct.unpack("<Q", fh.read(8))
        shape = struct.unpack(f"<{ndim}Q", fh.read(8 * ndim))
        data = np.frombuffer(fh.read(), dtype=np.dtype(_DTYPES[tag]).newbyteorder("<"))
    return data.reshape(shape).astype(_DTYPES[tag])


# -- adjoint-index adjudication -----------------------------------------------------


def fast_probe(y0, eta0, lambdas):
    """Coarser n = 2 probe settings for kernel products (accuracy about 1e-3)."""
    return ExtractionSpec(y0, eta0, lambdas, sigma=0.7, box=5.0, prune=1e-5, budget=6_000_000_000,
                          window=Window(plateau=8.0, taper=1.5, tail=3.5))


@dataclass
class AdjointVerdict:
    """Outcome of the n = 2 adjoint adjudication."""

    direct: Extraction
    composed: Extraction | None
    step5: complex
    corollary: complex
    winner: str | None
    routes_agree: bool | None

    @property
    def gap(self):
        return None if self.composed is None else abs(self.direct.value - self.composed.value)


def _matches(value, target, deg=10.0, mod=0.05):
    dphi = abs(np.degrees(np.angle(value / target)))
    return dphi <= deg and abs(abs(value) - abs(target)) <= mod * abs(target)


def adjudicate_adjoint(t=1.0, y0=(0.3, -0.2), eta0=(0.6, 0.8), lambdas=(30.0, 45.0, 60.0, 90.0, 120.0),
                       compose_lambdas=(30.0, 40.0, 50.0, 60.0), with_compose=True):
    """Decide between the two adjoint predictions for the n = 2 half-wave ``U_t``.

    The direct route extracts the symbol of the time-reversed kernel (the
    kernel of ``U_t^*``); the second route evaluates ``U_t^* I`` through the
    z-integral.
    """
    from .canonical import HalfWave, Identity
    from .symbols import PrincipalSymbol, adjoint_symbol

    hw = HalfWave(2, t)
    pred = adjoint_symbol(PrincipalSymbol.unit(hw), np.asarray(y0), np.asarray(eta0))
    direct = extract_symbol(KernelSpec.build(HalfWave(2, -t)), ExtractionSpec(y0, eta0, lambdas))
    composed = None
    agree = None
    if with_compose:
        composed = compose_numeric(KernelSpec.build(Identity(2)), KernelSpec.build(hw), fast_probe(y0, eta0, compose_lambdas))
        agree = bool(abs(direct.value - composed.value) <= direct.error + composed.error)
    winner = None
    if _matches(direct.value, pred.step5):
        winner = "step5"
    elif _matches(direct.value, pred.corollary):
        winner = "corollary"
    return AdjointVerdict(direct, composed, pred.step5, pred.corollary, winner, agree)

"""Theta functions, their branches along paths, Maslov indices and cocycle numbers."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import inertia as _in
from .errors import DomainError, FIOError, RefinementError
from .phase import PhaseSpec, phase_jet

RANK_RTOL = 1e-8
HYSTERESIS = 10.0


def _sym_tol(M):
    return _in.DEFAULT_RTOL * max(1.0, float(np.linalg.norm(M, 2)))


def theta_s_value(phi_eta_eta, tol=None):
    """``pi^-1 arg det+(phi_eta_eta / i) - rank / 2`` for a single matrix.

    The rank is taken as the rank of ``phi_eta_eta`` at the same threshold as
    the kernel projector of ``det+``, which equals ``rank x*_eta`` whenever
    ``phi_x_eta`` is nondegenerate.
    """
    M = np.atleast_2d(np.asarray(phi_eta_eta, dtype=complex)) / 1j
    M = 0.5 * (M + M.T)
    tol = _sym_tol(M) if tol is None else tol
    rank = _in.numerical_rank(M, tol)
    return _in.det_plus_arg(M, tol) / np.pi - 0.5 * rank


def theta_s(jet, tol=None):
    """Theta^s of a jet; batched jets give an array."""
    P = jet.phi_eta_eta
    if P.ndim == 2:
        return theta_s_value(P, tol)
    out = np.empty(P.shape[:-2])
    for idx in np.ndindex(out.shape):
        out[idx] = theta_s_value(P[idx], tol)
    return out


def theta_r_pointwise(jet):
    """Principal value of ``(2 pi)^-1 arg det^2 phi_x_eta`` in ``(-1/2, 1/2]``."""
    d = np.linalg.det(jet.phi_x_eta)
    return np.angle(d * d) / (2 * np.pi)


# -- paths --------------------------------------------------------------------


@dataclass
class Path:
    """A path ``s -> (y(s), eta(s))`` on ``[0, 1]`` sampled at ``samples`` points."""

    func: Callable
    samples: int = 101

    def __call__(self, s):
        return self.func(np.asarray(s, dtype=float))

    def grid(self):
        return np.linspace(0.0, 1.0, self.samples)

    def refined(self, factor=2):
        return Path(self.func, (self.samples - 1) * factor + 1)

    @classmethod
    def from_waypoints(cls, waypoints, per_segment=50):
        """Piecewise-linear path through ``[(y, eta), ...]``."""
        pts = [np.concatenate([np.atleast_1d(y), np.atleast_1d(e)]).astype(float) for y, e in waypoints]
        if len(pts) < 2:
            raise DomainError("a path needs at least two waypoints")
        P = np.stack(pts)
        nseg = len(P) - 1
        n = P.shape[1] // 2

        def func(s):
            t = np.clip(s, 0.0, 1.0) * nseg
            k = np.minimum(np.floor(t).astype(int), nseg - 1)
            w = (t - k)[..., None]
            z = (1 - w) * P[k] + w * P[k + 1]
            return z[..., :n], z[..., n:]

        return cls(func, nseg * per_segment + 1)

    @classmethod
    def eta_circle(cls, y, radius=1.0, samples=101, turns=1.0, start=0.0):
        """Loop ``eta(s) = radius (cos, sin)(start + 2 pi turns s)`` at fixed ``y`` (n = 2)."""
        y = np.asarray(y, dtype=float)

        def func(s):
            a = start + 2 * np.pi * turns * s
            eta = radius * np.stack([np.cos(a), np.sin(a)], axis=-1)
            return np.broadcast_to(y, eta.shape).copy(), eta

        return cls(func, samples)


@dataclass(frozen=True)
class RankEvent:
    """Rank change of ``x*_eta`` near ``s``; ``min_rank`` is the rank at the event itself."""

    s: float
    old_rank: int
    new_rank: int
    min_rank: int


@dataclass
class BranchState:
    s: np.ndarray
    theta_r: np.ndarray
    theta_s: np.ndarray
    theta_phi: np.ndarray
    rank: np.ndarray
    events: list = field(default_factory=list)
    kind: str = ""

    def rows(self):
        for k in range(len(self.s)):
            yield self.s[k], self.theta_r[k], self.theta_s[k], int(self.theta_phi[k]), int(self.rank[k])


def _x_eta_rank(B, rtol=RANK_RTOL):
    sv = np.linalg.svd(B, compute_uv=False)
    scale = max(float(sv[0]), 1e-300) if sv.size else 1.0
    rank = int(np.sum(sv > rtol * scale))
    ambiguous = bool(np.any((sv > rtol * scale) & (sv <= HYSTERESIS * rtol * scale)))
    return rank, ambiguous


def _ranks(B):
    out = [_x_eta_rank(B[k]) for k in range(B.shape[0])]
    return np.array([r for r, _ in out]), np.array([a for _, a in out])


def _det_track(spec, path, s, max_depth=20):
    """Sample ``det phi_x_eta`` on ``s``, inserting midpoints where the arg step is too large."""
    y, eta = path(s)
    jet = phase_jet(spec, y, eta)
    d = np.linalg.det(jet.phi_x_eta)
    scale = np.maximum(np.linalg.norm(jet.phi_x_eta, ord=2, axis=(-2, -1)), 1e-300) ** spec.map.n
    bad = np.abs(d) <= 1e-12 * scale
    if np.any(bad):
        k = int(np.argmax(bad))
        raise DomainError(
            f"det phi_x_eta vanishes at path parameter {s[k]:.6g}: condition (a3) fails for the "
            f"{spec.kind} phase here; use the gaussian phase or switch charts"
        )
    d2 = d * d
    steps = np.angle(d2[1:] / d2[:-1])
    big = np.nonzero(np.abs(steps) >= np.pi / 2)[0]
    if big.size == 0:
        return s, jet, d2
    if max_depth == 0:
        k = int(big[0])
        raise RefinementError(
            f"arg det^2 phi_x_eta jumps by {steps[k]:.3f} rad on [{s[k]:.6g}, {s[k + 1]:.6g}]",
            interval=(float(s[k]), float(s[k + 1])),
        )
    mids = 0.5 * (s[big] + s[big + 1])
    return _det_track(spec, path, np.sort(np.concatenate([s, mids])), max_depth - 1)


def theta_r_continued(spec, path, anchor=None, refine=True):
    """Continuous branch of Theta^r along ``path``.

    ``anchor`` is the start value; ``None`` takes the principal value. With
    ``refine=False`` a step of ``pi/2`` or more raises ``RefinementError``.
    Returns ``(s, theta_r, jet)``; ``s`` may contain inserted points.
    """
    s, jet, d2 = _det_track(spec, path, path.grid(), max_depth=20 if refine else 0)
    inc = np.concatenate([[0.0], np.angle(d2[1:] / d2[:-1])]) / (2 * np.pi)
    start = float(np.angle(d2[0]) / (2 * np.pi)) if anchor is None else float(anchor)
    return s, start + np.cumsum(inc), jet


def _locate_event(phi_map, path, s0, s1, r0, r1, xatol=1e-7, drop_tol=1e-5):
    """Minimize the ``max(r0, r1)``-th singular value of ``x*_eta`` on ``[s0, s1]``."""
    from scipy.optimize import minimize_scalar

    r = max(int(r0), int(r1))
    if r == 0:
        raise FIOError(f"Theta_Phi jumps on [{s0:.6g}, {s1:.6g}] with x*_eta = 0 at both ends")

    def sv_at(t):
        y, eta = path(np.array([t]))
        _, _, J = phi_map.full(y, eta)
        return np.linalg.svd(J.x_eta[0], compute_uv=False)

    scale = max(sv_at(s0)[0], sv_at(s1)[0], 1e-300)

    def g(t):
        return sv_at(t)[r - 1] / scale

    res = minimize_scalar(g, bounds=(s0, s1), method="bounded", options={"xatol": xatol})
    val = min(float(res.fun), g(s0), g(s1))
    if val > drop_tol:
        raise FIOError(
            f"unresolved rank event on [{s0:.6g}, {s1:.6g}]: smallest relevant singular value "
            f"ratio {val:.3e} does not reach zero; refine the path"
        )
    return RankEvent(float(res.x), int(r0), int(r1), r - 1)


def branch_state(spec, path, phi_anchor=0, int_tol=1e-6):
    """Theta^r, Theta^s and the integer Theta_Phi along ``path``.

    ``phi_anchor`` fixes Theta_Phi at the path start (``None`` keeps the
    principal branch of Theta^r at the start).
    """
    s, tr, jet = theta_r_continued(spec, path)
    ts = theta_s(jet)
    raw = tr - ts
    frac = np.abs(raw - np.round(raw))
    if np.max(frac) > int_tol:
        k = int(np.argmax(frac))
        raise FIOError(
            f"Theta_Phi = {raw[k]:.6f} is not an integer at s = {s[k]:.6g} "
            f"(phase {spec.kind} is outside its class there)"
        )
    if phi_anchor is not None:
        tr = tr + (int(phi_anchor) - int(np.round(raw[0])))
    theta_phi = np.round(tr - ts).astype(int)
    rank, _ = _ranks(jet.x_eta)
    events = []
    jumps = (rank[1:] != rank[:-1]) | (theta_phi[1:] != theta_phi[:-1])
    for k in np.nonzero(jumps)[0]:
        events.append(_locate_event(spec.map, path, s[k], s[k + 1], rank[k], rank[k + 1]))
    return BranchState(s, tr, ts, theta_phi, rank, events, spec.kind)


def _check_endpoint(phi_map, path, s):
    y, eta = path(np.array([s]))
    _, _, J = phi_map.full(y, eta)
    _, amb = _x_eta_rank(J.x_eta[0])
    if amb:
        raise DomainError(f"path endpoint s = {s:g} sits at a rank change of x*_eta")


def maslov_index_of_path(phi_map, path, kind="gaussian", eps=1.0):
    """``-(Theta_Phi(end) - Theta_Phi(start))`` along the branch tracked on ``path``."""
    _check_endpoint(phi_map, path, 0.0)
    _check_endpoint(phi_map, path, 1.0)
    spec = kind if isinstance(kind, PhaseSpec) else PhaseSpec(kind, phi_map, eps=eps)
    st = branch_state(spec, path)
    return -int(st.theta_phi[-1] - st.theta_phi[0])


def theta_real_offsets(state, jet_kappa_plus):
    """``Theta_Phi - kappa_+(phi_eta_eta)`` per sample (constant on real-chart segments)."""
    return np.asarray(state.theta_phi) - np.asarray(jet_kappa_plus)


def kappa_plus_along(jet):
    P = np.real(jet.phi_eta_eta)
    return np.array([_in.kappa_plus(P[k]) for k in range(P.shape[0])])


def cocycle_values(spec_j, spec_k, samples, a3_tol=1e-8):
    """``sgn(phi_j)_eta_eta / 2 - sgn(phi_k)_eta_eta / 2`` at each sample."""
    y, eta = samples
    out = []
    jets = []
    for spec in (spec_j, spec_k):
        if not spec.is_real:
            raise DomainError("cocycle numbers are defined for real phases")
        jet = phase_jet(spec, y, eta)
        P = jet.phi_x_eta.real
        n = P.shape[-1]
        margin = np.abs(np.linalg.det(P)) / np.maximum(np.linalg.norm(P, ord=2, axis=(-2, -1)), 1e-300) ** n
        if np.any(margin <= a3_tol):
            raise DomainError(f"phase in chart {spec.chart_id!r} violates (a3) on the overlap samples")
        jets.append(jet)
    for k in range(np.atleast_2d(y).shape[0]):
        sj = _in.signature(np.real(jets[0].phi_eta_eta[k]))
        sk = _in.signature(np.real(jets[1].phi_eta_eta[k]))
        out.append(0.5 * (sj - sk))
    return np.array(out)


def cocycle_number(spec_j, spec_k, samples):
    """The integer ``m_jk`` on an overlap; rejects a non-constant value."""
    vals = cocycle_values(spec_j, spec_k, samples)
    if vals.size == 0:
        raise DomainError("empty overlap sample set")
    if np.any(vals != vals[0]) or vals[0] != np.round(vals[0]):
        raise FIOError(
            f"cocycle value not constant on the overlap (range {vals.min()}..{vals.max()}); "
            "condition (a3) likely fails inside the overlap"
        )
    return int(vals[0])


def a3_margin(spec, y, eta):
    """Scale-free signed ``det Re phi_x_eta`` per sample."""
    P = phase_jet(spec, y, eta).phi_x_eta.real
    n = P.shape[-1]
    return np.linalg.det(P) / np.maximum(np.linalg.norm(P, ord=2, axis=(-2, -1)), 1e-300) ** n


@dataclass
class OverlapComponent:
    """A maximal run of path samples where both real phases satisfy (a3)."""

    s: np.ndarray
    m_jk: int
    m_kj: int
    offset_jump: int


def overlap_components(spec_j, spec_k, path, state=None, a3_tol=1e-6):
    """Cocycle numbers ``m_jk`` on each overlap component along ``path``.

    ``offset_jump`` is ``kappa_+(phi_j) - kappa_+(phi_k)`` read off the
    Theta_Phi offsets of both charts; it must equal ``m_jk``.
    """
    s = path.grid() if state is None else np.asarray(state.s)
    y, eta = path(s)
    dj = a3_margin(spec_j, y, eta)
    dk = a3_margin(spec_k, y, eta)
    ok = (np.abs(dj) > a3_tol) & (np.abs(dk) > a3_tol)
    # a sign change of a real determinant between samples is a zero in between
    cut = np.zeros(len(s), bool)
    cut[1:] = (np.sign(dj[1:]) != np.sign(dj[:-1])) | (np.sign(dk[1:]) != np.sign(dk[:-1]))
    if state is None:
        state = branch_state(PhaseSpec("gaussian", spec_j.map), path)
    theta = np.asarray(state.theta_phi)
    bounds = []
    start = None
    for i in range(len(s)):
        if not ok[i]:
            if start is not None:
                bounds.append((start, i))
            start = None
        elif start is None:
            start = i
        elif cut[i]:
            bounds.append((start, i))
            start = i
    if start is not None:
        bounds.append((start, len(s)))
    out = []
    for a, b in bounds:
        sel = slice(a, b)
        smp = (y[sel], eta[sel])
        m_jk = cocycle_number(spec_j, spec_k, smp)
        m_kj = cocycle_number(spec_k, spec_j, smp)
        off_j = theta[sel] - kappa_plus_along(phase_jet(spec_j, *smp))
        off_k = theta[sel] - kappa_plus_along(phase_jet(spec_k, *smp))
        if np.ptp(off_j) or np.ptp(off_k):
            raise FIOError("Theta_Phi offset is not constant on a real-chart segment")
        out.append(OverlapComponent(s[sel], m_jk, m_kj, int(off_k[0] - off_j[0])))
    return out

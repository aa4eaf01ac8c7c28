"""Acceptance battery A1-A10.

Each criterion is a function returning a :class:`CriterionResult`; the CLI
``verify-suite`` task and the test suite both run them.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import canonical as cn
from . import lagrangian as lg
from . import maslov as ms
from . import oscillatory as osc
from . import phase as ph
from . import symbols as sy


@dataclass
class CriterionResult:
    name: str
    passed: bool
    detail: str
    anchor: str
    seconds: float = 0.0
    data: dict = field(default_factory=dict)

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"{self.name} {status} [{self.anchor}] {self.detail} ({self.seconds:.1f}s)"


def _timed(fn):
    def run(*args, **kw):
        t0 = time.perf_counter()
        res = fn(*args, **kw)
        res.seconds = time.perf_counter() - t0
        return res

    run.__name__ = fn.__name__
    run.__doc__ = fn.__doc__
    return run


# -- random data ----------------------------------------------------------------


def random_symmetric(n, rng, rank=None, integer=False):
    """Symmetric matrix with optional rank deficiency; small integer entries on request."""
    if integer:
        M = rng.integers(-2, 3, size=(n, n)).astype(float)
        return M + M.T
    r = n if rank is None else rank
    U = np.linalg.qr(rng.standard_normal((n, n)))[0][:, :r]
    d = rng.choice([-1.0, 1.0], size=r) * rng.uniform(0.3, 2.0, size=r)
    return (U * d) @ U.T


def random_pair(n, rng):
    """Pair of symmetric matrices, often with ``A1``, ``A2`` or ``A1 - A2`` degenerate."""
    kind = rng.integers(0, 5)
    A1 = random_symmetric(n, rng, rank=rng.integers(0, n + 1) if kind == 1 else None, integer=kind == 4)
    if kind == 2:
        A2 = A1 + random_symmetric(n, rng, rank=rng.integers(0, n))
    elif kind == 3:
        A2 = random_symmetric(n, rng, rank=rng.integers(0, n + 1))
    else:
        A2 = random_symmetric(n, rng, integer=kind == 4)
    return A1, A2


def random_symplectic(n, rng, scale=1.0, rounds=2):
    """Product of random shears; preserves intersections of the frames it moves."""
    M = np.eye(2 * n)
    for _ in range(rounds):
        S = random_symmetric(n, rng) * scale
        up = np.block([[np.eye(n), S], [np.zeros((n, n)), np.eye(n)]])
        S = random_symmetric(n, rng) * scale
        lo = np.block([[np.eye(n), np.zeros((n, n))], [S, np.eye(n)]])
        M = lo @ up @ M
    return M


def random_frame_pair(n, rng):
    """Two Lagrangian frames at a common point with controlled intersections."""
    C1 = random_symmetric(n, rng)
    C2 = C1 + random_symmetric(n, rng, rank=rng.integers(0, n + 1))
    F1 = np.vstack([np.eye(n), C1])
    F2 = np.vstack([np.eye(n), C2])
    if rng.random() < 0.8:
        M = random_symplectic(n, rng, 0.4)
        F1, F2 = M @ F1, M @ F2
    if rng.random() < 0.3:
        # make part of L1 vertical: rotate by the symplectic swap on one axis
        k = rng.integers(0, n)
        R = np.eye(2 * n)
        R[k, k] = R[n + k, n + k] = 0.0
        R[k, n + k] = 1.0
        R[n + k, k] = -1.0
        F1 = R @ F1
        F2 = R @ F2
    L1 = lg.LagrangianFrame(F1[:n], F1[n:])
    L2 = lg.LagrangianFrame(F2[:n], F2[n:])
    return L1, L2


# -- A1 ---------------------------------------------------------------------------


@_timed
def a1_kashiwara_oracle(count=1000, seed=1):
    """Graph formulas vs the direct 3n x 3n signature on random symmetric pairs."""
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(count):
        n = int(rng.integers(1, 5))
        A1, A2 = random_pair(n, rng)
        g = lg.kashiwara_graphs(A1, A2)
        L1 = lg.LagrangianFrame(A1, np.eye(n))
        L2 = lg.LagrangianFrame(A2, np.eye(n))
        kd = lg.kashiwara_direct(L1, L2)
        rd = lg.r_index(L1, L2)
        if g.kappa != kd or g.r != rd or 2 * g.varkappa != kd + rd:
            bad += 1
    return CriterionResult("A1", bad == 0, f"{count - bad}/{count} pairs agree exactly", "kashiwara2, kashiwara3, rank0")


# -- A2 ---------------------------------------------------------------------------


@_timed
def a2_index_identities(count=500, seed=2):
    """Integrality of varkappa, the sum identity and antisymmetry of kappa."""
    rng = np.random.default_rng(seed)
    bad = []
    for i in range(count):
        n = int(rng.integers(1, 5))
        L1, L2 = random_frame_pair(n, rng)
        k12 = lg.kashiwara_direct(L1, L2)
        k21 = lg.kashiwara_direct(L2, L1)
        v12 = lg.varkappa_direct(L1, L2)
        v21 = lg.varkappa_direct(L2, L1)
        d12 = lg.intersection_dims(L1, L2)[2]
        if k12 != -k21 or v12 + v21 != n - d12 or int(v12) != v12:
            bad.append(i)
    return CriterionResult("A2", not bad, f"{count - len(bad)}/{count} frame pairs satisfy all identities", "kashiwara1, rank0")


# -- A3 ---------------------------------------------------------------------------


def catalog_maps():
    """Analytic catalog maps used by the acceptance battery."""
    return [
        cn.Identity(1),
        cn.Identity(2),
        cn.HalfWave(1, 1.0),
        cn.HalfWave(2, 1.0),
        cn.HalfWave(2, -0.7),
        cn.LinearSymplectic([[1.0, 0.5], [0.0, 2.0]]),
        cn.CotangentLift.from_expressions("y + 0.3*sin(y)"),
        cn.CotangentLift.from_expressions(["y1 + 0.2*sin(y2)", "y2 + 0.1*y1^2"]),
    ]


METRIC = [["1", "0"], ["0", "(1+0.3*sin(x1))^-2"]]


def flow_order(t=1.0, steps=(50, 100, 200), ref_steps=3200, seed=3):
    """Trajectory errors against a refined solution and the observed convergence rates."""
    ham = cn.Hamiltonian.from_metric(METRIC)
    rng = np.random.default_rng(seed)
    y, eta = cn.random_samples(2, 10, rng)
    ref = cn.FlowMap(cn.FlowSpec(ham, t, ref_steps))
    xr, xir = ref(y, eta)
    errs = []
    for N in steps:
        x, xi = cn.FlowMap(cn.FlowSpec(ham, t, N))(y, eta)
        errs.append(float(np.max(np.hypot(np.linalg.norm(x - xr, axis=-1), np.linalg.norm(xi - xir, axis=-1)))))
    rates = [float(np.log2(errs[i] / errs[i + 1])) for i in range(len(errs) - 1)]
    return errs, rates


@_timed
def a3_canonical(samples=100, seed=3):
    """Catalog maps at 1e-10, the numeric flow at 1e-6 with order-2 convergence."""
    rng = np.random.default_rng(seed)
    worst = {}
    ok = True
    for m in catalog_maps():
        rep = cn.validate_canonical(m, cn.random_samples(m.n, samples, rng), tol=1e-10)
        worst[m.name] = max(rep.residuals.values())
        ok &= rep.passed
    flow = cn.FlowMap(cn.FlowSpec(cn.Hamiltonian.from_metric(METRIC), 1.0, 1000))
    rep = cn.validate_canonical(flow, cn.random_samples(2, samples, rng), tol=1e-6)
    worst["flow"] = max(rep.residuals.values())
    ok &= rep.passed
    errs, rates = flow_order()
    order_ok = all(1.8 <= r <= 2.2 for r in rates)
    detail = f"max catalog residual {max(v for k, v in worst.items() if k != 'flow'):.1e}, flow {worst['flow']:.1e}, " \
             f"trajectory rates {', '.join(f'{r:.2f}' for r in rates)}"
    return CriterionResult("A3", bool(ok and order_ok), detail, "preserve-2a, preserve-2b, preserve-1, homo",
                           data={"residuals": worst, "errors": errs, "rates": rates})


# -- A4 ---------------------------------------------------------------------------


def _random_path(m, rng, length=0.6):
    y0 = rng.uniform(-1, 1, m.n)
    e0 = rng.standard_normal(m.n)
    e0 = e0 / np.linalg.norm(e0) * rng.uniform(0.7, 1.5)
    y1 = y0 + rng.uniform(-length, length, m.n)
    e1 = e0 + rng.uniform(-length, length, m.n) * np.linalg.norm(e0)
    return ms.Path.from_waypoints([(y0, e0), (y1, e1)], per_segment=30)


def _constant_rank(m, path):
    y, eta = path(path.grid())
    ranks, ambiguous = ms._ranks(m.full(y, eta)[2].x_eta)
    return bool(np.all(ranks == ranks[0]) and not np.any(ambiguous))


@_timed
def a4_theta_invariance(paths_per_map=20, seed=4):
    """Theta_Phi integral and phase independent along constant-rank paths; Theta-real-2 offsets constant."""
    rng = np.random.default_rng(seed)
    maps = catalog_maps() + [cn.FlowMap(cn.FlowSpec(cn.Hamiltonian.from_metric(METRIC), 0.5, 200))]
    bad = []
    total = 0
    for m in maps:
        done = 0
        tries = 0
        while done < paths_per_map and tries < 10 * paths_per_map:
            tries += 1
            path = _random_path(m, rng)
            if np.any(np.linalg.norm(path(path.grid())[1], axis=-1) < 0.2) or not _constant_rank(m, path):
                continue
            sg = ms.branch_state(ph.PhaseSpec("gaussian", m), path)
            sr = ms.branch_state(ph.PhaseSpec("real_chart", m), path)
            jet = ph.phase_jet(ph.PhaseSpec("real_chart", m), *path(np.asarray(sr.s)))
            off = ms.theta_real_offsets(sr, ms.kappa_plus_along(jet))
            same = len(sg.theta_phi) == len(sr.theta_phi) and np.array_equal(sg.theta_phi, sr.theta_phi) \
                if np.array_equal(sg.s, sr.s) else sg.theta_phi[-1] == sr.theta_phi[-1]
            if not same or np.ptp(off) != 0:
                bad.append((m.name, done))
            done += 1
            total += 1
    return CriterionResult("A4", not bad, f"{total - len(bad)}/{total} paths invariant", "Theta-r, Theta-s, Theta-real-2")


# -- A5 ---------------------------------------------------------------------------


@_timed
def a5_adjoint_adjudication():
    """Direct and z-integral extraction of the n = 2 half-wave adjoint symbol."""
    v = osc.adjudicate_adjoint()
    d = v.direct.value
    ok = v.winner is not None and bool(v.routes_agree) and abs(abs(d) - 1) <= 0.05
    detail = (f"direct {d.real:+.4f}{d.imag:+.4f}i ({np.degrees(np.angle(d)):.2f} deg, err {v.direct.error:.1e}), "
              f"z-integral {v.composed.value.real:+.4f}{v.composed.value.imag:+.4f}i (err {v.composed.error:.1e}); "
              f"winner: {v.winner}")
    return CriterionResult("A5", ok, detail, "asymp-1, composition1", data={"winner": v.winner, "verdict": v})


# -- A6 ---------------------------------------------------------------------------


@_timed
def a6_extraction():
    """Identity and n = 1 half-wave symbols over lambda in [50, 400]."""
    probe = osc.ExtractionSpec([0.3], [1.0], lambdas=[50, 80, 120, 200, 300, 400])
    parts = []
    ok = True
    for m in (cn.Identity(1), cn.HalfWave(1, 1.0)):
        e = osc.extract_symbol(osc.KernelSpec.build(m), probe)
        dev = float(np.max(np.abs(e.probe.normalised - 1)))
        ok &= abs(e.value - 1) <= 0.03 and dev <= 0.03 and abs(e.slope) <= 0.05
        parts.append(f"{m.name}: fit {abs(e.value - 1):.1e} off 1, max per-lambda {dev:.1e}, exponent {e.slope:+.3f}")
    return CriterionResult("A6", bool(ok), "; ".join(parts), "asymp-1")


# -- A7 ---------------------------------------------------------------------------


@_timed
def a7_composition(t=1.0, s=0.5):
    """half-wave(t) after half-wave(s): z-integral vs symbolic composition vs half-wave(t + s)."""
    probe = osc.ExtractionSpec([0.3], [1.0], lambdas=[50, 80, 120, 200, 300])
    first, second = cn.HalfWave(1, s), cn.HalfWave(1, t)
    comp = osc.compose_numeric(osc.KernelSpec.build(first), osc.KernelSpec.build(second), probe, mode="product")
    direct = osc.extract_symbol(osc.KernelSpec.build(cn.HalfWave(1, t + s)), probe)
    sym = sy.composition_symbol(sy.PrincipalSymbol.unit(first), sy.PrincipalSymbol.unit(second), [0.3], [1.0])
    ok = abs(comp.value - sym.step5) <= 0.03 and abs(comp.value - direct.value) <= 0.03
    detail = f"z-integral {comp.value:.4f}, symbolic {sym.step5:.4f} (k={sym.k_step5}), half-wave(t+s) {direct.value:.4f}"
    return CriterionResult("A7", bool(ok), detail, "composition")


# -- A8 ---------------------------------------------------------------------------


def egorov_case():
    lift = cn.CotangentLift.from_expressions("y + 0.3*sin(y)")
    p1 = sy.Amplitude.from_expression("1 + 0.2*y", 1)
    p2 = sy.Amplitude.from_expression("0.8 + 0.1*cos(y)", 1)
    a = sy.Amplitude.from_expression("2 + cos(y)*eh", 1)
    return lift, p1, p2, a


@_timed
def a8_egorov(lam=200.0):
    """``V2^* A V1`` for a 1-D lift vs the Egorov product at lambda = 200."""
    lift, p1, p2, a = egorov_case()
    v1 = osc.KernelSpec.build(lift, amplitude=p1)
    v2 = osc.KernelSpec.build(lift, amplitude=p2)
    A = osc.KernelSpec.build(cn.Identity(1), amplitude=a)
    e = osc.egorov_numeric(v1, A, v2, osc.ExtractionSpec([0.3], [1.0], lambdas=[lam]))
    got = complex(e.probe.normalised[0])
    s1 = sy.PrincipalSymbol.from_amplitude(p1, lift)
    s2 = sy.PrincipalSymbol.from_amplitude(p2, lift)
    pt = (np.array([0.3]), np.array([1.0]))
    want = sy.egorov_symbol(s1, s2, lambda x, xi: a(x, xi), pt, pt)
    rel = abs(got - want) / abs(want)
    return CriterionResult("A8", rel <= 0.05, f"extracted {got:.5f} vs predicted {want:.5f} (rel {rel:.1e})", "egorov")


# -- A9 ---------------------------------------------------------------------------


def caustic_setup(per_segment=40):
    flow = cn.FlowMap(cn.FlowSpec(cn.Hamiltonian.from_metric(METRIC), 5.0, 500))
    path = ms.Path.from_waypoints([([-np.pi / 2, 0.0], [0.0, 1.0]), ([0.0, 0.0], [0.0, 1.0])], per_segment=per_segment)
    return flow, path


@_timed
def a9_caustic():
    """Path index across a fold caustic; refinement and phase-kind invariance; cocycle numbers."""
    flow, path = caustic_setup()
    _, fine = caustic_setup(80)
    idx = {(kind, name): ms.maslov_index_of_path(flow, p, kind)
           for kind in ("gaussian", "real_chart") for name, p in (("coarse", path), ("fine", fine))}
    vals = set(idx.values())
    state = ms.branch_state(ph.PhaseSpec("gaussian", flow), path)
    xs, _ = flow(*path(path.grid()))
    Q = np.zeros((2, 2, 2))
    Q[1, 0, 0] = -2.0
    chart = lg.ChartMap.quadratic(xs[20], Q, chart_id="shear")
    comps = ms.overlap_components(ph.PhaseSpec("real_chart", flow), ph.PhaseSpec("real_chart", flow, chart=chart), path, state)
    caustics = [e.s for e in state.events]
    across = [c for c in comps if any(c.s[0] < s < c.s[-1] for s in caustics)]
    coc_ok = bool(comps) and bool(across) and all(c.m_jk == -c.m_kj and c.m_jk == c.offset_jump for c in comps)
    ok = len(vals) == 1 and abs(next(iter(vals))) == 1 and coc_ok
    detail = (f"index {sorted(vals)} over phase kinds x refinements; caustic at s={', '.join(f'{s:.4f}' for s in caustics)}; "
              + "; ".join(f"m_jk={c.m_jk} m_kj={c.m_kj} on [{c.s[0]:.3f},{c.s[-1]:.3f}]" for c in comps))
    return CriterionResult("A9", ok, detail, "Theta-real-2, cech", data={"indices": idx, "components": comps})


# -- A10 --------------------------------------------------------------------------


@_timed
def a10_phase_independence(eps=0.1):
    """Real-chart vs gaussian-phase extraction of the same operator."""
    probe = osc.ExtractionSpec([0.3], [1.0], lambdas=[50, 80, 120, 200, 300, 400])
    parts = []
    ok = True
    for m in (cn.Identity(1), cn.CotangentLift.from_expressions("y + 0.3*sin(y)"), cn.HalfWave(1, 1.0)):
        spec = osc.KernelSpec.build(m)
        r, a, b = osc.phase_independence_residual(spec, spec.with_phase("gaussian", eps=eps), probe)
        bar = a.error + b.error
        ok &= r < bar
        parts.append(f"{m.name}: {r:.1e} < {bar:.1e}")
    return CriterionResult("A10", bool(ok), "; ".join(parts), "fio-def1")


CRITERIA = {
    "A1": a1_kashiwara_oracle,
    "A2": a2_index_identities,
    "A3": a3_canonical,
    "A4": a4_theta_invariance,
    "A5": a5_adjoint_adjudication,
    "A6": a6_extraction,
    "A7": a7_composition,
    "A8": a8_egorov,
    "A9": a9_caustic,
    "A10": a10_phase_independence,
}


def run_suite(names=None, echo=None):
    """Run the criteria in ``names`` (default all); ``echo`` receives each result line."""
    out = []
    for name in names or CRITERIA:
        res = CRITERIA[name]()
        out.append(res)
        if echo is not None:
            echo(res.line())
    return out

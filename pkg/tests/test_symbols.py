import numpy as np
import pytest

from fiocalc.acceptance import caustic_setup
from fiocalc.canonical import CotangentLift, HalfWave, Identity, random_samples
from fiocalc.maslov import Path
from fiocalc.phase import PhaseSpec
from fiocalc.symbols import (
    Amplitude,
    ConeBox,
    PrincipalSymbol,
    adjoint_symbol,
    classical_branch,
    composition_index,
    composition_symbol,
    egorov_symbol,
    homogeneity_residual,
    ipow,
    singular_from_amplitude,
    star_composition,
    star_support,
    transfer_amplitude,
)

Y, ETA = [0.3, -0.2], [0.6, 0.8]


def test_ipow_exact():
    assert [ipow(k) for k in range(-2, 3)] == [-1, -1j, 1, 1j, -1]
    assert np.isclose(ipow(0.5), np.exp(0.25j * np.pi))


def test_amplitude_homogeneity():
    amp = Amplitude.from_expression("(1 + y1^2) * eh2", 2, order=1.0)
    assert homogeneity_residual(amp, random_samples(2, 10, 0)) < 1e-12
    assert np.isclose(amp([1.0, 0.0], [0.0, 3.0]), 6.0)


def test_singular_symbol_examples():
    assert np.isclose(PrincipalSymbol.unit(Identity(2))(Y, ETA), 1)
    assert np.isclose(PrincipalSymbol.unit(HalfWave(2, 1.0))(Y, ETA), 1)
    assert np.isclose(PrincipalSymbol.unit(HalfWave(2, -1.0))(Y, ETA), 1j)


def test_singular_symbol_scales_with_amplitude():
    spec = PhaseSpec("real_chart", HalfWave(2, -1.0))
    assert np.isclose(singular_from_amplitude(2.5, spec, Y, ETA), 2.5j)


def test_transfer_keeps_operator_symbol():
    phi = HalfWave(2, -1.0)
    real, gauss = PhaseSpec("real_chart", phi), PhaseSpec("gaussian", phi)
    p_gauss = transfer_amplitude(1.0, real, gauss, Y, ETA)
    assert np.isclose(singular_from_amplitude(p_gauss, gauss, Y, ETA), 1j)


def test_composition_index_examples():
    hw = HalfWave(2, 1.0)
    assert composition_index(hw, hw, Y, ETA).varkappa == 0
    assert composition_index(Identity(2), hw, Y, ETA).varkappa == 1
    assert composition_index(hw, Identity(2), Y, ETA).varkappa == 0


def test_star_composition_examples():
    lift = CotangentLift.from_expressions(["y1 + 0.2*sin(y2)", "y2"])
    s = PrincipalSymbol.from_amplitude(Amplitude.from_expression("2 + y1*eh1", 2), lift)
    val, k = star_composition(s, s, Y, ETA)
    assert k == 0 and np.isclose(val, abs(s(Y, ETA)) ** 2)
    val, k = star_composition(PrincipalSymbol.unit(Identity(2)), PrincipalSymbol.unit(HalfWave(2, 1.0)), Y, ETA)
    assert k == 1 and np.isclose(val, 1j)


def test_adjoint_routes():
    one_d = adjoint_symbol(PrincipalSymbol.unit(HalfWave(1, 1.0)), [0.3], [1.0])
    assert not one_d.differ and np.isclose(one_d.step5, one_d.corollary)
    two_d = adjoint_symbol(PrincipalSymbol.unit(HalfWave(2, 1.0)), Y, ETA)
    assert two_d.differ
    assert np.isclose(two_d.step5, 1j) and np.isclose(two_d.corollary, 1)
    pdo = PrincipalSymbol.from_amplitude(Amplitude.from_expression("1 + 1j*y1", 2), Identity(2))
    r = adjoint_symbol(pdo, Y, ETA)
    assert np.isclose(r.step5, np.conj(pdo(Y, ETA))) and np.isclose(r.corollary, r.step5)


def test_composition_symbol_examples():
    s1 = PrincipalSymbol.from_amplitude(Amplitude.from_expression("1 + 0.5*y1", 2), HalfWave(2, 1.0))
    r = composition_symbol(s1, PrincipalSymbol.unit(Identity(2)), Y, ETA)
    assert np.isclose(r.step5, s1(Y, ETA)) and np.isclose(r.corollary, s1(Y, ETA))
    f = CotangentLift.from_expressions(["y1 + 0.2*sin(y2)", "y2"])
    g = CotangentLift.from_expressions(["y1", "y2 + 0.1*y1^2"])
    r = composition_symbol(PrincipalSymbol.unit(f), PrincipalSymbol.unit(g), Y, ETA)
    assert r.k_step5 == 0 and r.k_corollary == 0
    r = composition_symbol(PrincipalSymbol.unit(HalfWave(1, 0.5)), PrincipalSymbol.unit(HalfWave(1, 1.0)), [0.3], [1.0])
    assert np.isclose(r.step5, 1)


def test_classical_branch_at_anchor_and_for_pdo():
    s = PrincipalSymbol.unit(HalfWave(2, -1.0))
    val, _ = classical_branch(s, (Y, ETA), (Y, ETA), samples=3)
    assert np.isclose(val, s(Y, ETA))
    pdo = PrincipalSymbol.from_amplitude(Amplitude.from_expression("2 + y1", 2), Identity(2))
    val, _ = classical_branch(pdo, (Y, ETA), ([0.5, 0.5], [1.0, 0.0]))
    assert np.isclose(val, 2.5)


def test_classical_branch_continuous_across_caustic():
    flow, path = caustic_setup()
    s = PrincipalSymbol.unit(flow)
    anchor = path(np.array([0.0]))
    anchor = (anchor[0][0], anchor[1][0])
    out = []
    for t in (0.28, 0.31):
        y, eta = path(np.array([t]))
        sub = Path(lambda u, t=t: path(u * t), 41)
        out.append((classical_branch(s, anchor, (y[0], eta[0]), path=sub)[0], s(y[0], eta[0])))
    (b0, s0), (b1, s1) = out
    assert abs(b1 - b0) < 0.1
    assert abs(s1 - s0) > 1.0


def test_egorov_examples():
    phi = HalfWave(2, 1.0)
    s = PrincipalSymbol.unit(phi)
    pt = (np.asarray(Y), np.asarray(ETA))
    assert np.isclose(egorov_symbol(s, s, lambda x, xi: 1.0, pt, pt), 1)
    lift = CotangentLift.from_expressions("y + 0.3*sin(y)")
    s = PrincipalSymbol.from_amplitude(Amplitude.from_expression("1 + 0.2*y", 1), lift)
    pt = (np.array([0.3]), np.array([-1.0]))
    val = egorov_symbol(s, s, lambda x, xi: np.sign(xi[..., 0]), pt, pt)
    assert np.isclose(val, -abs(s(*pt)) ** 2) and val.imag == 0


def test_cone_support_intersection():
    phi = HalfWave(1, 1.0)
    dom = ConeBox((-3.0,), (3.0,), (1,))
    supp = star_support(ConeBox((-1.0,), (1.0,), (1,)), ConeBox((0.0,), (2.0,), (1,)), phi, dom, rng=0)
    assert supp.lo[0] >= -1.0 - 1e-12 and supp.hi[0] <= 1.0 + 1e-12
    assert supp.lo[0] == pytest.approx(-1.0, abs=0.02)

import numpy as np
import pytest

from fiocalc import DomainError
from fiocalc.acceptance import catalog_maps
from fiocalc.canonical import CotangentLift, HalfWave, Identity, random_samples
from fiocalc.inertia import signature
from fiocalc.lagrangian import ChartMap, kashiwara_direct, validate_frame
from fiocalc.phase import (
    PhaseSpec,
    build_phase,
    complex_nondegeneracy_check,
    horizontal_of_phase,
    phase_jet,
    validate_phase,
)
from fiocalc.symbols import _single

MAPS = [Identity(2), HalfWave(1, 1.0), HalfWave(2, 1.0), CotangentLift.from_expressions("y + 0.3*sin(y)")]


@pytest.mark.parametrize("phi", MAPS, ids=lambda m: m.name)
@pytest.mark.parametrize("kind", ["real_chart", "gaussian"])
def test_jet_identities(phi, kind):
    jet = phase_jet(PhaseSpec(kind, phi), *random_samples(phi.n, 20, 0))
    r1, r2 = jet.identity_residuals()
    assert r1 < 1e-12 and r2 < 1e-12


@pytest.mark.parametrize("phi", MAPS, ids=lambda m: m.name)
def test_gaussian_phase_is_admissible(phi):
    rep = validate_phase(PhaseSpec("gaussian", phi), random_samples(phi.n, 20, 1), rng=0)
    assert rep.passed


def test_real_chart_phase_of_half_wave_is_nondegenerate():
    jet = phase_jet(PhaseSpec("real_chart", HalfWave(2, 1.0)), *random_samples(2, 10, 2))
    assert np.allclose(jet.phi_x_eta, np.eye(2))


def test_curved_chart_can_make_phase_degenerate():
    # phi_x_eta = I - phi_xx x*_eta = diag(1 - 2 t / |eta|, 1) for this chart
    Q = np.zeros((2, 2, 2))
    Q[1, 0, 0] = 2.0
    chart = ChartMap.quadratic([0.0, 0.0], Q, chart_id="shear")
    spec = PhaseSpec("real_chart", HalfWave(2, 0.5), chart=chart)
    rep = validate_phase(spec, ([[0.0, 0.0]], [[0.0, 1.0]]), rng=0)
    assert not rep.a3_ok


def test_gaussian_phi_eta_eta_has_imaginary_part():
    jet = phase_jet(PhaseSpec("gaussian", HalfWave(2, 1.0)), *random_samples(2, 5, 3))
    assert np.all(np.abs(np.imag(jet.phi_eta_eta)) > 0)
    ok, margin = complex_nondegeneracy_check(PhaseSpec("gaussian", HalfWave(2, 1.0)), random_samples(2, 5, 3))
    assert ok and margin > 0


def test_phase_value_vanishes_at_stationary_point():
    spec = PhaseSpec("gaussian", HalfWave(2, 0.7))
    y, eta = random_samples(2, 8, 4)
    xs, _ = spec.map(y, eta)
    assert np.max(np.abs(spec.value(xs, y, eta))) < 1e-14


def test_horizontal_uses_real_part_of_phi_xx():
    phi = HalfWave(2, 1.0)
    Q = np.array([[0.5, 0.2], [0.2, -0.3]]) + 1j * np.eye(2)
    jet = phase_jet(PhaseSpec("quadratic", phi, Q=Q), [0.1, 0.2], [0.6, 0.8])
    H = horizontal_of_phase(jet)
    assert np.allclose(H.C[0] if H.C.ndim == 3 else H.C, np.real(jet.phi_xx).reshape(2, 2))


def test_chart_phase_curvature():
    Q = np.zeros((2, 2, 2))
    Q[1, 0, 0] = -2.0
    chart = ChartMap.quadratic([0.0, 0.0], Q, chart_id="shear")
    spec = PhaseSpec("real_chart", Identity(2), chart=chart)
    jet = phase_jet(spec, [0.1, 0.0], [0.0, 1.0])
    assert np.allclose(np.real(jet.phi_xx).reshape(2, 2), [[-2.0, 0.0], [0.0, 0.0]])
    assert validate_phase(spec, ([[0.1, 0.0]], [[0.0, 1.0]]), rng=0).a2_ok


def test_phase_spec_rejects_bad_input():
    with pytest.raises(DomainError):
        PhaseSpec("nope", Identity(1))
    with pytest.raises(DomainError):
        PhaseSpec("gaussian", Identity(1), eps=0.0)
    with pytest.raises(DomainError):
        PhaseSpec("quadratic", Identity(1), Q=[[-1j]])


def test_build_phase_from_config():
    assert build_phase("gaussian", Identity(1)).kind == "gaussian"
    assert build_phase({"phase": "gaussian", "eps": 0.1}, Identity(1)).eps == 0.1
    assert build_phase({"phase": "real_chart"}, Identity(1)).chart is None


def test_phi_eta_eta_signature_matches_kashiwara_index():
    rng = np.random.default_rng(0)
    checked = 0
    for m in catalog_maps():
        n = m.n
        for _ in range(40):
            chart = ChartMap.quadratic(rng.uniform(-1, 1, n), rng.standard_normal((n, n, n)))
            spec = PhaseSpec("real_chart", m, chart=chart)
            y, eta = random_samples(n, 1, rng)
            jet = phase_jet(spec, y[0], eta[0])
            if abs(np.linalg.det(jet.phi_x_eta.real).item()) < 1e-2:
                continue
            L = _single(m.image_of_vertical(y[0], eta[0]))
            H = _single(horizontal_of_phase(jet))
            sig = signature(np.real(jet.phi_eta_eta).reshape(n, n))
            assert sig == -kashiwara_direct(L, H)
            checked += 1
    assert checked > 200

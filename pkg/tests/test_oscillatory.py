import numpy as np
import pytest
from scipy.integrate import quad

from fiocalc import DomainError, QuadratureBudgetError
from fiocalc.canonical import CotangentLift, HalfWave, Identity
from fiocalc.oscillatory import (
    ExtractionSpec,
    KernelSpec,
    Window,
    composed_phase_check,
    compose_numeric,
    dump_array,
    extract_symbol,
    extraction_constant,
    fit_limit,
    load_array,
    phase_independence_residual,
    synthesize_kernel,
    write_probe_csv,
)
from fiocalc.phase import PhaseSpec
from fiocalc.symbols import Amplitude

PROBE = ExtractionSpec([0.3], [1.0], lambdas=[50, 80, 120, 200])


def test_fit_limit_recovers_expansion():
    lam = np.array([50.0, 80.0, 120.0, 200.0, 400.0])
    a, b, err, slope, low = fit_limit(lam, 1.5 - 0.5j + (2.0 + 1j) / lam, 0.0)
    assert np.isclose(a, 1.5 - 0.5j) and np.isclose(b, 2.0 + 1j)
    assert err < 1e-10 and abs(slope) < 0.05 and not low


def test_fit_limit_flags_wrong_order():
    lam = np.array([50.0, 80.0, 120.0, 200.0])
    *_, slope, low = fit_limit(lam, np.ones(4), 0.0, integrals=lam**0.5)
    assert np.isclose(slope, 0.5) and low


def test_extraction_constant():
    assert np.isclose(extraction_constant(Identity(2), [0, 0], [1, 0]), 1)
    lift = CotangentLift.from_expressions("2*y")
    assert np.isclose(extraction_constant(lift, [0.1], [1.0]), np.sqrt(2))


@pytest.mark.parametrize("phi", [Identity(1), HalfWave(1, 1.0), HalfWave(1, -0.5)], ids=lambda m: m.name)
def test_unit_symbols_extract_to_one(phi):
    e = extract_symbol(KernelSpec.build(phi), PROBE)
    assert abs(e.value - 1) < 1e-4 and not e.low_confidence
    assert e.error < 1e-4


def test_amplitude_scales_extraction():
    amp = Amplitude.from_expression("2 + cos(y)", 1)
    e = extract_symbol(KernelSpec.build(Identity(1), amplitude=amp), PROBE)
    assert abs(e.value - (2 + np.cos(0.3))) < 1e-3


def test_star_product_of_half_wave_is_pdo():
    spec = KernelSpec.build(HalfWave(1, 1.0))
    e = compose_numeric(spec, spec, PROBE, mode="star")
    assert abs(e.value - 1) < 1e-3


def test_phase_independence_on_lift():
    spec = KernelSpec.build(CotangentLift.from_expressions("y + 0.3*sin(y)"))
    r, a, b = phase_independence_residual(spec, spec.with_phase("gaussian", eps=0.1), PROBE)
    assert r < a.error + b.error


def test_kernel_spec_validation():
    with pytest.raises(DomainError):
        KernelSpec.build(Identity(3))
    with pytest.raises(DomainError):
        KernelSpec(Identity(1), PhaseSpec("gaussian", Identity(1)))
    with pytest.raises(DomainError):
        compose_numeric(KernelSpec.build(Identity(1)), KernelSpec.build(Identity(1)), PROBE, mode="sum")


def test_probe_budget_enforced():
    probe = ExtractionSpec([0.3], [1.0], lambdas=[50, 80], budget=10)
    with pytest.raises(QuadratureBudgetError):
        extract_symbol(KernelSpec.build(Identity(1)), probe)


def test_synthesized_identity_kernel_matches_1d_integral():
    spec = KernelSpec.build(Identity(1), radius=20.0)
    x = np.array([[0.0], [0.5], [-0.5], [1.0]])
    v = synthesize_kernel(spec, x, np.array([0.0]))

    def ref(d):
        def f(r):
            return np.cos(d * r) * spec.cutoff.radial(r) * np.exp(-((r / spec.radius) ** 8)) / np.pi

        return quad(f, 0.5, spec.radius * 37.0**0.125, limit=400)[0]

    assert np.allclose(v, [ref(d) for d in x[:, 0]], atol=1e-8)


def test_synthesis_budget_enforced():
    spec = KernelSpec.build(HalfWave(2, 1.0))
    with pytest.raises(QuadratureBudgetError):
        synthesize_kernel(spec, np.zeros((10, 2)), np.zeros(2), budget=1000)


def test_composed_phase_identities():
    rep = composed_phase_check(HalfWave(2, 1.0), HalfWave(2, 0.5), [0.3, -0.2], [0.6, 0.8])
    assert rep.max_residual < 1e-8
    assert rep.hessian_signature == 0


def test_probe_csv_is_deterministic(tmp_path):
    spec = KernelSpec.build(HalfWave(1, 1.0))
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    write_probe_csv(a, extract_symbol(spec, PROBE))
    write_probe_csv(b, extract_symbol(spec, PROBE))
    assert a.read_bytes() == b.read_bytes()
    lines = a.read_text().splitlines()
    assert lines[0].startswith("lambda,") and lines[-1].startswith("fit,") and len(lines) == 6


@pytest.mark.parametrize("arr", [np.arange(6.0).reshape(2, 3), np.array([1 + 2j, -3j])])
def test_array_dump_roundtrip(tmp_path, arr):
    p = tmp_path / "k.bin"
    dump_array(p, arr)
    raw = p.read_bytes()
    assert raw[:4] == b"FIOK"
    out = load_array(p)
    assert out.dtype == arr.astype(complex if np.iscomplexobj(arr) else float).dtype
    assert np.array_equal(out, arr)


def test_window_weights_plateau():
    w = Window(plateau=2.0, taper=0.5)
    vals = w.weights(np.array([[0.0], [1.0], [10.0]]), np.array([0.0]))
    assert np.isclose(vals[0], 1) and vals[2] < 1e-6

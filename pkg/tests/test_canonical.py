import numpy as np
import pytest

from fiocalc import ChartError, DomainError
from fiocalc.acceptance import METRIC, catalog_maps, flow_order
from fiocalc.canonical import (
    Composed,
    CotangentLift,
    FiniteDifferenceMap,
    FlowMap,
    FlowSpec,
    HalfWave,
    Hamiltonian,
    Identity,
    LinearSymplectic,
    build_map,
    compose_maps,
    jacobian_fd_error,
    random_samples,
    validate_canonical,
)


@pytest.mark.parametrize("phi", catalog_maps(), ids=lambda m: m.name)
def test_catalog_maps_are_canonical(phi):
    rep = validate_canonical(phi, random_samples(phi.n, 100, 0), tol=1e-10)
    assert rep.passed, rep.failures


@pytest.mark.parametrize("phi", catalog_maps(), ids=lambda m: m.name)
def test_catalog_jacobians_match_differences(phi):
    y, eta = random_samples(phi.n, 10, 1)
    assert jacobian_fd_error(phi, y, eta) < 1e-6


def test_half_wave_values():
    x, xi = HalfWave(2, 2.0)([0.0, 1.0], [3.0, 4.0])
    assert np.allclose(x, [1.2, 2.6])
    assert np.allclose(xi, [3.0, 4.0])


def test_half_wave_rejects_zero_frequency():
    with pytest.raises(DomainError):
        HalfWave(1, 1.0)([0.0], [0.0])


def test_inverse_roundtrip():
    phi = CotangentLift.from_expressions(["y1 + 0.2*sin(y2)", "y2 + 0.1*y1^2"])
    y, eta = random_samples(2, 5, 2)
    x, xi = phi(y, eta)
    y2, eta2 = phi.inverse()(x, xi)
    assert np.allclose(y2, y, atol=1e-12) and np.allclose(eta2, eta, atol=1e-12)


def test_composition_of_half_waves_adds_times():
    y, eta = random_samples(2, 5, 3)
    a = compose_maps(HalfWave(2, 0.5), HalfWave(2, 1.0))(y, eta)
    b = HalfWave(2, 1.5)(y, eta)
    assert np.allclose(a[0], b[0]) and np.allclose(a[1], b[1])
    assert validate_canonical(Composed(HalfWave(2, 1.0), HalfWave(2, 0.5)), (y, eta)).passed


def test_non_canonical_map_fails_validation():
    def stretch(y, eta):
        return 2 * y, eta

    rep = validate_canonical(FiniteDifferenceMap(stretch, 1), random_samples(1, 20, 4), tol=1e-6)
    assert not rep.passed
    assert "preserve-2b" in rep.failures


def test_linear_symplectic_lift():
    phi = LinearSymplectic([[1.0, 0.5], [0.0, 2.0]])
    assert validate_canonical(phi, random_samples(2, 20, 5)).passed


def test_flat_flow_equals_half_wave():
    flow = FlowMap(FlowSpec(Hamiltonian.flat(2), 0.8, 40))
    y, eta = random_samples(2, 5, 6)
    a, b = flow(y, eta), HalfWave(2, 0.8)(y, eta)
    assert np.allclose(a[0], b[0], atol=1e-10) and np.allclose(a[1], b[1], atol=1e-12)


def test_metric_flow_is_canonical_and_second_order():
    flow = FlowMap(FlowSpec(Hamiltonian.from_metric(METRIC), 1.0, 1000))
    assert validate_canonical(flow, random_samples(2, 100, 7), tol=1e-6).passed
    _, rates = flow_order()
    assert all(abs(r - 2) < 0.2 for r in rates)


def test_flow_chart_exit():
    flow = FlowMap(FlowSpec(Hamiltonian.flat(1), 5.0, 50, bounds=2.0))
    with pytest.raises(ChartError) as err:
        flow([0.0], [1.0])
    assert 1.9 < err.value.exit_time < 2.2


def test_build_map_catalog():
    assert isinstance(build_map("identity", n=2), Identity)
    assert build_map({"map": "half_wave", "t": 1.0, "n": 2}).t == 1.0
    with pytest.raises(DomainError):
        build_map({"map": "nope"})
    with pytest.raises(DomainError):
        build_map({"map": "lift"})


def test_one_dimensional_flows_compile():
    flat = FlowMap(FlowSpec(Hamiltonian.flat(1), 1.0, 20))
    assert np.allclose(flat([0.2], [-2.0])[0], [-0.8])
    curved = FlowMap(FlowSpec(Hamiltonian.from_metric([["1 + 0.1*x1^2"]]), 1.0, 100))
    assert validate_canonical(curved, random_samples(1, 10, 8), tol=1e-8).passed

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fiocalc import DomainError
from fiocalc.acceptance import random_frame_pair, random_pair, random_symplectic
from fiocalc.lagrangian import (
    BasePoint,
    ChartMap,
    GraphForm,
    LagrangianFrame,
    graph_form,
    intersection_dims,
    kashiwara_direct,
    kashiwara_graphs,
    kashiwara_vs_horizontal,
    r_index,
    transform_frame,
    validate_frame,
    varkappa_direct,
    varkappa_graphs,
    zeroing_chart,
)


@settings(max_examples=80, deadline=None)
@given(st.integers(1, 4), st.integers(0, 10_000))
def test_graph_formulas_match_direct_signature(n, seed):
    rng = np.random.default_rng(seed)
    A1, A2 = random_pair(n, rng)
    g = kashiwara_graphs(A1, A2)
    L1, L2 = LagrangianFrame(A1, np.eye(n)), LagrangianFrame(A2, np.eye(n))
    assert g.kappa == kashiwara_direct(L1, L2)
    assert g.r == r_index(L1, L2)
    assert g.varkappa == varkappa_direct(L1, L2)


def test_kashiwara_scalar_values():
    # n = 1: kappa(L1, V, L2) for graphs a1, a2 over the vertical
    assert tuple(kashiwara_graphs([[1.0]], [[-1.0]])) == (1, 1, 1)
    assert tuple(kashiwara_graphs([[-1.0]], [[1.0]])) == (-1, 1, 0)
    assert tuple(kashiwara_graphs([[2.0]], [[2.0]])) == (0, 0, 0)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 4), st.integers(0, 10_000))
def test_varkappa_identities(n, seed):
    rng = np.random.default_rng(seed)
    L1, L2 = random_frame_pair(n, rng)
    d12 = intersection_dims(L1, L2)[2]
    assert kashiwara_direct(L1, L2) == -kashiwara_direct(L2, L1)
    assert varkappa_direct(L1, L2) + varkappa_direct(L2, L1) == n - d12


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(0, 10_000))
def test_graph_route_over_random_horizontal(n, seed):
    rng = np.random.default_rng(seed)
    L1, L2 = random_frame_pair(n, rng)
    g = varkappa_graphs(L1, L2, rng)
    assert g.kappa == kashiwara_direct(L1, L2)
    assert g.varkappa == varkappa_direct(L1, L2)


def test_kappa_against_horizontal_is_sgn_btc():
    rng = np.random.default_rng(5)
    H = LagrangianFrame.horizontal(3)
    for _ in range(50):
        L1, _ = random_frame_pair(3, rng)
        S = L1.B.T @ L1.C
        assert kashiwara_vs_horizontal(L1) == kashiwara_direct(L1, H)
        assert kashiwara_vs_horizontal(L1) == int(np.sum(np.sign(np.round(np.linalg.eigvalsh(S + S.T), 9))))


def test_intersection_dims_of_standard_frames():
    V, H = LagrangianFrame.vertical(2), LagrangianFrame.horizontal(2)
    assert intersection_dims(V, H) == (2, 0, 0)
    assert intersection_dims(V, V)[2] == 2


def test_invalid_frame_rejected():
    bad = LagrangianFrame(np.eye(2), [[0.0, 1.0], [0.0, 0.0]])
    assert not validate_frame(bad).valid
    with pytest.raises(DomainError):
        kashiwara_direct(bad, LagrangianFrame.vertical(2))


def test_rank_deficient_frame_rejected():
    assert validate_frame(LagrangianFrame(np.zeros((2, 2)), np.diag([1.0, 0.0]))).rank_defect == 1


def test_graph_form_roundtrip():
    A = np.array([[1.0, 0.5], [0.5, -2.0]])
    for orientation in ("over-vertical", "over-horizontal"):
        F = GraphForm(A, orientation).frame()
        assert np.allclose(graph_form(F, orientation).A, A)


def test_graph_form_requires_transversality():
    with pytest.raises(DomainError):
        graph_form(LagrangianFrame.horizontal(2), "over-vertical")


def test_symplectic_maps_preserve_frames():
    rng = np.random.default_rng(1)
    M = random_symplectic(3, rng)
    n = 3
    Om = np.block([[np.zeros((n, n)), np.eye(n)], [-np.eye(n), np.zeros((n, n))]])
    assert np.allclose(M.T @ Om @ M, Om, atol=1e-10)


def test_transform_frame_keeps_lagrangian_and_base():
    base = BasePoint([0.2, -0.1], [0.6, 0.8])
    F = LagrangianFrame(np.eye(2), np.array([[0.3, 0.1], [0.1, -0.4]]), base)
    Q = np.zeros((2, 2, 2))
    Q[1, 0, 0] = -2.0
    G = transform_frame(F, ChartMap.quadratic([0.0, 0.0], Q, chart_id="shear"))
    assert validate_frame(G).valid
    assert G.base.chart_id == "shear"


def test_zeroing_chart_makes_subspace_horizontal():
    base = BasePoint([0.1, 0.3], [0.6, 0.8])
    A = np.array([[0.5, 0.2], [0.2, -1.0]])
    F = LagrangianFrame(np.eye(2), A, base)
    G = transform_frame(F, zeroing_chart(base, A))
    assert np.allclose(G.C, 0, atol=1e-12)

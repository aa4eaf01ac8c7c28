import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fiocalc import DomainError, RefinementError
from fiocalc.inertia import (
    det_plus,
    det_plus_arg,
    det_plus_arg_continued,
    inertia,
    kernel_projector,
    numerical_rank,
    signature,
)


def sym_from_eigs(eigs, seed=0):
    rng = np.random.default_rng(seed)
    n = len(eigs)
    Q = np.linalg.qr(rng.standard_normal((n, n)))[0]
    return (Q * np.asarray(eigs, float)) @ Q.T


def test_inertia_counts_diagonal():
    res = inertia(np.diag([3.0, -1.0, 0.0, 2.0]))
    assert tuple(res) == (2, 1, 3, 1)


def test_inertia_rejects_asymmetric():
    with pytest.raises(DomainError):
        inertia([[1.0, 2.0], [0.0, 1.0]])


def test_inertia_rejects_non_square():
    with pytest.raises(DomainError):
        inertia(np.ones((2, 3)))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.sampled_from([-2.0, -0.5, 0.0, 0.7, 3.0]), min_size=1, max_size=5), st.integers(0, 1000))
def test_inertia_invariant_under_congruence(eigs, seed):
    S = sym_from_eigs(eigs, seed)
    rng = np.random.default_rng(seed + 1)
    T = rng.standard_normal((len(eigs), len(eigs))) + 3 * np.eye(len(eigs))
    want = (sum(e > 0 for e in eigs), sum(e < 0 for e in eigs))
    got = inertia(S)
    assert (got.kappa_plus, got.kappa_minus) == want
    assert signature(T.T @ S @ T) == want[0] - want[1]


def test_empty_matrix_is_fine():
    assert signature(np.zeros((0, 0))) == 0


def test_numerical_rank_and_projector():
    C = sym_from_eigs([1.0, 0.0, 0.0, 2.0])
    P = kernel_projector(C)
    assert numerical_rank(C) == 2
    assert np.allclose(P @ P, P)
    assert np.allclose(C @ P, 0, atol=1e-12)


def test_det_plus_projects_out_kernel():
    C = np.diag([2.0, 0.0, 1.0 + 1.0j])
    assert np.isclose(det_plus(C), 2.0 * (1.0 + 1.0j))


def test_det_plus_arg_branch_range():
    C = np.diag([1e-3 + 1.0j, 1e-3 + 1.0j, 1.0])
    arg = det_plus_arg(C)
    assert np.isclose(arg, 2 * np.angle(1e-3 + 1.0j))
    assert abs(arg) <= 3 * np.pi / 2


def test_det_plus_arg_real_matrix_is_zero():
    assert det_plus_arg(sym_from_eigs([1.0, 0.0, 2.0])) == 0.0


def test_det_plus_domain_requires_psd_real_part():
    with pytest.raises(DomainError):
        det_plus(np.diag([-1.0, 1.0]))


def test_det_plus_arg_continued_follows_rotation():
    path = [np.diag([np.cos(a) + 1e-2 + 1j * np.sin(a), 1.0]) for a in np.linspace(0, 1.5, 40)]
    out = det_plus_arg_continued(path)
    want = [np.angle(np.cos(a) + 1e-2 + 1j * np.sin(a)) for a in np.linspace(0, 1.5, 40)]
    assert np.allclose(out, want, atol=1e-12)


def test_det_plus_arg_continued_flags_coarse_steps():
    path = [np.array([[1.0 + 0j]]), np.array([[1e-3 + 1.0j]])]
    with pytest.raises(RefinementError) as err:
        det_plus_arg_continued(path, max_step=1.0)
    assert err.value.interval == (0, 1)

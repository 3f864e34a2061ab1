import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adaptchi import mps as M
from adaptchi.errors import DegenerateSpectrum, InvalidBasisState, InvalidRank, SizeGuard
from oracles import contract_mps


def test_product_states():
    psi = M.to_statevector(M.product_state(2, 2, (0, 1)))
    np.testing.assert_allclose(psi, [0, 1, 0, 0])
    neel = M.to_statevector(M.neel_state(4))
    assert neel[0b0101] == 1 and np.count_nonzero(neel) == 1
    single = M.product_state(1, 2, (1,))
    np.testing.assert_allclose(M.to_statevector(single), [0, 1])
    assert M.product_state(2, 2, (0, 1)).bond_dims == (1,)


def test_product_state_rejects_bad_index():
    with pytest.raises(InvalidBasisState):
        M.product_state(2, 2, (0, 2))
    with pytest.raises(InvalidBasisState):
        M.product_state(3, 2, (0, 1))


def test_random_mps_determinism_and_caps():
    a, b = M.random_mps(5, 2, 4, seed=3), M.random_mps(5, 2, 4, seed=3)
    for x, y in zip(a.tensors, b.tensors):
        np.testing.assert_array_equal(x, y)
    assert M.random_mps(4, 2, 100, seed=0).bond_dims == (2, 4, 2)
    psi = contract_mps(M.random_mps(6, 2, 8, seed=7).tensors)
    assert np.linalg.norm(psi) == pytest.approx(1.0, abs=1e-10)


def test_invalid_structure():
    with pytest.raises(ValueError):
        M.MatrixProductState([np.ones((2, 2, 1))])
    with pytest.raises(ValueError):
        M.MatrixProductState([np.ones((1, 2, 2)), np.ones((3, 2, 1))])


@pytest.mark.parametrize(
    "spec, expected",
    [((1.0,), 0.0), ((2**-0.5, 2**-0.5), math.log(2)),
     ((0.9**0.5, 0.1**0.5), -0.9 * math.log(0.9) - 0.1 * math.log(0.1))],
)
def test_entropy_values(spec, expected):
    assert M.entropy_from_spectrum(spec) == pytest.approx(expected, abs=1e-12)


def test_entropy_frozen_value():
    # -0.9 ln 0.9 - 0.1 ln 0.1 evaluated independently
    assert M.entropy_from_spectrum((0.9**0.5, 0.1**0.5)) == pytest.approx(0.325083, abs=1e-6)


def test_entropy_rejects_zero_spectrum():
    with pytest.raises(DegenerateSpectrum):
        M.entropy_from_spectrum((0.0, 0.0))


def test_truncation_error_values():
    assert M.truncation_error((0.8**0.5, 0.2**0.5), 1) == pytest.approx(0.2**0.5)
    assert M.truncation_error((1.0, 0.0), 1) == 0
    assert M.truncation_error((0.5, 0.5, 0.5), 3) == 0
    with pytest.raises(InvalidRank):
        M.truncation_error((1.0,), 2)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(1e-6, 1.0), min_size=1, max_size=40))
def test_entropy_bound_and_monotone_error(vals):
    lam = np.sort(np.array(vals))[::-1]
    assert M.entropy_from_spectrum(lam) <= math.log(len(lam)) + 1e-12
    errs = [M.truncation_error(lam, k) for k in range(1, len(lam) + 1)]
    assert all(a >= b - 1e-15 for a, b in zip(errs, errs[1:]))


def test_split_singlet():
    theta = np.array([[0, 1], [-1, 0]]) / np.sqrt(2)
    left, lam, right, out = M.split_two_site(theta, 2, d=2)
    np.testing.assert_allclose(lam.values, [2**-0.5, 2**-0.5])
    assert out.entropy == pytest.approx(math.log(2))
    assert left.shape == (1, 2, 2) and right.shape == (2, 2, 1)


def test_split_product():
    theta = np.zeros((2, 2))
    theta[0, 0] = 1
    _, _, _, out = M.split_two_site(theta, 4, d=2)
    assert out.kept_chi == 1 and out.truncation_error == 0


def test_split_random_tail_and_roundtrip():
    rng = np.random.default_rng(11)
    theta = rng.standard_normal((2, 2, 2, 2)) + 1j * rng.standard_normal((2, 2, 2, 2))
    left, _, right, out = M.split_two_site(theta, 3)
    s = np.linalg.svd(theta.reshape(4, 4), compute_uv=False)
    assert out.truncation_error == pytest.approx(np.sqrt(np.sum(s[3:] ** 2)), rel=1e-10)
    left, _, right, _ = M.split_two_site(theta, 4, trunc_floor=0.0, absorb="left")
    back = np.tensordot(left, right, axes=(2, 0))
    assert np.linalg.norm(back - theta) / np.linalg.norm(theta) <= 1e-10
    assert M.is_right_isometry(right)


def test_split_absorb_direction():
    rng = np.random.default_rng(12)
    theta = rng.standard_normal((3, 2, 2, 3))
    left, _, _, _ = M.split_two_site(theta, 4, absorb="right")
    assert M.is_left_isometry(left)


def test_canonicalize():
    psi = M.random_mps(6, 2, 8, seed=1)
    c = M.canonicalize(psi, 3)
    assert M.check_canonical(c)
    assert c.norm() == pytest.approx(psi.norm(), abs=1e-10)
    v0 = M.to_statevector(psi)
    v1 = M.to_statevector(M.canonicalize(M.canonicalize(M.canonicalize(psi, 0), 5), 0))
    assert abs(np.vdot(v0, v1)) == pytest.approx(1.0, abs=1e-10)


def test_canonicalize_product_state():
    p = M.neel_state(4)
    c = M.canonicalize(p, 2)
    for a, b in zip(p.tensors, c.tensors):
        np.testing.assert_allclose(np.abs(a), np.abs(b), atol=1e-14)


def test_statevector_matches_oracle():
    psi = M.random_mps(8, 2, 6, seed=2)
    np.testing.assert_allclose(M.to_statevector(psi), contract_mps(psi.tensors), atol=1e-13)
    assert np.linalg.norm(M.to_statevector(psi)) == pytest.approx(1.0, abs=1e-10)


def test_statevector_singlet():
    a = np.zeros((1, 2, 2))
    a[0, 0, 0] = a[0, 1, 1] = 1
    b = np.zeros((2, 2, 1))
    b[0, 1, 0], b[1, 0, 0] = 2**-0.5, -(2**-0.5)
    np.testing.assert_allclose(M.to_statevector(M.MatrixProductState([a, b])),
                               [0, 2**-0.5, -(2**-0.5), 0], atol=1e-15)


def test_statevector_size_guard():
    with pytest.raises(SizeGuard):
        M.to_statevector(M.neel_state(21))


def test_bond_entropy_gauge_invariance():
    psi = M.random_mps(7, 2, 6, seed=4)
    a = M.bond_entropies(M.canonicalize(psi, 0))
    b = M.bond_entropies(M.canonicalize(psi, 6))
    np.testing.assert_allclose(a, b, atol=1e-10)
    # oracle: Schmidt values of the reshaped statevector at the middle cut
    v = contract_mps(psi.tensors).reshape(2**3, 2**4)
    s = np.linalg.svd(v, compute_uv=False)
    p = s**2 / np.sum(s**2)
    p = p[p > 1e-30]
    assert a[2] == pytest.approx(-np.sum(p * np.log(p)), abs=1e-10)


def test_parameter_count_and_average():
    assert M.parameter_count(M.product_state(2, 2, (0, 0))) == 4
    psi = M.random_mps(5, 2, 4, seed=0)
    assert psi.bond_dims == (2, 4, 4, 2)
    assert M.parameter_count(psi) == 2 * (1 * 2 + 2 * 4 + 4 * 4 + 4 * 2 + 2 * 1)
    q = M.random_mps(4, 2, 8, seed=0)
    assert M.parameter_count(q) == 40
    assert M.average_bond_dim(q) == pytest.approx(8 / 3)
    assert M.average_bond_dim(M.neel_state(5)) == 1


def test_uniform_bond_accounting():
    dims = M.max_bond_dims(100, 2, 256)
    assert len(dims) == 99
    # 99 x 256 bond units when every bond is at the cap; the open ends shave some off
    assert sum(dims) == 99 * 256 - 2 * sum(256 - 2**k for k in range(1, 8))
    assert dims[7:-7] == [256] * 85


def test_overlap_orthogonal_products():
    a, b = M.product_state(3, 2, (0, 0, 0)), M.product_state(3, 2, (0, 0, 1))
    assert M.overlap(a, b) == 0
    assert M.overlap(a, a) == 1

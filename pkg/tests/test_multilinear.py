"""Forms, frames and contraction primitives, checked against independent
brute-force oracles (matrix form of omega, cofactor determinants, and
permutation expansion of the interior product)."""

from itertools import permutations
from math import comb

import numpy as np
import pytest

from slevolve import ValidationError
from slevolve.multilinear import (ComplexPoint, Frame, Multivector,
                                  complex_to_real, contract, eval_omega,
                                  eval_omega_complex, gram_volume, k_subsets,
                                  real_to_complex)


def omega_matrix(m):
    """Independent oracle: omega as an antisymmetric 2m x 2m matrix built
    from its coordinate-pair definition."""
    W = np.zeros((2 * m, 2 * m))
    for j in range(m):
        W[2 * j, 2 * j + 1] = 1.0
        W[2 * j + 1, 2 * j] = -1.0
    return W


def laplace_det(M):
    """Cofactor-expansion determinant, independent of numpy.linalg."""
    n = M.shape[0]
    if n == 1:
        return M[0, 0]
    total = 0.0 + 0.0j
    for j in range(n):
        minor = np.delete(np.delete(M, 0, axis=0), j, axis=1)
        total += ((-1) ** j) * M[0, j] * laplace_det(minor)
    return total


def perm_expand_contract(indices, form_idx, n):
    """Permutation-expansion oracle for e_I . dx_J: expand the basis
    multivector into signed tensor products and contract the form with the
    leading slots."""
    k = len(indices)
    q = len(form_idx)
    out = np.zeros(n)
    for perm in permutations(range(k)):
        sign = 1
        seen = list(perm)
        for i in range(len(seen)):
            for j in range(i + 1, len(seen)):
                if seen[i] > seen[j]:
                    sign = -sign
        seq = [indices[p] for p in perm]
        if tuple(seq[:q]) != tuple(form_idx):
            continue
        rest = seq[q:]
        vec = np.zeros(n)
        vec[rest[0]] = 1.0
        out += sign * vec
    # normalize: the alternating expansion counts each ordering of the
    # remaining slots; for k-q = 1 there is exactly one, so no division
    return out


class TestOmega:
    def test_unit_axis_pair(self):
        e1 = np.array([1.0, 0, 0, 0])
        ie1 = np.array([0.0, 1, 0, 0])
        assert eval_omega(e1, ie1, 2) == pytest.approx(1.0, abs=0)

    def test_real_plane_is_lagrangian(self):
        e1 = np.array([1.0, 0, 0, 0])
        e2 = np.array([0.0, 0, 1, 0])
        assert eval_omega(e1, e2, 2) == 0.0

    def test_matches_matrix_oracle(self):
        rng = np.random.default_rng(7)
        for m in (2, 3, 5):
            W = omega_matrix(m)
            for _ in range(25):
                v1 = rng.normal(size=2 * m)
                v2 = rng.normal(size=2 * m)
                assert eval_omega(v1, v2, m) == pytest.approx(
                    v1 @ W @ v2, abs=1e-14 * (1 + abs(v1 @ W @ v2)))

    def test_antisymmetry(self):
        rng = np.random.default_rng(8)
        for _ in range(50):
            v = rng.normal(size=6)
            assert eval_omega(v, v, 3) == 0.0

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ValidationError):
            eval_omega(np.zeros(4), np.zeros(6), 3)


class TestOmegaComplex:
    def test_real_basis_frame(self):
        m = 3
        vecs = np.zeros((m, 2 * m))
        for j in range(m):
            vecs[j, 2 * j] = 1.0
        assert eval_omega_complex(Frame(m, vecs)) == pytest.approx(1.0 + 0.0j)

    def test_one_imaginary_axis(self):
        m = 3
        vecs = np.zeros((m, 2 * m))
        for j in range(m - 1):
            vecs[j, 2 * j] = 1.0
        vecs[m - 1, 2 * (m - 1) + 1] = 1.0
        assert eval_omega_complex(Frame(m, vecs)) == pytest.approx(0.0 + 1.0j)

    def test_cofactor_oracle(self):
        rng = np.random.default_rng(9)
        for m in (2, 3, 4):
            for _ in range(10):
                vecs = rng.normal(size=(m, 2 * m))
                got = eval_omega_complex(Frame(m, vecs))
                Z = real_to_complex(vecs).T
                assert got == pytest.approx(laplace_det(Z), abs=1e-12)

    def test_hadamard_bound(self):
        rng = np.random.default_rng(10)
        for _ in range(40):
            m = int(rng.integers(2, 5))
            vecs = rng.normal(size=(m, 2 * m))
            val = abs(eval_omega_complex(Frame(m, vecs)))
            bound = np.prod(np.linalg.norm(vecs, axis=1))
            assert val <= bound * (1 + 1e-12)

    def test_calibration_equality_on_rotated_planes(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            m = int(rng.integers(2, 5))
            thetas = rng.uniform(-np.pi, np.pi, size=m)
            real_vecs = rng.normal(size=(m, m))
            vecs = np.array([
                complex_to_real(np.exp(1j * thetas) * row)
                for row in real_vecs])
            frame = Frame(m, vecs)
            vol = gram_volume(vecs)
            Om = eval_omega_complex(frame)
            assert abs(Om) == pytest.approx(vol, abs=1e-10 * (1 + vol))
            # phase: Re Omega = cos(sum theta) times the signed volume
            signed = np.linalg.det(real_vecs)
            assert Om.real == pytest.approx(
                np.cos(thetas.sum()) * signed, abs=1e-10 * (1 + abs(signed)))


class TestContract:
    def test_sign_convention_single_entry(self):
        chi = Multivector.basis(3, (0, 1))
        alpha = Multivector.basis(3, (0,))
        out = contract(chi, alpha)
        oracle = perm_expand_contract((0, 1), (0,), 3)
        assert np.array_equal(out, oracle)
        assert np.count_nonzero(out) == 1

    def test_disjoint_indices_vanish(self):
        chi = Multivector.basis(3, (0, 1))
        alpha = Multivector.basis(3, (2,))
        assert np.all(contract(chi, alpha) == 0.0)

    def test_oracle_random_bases(self):
        rng = np.random.default_rng(12)
        for n, k in ((3, 2), (4, 2), (4, 3), (5, 3)):
            for I in k_subsets(n, k):
                for J in k_subsets(n, k - 1):
                    got = contract(Multivector.basis(n, I),
                                   Multivector.basis(n, J))
                    want = perm_expand_contract(I, J, n)
                    assert np.array_equal(got, want), (I, J)

    def test_bilinearity(self):
        rng = np.random.default_rng(13)
        n, k = 4, 3
        for _ in range(20):
            c1 = rng.normal(size=comb(n, k))
            c2 = rng.normal(size=comb(n, k - 1))
            chi = Multivector(n, k, c1)
            alpha = Multivector(n, k - 1, c2)
            lhs = contract(2.0 * chi, alpha)
            rhs = 2.0 * contract(chi, alpha)
            assert np.allclose(lhs, rhs, atol=1e-14)
            lhs2 = contract(chi, 3.0 * alpha)
            assert np.allclose(lhs2, 3.0 * contract(chi, alpha), atol=1e-14)

    def test_degree_mismatch_rejected(self):
        with pytest.raises(ValidationError):
            contract(Multivector.basis(4, (0, 1, 2)),
                     Multivector.basis(4, (0,)))


class TestMultivectorBasics:
    def test_wedge_anticommutes(self):
        a = Multivector.basis(4, (0,))
        b = Multivector.basis(4, (2,))
        ab = a.wedge(b)
        ba = b.wedge(a)
        assert np.allclose(ab.coeffs, -ba.coeffs)

    def test_wedge_against_quadric_expansion(self):
        # interior of a 1-form with the top element reproduces the signed
        # hatted expansion
        n = 4
        top = Multivector.basis(n, range(n))
        xi = np.array([0.3, -1.2, 0.8, 2.0])
        out = top.interior(Multivector.from_vector(xi))
        expected = Multivector.zero(n, n - 1)
        for j in range(n):
            rest = tuple(i for i in range(n) if i != j)
            expected = expected + ((-1.0) ** j * xi[j]) * Multivector.basis(n, rest)
        assert np.allclose(out.coeffs, expected.coeffs, atol=1e-15)

    def test_pushforward_matches_minor_oracle(self):
        rng = np.random.default_rng(14)
        n, N, k = 3, 4, 2
        B = rng.normal(size=(N, n))
        mv = Multivector(n, k, rng.normal(size=comb(n, k)))
        pushed = mv.pushforward(B)
        for t_idx, T in enumerate(k_subsets(N, k)):
            acc = 0.0
            for s_idx, S in enumerate(k_subsets(n, k)):
                acc += mv.coeffs[s_idx] * np.linalg.det(
                    B[np.ix_(list(T), list(S))])
            assert pushed.coeffs[t_idx] == pytest.approx(acc, abs=1e-12)

    def test_validation(self):
        with pytest.raises(ValidationError):
            Multivector(3, 2, np.zeros(5))
        with pytest.raises(ValidationError):
            Multivector(20, 1, np.zeros(20))
        with pytest.raises(ValidationError):
            ComplexPoint(2, np.array([1.0, 2.0, np.inf, 0.0]))
        with pytest.raises(ValidationError):
            Frame(2, np.zeros((3, 4)))

    def test_complex_real_round_trip(self):
        rng = np.random.default_rng(15)
        z = rng.normal(size=4) + 1j * rng.normal(size=4)
        assert np.allclose(real_to_complex(complex_to_real(z)), z)
        p = ComplexPoint.from_complex(z)
        assert np.allclose(p.to_complex(), z)

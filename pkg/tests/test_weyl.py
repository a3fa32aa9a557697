import numpy as np
import pytest
from hypothesis import given, strategies as hst

from stinesim import weyl
from stinesim.weyl import (DenseOperator, WeylIndex, decompose, naive_op,
                           naive_x_op, op_inner, reconstruct, weyl_matrix,
                           weyl_product, weyl_string, x_projector, z_projector)

PAULI = {
    "I": np.eye(2),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]]),
    "Z": np.diag([1.0, -1.0]).astype(complex),
}


def test_shift_is_pauli_x_at_q2():
    assert np.allclose(weyl_matrix(2, 1, 0), PAULI["X"])


def test_identity_case():
    assert np.allclose(weyl_matrix(2, 0, 0), np.eye(2))


def test_q3_multiplication_rule():
    s = weyl_matrix(3, 1, 0)
    w = weyl_matrix(3, 0, 1)
    omega = np.exp(2j * np.pi / 3)
    assert np.allclose(w @ s, omega * s @ w, atol=1e-12)


def test_invalid_dimension():
    with pytest.raises(weyl.DimensionError):
        weyl_matrix(1, 0, 0)


@given(hst.integers(2, 5), hst.integers(-7, 7), hst.integers(-7, 7))
def test_weyl_matrices_unitary(q, m, n):
    u = weyl_matrix(q, m, n)
    assert np.abs(u.conj().T @ u - np.eye(q)).max() < 1e-12


@given(hst.integers(2, 5), hst.integers(0, 4), hst.integers(0, 4))
def test_tracelessness(q, m, n):
    tr = np.trace(weyl_matrix(q, m, n))
    if m % q == 0 and n % q == 0:
        assert abs(tr - q) < 1e-12
    else:
        assert abs(tr) < 1e-12


@pytest.mark.parametrize("q", [2, 3])
def test_single_site_orthonormality(q):
    ops = [weyl_matrix(q, m, n) for m in range(q) for n in range(q)]
    gram = np.array([[op_inner(a, b) for b in ops] for a in ops])
    assert np.abs(gram - np.eye(q * q)).max() < 1e-12


def test_op_inner_basics():
    assert abs(op_inner(PAULI["Z"], PAULI["Z"]) - 1) < 1e-12
    assert abs(op_inner(np.eye(2), PAULI["Z"])) < 1e-12
    assert abs(op_inner(PAULI["X"], PAULI["Y"])) < 1e-12


def test_op_inner_skew_symmetry():
    rng = np.random.default_rng(3)
    a = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    b = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    assert abs(op_inner(a, b) - np.conj(op_inner(b, a))) < 1e-12


def test_op_inner_dimension_mismatch():
    with pytest.raises(weyl.IncompatibleOperands):
        op_inner(np.eye(2), np.eye(4))


@pytest.mark.parametrize("q", [2, 3])
def test_phase_law_exhaustive_single_site(q):
    """weyl_product agrees with dense multiplication for every index pair."""
    for ma in range(q):
        for na in range(q):
            for mb in range(q):
                for nb in range(q):
                    a = WeylIndex((ma,), (na,), q, (0,))
                    b = WeylIndex((mb,), (nb,), q, (0,))
                    ph, c = weyl_product(a, b)
                    dense = weyl_matrix(q, ma, na) @ weyl_matrix(q, mb, nb)
                    assert np.abs(dense - ph * c.dense()).max() < 1e-12


def test_product_identity_and_anticommutation():
    ident = WeylIndex((0,), (0,), 2, (0,))
    z = WeylIndex((0,), (1,), 2, (0,))
    x = WeylIndex((1,), (0,), 2, (0,))
    ph, c = weyl_product(ident, z)
    assert ph == 1 and c == z
    ph, c = weyl_product(z, x)
    assert abs(ph + 1) < 1e-12 and c == WeylIndex((1,), (1,), 2, (0,))


def test_product_incompatible_operands():
    a = WeylIndex((0,), (1,), 2, (0,))
    b = WeylIndex((0,), (1,), 3, (0,))
    with pytest.raises(weyl.IncompatibleOperands):
        weyl_product(a, b)


def test_decompose_pauli_x():
    v = decompose(PAULI["X"], 2)
    assert set(v.terms) == {WeylIndex((1,), (0,), 2, (0,))}
    assert abs(v.terms[WeylIndex((1,), (0,), 2, (0,))] - 1) < 1e-12


def test_decompose_projector():
    """|0><0| = (I + Z)/2."""
    v = decompose(np.diag([1.0, 0.0]), 2)
    assert abs(v.coeff(WeylIndex((0,), (0,), 2, (0,))) - 0.5) < 1e-12
    assert abs(v.coeff(WeylIndex((0,), (1,), 2, (0,))) - 0.5) < 1e-12


@pytest.mark.parametrize("q,n_sites", [(2, 1), (2, 2), (2, 3), (3, 1), (3, 2)])
def test_roundtrip_random_operators(q, n_sites):
    rng = np.random.default_rng(q * 10 + n_sites)
    d = q ** n_sites
    for _ in range(20):
        a = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
        assert np.abs(reconstruct(decompose(a, q)) - a).max() < 1e-12


@pytest.mark.parametrize("q", [2, 3])
def test_completeness_hermitian(q):
    rng = np.random.default_rng(17)
    for _ in range(100):
        a = rng.standard_normal((q, q)) + 1j * rng.standard_normal((q, q))
        a = a + a.conj().T
        assert np.abs(reconstruct(decompose(a, q)) - a).max() < 1e-12


def test_decompose_rejects_bad_dimension():
    with pytest.raises(weyl.DimensionError):
        decompose(np.eye(3), 2)


def test_z_projector():
    assert np.allclose(z_projector(2, 0), np.sqrt(2) * np.diag([1.0, 0.0]))
    assert abs(op_inner(z_projector(2, 0), z_projector(2, 1))) < 1e-12


def test_x_projector_is_plus_state():
    plus = np.full((2, 2), 0.5)
    assert np.allclose(x_projector(2, 0), np.sqrt(2) * plus)


@pytest.mark.parametrize("q", [2, 3, 4])
def test_projector_orthonormality(q):
    for proj in (z_projector, x_projector):
        for a in range(q):
            for b in range(q):
                expected = 1.0 if a == b else 0.0
                assert abs(op_inner(proj(q, a), proj(q, b)) - expected) < 1e-12


def test_projector_index_range():
    with pytest.raises(IndexError):
        z_projector(2, 2)
    with pytest.raises(IndexError):
        x_projector(3, -1)


@pytest.mark.parametrize("q", [2, 3])
def test_naive_weyl_change_of_basis(q):
    """sqrt(q)|a><b| = sum_n omega^{-nb}/sqrt(q) S^{a-b} W^n, and the
    shift-basis analogue, verified exhaustively."""
    omega = np.exp(2j * np.pi / q)
    for a in range(q):
        for b in range(q):
            expansion = sum(omega ** (-n * b) / np.sqrt(q)
                            * weyl_matrix(q, a - b, n) for n in range(q))
            assert np.abs(naive_op(q, a, b) - expansion).max() < 1e-12
            expansion_x = sum(omega ** (-m * a) / np.sqrt(q)
                              * weyl_matrix(q, m, b - a) for m in range(q))
            assert np.abs(naive_x_op(q, a, b) - expansion_x).max() < 1e-12


@pytest.mark.parametrize("q", [2, 3])
def test_naive_weyl_inner_products(q):
    omega = np.exp(2j * np.pi / q)
    for a in range(q):
        for b in range(q):
            for m in range(q):
                for n in range(q):
                    got = op_inner(naive_op(q, a, b), weyl_matrix(q, m, n))
                    expect = omega ** (-b * n) / np.sqrt(q) if (a - m - b) % q == 0 else 0.0
                    assert abs(got - expect) < 1e-12


def test_weyl_index_normalizes_mod_q():
    ix = WeylIndex((5, -1), (3, 7), 3, (0, 1))
    assert ix.m == (2, 2) and ix.n == (0, 1)


def test_dense_operator_validates_shape():
    with pytest.raises(weyl.DimensionError):
        DenseOperator(np.eye(3), 2, (0,))
    op = DenseOperator(np.eye(4), 2, (0, 1))
    assert not op.matrix.flags.writeable


def test_operator_vector_prune():
    v = weyl.OperatorVector(2, (0,))
    ix = WeylIndex((1,), (0,), 2, (0,))
    v.set(ix, 1e-20)
    assert ix not in v.terms
    v.set(ix, 0.5)
    v.add(ix, -0.5)
    assert ix not in v.terms


@given(hst.integers(2, 3), hst.integers(1, 2), hst.integers(0, 10 ** 6))
def test_weyl_string_roundtrip_property(q, n_sites, seed):
    rng = np.random.default_rng(seed)
    ms = tuple(int(x) for x in rng.integers(0, q, n_sites))
    ns = tuple(int(x) for x in rng.integers(0, q, n_sites))
    v = decompose(weyl_string(q, ms, ns), q)
    assert set(v.terms) == {WeylIndex(ms, ns, q, tuple(range(n_sites)))}

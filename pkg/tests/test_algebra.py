import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trotterlab.algebra import (
    Superoperator,
    choi_matrix,
    choi_min_eigenvalue,
    commutation_matrix,
    compose,
    dagger,
    embed_scalar,
    frobenius_norm,
    is_completely_positive,
    matrix_unit,
    superop_exp,
    superop_norm,
    unvec,
    vec,
)


def random_matrix(rng, d):
    return rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))


def random_superop(rng, d, scale=1.0):
    return Superoperator(d, scale * (rng.standard_normal((d * d, d * d))
                                     + 1j * rng.standard_normal((d * d, d * d))))


def test_vec_column_stacking():
    a = np.array([[1, 2], [3, 4]], dtype=complex)
    assert np.array_equal(vec(a), np.array([1, 3, 2, 4]))
    assert np.array_equal(unvec(vec(a)), a)


def test_left_right_matches_kron_identity():
    rng = np.random.default_rng(0)
    p, q, b = (random_matrix(rng, 3) for _ in range(3))
    op = Superoperator.left_right(p, q)
    assert np.allclose(op.apply(b), p @ b @ q)


def test_commutation_matrix_transposes():
    k = commutation_matrix(3)
    rng = np.random.default_rng(1)
    b = random_matrix(rng, 3)
    assert np.allclose(unvec(k @ vec(b)), b.T)
    assert np.allclose(k @ k, np.eye(9))


def test_star_conjugate_is_involution_partner():
    rng = np.random.default_rng(2)
    op = random_superop(rng, 2)
    b = random_matrix(rng, 2)
    assert np.allclose(op.star_conjugate().apply(b), dagger(op.apply(dagger(b))))
    assert np.allclose(op.star_conjugate().star_conjugate().rep, op.rep)


def test_involution_and_unit_identities():
    rng = np.random.default_rng(3)
    a, b = random_matrix(rng, 3), random_matrix(rng, 3)
    assert np.allclose(dagger(dagger(a)), a)
    assert np.allclose(dagger(a @ b), dagger(b) @ dagger(a))
    eye = embed_scalar(1.0, 3)
    assert np.allclose(eye @ a, a) and np.allclose(a @ eye, a)


def test_compose_identity_is_neutral():
    rng = np.random.default_rng(4)
    op = random_superop(rng, 2)
    ident = Superoperator.identity(2)
    assert np.allclose(compose(ident, op).rep, op.rep)
    assert np.allclose(compose(op, ident).rep, op.rep)


def test_compose_left_then_right_mul():
    rng = np.random.default_rng(5)
    c = random_matrix(rng, 2)
    b = random_matrix(rng, 2)
    sandwich = compose(Superoperator.left_mul(c), Superoperator.right_mul(c))
    assert np.allclose(sandwich.apply(b), c @ b @ c)


def test_compose_dimension_mismatch():
    with pytest.raises(ValueError):
        compose(Superoperator.identity(2), Superoperator.identity(3))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_compose_associative(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (random_superop(rng, 2) for _ in range(3))
    left = compose(compose(a, b), c).rep
    right = compose(a, compose(b, c)).rep
    assert np.max(np.abs(left - right)) <= 1e-12 * max(1.0, np.max(np.abs(left)))


def test_exp_of_zero_map_is_identity():
    zero = Superoperator.zero(3)
    assert np.array_equal(superop_exp(zero, 0.7).rep, np.eye(9))


def test_exp_scalar_case():
    gamma = 0.3 - 0.8j
    g = Superoperator(1, np.array([[gamma]]))
    assert np.allclose(superop_exp(g, 2.0).rep[0, 0], np.exp(2.0 * gamma))


def test_exp_matches_taylor_series():
    rng = np.random.default_rng(6)
    g = random_superop(rng, 2)
    t = 0.3
    term = np.eye(4, dtype=complex)
    series = term.copy()
    for k in range(1, 21):
        term = term @ (t * g.rep) / k
        series += term
    assert np.max(np.abs(superop_exp(g, t).rep - series)) <= 1e-9


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.booleans())
def test_exp_semigroup_law(seed, large_times):
    rng = np.random.default_rng(seed)
    g = random_superop(rng, 2)
    g = g * (10.0 / frobenius_norm(g)) if not large_times else g * (1.0 / frobenius_norm(g))
    hi = 1.0 if not large_times else 10.0
    s, t = rng.uniform(0, hi, size=2)
    lhs = compose(superop_exp(g, s), superop_exp(g, t)).rep
    rhs = superop_exp(g, s + t).rep
    assert np.max(np.abs(lhs - rhs)) <= 1e-9 * max(1.0, np.max(np.abs(rhs)))


def test_exp_negative_time_flagged():
    g = Superoperator.identity(2)
    with pytest.warns(UserWarning):
        superop_exp(g, -0.5)


def test_exp_rejects_non_finite():
    g = Superoperator(1, np.array([[np.inf]]))
    with pytest.raises(ValueError):
        superop_exp(g, 1.0)
    with pytest.raises(ValueError):
        superop_exp(Superoperator.identity(1), np.nan)


def test_norm_of_identity_and_zero():
    assert superop_norm(Superoperator.identity(3)) == pytest.approx(1.0, abs=1e-12)
    assert superop_norm(Superoperator.zero(3)) == 0.0


def test_norm_of_conjugation_map():
    # b -> c b c* with |c| = 2; brute-force maximization is the oracle.
    c = np.diag([2.0, 0.7 + 0.1j])
    op = Superoperator.left_right(c, dagger(c))
    rng = np.random.default_rng(7)
    brute = 0.0
    for _ in range(2_000):
        b = random_matrix(rng, 2)
        brute = max(brute, np.linalg.norm(op.apply(b), 2) / np.linalg.norm(b, 2))
    value = superop_norm(op)
    assert value == pytest.approx(4.0, rel=1e-8)
    assert value >= brute - 1e-9


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_norm_submultiplicative(seed):
    rng = np.random.default_rng(seed)
    a, b = random_superop(rng, 2), random_superop(rng, 2)
    assert superop_norm(compose(a, b)) <= superop_norm(a) * superop_norm(b) + 1e-8


def test_frobenius_norm_exact():
    rng = np.random.default_rng(8)
    op = random_superop(rng, 2)
    assert frobenius_norm(op) == pytest.approx(np.linalg.svd(op.rep)[1][0])


def test_choi_of_identity_is_entangled_projector():
    d = 2
    c = choi_matrix(Superoperator.identity(d))
    phi = sum(np.kron(np.eye(d)[:, i], np.eye(d)[:, i]) for i in range(d))
    assert np.allclose(c, np.outer(phi, phi.conj()))
    assert is_completely_positive(Superoperator.identity(d))


def test_single_kraus_map_is_cp():
    rng = np.random.default_rng(9)
    c = random_matrix(rng, 3)
    op = Superoperator.left_right(dagger(c), c)  # b -> c* b c
    assert is_completely_positive(op)


def test_transpose_map_not_cp():
    transpose = Superoperator.from_function(lambda b: b.T, 2)
    # Eigen-decomposition oracle: the Choi matrix of the transpose at d=2
    # is the swap, with spectrum {1, 1, 1, -1}.
    eigs = np.linalg.eigvalsh(choi_matrix(transpose))
    assert eigs[0] == pytest.approx(-1.0, abs=1e-12)
    assert choi_min_eigenvalue(transpose) == pytest.approx(-1.0, abs=1e-12)
    assert not is_completely_positive(transpose)


def test_cp_verdict_agrees_with_sampled_form():
    # Direct sampling of sum_ij b_i* A(a_i* a_j) b_j over random tuples.
    rng = np.random.default_rng(10)
    checked = 0
    for trial in range(25):
        d = int(rng.integers(2, 4))
        if trial % 2 == 0:
            ops = [random_matrix(rng, d) for _ in range(2)]
            rep = sum(np.kron(k.conj(), k) for k in ops)  # Kraus form: CP
            op = Superoperator(d, rep)
        else:
            op = random_superop(rng, d)
            op = op + op.star_conjugate()  # hermiticity preserving, generically not CP
        verdict = is_completely_positive(op)
        min_form = 0.0
        for _ in range(8):
            n = int(rng.integers(1, 4))
            lefts = [random_matrix(rng, d) for _ in range(n)]
            rights = [random_matrix(rng, d) for _ in range(n)]
            form = sum(dagger(rights[i]) @ op.apply(dagger(lefts[i]) @ lefts[j]) @ rights[j]
                       for i in range(n) for j in range(n))
            min_form = min(min_form, np.linalg.eigvalsh((form + dagger(form)) / 2)[0])
            checked += 1
        scale = max(1.0, frobenius_norm(op))
        if verdict:
            assert min_form >= -1e-8 * scale
        elif min_form < -1e-8 * scale:
            assert not verdict
    assert checked >= 200

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bogolab.fock import (
    BasisTooLarge,
    build_basis,
    build_product_basis,
    commutator,
    ladder,
    mode_change,
    monomial,
    number,
)


def interior(basis):
    """States whose every group sits strictly below its cap."""
    ok = np.ones(basis.size, dtype=bool)
    for g, (_, cap) in enumerate(basis.groups):
        ok &= basis.group_totals(g) < cap
    return ok


def test_small_basis_order():
    assert build_basis(2, 2).states.tolist() == [[0, 0], [0, 1], [0, 2], [1, 0], [1, 1], [2, 0]]


@given(st.integers(1, 4), st.integers(0, 5))
def test_basis_size_is_binomial(m, n):
    b = build_basis(m, n)
    assert b.size == math.comb(m + n, m)
    assert b.states.sum(axis=1).max() <= n
    assert len({tuple(s) for s in b.states}) == b.size


@given(st.integers(1, 4), st.integers(0, 4))
def test_index_roundtrip(m, n):
    b = build_basis(m, n)
    assert np.array_equal(b.index(b.states), np.arange(b.size))
    over = np.zeros((1, m), dtype=int)
    over[0, 0] = n + 1
    assert b.index(over)[0] == -1


def test_product_basis_caps():
    b = build_product_basis(3, [((0,), 5), ((1, 2), 2)])
    assert b.size == 6 * 6
    assert b.group_totals(0).max() == 5 and b.group_totals(1).max() == 2
    with pytest.raises(ValueError):
        build_product_basis(3, [((0,), 2), ((1,), 2)])


def test_basis_cap_enforced():
    with pytest.raises(BasisTooLarge):
        build_basis(8, 12, cap_states=1000)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 3), st.integers(1, 5), st.data())
def test_ccr_on_interior_states(m, n, data):
    b = build_basis(m, n)
    i = data.draw(st.integers(0, m - 1))
    j = data.draw(st.integers(0, m - 1))
    ai, adj = ladder(b, i, "annihilate"), ladder(b, j, "create")
    c = commutator(ai, adj).toarray()
    keep = interior(b)
    want = np.eye(b.size) * (i == j)
    assert np.max(np.abs((c - want)[np.ix_(keep, keep)])) < 1e-12
    # annihilators commute exactly, truncation or not
    aj = ladder(b, j, "annihilate")
    assert np.max(np.abs(commutator(ai, aj).toarray())) < 1e-12


def test_ladder_adjoint_and_number():
    b = build_basis(3, 4)
    for k in range(3):
        a, ad = ladder(b, k, "annihilate"), ladder(b, k, "create")
        assert np.allclose(a.toarray().conj().T, ad.toarray())
        assert np.allclose((ad @ a).toarray(), number(b, k).toarray())
    tot = number(b)
    assert np.allclose(tot.toarray(), tot.toarray().conj().T)
    assert np.allclose(np.diag(tot.toarray()), b.states.sum(axis=1))


def test_monomial_matches_product_of_ladders():
    b = build_basis(2, 4)
    direct = monomial(b, create=(0, 1), annihilate=(1, 1)).toarray()
    a1 = ladder(b, 1, "annihilate").toarray()
    ad0, ad1 = ladder(b, 0, "create").toarray(), ladder(b, 1, "create").toarray()
    assert np.allclose(direct, ad0 @ ad1 @ a1 @ a1)


def test_hermitian_tag_rejects_non_hermitian():
    from bogolab.fock import BosonOperator

    b = build_basis(1, 3)
    with pytest.raises(ValueError):
        BosonOperator(b, monomial(b, annihilate=(0,)), hermitian=True)


def _random_unitary(m, seed):
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m)))
    return q * (np.diag(r) / np.abs(np.diag(r)))


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000))
def test_mode_change_preserves_number_and_ccr(seed):
    b = build_basis(3, 3)
    u = _random_unitary(3, seed)
    rot = mode_change(b, u)
    total = sum((ad @ a).toarray() for a, ad in zip(rot.annihilate, rot.create))
    assert np.max(np.abs(total - number(b).toarray())) < 1e-12
    keep = interior(b)
    for i in range(3):
        for j in range(3):
            c = commutator(rot.annihilate[i], rot.create[j]).toarray()
            want = np.eye(b.size) * (i == j)
            assert np.max(np.abs((c - want)[np.ix_(keep, keep)])) < 1e-12


def test_mode_change_rejects_non_unitary():
    with pytest.raises(ValueError):
        mode_change(build_basis(2, 2), np.array([[1.0, 1.0], [0.0, 1.0]]))

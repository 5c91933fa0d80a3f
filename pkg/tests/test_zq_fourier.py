import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from csp_stream_lab.zq_fourier import (
    DenseFunction,
    SetIndicator,
    UcsParams,
    convolve,
    dft,
    distance_to_uniform_sq,
    hypercontractive_rho,
    hypercontractivity_check,
    idft,
    index_of,
    level_mass,
    level_masses,
    lp_norm,
    max_shifted_level_mass,
    noise_operator,
    ucs_bound,
    vector_of,
    weight_table,
)

import oracles


def rand_fn(rng, q, n):
    return DenseFunction(q, n, rng.normal(size=q**n) + 1j * rng.normal(size=q**n))


@st.composite
def qn_values(draw):
    q = draw(st.sampled_from([2, 3, 5]))
    n = draw(st.integers(1, 3 if q == 5 else 4))
    vals = draw(st.lists(st.floats(-5, 5), min_size=q**n, max_size=q**n))
    return q, n, np.array(vals)


def test_indexing_little_endian():
    assert index_of([1, 0, 2], 3) == 1 + 2 * 9
    assert vector_of(19, 3, 3).tolist() == [1, 0, 2]
    for idx in range(27):
        assert index_of(vector_of(idx, 3, 3), 3) == idx


def test_weight_table_matches_count():
    w = weight_table(3, 4)
    assert [oracles.weight(i, 3, 4) for i in range(81)] == w.tolist()


@settings(max_examples=60, deadline=None)
@given(qn_values())
def test_dft_matches_naive(data):
    q, n, vals = data
    got = dft(DenseFunction(q, n, vals)).coeffs
    np.testing.assert_allclose(got, oracles.naive_dft(vals, q, n), atol=1e-10)


@settings(max_examples=60, deadline=None)
@given(qn_values())
def test_roundtrip_and_parseval(data):
    q, n, vals = data
    f = DenseFunction(q, n, vals)
    sp = dft(f)
    np.testing.assert_allclose(idft(sp).values, vals, atol=1e-10)
    assert np.sum(np.abs(vals) ** 2) == pytest.approx(q**n * np.sum(np.abs(sp.coeffs) ** 2), rel=1e-9, abs=1e-9)


@pytest.mark.parametrize("q,n", [(2, 3), (3, 2), (5, 2)])
def test_convolution_against_brute_force(q, n, rng):
    f, g = rand_fn(rng, q, n), rand_fn(rng, q, n)
    c = convolve(f, g)
    np.testing.assert_allclose(c.values, oracles.naive_convolve(f.values, g.values, q, n), atol=1e-9)
    np.testing.assert_allclose(dft(c).coeffs, q**n * dft(f).coeffs * dft(g).coeffs, atol=1e-9)


@pytest.mark.parametrize("q,n", [(2, 3), (3, 2), (5, 2)])
def test_product_transform_against_brute_force(q, n, rng):
    f, g = rand_fn(rng, q, n), rand_fn(rng, q, n)
    fg = DenseFunction(q, n, f.values * g.values)
    np.testing.assert_allclose(
        dft(fg).coeffs, oracles.naive_product_spectrum(dft(f).coeffs, dft(g).coeffs, q, n), atol=1e-9
    )


def test_character_has_single_coefficient():
    q, n = 3, 2
    u = (2, 1)
    vals = [np.exp(2j * np.pi * (u[0] * a[0] + u[1] * a[1]) / q) for a in oracles.points(q, n)]
    sp = dft(DenseFunction(q, n, np.array(vals)))
    expect = np.zeros(9)
    expect[index_of(u, q)] = 1
    np.testing.assert_allclose(sp.coeffs, expect, atol=1e-12)


def test_indicator_spectrum_of_subcube():
    # B = {x : x_0 = 0} in Z_2^3: fhat(0)=1/2, fhat(e_0)=1/2, else 0
    B = SetIndicator.from_members(2, 3, [i for i in range(8) if i % 2 == 0])
    c = dft(B).coeffs
    assert c[0] == pytest.approx(0.5) and c[1] == pytest.approx(0.5)
    assert np.allclose(c[2:], 0)


def test_distance_to_uniform(rng):
    q, n = 3, 3
    p = rng.random(q**n)
    f = DenseFunction(q, n, p / p.sum())
    sp = dft(f).coeffs
    assert distance_to_uniform_sq(f) == pytest.approx(q**n * np.sum(np.abs(sp[1:]) ** 2), rel=1e-9)


def test_level_mass_by_enumeration(rng):
    q, n = 3, 3
    sp = dft(rand_fn(rng, q, n))
    v = (1, 0, 2)
    for h in range(n + 1):
        brute = sum(
            abs(sp.coeffs[i])
            for i in range(q**n)
            if sum(1 for j in range(n) if (vector_of(i, q, n)[j] + v[j]) % q) == h
        )
        assert level_mass(sp, v, h) == pytest.approx(brute, rel=1e-12)


def test_max_shifted_level_mass_matches_scan(rng):
    q, n = 3, 3
    sp = dft(SetIndicator.from_mask(q, n, rng.random(q**n) < 0.4))
    hs = [1, 2, 3]
    table = np.array([level_masses(sp, vector_of(v, q, n)) for v in range(q**n)])
    best, where = max_shifted_level_mass(sp, hs)
    np.testing.assert_allclose(best, table[:, hs].max(axis=0), rtol=1e-9)
    for h, w, b in zip(hs, where, best):
        assert table[w, h] == pytest.approx(b, rel=1e-9)


def test_ucs_bound_branches():
    p = UcsParams(C=4.0, s=2, q=2, n=8)
    assert ucs_bound(p, 0) == 1.0
    assert ucs_bound(p, 1) == pytest.approx((4 * math.sqrt(16)) ** 0.5)
    assert ucs_bound(p, 3) == pytest.approx((2 * 4 * math.e**2 * 8 / 3) ** 1.5)
    with pytest.raises(ValueError):
        ucs_bound(p, 9)


def test_noise_operator_and_hypercontractivity(rng):
    q, n = 3, 3
    f = rand_fn(rng, q, n)
    assert np.allclose(noise_operator(f, 1.0).values, f.values)
    np.testing.assert_allclose(noise_operator(f, 0.0).values, np.full(q**n, f.values.mean()), atol=1e-12)
    for p in (1.2, 1.5, 2.0):
        r = hypercontractive_rho(p, q)
        assert 0 < r <= 1
        lhs = lp_norm(noise_operator(f, r), 2, "expectation")
        assert lhs <= lp_norm(f, p, "expectation") * (1 + 1e-9)


def test_lp_norm_conventions():
    f = DenseFunction(2, 2, np.array([1, 1, 1, 1.0]))
    assert lp_norm(f, 2) == pytest.approx(2.0)
    assert lp_norm(f, 2, "expectation") == pytest.approx(1.0)
    with pytest.raises(ValueError):
        lp_norm(f, 2, "bogus")


def test_hypercontractivity_check_on_subcube():
    q, n, b = 2, 8, 2
    B = SetIndicator.from_members(q, n, [i for i in range(q**n) if i % 4 == 0])
    rep = hypercontractivity_check(B, b)
    assert rep.passed and rep.support_size == 64


def test_hypercontractivity_rejects_small_support():
    B = SetIndicator.from_members(2, 6, [0])
    with pytest.raises(ValueError):
        hypercontractivity_check(B, 1)


def test_json_roundtrip(rng):
    f = rand_fn(rng, 3, 2)
    g = DenseFunction.from_json(f.to_json())
    np.testing.assert_allclose(g.values, f.values)
    B = SetIndicator.from_members(2, 3, [1, 5])
    assert B.to_json() == {"q": 2, "n": 3, "members": [1, 5]}
    assert B.size == 2 and B.members.tolist() == [1, 5]


def test_values_are_read_only(rng):
    f = rand_fn(rng, 2, 2)
    with pytest.raises(ValueError):
        f.values[0] = 3


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        convolve(DenseFunction.constant(2, 2), DenseFunction.constant(3, 2))


@pytest.mark.parametrize("q,n", [(2, 4), (3, 3)])
def test_single_point_level_energy_is_exact(q, n):
    f = SetIndicator.from_members(q, n, [index_of([1] * n, q)])
    rep = hypercontractivity_check(f, n)
    for row in rep.rows:
        h = row["h"]
        expect = (q - 1) ** h * math.comb(n, h) if h <= n else 0
        assert row["lhs"] == pytest.approx(expect, rel=1e-9, abs=1e-12)


def test_high_regime_bound_exhaustive():
    from csp_stream_lab.zq_fourier import high_level_bound

    rng = np.random.default_rng(77)
    for n in range(2, 9):
        for _ in range(5):
            B = SetIndicator.from_mask(2, n, rng.random(2**n) < rng.uniform(0.05, 1))
            if B.size == 0:
                continue
            b = max(1, math.ceil(n - math.log2(B.size)))
            sp = dft(B)
            scale = 2**n / B.size
            for v in range(2**n):
                masses = level_masses(sp, vector_of(v, 2, n))
                for h in range(b + 1, n + 1):
                    assert masses[h] * scale <= high_level_bound(2, n, h) * (1 + 1e-9)

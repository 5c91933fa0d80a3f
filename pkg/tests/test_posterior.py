import itertools
import math
from fractions import Fraction

import numpy as np
import pytest

from csp_stream_lab.hypermatching import Hypermatching, folded_matrix, sample_hypermatching
from csp_stream_lab.posterior import (
    C_GRID,
    SetIndicator,
    TableMessages,
    aggregated_posterior,
    base_case_constant,
    check_bounded,
    check_reduced,
    estimate_p,
    estimate_pq,
    exact_bayes_posterior,
    exact_p,
    grid_constant,
    induction_step,
    p_bound,
    posterior_set,
    pq_bound,
    pq_distribution,
    pushforward_tvd,
    random_reduced_set,
    transcript,
    transcript_posterior,
    uniformity_test,
    verify_restricted_fourier,
)
from csp_stream_lab.rng import stream
from csp_stream_lab.zq_fourier import dft, vector_of

import oracles


def brute_posterior(M, B_r, q):
    A = folded_matrix(M, q)
    keep = set(B_r.members.tolist())
    return [i for i, x in enumerate(oracles.points(q, M.n)) if oracles.index((A @ np.array(x)) % q, q) in keep]


@pytest.mark.parametrize("q,k,n,m", [(2, 2, 5, 2), (3, 2, 4, 1), (2, 3, 6, 2)])
def test_posterior_set_by_enumeration(q, k, n, m):
    rng = stream(0, q, k, n)
    M = sample_hypermatching(n, k, m, rng)
    B_r = random_reduced_set(q, (k - 1) * m, 2, rng)
    B = posterior_set(M, B_r, q)
    assert B.members.tolist() == brute_posterior(M, B_r, q)
    assert B.size == B_r.size * q ** (n - (k - 1) * m)


def test_aggregated_is_intersection():
    rng = stream(1)
    Ms = [sample_hypermatching(6, 2, 2, rng) for _ in range(3)]
    Rs = [random_reduced_set(2, 2, 3, rng) for _ in range(3)]
    agg = aggregated_posterior(Ms, Rs, 2)
    sets = [set(posterior_set(M, R, 2).members.tolist()) for M, R in zip(Ms, Rs)]
    assert set(agg.members.tolist()) == set.intersection(*sets)


def test_restricted_fourier_exact():
    rng = stream(2)
    for q, k, n, m in [(2, 2, 6, 2), (3, 3, 7, 2), (2, 4, 9, 2), (3, 2, 5, 1)]:
        M = sample_hypermatching(n, k, m, rng)
        B_r = random_reduced_set(q, (k - 1) * m, max(1, q ** ((k - 1) * m) // 3), rng)
        rep = verify_restricted_fourier(M, B_r, q)
        assert rep.passed and rep.checked == q**n
        assert sum(rep.branch_counts.values()) == q**n


def test_restricted_fourier_against_naive_transform():
    q = 3
    M = Hypermatching(3, 2, [[2, 0]])
    B_r = SetIndicator.from_members(q, 1, [1])
    B = posterior_set(M, B_r, q)
    naive = oracles.naive_dft(B.values, q, 3)
    red = dft(B_r).coeffs
    for idx in range(27):
        u = vector_of(idx, q, 3)
        if u[1] != 0 or (u[0] + u[2]) % q:
            assert abs(naive[idx]) < 1e-12
        else:
            assert naive[idx] == pytest.approx(red[u[2]], abs=1e-12)


def test_check_bounded_min_constant_is_tight():
    rng = stream(3)
    B = SetIndicator.from_mask(2, 8, rng.random(256) < 0.3)
    rep = check_bounded(B, 1.0, 2)
    c = rep.min_constant()
    assert c > 0
    assert check_bounded(B, c * (1 + 1e-6), 2).passed
    assert not check_bounded(B, c * 0.99, 2).passed
    assert grid_constant(c) in C_GRID and grid_constant(c) >= c


def test_full_cube_is_bounded_with_zero_constant():
    rep = check_bounded(SetIndicator.full(3, 4), 1.0, 2)
    assert rep.passed and rep.min_constant() == 0


def test_reduced_implies_bounded():
    # the zero shift is among the shifts checked, so reducedness at C gives boundedness at C
    rng = stream(4)
    for t in range(10):
        M = sample_hypermatching(8, 2, 2, rng)
        B = posterior_set(M, random_reduced_set(2, 2, int(rng.integers(1, 5)), rng), 2)
        red = check_reduced(B, M, 64.0, 2, rng)
        assert red.vanishing_ok
        if red.passed:
            assert check_bounded(B, 64.0, 2).passed
        assert red.min_constant() >= check_bounded(B, 1.0, 2).min_constant() - 1e-12


def test_vanishing_detects_non_posterior_set():
    rng = stream(5)
    M = sample_hypermatching(6, 2, 1, rng)
    B = SetIndicator.from_mask(2, 6, rng.random(64) < 0.5)
    assert not check_reduced(B, M, 1e6, 2, rng).vanishing_ok


def test_base_case_constant():
    assert base_case_constant(2, 2) == pytest.approx(2 * 36 * math.e * 4 * 2**6)


def brute_p(h, k, m, n):
    hit = tot = 0
    for pos in itertools.permutations(range(n), h):
        tot += 1
        edges = [p // k for p in pos]
        if all(p < k * m for p in pos) and all(edges.count(e) >= 2 for e in edges):
            hit += 1
    return Fraction(hit, tot)


@pytest.mark.parametrize("h,k,m,n", [(0, 2, 1, 4), (2, 2, 2, 8), (3, 3, 2, 7), (4, 2, 2, 6), (4, 3, 2, 8), (3, 2, 3, 7)])
def test_exact_p_matches_enumeration(h, k, m, n):
    assert exact_p(h, k, m, n) == brute_p(h, k, m, n)


def test_exact_p_known_value():
    assert exact_p(2, 2, 2, 8) == Fraction(1, 14)


def test_estimate_p_in_ci(backend):
    est = estimate_p(2, 2, 2, 8, 40000, stream(6, backend))
    assert est.ci_low <= 1 / 14 <= est.ci_high
    assert est.bound == pytest.approx(p_bound(2, 2, 2, 8))


def test_pq_distribution_example():
    law = pq_distribution(6, [1, 1], 2, 1, 2)
    assert law == {(0, 2, 0): Fraction(1, 15), (1, 0, 1): Fraction(8, 15), (0, 0, 0): Fraction(2, 5)}


def test_estimate_pq_matches_exact():
    est = estimate_pq(6, 2, 1, 0, 1, 1 / 6, 2, 2, 30000, stream(7), vectors=[[1, 1]])
    assert est.ci_low <= 8 / 15 <= est.ci_high
    with pytest.raises(ValueError):
        estimate_pq(6, 2, 0, 0, 1, 1 / 6, 2, 2, 10, stream(7))


def test_pq_bound_conventions():
    assert pq_bound(10, 0, 0, 0, 0, 0.1, 2) == 1.0
    assert pq_bound(10, 1, 1, 0, 1, 0.1, 2) == pytest.approx(0.1**0.5 * 8 * math.e**2 * 10 * 0.1)


def test_pushforward_tvd_cases():
    M = Hypermatching(4, 2, [[0, 1], [2, 3]])
    assert pushforward_tvd(SetIndicator.full(2, 4), M) == 0
    point = posterior_set(M, SetIndicator.from_members(2, 2, [0]), 2)
    assert pushforward_tvd(point, M) == Fraction(3, 4)
    single = SetIndicator.from_members(2, 4, [5])
    assert pushforward_tvd(single, M) == Fraction(3, 4)


def test_uniformity_sampled_mode():
    rng = stream(8)
    B = SetIndicator.from_mask(2, 8, rng.random(256) < 0.5)
    rep = uniformity_test(B, 0.125, 2, 5, rng, trials_samples=2000)
    assert all(not r["exact"] for r in rep.rows)
    assert rep.fraction_within(0.2) == 1.0


def test_induction_step_volume():
    rng = stream(9)
    A = SetIndicator.from_mask(2, 6, rng.random(64) < 0.5)
    row = induction_step(A, SetIndicator.full(2, 6), 2)
    assert row.size_I == A.size and row.volume_ratio == pytest.approx(1.0) and row.volume_ok


def test_transcript_posterior_equals_bayes():
    rng = stream(10)
    for t in range(8):
        q, n = (2, 7) if t % 2 else (3, 5)
        Ms = [sample_hypermatching(n, 2, 2, rng) for _ in range(2)]
        msgs = TableMessages.random(q, [2, 2], 1, rng)
        x = rng.integers(0, q, size=n)
        obs = transcript(msgs, Ms, x, q)
        B = transcript_posterior(msgs, Ms, obs, q)
        bayes = exact_bayes_posterior(msgs, Ms, obs, q, n)
        assert oracles.index(x, q) in bayes
        assert bayes == {int(i): Fraction(1, B.size) for i in B.members}

import itertools
from fractions import Fraction

import numpy as np
import pytest

from csp_stream_lab.csp_family import (
    CspFamily,
    CspFunction,
    RhoConfig,
    builtin_family,
    expectation,
    family_width,
    product_weights,
    rho,
    width,
)


def brute_width(f):
    best = Fraction(-1)
    for b in itertools.product(range(f.q), repeat=f.k):
        hits = sum(f([(bi + a) % f.q for bi in b]) for a in range(f.q))
        best = max(best, Fraction(hits, f.q))
    return best


def brute_rho_q2(F, inner_steps=4000):
    """min over mixtures of max over Bernoulli(p)^k, with p on a dense grid (one LP)."""
    from scipy.optimize import linprog

    ps = np.linspace(0, 1, inner_steps + 1)
    W = product_weights(np.stack([1 - ps, ps], axis=1), F.k) @ F.tables.T.astype(float)
    nf = len(F)
    c = np.zeros(nf + 1)
    c[-1] = 1
    A = np.hstack([W, -np.ones((len(W), 1))])
    res = linprog(c, A_ub=A, b_ub=np.zeros(len(W)), A_eq=[[1.0] * nf + [0.0]], b_eq=[1.0], bounds=[(0, None)] * nf + [(None, None)])
    return res.fun


def test_table_conventions():
    f = CspFunction.from_predicate(3, 2, lambda a: a[0] < a[1])
    assert f((0, 1)) == 1 and f((1, 0)) == 0
    assert f.table[1 + 3 * 0] == 0 and f.table[0 + 3 * 1] == 1
    assert f.ones == 3


def test_family_validation():
    f = CspFunction.from_predicate(2, 2, lambda a: a[0] != a[1])
    with pytest.raises(ValueError):
        CspFamily(2, 2, (f, f))
    with pytest.raises(ValueError):
        CspFamily(2, 2, ())
    with pytest.raises(ValueError):
        CspFunction(2, 2, [0, 1, 2, 0])


def test_family_json_roundtrip():
    F = builtin_family("ug-shift", 3)
    G = CspFamily.from_json(F.to_json())
    assert np.array_equal(F.tables, G.tables)
    assert [f.name for f in G.functions] == ["shift0", "shift1", "shift2"]


@pytest.mark.parametrize(
    "name,q,k,params,size",
    [("qcol", 3, 2, None, 1), ("ug-shift", 4, 2, None, 4), ("ug", 3, 2, None, 6), ("keq", 3, 3, None, 9), ("less-than", 4, 2, None, 1)],
)
def test_builtin_sizes(name, q, k, params, size):
    assert len(builtin_family(name, q, k, params)) == size


def test_lin_family_contents():
    # Max-2Lin over Z_2 with r=1: every affine equation a.x = b with a != 0 plus the constant-true table
    F = builtin_family("lin", 2, 2, {"r": 1})
    tables = {f.table_string() for f in F.functions}
    assert "1111" in tables
    assert "1001" in tables and "0110" in tables
    for f in F.functions:
        assert f.ones in (2, 4)


def test_builtin_rejects_bad_params():
    with pytest.raises(ValueError):
        builtin_family("lin", 4, 2, {"r": 1})
    with pytest.raises(ValueError):
        builtin_family("lin", 3, 2, {"r": 2})
    with pytest.raises(ValueError):
        builtin_family("qcol", 3, 3)
    with pytest.raises(ValueError):
        builtin_family("nope", 3, 2)


@pytest.mark.parametrize(
    "name,q,k,params",
    [("qcol", 3, 2, None), ("less-than", 5, 2, None), ("ug", 4, 2, None), ("keq", 3, 3, None), ("lin", 3, 3, {"r": 2}), ("lin", 2, 3, {"r": 1, "shift_invariant": True})],
)
def test_width_matches_brute_force(name, q, k, params):
    F = builtin_family(name, q, k, params)
    for f in F.functions:
        assert width(f)[0] == brute_width(f)
    assert family_width(F) == min(brute_width(f) for f in F.functions)


def test_width_witness_tie_break():
    f = CspFunction.from_predicate(2, 2, lambda a: a[0] != a[1])
    w, b = width(f)
    assert w == 1 and b == (0, 1)
    f = CspFunction.from_predicate(3, 2, lambda a: a[0] < a[1])
    assert width(f) == (Fraction(2, 3), (0, 1))


@pytest.mark.parametrize("entry", [("qcol", 2, 2), ("less-than", 2, 2), ("ug-shift", 2, 2), ("keq", 2, 2), ("keq", 2, 3)])
def test_rho_against_grid_oracle(entry):
    F = builtin_family(*entry)
    cert = rho(F)
    oracle = brute_rho_q2(F)
    assert cert.converged
    assert cert.value == pytest.approx(oracle, abs=1e-5)


def test_rho_certificate_is_consistent():
    F = builtin_family("ug-shift", 4)
    cert = rho(F, RhoConfig(seed=3))
    assert cert.lower_bound <= cert.value + 1e-12
    assert cert.outer.sum() == pytest.approx(1) and np.all(cert.outer >= 0)
    assert expectation(F, cert.outer, cert.inner_witness) == pytest.approx(cert.value, abs=1e-9)
    # no product distribution beats the certified value against the certified mixture
    rng = np.random.default_rng(0)
    D = rng.dirichlet(np.ones(4), size=2000)
    vals = product_weights(D, 2) @ (cert.outer @ F.tables)
    assert vals.max() <= cert.value + 1e-6


def test_rho_rejects_empty_function():
    F = CspFamily(2, 2, (CspFunction(2, 2, [0, 0, 0, 0]),))
    with pytest.raises(ValueError):
        rho(F)

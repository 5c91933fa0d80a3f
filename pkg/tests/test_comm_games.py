from collections import Counter, defaultdict
from fractions import Fraction

import numpy as np
import pytest
from scipy.stats import chisquare

from csp_stream_lab.comm_games import (
    BudgetExceeded,
    GameInstance,
    GameParams,
    PlayerInput,
    Protocol,
    consistency_protocol,
    constant_protocol,
    estimate_advantage,
    exact_folded_then_unfolded_law,
    exact_law,
    fold_labels,
    fold_reduction,
    label_blind_protocol,
    run_protocol,
    sample_instance,
)
from csp_stream_lab.hypermatching import Hypermatching, folded_matrix
from csp_stream_lab.rng import stream


def test_params_validation():
    with pytest.raises(ValueError):
        GameParams(2, 2, 8, 1, 0.6)
    with pytest.raises(ValueError):
        GameParams(1, 2, 8, 1, 0.2)
    assert GameParams(2, 2, 8, 1, 0.25).m == 2


def test_yes_labels_are_shifted_restrictions():
    p = GameParams(3, 3, 9, 3, 0.3)
    inst = sample_instance(p, "irmd", "yes", stream(0, "t"))
    for pl in inst.players:
        z = pl.labels.reshape(-1, 3)
        diff = (z - inst.x_star[pl.matching.edges]) % 3
        assert np.all(diff == diff[:, :1])


def test_irmd_parity_binary():
    # q=2, k=2 YES: the label parity of every edge equals the parity of x* on it
    p = GameParams(2, 2, 10, 4, 0.3)
    for t in range(20):
        inst = sample_instance(p, "irmd", "yes", stream(1, t))
        for pl in inst.players:
            z = pl.labels.reshape(-1, 2)
            assert np.array_equal(z.sum(axis=1) % 2, inst.x_star[pl.matching.edges].sum(axis=1) % 2)


def test_ifrmd_yes_labels():
    p = GameParams(3, 2, 6, 2, 0.3)
    inst = sample_instance(p, "ifrmd", "yes", stream(2, "t"))
    for pl in inst.players:
        assert np.array_equal(pl.labels, folded_matrix(pl.matching, 3) @ inst.x_star % 3)


@pytest.mark.parametrize("game", ["irmd", "ifrmd"])
def test_no_labels_independent_of_hidden_vector(game):
    # joint law of (x*[first vertex], first label) should be uniform on Z_3^2
    p = GameParams(3, 2, 4, 1, 0.25)
    counts = Counter()
    for t in range(4500):
        inst = sample_instance(p, game, "no", stream(3, game, t))
        pl = inst.players[0]
        counts[(int(inst.x_star[pl.matching.edges[0, 0]]), int(pl.labels[0]))] += 1
    assert len(counts) == 9
    assert chisquare(list(counts.values())).pvalue > 1e-3


def test_yes_labels_depend_on_hidden_vector():
    p = GameParams(2, 2, 4, 1, 0.25)
    agree = 0
    for t in range(400):
        inst = sample_instance(p, "ifrmd", "yes", stream(4, t))
        pl = inst.players[0]
        u, c = pl.matching.edges[0]
        agree += int(pl.labels[0] == (inst.x_star[u] - inst.x_star[c]) % 2)
    assert agree == 400


def test_fold_labels_by_hand():
    # q=3, k=3, one edge, w=(1,2), a=2 -> (0, 1, 2)
    assert fold_labels(np.array([1, 2]), np.array([2]), 3, 3).tolist() == [0, 1, 2]


def test_fold_reduction_yes_is_consistent():
    p = GameParams(3, 3, 9, 2, 0.3)
    inst = sample_instance(p, "ifrmd", "yes", stream(5, "t"))
    out = fold_reduction(inst, stream(5, "fold"))
    assert out.game == "irmd" and out.case == "yes"
    for pl in out.players:
        z = pl.labels.reshape(-1, 3)
        diff = (z - inst.x_star[pl.matching.edges]) % 3
        assert np.all(diff == diff[:, :1])


@pytest.mark.parametrize("q,k,n", [(2, 2, 4), (3, 2, 4), (2, 3, 6)])
@pytest.mark.parametrize("case", ["yes", "no"])
def test_fold_laws_equal(q, k, n, case):
    p = GameParams(q, k, n, 1, 1 / n + 1e-12)
    direct = exact_law(p, case)
    folded = exact_folded_then_unfolded_law(p, case)
    assert sum(direct.values()) == 1
    assert direct == folded


def test_fold_law_rejects_large():
    with pytest.raises(ValueError):
        exact_law(GameParams(3, 2, 8, 3, 0.25), "yes")


def test_json_roundtrip():
    p = GameParams(3, 2, 6, 2, 0.3)
    for game in ("irmd", "ifrmd"):
        inst = sample_instance(p, game, "no", stream(6, game))
        back = GameInstance.from_json(inst.to_json())
        assert back.to_json() == inst.to_json()


def test_protocol_rules():
    p = GameParams(2, 2, 4, 2, 0.25)
    inst = sample_instance(p, "irmd", "yes", stream(7))
    chatty = Protocol((lambda v: "0101", lambda v: "1"), 2)
    with pytest.raises(BudgetExceeded):
        run_protocol(chatty, inst)
    bad = Protocol((lambda v: "x", lambda v: "1"), 2)
    with pytest.raises(ValueError):
        run_protocol(bad, inst)
    with pytest.raises(ValueError):
        run_protocol(constant_protocol(3), inst)


def test_players_see_only_their_past():
    p = GameParams(2, 2, 6, 3, 0.3)
    inst = sample_instance(p, "irmd", "no", stream(8))
    seen = []

    def spy(view):
        seen.append((view.t, len(view.matchings), len(view.messages)))
        return "1"

    run_protocol(Protocol((spy, spy, spy), 1), inst)
    assert seen == [(0, 1, 0), (1, 2, 1), (2, 3, 2)]


def test_constant_and_blind_have_no_advantage():
    p = GameParams(2, 2, 8, 2, 0.25)
    est = estimate_advantage(constant_protocol(2), p, "irmd", 200, stream(9))
    assert est.advantage == 0 and est.yes_accept_rate == 1
    est = estimate_advantage(label_blind_protocol(2), p, "irmd", 2000, stream(10))
    assert est.advantage <= 3 * est.ci_halfwidth + 0.01


def exact_acceptance(pr, p, game, case):
    """Acceptance probability by enumerating the exact law of the instance."""
    law = exact_law(p, case)
    total = Fraction(0)
    for (x, key), prob in law.items():
        players = []
        for E, z in key:
            M = Hypermatching(p.n, p.k, np.array(E).reshape(p.m, p.k))
            players.append(PlayerInput(M, np.array(z, dtype=np.int64)))
        inst = GameInstance(p, game, case, np.array(x), tuple(players))
        total += prob * run_protocol(pr, inst)
    return total


def observation_tvd(p):
    """Best possible advantage: TVD between YES and NO laws of everything the players see."""
    marg = {}
    for case in ("yes", "no"):
        d = defaultdict(Fraction)
        for (x, key), prob in exact_law(p, case).items():
            d[key] += prob
        marg[case] = d
    keys = set(marg["yes"]) | set(marg["no"])
    return sum(abs(marg["yes"].get(k, 0) - marg["no"].get(k, 0)) for k in keys) / 2


def test_consistency_protocol_exact_advantage():
    p = GameParams(2, 2, 4, 2, 0.25)
    pr = consistency_protocol(p)
    yes = exact_acceptance(pr, p, "irmd", "yes")
    no = exact_acceptance(pr, p, "irmd", "no")
    assert yes == 1
    adv = yes - no
    assert 0 < adv <= observation_tvd(p)
    est = estimate_advantage(pr, p, "irmd", 3000, stream(11))
    assert abs(est.advantage - float(adv)) <= 3 * est.ci_halfwidth

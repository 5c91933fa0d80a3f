"""The two multi-player matching games, the folding reduction, and a protocol harness.

In the plain game (``"irmd"``) player t holds a random hypermatching and the
labels ``z_t = A_t x* + b_t`` where each edge's mask ``b_{t,i}`` is drawn
from the YES or NO mask distribution. In the folded game (``"ifrmd"``) the
player holds ``w_t = A_{t,c} x*`` (YES) or a uniform vector (NO).
"""

from __future__ import annotations

import itertools
import math
from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .hypermatching import (
    Hypermatching,
    folded_matrix,
    incidence_matrix,
    rank_mod_p,
    sample_hypermatching,
)

GAMES = ("irmd", "ifrmd")
CASES = ("yes", "no")


@dataclass(frozen=True)
class GameParams:
    q: int
    k: int
    n: int
    T: int
    alpha: float

    def __post_init__(self):
        if self.q < 2 or self.k < 2:
            raise ValueError("need q >= 2 and k >= 2")
        if self.T < 1:
            raise ValueError("need at least one player")
        if not 0 < self.alpha < 1 / self.k:
            raise ValueError("alpha must lie in (0, 1/k)")
        if self.k * self.m > self.n:
            raise ValueError("k*m exceeds n")

    @property
    def m(self) -> int:
        return int(math.floor(self.alpha * self.n + 1e-9))

    def to_json(self) -> dict:
        return {"q": self.q, "k": self.k, "n": self.n, "T": self.T, "alpha": self.alpha}


@dataclass(frozen=True, eq=False)
class MaskDistribution:
    """Finite distribution over per-edge masks in Z_q^k."""

    support: np.ndarray
    probs: np.ndarray

    @staticmethod
    def diagonal(q: int, k: int) -> "MaskDistribution":
        return MaskDistribution(np.repeat(np.arange(q)[:, None], k, axis=1), np.full(q, 1.0 / q))

    @staticmethod
    def uniform(q: int, k: int) -> "MaskDistribution":
        pts = np.array(list(itertools.product(range(q), repeat=k)), dtype=np.int64)[:, ::-1]
        return MaskDistribution(pts, np.full(len(pts), 1.0 / len(pts)))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        idx = rng.choice(len(self.probs), size=size, p=self.probs)
        return self.support[idx]

    def exact(self):
        """Support points with weights recovered as exact fractions."""
        return [(tuple(int(v) for v in s), Fraction(p).limit_denominator(10**9)) for s, p in zip(self.support, self.probs)]


@dataclass(frozen=True, eq=False)
class PlayerInput:
    matching: Hypermatching
    labels: np.ndarray


@dataclass(frozen=True, eq=False)
class GameInstance:
    params: GameParams
    game: str
    case: str
    x_star: np.ndarray
    players: tuple

    def to_json(self) -> dict:
        out = {
            "game": self.game,
            "case": self.case,
            **self.params.to_json(),
            "x_star": [int(v) for v in self.x_star],
            "players": [],
        }
        for pl in self.players:
            rec = {"matching": [[int(v) + 1 for v in e] for e in pl.matching.edges]}
            if self.game == "ifrmd":
                rec["centers"] = [int(c) + 1 for c in pl.matching.centers]
            rec["labels"] = [int(v) for v in pl.labels]
            out["players"].append(rec)
        return out

    @staticmethod
    def from_json(obj: dict) -> "GameInstance":
        p = GameParams(int(obj["q"]), int(obj["k"]), int(obj["n"]), int(obj["T"]), float(obj["alpha"]))
        players = []
        for rec in obj["players"]:
            M = Hypermatching(p.n, p.k, np.array(rec["matching"], dtype=np.int64).reshape(-1, p.k) - 1)
            if rec.get("centers") is not None:
                M = M.with_centers([c - 1 for c in rec["centers"]])
            players.append(PlayerInput(M, np.array(rec["labels"], dtype=np.int64)))
        return GameInstance(p, obj["game"], obj["case"], np.array(obj["x_star"], dtype=np.int64), tuple(players))


IrmdInstance = GameInstance
IfrmdInstance = GameInstance


def _check(game: str, case: str) -> None:
    if game not in GAMES:
        raise ValueError(f"game must be one of {GAMES}")
    if case not in CASES:
        raise ValueError(f"case must be one of {CASES}")


def sample_instance(
    p: GameParams,
    game: str,
    case: str,
    rng: np.random.Generator,
    yes_masks: MaskDistribution | None = None,
    no_masks: MaskDistribution | None = None,
) -> GameInstance:
    _check(game, case)
    q, k, m = p.q, p.k, p.m
    x = rng.integers(0, q, size=p.n)
    if game == "irmd":
        masks = (yes_masks or MaskDistribution.diagonal(q, k)) if case == "yes" else (no_masks or MaskDistribution.uniform(q, k))
    players = []
    for _ in range(p.T):
        M = sample_hypermatching(p.n, k, m, rng)
        if game == "irmd":
            b = masks.sample(rng, m).reshape(-1)
            z = (incidence_matrix(M) @ x + b) % q
        elif case == "yes":
            z = (folded_matrix(M, q) @ x) % q
        else:
            z = rng.integers(0, q, size=(k - 1) * m)
        players.append(PlayerInput(M, z.astype(np.int64)))
    return GameInstance(p, game, case, x.astype(np.int64), tuple(players))


def fold_labels(w: np.ndarray, a: np.ndarray, k: int, q: int) -> np.ndarray:
    """Unfold one player's folded labels with per-edge offsets ``a``.

    For edge i the first k-1 labels are ``w`` shifted by ``a_i``, and the
    center's label is ``a_i`` itself.
    """
    a = np.asarray(a, dtype=np.int64)
    m = a.size
    z = np.empty((m, k), dtype=np.int64)
    z[:, : k - 1] = np.asarray(w, dtype=np.int64).reshape(m, k - 1) + a[:, None]
    z[:, k - 1] = a
    return (z % q).reshape(-1)


def fold_reduction(inst: GameInstance, rng: np.random.Generator) -> GameInstance:
    """Turn a folded-game instance into a plain-game instance of the same case."""
    if inst.game != "ifrmd":
        raise ValueError("fold_reduction expects a folded instance")
    q, k, m = inst.params.q, inst.params.k, inst.params.m
    players = []
    for pl in inst.players:
        a = rng.integers(0, q, size=m)
        players.append(PlayerInput(pl.matching, fold_labels(pl.labels, a, k, q)))
    return GameInstance(inst.params, "irmd", inst.case, inst.x_star, tuple(players))


# ---------------------------------------------------------- exact laws


def _ordered_matchings(n: int, k: int, m: int):
    for seq in itertools.permutations(range(n), k * m):
        yield tuple(tuple(seq[i * k : (i + 1) * k]) for i in range(m))


def _combine(per_player, T):
    law = defaultdict(Fraction)
    for combo in itertools.product(per_player, repeat=T):
        key = tuple(c[0] for c in combo)
        pr = Fraction(1)
        for c in combo:
            pr *= c[1]
        law[key] += pr
    return law


def _law(p: GameParams, per_player_outcomes) -> dict:
    """Joint law of ``(x*, per-player (ordered edges, labels))`` as exact fractions."""
    law = defaultdict(Fraction)
    px = Fraction(1, p.q**p.n)
    for x in itertools.product(range(p.q), repeat=p.n):
        x_arr = np.array(x, dtype=np.int64)
        outcomes = per_player_outcomes(x_arr)
        for key, pr in _combine(outcomes, p.T).items():
            law[(x, key)] += px * pr
    return dict(law)


def exact_law(p: GameParams, case: str, masks: MaskDistribution | None = None, limit: int = 2_000_000) -> dict:
    """Exact law of a plain-game instance, straight from ``z = A x* + b``."""
    _check("irmd", case)
    q, k, m = p.q, p.k, p.m
    masks = masks or (MaskDistribution.diagonal(q, k) if case == "yes" else MaskDistribution.uniform(q, k))
    mask_law = masks.exact()
    edges = list(_ordered_matchings(p.n, k, m))
    if q**p.n * (len(edges) * len(mask_law) ** m) ** p.T > limit:
        raise ValueError("enumeration too large")
    pe = Fraction(1, len(edges))

    def outcomes(x):
        out = defaultdict(Fraction)
        for E in edges:
            for combo in itertools.product(mask_law, repeat=m):
                z, pr = [], pe
                for e, (b, pb) in zip(E, combo):
                    z.extend((int(x[v]) + bv) % q for v, bv in zip(e, b))
                    pr *= pb
                out[(E, tuple(z))] += pr
        return list(out.items())

    return _law(p, outcomes)


def exact_folded_then_unfolded_law(p: GameParams, case: str, limit: int = 2_000_000) -> dict:
    """Exact law of ``fold_reduction`` applied to a folded-game instance."""
    _check("ifrmd", case)
    q, k, m = p.q, p.k, p.m
    r = (k - 1) * m
    edges = list(_ordered_matchings(p.n, k, m))
    if q**p.n * (len(edges) * q ** (r + m)) ** p.T > limit:
        raise ValueError("enumeration too large")
    pe = Fraction(1, len(edges))
    offsets = list(itertools.product(range(q), repeat=m))
    pa = Fraction(1, len(offsets))

    def outcomes(x):
        out = defaultdict(Fraction)
        for E in edges:
            M = Hypermatching(p.n, k, np.array(E, dtype=np.int64).reshape(m, k))
            if case == "yes":
                ws = [((folded_matrix(M, q) @ x) % q, Fraction(1))]
            else:
                ws = [(np.array(w), Fraction(1, q**r)) for w in itertools.product(range(q), repeat=r)]
            for w, pw in ws:
                for a in offsets:
                    z = fold_labels(w, np.array(a), k, q)
                    out[(E, tuple(int(v) for v in z))] += pe * pw * pa
        return list(out.items())

    return _law(p, outcomes)


# ------------------------------------------------------------- protocols


@dataclass(frozen=True, eq=False)
class PlayerView:
    """What player t (0-based) sees: every matching up to its own, prior messages, its labels."""

    t: int
    q: int
    game: str
    matchings: tuple
    messages: tuple
    labels: np.ndarray


@dataclass(frozen=True)
class Protocol:
    players: tuple
    budget: int
    name: str = "protocol"


class BudgetExceeded(ValueError):
    pass


def run_protocol(pr: Protocol, inst: GameInstance) -> int:
    T = inst.params.T
    if len(pr.players) != T:
        raise ValueError(f"protocol has {len(pr.players)} players, game has {T}")
    msgs: list[str] = []
    matchings: list[Hypermatching] = []
    for t, (fn, pl) in enumerate(zip(pr.players, inst.players)):
        matchings.append(pl.matching)
        view = PlayerView(t, inst.params.q, inst.game, tuple(matchings), tuple(msgs), pl.labels)
        msg = fn(view)
        if not isinstance(msg, str) or set(msg) - {"0", "1"}:
            raise ValueError(f"player {t} produced a non-bit-string message")
        if len(msg) > pr.budget:
            raise BudgetExceeded(f"player {t} sent {len(msg)} bits, budget {pr.budget}")
        msgs.append(msg)
    if len(msgs[-1]) != 1:
        raise ValueError("the last player must output exactly one bit")
    return int(msgs[-1])


@dataclass(frozen=True)
class AdvantageEstimate:
    yes_accept_rate: float
    no_accept_rate: float
    advantage: float
    trials: int
    ci_halfwidth: float


def estimate_advantage(pr: Protocol, p: GameParams, game: str, trials: int, rng: np.random.Generator) -> AdvantageEstimate:
    if trials < 1:
        raise ValueError("need at least one trial")
    yes = no = 0
    for child in rng.spawn(trials):
        ry, rn = child.spawn(2)
        yes += run_protocol(pr, sample_instance(p, game, "yes", ry))
        no += run_protocol(pr, sample_instance(p, game, "no", rn))
    py, pn = yes / trials, no / trials
    half = 1.959963984540054 * math.sqrt((py * (1 - py) + pn * (1 - pn)) / trials)
    return AdvantageEstimate(py, pn, abs(py - pn), trials, half)


def constant_protocol(T: int, bit: int = 1) -> Protocol:
    players = tuple(lambda v: "" for _ in range(T - 1)) + (lambda v, b=bit: str(b),)
    return Protocol(players, 1, f"constant-{bit}")


def label_blind_protocol(T: int) -> Protocol:
    """Outputs a bit computed from the matchings alone."""

    def last(view: PlayerView) -> str:
        return str(int(view.matchings[0].edges.ravel()[:1].sum()) % 2)

    return Protocol(tuple(lambda v: "" for _ in range(T - 1)) + (last,), 1, "label-blind")


def _bits_per_symbol(q: int) -> int:
    return max(1, (q - 1).bit_length())


def _encode(vals: Sequence[int], q: int) -> str:
    w = _bits_per_symbol(q)
    return "".join(format(int(v), f"0{w}b") for v in vals)


def _decode(bits: str, q: int) -> list[int]:
    w = _bits_per_symbol(q)
    return [int(bits[i : i + w], 2) for i in range(0, len(bits), w)]


def folded_view(M: Hypermatching, labels: np.ndarray, game: str, q: int) -> np.ndarray:
    """Folded labels of a player: differences to the center label (plain game) or as given."""
    if game == "ifrmd":
        return np.asarray(labels, dtype=np.int64)
    z = np.asarray(labels, dtype=np.int64).reshape(M.m, M.k)
    return ((z[:, :-1] - z[:, -1:]) % q).reshape(-1)


def consistency_protocol(p: GameParams) -> Protocol:
    """Forward every label; the last player accepts iff some x explains all folded labels.

    The budget is unbounded in spirit (it is set to the total label length).
    Solvability is decided by rank comparison, so q must be prime.
    """
    q, T = p.q, p.T
    per = (p.k - 1) * p.m * _bits_per_symbol(q)

    def forward(view: PlayerView) -> str:
        prev = view.messages[-1] if view.messages else ""
        M = view.matchings[-1]
        return prev + _encode(folded_view(M, view.labels, view.game, q), q)

    def decide(view: PlayerView) -> str:
        bits = forward(view)
        w = np.array(_decode(bits, q), dtype=np.int64) if bits else np.zeros(0, dtype=np.int64)
        A = np.concatenate([folded_matrix(M, q) for M in view.matchings]) if view.matchings else np.zeros((0, p.n))
        aug = np.hstack([A, w[:, None]])
        return "1" if rank_mod_p(A, q) == rank_mod_p(aug, q) else "0"

    players = tuple(forward for _ in range(T - 1)) + (decide,)
    return Protocol(players, max(per * T, 1), "consistency")

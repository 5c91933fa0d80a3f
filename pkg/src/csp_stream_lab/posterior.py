"""Posterior sets of the hybrid argument and their spectral checks.

A *restricted* set is ``B = {x : A_c x in B_r}`` for a hypermatching with
centers and a reduced set ``B_r`` inside Z_q^{(k-1)m}.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy.stats import binomtest

from . import kernels
from .hypermatching import Hypermatching, folded_matrix, sample_hypermatching
from .zq_fourier import (
    ABS_TOL,
    REL_TOL,
    SetIndicator,
    UcsParams,
    dft,
    level_masses,
    max_shifted_level_mass,
    ucs_bound,
    vector_of,
)

ReducedSet = SetIndicator
EXHAUSTIVE_SHIFT_LIMIT = 2**20
C_GRID = tuple(2.0**j for j in range(21))


def base_case_constant(k: int, q: int, zeta: float = 6.0) -> float:
    return 2 * zeta**2 * math.e * k**2 * q ** (3 * k)


# ------------------------------------------------------------ construction


def posterior_set(M: Hypermatching, B_r: SetIndicator, q: int, centers: Sequence[int] | None = None) -> SetIndicator:
    """``{x in Z_q^n : A_c x in B_r}`` by evaluating A_c at every x."""
    if centers is not None:
        M = M.with_centers(centers)
    r = (M.k - 1) * M.m
    if (B_r.q, B_r.n) != (q, r):
        raise ValueError(f"reduced set must live in Z_{q}^{r}")
    images = kernels.linear_images(folded_matrix(M, q), q, M.n)
    return SetIndicator.from_mask(q, M.n, B_r.mask[images])


def aggregated_posterior(matchings: Sequence[Hypermatching], reduced: Sequence[SetIndicator], q: int) -> SetIndicator:
    """Intersection of the restricted sets of several players."""
    out = None
    for M, B_r in zip(matchings, reduced, strict=True):
        B = posterior_set(M, B_r, q)
        out = B if out is None else out.intersect(B)
    return out


def random_reduced_set(q: int, dim: int, size: int, rng: np.random.Generator) -> SetIndicator:
    total = q**dim
    if not 1 <= size <= total:
        raise ValueError("size out of range")
    return SetIndicator.from_members(q, dim, rng.choice(total, size=size, replace=False))


# -------------------------------------------------- restricted Fourier formula


@dataclass
class RestrictedFourierReport:
    checked: int
    violations: int
    max_error: float
    branch_counts: dict

    @property
    def passed(self) -> bool:
        return self.violations == 0


def verify_restricted_fourier(
    M: Hypermatching, B_r: SetIndicator, q: int, centers: Sequence[int] | None = None, budget: int = 2**20
) -> RestrictedFourierReport:
    """Compare every coefficient of 1_B with the three-branch closed form.

    A coefficient vanishes if u is nonzero off the matching or if some edge
    has ``<u, e_i> != 0``; otherwise it equals the reduced coefficient at
    ``A~_c u`` (u restricted to the non-center entries of each edge).
    """
    if centers is not None:
        M = M.with_centers(centers)
    n, k = M.n, M.k
    if q**n > budget:
        raise ValueError("q^n exceeds the enumeration budget")
    B = posterior_set(M, B_r, q)
    got = dft(B).coeffs
    reduced = dft(B_r).coeffs
    r = (k - 1) * M.m
    off = np.setdiff1d(np.arange(n), M.vertices)
    rpow = q ** np.arange(r, dtype=np.int64)
    counts = Counter()
    violations, worst = 0, 0.0
    size = q**n
    for lo in range(0, size, 1 << 16):
        idx = np.arange(lo, min(size, lo + (1 << 16)))
        D = kernels.digits_of(idx, q, n)
        br1 = (D[:, off] != 0).any(axis=1) if off.size else np.zeros(len(idx), bool)
        sums = D[:, M.edges].sum(axis=2) % q if M.m else np.zeros((len(idx), 0))
        br2 = ~br1 & (sums != 0).any(axis=1)
        br3 = ~(br1 | br2)
        red = D[:, M.edges[:, :-1]].reshape(len(idx), -1) @ rpow if r else np.zeros(len(idx), np.int64)
        expect = np.where(br3, reduced[red], 0)
        err = np.abs(got[idx] - expect)
        tol = REL_TOL * np.maximum(np.abs(expect), 1.0)
        violations += int((err > tol).sum())
        worst = max(worst, float(err.max(initial=0.0)))
        counts["off_matching"] += int(br1.sum())
        counts["odd_edge"] += int(br2.sum())
        counts["projected"] += int(br3.sum())
    return RestrictedFourierReport(size, violations, worst, dict(counts))


# --------------------------------------------------------- boundedness


@dataclass
class BoundednessReport:
    C: float
    s: int
    size: int
    rows: list = field(default_factory=list)
    shifts: str = "zero"
    shift_count: int = 1
    off_matching_max: float = 0.0
    odd_edge_max: float = 0.0
    vanishing_ok: bool = True

    @property
    def worst_ratio(self) -> float:
        return max((r["ratio"] for r in self.rows), default=0.0)

    @property
    def passed(self) -> bool:
        return self.vanishing_ok and all(r["ratio"] <= 1 + REL_TOL for r in self.rows)

    def min_constant(self) -> float:
        """Smallest C for which every level row would pass (0 if all masses vanish)."""
        need = 0.0
        for r in self.rows:
            h, scaled = r["h"], r["scaled_mass"]
            if scaled > ABS_TOL:
                need = max(need, h * scaled ** (2.0 / h) / math.sqrt(self.s * r["n"]))
        return need


def _level_rows(scaled: Sequence[float], C: float, s: int, q: int, n: int, where=None) -> list:
    p = UcsParams(C, s, q, n)
    rows = []
    for h in range(1, s + 1):
        bound = ucs_bound(p, h)
        rows.append(
            {
                "h": h,
                "n": n,
                "scaled_mass": float(scaled[h - 1]),
                "bound": bound,
                "ratio": float(scaled[h - 1]) / bound,
                "shift_index": 0 if where is None else int(where[h - 1]),
            }
        )
    return rows


def check_bounded(B: SetIndicator, C: float, s: int) -> BoundednessReport:
    """Level-h l1 spectral mass of 1_B, scaled by q^n/|B|, against U_{C,s}(h) for h in 1..s."""
    if B.size == 0:
        raise ValueError("empty set")
    if not 1 <= s <= B.n:
        raise ValueError("need 1 <= s <= n")
    sp = dft(B)
    masses = level_masses(sp, None, power=1)
    scale = B.domain_size / B.size
    scaled = [scale * masses[h] for h in range(1, s + 1)]
    return BoundednessReport(C, s, B.size, _level_rows(scaled, C, s, B.q, B.n))


def _shift_vectors(M: Hypermatching, q: int, n: int, rng: np.random.Generator, count: int) -> np.ndarray:
    shifts = [np.zeros(n, dtype=np.int64)]
    for e in M.edges:
        for a in range(1, q):
            v = np.zeros(n, dtype=np.int64)
            v[e] = a
            shifts.append(v)
    if M.m:
        v = np.zeros(n, dtype=np.int64)
        v[M.vertices] = 1
        shifts.append(v)
    shifts.extend(rng.integers(0, q, size=(count, n)))
    return np.array(shifts)


def check_reduced(
    B: SetIndicator,
    M: Hypermatching,
    C: float,
    s: int,
    rng: np.random.Generator | None = None,
    sample_shifts: int = 256,
    exhaustive_limit: int = EXHAUSTIVE_SHIFT_LIMIT,
) -> BoundednessReport:
    """Vanishing conditions plus the level bound at every shift v.

    All of Z_q^n is scanned when ``q^n <= exhaustive_limit``; otherwise the
    zero shift, per-edge shifts and ``sample_shifts`` random shifts are used.
    """
    if B.size == 0:
        raise ValueError("empty set")
    if not 1 <= s <= B.n:
        raise ValueError("need 1 <= s <= n")
    q, n = B.q, B.n
    sp = dft(B)
    scale = B.domain_size / B.size
    mags = np.abs(sp.coeffs)

    off = np.setdiff1d(np.arange(n), M.vertices)
    size = q**n
    off_max = odd_max = 0.0
    for lo in range(0, size, 1 << 16):
        idx = np.arange(lo, min(size, lo + (1 << 16)))
        D = kernels.digits_of(idx, q, n)
        off_mask = (D[:, off] != 0).any(axis=1) if off.size else np.zeros(len(idx), bool)
        odd_mask = (D[:, M.edges].sum(axis=2) % q != 0).any(axis=1) if M.m else np.zeros(len(idx), bool)
        off_max = max(off_max, float(mags[idx][off_mask].max(initial=0.0)))
        odd_max = max(odd_max, float(mags[idx][odd_mask].max(initial=0.0)))
    vanishing = off_max <= 1e-10 and odd_max <= 1e-10

    hs = list(range(1, s + 1))
    if size <= exhaustive_limit:
        worst, where = max_shifted_level_mass(sp, hs, power=1)
        mode, count = "exhaustive", size
    else:
        rng = rng if rng is not None else np.random.default_rng(0)
        shifts = _shift_vectors(M, q, n, rng, sample_shifts)
        table = np.array([level_masses(sp, v, power=1) for v in shifts])
        pick = np.argmax(table[:, hs], axis=0)
        worst = table[pick, hs]
        pw = q ** np.arange(n, dtype=np.int64)
        where = shifts[pick] @ pw
        mode, count = "sampled", len(shifts)
    rep = BoundednessReport(C, s, B.size, _level_rows(scale * worst, C, s, q, n, where))
    rep.shifts, rep.shift_count = mode, count
    rep.off_matching_max, rep.odd_edge_max, rep.vanishing_ok = off_max, odd_max, vanishing
    return rep


def grid_constant(exact: float, grid: Sequence[float] = C_GRID) -> float | None:
    """Smallest grid value at or above ``exact`` (None if the grid is exhausted)."""
    for c in grid:
        if c >= exact * (1 - REL_TOL):
            return c
    return None


# ------------------------------------------------------ combinatorial p


@dataclass(frozen=True)
class CombEstimate:
    estimate: float
    successes: int
    trials: int
    ci_low: float
    ci_high: float
    bound: float

    @property
    def halfwidth(self) -> float:
        return (self.ci_high - self.ci_low) / 2


def wilson(successes: int, trials: int, confidence: float = 0.95) -> tuple[float, float]:
    ci = binomtest(int(successes), int(trials)).proportion_ci(confidence_level=confidence, method="wilson")
    return float(ci.low), float(ci.high)


def p_bound(h: int, k: int, m: int, n: int) -> float:
    alpha = m / n
    if h == 0:
        return 1.0
    return (4 * math.sqrt(h) * k * alpha ** (1 / k)) ** h / n ** (h / 2)


def _p_event(pos: np.ndarray, k: int, km: int) -> np.ndarray:
    if pos.shape[1] == 0:
        return np.ones(len(pos), dtype=bool)
    matched = (pos < km).all(axis=1)
    edge = pos // k
    counts = (edge[:, :, None] == edge[:, None, :]).sum(axis=2)
    return matched & (counts >= 2).all(axis=1)


def estimate_p(h: int, k: int, m: int, n: int, trials: int, rng: np.random.Generator) -> CombEstimate:
    """Monte Carlo estimate that the first h vertices are all matched with no edge meeting them exactly once."""
    if k * m > n or h > n:
        raise ValueError("infeasible parameters")
    pos = kernels.distinct_positions(n, h, trials, rng)
    hits = int(_p_event(pos, k, k * m).sum())
    lo, hi = wilson(hits, trials)
    return CombEstimate(hits / trials, hits, trials, lo, hi, p_bound(h, k, m, n))


def _set_partitions(items: list):
    if not items:
        yield []
        return
    head, rest = items[0], items[1:]
    for part in _set_partitions(rest):
        yield [[head]] + part
        for i in range(len(part)):
            yield part[:i] + [[head] + part[i]] + part[i + 1 :]


def _falling(a: int, b: int) -> int:
    out = 1
    for i in range(b):
        out *= a - i
    return out


def exact_p(h: int, k: int, m: int, n: int) -> Fraction:
    """Exact value via set partitions of the h vertices into edge blocks of size 2..k."""
    total = 0
    for part in _set_partitions(list(range(h))):
        if any(not 2 <= len(b) <= k for b in part):
            continue
        ways = _falling(m, len(part))
        for b in part:
            ways *= _falling(k, len(b))
        total += ways
    return Fraction(total, _falling(n, h))


# ---------------------------------------------------- combinatorial p_q


def pq_bound(n: int, u: int, o: int, eta: int, kappa: int, alpha: float, k: int, C: float | None = None) -> float:
    C = 4 * math.e**2 * k if C is None else C
    val = alpha ** ((o + eta) / k) * C**u
    if kappa:
        val *= (n / kappa) ** kappa
    if eta:
        val *= (u / math.sqrt(n * eta)) ** eta
    if o:
        val *= (u / n) ** o
    return val


def canonical_vectors(n: int, u: int, q: int, patterns: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Weight-u vectors supported on the first u coordinates: all ones, then random nonzero patterns."""
    out = [np.ones(u, dtype=np.int64)]
    seen = {tuple(out[0])}
    if q > 2:
        for _ in range(patterns):
            v = rng.integers(1, q, size=u)
            if tuple(v) not in seen:
                seen.add(tuple(v))
                out.append(v)
    return out


def estimate_pq(
    n: int,
    u: int,
    o: int,
    eta: int,
    kappa: int,
    alpha: float,
    k: int,
    q: int,
    trials: int,
    rng: np.random.Generator,
    patterns: int = 4,
    vectors: Sequence[Sequence[int]] | None = None,
) -> CombEstimate:
    """Largest observed frequency of the ``(kappa, eta, o)`` pattern over a canonical vector family."""
    if o < kappa:
        raise ValueError("need o >= kappa")
    if not 0 <= u <= n:
        raise ValueError("need 0 <= u <= n")
    m = int(math.floor(alpha * n + 1e-9))
    vecs = [np.asarray(v, dtype=np.int64) for v in vectors] if vectors else canonical_vectors(n, u, q, patterns, rng)
    best = (-1, 0)
    for vals in vecs:
        pos = kernels.distinct_positions(n, u, trials, rng)
        ka, et, od = kernels.classify_support(pos, vals, k, k * m, q)
        hits = int(((ka == kappa) & (et == eta) & (od == o)).sum())
        if hits > best[0]:
            best = (hits, trials)
    lo, hi = wilson(best[0], trials)
    return CombEstimate(best[0] / trials, best[0], trials, lo, hi, pq_bound(n, u, o, eta, kappa, alpha, k))


def pq_distribution(n: int, vals: Sequence[int], k: int, m: int, q: int) -> dict:
    """Exact law of (kappa, eta, o) for a vector supported on the first len(vals) coordinates."""
    vals = np.asarray(vals, dtype=np.int64)
    u = len(vals)
    law = defaultdict(Fraction)
    perms = list(itertools.permutations(range(n), u))
    for pos in perms:
        ka, et, od = kernels.classify_support(np.array([pos]), vals, k, k * m, q)
        law[(int(ka[0]), int(et[0]), int(od[0]))] += Fraction(1, len(perms))
    return dict(law)


# ---------------------------------------------------------- uniformity


def pushforward_counts(B: SetIndicator, M: Hypermatching) -> np.ndarray:
    q = B.q
    r = (M.k - 1) * M.m
    images = kernels.linear_images(folded_matrix(M, q), q, B.n)
    return np.bincount(images[B.mask], minlength=q**r)


def pushforward_tvd(B: SetIndicator, M: Hypermatching) -> Fraction:
    """Exact total variation distance between A_c x (x uniform on B) and uniform."""
    counts = pushforward_counts(B, M)
    Q = len(counts)
    diff = sum(abs(int(c) * Q - B.size) for c in counts)
    return Fraction(diff, 2 * B.size * Q)


@dataclass
class UniformityReport:
    rows: list = field(default_factory=list)

    def fraction_within(self, delta: float) -> float:
        return sum(1 for r in self.rows if r["tvd"] <= delta) / max(len(self.rows), 1)


def uniformity_test(
    B: SetIndicator,
    alpha: float,
    k: int,
    trials_matchings: int,
    rng: np.random.Generator,
    trials_samples: int | None = None,
) -> UniformityReport:
    """Distance to uniform of the folded image of Unif(B), over random matchings with centers.

    Exact pushforwards are used unless ``trials_samples`` is set, in which
    case that many members of B are sampled and the row is marked inexact.
    """
    if B.size == 0:
        raise ValueError("empty set")
    n, q = B.n, B.q
    m = int(math.floor(alpha * n + 1e-9))
    rep = UniformityReport()
    members = B.members
    for t in range(trials_matchings):
        M = sample_hypermatching(n, k, m, rng)
        Q = q ** ((k - 1) * m)
        if trials_samples is None:
            counts = pushforward_counts(B, M)
            tvd = pushforward_tvd(B, M)
            total, exact = B.size, True
        else:
            pick = members[rng.integers(0, len(members), size=trials_samples)]
            images = kernels.linear_images(folded_matrix(M, q), q, n)[pick]
            counts = np.bincount(images, minlength=Q)
            total, exact = trials_samples, False
            tvd = Fraction(sum(abs(int(c) * Q - total) for c in counts), 2 * total * Q)
        ratios = counts * Q / total
        rep.rows.append(
            {
                "matching": t,
                "tvd": float(tvd),
                "tvd_exact": str(tvd) if exact else "",
                "max_ratio": float(ratios.max()),
                "min_ratio": float(ratios.min()),
                "exact": exact,
            }
        )
    return rep


# ---------------------------------------------------------- induction


@dataclass
class InductionRow:
    trial: int
    size_B: int
    size_Bp: int
    size_I: int
    volume_ratio: float
    volume_ok: bool
    min_C_exact: float
    min_C_grid: float | None


def induction_step(B: SetIndicator, B_prime: SetIndicator, s: int, delta: float = 0.1, trial: int = 0) -> InductionRow:
    inter = B.intersect(B_prime)
    if inter.size == 0:
        raise ValueError("empty intersection")
    expected = B.size * B_prime.size / B.domain_size
    ratio = inter.size / expected
    rep = check_bounded(inter, 1.0, s)
    need = rep.min_constant()
    grid = grid_constant(need)
    if grid is not None and not check_bounded(inter, grid, s).passed:
        grid = None
    return InductionRow(trial, B.size, B_prime.size, inter.size, ratio, ratio >= 1 - delta, need, grid)


def induction_experiment(
    B: SetIndicator,
    k: int,
    alpha: float,
    s: int,
    trials_matchings: int,
    rng: np.random.Generator,
    reduced_density: float = 0.5,
    delta: float = 0.1,
) -> list[InductionRow]:
    """Intersect B with fresh restricted sets and record the smallest bounded constant.

    Each trial draws a matching with centers and a reduced set containing a
    ``reduced_density`` fraction of the reduced cube. Trials with an empty
    intersection are reported with ``size_I = 0`` and no constant.
    """
    q, n = B.q, B.n
    m = int(math.floor(alpha * n + 1e-9))
    r = (k - 1) * m
    rows = []
    for t in range(trials_matchings):
        M = sample_hypermatching(n, k, m, rng)
        size = max(1, int(round(reduced_density * q**r)))
        Bp = posterior_set(M, random_reduced_set(q, r, size, rng), q)
        try:
            rows.append(induction_step(B, Bp, s, delta, t))
        except ValueError:
            rows.append(InductionRow(t, B.size, Bp.size, 0, 0.0, False, math.inf, None))
    return rows


# --------------------------------------------------- posterior of a protocol


@dataclass(frozen=True, eq=False)
class TableMessages:
    """Deterministic message functions given as lookup tables.

    Player t maps (tuple of earlier messages, index of its folded labels) to
    an integer message in ``range(2**bits)``.
    """

    tables: tuple
    bits: int

    @staticmethod
    def random(q: int, dims: Sequence[int], bits: int, rng: np.random.Generator) -> "TableMessages":
        tables = []
        prefixes = [()]
        for d in dims:
            tab = {pre: rng.integers(0, 2**bits, size=q**d) for pre in prefixes}
            tables.append(tab)
            prefixes = [pre + (s,) for pre in prefixes for s in range(2**bits)]
        return TableMessages(tuple(tables), bits)

    def message(self, t: int, prefix: tuple, label_index: int) -> int:
        return int(self.tables[t][prefix][label_index])


def transcript(msgs: TableMessages, matchings: Sequence[Hypermatching], x: Sequence[int], q: int) -> tuple:
    """Messages sent in the YES case when the hidden vector is ``x``."""
    x = np.asarray(x, dtype=np.int64)
    out: tuple = ()
    for t, M in enumerate(matchings):
        r = (M.k - 1) * M.m
        w = (folded_matrix(M, q) @ x) % q
        out = out + (msgs.message(t, out, int(w @ (q ** np.arange(r)))),)
    return out


def transcript_posterior(msgs: TableMessages, matchings: Sequence[Hypermatching], observed: tuple, q: int) -> SetIndicator:
    """B_{1:t} for an observed transcript, built from the reduced preimages of each message."""
    reduced = []
    for t, M in enumerate(matchings):
        r = (M.k - 1) * M.m
        table = msgs.tables[t][observed[:t]]
        reduced.append(SetIndicator.from_mask(q, r, table == observed[t]))
    return aggregated_posterior(matchings, reduced, q)


def exact_bayes_posterior(msgs: TableMessages, matchings: Sequence[Hypermatching], observed: tuple, q: int, n: int) -> dict:
    """Posterior law of x* given the transcript, by enumerating the uniform prior."""
    weights = {}
    prior = Fraction(1, q**n)
    for idx in range(q**n):
        x = vector_of(idx, q, n)
        if transcript(msgs, matchings, x, q) == observed:
            weights[idx] = prior
    z = sum(weights.values())
    return {i: w / z for i, w in weights.items()}

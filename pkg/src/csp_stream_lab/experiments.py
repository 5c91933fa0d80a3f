"""Named, seeded experiments writing manifest/CSV/summary files.

Every random draw in trial ``i`` of experiment ``name`` comes from
``rng.stream(seed, name, i)`` (plus fixed sub-labels), so results do not
depend on how many other trials run. Files compared across reruns
(``manifest.json``, ``trials.csv``, ``summary.json``) carry no wall-clock
data; timings go to ``timings.log``.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .comm_games import (
    GameParams,
    consistency_protocol,
    constant_protocol,
    exact_folded_then_unfolded_law,
    exact_law,
    label_blind_protocol,
    run_protocol,
    sample_instance,
)
from .csp_family import RhoConfig, builtin_family, family_width, rho, width
from .hypermatching import sample_hypermatching
from .posterior import (
    SetIndicator,
    base_case_constant,
    check_bounded,
    check_reduced,
    estimate_p,
    estimate_pq,
    exact_bayes_posterior,
    exact_p,
    induction_experiment,
    posterior_set,
    pq_distribution,
    pushforward_tvd,
    random_reduced_set,
    TableMessages,
    transcript,
    transcript_posterior,
    uniformity_test,
    verify_restricted_fourier,
    wilson,
)
from .rng import describe, stream
from .stream_reduction import verify_separation
from .zq_fourier import hypercontractivity_check

LEMMAS = (
    "restricted-fourier",
    "base-case",
    "uniformity",
    "induction",
    "p-bound",
    "pq-bound",
    "posterior-bayes",
    "hypercontractivity",
)


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int = 0
    out: str = "results"
    params: dict = field(default_factory=dict)
    budget: int = 2**24

    @staticmethod
    def from_dict(obj: dict, **overrides) -> "ExperimentConfig":
        obj = dict(obj)
        for key, val in overrides.items():
            if val is not None:
                obj[key] = val
        if "experiment" not in obj:
            raise ConfigError("config needs an 'experiment' field")
        known = {"experiment", "seed", "out", "params", "budget"}
        extra = set(obj) - known
        if extra:
            raise ConfigError(f"unknown config fields: {sorted(extra)}")
        return ExperimentConfig(
            experiment=str(obj["experiment"]),
            seed=int(obj.get("seed", 0)),
            out=str(obj.get("out", "results")),
            params=dict(obj.get("params", {})),
            budget=int(obj.get("budget", 2**24)),
        )

    def identity(self) -> dict:
        """Everything that determines the results (the output directory does not)."""
        return {"experiment": self.experiment, "seed": self.seed, "params": self.params, "budget": self.budget}

    def hash(self) -> str:
        blob = json.dumps(self.identity(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


@dataclass
class Result:
    rows: list
    summary: dict
    ok: bool


def _trials(params: dict, key: str = "trials", default: int = 100) -> int:
    t = int(params.get(key, default))
    if t < 1:
        raise ConfigError(f"'{key}' must be a positive integer")
    return t


def _num(x):
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, (np.floating, float)):
        return float(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


# --------------------------------------------------------------- families


DEFAULT_RHO_FAMILIES = (
    [{"name": "qcol", "q": q, "k": 2} for q in (2, 3, 4, 5)]
    + [{"name": "ug-shift", "q": q, "k": 2} for q in (2, 3, 4, 5)]
    + [{"name": "less-than", "q": q, "k": 2} for q in (2, 3, 4, 5)]
    + [
        {"name": "lin", "q": q, "k": k, "params": {"r": r}}
        for q in (2, 3)
        for k in (1, 2, 3)
        for r in range(k)
    ]
    + [{"name": "keq", "q": q, "k": k} for q in (2, 3) for k in (2, 3)]
)

DEFAULT_WIDTH_FAMILIES = (
    [{"name": "qcol", "q": q, "k": 2} for q in (2, 3, 4, 5)]
    + [{"name": "ug-shift", "q": q, "k": 2} for q in (2, 3, 4, 5)]
    + [{"name": "keq", "q": q, "k": k} for q in (2, 3, 5) for k in (2, 3)]
    + [{"name": "lin", "q": q, "k": k, "params": {"r": r, "shift_invariant": True}} for q in (2, 3) for k in (2, 3) for r in range(k)]
    + [{"name": "less-than", "q": q, "k": 2} for q in (2, 3, 4, 5)]
)


def closed_form_rho(name: str, q: int, k: int, params: dict | None = None) -> float | None:
    params = params or {}
    if name == "qcol":
        return 1 - 1 / q
    if name in ("ug", "ug-shift"):
        return 1 / q
    if name == "lin":
        return q ** -int(params.get("r", 1))
    if name == "less-than":
        return 0.5 * (1 - 1 / q)
    if name == "keq":
        return q ** -(k - 1)
    return None


def closed_form_width(name: str, q: int, k: int, params: dict | None = None) -> Fraction | None:
    params = params or {}
    if name in ("qcol", "ug", "ug-shift", "keq"):
        return Fraction(1)
    if name == "lin" and params.get("shift_invariant"):
        return Fraction(1)
    if name == "less-than":
        return 1 - Fraction(1, q)
    return None


def _family(entry: dict):
    return builtin_family(entry["name"], int(entry["q"]), entry.get("k"), entry.get("params"))


def exp_rho_table(cfg: ExperimentConfig) -> Result:
    tol = float(cfg.params.get("tolerance", 1e-5))
    solver = RhoConfig(tolerance=float(cfg.params.get("solver_tolerance", 1e-6)), seed=cfg.seed)
    rows, ok = [], True
    for entry in cfg.params.get("families", DEFAULT_RHO_FAMILIES):
        F = _family(entry)
        cert = rho(F, solver)
        expect = closed_form_rho(entry["name"], F.q, F.k, entry.get("params"))
        err = None if expect is None else abs(cert.value - expect)
        good = err is None or err <= tol
        ok &= good
        rows.append(
            {
                "family": entry["name"],
                "q": F.q,
                "k": F.k,
                "params": json.dumps(entry.get("params", {}), sort_keys=True),
                "size": len(F),
                "rho": cert.value,
                "lower_bound": cert.lower_bound,
                "gap": cert.gap_estimate,
                "converged": cert.converged,
                "closed_form": expect,
                "abs_error": err,
                "pass": good,
            }
        )
    return Result(rows, {"rows": len(rows), "tolerance": tol, "all_within_tolerance": ok}, ok)


def exp_width_table(cfg: ExperimentConfig) -> Result:
    rows, ok = [], True
    for entry in cfg.params.get("families", DEFAULT_WIDTH_FAMILIES):
        F = _family(entry)
        w = family_width(F)
        expect = closed_form_width(entry["name"], F.q, F.k, entry.get("params"))
        good = expect is None or w == expect
        ok &= good
        worst = min(F.functions, key=lambda f: width(f)[0])
        rows.append(
            {
                "family": entry["name"],
                "q": F.q,
                "k": F.k,
                "params": json.dumps(entry.get("params", {}), sort_keys=True),
                "size": len(F),
                "width": str(w),
                "witness_of_narrowest": " ".join(map(str, width(worst)[1])),
                "closed_form": None if expect is None else str(expect),
                "pass": good,
            }
        )
    return Result(rows, {"rows": len(rows), "all_exact": ok}, ok)


# -------------------------------------------------------------- separation


def exp_separation(cfg: ExperimentConfig) -> Result:
    P = cfg.params
    fam = P.get("family", {"name": "keq", "q": 2, "k": 2})
    F = _family(fam)
    p = GameParams(F.q, F.k, int(P.get("n", 16)), int(P.get("T", 8)), float(P.get("alpha", 0.125)))
    trials = _trials(P, default=200)
    eps = float(P.get("eps", 0.3))
    need = float(P.get("min_pass_rate", 0.9))
    rep = verify_separation(
        F, p, eps, trials, stream(cfg.seed, "separation"), heuristic=bool(P.get("heuristic", False)), budget=cfg.budget
    )
    rows = [
        {
            "trial": r["trial"],
            "case": r["case"],
            "m_tilde": r["m_tilde"],
            "value": None if r["value"] is None else str(r["value"]),
            "exact": r["exact"],
            "gamma": r["gamma"],
            "count_ok": r["count_ok"],
            "claim_ok": r["claim_ok"],
            "property_ok": r["property_ok"],
        }
        for r in rep.rows
    ]
    summary = rep.summary()
    summary["family"] = fam
    summary["params"] = p.to_json()
    summary["min_pass_rate"] = need
    ok = summary["yes_property_rate"] >= need and summary["no_property_rate"] >= need
    return Result(rows, summary, ok)


# --------------------------------------------------------------- advantage


def exp_advantage(cfg: ExperimentConfig) -> Result:
    P = cfg.params
    p = GameParams(int(P.get("q", 2)), int(P.get("k", 2)), int(P.get("n", 8)), int(P.get("T", 2)), float(P.get("alpha", 0.25)))
    game = P.get("game", "ifrmd")
    name = P.get("protocol", "consistency")
    builders: dict[str, Callable] = {
        "constant": lambda: constant_protocol(p.T),
        "label-blind": lambda: label_blind_protocol(p.T),
        "consistency": lambda: consistency_protocol(p),
    }
    if name not in builders:
        raise ConfigError(f"protocol must be one of {sorted(builders)}")
    pr = builders[name]()
    trials = _trials(P, default=200)
    rows = []
    for t in range(trials):
        ys = run_protocol(pr, sample_instance(p, game, "yes", stream(cfg.seed, "advantage", t, "yes")))
        ns = run_protocol(pr, sample_instance(p, game, "no", stream(cfg.seed, "advantage", t, "no")))
        rows.append({"trial": t, "yes_accept": ys, "no_accept": ns})
    py = sum(r["yes_accept"] for r in rows) / trials
    pn = sum(r["no_accept"] for r in rows) / trials
    half = 1.959963984540054 * math.sqrt((py * (1 - py) + pn * (1 - pn)) / trials)
    summary = {"protocol": name, "game": game, "params": p.to_json(), "yes_accept_rate": py, "no_accept_rate": pn, "advantage": abs(py - pn), "ci_halfwidth": half, "trials": trials}
    return Result(rows, summary, True)


# ------------------------------------------------------------ fold equality


def exp_fold_equivalence(cfg: ExperimentConfig) -> Result:
    P = cfg.params
    p = GameParams(int(P.get("q", 2)), int(P.get("k", 2)), int(P.get("n", 4)), int(P.get("T", 1)), float(P.get("alpha", 0.25)))
    rows, ok = [], True
    for case in ("yes", "no"):
        direct = exact_law(p, case)
        folded = exact_folded_then_unfolded_law(p, case)
        same = direct == folded
        ok &= same
        rows.append(
            {
                "case": case,
                "outcomes_direct": len(direct),
                "outcomes_folded": len(folded),
                "total_direct": str(sum(direct.values())),
                "total_folded": str(sum(folded.values())),
                "max_point_difference": str(max(abs(direct.get(key, 0) - folded.get(key, 0)) for key in set(direct) | set(folded))),
                "equal": same,
            }
        )
    return Result(rows, {"params": p.to_json(), "laws_equal": ok}, ok)


# --------------------------------------------------------- lemma checks


def lemma_restricted_fourier(cfg: ExperimentConfig) -> Result:
    P = cfg.params
    configs = _trials(P, "configs", 60)
    qs, ks = P.get("q", [2, 3]), P.get("k", [2, 3, 4])
    n_max, m_max = int(P.get("n_max", 9)), int(P.get("m_max", 2))
    rows, ok = [], True
    for t in range(configs):
        r = stream(cfg.seed, "restricted-fourier", t)
        q = int(r.choice(qs))
        k = int(r.choice(ks))
        m = int(r.integers(1, min(m_max, n_max // k) + 1))
        n = int(r.integers(k * m, n_max + 1))
        M = sample_hypermatching(n, k, m, r)
        dim = (k - 1) * m
        B_r = random_reduced_set(q, dim, int(r.integers(1, q**dim + 1)), r)
        rep = verify_restricted_fourier(M, B_r, q)
        ok &= rep.passed
        rows.append({"config": t, "q": q, "k": k, "n": n, "m": m, "reduced_size": B_r.size, "violations": rep.violations, "max_error": rep.max_error, **rep.branch_counts})
    return Result(rows, {"configs": configs, "violations": sum(r["violations"] for r in rows)}, ok)


def random_restricted(n: int, k: int, q: int, b: int, r: np.random.Generator):
    """A random restricted set with at least q^(n-b) points."""
    m = int(r.integers(1, n // k + 1))
    M = sample_hypermatching(n, k, m, r)
    dim = (k - 1) * m
    low = q ** max(dim - b, 0)
    size = int(r.integers(low, q**dim + 1))
    B = posterior_set(M, random_reduced_set(q, dim, size, r), q)
    return M, B


def lemma_base_case(cfg: ExperimentConfig) -> Result:
    P = cfg.params
    trials = _trials(P, default=120)
    ns, ks, q = P.get("n", [8, 10]), P.get("k", [2, 3]), int(P.get("q", 2))
    rows, ok = [], True
    for t in range(trials):
        r = stream(cfg.seed, "base-case", t)
        n, k = int(r.choice(ns)), int(r.choice(ks))
        s_max = max(1, n // 4)
        b = int(r.integers(1, s_max + 1))
        s = int(r.integers(b, s_max + 1))
        M, B = random_restricted(n, k, q, b, r)
        C = base_case_constant(k, q)
        rep = check_reduced(B, M, C, s, r)
        ok &= rep.passed
        rows.append({"trial": t, "n": n, "k": k, "m": M.m, "b": b, "s": s, "size": B.size, "C": C, "worst_ratio": rep.worst_ratio, "min_C": rep.min_constant(), "vanishing_ok": rep.vanishing_ok, "shifts": rep.shifts, "pass": rep.passed})
    return Result(rows, {"trials": trials, "all_pass": ok, "max_min_C": max(r["min_C"] for r in rows)}, ok)


def lemma_uniformity(cfg: ExperimentConfig) -> Result:
    P = cfg.params
    n, q, k = int(P.get("n", 12)), int(P.get("q", 2)), int(P.get("k", 2))
    alpha = float(P.get("alpha", 1 / 12))
    matchings = _trials(P, "matchings", 100)
    delta = float(P.get("delta", 0.1))
    density = float(P.get("density", 0.5))
    rows, ok = [], True
    full = SetIndicator.full(q, n)
    for t in range(matchings):
        r = stream(cfg.seed, "uniformity", "full", t)
        M = sample_hypermatching(n, k, int(math.floor(alpha * n + 1e-9)), r)
        tvd = pushforward_tvd(full, M)
        ok &= tvd == 0
        rows.append({"part": "full", "matching": t, "tvd": str(tvd), "expected": "0", "pass": tvd == 0})
    for t in range(matchings):
        r = stream(cfg.seed, "uniformity", "adversarial", t)
        M = sample_hypermatching(n, k, int(math.floor(alpha * n + 1e-9)), r)
        dim = (k - 1) * M.m
        B = posterior_set(M, SetIndicator.from_members(q, dim, [0]), q)
        tvd = pushforward_tvd(B, M)
        expect = 1 - Fraction(1, q**dim)
        ok &= tvd == expect
        rows.append({"part": "adversarial", "matching": t, "tvd": str(tvd), "expected": str(expect), "pass": tvd == expect})
    r = stream(cfg.seed, "uniformity", "random-set")
    B = SetIndicator.from_mask(q, n, r.random(q**n) < density)
    rep = uniformity_test(B, alpha, k, matchings, stream(cfg.seed, "uniformity", "random-matchings"))
    for row in rep.rows:
        rows.append({"part": "random", "matching": row["matching"], "tvd": row["tvd_exact"], "expected": f"<={delta}", "pass": row["tvd"] <= delta})
    frac = rep.fraction_within(delta)
    ok &= frac >= 0.9
    s = int(P.get("s", 2))
    bounded = check_bounded(B, 1.0, s)
    summary = {
        "random_set_size": B.size,
        "random_set_min_C": bounded.min_constant(),
        "random_fraction_within_delta": frac,
        "delta": delta,
        "max_random_tvd": max(row["tvd"] for row in rep.rows),
    }
    return Result(rows, summary, ok)


def lemma_induction(cfg: ExperimentConfig) -> Result:
    P = cfg.params
    n, q, k = int(P.get("n", 10)), int(P.get("q", 2)), int(P.get("k", 2))
    alpha = float(P.get("alpha", 0.1))
    s = int(P.get("s", 2))
    matchings = _trials(P, "matchings", 100)
    r = stream(cfg.seed, "induction", "prior")
    M0 = sample_hypermatching(n, k, int(math.floor(alpha * n + 1e-9)), r)
    dim = (k - 1) * M0.m
    B0 = posterior_set(M0, random_reduced_set(q, dim, max(1, q**dim // 2), r), q)
    B1 = B0.intersect(posterior_set(sample_hypermatching(n, k, M0.m, r), random_reduced_set(q, dim, max(1, q**dim // 2), r), q))
    rows_raw = induction_experiment(B1, k, alpha, s, matchings, stream(cfg.seed, "induction", "trials"), float(P.get("reduced_density", 0.5)))
    rows = [dict(vars(x)) for x in rows_raw]
    finite = [x.min_C_exact for x in rows_raw if math.isfinite(x.min_C_exact)]
    summary = {
        "prior_size": B1.size,
        "prior_min_C": check_bounded(B1, 1.0, s).min_constant(),
        "volume_ok_rate": sum(x.volume_ok for x in rows_raw) / len(rows_raw),
        "min_C_max": max(finite) if finite else None,
        "min_C_median": float(np.median(finite)) if finite else None,
    }
    return Result(rows, summary, all(x.min_C_grid is not None for x in rows_raw if x.size_I))


def p_grid() -> list[tuple[int, int, int, int]]:
    grid = []
    for h in (0, 1, 2, 3, 4):
        for k, m, n in ((2, 1, 201), (2, 2, 401), (3, 1, 301), (3, 1, 601)):
            grid.append((h, k, m, n))
    return grid


def lemma_p_bound(cfg: ExperimentConfig) -> Result:
    P = cfg.params
    trials = _trials(P, default=200_000)
    rows, ok = [], True
    anchor = tuple(P.get("anchor", (2, 2, 2, 8)))
    ex = exact_p(*anchor)
    est = estimate_p(*anchor, trials, stream(cfg.seed, "p-bound", "anchor"))
    anchor_ok = est.ci_low <= float(ex) <= est.ci_high
    ok &= anchor_ok
    rows.append({"point": "anchor", "h": anchor[0], "k": anchor[1], "m": anchor[2], "n": anchor[3], "estimate": est.estimate, "ci_low": est.ci_low, "ci_high": est.ci_high, "exact": str(ex), "bound": est.bound, "pass": anchor_ok})
    for i, (h, k, m, n) in enumerate(P.get("grid", p_grid())):
        est = estimate_p(h, k, m, n, trials, stream(cfg.seed, "p-bound", i))
        good = est.estimate <= est.bound + 3 * est.halfwidth
        ok &= good
        rows.append({"point": i, "h": h, "k": k, "m": m, "n": n, "estimate": est.estimate, "ci_low": est.ci_low, "ci_high": est.ci_high, "exact": str(exact_p(h, k, m, n)), "bound": est.bound, "pass": good})
    return Result(rows, {"trials": trials, "anchor_in_ci": anchor_ok, "all_pass": ok}, ok)


def lemma_pq_bound(cfg: ExperimentConfig) -> Result:
    """Exact p_q laws against Monte Carlo, plus the bound check.

    Every (n, u, pattern) point is compared with its exact probability, so
    the intervals are Bonferroni-corrected to a 95% simultaneous level; the
    bound comparison keeps the per-point 95% half-width.
    """
    P = cfg.params
    trials = _trials(P, default=50_000)
    k, q, m = int(P.get("k", 2)), int(P.get("q", 2)), int(P.get("m", 1))
    points = []
    for n in P.get("n", [4, 6, 8]):
        for u in range(1, min(n, 4) + 1):
            for i, (key, pr) in enumerate(sorted(pq_distribution(n, [1] * u, k, m, q).items())):
                points.append((n, u, i, key, pr))
    level = 1 - 0.05 / len(points)
    rows, ok = [], True
    for n, u, i, (kappa, eta, o), pr in points:
        est = estimate_pq(n, u, o, eta, kappa, m / n, k, q, trials, stream(cfg.seed, "pq-bound", n, u, i), vectors=[[1] * u])
        lo, hi = wilson(est.successes, trials, level)
        in_ci = lo <= float(pr) <= hi
        under = est.estimate <= est.bound + 3 * est.halfwidth
        ok &= in_ci and under
        rows.append({"n": n, "u": u, "kappa": kappa, "eta": eta, "o": o, "exact": str(pr), "estimate": est.estimate, "ci_low": lo, "ci_high": hi, "bound": est.bound, "in_ci": in_ci, "under_bound": under})
    summary = {"rows": len(rows), "all_pass": ok, "simultaneous_confidence": level, "in_ci_rate": sum(r["in_ci"] for r in rows) / len(rows)}
    return Result(rows, summary, ok)


def lemma_posterior_bayes(cfg: ExperimentConfig) -> Result:
    P = cfg.params
    transcripts = _trials(P, "transcripts", 20)
    rows, ok = [], True
    for t in range(transcripts):
        r = stream(cfg.seed, "posterior-bayes", t)
        q = int(r.choice(P.get("q", [2, 3])))
        n = int(r.integers(4, int(P.get("n_max", 8 if q == 2 else 6)) + 1))
        k = 2
        m = int(r.integers(1, n // k + 1))
        Ms = [sample_hypermatching(n, k, m, r) for _ in range(2)]
        msgs = TableMessages.random(q, [(k - 1) * m] * 2, int(P.get("bits", 1)), r)
        x = r.integers(0, q, size=n)
        obs = transcript(msgs, Ms, x, q)
        B = transcript_posterior(msgs, Ms, obs, q)
        bayes = exact_bayes_posterior(msgs, Ms, obs, q, n)
        unif = {int(i): Fraction(1, B.size) for i in B.members}
        same = bayes == unif
        ok &= same
        rows.append({"transcript": t, "q": q, "n": n, "m": m, "messages": " ".join(map(str, obs)), "posterior_size": B.size, "equal": same})
    return Result(rows, {"transcripts": transcripts, "all_equal": ok}, ok)


def lemma_hypercontractivity(cfg: ExperimentConfig) -> Result:
    P = cfg.params
    trials = _trials(P, default=500)
    zeta = float(P.get("zeta", 6.0))
    rows, ok = [], True
    for t in range(trials):
        r = stream(cfg.seed, "hypercontractivity", t)
        f, q, n, b, kind = random_bounded_function(r, P.get("q", [2, 3]), int(P.get("n_max", 8)), P.get("kinds", FUNCTION_KINDS))
        rep = hypercontractivity_check(f, b, zeta)
        ok &= rep.passed
        rows.append({"trial": t, "q": q, "n": n, "b": b, "kind": kind, "support": rep.support_size, "worst_ratio": rep.worst_ratio, "noise_ok": all(x["noise_pass"] for x in rep.rows), "pass": rep.passed})
    return Result(rows, {"trials": trials, "violations": sum(not r["pass"] for r in rows), "worst_ratio": max(r["worst_ratio"] for r in rows)}, ok)


FUNCTION_KINDS = ("dense", "subcube", "affine", "minimal", "phased")


def random_bounded_function(r: np.random.Generator, qs, n_max: int, kinds=FUNCTION_KINDS):
    """A random function of modulus <= 1 whose support has at least q^(n-b) points.

    Every kind except ``phased`` is a set indicator.
    """
    from .zq_fourier import DenseFunction

    q = int(r.choice(qs))
    n = int(r.integers(4, n_max + 1))
    b = int(r.integers(1, n // 4 + 1))
    size = q**n
    need = q ** (n - b)
    kind = kinds[int(r.integers(0, len(kinds)))]
    if kind not in FUNCTION_KINDS:
        raise ConfigError(f"unknown function kind {kind!r}")
    if kind == "dense":
        mask = r.random(size) < r.uniform(0.3, 1.0)
        if mask.sum() < need:
            mask[r.choice(size, need, replace=False)] = True
        vals = mask.astype(complex)
    elif kind in ("subcube", "affine"):
        from .kernels import digits_of

        D = digits_of(np.arange(size), q, n)
        if kind == "subcube":
            coords = r.choice(n, b, replace=False)
            target = r.integers(0, q, b)
            mask = np.all(D[:, coords] == target, axis=1)
        else:
            A = r.integers(0, q, size=(b, n))
            c = r.integers(0, q, size=b)
            mask = np.all((D @ A.T) % q == c, axis=1)
            if mask.sum() < need:
                mask = np.all(D[:, :b] == 0, axis=1)
        vals = mask.astype(complex)
    elif kind == "minimal":
        vals = np.zeros(size, complex)
        vals[r.choice(size, need, replace=False)] = 1.0
    else:
        mask = np.zeros(size, bool)
        mask[r.choice(size, int(r.integers(need, size + 1)), replace=False)] = True
        vals = mask * r.uniform(0.2, 1.0, size) * np.exp(2j * np.pi * r.random(size))
    return DenseFunction(q, n, vals), q, n, b, kind


_LEMMA_RUNNERS = {
    "restricted-fourier": lemma_restricted_fourier,
    "base-case": lemma_base_case,
    "uniformity": lemma_uniformity,
    "induction": lemma_induction,
    "p-bound": lemma_p_bound,
    "pq-bound": lemma_pq_bound,
    "posterior-bayes": lemma_posterior_bayes,
    "hypercontractivity": lemma_hypercontractivity,
}


def exp_verify_lemma(cfg: ExperimentConfig) -> Result:
    name = cfg.params.get("name")
    if name not in _LEMMA_RUNNERS:
        raise ConfigError(f"verify-lemma needs params.name in {LEMMAS}")
    res = _LEMMA_RUNNERS[name](cfg)
    res.summary = {"lemma": name, **res.summary}
    return res


EXPERIMENTS: dict[str, Callable[[ExperimentConfig], Result]] = {
    "rho-table": exp_rho_table,
    "width-table": exp_width_table,
    "separation": exp_separation,
    "advantage": exp_advantage,
    "verify-lemma": exp_verify_lemma,
    "p-bound": lemma_p_bound,
    "pq-bound": lemma_pq_bound,
    "fold-equivalence": exp_fold_equivalence,
}


# ------------------------------------------------------------------ output


def _csv_text(rows: list) -> str:
    buf = io.StringIO()
    cols: list[str] = []
    for r in rows:
        for c in r:
            if c not in cols:
                cols.append(c)
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({c: ("" if r.get(c) is None else _num(r.get(c))) for c in cols})
    return buf.getvalue()


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_num) + "\n"


def validate(cfg: ExperimentConfig) -> None:
    if cfg.experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {cfg.experiment!r}; choose from {sorted(EXPERIMENTS)}")
    for key in ("trials", "configs", "matchings", "transcripts"):
        if key in cfg.params:
            _trials(cfg.params, key)
    if cfg.experiment == "verify-lemma" and cfg.params.get("name") not in _LEMMA_RUNNERS:
        raise ConfigError(f"verify-lemma needs params.name in {LEMMAS}")


def run_experiment(cfg: ExperimentConfig) -> tuple[int, Path]:
    """Run, write the report files, and return ``(exit_status, out_dir)``.

    Config validation happens before any file is created.
    """
    validate(cfg)
    start = time.perf_counter()
    res = EXPERIMENTS[cfg.experiment](cfg)
    elapsed = time.perf_counter() - start
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    digest = cfg.hash()
    manifest = {
        "package_version": __version__,
        "config": cfg.identity(),
        "config_hash": digest,
        "seed_tree": {
            "master": cfg.seed,
            "experiment_stream": describe(cfg.seed, cfg.experiment),
            "trial_stream": "Philox(SeedSequence(seed, spawn_key=(crc32(label), ..., trial)))",
        },
        "files": ["manifest.json", "trials.csv", "summary.json", "timings.log"],
    }
    summary = {"experiment": cfg.experiment, "config_hash": digest, "pass": bool(res.ok), **res.summary}
    (out / "manifest.json").write_text(_json_text(manifest))
    (out / "trials.csv").write_text(_csv_text(res.rows))
    (out / "summary.json").write_text(_json_text(summary))
    (out / "timings.log").write_text(f"experiment={cfg.experiment} wall_seconds={elapsed:.3f}\n")
    return (0 if res.ok else 1), out

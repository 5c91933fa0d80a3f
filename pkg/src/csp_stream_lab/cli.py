"""Command line entry point ``csp-stream-lab``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import kernels
from .comm_games import GameInstance, GameParams, fold_reduction, sample_instance
from .csp_family import CspFamily, RhoConfig, builtin_family, family_width, rho, width
from .experiments import EXPERIMENTS, LEMMAS, ConfigError, ExperimentConfig, run_experiment
from .rng import stream
from .stream_reduction import CspInstance, brute_force_value, local_search_value, reduce_to_csp


def _load(path: str) -> dict:
    with open(path) as fh:
        return json.load(fh)


def _emit(obj, out: str | None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _run(args) -> int:
    raw = _load(args.config) if args.config else {}
    raw.setdefault("experiment", args.command)
    if raw["experiment"] != args.command:
        raise ConfigError(f"config is for {raw['experiment']!r}, not {args.command!r}")
    if getattr(args, "name", None):
        raw.setdefault("params", {})["name"] = args.name
    cfg = ExperimentConfig.from_dict(raw, seed=args.seed, out=args.out)
    status, out = run_experiment(cfg)
    summary = json.loads((out / "summary.json").read_text())
    print(f"{cfg.experiment}: {'PASS' if summary['pass'] else 'FAIL'} -> {out}")
    return status


def _family(args) -> int:
    params = json.loads(args.params) if args.params else None
    F = builtin_family(args.name, args.q, args.k, params)
    _emit(F.to_json(), args.out)
    return 0


def _rho(args) -> int:
    F = CspFamily.from_json(_load(args.family))
    cert = rho(F, RhoConfig(tolerance=args.tol, seed=args.seed or 0))
    _emit(
        {
            "rho": cert.value,
            "lower_bound": cert.lower_bound,
            "gap": cert.gap_estimate,
            "converged": cert.converged,
            "outer": cert.outer.tolist(),
            "inner_witness": cert.inner_witness.tolist(),
        },
        args.out,
    )
    return 0 if cert.converged else 1


def _width(args) -> int:
    F = CspFamily.from_json(_load(args.family))
    per = [{"function": f.name or i, "width": str(width(f)[0]), "witness": list(width(f)[1])} for i, f in enumerate(F.functions)]
    _emit({"width": str(family_width(F)), "functions": per}, args.out)
    return 0


def _gen(args) -> int:
    p = GameParams(args.q, args.k, args.n, args.T, args.alpha)
    inst = sample_instance(p, args.game, args.case, stream(args.seed or 0, "gen"))
    _emit(inst.to_json(), args.out)
    return 0


def _fold(args) -> int:
    inst = GameInstance.from_json(_load(args.instance))
    _emit(fold_reduction(inst, stream(args.seed or 0, "fold")).to_json(), args.out)
    return 0


def _reduce(args) -> int:
    inst = GameInstance.from_json(_load(args.instance))
    F = CspFamily.from_json(_load(args.family))
    csp = reduce_to_csp(inst, F, rng=stream(args.seed or 0, "reduce"))
    _emit(csp.to_json(family_ref=str(args.family)), args.out)
    return 0


def _value(args) -> int:
    obj = _load(args.instance)
    fam = None
    if not isinstance(obj["family"], dict):
        fam = CspFamily.from_json(_load(args.family or obj["family"]))
    inst = CspInstance.from_json(obj, fam)
    if inst.m == 0:
        _emit({"constraints": 0, "value": None}, args.out)
        return 0
    if inst.q**inst.n <= args.budget:
        val, x = brute_force_value(inst, args.budget)
        exact = True
    elif args.heuristic:
        val, x = local_search_value(inst, stream(args.seed or 0, "value"))
        exact = False
    else:
        print(f"q^n = {inst.q ** inst.n} exceeds --budget; pass --heuristic for a lower bound", file=sys.stderr)
        return 2
    _emit({"constraints": inst.m, "value": str(val), "value_float": float(val), "assignment": [int(v) for v in x], "exact": exact}, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="csp-stream-lab", description="Streaming Max-CSP lower-bound laboratory.")
    ap.add_argument("--backend", choices=("numba", "numpy"), help="kernel implementation (default: numba when available)")
    sub = ap.add_subparsers(dest="command", required=True)

    for name in EXPERIMENTS:
        sp = sub.add_parser(name, help=f"run the {name} experiment")
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", help="output directory")
        if name == "verify-lemma":
            sp.add_argument("--name", choices=LEMMAS)
        sp.set_defaults(func=_run)

    sp = sub.add_parser("family", help="write a built-in family as JSON")
    sp.add_argument("--name", required=True)
    sp.add_argument("--q", type=int, required=True)
    sp.add_argument("--k", type=int)
    sp.add_argument("--params", help="JSON object of family parameters")
    sp.add_argument("--out")
    sp.set_defaults(func=_family)

    sp = sub.add_parser("rho", help="compute the minimax value of a family")
    sp.add_argument("--family", required=True)
    sp.add_argument("--tol", type=float, default=1e-6)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out")
    sp.set_defaults(func=_rho)

    sp = sub.add_parser("width", help="exact width of a family")
    sp.add_argument("--family", required=True)
    sp.add_argument("--out")
    sp.set_defaults(func=_width)

    sp = sub.add_parser("gen", help="sample a game instance")
    sp.add_argument("--game", choices=("irmd", "ifrmd"), default="irmd")
    sp.add_argument("--case", choices=("yes", "no"), required=True)
    sp.add_argument("--q", type=int, required=True)
    sp.add_argument("--k", type=int, required=True)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--T", type=int, required=True)
    sp.add_argument("--alpha", type=float, required=True)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out")
    sp.set_defaults(func=_gen)

    sp = sub.add_parser("fold", help="fold a folded-game instance into a plain-game instance")
    sp.add_argument("--instance", required=True)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out")
    sp.set_defaults(func=_fold)

    sp = sub.add_parser("reduce", help="turn a plain-game stream into a CSP instance")
    sp.add_argument("--instance", required=True)
    sp.add_argument("--family", required=True)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out")
    sp.set_defaults(func=_reduce)

    sp = sub.add_parser("value", help="optimum of a CSP instance")
    sp.add_argument("--instance", required=True)
    sp.add_argument("--family", help="family file when the instance stores a reference")
    sp.add_argument("--budget", type=int, default=2**24)
    sp.add_argument("--heuristic", action="store_true")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out")
    sp.set_defaults(func=_value)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.backend:
        kernels.set_backend(args.backend)
    try:
        return args.func(args)
    except (ConfigError, ValueError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

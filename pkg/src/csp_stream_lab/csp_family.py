"""Constraint functions over Z_q^k, their width, and the minimax value rho.

Truth tables use the package-wide little-endian index ``sum_i a_i q^i``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy.optimize import linprog

from .rng import stream


@dataclass(frozen=True, eq=False)
class CspFunction:
    q: int
    k: int
    table: np.ndarray
    name: str = ""

    def __post_init__(self):
        t = np.array(self.table, dtype=np.uint8, copy=True).ravel()
        if t.size != self.q**self.k:
            raise ValueError(f"table needs {self.q ** self.k} entries")
        if np.any(t > 1):
            raise ValueError("table entries must be bits")
        t.flags.writeable = False
        object.__setattr__(self, "table", t)

    def __call__(self, a: Sequence[int]) -> int:
        return int(self.table[_index(a, self.q)])

    @property
    def ones(self) -> int:
        return int(self.table.sum())

    def table_string(self) -> str:
        return "".join("1" if b else "0" for b in self.table)

    @staticmethod
    def from_predicate(q: int, k: int, pred, name: str = "") -> "CspFunction":
        table = np.zeros(q**k, dtype=np.uint8)
        for a in itertools.product(range(q), repeat=k):
            table[_index(a, q)] = 1 if pred(a) else 0
        return CspFunction(q, k, table, name)


@dataclass(frozen=True, eq=False)
class CspFamily:
    q: int
    k: int
    functions: tuple

    def __post_init__(self):
        funcs = tuple(self.functions)
        if not funcs:
            raise ValueError("a family needs at least one function")
        seen = set()
        for f in funcs:
            if (f.q, f.k) != (self.q, self.k):
                raise ValueError("all members must share q and k")
            key = f.table.tobytes()
            if key in seen:
                raise ValueError(f"duplicate table in family ({f.name})")
            seen.add(key)
        object.__setattr__(self, "functions", funcs)

    def __len__(self) -> int:
        return len(self.functions)

    def __getitem__(self, i: int) -> CspFunction:
        return self.functions[i]

    @property
    def tables(self) -> np.ndarray:
        return np.stack([f.table for f in self.functions]).astype(np.int32)

    def subfamily(self, indices: Sequence[int]) -> "CspFamily":
        return CspFamily(self.q, self.k, tuple(self.functions[i] for i in indices))

    def to_json(self) -> dict:
        return {
            "q": self.q,
            "k": self.k,
            "functions": [{"name": f.name, "table": f.table_string()} for f in self.functions],
        }

    @staticmethod
    def from_json(obj: dict) -> "CspFamily":
        q, k = int(obj["q"]), int(obj["k"])
        funcs = []
        for item in obj["functions"]:
            bits = np.array([int(ch) for ch in item["table"]], dtype=np.uint8)
            funcs.append(CspFunction(q, k, bits, item.get("name", "")))
        return CspFamily(q, k, tuple(funcs))


def _index(a: Sequence[int], q: int) -> int:
    return sum((int(x) % q) * q**i for i, x in enumerate(a))


# -------------------------------------------------------------------- width


def width(f: CspFunction) -> tuple[Fraction, tuple[int, ...]]:
    """Best diagonal-shift coverage of f and the shift b attaining it.

    Shifts are scanned in lexicographic order (first coordinate most
    significant), so ties resolve to the lexicographically smallest b.
    """
    q, k = f.q, f.k
    best, witness = -1, None
    for b in itertools.product(range(q), repeat=k):
        hits = sum(f.table[_index([bi + a for bi in b], q)] for a in range(q))
        if hits > best:
            best, witness = int(hits), tuple(b)
            if best == q:
                break
    return Fraction(best, q), witness


def family_width(F: CspFamily) -> Fraction:
    return min(width(f)[0] for f in F.functions)


# ----------------------------------------------------------------- builtins


def _dedupe(q: int, k: int, funcs: list) -> CspFamily:
    out, seen = [], set()
    for f in funcs:
        key = f.table.tobytes()
        if key not in seen:
            seen.add(key)
            out.append(f)
    return CspFamily(q, k, tuple(out))


def _is_prime(q: int) -> bool:
    return q >= 2 and all(q % d for d in range(2, int(math.isqrt(q)) + 1))


def _need_k(name: str, k: int | None, want: int) -> None:
    if k is not None and k != want:
        raise ValueError(f"{name} is defined for k={want} only")


def builtin_family(name: str, q: int, k: int | None = None, params: dict | None = None) -> CspFamily:
    """Construct one of the named example families.

    ``qcol``, ``ug``, ``ug-shift`` and ``less-than`` are binary (k = 2).
    ``lin`` takes ``params={"r": r, "shift_invariant": bool}`` and requires a
    prime q with 0 <= r < k; ``shift_invariant`` keeps only systems whose
    matrix annihilates the all-ones vector. ``keq`` has one function per
    offset vector (b_2, ..., b_k).
    """
    params = dict(params or {})
    if q < 2:
        raise ValueError("q must be at least 2")
    if name == "qcol":
        _need_k(name, k, 2)
        return CspFamily(q, 2, (CspFunction.from_predicate(q, 2, lambda a: a[0] != a[1], "neq"),))
    if name == "less-than":
        _need_k(name, k, 2)
        return CspFamily(q, 2, (CspFunction.from_predicate(q, 2, lambda a: a[0] < a[1], "lt"),))
    if name == "ug-shift":
        _need_k(name, k, 2)
        funcs = [
            CspFunction.from_predicate(q, 2, lambda a, s=s: a[0] == (a[1] + s) % q, f"shift{s}")
            for s in range(q)
        ]
        return CspFamily(q, 2, tuple(funcs))
    if name == "ug":
        _need_k(name, k, 2)
        if q > 7:
            raise ValueError("ug enumerates q! permutations; q <= 7 supported")
        funcs = []
        for perm in itertools.permutations(range(q)):
            label = "perm" + "".join(map(str, perm))
            funcs.append(CspFunction.from_predicate(q, 2, lambda a, p=perm: a[0] == p[a[1]], label))
        return CspFamily(q, 2, tuple(funcs))
    if name == "keq":
        if k is None or k < 1:
            raise ValueError("keq needs k >= 1")
        funcs = []
        for offs in itertools.product(range(q), repeat=k - 1):
            label = "keq" + "".join(map(str, offs))
            funcs.append(
                CspFunction.from_predicate(
                    q, k, lambda a, o=offs: all(a[t + 1] == (a[0] + o[t]) % q for t in range(k - 1)), label
                )
            )
        return CspFamily(q, k, tuple(funcs))
    if name == "lin":
        if k is None or k < 1:
            raise ValueError("lin needs k >= 1")
        r = int(params.get("r", 1))
        if not 0 <= r < k:
            raise ValueError("lin needs 0 <= r < k")
        if not _is_prime(q):
            raise ValueError("lin needs a prime modulus")
        return _linear_family(q, k, r, bool(params.get("shift_invariant", False)))
    raise ValueError(f"unknown family {name!r}")


def _linear_family(q: int, k: int, r: int, shift_invariant: bool) -> CspFamily:
    pts = np.array(list(itertools.product(range(q), repeat=k)), dtype=np.int64)[:, ::-1]
    # rows of pts are in index order: pts[i] is the vector with index i
    funcs = []
    for flat in itertools.product(range(q), repeat=r * k):
        A = np.array(flat, dtype=np.int64).reshape(r, k)
        if shift_invariant and np.any(A.sum(axis=1) % q):
            continue
        images = (pts @ A.T) % q
        for bi, b in enumerate(pts):
            table = np.all(images == images[bi], axis=1).astype(np.uint8)
            label = f"lin[A={A.tolist()},b={b.tolist()}]"
            funcs.append(CspFunction(q, k, table, label))
    return _dedupe(q, k, funcs)


# ---------------------------------------------------------------------- rho


@dataclass
class RhoCertificate:
    value: float
    outer: np.ndarray
    inner_witness: np.ndarray
    gap_estimate: float
    lower_bound: float
    converged: bool
    iterations: int = 0
    history: list = field(default_factory=list, repr=False)


@dataclass(frozen=True)
class RhoConfig:
    tolerance: float = 1e-6
    starts: int = 64
    grid_resolution: int = 64
    cut_resolution: int = 16
    max_iterations: int = 400
    ascent_iterations: int = 300
    seed: int = 0


def product_weights(D: np.ndarray, k: int) -> np.ndarray:
    """``D^{(x)k}`` as a length-q^k vector in index order (rows for a batch)."""
    D = np.atleast_2d(np.asarray(D, dtype=float))
    out = np.ones((D.shape[0], 1))
    for _ in range(k):
        out = (D[:, :, None] * out[:, None, :]).reshape(D.shape[0], -1)
    return out


def expectation(F: CspFamily, outer: np.ndarray, D: np.ndarray) -> float:
    """``E_{f ~ outer, a ~ D^k} f(a)``."""
    c = np.asarray(outer, dtype=float) @ F.tables
    return float(product_weights(D, F.k)[0] @ c)


def _simplex_grid(q: int, res: int) -> np.ndarray:
    bars = np.array(list(itertools.combinations(range(res + q - 1), q - 1)), dtype=np.int64).reshape(-1, q - 1)
    edges = np.concatenate(
        [np.full((len(bars), 1), -1), bars, np.full((len(bars), 1), res + q - 1)], axis=1
    )
    return (np.diff(edges, axis=1) - 1) / res


def _project_simplex(V: np.ndarray) -> np.ndarray:
    q = V.shape[1]
    U = -np.sort(-V, axis=1)
    css = np.cumsum(U, axis=1) - 1.0
    ind = np.arange(1, q + 1)
    cnt = (U - css / ind > 0).sum(axis=1)
    theta = css[np.arange(len(V)), cnt - 1] / cnt
    return np.maximum(V - theta[:, None], 0.0)


class _Polynomial:
    """The map D -> sum_a c(a) prod_i D(a_i), symmetrised so gradients are cheap."""

    def __init__(self, c: np.ndarray, q: int, k: int):
        T = np.asarray(c, dtype=float).reshape((q,) * k)
        if k > 1:
            perms = list(itertools.permutations(range(k)))
            T = sum(T.transpose(p) for p in perms) / len(perms)
        self.T, self.q, self.k = T, q, k

    def partial(self, D: np.ndarray) -> np.ndarray:
        Y = np.broadcast_to(self.T, (D.shape[0],) + self.T.shape)
        for _ in range(self.k - 1):
            Y = np.einsum("s...a,sa->s...", Y, D)
        return Y

    def value_grad(self, D: np.ndarray):
        Y = self.partial(D)
        return np.einsum("sa,sa->s", Y, D), self.k * Y


_STEPS = 4.0 ** -np.arange(-1, 12)


def _ascend(poly: _Polynomial, D: np.ndarray, iters: int):
    val, grad = poly.value_grad(D)
    for _ in range(iters):
        best_val, best_D = val.copy(), D.copy()
        for eta in _STEPS:
            cand = _project_simplex(D + eta * grad)
            v, _ = poly.value_grad(cand)
            better = v > best_val
            best_val[better] = v[better]
            best_D[better] = cand[better]
        gain = float(np.max(best_val - val))
        D = best_D
        val, grad = poly.value_grad(D)
        if gain < 1e-14:
            break
    return val, D


def inner_max(F: CspFamily, outer: np.ndarray, cfg: RhoConfig = RhoConfig(), rng=None):
    """Approximately maximise ``E_{f~outer, a~D^k} f(a)`` over D in the simplex.

    Returns ``(value, D, candidates)`` where ``candidates`` holds every local
    optimum reached (useful as extra cuts).
    """
    q, k = F.q, F.k
    c = np.asarray(outer, dtype=float) @ F.tables
    poly = _Polynomial(c, q, k)
    rng = rng if rng is not None else stream(cfg.seed, "inner")
    starts = [np.eye(q), np.full((1, q), 1.0 / q)]
    n_rand = max(cfg.starts - q - 1, 0)
    if n_rand:
        starts.append(rng.dirichlet(np.ones(q), size=n_rand))
    if q <= 4:
        grid = _simplex_grid(q, cfg.grid_resolution)
        gvals = product_weights(grid, k) @ c
        top = np.argsort(-gvals, kind="stable")[: min(8, len(grid))]
        starts.append(grid[top])
    D0 = np.concatenate(starts, axis=0)
    vals, D = _ascend(poly, D0, cfg.ascent_iterations)
    i = int(np.argmax(vals))
    return float(vals[i]), D[i], D


def rho(F: CspFamily, cfg: RhoConfig | None = None) -> RhoCertificate:
    """Minimax value ``min_{D_F} max_D E[f(a)]`` by a cutting-plane loop.

    The master LP keeps one linear cut per inner point D found so far, which
    yields a valid lower bound. Each inner solve at the LP optimum gives an
    upper bound (as good as the inner solver). Stops when the two meet.
    """
    cfg = cfg or RhoConfig()
    q, k = F.q, F.k
    tables = F.tables.astype(float)
    nf = len(F)
    for f in F.functions:
        if f.ones == 0:
            raise ValueError(f"function {f.name!r} is identically zero")
    res = cfg.cut_resolution if q <= 5 else 4
    cuts = [np.eye(q), np.full((1, q), 1.0 / q), _simplex_grid(q, res)]
    cut_rows = [product_weights(np.concatenate(cuts), k) @ tables.T]
    rng = stream(cfg.seed, "rho", nf, q, k)

    best_val, best_w, best_D = math.inf, None, None
    lower = -math.inf
    history = []
    converged = False
    it = 0
    c_obj = np.zeros(nf + 1)
    c_obj[-1] = 1.0
    a_eq = np.zeros((1, nf + 1))
    a_eq[0, :nf] = 1.0
    bounds = [(0, None)] * nf + [(None, None)]
    for it in range(1, cfg.max_iterations + 1):
        P = np.concatenate(cut_rows)
        a_ub = np.hstack([P, -np.ones((len(P), 1))])
        lp = linprog(c_obj, A_ub=a_ub, b_ub=np.zeros(len(P)), A_eq=a_eq, b_eq=[1.0], bounds=bounds, method="highs")
        if lp.status != 0:
            raise RuntimeError(f"master LP failed: {lp.message}")
        w = np.clip(lp.x[:nf], 0.0, None)
        w /= w.sum()
        lower = max(lower, float(lp.x[-1]))
        val, D, cands = inner_max(F, w, cfg, rng)
        if val < best_val:
            best_val, best_w, best_D = val, w, D
        history.append((lower, val))
        if best_val - lower <= cfg.tolerance:
            converged = True
            break
        cut_rows.append(product_weights(cands, k) @ tables.T)
    return RhoCertificate(
        value=best_val,
        outer=best_w,
        inner_witness=best_D,
        gap_estimate=max(best_val - lower, 0.0),
        lower_bound=lower,
        converged=converged,
        iterations=it,
        history=history,
    )

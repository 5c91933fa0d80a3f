"""Fourier analysis of complex-valued functions on Z_q^n.

Vectors ``a in Z_q^n`` are stored at index ``sum_i a_i q^i`` (coordinate 0 is
least significant) everywhere in this package, including file formats.

Conventions::

    fhat(u) = q^-n * sum_a f(a) * conj(w^(u.a)),   w = exp(2 pi i / q)
    f(a)    = sum_u fhat(u) * w^(u.a)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Iterable, Sequence

import numpy as np

from . import kernels

REL_TOL = 1e-9
ABS_TOL = 1e-12


# ------------------------------------------------------------------ indexing


def index_of(a: Sequence[int], q: int) -> int:
    idx = 0
    for i, ai in enumerate(a):
        idx += (int(ai) % q) * q**i
    return idx


def vector_of(idx: int, q: int, n: int) -> np.ndarray:
    return kernels.digits_of(np.array([idx]), q, n)[0]


@lru_cache(maxsize=64)
def _weights(q: int, n: int) -> np.ndarray:
    size = q**n
    w = np.zeros(size, dtype=np.int64)
    stride = 1
    for _ in range(n):
        w += ((np.arange(size) // stride) % q) != 0
        stride *= q
    w.flags.writeable = False
    return w


def weight_table(q: int, n: int) -> np.ndarray:
    """Hamming weight of every vector of Z_q^n, in index order."""
    return _weights(q, n)


@lru_cache(maxsize=64)
def _negation(q: int, n: int) -> np.ndarray:
    size = q**n
    neg = np.zeros(size, dtype=np.int64)
    stride = 1
    for _ in range(n):
        neg += ((-(np.arange(size) // stride)) % q) * stride
        stride *= q
    neg.flags.writeable = False
    return neg


def _shift_index(q: int, n: int, v: Sequence[int]) -> np.ndarray:
    """Index of u + v for every u."""
    size = q**n
    out = np.zeros(size, dtype=np.int64)
    stride = 1
    for i in range(n):
        out += (((np.arange(size) // stride) + int(v[i])) % q) * stride
        stride *= q
    return out


# --------------------------------------------------------------------- types


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=np.complex128, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class DenseFunction:
    """A function Z_q^n -> C stored as its full value table."""

    q: int
    n: int
    values: np.ndarray

    def __post_init__(self):
        if self.q < 2 or self.n < 0:
            raise ValueError("need q >= 2 and n >= 0")
        vals = _frozen(np.ravel(self.values))
        if vals.size != self.q**self.n:
            raise ValueError(f"expected {self.q ** self.n} values, got {vals.size}")
        object.__setattr__(self, "values", vals)

    @property
    def domain_size(self) -> int:
        return self.q**self.n

    @classmethod
    def constant(cls, q: int, n: int, c: complex = 1.0) -> "DenseFunction":
        return cls(q, n, np.full(q**n, c, dtype=np.complex128))

    def __call__(self, a: Sequence[int]) -> complex:
        return complex(self.values[index_of(a, self.q)])

    def support(self) -> np.ndarray:
        return np.flatnonzero(self.values != 0)

    def to_json(self) -> dict:
        return {
            "q": self.q,
            "n": self.n,
            "values": [[float(z.real), float(z.imag)] for z in self.values],
        }

    @staticmethod
    def from_json(obj: dict) -> "DenseFunction":
        if "members" in obj:
            return SetIndicator.from_members(obj["q"], obj["n"], obj["members"])
        vals = np.array([complex(re, im) for re, im in obj["values"]], dtype=np.complex128)
        return DenseFunction(int(obj["q"]), int(obj["n"]), vals)


@dataclass(frozen=True, eq=False)
class SetIndicator(DenseFunction):
    """Indicator of a subset B of Z_q^n."""

    def __post_init__(self):
        super().__post_init__()
        v = self.values
        if not np.all((v == 0) | (v == 1)):
            raise ValueError("indicator values must be 0 or 1")

    @classmethod
    def from_mask(cls, q: int, n: int, mask: np.ndarray) -> "SetIndicator":
        return cls(q, n, np.asarray(mask, dtype=bool).astype(np.complex128))

    @classmethod
    def from_members(cls, q: int, n: int, members: Iterable[int]) -> "SetIndicator":
        mask = np.zeros(q**n, dtype=bool)
        mask[np.asarray(list(members), dtype=np.int64)] = True
        return cls.from_mask(q, n, mask)

    @classmethod
    def full(cls, q: int, n: int) -> "SetIndicator":
        return cls.from_mask(q, n, np.ones(q**n, dtype=bool))

    @cached_property
    def mask(self) -> np.ndarray:
        m = self.values.real.astype(bool)
        m.flags.writeable = False
        return m

    @cached_property
    def size(self) -> int:
        return int(self.mask.sum())

    @property
    def members(self) -> np.ndarray:
        return np.flatnonzero(self.mask)

    def intersect(self, other: "SetIndicator") -> "SetIndicator":
        if (self.q, self.n) != (other.q, other.n):
            raise ValueError("dimension mismatch")
        return SetIndicator.from_mask(self.q, self.n, self.mask & other.mask)

    def to_json(self) -> dict:
        return {"q": self.q, "n": self.n, "members": [int(i) for i in self.members]}


@dataclass(frozen=True, eq=False)
class Spectrum:
    q: int
    n: int
    coeffs: np.ndarray

    def __post_init__(self):
        c = _frozen(np.ravel(self.coeffs))
        if c.size != self.q**self.n:
            raise ValueError("coefficient count must be q^n")
        object.__setattr__(self, "coeffs", c)

    def __getitem__(self, u: Sequence[int]) -> complex:
        return complex(self.coeffs[index_of(u, self.q)])


@dataclass(frozen=True)
class UcsParams:
    C: float
    s: int
    q: int
    n: int

    def __post_init__(self):
        if self.C <= 0:
            raise ValueError("C must be positive")
        if not 0 <= self.s <= self.n:
            raise ValueError("s must lie in [0, n]")


# ----------------------------------------------------------------- transform


@lru_cache(maxsize=32)
def _roots(q: int) -> np.ndarray:
    return np.exp(2j * np.pi * np.arange(q) / q)


def _forward_matrix(q: int) -> np.ndarray:
    ua = np.outer(np.arange(q), np.arange(q)) % q
    return np.conj(_roots(q)[ua]) / q


def _inverse_matrix(q: int) -> np.ndarray:
    ua = np.outer(np.arange(q), np.arange(q)) % q
    return _roots(q)[ua]


def _fwd(values: np.ndarray, q: int, n: int) -> np.ndarray:
    return kernels.zq_transform(values, q, n, _forward_matrix(q))


def _inv(values: np.ndarray, q: int, n: int) -> np.ndarray:
    return kernels.zq_transform(values, q, n, _inverse_matrix(q))


def dft(f: DenseFunction) -> Spectrum:
    return Spectrum(f.q, f.n, _fwd(f.values, f.q, f.n))


def idft(sp: Spectrum) -> DenseFunction:
    return DenseFunction(sp.q, sp.n, _inv(sp.coeffs, sp.q, sp.n))


def _check_same(f, g):
    if (f.q, f.n) != (g.q, g.n):
        raise ValueError(f"dimension mismatch: (q,n)={f.q, f.n} vs {g.q, g.n}")


def convolve(f: DenseFunction, g: DenseFunction) -> DenseFunction:
    """Group convolution ``(f * g)(a) = sum_v f(v) g(a - v)``, computed directly."""
    _check_same(f, g)
    return DenseFunction(f.q, f.n, kernels.convolve_direct(f.values, g.values, f.q, f.n))


# --------------------------------------------------------------- level sums


def level_mass(sp: Spectrum, v: Sequence[int] | None, h: int, power: int = 1) -> float:
    """Sum of ``|fhat(u)|**power`` over all u with ``||u + v||_0 == h``."""
    if not 0 <= h <= sp.n:
        raise ValueError(f"h={h} outside [0, {sp.n}]")
    return float(level_masses(sp, v, power)[h])


def level_masses(sp: Spectrum, v: Sequence[int] | None = None, power: int = 1) -> np.ndarray:
    """Vector of level masses for h = 0..n at a single shift v."""
    if power not in (1, 2):
        raise ValueError("power must be 1 or 2")
    w = weight_table(sp.q, sp.n)
    if v is not None and any(int(x) % sp.q for x in v):
        w = w[_shift_index(sp.q, sp.n, v)]
    mags = np.abs(sp.coeffs) ** power
    return np.bincount(w, weights=mags, minlength=sp.n + 1)


def max_shifted_level_mass(sp: Spectrum, hs: Iterable[int], power: int = 1):
    """Worst level mass over every shift v in Z_q^n, for each h in ``hs``.

    Uses ``L_h(v) = sum_u F(u) [|u+v| = h] = (F(-.) * W_h)(v)`` with
    ``W_h`` the weight-h indicator, so each h costs two transforms.

    Returns ``(maxima, argmax_indices)`` aligned with ``hs``.
    """
    q, n = sp.q, sp.n
    mags = np.abs(sp.coeffs) ** power
    flipped = mags[_negation(q, n)].astype(np.complex128)
    fhat = _fwd(flipped, q, n)
    w = weight_table(q, n)
    best, where = [], []
    for h in hs:
        if h < 0 or h > n:
            best.append(0.0)
            where.append(0)
            continue
        wh = (w == h).astype(np.complex128)
        table = _inv(q**n * fhat * _fwd(wh, q, n), q, n).real
        i = int(np.argmax(table))
        best.append(max(float(table[i]), 0.0))
        where.append(i)
    return np.array(best), np.array(where, dtype=np.int64)


def ucs_bound(p: UcsParams, h: int) -> float:
    """The growth envelope U_{C,s}(h)."""
    if not 0 <= h <= p.n:
        raise ValueError(f"h={h} outside [0, {p.n}]")
    if h == 0:
        return 1.0
    if h <= p.s:
        return (p.C * math.sqrt(p.s * p.n) / h) ** (h / 2)
    return (2 * p.q**2 * math.e**2 * p.n / h) ** (h / 2)


def high_level_bound(q: int, n: int, h: int) -> float:
    return (2 * q**2 * math.e**2 * n / h) ** (h / 2)


# --------------------------------------------------------- noise and norms


def noise_operator(f: DenseFunction, rho: float) -> DenseFunction:
    if not 0.0 <= rho <= 1.0:
        raise ValueError("rho must lie in [0, 1]")
    sp = dft(f)
    damp = float(rho) ** weight_table(f.q, f.n)
    return idft(Spectrum(f.q, f.n, sp.coeffs * damp))


def lp_norm(f: DenseFunction, p: float, convention: str = "sum") -> float:
    """``(sum |f|^p)^(1/p)`` or, with ``convention="expectation"``, ``(E |f|^p)^(1/p)``."""
    total = float(np.sum(np.abs(f.values) ** p))
    if convention == "expectation":
        total /= f.domain_size
    elif convention != "sum":
        raise ValueError("convention must be 'sum' or 'expectation'")
    return total ** (1.0 / p)


def distance_to_uniform_sq(f: DenseFunction) -> float:
    """Squared (sum-normalised) 2-distance between f and the uniform density."""
    return float(np.sum(np.abs(f.values - 1.0 / f.domain_size) ** 2))


def hypercontractive_rho(p: float, q: int) -> float:
    """Largest noise rate for which ``||T_rho f||_2 <= ||f||_p`` holds on Z_q^n (1 < p <= 2)."""
    return math.sqrt(p - 1.0) * (1.0 / q) ** (1.0 / p - 0.5)


@dataclass
class HypercontractivityReport:
    b: int
    zeta: float
    support_size: int
    rows: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r["pass"] and r["noise_pass"] for r in self.rows)

    @property
    def worst_ratio(self) -> float:
        return max((r["ratio"] for r in self.rows), default=0.0)


def hypercontractivity_check(
    f: DenseFunction, b: int, zeta: float = 6.0, shifts: str = "all"
) -> HypercontractivityReport:
    """Check the level-h second-moment bound for a function of bounded modulus.

    For B = supp(f) with ``|B| >= q^(n-b)`` and each h in 1..4b this tests

        (q^(2n) / |B|^2) * sum_{|u+v| = h} |fhat(u)|^2  <=  (zeta * b / h)^h

    for the worst shift v (``shifts="all"``) or v = 0 (``shifts="zero"``).
    Each row also records the noise-operator inequality at
    ``p = 1 + h/(zeta b)`` with expectation-normalised norms.
    """
    if b < 1:
        raise ValueError("b must be a positive integer")
    if np.max(np.abs(f.values), initial=0.0) > 1.0 + REL_TOL:
        raise ValueError("f must take values of modulus at most 1")
    q, n = f.q, f.n
    support = int(np.count_nonzero(f.values))
    need = q ** max(n - b, 0)
    if support < need:
        raise ValueError(f"support size {support} below q^(n-b) = {need}")
    sp = dft(f)
    hs = list(range(1, 4 * b + 1))
    if shifts == "all":
        lhs_raw, where = max_shifted_level_mass(sp, hs, power=2)
    elif shifts == "zero":
        masses = level_masses(sp, None, power=2)
        lhs_raw = np.array([masses[h] if h <= n else 0.0 for h in hs])
        where = np.zeros(len(hs), dtype=np.int64)
    else:
        raise ValueError("shifts must be 'all' or 'zero'")
    scale = float(q) ** (2 * n) / support**2
    w = weight_table(q, n)
    energy = np.abs(sp.coeffs) ** 2
    rep = HypercontractivityReport(b=b, zeta=zeta, support_size=support)
    for h, raw, v in zip(hs, lhs_raw, where):
        lhs = scale * float(raw)
        rhs = (zeta * b / h) ** h
        p = 1.0 + h / (zeta * b)
        rho = hypercontractive_rho(p, q)
        noisy = math.sqrt(float(np.sum(energy * rho ** (2 * w))))
        pnorm = lp_norm(f, p, "expectation")
        rep.rows.append(
            {
                "h": h,
                "lhs": lhs,
                "rhs": rhs,
                "ratio": lhs / rhs,
                "shift_index": int(v),
                "pass": lhs <= rhs * (1 + REL_TOL) + ABS_TOL,
                "p": p,
                "rho": rho,
                "noise_lhs": noisy,
                "noise_rhs": pnorm,
                "noise_pass": noisy <= pnorm * (1 + REL_TOL) + ABS_TOL,
            }
        )
    return rep

"""Slow reference implementations used only by the tests."""

import itertools
from fractions import Fraction

import numpy as np


def points(q, n):
    """All of Z_q^n in index order (coordinate 0 least significant)."""
    return [tuple(reversed(p)) for p in itertools.product(range(q), repeat=n)]


def naive_dft(values, q, n):
    pts = points(q, n)
    w = np.exp(2j * np.pi / q)
    out = np.zeros(len(pts), complex)
    for iu, u in enumerate(pts):
        acc = 0j
        for ia, a in enumerate(pts):
            acc += values[ia] * np.conj(w ** (sum(x * y for x, y in zip(u, a)) % q))
        out[iu] = acc / q**n
    return out


def index(a, q):
    return sum(int(x) * q**i for i, x in enumerate(a))


def naive_convolve(f, g, q, n):
    pts = points(q, n)
    out = np.zeros(len(pts), complex)
    for ix, x in enumerate(pts):
        for iy, y in enumerate(pts):
            out[ix] += f[iy] * g[index([(a - b) % q for a, b in zip(x, y)], q)]
    return out


def naive_product_spectrum(fh, gh, q, n):
    pts = points(q, n)
    out = np.zeros(len(pts), complex)
    for iu, u in enumerate(pts):
        for iv, v in enumerate(pts):
            out[iu] += fh[iv] * gh[index([(a - b) % q for a, b in zip(u, v)], q)]
    return out


def weight(idx, q, n):
    return sum(1 for i in range(n) if (idx // q**i) % q)


def max_csp_value(q, n, tables, fidx, cvars):
    best = -1
    for x in itertools.product(range(q), repeat=n):
        s = sum(int(tables[f][index([x[v] for v in vs], q)]) for f, vs in zip(fidx, cvars))
        best = max(best, s)
    return Fraction(best, len(fidx))

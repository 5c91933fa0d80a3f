"""Hot loops, each in a numba flavour and a pure-numpy flavour.

The public names dispatch on :data:`BACKEND`, which defaults to ``"numba"``
when numba imports and JIT is not disabled by environment. Both flavours
return identical results; the test suite checks this directly.
"""

from __future__ import annotations

import numpy as np

from ._accel import HAVE_NUMBA, njit

BACKEND = "numba" if HAVE_NUMBA else "numpy"
_CHUNK = 1 << 16


def set_backend(name: str) -> None:
    global BACKEND
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is unavailable")
    BACKEND = name


def _jit() -> bool:
    return BACKEND == "numba"


def digits_of(idx: np.ndarray, q: int, n: int) -> np.ndarray:
    """Little-endian base-q digits of each index, shape ``(len(idx), n)``."""
    idx = np.asarray(idx, dtype=np.int64)
    powers = q ** np.arange(n, dtype=np.int64)
    return (idx[:, None] // powers[None, :]) % q


# ---------------------------------------------------------------- transforms


@njit
def _radix_pass_jit(x, q, stride, mat):
    size = x.shape[0]
    out = np.empty_like(x)
    block = q * stride
    tmp = np.empty(q, np.complex128)
    for start in range(0, size, block):
        for low in range(stride):
            base = start + low
            for a in range(q):
                tmp[a] = x[base + a * stride]
            for u in range(q):
                acc = 0j
                for a in range(q):
                    acc += mat[u, a] * tmp[a]
                out[base + u * stride] = acc
    return out


def _radix_pass_numpy(x, q, stride, mat):
    size = x.shape[0]
    y = x.reshape(size // (q * stride), q, stride)
    return np.einsum("ua,bas->bus", mat, y).reshape(size)


def zq_transform(values: np.ndarray, q: int, n: int, mat: np.ndarray) -> np.ndarray:
    """Apply the q x q matrix ``mat`` along every coordinate of Z_q^n."""
    x = np.ascontiguousarray(values, dtype=np.complex128)
    mat = np.ascontiguousarray(mat, dtype=np.complex128)
    step = _radix_pass_jit if _jit() else _radix_pass_numpy
    stride = 1
    for _ in range(n):
        x = step(x, q, stride, mat)
        stride *= q
    return x


@njit
def _convolve_jit(f, g, q, n):
    size = f.shape[0]
    out = np.zeros(size, np.complex128)
    dv = np.zeros(n, np.int64)
    dj = np.zeros(n, np.int64)
    for a in range(size):
        # walk v through Z_q^n as an odometer while tracking j = a - v digit-wise
        r = a
        for i in range(n):
            dj[i] = r % q
            dv[i] = 0
            r //= q
        j = a
        acc = 0j
        for v in range(size):
            acc += f[v] * g[j]
            i = 0
            p = 1
            while i < n:
                dv[i] += 1
                if dj[i] == 0:
                    dj[i] = q - 1
                    j += (q - 1) * p
                else:
                    dj[i] -= 1
                    j -= p
                if dv[i] < q:
                    break
                dv[i] = 0
                i += 1
                p *= q
        out[a] = acc
    return out


def _convolve_numpy(f, g, q, n):
    size = f.shape[0]
    idx = np.arange(size, dtype=np.int64)
    dig = digits_of(idx, q, n)
    powers = q ** np.arange(n, dtype=np.int64)
    out = np.zeros(size, np.complex128)
    for v in range(size):
        if f[v] == 0:
            continue
        diff = ((dig - dig[v]) % q) @ powers
        out += f[v] * g[diff]
    return out


def convolve_direct(f: np.ndarray, g: np.ndarray, q: int, n: int) -> np.ndarray:
    """``(f * g)(a) = sum_v f(v) g(a - v)`` evaluated straight from the definition."""
    f = np.ascontiguousarray(f, dtype=np.complex128)
    g = np.ascontiguousarray(g, dtype=np.complex128)
    return _convolve_jit(f, g, q, n) if _jit() else _convolve_numpy(f, g, q, n)


# ------------------------------------------------------------ linear images


@njit
def _images_jit(mat, q, n):
    rows = mat.shape[0]
    size = q**n
    out = np.empty(size, np.int64)
    x = np.zeros(n, np.int64)
    acc = np.zeros(rows, np.int64)
    for idx in range(size):
        code = 0
        p = 1
        for r in range(rows):
            code += (acc[r] % q) * p
            p *= q
        out[idx] = code
        j = 0
        while j < n:
            x[j] += 1
            if x[j] < q:
                for r in range(rows):
                    acc[r] += mat[r, j]
                break
            for r in range(rows):
                acc[r] -= mat[r, j] * (q - 1)
            x[j] = 0
            j += 1
    return out


def _images_numpy(mat, q, n):
    size = q**n
    rows = mat.shape[0]
    out = np.empty(size, np.int64)
    rpow = q ** np.arange(rows, dtype=np.int64)
    for lo in range(0, size, _CHUNK):
        idx = np.arange(lo, min(size, lo + _CHUNK), dtype=np.int64)
        out[lo : lo + idx.size] = ((digits_of(idx, q, n) @ mat.T) % q) @ rpow
    return out


def linear_images(mat: np.ndarray, q: int, n: int) -> np.ndarray:
    """Index of ``mat @ x mod q`` (little-endian over rows) for every x in Z_q^n."""
    mat = np.ascontiguousarray(np.asarray(mat, dtype=np.int64) % q)
    if mat.shape[1] != n:
        raise ValueError("matrix width does not match n")
    return _images_jit(mat, q, n) if _jit() else _images_numpy(mat, q, n)


# ------------------------------------------------------- CSP satisfaction


@njit
def _sat_counts_jit(q, n, tables, fidx, cvars):
    size = q**n
    m, k = cvars.shape
    out = np.zeros(size, np.int32)
    x = np.zeros(n, np.int64)
    for idx in range(size):
        c = 0
        for i in range(m):
            t = 0
            p = 1
            for j in range(k):
                t += x[cvars[i, j]] * p
                p *= q
            c += tables[fidx[i], t]
        out[idx] = c
        j = 0
        while j < n:
            x[j] += 1
            if x[j] < q:
                break
            x[j] = 0
            j += 1
    return out


def _sat_counts_numpy(q, n, tables, fidx, cvars):
    size = q**n
    m, k = cvars.shape
    kpow = q ** np.arange(k, dtype=np.int64)
    out = np.zeros(size, np.int32)
    for lo in range(0, size, _CHUNK):
        idx = np.arange(lo, min(size, lo + _CHUNK), dtype=np.int64)
        dig = digits_of(idx, q, n)
        acc = np.zeros(idx.size, np.int32)
        for i in range(m):
            acc += tables[fidx[i], dig[:, cvars[i]] @ kpow]
        out[lo : lo + idx.size] = acc
    return out


def satisfied_counts(q: int, n: int, tables: np.ndarray, fidx: np.ndarray, cvars: np.ndarray) -> np.ndarray:
    """Number of satisfied constraints for every assignment in Z_q^n."""
    tables = np.ascontiguousarray(tables, dtype=np.int32)
    fidx = np.ascontiguousarray(fidx, dtype=np.int64)
    cvars = np.ascontiguousarray(cvars, dtype=np.int64).reshape(len(fidx), -1)
    if _jit():
        return _sat_counts_jit(q, n, tables, fidx, cvars)
    return _sat_counts_numpy(q, n, tables, fidx, cvars)


# ------------------------------------------- random matching positions


@njit
def _unrank_jit(draws):
    trials, h = draws.shape
    out = np.empty_like(draws)
    chosen = np.empty(h, np.int64)
    for t in range(trials):
        for i in range(h):
            v = draws[t, i]
            # chosen[:i] is sorted ascending
            pos = 0
            while pos < i and chosen[pos] <= v:
                v += 1
                pos += 1
            for s in range(i, pos, -1):
                chosen[s] = chosen[s - 1]
            chosen[pos] = v
            out[t, i] = v
    return out


def _unrank_numpy(draws):
    trials, h = draws.shape
    out = np.empty_like(draws)
    for i in range(h):
        v = draws[:, i].copy()
        if i:
            prev = np.sort(out[:, :i], axis=1)
            for c in range(i):
                v += v >= prev[:, c]
        out[:, i] = v
    return out


def distinct_positions(n: int, h: int, trials: int, rng: np.random.Generator) -> np.ndarray:
    """Positions of h fixed items in ``trials`` independent uniform permutations of [n]."""
    if h > n:
        raise ValueError("h > n")
    draws = np.empty((trials, h), dtype=np.int64)
    for i in range(h):
        draws[:, i] = rng.integers(0, n - i, size=trials)
    return _unrank_jit(draws) if _jit() else _unrank_numpy(draws)


@njit
def _classify_jit(pos, vals, k, km, q):
    trials, u = pos.shape
    kappa = np.zeros(trials, np.int64)
    eta = np.zeros(trials, np.int64)
    odd = np.zeros(trials, np.int64)
    edge = np.empty(u, np.int64)
    for t in range(trials):
        for i in range(u):
            edge[i] = pos[t, i] // k if pos[t, i] < km else -1
        for i in range(u):
            if edge[i] < 0:
                continue
            first = True
            for j in range(i):
                if edge[j] == edge[i]:
                    first = False
                    break
            if not first:
                continue
            cnt = 0
            s = 0
            for j in range(i, u):
                if edge[j] == edge[i]:
                    cnt += 1
                    s += vals[j]
            if s % q != 0:
                kappa[t] += 1
                odd[t] += cnt
            else:
                eta[t] += cnt
    return kappa, eta, odd


def _classify_numpy(pos, vals, k, km, q):
    edge = np.where(pos < km, pos // k, -1)
    matched = edge >= 0
    same = (edge[:, :, None] == edge[:, None, :]) & matched[:, :, None] & matched[:, None, :]
    sums = (same * vals[None, None, :]).sum(axis=2) % q
    is_odd = matched & (sums != 0)
    is_even = matched & (sums == 0)
    earlier = np.tril(np.ones((pos.shape[1],) * 2, dtype=bool), -1)
    first = ~(same & earlier[None, :, :]).any(axis=2)
    kappa = (is_odd & first).sum(axis=1)
    return kappa.astype(np.int64), is_even.sum(axis=1).astype(np.int64), is_odd.sum(axis=1).astype(np.int64)


def classify_support(pos: np.ndarray, vals: np.ndarray, k: int, km: int, q: int):
    """Per trial, the counts (kappa, eta, o) for a vector whose support sits at ``pos``.

    ``pos[t, i]`` is the permutation position of the i-th support vertex; the
    vertex is matched iff the position is below ``km`` and its edge is
    ``pos // k``.
    """
    pos = np.ascontiguousarray(pos, dtype=np.int64)
    vals = np.ascontiguousarray(vals, dtype=np.int64)
    if _jit():
        return _classify_jit(pos, vals, k, km, q)
    return _classify_numpy(pos, vals, k, km, q)

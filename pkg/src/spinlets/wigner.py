"""Wigner d-matrices, spin-weighted spherical harmonics and the degree-l kernel.

Conventions (fixed here, consumed everywhere else):

    Y_lms(theta, phi) = (-1)^m sqrt((2l+1)/4pi) exp(i m phi) d^l_{-m,s}(theta)

with d^l_{m,n} the standard Wigner small-d matrix, d^l_{m,n}(0) = delta_{mn},
d^1_{00}(beta) = cos(beta).  For s = 0 this reduces to the usual scalar
spherical harmonic with Condon-Shortley phase.

d-values are computed by a three-term recursion in degree l at fixed (m, n),
seeded at l = max(|m|, |n|) with the closed-form boundary element (evaluated
in log space so high degrees neither overflow nor underflow).  Everything is
a pure function; there is no shared mutable state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .errors import IndexOutOfRangeError, InvalidDegreeError


@dataclass(frozen=True)
class SphPoint:
    """Point on the unit sphere: colatitude theta in [0, pi], longitude phi.

    phi is normalized into [0, 2pi).
    """

    theta: float
    phi: float

    def __post_init__(self):
        if not 0.0 <= self.theta <= math.pi:
            raise ValueError(f"theta={self.theta} outside [0, pi]")
        object.__setattr__(self, "phi", float(self.phi) % (2.0 * math.pi))

    def unit_vector(self) -> np.ndarray:
        st = math.sin(self.theta)
        return np.array([st * math.cos(self.phi), st * math.sin(self.phi),
                         math.cos(self.theta)])


@dataclass(frozen=True)
class WignerDSlice:
    """All rows d^l_{m,n}(beta), m = -l..l, at fixed degree l and column n."""

    l: int
    n: int
    beta: float
    values: np.ndarray  # shape (2l+1,), index m + l

    def value(self, m: int) -> float:
        if abs(m) > self.l:
            raise IndexOutOfRangeError(f"|m|={abs(m)} > l={self.l}")
        return float(self.values[m + self.l])


def _check_indices(l, m, n):
    if l < 0:
        raise InvalidDegreeError(f"l={l} must be >= 0")
    if abs(m) > l or abs(n) > l:
        raise IndexOutOfRangeError(f"indices (m={m}, n={n}) out of range for l={l}")


def _endpoint_d(l, m, n, beta):
    # beta = 0 and beta = pi are exact Kronecker/parity cases; the recursion
    # coefficients would hit 0/0 there.
    if beta == 0.0:
        return 1.0 if m == n else 0.0
    return (-1.0) ** (l - n) if m == -n else 0.0


def _log_half_angle(beta):
    # log cos(beta/2), log sin(beta/2) for beta strictly inside (0, pi)
    return math.log(math.cos(0.5 * beta)), math.log(math.sin(0.5 * beta))


def _log_binom(a, b):
    return float(gammaln(a + 1) - gammaln(b + 1) - gammaln(a - b + 1))


def _column_seed(n, m_arr, lc, ls):
    """d^{|n|}_{m,n} for all |m| <= |n|, the first row of the l-recursion."""
    l0 = abs(n)
    m = np.asarray(m_arr, dtype=np.int64)
    if n >= 0:
        logmag = 0.5 * (gammaln(2 * l0 + 1) - gammaln(l0 + m + 1)
                        - gammaln(l0 - m + 1)) + (l0 + m) * lc + (l0 - m) * ls
        sign = np.ones_like(m, dtype=np.float64)
    else:
        logmag = 0.5 * (gammaln(2 * l0 + 1) - gammaln(l0 - m + 1)
                        - gammaln(l0 + m + 1)) + (l0 - m) * lc + (l0 + m) * ls
        sign = np.where((m + l0) % 2 == 0, 1.0, -1.0)
    return sign * np.exp(logmag)


def _row_seeds(l, n, lc, ls):
    """d^l_{+l,n} and d^l_{-l,n}: elements entering the recursion at degree l."""
    top = (-1.0) ** (l - n) * math.exp(
        0.5 * _log_binom(2 * l, l + n) + (l + n) * lc + (l - n) * ls)
    bot = math.exp(0.5 * _log_binom(2 * l, l - n) + (l - n) * lc + (l + n) * ls)
    return top, bot


def wigner_d(l: int, m: int, n: int, beta: float) -> float:
    """Wigner small-d matrix element d^l_{m,n}(beta), beta in [0, pi]."""
    _check_indices(l, m, n)
    if not 0.0 <= beta <= math.pi:
        raise ValueError(f"beta={beta} outside [0, pi]")
    if beta == 0.0 or beta == math.pi:
        return _endpoint_d(l, m, n, beta)

    lc, ls = _log_half_angle(beta)
    l0 = max(abs(m), abs(n))
    if abs(n) >= abs(m):
        d_cur = float(_column_seed(n, np.array([m]), lc, ls)[0])
    else:
        top, bot = _row_seeds(l0, n, lc, ls)
        d_cur = top if m > 0 else bot
    if l == l0:
        return d_cur

    x = math.cos(beta)
    d_prev = 0.0
    for k in range(l0, l):
        if k == 0:  # only reachable for m = n = 0: Legendre step P1 = x
            d_prev, d_cur = d_cur, x * d_cur
            continue
        c_next = k * math.sqrt(((k + 1) ** 2 - m * m) * ((k + 1) ** 2 - n * n))
        c_cur = (2 * k + 1) * (k * (k + 1) * x - m * n)
        c_prev = (k + 1) * math.sqrt((k * k - m * m) * (k * k - n * n))
        d_prev, d_cur = d_cur, (c_cur * d_cur - c_prev * d_prev) / c_next
    return d_cur


def iter_d_slices(L: int, n: int, theta):
    """Yield (l, d) for l = |n| .. L, d of shape (2l+1, ntheta): d^l_{m,n}(theta).

    One upward sweep of the degree recursion, vectorized over the row index m
    and over the colatitudes; no per-m restarts.  theta values must lie
    strictly inside (0, pi) (endpoints are handled by callers via the exact
    Kronecker/parity forms).
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
    if theta.size and (theta.min() <= 0.0 or theta.max() >= math.pi):
        raise ValueError("iter_d_slices needs theta strictly inside (0, pi)")
    x = np.cos(theta)
    lc = np.log(np.cos(0.5 * theta))
    ls = np.log(np.sin(0.5 * theta))
    nth = theta.size
    l0 = abs(n)

    cur = np.zeros((2 * L + 1, nth))
    prev = np.zeros_like(cur)
    m_all = np.arange(-L, L + 1)

    # seed row of the sweep: l = |n|, all |m| <= |n|
    sl0 = slice(L - l0, L + l0 + 1)
    if l0 > 0:
        mcol = m_all[sl0]
        if n >= 0:
            logmag = (0.5 * (gammaln(2 * l0 + 1) - gammaln(l0 + mcol + 1)
                             - gammaln(l0 - mcol + 1))[:, None]
                      + np.outer(l0 + mcol, lc) + np.outer(l0 - mcol, ls))
            sign = np.ones(mcol.size)
        else:
            logmag = (0.5 * (gammaln(2 * l0 + 1) - gammaln(l0 - mcol + 1)
                             - gammaln(l0 + mcol + 1))[:, None]
                      + np.outer(l0 - mcol, lc) + np.outer(l0 + mcol, ls))
            sign = np.where((mcol + l0) % 2 == 0, 1.0, -1.0)
        cur[sl0] = sign[:, None] * np.exp(logmag)
    else:
        cur[L] = 1.0
    yield l0, cur[sl0]

    for l in range(l0, L):
        nxt = np.zeros_like(cur)
        sl = slice(L - l, L + l + 1)
        m = m_all[sl]
        if l == 0:  # degenerate first step (m = n = 0): Legendre P1 = x
            nxt[L] = x * cur[L]
        else:
            c_next = l * np.sqrt(((l + 1) ** 2 - m * m) * ((l + 1) ** 2 - n * n))
            c_cur = (2 * l + 1) * (l * (l + 1) * x[None, :] - (m * n)[:, None])
            c_prev = (l + 1) * np.sqrt(
                np.maximum((l * l - m * m) * (l * l - n * n), 0))
            nxt[sl] = (c_cur * cur[sl] - c_prev[:, None] * prev[sl]) / c_next[:, None]
        # rows |m| = l+1 enter with their closed-form boundary values
        logc = 0.5 * _log_binom(2 * (l + 1), l + 1 + n)
        nxt[L + l + 1] = (-1.0) ** (l + 1 - n) * np.exp(
            logc + (l + 1 + n) * lc + (l + 1 - n) * ls)
        logc = 0.5 * _log_binom(2 * (l + 1), l + 1 - n)
        nxt[L - l - 1] = np.exp(logc + (l + 1 - n) * lc + (l + 1 + n) * ls)
        prev, cur = cur, nxt
        yield l + 1, cur[slice(L - l - 1, L + l + 2)]


def wigner_d_slice(l: int, n: int, beta: float) -> WignerDSlice:
    """All d^l_{m,n}(beta) for m = -l..l in a single recursion sweep."""
    _check_indices(l, 0, n)
    if not 0.0 <= beta <= math.pi:
        raise ValueError(f"beta={beta} outside [0, pi]")
    if beta == 0.0 or beta == math.pi:
        vals = np.array([_endpoint_d(l, m, n, beta) for m in range(-l, l + 1)])
        return WignerDSlice(l=l, n=n, beta=beta, values=vals)
    for ll, d in iter_d_slices(l, n, np.array([beta])):
        if ll == l:
            return WignerDSlice(l=l, n=n, beta=beta, values=d[:, 0].copy())
    raise AssertionError("unreachable")


def d_table(L: int, n: int, theta) -> np.ndarray:
    """Dense table t[l, m + L, i] = d^l_{m,n}(theta_i) for l = 0..L.

    Rows with l < |n| or |m| > l are zero.  Used to batch harmonic sums over
    product grids; see spinlets.transform.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
    table = np.zeros((L + 1, 2 * L + 1, theta.size))
    for l, d in iter_d_slices(L, n, theta):
        table[l, L - l:L + l + 1, :] = d
    return table


def spin_sph_harm(l: int, m: int, s: int, p: SphPoint) -> complex:
    """Spin-s spherical harmonic Y_lms at p (scalar Y_lm when s = 0)."""
    if l < abs(s):
        raise InvalidDegreeError(f"l={l} < |s|={abs(s)}")
    _check_indices(l, m, s)
    norm = math.sqrt((2 * l + 1) / (4.0 * math.pi))
    d = wigner_d(l, -m, s, p.theta)
    return (-1.0) ** m * norm * complex(math.cos(m * p.phi),
                                        math.sin(m * p.phi)) * d


def kernel_K(l: int, s: int, p: SphPoint, q: SphPoint) -> complex:
    """Reproducing kernel K^ls(p, q) = sum_m Y_lms(p) conj(Y_lms(q)).

    Direct summation over m; at p = q this is (2l+1)/4pi by the addition
    theorem.
    """
    if l < abs(s):
        raise InvalidDegreeError(f"l={l} < |s|={abs(s)}")
    dp = wigner_d_slice(l, s, p.theta).values
    dq = wigner_d_slice(l, s, q.theta).values
    m = np.arange(-l, l + 1)
    # (-1)^m phases cancel between Y(p) and conj(Y(q)); mu = -m reindexes the
    # slice arrays, which run over the row index of d^l_{., s}.
    phase = np.exp(1j * m * (p.phi - q.phi))
    norm = (2 * l + 1) / (4.0 * math.pi)
    return complex(norm * np.sum(phase * dp[::-1] * dq[::-1]))

"""Interval functions, lowpass kernels and their inner products.

``pi_i`` is the indicator of ``[t_{i-1}, t_i)`` and ``f_i = phi * pi_i``.
Inner products are available three ways:

* ``exact_fourier``: the periodic Gram from Fourier coefficients;
* ``analytic_h``: the four-term identity applied to ``h`` (or to the
  growth-controlled ``hbar``), which lives on the real line;
* ``table``: the same identity read from a tabulated ``hbar`` on the
  quantized time grid.

Indexing is zero-based throughout: interval ``i`` is ``[t[i], t[i+1])``.

With ``W = |Phi|**2`` the kernel power response,

    h(t) = (1/pi) int_0^inf W(w) (1 - cos(w t)) / w**2 dw,

which for the ideal kernel is ``t Si(pi t)/pi - (1 - cos(pi t))/pi**2``.
"""

from __future__ import annotations

import csv
import io
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import special

from .errors import InvalidArgument, TableRangeError
from .signal import harmonic_limit

__all__ = [
    "LowpassKernel",
    "IDEAL",
    "GramProvider",
    "HTable",
    "response",
    "response_sq",
    "band_limit",
    "pi_fourier",
    "pi_matrix",
    "synthesis_matrix",
    "gram_exact",
    "h_eval",
    "hbar_eval",
    "growth",
    "four_term",
    "gram_from_h",
    "gram_h_matrix",
    "build_table",
    "banded_gram",
    "band_mask",
    "lazar_cross_gram",
    "line_gram",
    "analytic_line_gram",
]

_GL_NODES = 400


@dataclass(frozen=True)
class LowpassKernel:
    """Flat passband on ``|w| <= pi``; ideal cutoff or a cosine transition to ``r pi``."""

    kind: str = "ideal"
    rolloff_r: float | None = None

    def __post_init__(self):
        if self.kind == "ideal":
            if self.rolloff_r is not None:
                raise InvalidArgument("ideal kernel takes no rolloff factor")
        elif self.kind == "cosine_rolloff":
            if self.rolloff_r is None or not self.rolloff_r > 1:
                raise InvalidArgument("cosine_rolloff needs rolloff_r > 1")
        else:
            raise InvalidArgument(f"unknown kernel kind {self.kind!r}")

    @property
    def omega_max(self) -> float:
        return np.pi if self.kind == "ideal" else self.rolloff_r * np.pi

    @property
    def code(self) -> int:
        return 0 if self.kind == "ideal" else 1


IDEAL = LowpassKernel()


def response(kernel: LowpassKernel, w) -> np.ndarray:
    """Amplitude response ``Phi(w)`` (real, even)."""
    w0 = np.asarray(w, dtype=float)
    w = np.abs(np.atleast_1d(w0))
    out = (w <= np.pi).astype(float)
    if kernel.kind == "cosine_rolloff":
        r = kernel.rolloff_r
        tr = (w > np.pi) & (w < r * np.pi)
        u = (w[tr] - np.pi) / ((r - 1) * np.pi)
        out[tr] = np.cos(0.5 * np.pi * u) ** 2
    return out.reshape(w0.shape)


def response_sq(kernel: LowpassKernel, w) -> np.ndarray:
    return response(kernel, w) ** 2


def band_limit(kernel: LowpassKernel, period: float) -> int:
    """Highest harmonic with a nonzero response."""
    K = harmonic_limit(period, kernel.omega_max)
    if kernel.kind == "cosine_rolloff" and 2 * np.pi * K / period >= kernel.omega_max:
        K -= 1
    return K


# ---------------------------------------------------------------- Fourier side

def pi_fourier(samples, i: int, period: float | None = None, K: int | None = None) -> np.ndarray:
    """Fourier coefficients ``k = -K..K`` of the indicator of interval ``i``."""
    if not 0 <= i < samples.N:
        raise InvalidArgument(f"interval index {i} out of range 0..{samples.N - 1}")
    P = samples.period if period is None else period
    K = harmonic_limit(P) if K is None else K
    k = np.arange(-K, K + 1)
    w = 2 * np.pi * k / P
    a, b = samples.t[i], samples.t[i + 1]
    out = np.empty(2 * K + 1, dtype=complex)
    nz = k != 0
    out[nz] = (np.exp(-1j * w[nz] * a) - np.exp(-1j * w[nz] * b)) / (1j * w[nz] * P)
    out[K] = (b - a) / P
    return out


def pi_matrix(samples, K: int, period: float | None = None) -> np.ndarray:
    """Rows are ``pi_fourier`` for every interval, harmonics ``-K..K``."""
    P = samples.period if period is None else period
    if P is None:
        raise InvalidArgument("Fourier-domain quantities need a period")
    kp = np.arange(1, K + 1)
    w = 2 * np.pi * kp / P
    E = np.exp(-1j * np.multiply.outer(samples.t, w))
    pos = (E[:-1] - E[1:]) / (1j * w * P)
    out = np.empty((samples.N, 2 * K + 1), dtype=complex)
    out[:, K + 1:] = pos
    out[:, :K] = np.conj(pos[:, ::-1])
    out[:, K] = samples.T / P
    return out


def synthesis_matrix(samples, kernel: LowpassKernel = IDEAL) -> np.ndarray:
    """Rows are the Fourier coefficients of ``f_i = phi * pi_i``."""
    K = band_limit(kernel, samples.period)
    Pi = pi_matrix(samples, K)
    w = 2 * np.pi * np.arange(-K, K + 1) / samples.period
    return Pi * response(kernel, w)


def gram_exact(samples, kernel: LowpassKernel = IDEAL, period: float | None = None) -> "GramProvider":
    """Periodic Gram ``<f_i, f_j>`` summed over the kernel's band."""
    P = samples.period if period is None else period
    K = band_limit(kernel, P)
    kp = np.arange(1, K + 1)
    w = 2 * np.pi * kp / P
    E = np.exp(-1j * np.multiply.outer(samples.t, w))
    pos = (E[:-1] - E[1:]) / (1j * w)
    Wk = response_sq(kernel, w)
    T = samples.T
    G = np.outer(T, T) + 2.0 * ((pos * Wk) @ pos.conj().T).real
    G /= P
    G = 0.5 * (G + G.T)
    return GramProvider(G, "exact_fourier", kernel)


def lazar_cross_gram(samples, K: int | None = None) -> np.ndarray:
    """``C[i, j] = <pi_i, g_j>`` with ``g_j`` the periodic sinc centred on ``tbar_j``."""
    P = samples.period
    K = harmonic_limit(P) if K is None else K
    kp = np.arange(1, K + 1)
    w = 2 * np.pi * kp / P
    E = np.exp(-1j * np.multiply.outer(samples.t, w))
    pos = (E[:-1] - E[1:]) / (1j * w)
    g = np.exp(-1j * np.multiply.outer(samples.midpoints, w))
    C = np.outer(samples.T, np.ones(samples.N)) + 2.0 * (pos @ g.conj().T).real
    return C / P


# ---------------------------------------------------------------- h functions

def _gl_rule(a: float, b: float, n: int = _GL_NODES):
    x, wt = np.polynomial.legendre.leggauss(n)
    return 0.5 * (b - a) * x + 0.5 * (b + a), 0.5 * (b - a) * wt


@dataclass(frozen=True)
class _Transition:
    nodes: np.ndarray
    weights: np.ndarray  # quadrature weight * W(w) / w**2 / pi


_TRANSITION_CACHE: dict = {}


def _transition(kernel: LowpassKernel) -> _Transition:
    key = kernel.rolloff_r
    tr = _TRANSITION_CACHE.get(key)
    if tr is None:
        x, wt = _gl_rule(np.pi, kernel.rolloff_r * np.pi)
        tr = _Transition(x, wt * response_sq(kernel, x) / x ** 2 / np.pi)
        _TRANSITION_CACHE[key] = tr
    return tr


def growth(kernel: LowpassKernel) -> tuple[float, float]:
    """``(alpha, beta)`` with ``h(t) - (alpha |t| + beta) -> 0``."""
    if kernel.kind == "ideal":
        return 0.5, -1.0 / np.pi ** 2
    # exact limit; the oscillating part of h vanishes at infinity
    return 0.5, -1.0 / np.pi ** 2 + float(np.sum(_transition(kernel).weights))


def _hbar_ideal(t: np.ndarray) -> np.ndarray:
    x = np.pi * t
    si, _ = special.sici(x)
    return t * (si - 0.5 * np.pi) / np.pi + np.cos(x) / np.pi ** 2


def hbar_eval(kernel: LowpassKernel, t) -> np.ndarray | float:
    """Growth-controlled ``hbar(t) = h(t) - (alpha |t| + beta)``."""
    ta = np.abs(np.asarray(t, dtype=float))
    out = _hbar_ideal(ta)
    if kernel.kind == "cosine_rolloff":
        tr = _transition(kernel)
        out = out - np.cos(np.multiply.outer(ta, tr.nodes)) @ tr.weights
    return out if out.ndim else float(out)


def h_eval(kernel: LowpassKernel, t) -> np.ndarray | float:
    """Second repeated integral of ``a_phi``; even, ``h(0) = 0``."""
    ta = np.abs(np.asarray(t, dtype=float))
    if kernel.kind == "ideal":
        x = np.pi * ta
        si, _ = special.sici(x)
        out = ta * si / np.pi - (1.0 - np.cos(x)) / np.pi ** 2
    else:
        alpha, beta = growth(kernel)
        out = np.asarray(hbar_eval(kernel, ta)) + alpha * ta + beta
        out = np.where(ta == 0.0, 0.0, out)
    return out if out.ndim else float(out)


def four_term(hb, ti0, ti1, tj0, tj1):
    """``<f_i, f_j>`` from ``hb`` for intervals ``[ti0, ti1)`` and ``[tj0, tj1)``.

    The grouping is fixed so that every path producing a coefficient
    performs the same floating-point operations.
    """
    return (hb(ti1 - tj0) - hb(ti1 - tj1)) - (hb(ti0 - tj0) - hb(ti0 - tj1))


def _wrap_shift(samples, i, j):
    """Period multiple moving interval ``j`` nearest to interval ``i``."""
    if not samples.closed or samples.period is None:
        return 0.0
    P = samples.period
    c = 0.5 * (samples.t[i] + samples.t[i + 1]) - 0.5 * (samples.t[j] + samples.t[j + 1])
    return P * np.round(c / P)


def gram_from_h(samples, kernel: LowpassKernel, i: int, j: int, use_hbar: bool = True,
                wrap: bool = True) -> float:
    """Single Gram entry by the four-term identity.

    On a closed (periodic) sample set the second interval is moved by a
    whole number of periods to its nearest image, which is how the line
    kernel approximates the periodic one.
    """
    N = samples.N
    if not (0 <= i < N and 0 <= j < N):
        raise InvalidArgument("interval index out of range")
    t = samples.t
    if i == j:
        return 2.0 * float(h_eval(kernel, t[i + 1] - t[i]))
    m = _wrap_shift(samples, i, j) if wrap else 0.0
    hb = (lambda x: hbar_eval(kernel, x)) if use_hbar else (lambda x: h_eval(kernel, x))
    return float(four_term(hb, t[i], t[i + 1], t[j] + m, t[j + 1] + m))


def gram_h_matrix(samples, kernel: LowpassKernel = IDEAL, use_hbar: bool = True,
                  wrap: bool = True) -> "GramProvider":
    """Dense Gram from the analytic ``h`` path (vectorised ``gram_from_h``)."""
    t = samples.t
    N = samples.N
    I, J = np.meshgrid(np.arange(N), np.arange(N), indexing="ij")
    if wrap and samples.closed and samples.period is not None:
        P = samples.period
        mid = samples.midpoints
        m = P * np.round((mid[:, None] - mid[None, :]) / P)
    else:
        m = np.zeros((N, N))
    f = (lambda x: hbar_eval(kernel, x)) if use_hbar else (lambda x: h_eval(kernel, x))
    G = four_term(f, t[I], t[I + 1], t[J] + m, t[J + 1] + m)
    G = np.asarray(G, dtype=float)
    G[np.arange(N), np.arange(N)] = 2.0 * np.asarray(h_eval(kernel, samples.T))
    G = np.triu(G) + np.triu(G, 1).T
    return GramProvider(G, "analytic_h", kernel)


# ---------------------------------------------------------------- providers

@dataclass(frozen=True, eq=False)
class GramProvider:
    """Immutable dense Gram matrix together with how it was obtained."""

    matrix: np.ndarray
    mode: str
    kernel: LowpassKernel = IDEAL
    band: int | None = None
    circular: bool = False
    table: "HTable | None" = None

    def __post_init__(self):
        A = np.asarray(self.matrix, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise InvalidArgument("Gram matrix must be square")
        if self.mode not in ("exact_fourier", "analytic_h", "table"):
            raise InvalidArgument(f"unknown Gram mode {self.mode!r}")
        A = A.copy()
        A.setflags(write=False)
        object.__setattr__(self, "matrix", A)

    @property
    def N(self) -> int:
        return self.matrix.shape[0]

    def entry(self, i: int, j: int) -> float:
        return float(self.matrix[i, j])

    def diag(self) -> np.ndarray:
        return np.diag(self.matrix).copy()


def band_mask(N: int, L: int, circular: bool = False) -> np.ndarray:
    i = np.arange(N)
    dist = np.abs(i[:, None] - i[None, :])
    if circular:
        dist = np.minimum(dist, N - dist)
    return dist <= L


def banded_gram(g: GramProvider, L: int, circular: bool = False) -> GramProvider:
    """Zero every entry with index distance above ``L``."""
    if L < 0:
        raise InvalidArgument("band half-width must be nonnegative")
    A = np.where(band_mask(g.N, L, circular), g.matrix, 0.0)
    return GramProvider(A, g.mode, g.kernel, L, circular, g.table)


def line_gram(samples, hbar, h_diag, L: int | None = None, circular: bool = False) -> np.ndarray:
    """Banded Gram by the four-term identity with a fixed arithmetic order.

    Every entry ``(i, j)`` is evaluated with row ``i`` leading,
    ``(hbar(t[i+1]-t[j]) - hbar(t[i+1]-t[j+1])) - (hbar(t[i]-t[j]) - hbar(t[i]-t[j+1]))``,
    and the diagonal as ``h(T_i) + h(T_i)``; this is exactly what the
    streaming coefficient generator computes, so both agree bitwise.  The
    two triangles may therefore differ in the last bit.  With
    ``circular`` the band wraps around a closed sample set, the partner
    interval being shifted by one period.
    """
    t = samples.t
    N = samples.N
    if circular and not samples.closed:
        raise InvalidArgument("circular banding needs a closed sample set")
    L = N - 1 if L is None else int(L)
    if L < 0:
        raise InvalidArgument("band half-width must be nonnegative")
    A = np.zeros((N, N))
    hd = np.asarray(h_diag(samples.T), dtype=float)
    A[np.arange(N), np.arange(N)] = hd + hd
    rows = np.arange(N)
    if circular and 2 * L + 1 > N:
        raise InvalidArgument("circular band wider than the sample set")
    reach = L if circular else min(L, N - 1)
    for m in range(-reach, reach + 1):
        if m == 0:
            continue
        jj = rows + m
        if circular:
            wrap = np.floor_divide(jj, N)
            j = jj - wrap * N
            shift = wrap * samples.period
            ok = np.ones(N, dtype=bool)
        else:
            ok = (jj >= 0) & (jj < N)
            j = jj[ok]
            shift = 0.0
        i = rows[ok]
        tj0 = t[j] + shift
        tj1 = t[j + 1] + shift
        A[i, j] = four_term(hbar, t[i], t[i + 1], tj0, tj1)
    return A


def analytic_line_gram(samples, kernel: LowpassKernel = IDEAL, L: int | None = None,
                       circular: bool = False) -> GramProvider:
    """:func:`line_gram` driven by the analytic ``hbar`` and ``h``."""
    A = line_gram(samples, lambda x: hbar_eval(kernel, x), lambda x: h_eval(kernel, x),
                  L, circular)
    return GramProvider(A, "analytic_h", kernel, L, circular)


# ---------------------------------------------------------------- lookup table

_MAGIC = b"HTBL"
_VERSION = 1
_HEADER = struct.Struct("<4sIBdddddQ")


@dataclass(frozen=True, eq=False)
class HTable:
    """``hbar`` on the grid ``m * step`` and ``h`` for diagonal entries."""

    kernel: LowpassKernel
    step: float
    max_lag: float
    values: np.ndarray
    diag_values: np.ndarray
    alpha: float
    beta: float

    def __post_init__(self):
        for name in ("values", "diag_values"):
            a = np.asarray(getattr(self, name), dtype=float).copy()
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def nbytes(self) -> int:
        return _HEADER.size + 8 * (self.values.size + self.diag_values.size)

    def _index(self, t, n: int, what: str) -> np.ndarray:
        ta = np.abs(np.asarray(t, dtype=float))
        m = np.rint(ta / self.step)
        if np.any(m * self.step != ta):
            raise TableRangeError(f"{what} argument off the table grid (step {self.step!r})")
        if np.any(m >= n):
            raise TableRangeError(
                f"{what} lag {float(np.max(ta))!r} exceeds tabulated range {self.step * (n - 1)!r}")
        return m.astype(np.int64)

    def hbar(self, t):
        """Exact lookup of ``hbar(|t|)``; ``t`` must lie on the grid."""
        out = self.values[self._index(t, self.values.size, "hbar")]
        return out if np.ndim(out) else float(out)

    def h_diag(self, T):
        out = self.diag_values[self._index(T, self.diag_values.size, "diagonal")]
        return out if np.ndim(out) else float(out)

    def gram(self, samples, i: int, j: int) -> float:
        """Entry ``(i, j)`` with row ``i`` in the leading position."""
        t = samples.t
        if i == j:
            hd = self.h_diag(t[i + 1] - t[i])
            return hd + hd
        return float(four_term(self.hbar, t[i], t[i + 1], t[j], t[j + 1]))

    def gram_matrix(self, samples, L: int | None = None, circular: bool = False) -> GramProvider:
        """Banded Gram from table lookups, see :func:`line_gram`."""
        A = line_gram(samples, self.hbar, self.h_diag, L, circular)
        N = samples.N
        band = None if L is None or (not circular and L >= N - 1) else L
        return GramProvider(A, "table", self.kernel, band, circular, self)

    # ------------------------------------------------------------ persistence

    def save(self, path) -> int:
        hdr = _HEADER.pack(_MAGIC, _VERSION, self.kernel.code,
                           float(self.kernel.rolloff_r or 0.0), self.step, self.max_lag,
                           self.alpha, self.beta, self.values.size + self.diag_values.size)
        payload = (hdr + self.values.astype("<f8").tobytes()
                   + self.diag_values.astype("<f8").tobytes())
        # trailing u64: how many of the entries are diagonal values
        payload += struct.pack("<Q", self.diag_values.size)
        Path(path).write_bytes(payload)
        return len(payload)

    @classmethod
    def load(cls, path) -> "HTable":
        raw = Path(path).read_bytes()
        if len(raw) < _HEADER.size + 8:
            raise InvalidArgument("truncated table file")
        magic, ver, code, r, step, max_lag, alpha, beta, count = _HEADER.unpack_from(raw)
        if magic != _MAGIC or ver != _VERSION:
            raise InvalidArgument("not an HTBL v1 file")
        (ndiag,) = struct.unpack_from("<Q", raw, len(raw) - 8)
        body = np.frombuffer(raw, dtype="<f8", count=count, offset=_HEADER.size)
        kernel = IDEAL if code == 0 else LowpassKernel("cosine_rolloff", r)
        return cls(kernel, step, max_lag, body[:count - ndiag], body[count - ndiag:], alpha, beta)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["m", "lag", "hbar", "h_diag"])
        for m in range(self.values.size):
            hd = repr(float(self.diag_values[m])) if m < self.diag_values.size else ""
            w.writerow([m, repr(m * self.step), repr(float(self.values[m])), hd])
        return buf.getvalue()


def build_table(kernel: LowpassKernel, step: float, max_lag: float,
                max_T: float | None = None, chunk: int = 8192) -> HTable:
    """Tabulate ``hbar`` on ``[0, max_lag]`` and ``h`` on ``[0, max_T]``."""
    if not step > 0:
        raise InvalidArgument("table step must be positive")
    if not max_lag > 0:
        raise InvalidArgument("max_lag must be positive")
    max_T = max_lag if max_T is None else max_T
    n = int(np.floor(max_lag / step)) + 1
    nd = int(np.floor(max_T / step)) + 1
    grid = np.arange(n) * step
    values = np.concatenate([np.atleast_1d(hbar_eval(kernel, grid[s:s + chunk]))
                             for s in range(0, n, chunk)])
    dgrid = np.arange(nd) * step
    diag = np.concatenate([np.atleast_1d(h_eval(kernel, dgrid[s:s + chunk]))
                           for s in range(0, nd, chunk)])
    alpha, beta = growth(kernel)
    return HTable(kernel, float(step), float(max_lag), values, diag, alpha, beta)

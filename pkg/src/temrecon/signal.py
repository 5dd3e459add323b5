"""Periodic bandlimited signals of Nyquist period 1.

A signal of period ``P`` is stored as its complex Fourier coefficients
``c_k`` for ``k = -K..K``; the angular frequency of harmonic ``k`` is
``2*pi*k/P``.  Built from ``P`` Nyquist samples (``P`` odd) the band is
``K = (P - 1)/2``, i.e. every harmonic strictly below ``pi``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument

__all__ = [
    "BandlimitedSignal",
    "harmonic_limit",
    "from_nyquist_samples",
    "random_signal",
    "zero_signal",
    "eval",
    "antiderivative",
    "inner",
    "da_reconstruct",
    "mse_db",
    "mse_bits",
    "uniform_noise_db",
]

DB_PER_BIT = 6.02


def harmonic_limit(period: float, omega_max: float = np.pi) -> int:
    """Largest ``k`` with ``2*pi*k/period <= omega_max``."""
    return int(np.floor(omega_max * period / (2 * np.pi) + 1e-9))


@dataclass(frozen=True, eq=False)
class BandlimitedSignal:
    """Real periodic signal given by a finite Fourier series.

    ``coeffs[k + K]`` holds ``c_k``; conjugate symmetry is enforced at
    construction so evaluation is always real.
    """

    period: float
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.ndim != 1 or c.size % 2 == 0:
            raise InvalidArgument("coefficient array must have odd length 2K+1")
        if not self.period > 0:
            raise InvalidArgument("period must be positive")
        c = 0.5 * (c + np.conj(c[::-1]))
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def K(self) -> int:
        return (self.coeffs.size - 1) // 2

    @property
    def harmonics(self) -> np.ndarray:
        return np.arange(-self.K, self.K + 1)

    @property
    def omegas(self) -> np.ndarray:
        return 2 * np.pi * self.harmonics / self.period

    def padded(self, K: int) -> np.ndarray:
        """Coefficients zero-padded (or truncated) to ``2K+1`` entries."""
        out = np.zeros(2 * K + 1, dtype=complex)
        m = min(K, self.K)
        out[K - m:K + m + 1] = self.coeffs[self.K - m:self.K + m + 1]
        return out

    def band_limited(self, K: int) -> "BandlimitedSignal":
        return BandlimitedSignal(self.period, self.padded(K))

    def __call__(self, t):
        return eval(self, t)

    def __add__(self, other):
        _check_period(self, other)
        K = max(self.K, other.K)
        return BandlimitedSignal(self.period, self.padded(K) + other.padded(K))

    def __sub__(self, other):
        _check_period(self, other)
        K = max(self.K, other.K)
        return BandlimitedSignal(self.period, self.padded(K) - other.padded(K))

    def __mul__(self, a):
        return BandlimitedSignal(self.period, self.coeffs * float(a))

    __rmul__ = __mul__

    def norm(self) -> float:
        return float(np.sqrt(inner(self, self)))

    def power(self) -> float:
        """Mean power per unit time (per Nyquist sample)."""
        return float(np.sum(np.abs(self.coeffs) ** 2))

    def max_abs(self, oversample: int = 16) -> float:
        t = np.arange(int(np.ceil(self.period * oversample))) / oversample
        return float(np.max(np.abs(eval(self, t))))

    def nyquist_samples(self) -> np.ndarray:
        n = int(round(self.period))
        return eval(self, np.arange(n, dtype=float))


def _check_period(u, v):
    if u.period != v.period:
        raise InvalidArgument(f"period mismatch: {u.period} vs {v.period}")


def zero_signal(period: float, K: int | None = None) -> BandlimitedSignal:
    if K is None:
        K = harmonic_limit(period)
    return BandlimitedSignal(period, np.zeros(2 * K + 1, dtype=complex))


def from_nyquist_samples(values) -> BandlimitedSignal:
    """Unique signal of period ``len(values)`` interpolating the samples."""
    v = np.asarray(values, dtype=float)
    P = v.size
    if P % 2 == 0:
        raise InvalidArgument("Nyquist construction needs an odd period")
    K = (P - 1) // 2
    c = np.fft.fft(v) / P
    coeffs = np.concatenate([c[P - K:], c[:K + 1]])
    return BandlimitedSignal(float(P), coeffs)


def random_signal(period: int, amplitude_bound: float, rng_seed: int) -> BandlimitedSignal:
    """Signal whose Nyquist samples are i.i.d. uniform in ``[-a, a]``."""
    if int(period) != period or period % 2 == 0:
        raise InvalidArgument("period must be an odd integer")
    if amplitude_bound < 0:
        raise InvalidArgument("amplitude_bound must be nonnegative")
    rng = np.random.default_rng(rng_seed)
    values = rng.uniform(-amplitude_bound, amplitude_bound, size=int(period))
    return from_nyquist_samples(values)


def eval(x: BandlimitedSignal, t):
    """``x(t)`` by direct Fourier summation (vectorised over ``t``)."""
    t = np.asarray(t, dtype=float)
    w = x.omegas
    phase = np.exp(1j * np.multiply.outer(t, w))
    return (phase @ x.coeffs).real


def antiderivative(x: BandlimitedSignal, a, b):
    """Closed-form ``int_a^b x(t) dt`` (vectorised over ``a``, ``b``)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    K = x.K
    c0 = x.coeffs[K].real
    w = x.omegas[K + 1:]
    ck = x.coeffs[K + 1:]
    # c_{-k} = conj(c_k): the pair integrates to 2 Re(...)
    gb = np.exp(1j * np.multiply.outer(b, w))
    ga = np.exp(1j * np.multiply.outer(a, w))
    osc = ((gb - ga) @ (ck / (1j * w))).real * 2.0
    return c0 * (b - a) + osc


def inner(u: BandlimitedSignal, v: BandlimitedSignal) -> float:
    """``int_0^P u v dt`` via Parseval."""
    _check_period(u, v)
    K = min(u.K, v.K)
    return float(u.period * np.real(np.vdot(v.padded(K), u.padded(K))))


def da_reconstruct(c, samples, kernel=None) -> BandlimitedSignal:
    """``sum_i c_i f_i``: the kernel-filtered piecewise-constant function."""
    from .kernels import IDEAL, synthesis_matrix

    kernel = IDEAL if kernel is None else kernel
    c = np.asarray(c, dtype=float)
    if c.shape != (samples.N,):
        raise InvalidArgument(f"expected {samples.N} coefficients, got {c.shape}")
    F = synthesis_matrix(samples, kernel)
    return BandlimitedSignal(samples.period, c @ F)


def uniform_noise_db(amplitude_bound: float) -> float:
    """Power (dB) of uniform noise spanning ``[-a, a]``."""
    return 10.0 * np.log10((2.0 * amplitude_bound) ** 2 / 12.0)


def mse_db(mse) -> np.ndarray:
    return 10.0 * np.log10(np.maximum(np.asarray(mse, dtype=float), 1e-300))


def mse_bits(mse_db_value, amplitude_bound: float = 0.5):
    """Equivalent flash-ADC resolution of an MSE given in dB."""
    return (uniform_noise_db(amplitude_bound) - np.asarray(mse_db_value)) / DB_PER_BIT

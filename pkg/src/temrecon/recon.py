"""Iterative reconstruction in coefficient space.

Estimates have the form ``x = sum_i c_i f_i`` and residuals are
``r_i = s_i - <pi_i, x>``.  One POCS step with relaxation ``lam`` reads

    b = lam * r / T,   c <- c + b,   r <- r - G b,

so the signal is only materialised when an error measurement is
requested.  The Lazar-Toth variant expands on the sinc family centred on
interval midpoints instead, with its own cross-Gram.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .errors import DegenerateError, DivergenceError, InvalidArgument
from .kernels import (IDEAL, GramProvider, LowpassKernel, lazar_cross_gram,
                      synthesis_matrix)
from .signal import BandlimitedSignal, antiderivative, harmonic_limit

__all__ = [
    "ReconVariant",
    "LAZAR",
    "POCS",
    "relaxed",
    "IterState",
    "FrameBounds",
    "apply_S",
    "apply_Sstar",
    "inner_D",
    "step",
    "run",
    "RunResult",
    "frame_bounds",
    "pseudo_inverse_coeffs",
    "pseudo_inverse_oracle",
    "Reconstructor",
    "inband_mse",
]

logger = logging.getLogger(__name__)

RANK_THRESHOLD = 1e-10


@dataclass(frozen=True)
class ReconVariant:
    """Which family of reconstruction functions and which relaxation to use.

    ``lam`` is only meaningful for ``pocs_relaxed``.  Values up to and
    including 2 are accepted: at 2 the iteration is no longer a strict
    contraction but is still used at the critical sampling rate.
    """

    kind: str
    lam: float = 1.0

    def __post_init__(self):
        if self.kind not in ("lazar", "pocs", "pocs_relaxed"):
            raise InvalidArgument(f"unknown variant {self.kind!r}")
        if self.kind == "pocs_relaxed" and not 0 < self.lam <= 2:
            raise InvalidArgument("relaxation must lie in (0, 2]")
        if self.kind != "pocs_relaxed" and self.lam != 1.0:
            raise InvalidArgument("only pocs_relaxed takes a relaxation coefficient")

    @property
    def label(self) -> str:
        return f"pocs_relaxed({self.lam:g})" if self.kind == "pocs_relaxed" else self.kind

    @classmethod
    def parse(cls, text: str) -> "ReconVariant":
        text = text.strip()
        if text.startswith("pocs_relaxed"):
            inner = text[len("pocs_relaxed"):].strip("() ")
            return cls("pocs_relaxed", float(inner) if inner else 1.3)
        return cls(text)


LAZAR = ReconVariant("lazar")
POCS = ReconVariant("pocs")


def relaxed(lam: float) -> ReconVariant:
    return ReconVariant("pocs_relaxed", lam)


@dataclass(frozen=True, eq=False)
class IterState:
    """Expansion coefficients, residuals and iteration count."""

    c: np.ndarray
    r: np.ndarray
    n: int = 0

    @classmethod
    def zero(cls, s) -> "IterState":
        s = np.asarray(s, dtype=float)
        return cls(np.zeros_like(s), s.copy(), 0)


@dataclass(frozen=True)
class FrameBounds:
    A: float
    B: float
    rank: int

    @property
    def lambda_m(self) -> float:
        return 2.0 / (self.A + self.B)

    @property
    def m_norm(self) -> float:
        return (self.B - self.A) / (self.B + self.A)

    @property
    def m1_norm(self) -> float:
        """``||M^1||`` on ``V_f``, i.e. without relaxation."""
        return max(abs(1.0 - self.A), abs(1.0 - self.B))


def apply_S(u: BandlimitedSignal, samples) -> np.ndarray:
    """``(<pi_i, u>)_i``, equal to ``<f_i, u>`` for ``u`` in the band."""
    if samples.period is not None and u.period != samples.period:
        raise InvalidArgument("signal and samples have different periods")
    return antiderivative(u, samples.t[:-1], samples.t[1:])


def apply_Sstar(c, samples, kernel: LowpassKernel = IDEAL) -> BandlimitedSignal:
    """``sum_i c_i f_i / T_i``, the adjoint of ``S`` for the ``1/T`` weighting."""
    from .signal import da_reconstruct

    c = np.asarray(c, dtype=float)
    if c.shape != (samples.N,):
        raise InvalidArgument("coefficient length must match the number of intervals")
    return da_reconstruct(c / samples.T, samples, kernel)


def inner_D(a, b, samples) -> float:
    """Weighted sample-space inner product ``sum a_i b_i / T_i``."""
    return float(np.sum(np.asarray(a) * np.asarray(b) / samples.T))


def _check(state: IterState, N: int):
    if state.c.shape != (N,) or state.r.shape != (N,):
        raise InvalidArgument(f"state has length {state.c.shape}, expected {N}")


def step(state: IterState, samples, gram, variant: ReconVariant) -> IterState:
    """One iteration.

    For ``pocs``/``pocs_relaxed`` ``gram`` is the Gram provider (or a dense
    array); for ``lazar`` it is the cross-Gram ``<pi_i, g_j>`` and ``c``
    holds the sinc-family coefficients.
    """
    A = gram.matrix if isinstance(gram, GramProvider) else np.asarray(gram)
    _check(state, samples.N)
    if variant.kind == "lazar":
        b = state.r
    else:
        b = variant.lam * state.r / samples.T
    return IterState(state.c + b, state.r - A @ b, state.n + 1)


def inband_mse(X: np.ndarray, x: BandlimitedSignal, K: int | None = None) -> float:
    """Per-unit-time squared error restricted to harmonics ``|k| <= K``."""
    K = harmonic_limit(x.period) if K is None else K
    Kx = (X.size - 1) // 2
    m = min(K, Kx)
    e = X[Kx - m:Kx + m + 1] - x.padded(m)
    return float(np.sum(np.abs(e) ** 2))


class Reconstructor:
    """Maps coefficient vectors to in-band Fourier coefficients.

    Parameters
    ----------
    samples : SampleSet
    kernel : LowpassKernel
        Kernel of the ``f_i`` family (ignored for ``lazar``).
    lazar : bool
        Use the midpoint sinc family instead of ``f_i``.
    """

    def __init__(self, samples, kernel: LowpassKernel = IDEAL, lazar: bool = False):
        P = samples.period
        self.K = harmonic_limit(P)
        if lazar:
            w = 2 * np.pi * np.arange(-self.K, self.K + 1) / P
            self.F = np.exp(-1j * np.multiply.outer(samples.midpoints, w)) / P
        else:
            F = synthesis_matrix(samples, kernel)
            Kf = (F.shape[1] - 1) // 2
            self.F = F[:, Kf - self.K:Kf + self.K + 1]
        self.period = P

    def coeffs(self, c) -> np.ndarray:
        return np.asarray(c) @ self.F

    def signal(self, c) -> BandlimitedSignal:
        return BandlimitedSignal(self.period, self.coeffs(c))

    def mse(self, c, x: BandlimitedSignal) -> float:
        return inband_mse(self.coeffs(c), x, self.K)

    def mse_many(self, C: np.ndarray, x: BandlimitedSignal) -> np.ndarray:
        """MSE of every row of ``C`` at once."""
        E = C @ self.F - x.padded(self.K)
        return np.sum(np.abs(E) ** 2, axis=1)


@dataclass(frozen=True, eq=False)
class RunResult:
    state: IterState
    mse: np.ndarray | None
    iterations: int
    converged: bool


def run(samples, gram, variant: ReconVariant, n_iters: int,
        reference: BandlimitedSignal | None = None, kernel: LowpassKernel = IDEAL,
        tol: float | None = None, s=None, record_every: int = 1) -> RunResult:
    """Iterate from the zero signal.

    Parameters
    ----------
    samples : SampleSet
    gram : GramProvider or ndarray or None
        Gram of the ``f_i``.  For ``lazar`` pass the cross-Gram, or None to
        compute it.
    variant : ReconVariant
    n_iters : int
        Iteration cap.
    reference : BandlimitedSignal, optional
        When given, the in-band MSE of ``x^(n)`` is recorded for
        ``n = 0, record_every, 2 record_every, ...``.
    tol : float, optional
        Stop once ``||r||_D / ||s||_D <= tol``.
    s : array, optional
        Data vector; defaults to ``samples.s``.

    Returns
    -------
    RunResult
    """
    if n_iters < 0:
        raise InvalidArgument("n_iters must be nonnegative")
    s = samples.s if s is None else np.asarray(s, dtype=float)
    if variant.kind == "lazar" and gram is None:
        gram = lazar_cross_gram(samples)
    A = gram.matrix if isinstance(gram, GramProvider) else np.asarray(gram)
    recon = None
    if reference is not None:
        recon = Reconstructor(samples, kernel, lazar=variant.kind == "lazar")
    state = IterState.zero(s)
    s_norm = np.sqrt(inner_D(s, s, samples))
    history = [state.c.copy()] if recon is not None else None
    converged = s_norm == 0.0
    w = 1.0 / samples.T
    lam_w = (variant.lam if variant.kind != "lazar" else 1.0) * w
    c, r = state.c.copy(), state.r.copy()
    n = 0
    while n < n_iters and not converged:
        b = r if variant.kind == "lazar" else lam_w * r
        c = c + b
        r = r - A @ b
        n += 1
        if not np.all(np.isfinite(r)):
            raise DivergenceError(f"{variant.label} diverged at iteration {n}")
        if history is not None and n % record_every == 0:
            history.append(c.copy())
        if tol is not None and np.sqrt(np.sum(r * r * w)) <= tol * s_norm:
            converged = True
    state = IterState(c, r, n)
    mse = None
    if recon is not None:
        mse = recon.mse_many(np.array(history), reference)
    return RunResult(state, mse, n, converged)


def _normalized(gram, samples):
    A = gram.matrix if isinstance(gram, GramProvider) else np.asarray(gram)
    d = 1.0 / np.sqrt(samples.T)
    return A * np.outer(d, d), d


def frame_bounds(gram, samples, eigh=None) -> FrameBounds:
    """Extreme nonzero eigenvalues of ``D^-1/2 G D^-1/2``.

    ``eigh`` selects the symmetric eigen-solver (defaults to the package's
    Jacobi solver).
    """
    from .spectral import jacobi_eigh

    H, _ = _normalized(gram, samples)
    nu = (eigh or jacobi_eigh)(H)[0]
    B = float(np.max(nu))
    if not B > 0:
        raise DegenerateError("Gram matrix is zero")
    keep = nu > RANK_THRESHOLD * B
    return FrameBounds(float(np.min(nu[keep])), B, int(np.sum(keep)))


def pseudo_inverse_coeffs(shat, samples, gram) -> np.ndarray:
    """Minimal-norm coefficients ``c`` with ``sum c_i f_i = S^+ shat``.

    Uses LAPACK's symmetric eigensolver so it stays independent of the
    iterative code paths it is meant to check.
    """
    H, d = _normalized(gram, samples)
    nu, V = np.linalg.eigh(H)
    B = nu.max()
    if not B > 0:
        raise DegenerateError("Gram matrix is zero")
    keep = nu > RANK_THRESHOLD * B
    Vk = V[:, keep]
    y = Vk @ ((Vk.T @ (d * np.asarray(shat, dtype=float))) / nu[keep])
    return d * y


def pseudo_inverse_oracle(shat, samples, gram, kernel: LowpassKernel = IDEAL) -> BandlimitedSignal:
    """Direct (non-iterative) ``S^+ shat`` as a signal."""
    from .signal import da_reconstruct

    return da_reconstruct(pseudo_inverse_coeffs(shat, samples, gram), samples, kernel)

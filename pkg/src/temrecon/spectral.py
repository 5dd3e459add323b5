"""Spectral analysis of the iteration operator and 2-periodic diagnostics.

On ``V_f`` the POCS operator ``M u = u - sum_i <pi_i, u> f_i / T_i`` acts
on coefficients as ``c -> c - D^-1 G c``.  With ``H = D^-1/2 G D^-1/2 =
V diag(nu) V^T`` its eigenvalues are ``mu = 1 - nu`` and the vectors
``p_i = D^-1/2 v_i / sqrt(nu_i)`` are the coefficients of a
``G``-orthonormal eigenbasis ``psi_i``.

Under data noise ``eta`` the error ``x^(n) - x_s`` has components

    e_i^(n) = mu_i^n e_i^(0) + (1 - mu_i^n) n_i / (1 - mu_i),

with ``n_i = <psi_i, S* eta>``.
"""

from __future__ import annotations

import csv
import io
import logging
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import optimize

from .errors import InvalidArgument, NumericError
from .kernels import GramProvider, lazar_cross_gram, pi_matrix
from .recon import RANK_THRESHOLD, pseudo_inverse_coeffs

__all__ = [
    "jacobi_eigh",
    "Spectrum",
    "SemiConvergencePrediction",
    "eigendecompose_M",
    "semiconvergence_predict",
    "two_periodic_detF",
    "two_periodic_F",
    "two_periodic_M",
    "two_periodic_Mnorm",
    "delta0",
    "lazar_threshold",
    "two_periodic_times",
    "two_periodic_input",
    "two_periodic_d",
    "lazar_operator",
]

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------- Jacobi

@lru_cache(maxsize=16)
def _round_robin(n: int) -> tuple:
    """``n - 1`` rounds of ``n / 2`` disjoint pairs covering every pair once."""
    players = list(range(n))
    rounds = []
    for _ in range(n - 1):
        p = np.array([min(players[i], players[n - 1 - i]) for i in range(n // 2)])
        q = np.array([max(players[i], players[n - 1 - i]) for i in range(n // 2)])
        rounds.append((p, q))
        players = [players[0], players[-1]] + players[1:-1]
    return tuple(rounds)


def jacobi_eigh(A, tol: float = 1e-12, max_sweeps: int = 100):
    """Symmetric eigen-decomposition by parallel cyclic Jacobi rotations.

    Each sweep visits all pairs in a fixed round-robin order; the pairs of
    one round are disjoint, so their rotations are applied together.

    Parameters
    ----------
    A : (n, n) array_like
        Symmetric matrix.
    tol : float
        Stop when the off-diagonal Frobenius norm is at most ``tol`` times
        the Frobenius norm of ``A``.
    max_sweeps : int

    Returns
    -------
    w : ndarray
        Eigenvalues in ascending order.
    V : ndarray
        Orthonormal eigenvectors (columns).

    Raises
    ------
    NumericError
        If the off-diagonal norm has not dropped below the tolerance after
        ``max_sweeps`` sweeps.
    """
    A = np.array(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidArgument("matrix must be square")
    n0 = A.shape[0]
    if n0 == 0:
        return np.zeros(0), np.zeros((0, 0))
    A = 0.5 * (A + A.T)
    n = n0 + (n0 % 2)
    if n != n0:  # an isolated dummy index keeps the pairing even
        B = np.zeros((n, n))
        B[:n0, :n0] = A
        A = B
    V = np.eye(n)
    scale = np.linalg.norm(A)
    if scale == 0.0:
        return np.zeros(n0), np.eye(n0)
    rounds = _round_robin(n)
    diag_mask = np.eye(n, dtype=bool)
    for sweep in range(max_sweeps + 1):
        off = np.linalg.norm(A[~diag_mask])
        if off <= tol * scale:
            break
        if sweep == max_sweeps:
            raise NumericError(f"Jacobi did not converge in {max_sweeps} sweeps "
                               f"(off-diagonal {off:.3e})")
        for p, q in rounds:
            apq = A[p, q]
            app = A[p, p]
            aqq = A[q, q]
            active = np.abs(apq) > 1e-300
            tau = np.where(active, (aqq - app) / (2.0 * np.where(active, apq, 1.0)), 0.0)
            t = np.where(tau >= 0, 1.0, -1.0) / (np.abs(tau) + np.hypot(1.0, tau))
            t = np.where(active, t, 0.0)
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = t * c
            Ap, Aq = A[p, :], A[q, :]
            A[p, :] = c[:, None] * Ap - s[:, None] * Aq
            A[q, :] = s[:, None] * Ap + c[:, None] * Aq
            Ap, Aq = A[:, p], A[:, q]
            A[:, p] = Ap * c - Aq * s
            A[:, q] = Ap * s + Aq * c
            Vp, Vq = V[:, p], V[:, q]
            V[:, p] = Vp * c - Vq * s
            V[:, q] = Vp * s + Vq * c
    logger.debug("Jacobi converged after %d sweeps", sweep)
    w = np.diag(A)[:n0].copy()
    V = V[:n0, :n0] if n != n0 else V
    order = np.argsort(w, kind="stable")
    return w[order], V[:, order]


# ---------------------------------------------------------------- spectrum of M

@dataclass(frozen=True, eq=False)
class Spectrum:
    """Eigenvalues of ``M`` on ``V_f`` and a ``G``-orthonormal eigenbasis.

    ``basis[:, i]`` holds the ``f``-coefficients of ``psi_i``.
    """

    mu: np.ndarray
    basis: np.ndarray
    nu_all: np.ndarray
    gram: np.ndarray
    T: np.ndarray

    @property
    def rank(self) -> int:
        return self.mu.size

    @property
    def A(self) -> float:
        return float(np.min(1.0 - self.mu))

    @property
    def B(self) -> float:
        return float(np.max(1.0 - self.mu))

    def components(self, c) -> np.ndarray:
        """``<psi_i, sum_j c_j f_j>`` for every retained ``i``."""
        return self.basis.T @ (self.gram @ np.asarray(c, dtype=float))

    def to_csv(self, e0=None, einf=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["i", "mu_i", "e0_i", "einf_i"])
        for i, m in enumerate(self.mu):
            w.writerow([i, repr(float(m)),
                        "" if e0 is None else repr(float(e0[i])),
                        "" if einf is None else repr(float(einf[i]))])
        return buf.getvalue()


def eigendecompose_M(gram, samples, eigh=None) -> Spectrum:
    """Spectrum of the POCS operator restricted to ``V_f``.

    Parameters
    ----------
    gram : GramProvider or ndarray
    samples : SampleSet
    eigh : callable, optional
        Symmetric eigen-solver, :func:`jacobi_eigh` by default.
    """
    G = gram.matrix if isinstance(gram, GramProvider) else np.asarray(gram, dtype=float)
    N = G.shape[0]
    if N > 4096:
        raise InvalidArgument("dense spectral analysis limited to N <= 4096")
    dinv = 1.0 / np.sqrt(samples.T)
    H = G * np.outer(dinv, dinv)
    asym = np.max(np.abs(H - H.T)) if N else 0.0
    if asym > 1e-10 * max(np.max(np.abs(H)), 1.0):
        raise NumericError(f"operator is not self-adjoint (asymmetry {asym:.2e})")
    nu, V = (eigh or jacobi_eigh)(H)
    B = np.max(nu)
    keep = nu > RANK_THRESHOLD * B
    basis = dinv[:, None] * V[:, keep] / np.sqrt(nu[keep])
    return Spectrum(1.0 - nu[keep], basis, nu, G, samples.T.copy())


@dataclass(frozen=True, eq=False)
class SemiConvergencePrediction:
    """Closed-form error components at iteration ``n``."""

    mu: np.ndarray
    e0: np.ndarray
    noise: np.ndarray
    einf: np.ndarray
    n: int

    @property
    def algorithmic(self) -> np.ndarray:
        return self.mu ** self.n * self.e0

    @property
    def noise_term(self) -> np.ndarray:
        return (1.0 - self.mu ** self.n) * self.einf

    @property
    def e(self) -> np.ndarray:
        return self.algorithmic + self.noise_term

    @property
    def energy(self) -> float:
        return float(np.sum(self.e ** 2))

    def at(self, n: int) -> "SemiConvergencePrediction":
        return SemiConvergencePrediction(self.mu, self.e0, self.noise, self.einf, n)

    def error_coeffs(self, spec: Spectrum) -> np.ndarray:
        """``f``-coefficients of the predicted error signal."""
        return spec.basis @ self.e


def semiconvergence_predict(spec: Spectrum, s, eta, n: int, samples=None,
                            c_s=None) -> SemiConvergencePrediction:
    """Predict the POCS error ``x^(n) - x_s`` from ``x^(0) = 0`` under noise ``eta``.

    ``x_s`` is the minimal-norm solution for the clean data ``s``; its
    coefficients are computed unless ``c_s`` is given.
    """
    s = np.asarray(s, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if s.shape != spec.T.shape or eta.shape != spec.T.shape:
        raise InvalidArgument("data and noise must have one entry per interval")
    if c_s is None:
        if samples is None:
            raise InvalidArgument("need samples or c_s")
        c_s = pseudo_inverse_coeffs(s, samples, spec.gram)
    e0 = -spec.components(c_s)
    noise = spec.basis.T @ (spec.gram @ (eta / spec.T))
    gap = 1.0 - spec.mu
    if np.any(gap < 1e-12):
        warnings.warn("eigenvalue within 1e-12 of 1: noise amplification is unbounded",
                      RuntimeWarning, stacklevel=2)
    einf = noise / gap
    return SemiConvergencePrediction(spec.mu, e0, noise, einf, int(n))


# ---------------------------------------------------------------- 2-periodic case

_PI_LO = float(np.sin(np.pi))  # pi - fl(pi), exact to double precision


def _Fi(i: int, w, delta: float):
    w = np.asarray(w, dtype=float)
    T = 1.0 + (-1) ** i * 2.0 * delta
    half = 0.5 * w
    safe = np.where(half == 0.0, 1.0, half)
    ratio = np.where(half == 0.0, T, np.sin(T * half) / safe)
    return np.exp(1j * (-1) ** i * half) * ratio


def two_periodic_F(delta: float, omega: float) -> np.ndarray:
    """Polyphase matrix ``[[F0(w), F1(w)], [F0(w-pi), F1(w-pi)]]``."""
    return np.array([[_Fi(0, omega, delta), _Fi(1, omega, delta)],
                     [_Fi(0, omega - np.pi, delta), _Fi(1, omega - np.pi, delta)]])


def two_periodic_detF(delta: float, omega) -> np.ndarray | complex:
    """``4j cos(delta pi) sin(w) / (w (pi - w))``, with its limits at ``0`` and ``pi``."""
    if not 0.0 <= delta < 0.5:
        raise InvalidArgument("delta must lie in [0, 1/2)")
    w = np.asarray(omega, dtype=float)
    if np.any((w < 0) | (w > np.pi)):
        raise InvalidArgument("omega must lie in [0, pi]")
    edge = (w == 0.0) | (w == np.pi)
    # pi - w with the low part of pi restored; near pi the difference is tiny
    denom = np.where(edge, 1.0, w * ((np.pi - w) + _PI_LO))
    ratio = np.where(edge, 1.0 / np.pi, np.sin(w) / denom)
    out = 4j * np.cos(delta * np.pi) * ratio
    return out if out.ndim else complex(out)


def two_periodic_M(delta: float, omega: float) -> np.ndarray:
    """``I - G(w) F(w)^* / 2`` for the midpoint-sinc family."""
    tbar = (-0.5, 0.5)
    G = np.array([[np.exp(-1j * omega * tbar[0]), np.exp(-1j * omega * tbar[1])],
                  [np.exp(-1j * (omega - np.pi) * tbar[0]),
                   np.exp(-1j * (omega - np.pi) * tbar[1])]])
    return np.eye(2) - 0.5 * G @ two_periodic_F(delta, omega).conj().T


def two_periodic_Mnorm(delta) -> np.ndarray | float:
    """``h(delta) = 4 delta^2 + (1 - (2/pi) cos(delta pi))^2``."""
    d = np.asarray(delta, dtype=float)
    if np.any((d < 0) | (d > 0.5)):
        raise InvalidArgument("delta must lie in [0, 1/2]")
    out = 4.0 * d * d + (1.0 - (2.0 / np.pi) * np.cos(d * np.pi)) ** 2
    return out if out.ndim else float(out)


def delta0() -> float:
    """Root of ``h(delta) = 1`` in ``[0, 1/2]``."""
    return float(optimize.brentq(lambda d: two_periodic_Mnorm(d) - 1.0, 0.0, 0.5, xtol=1e-15))


def lazar_threshold() -> float:
    """Largest interval ``1 + 2 delta0`` for which the midpoint-sinc map is non-expansive."""
    return 1.0 + 2.0 * delta0()


def two_periodic_times(delta: float, n_intervals: int, t0: float | None = None) -> np.ndarray:
    """``t_i = i + (-1)^i delta`` for ``i = 0..n_intervals`` (shifted to start at ``t0``)."""
    i = np.arange(n_intervals + 1)
    t = i + np.where(i % 2 == 0, 1.0, -1.0) * delta
    return t if t0 is None else t - t[0] + t0


def two_periodic_d(delta: float) -> float:
    """Threshold producing the 2-periodic switching pattern."""
    return (1.0 - 2.0 * delta * np.sin(delta * np.pi)) / 4.0


def two_periodic_input(delta: float, period: int = 2):
    """``delta pi cos(pi t)`` as a signal of even period ``period``."""
    from .signal import BandlimitedSignal

    if period % 2:
        raise InvalidArgument("the pattern needs an even period")
    K = period // 2
    c = np.zeros(2 * K + 1, dtype=complex)
    c[0] = c[-1] = 0.5 * delta * np.pi
    return BandlimitedSignal(float(period), c)


def lazar_operator(samples, K: int) -> np.ndarray:
    """Matrix of ``u -> u - sum_i <pi_i, u> g_i`` on Fourier coefficients ``-K..K``.

    Coordinates are scaled so the matrix 2-norm is the operator norm.
    """
    P = samples.period
    Pi = pi_matrix(samples, K)  # (N, 2K+1), coefficients / P
    w = 2 * np.pi * np.arange(-K, K + 1) / P
    Gc = np.exp(-1j * np.multiply.outer(w, samples.midpoints)) / P  # (2K+1, N)
    S = P * Pi.conj()  # <pi_i, u> = P sum_k conj(Pi_i(k)) U_k
    return np.eye(2 * K + 1) - Gc @ S

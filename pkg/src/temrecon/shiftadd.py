"""Multiplierless relaxed POCS.

Each correction ``b_i`` is rounded down to a signed power of two,

    b_i = rho(r_i / (T_i / lam)),   rho(v) = sign(v) * 2**floor(log2|v|),

so ``A b`` only needs shifted copies of the Gram coefficients.  The
induced relaxation ``T_i b_i / r_i`` then lies in ``(lam/2, lam]``.
Shifts are done with ``ldexp`` and are exact; additions are ordinary
IEEE double additions performed in a fixed order, which makes every
result bit-reproducible.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import InvalidArgument, NumericError
from .kernels import GramProvider, IDEAL, LowpassKernel
from .recon import Reconstructor

__all__ = [
    "Pow2",
    "DEFAULT_LAMBDA",
    "EXP_LIMIT",
    "ShiftAddConfig",
    "thresholds",
    "AddAudit",
    "rho",
    "rho_array",
    "beta",
    "beta_array",
    "shift",
    "sys2_step",
    "run_multiplierless",
    "MultiplierlessResult",
]

logger = logging.getLogger(__name__)

DEFAULT_LAMBDA = 1.0 / (2.0 ** -1 + 2.0 ** -4)
EXP_LIMIT = 62


@dataclass(frozen=True)
class Pow2:
    """``sign * 2**exp`` with ``sign`` in ``{-1, 0, 1}``."""

    sign: int
    exp: int = 0

    def __post_init__(self):
        if self.sign not in (-1, 0, 1):
            raise InvalidArgument("sign must be -1, 0 or 1")
        if self.sign == 0:
            object.__setattr__(self, "exp", 0)
        elif not -EXP_LIMIT <= self.exp <= EXP_LIMIT:
            raise NumericError(f"power-of-two exponent {self.exp} outside +-{EXP_LIMIT}")

    @property
    def value(self) -> float:
        return math.ldexp(float(self.sign), self.exp) if self.sign else 0.0

    def __float__(self):
        return self.value

    def times(self, a: float) -> float:
        """``a * self`` by a shift and a sign flip."""
        if self.sign == 0:
            return 0.0
        v = math.ldexp(a, self.exp)
        return -v if self.sign < 0 else v


def rho(r: float) -> Pow2:
    """Largest power of two not exceeding ``|r|``, with the sign of ``r``."""
    if r == 0:
        return Pow2(0)
    if not math.isfinite(r):
        raise NumericError(f"cannot round {r!r} to a power of two")
    _, e = math.frexp(abs(r))  # |r| = m 2**e, m in [1/2, 1)
    return Pow2(1 if r > 0 else -1, e - 1)


def beta(r: float, t_over_lambda: float) -> Pow2:
    """``rho(r / t_over_lambda)`` from exponent and mantissa comparisons only."""
    if not t_over_lambda > 0:
        raise InvalidArgument("t_over_lambda must be positive")
    if r == 0:
        return Pow2(0)
    if not math.isfinite(r):
        raise NumericError(f"non-finite residual {r!r}")
    mr, er = math.frexp(abs(r))
    ma, ea = math.frexp(t_over_lambda)
    k = er - ea if mr >= ma else er - ea - 1
    return Pow2(1 if r > 0 else -1, k)


def _check_exp(sign, exp):
    bad = (sign != 0) & (np.abs(exp) > EXP_LIMIT)
    if np.any(bad):
        raise NumericError(
            f"power-of-two exponent {int(exp[bad][0])} outside +-{EXP_LIMIT}")


def rho_array(r) -> tuple[np.ndarray, np.ndarray]:
    r = np.asarray(r, dtype=float)
    if not np.all(np.isfinite(r)):
        raise NumericError("non-finite residual")
    _, e = np.frexp(np.abs(r))
    sign = np.sign(r).astype(np.int64)
    exp = np.where(sign != 0, e - 1, 0).astype(np.int64)
    _check_exp(sign, exp)
    return sign, exp


def beta_array(r, t_over_lambda) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`beta`; returns ``(sign, exp)`` arrays."""
    r = np.asarray(r, dtype=float)
    a = np.asarray(t_over_lambda, dtype=float)
    if not np.all(np.isfinite(r)):
        raise NumericError("non-finite residual")
    mr, er = np.frexp(np.abs(r))
    ma, ea = np.frexp(a)
    k = er - ea - (mr < ma)
    sign = np.sign(r).astype(np.int64)
    exp = np.where(sign != 0, k, 0).astype(np.int64)
    _check_exp(sign, exp)
    return sign, exp


def shift(a, sign, exp):
    """``a * sign * 2**exp`` without a multiplier."""
    v = np.ldexp(a, exp)
    return np.where(sign < 0, -v, np.where(sign > 0, v, 0.0))


def pow2_values(sign, exp) -> np.ndarray:
    return shift(np.ones(np.shape(sign)), sign, exp)


class AddAudit:
    """Counts additions and shifts; refuses general multiplication.

    Arrays handed out by :meth:`guard` raise on ``*`` and ``@`` so a code
    path that slipped in a real product fails loudly under audit.
    """

    def __init__(self):
        self.adds = 0
        self.shifts = 0

    def add(self, a, b, n: int | None = None):
        self.adds += int(np.size(a) if n is None else n)
        return a + b

    def sub(self, a, b, n: int | None = None):
        self.adds += int(np.size(a) if n is None else n)
        return a - b

    def shift(self, a, sign, exp):
        self.shifts += int(np.count_nonzero(sign))
        return shift(np.asarray(a).view(np.ndarray), sign, exp)

    @staticmethod
    def guard(a) -> "_NoMul":
        return np.asarray(a, dtype=float).view(_NoMul)


class _NoMul(np.ndarray):
    def _refuse(self, *args, **kwargs):
        raise TypeError("general multiplication is not allowed in shift-add arithmetic")

    __mul__ = __rmul__ = __imul__ = __matmul__ = __rmatmul__ = _refuse
    __truediv__ = __rtruediv__ = _refuse


def thresholds(T, lam: float = DEFAULT_LAMBDA) -> np.ndarray:
    """Smallest doubles ``a_i`` with ``a_i * lam >= T_i`` in exact arithmetic.

    Rounding upward is what keeps ``T_i b_i / r_i`` inside ``(lam/2, lam]``
    for every floating-point residual: no double lies strictly between
    ``2**k T_i / lam`` and ``2**k a_i``.  For the default relaxation ``lam``
    is taken as exactly ``16/9`` and ``a = T/2 + T/16`` is corrected by
    the error term of that single addition (TwoSum), so only shifts and
    adds are involved.  Other values go through a one-off rational check.
    """
    T = np.asarray(T, dtype=float)
    if lam == DEFAULT_LAMBDA:
        x, y = np.ldexp(T, -1), np.ldexp(T, -4)
        a = x + y
        yv = a - x
        err = (x - (a - yv)) + (y - yv)  # exact: a + err == x + y
        return np.where(err > 0, np.nextafter(a, np.inf), a)
    out = T / lam
    fl = Fraction(lam)
    for i, (a, t) in enumerate(zip(out, T)):
        ft = Fraction(float(t))
        while Fraction(float(a)) * fl < ft:
            a = np.nextafter(a, np.inf)
        while Fraction(float(np.nextafter(a, -np.inf))) * fl >= ft:
            a = np.nextafter(a, -np.inf)
        out[i] = a
    return out


@dataclass(frozen=True, eq=False)
class ShiftAddConfig:
    """Relaxation and the precomputed thresholds ``T_i / lam``.

    Thresholds come from :func:`thresholds`; for the default
    ``lam = 1/(2**-1 + 2**-4)`` they are formed as ``T/2 + T/16``.
    """

    lam: float
    t_over_lambda: np.ndarray

    def __post_init__(self):
        if not 0 < self.lam < 2:
            raise InvalidArgument("relaxation must lie in (0, 2)")
        a = np.asarray(self.t_over_lambda, dtype=float).copy()
        if np.any(a <= 0):
            raise InvalidArgument("T_i / lambda must be positive")
        a.setflags(write=False)
        object.__setattr__(self, "t_over_lambda", a)

    @classmethod
    def from_samples(cls, samples, lam: float = DEFAULT_LAMBDA) -> "ShiftAddConfig":
        return cls(float(lam), thresholds(samples.T, lam))

    @property
    def epsilon(self) -> float:
        return min(0.5 * self.lam, 2.0 - self.lam)


def _matrix(gram):
    return gram.matrix if isinstance(gram, GramProvider) else np.asarray(gram, dtype=float)


def sys2_step(r, c, gram, cfg: ShiftAddConfig, audit: AddAudit | None = None,
              band: int | None = None, circular: bool = False):
    """One multiplierless iteration ``(r, c) -> (r - A b, c + b)``.

    Parameters
    ----------
    r, c : ndarray
        Residuals and coefficients.
    gram : GramProvider or ndarray
        The (possibly banded) matrix ``A``.
    cfg : ShiftAddConfig
    audit : AddAudit, optional
        Count operations and forbid multiplication.
    band, circular : optional
        With ``band`` set, row ``i`` sums over ``j = i-band .. i+band`` in
        that order (indices taken modulo ``N`` when ``circular``); this is
        the order used by the streaming pipeline.  Otherwise the sum runs
        over columns in ascending order.

    Returns
    -------
    r_new, c_new : ndarray
    b : tuple of ndarray
        ``(sign, exp)`` of the power-of-two corrections.
    """
    r = np.asarray(r, dtype=float)
    c = np.asarray(c, dtype=float)
    A = _matrix(gram)
    N = r.size
    if c.shape != (N,) or A.shape != (N, N) or cfg.t_over_lambda.shape != (N,):
        raise InvalidArgument("dimension mismatch in sys2_step")
    sign, exp = beta_array(r, cfg.t_over_lambda)
    bval = pow2_values(sign, exp)
    if audit is not None:
        A = audit.guard(A)
    acc = np.zeros(N)
    first = True
    if band is None:
        for j in range(N):
            if audit is not None:
                term = audit.shift(A[:, j], sign[j], exp[j])
                acc = term if first else audit.add(acc, term)
            else:
                acc += shift(A[:, j], sign[j], exp[j])
            first = False
    else:
        rows = np.arange(N)
        for m in range(-band, band + 1):
            j = rows + m
            if circular:
                j = j % N
                ok = np.ones(N, dtype=bool)
            else:
                ok = (j >= 0) & (j < N)
                j = np.clip(j, 0, N - 1)
            a = np.where(ok, np.asarray(A)[rows, j], 0.0)
            term = shift(a, np.where(ok, sign[j], 0), exp[j])
            if audit is not None:
                acc = term if first else audit.add(acc, term)
            else:
                acc += term
            first = False
    if audit is not None:
        r_new = audit.sub(r, acc)
        c_new = audit.add(c, bval)
    else:
        r_new = r - acc
        c_new = c + bval
    return r_new, c_new, (sign, exp)


@dataclass(frozen=True, eq=False)
class MultiplierlessResult:
    c: np.ndarray
    r: np.ndarray
    mse: np.ndarray | None
    induced_lambda: tuple[float, float]
    exp_range: tuple[int, int]
    iterations: int


def run_multiplierless(samples, gram, cfg: ShiftAddConfig | None = None, n_iters: int = 0,
                       reference=None, kernel: LowpassKernel = IDEAL, s=None,
                       band: int | None = None, circular: bool = False,
                       history: bool = False) -> MultiplierlessResult:
    """Iterate :func:`sys2_step` from ``(s, 0)``.

    The induced relaxation ``T_i b_i / r_i`` and the exponent range of
    ``b`` are tracked over the whole run and logged.
    """
    if n_iters < 0:
        raise InvalidArgument("n_iters must be nonnegative")
    cfg = ShiftAddConfig.from_samples(samples) if cfg is None else cfg
    r = samples.s.astype(float).copy() if s is None else np.asarray(s, dtype=float).copy()
    c = np.zeros_like(r)
    recon = Reconstructor(samples, kernel) if reference is not None else None
    cs = [c.copy()]
    lam_lo, lam_hi = np.inf, -np.inf
    e_lo, e_hi = 0, 0
    for _ in range(n_iters):
        r_old = r
        r, c, (sign, exp) = sys2_step(r, c, gram, cfg, band=band, circular=circular)
        nz = sign != 0
        if np.any(nz):
            induced = samples.T[nz] * pow2_values(sign[nz], exp[nz]) / r_old[nz]
            lam_lo, lam_hi = min(lam_lo, induced.min()), max(lam_hi, induced.max())
            e_lo, e_hi = min(e_lo, int(exp[nz].min())), max(e_hi, int(exp[nz].max()))
        if recon is not None or history:
            cs.append(c.copy())
    if np.isfinite(lam_lo):
        logger.debug("induced relaxation in [%.6f, %.6f], exponents %d..%d",
                     lam_lo, lam_hi, e_lo, e_hi)
    mse = recon.mse_many(np.array(cs), reference) if recon is not None else None
    return MultiplierlessResult(c, r, mse, (float(lam_lo), float(lam_hi)), (e_lo, e_hi), n_iters)

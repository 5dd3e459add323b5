"""Asynchronous Sigma-Delta modulator (ASDM) time encoder.

The integrator ramps with slope ``x(t) + 1`` from ``-d`` up to ``+d``,
then with slope ``x(t) - 1`` back down to ``-d``, and so on.  Interval
``i`` (between ``tau[i-1]`` and ``tau[i]``) therefore satisfies

    int x dt = (-1)**i * ((tau[i] - tau[i-1]) - 2 d)

with the first interval (``i = 1``) rising.  Event detection solves the
monotone equation for each switching instant from the closed-form
antiderivative of the Fourier series with safeguarded Newton steps.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import optimize

from .errors import (CalibrationError, InvalidArgument, NumericError,
                     OverloadError, QuantizationCollision)
from .signal import BandlimitedSignal

__all__ = [
    "EncoderConfig",
    "EventTrain",
    "SampleSet",
    "encode",
    "extract_samples",
    "quantize",
    "calibrate_d",
    "density",
    "samples_from_times",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EncoderConfig:
    """Encoder parameters.

    ``close_period`` makes the encoder retune ``d`` slightly (a relative
    change of order ``1/N``) so that an even switching instant lands
    exactly on ``t0 + period``; the resulting event train is then the
    periodic steady state of the modulator.
    """

    d: float
    quant_step: float = 0.0
    root_tol: float | None = None
    quant_mode: str = "nearest"
    t0: float = 0.0
    close_period: bool = False

    def __post_init__(self):
        if not self.d > 0:
            raise InvalidArgument("threshold d must be positive")
        if self.quant_step < 0:
            raise InvalidArgument("quant_step must be nonnegative")
        if self.quant_mode not in ("nearest", "truncate"):
            raise InvalidArgument("quant_mode must be 'nearest' or 'truncate'")


@dataclass(frozen=True, eq=False)
class EventTrain:
    """Switching instants of one encoding run.

    ``initial_state`` is the direction of the integrator ramp on the first
    interval (+1: rising from ``-d``).
    """

    taus: np.ndarray
    initial_state: int
    period: float
    d: float
    t0: float = 0.0

    def __post_init__(self):
        taus = np.asarray(self.taus, dtype=float)
        if taus.ndim != 1 or np.any(np.diff(taus) <= 0):
            raise InvalidArgument("switching instants must be strictly increasing")
        taus.setflags(write=False)
        object.__setattr__(self, "taus", taus)

    def __len__(self):
        return self.taus.size

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["index", "tau"])
        for i, tau in enumerate(self.taus):
            w.writerow([i, repr(float(tau))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, period: float, d: float = float("nan"),
                 initial_state: int = 1) -> "EventTrain":
        """Read the ``index,tau`` format; the train starts at its first instant."""
        rows = list(csv.DictReader(io.StringIO(text)))
        if not rows or "tau" not in rows[0]:
            raise InvalidArgument("events CSV needs a 'tau' column")
        taus = np.array([float(r["tau"]) for r in rows])
        return cls(taus, initial_state, float(period), d, float(taus[0]))


@dataclass(frozen=True, eq=False)
class SampleSet:
    """Interval endpoints ``t_0 < ... < t_N`` and integrals ``s_1..s_N``.

    ``closed`` is set when the intervals tile exactly one signal period,
    in which case index arithmetic may wrap around (interval ``N`` abuts
    interval ``1`` shifted by one period).
    """

    t: np.ndarray
    s: np.ndarray
    period: float | None = None
    closed: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        s = np.asarray(self.s, dtype=float)
        if t.ndim != 1 or t.size < 2:
            raise InvalidArgument("need at least one interval")
        if s.shape != (t.size - 1,):
            raise InvalidArgument("len(s) must equal len(t) - 1")
        if np.any(np.diff(t) <= 0):
            raise InvalidArgument("t must be strictly increasing")
        t.setflags(write=False)
        s.setflags(write=False)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "s", s)
        T = np.diff(t)
        T.setflags(write=False)
        object.__setattr__(self, "T", T)

    @property
    def N(self) -> int:
        return self.s.size

    @property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.t[:-1] + self.t[1:])

    def with_s(self, s) -> "SampleSet":
        return SampleSet(self.t, s, self.period, self.closed, dict(self.meta))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["index", "t", "s", "T"])
        w.writerow([0, repr(float(self.t[0])), "", ""])
        for i in range(self.N):
            w.writerow([i + 1, repr(float(self.t[i + 1])), repr(float(self.s[i])),
                        repr(float(self.T[i]))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, period: float | None = None) -> "SampleSet":
        rows = list(csv.DictReader(io.StringIO(text)))
        t = [float(r["t"]) for r in rows]
        s = [float(r["s"]) for r in rows[1:]]
        closed = period is not None and abs(t[-1] - t[0] - period) <= 1e-9 * period
        return cls(np.array(t), np.array(s), period, closed)


def samples_from_times(t, x: BandlimitedSignal | None = None, s=None,
                       period: float | None = None) -> SampleSet:
    """Sample set on given instants, integrals taken exactly from ``x``."""
    from .signal import antiderivative

    t = np.asarray(t, dtype=float)
    if s is None:
        if x is None:
            raise InvalidArgument("need either x or s")
        s = antiderivative(x, t[:-1], t[1:])
        period = x.period if period is None else period
    closed = period is not None and abs(t[-1] - t[0] - period) <= 1e-12 * max(period, 1.0)
    return SampleSet(t, np.asarray(s, dtype=float), period, closed)


class _Ramp:
    """Closed-form antiderivative and value of ``x`` at scalar times."""

    def __init__(self, x: BandlimitedSignal):
        K = x.K
        self.c0 = float(x.coeffs[K].real)
        self.w = x.omegas[K + 1:]
        self.ck = x.coeffs[K + 1:]
        self.gk = self.ck / (1j * self.w)

    def both(self, t: float):
        e = np.exp(1j * self.w * t)
        F = self.c0 * t + 2.0 * float(np.dot(e, self.gk).real)
        v = self.c0 + 2.0 * float(np.dot(e, self.ck).real)
        return F, v

    def F(self, t: float) -> float:
        e = np.exp(1j * self.w * t)
        return self.c0 * t + 2.0 * float(np.dot(e, self.gk).real)


def _next_switch(ramp: _Ramp, a: float, Fa: float, xa: float, sigma: int,
                 d: float, xm: float, tol: float):
    """Solve ``(tau - a) + sigma (F(tau) - F(a)) = 2d`` for ``tau > a``."""
    lo, hi = a, a + 2.0 * d / (1.0 - xm)
    tau = a + 2.0 * d / (1.0 + sigma * xa)
    if not lo < tau < hi:
        tau = 0.5 * (lo + hi)
    q = dq = 0.0
    for _ in range(100):
        F, v = ramp.both(tau)
        q = (tau - a) + sigma * (F - Fa) - 2.0 * d
        dq = 1.0 + sigma * v
        if q > 0:
            hi = tau
        else:
            lo = tau
        step = q / dq if dq > 0 else np.inf
        new = tau - step
        if not lo <= new <= hi:
            new = 0.5 * (lo + hi)
        if abs(new - tau) <= 4 * np.spacing(max(abs(tau), 1.0)) or hi - lo <= 4 * np.spacing(hi):
            tau = new
            break
        tau = new
    F, v = ramp.both(tau)
    q = (tau - a) + sigma * (F - Fa) - 2.0 * d
    if abs(q) > tol:
        raise NumericError(
            f"switch detection did not converge on [{a!r}, {hi!r}]: residual {q:.3e}")
    return tau, F, v


def _simulate(ramp: _Ramp, d: float, t0: float, stop: float, xm: float,
              tol: float, max_events: int | None = None) -> np.ndarray:
    taus = [t0]
    a = t0
    Fa, xa = ramp.both(a)
    sigma = 1
    while taus[-1] < stop or (len(taus) - 1) % 2:
        a, Fa, xa = _next_switch(ramp, a, Fa, xa, sigma, d, xm, tol)
        taus.append(a)
        sigma = -sigma
        if max_events is not None and len(taus) - 1 >= max_events:
            break
    return np.array(taus)


def _amplitude(x: BandlimitedSignal) -> float:
    xm = x.max_abs(oversample=16)
    if xm >= 1.0:
        raise OverloadError(f"max |x(t)| = {xm:.4f} >= 1: modulator overload")
    return xm


def encode(x: BandlimitedSignal, cfg: EncoderConfig) -> EventTrain:
    """Switching instants covering one period of ``x`` starting at ``cfg.t0``."""
    xm = _amplitude(x)
    # the grid maximum can undershoot the true peak slightly
    xm_safe = min(0.5 * (1.0 + xm), xm + 0.05)
    tol = cfg.root_tol if cfg.root_tol is not None else 1e-13 * x.period
    ramp = _Ramp(x)
    stop = cfg.t0 + x.period
    d = cfg.d
    taus = _simulate(ramp, d, cfg.t0, stop, xm_safe, tol)
    if cfg.close_period:
        d, taus = _close(ramp, d, cfg.t0, stop, xm_safe, tol, taus)
    train = EventTrain(taus, +1, x.period, d, cfg.t0)
    if cfg.quant_step > 0:
        train = quantize(train, cfg.quant_step, cfg.quant_mode)
    return train


def _close(ramp, d, t0, stop, xm, tol, taus):
    even = taus[::2]
    N = int(np.searchsorted(even, stop, side="right")) - 1
    if N < 1:
        raise CalibrationError("threshold too large: no complete interval in one period")
    gap = stop - even[N]
    if N + 1 < even.size and gap > 0.5 * (even[N + 1] - even[N]):
        N += 1
    n_events = 2 * N

    def miss(dd):
        tt = _simulate(ramp, dd, t0, np.inf, xm, tol, max_events=n_events)
        return tt[-1] - stop, tt

    reach = taus[n_events] - t0 if n_events < taus.size else even[-1] - t0
    guess = d * (stop - t0) / reach
    lo, hi = guess * (1 - 2e-3), guess * (1 + 2e-3)
    flo, fhi = miss(lo)[0], miss(hi)[0]
    for _ in range(20):
        if flo < 0 < fhi:
            break
        lo, hi = lo * (1 - 1e-2), hi * (1 + 1e-2)
        flo, fhi = miss(lo)[0], miss(hi)[0]
    else:
        raise CalibrationError("could not bracket the period-closing threshold")
    d_new = optimize.brentq(lambda dd: miss(dd)[0], lo, hi, xtol=1e-18, rtol=4 * np.finfo(float).eps)
    err, tt = miss(d_new)
    if abs(err) > max(tol, 1e-11 * stop):
        raise NumericError(f"period closure residual {err:.3e}")
    tt = tt.copy()
    tt[-1] = stop
    return d_new, tt


def extract_samples(e: EventTrain) -> SampleSet:
    """Even-indexed instants and the d-free integrals between them."""
    taus = e.taus
    if taus.size < 3:
        raise InvalidArgument("need at least three switching instants")
    stop = e.t0 + e.period
    slack = 1e-12 * max(abs(stop), 1.0)
    even = taus[::2]
    N = int(np.searchsorted(even, stop + slack, side="right")) - 1
    if N < 1:
        raise InvalidArgument("no complete interval within the period")
    t = even[:N + 1]
    lo = taus[0:2 * N:2]
    mid = taus[1:2 * N:2]
    hi = taus[2:2 * N + 1:2]
    s = (hi - mid) - (mid - lo)
    closed = abs(t[-1] - stop) <= slack
    if closed:
        t = t.copy()
        t[-1] = stop
    meta = {"d": e.d, "events": int(taus.size), "N": int(N)}
    return SampleSet(t, s, e.period, closed, meta)


def quantize(e: EventTrain, step: float, mode: str = "nearest") -> EventTrain:
    """Round every switching instant onto the grid ``k * step``."""
    if not step > 0:
        raise InvalidArgument("quantization step must be positive")
    if mode == "nearest":
        q = np.round(e.taus / step) * step  # numpy rounds half to even
    elif mode == "truncate":
        q = np.floor(e.taus / step) * step
    else:
        raise InvalidArgument(f"unknown quantization mode {mode!r}")
    if np.any(np.diff(q) <= 0):
        k = int(np.argmin(np.diff(q)))
        raise QuantizationCollision(
            f"instants {e.taus[k]!r} and {e.taus[k + 1]!r} collide on step {step!r}")
    return EventTrain(q, e.initial_state, e.period, e.d, float(q[0]))


def density(samples: SampleSet) -> float:
    """Mean number of instants ``t_i`` per Nyquist period."""
    return samples.N / float(samples.t[-1] - samples.t[0])


def calibrate_d(x_class: Callable[[int], BandlimitedSignal] | Sequence[BandlimitedSignal],
                target_density: float, trials: int = 4, seeds: Iterable[int] | None = None,
                tol: float = 1e-3) -> float:
    """Threshold ``d`` giving the requested mean density of ``t_i``.

    ``x_class`` is either a sequence of signals or a callable mapping a
    seed to a signal.  The density is decreasing in ``d``; the search is
    bracketed by ``(1 - x_m)/(4 rho)`` and ``1/(4 rho)`` (exact for the
    zero signal).
    """
    if not target_density > 0:
        raise InvalidArgument("target density must be positive")
    if callable(x_class):
        seeds = list(range(trials)) if seeds is None else list(seeds)
        signals = [x_class(sd) for sd in seeds]
    else:
        signals = list(x_class)
    if not signals:
        raise InvalidArgument("no calibration signals")
    xm = max(_amplitude(x) for x in signals)
    d_hi = 1.0 / (4.0 * target_density)
    if xm == 0.0:
        return d_hi
    d_lo = (1.0 - xm) / (4.0 * target_density)

    def excess(d):
        dens = [density(extract_samples(encode(x, EncoderConfig(d=d)))) for x in signals]
        return float(np.mean(dens)) - target_density

    f_lo, f_hi = excess(d_lo), excess(d_hi)
    if not f_lo >= 0 >= f_hi:
        raise CalibrationError(
            f"density bracket failed: {f_lo + target_density:.4f} .. {f_hi + target_density:.4f}")
    if f_hi == 0:
        return d_hi
    d = optimize.brentq(excess, d_lo, d_hi, rtol=tol)
    logger.debug("calibrated d=%.6f for density %.3f", d, target_density)
    return d

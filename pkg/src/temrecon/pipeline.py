"""Sliding-window pipeline for the truncated multiplierless iteration.

Each stage is a time-varying FIR filter on the stream of power-of-two
corrections ``b_k``.  At stream time ``k`` it emits the outputs for
index ``k - L``:

    p_{k-L} = sum_{l=2L..0} ahat_k^l b_{k-l},
    r'_{k-L} = r_{k-L} - p_{k-L},   c'_{k-L} = c_{k-L} + b_{k-L},

with ``ahat_k^l = <f_{k-L}, f_{k-l}>`` (zero outside the index range).
The coefficient vectors come from a single generator fed with the
interval lengths ``T``; it keeps running sums of ``T`` as lags, looks
``hbar`` up and differences the results:

    D_k^l = hbar(lag to t_{k-l}) - hbar(lag to t_{k-l+1}),
    ahat_k^l = D_k^l - D_{k-1}^{l-1},

the lags being taken from ``t_{k-L+1}``.  The diagonal uses
``h(T) + h(T)`` from the dedicated diagonal table.
"""

from __future__ import annotations

import csv
import io
import json
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument
from .kernels import IDEAL, HTable, LowpassKernel, h_eval, hbar_eval
from .recon import Reconstructor
from .shiftadd import DEFAULT_LAMBDA, Pow2, ShiftAddConfig, beta

__all__ = [
    "PipelineConfig",
    "CoeffStream",
    "StageState",
    "stage_step",
    "coeff_stream_step",
    "pipeline_run",
    "PipelineResult",
    "adder_count",
    "coeff_stream_adders",
    "stage_adders",
]


def coeff_stream_adders(L: int) -> int:
    """Lag registers ``2L``, differences ``D`` ``2L+2``, ``ahat`` ``2L+1``."""
    return 2 * L + (2 * L + 2) + (2 * L + 1)


def stage_adders(L: int) -> int:
    """``2L`` to sum the ``2L+1`` shifted terms, one for ``r - p``, one for ``c + b``."""
    return 2 * L + 2


def adder_count(L: int, n: int) -> int:
    """Adders for ``n`` stages with half-width ``L``: ``n(2L+2) + 6L+3``."""
    if L < 0 or n < 0:
        raise InvalidArgument("L and n must be nonnegative")
    return n * (2 * L + 2) + 6 * L + 3


@dataclass(frozen=True, eq=False)
class PipelineConfig:
    """Pipeline parameters.

    ``table`` supplies ``hbar`` and diagonal ``h`` by exact lookup; without
    it both are evaluated analytically for ``kernel``.  ``circular``
    selects wrap-around banding on a closed sample set (``None``: use it
    whenever the samples are closed and wide enough).  ``lam_schedule``
    optionally gives one relaxation per stage.
    """

    L: int
    n_stages: int
    lam: float = DEFAULT_LAMBDA
    kernel: LowpassKernel = IDEAL
    table: HTable | None = None
    circular: bool | None = None
    lam_schedule: tuple | None = None

    def __post_init__(self):
        if self.L < 0:
            raise InvalidArgument("L must be nonnegative")
        if self.n_stages < 0:
            raise InvalidArgument("n_stages must be nonnegative")
        if self.lam_schedule is not None and len(self.lam_schedule) != self.n_stages:
            raise InvalidArgument("lam_schedule needs one entry per stage")
        if self.table is not None and self.table.kernel != self.kernel:
            raise InvalidArgument("table was built for a different kernel")

    def stage_lambda(self, m: int) -> float:
        return self.lam if self.lam_schedule is None else float(self.lam_schedule[m])


class CoeffStream:
    """Streaming generator of ``ahat_k`` from the interval lengths.

    Parameters
    ----------
    L : int
    hbar, h_diag : callable
        Vectorised ``hbar(|t|)`` and diagonal ``h(T)``.
    """

    def __init__(self, L: int, hbar, h_diag):
        self.L = L
        self.hbar = hbar
        self.h_diag = h_diag
        self.k = -1
        # reg[n] = t_{k+1} - t_{k+1-n}, n = 0..2L+1; the last L+1 files are kept
        self.history = deque([np.zeros(2 * L + 2) for _ in range(L + 2)], maxlen=L + 2)
        self.D_prev = np.zeros(2 * L + 1)  # D_{k-1}^l, l = 0..2L
        self.adds = 0
        self.adds_per_step: set[int] = set()

    def step(self, T_next: float) -> np.ndarray:
        """Consume ``T_{k+1}`` and return ``ahat_k`` (index ``l = 0..2L``)."""
        L = self.L
        before = self.adds
        old = self.history[-1]
        reg = np.empty(2 * L + 2)
        reg[0] = 0.0
        reg[1] = T_next
        reg[2:] = T_next + old[1:2 * L + 1]
        self.adds += 2 * L
        self.history.append(reg)
        self.k += 1
        H = self.history  # H[-1 - delta]: register file delta steps ago

        # signed lags t_b - t_p, b = k-L+1, for offsets o = p - b in -L-1..L
        lag = np.empty(2 * L + 2)
        base = H[-1 - L]
        lag[:L + 1] = base[L + 1:0:-1]  # o = -(L+1) .. -1
        lag[L + 1] = 0.0  # o = 0
        for n in range(1, L + 1):  # o = n, read when t_{b+n} was newest
            lag[L + 1 + n] = -H[-1 - (L - n)][n]
        # extra lags for D_{k-1}^{-1}: from t_{k-L} to t_k and t_{k+1}
        lag_m1 = np.array([-H[-2][L], -H[-1][L + 1]])
        g = np.asarray(self.hbar(np.concatenate([lag, lag_m1])), dtype=float)
        gk, gm = g[:2 * L + 2], g[2 * L + 2:]
        # D_k^l = g[o = L-1-l] - g[o = L-l]; array position of o is o + L + 1
        l = np.arange(2 * L + 1)
        D = gk[2 * L - l] - gk[2 * L + 1 - l]
        D_m1 = gm[0] - gm[1]
        self.adds += 2 * L + 2
        prev = np.concatenate([[D_m1], self.D_prev[:2 * L]])  # D_{k-1}^{l-1}
        a = D - prev
        hd = float(self.h_diag(base[1]))
        a[L] = hd + hd
        self.adds += 2 * L + 1
        self.D_prev = D
        self.adds_per_step.add(self.adds - before)
        return a


def coeff_stream_step(cs: CoeffStream, T_next: float) -> tuple[CoeffStream, np.ndarray]:
    a = cs.step(T_next)
    return cs, a


@dataclass(eq=False)
class StageState:
    """Delay lines of one stage: ``2L+1`` corrections and depth-``L`` alignment."""

    L: int
    b_delay: deque = field(default=None)
    r_delay: deque = field(default=None)
    c_delay: deque = field(default=None)
    k: int = 0
    adds: int = 0

    def __post_init__(self):
        L = self.L
        if self.b_delay is None:
            self.b_delay = deque([Pow2(0)] * (2 * L + 1), maxlen=2 * L + 1)
        if self.r_delay is None:
            self.r_delay = deque([0.0] * (L + 1), maxlen=L + 1)
        if self.c_delay is None:
            self.c_delay = deque([0.0] * (L + 1), maxlen=L + 1)


def stage_step(st: StageState, r_in: float, c_in: float, t_over_lambda: float,
               a_hat, trace: list | None = None) -> tuple[StageState, float, float]:
    """Advance one stage by one time step; outputs belong to index ``k - L``."""
    L = st.L
    if len(a_hat) != 2 * L + 1:
        raise InvalidArgument("a_hat must have 2L+1 entries")
    b = beta(r_in, t_over_lambda)
    st.b_delay.appendleft(b)  # b_delay[l] = b_{k-l}
    st.r_delay.appendleft(r_in)
    st.c_delay.appendleft(c_in)
    p = 0.0
    for ell in range(2 * L, -1, -1):
        term = st.b_delay[ell].times(float(a_hat[ell]))
        p = term if ell == 2 * L else p + term
    r_out = st.r_delay[L] - p
    c_out = st.c_delay[L] + st.b_delay[L].value
    st.adds += 2 * L + 2
    if trace is not None:
        trace.append((st.k, r_in, b.exp if b.sign else "", p, r_out, c_out))
    st.k += 1
    return st, r_out, c_out


@dataclass(frozen=True, eq=False)
class PipelineResult:
    c: np.ndarray
    r: np.ndarray
    stage_c: list
    mse: np.ndarray | None
    adder_report: dict
    trace: list | None = None

    def trace_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["stage", "k", "r_in", "b_exp", "p", "r_out", "c_out"])
        for m, rows in enumerate(self.trace or []):
            for row in rows:
                w.writerow([m + 1, *[repr(v) if isinstance(v, float) else v for v in row]])
        return buf.getvalue()

    def adder_report_json(self) -> str:
        return json.dumps(self.adder_report, indent=2, sort_keys=True)


def _lookups(cfg: PipelineConfig):
    if cfg.table is not None:
        return cfg.table.hbar, cfg.table.h_diag
    k = cfg.kernel
    return (lambda x: hbar_eval(k, x)), (lambda x: h_eval(k, x))


def pipeline_run(samples, cfg: PipelineConfig, reference=None, s=None,
                 trace: bool = False) -> PipelineResult:
    """Run ``cfg.n_stages`` chained stages over the whole sample stream.

    In the zero-padded mode the streams are flushed with ``L`` zeros so
    every index ``0..N-1`` is produced.  In circular mode the input is the
    periodic extension of the closed sample set, long enough that the
    outputs for ``0..N-1`` equal the wrap-around banded iteration.
    """
    N = samples.N
    L = cfg.L
    circular = cfg.circular
    if circular is None:
        circular = bool(samples.closed) and 2 * L + 1 <= N
    if circular and not samples.closed:
        raise InvalidArgument("circular pipeline needs a closed sample set")
    if circular and 2 * L + 1 > N:
        raise InvalidArgument("window wider than the sample set")
    s = samples.s if s is None else np.asarray(s, dtype=float)
    T = samples.T
    n = cfg.n_stages
    hbar, h_diag = _lookups(cfg)
    tol = [ShiftAddConfig.from_samples(samples, cfg.stage_lambda(m)).t_over_lambda
           for m in range(n)]

    # coefficient stream, computed once and fanned out to every stage
    if circular:
        pad = n * L
        k_first = -pad - (2 * L + 2)
        k_last = N - 1 + pad
    else:
        pad = 0
        k_first = 0
        k_last = N - 1 + L
    cs = CoeffStream(L, hbar, h_diag)
    ahat = {}
    for k in range(k_first, k_last + 1):
        if circular:
            Tn = float(T[k % N])
        else:
            Tn = float(T[k]) if k < N else 0.0
        a = cs.step(Tn)
        if not circular:
            i = k - L
            j = k - np.arange(2 * L + 1)
            ok = (0 <= i < N) & (j >= 0) & (j < N)
            a = np.where(ok, a, 0.0)
        ahat[k] = a

    stage_c = [np.zeros(N)]
    traces = [] if trace else None
    stage_adds = []
    if circular:
        lo, hi = -pad, N - 1 + pad
        idx = np.arange(lo, hi + 1)
        r_in = s[idx % N].astype(float)
        c_in = np.zeros(idx.size)
    else:
        lo, hi = 0, N - 1
        r_in = s.astype(float).copy()
        c_in = np.zeros(N)
    r_out_final = r_in
    for m in range(n):
        st = StageState(L)
        tr = [] if trace else None
        outs_r, outs_c = {}, {}
        feed_hi = hi if circular else hi + L
        for k in range(lo, feed_hi + 1):
            if k <= hi:
                rv, cv = float(r_in[k - lo]), float(c_in[k - lo])
                tv = float(tol[m][k % N])
            else:
                rv, cv, tv = 0.0, 0.0, 1.0
            st, ro, co = stage_step(st, rv, cv, tv, ahat[k], tr)
            outs_r[k - L], outs_c[k - L] = ro, co
        stage_adds.append(st.adds // max(st.k, 1))
        if circular:
            lo, hi = lo + L, hi - L
        r_in = np.array([outs_r[i] for i in range(lo, hi + 1)])
        c_in = np.array([outs_c[i] for i in range(lo, hi + 1)])
        if circular:
            sel = slice(-lo, -lo + N)
            stage_c.append(c_in[sel].copy())
            r_out_final = r_in[sel]
        else:
            stage_c.append(c_in.copy())
            r_out_final = r_in
        if traces is not None:
            traces.append(tr)
    if n == 0:
        r_out_final = s.astype(float).copy()

    if len(cs.adds_per_step) != 1:
        raise AssertionError("coefficient stream add count varies between steps")
    stream_adds = cs.adds_per_step.pop()
    report = {
        "L": L,
        "n_stages": n,
        "per_stage": stage_adds,
        "coeff_stream": stream_adds,
        "total": int(sum(stage_adds) + stream_adds),
        "formula": adder_count(L, n),
        "circular": bool(circular),
    }
    mse = None
    if reference is not None:
        recon = Reconstructor(samples, cfg.kernel)
        mse = recon.mse_many(np.array(stage_c), reference)
    return PipelineResult(stage_c[-1], r_out_final, stage_c, mse, report, traces)

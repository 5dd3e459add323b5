"""Ensemble experiments producing MSE-versus-iteration traces.

A trial draws one random input, encodes it (with period closure so the
sample set tiles the period exactly) and runs every requested variant
from the same samples.  Per-iteration MSEs are averaged over trials in
the linear domain and reported in dB and in equivalent bits.

Variant names are ``lazar``, ``pocs``, ``pocs_relaxed(lam)``,
``multiplierless`` and ``pipeline``, optionally followed by modifiers:
``:q`` uses time-quantized switching instants, ``:r`` the cosine-rolloff
kernel.  ``pipeline`` always uses the rolloff kernel and truncation
``L``.
"""

from __future__ import annotations

import configparser
import csv
import io
import json
import logging
import math
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache, partial
from pathlib import Path

import numpy as np

from . import __version__
from .encoder import EncoderConfig, calibrate_d, density, encode, extract_samples, quantize
from .errors import ExperimentAborted, InvalidArgument, TemReconError
from .kernels import IDEAL, LowpassKernel, build_table, gram_exact, lazar_cross_gram
from .pipeline import PipelineConfig, pipeline_run
from .recon import ReconVariant, run
from .shiftadd import DEFAULT_LAMBDA, ShiftAddConfig, run_multiplierless
from .signal import mse_bits, mse_db, random_signal

__all__ = [
    "ExperimentSpec",
    "PRESETS",
    "preset",
    "parse_number",
    "load_spec",
    "run_trial",
    "run_experiment",
    "ExperimentResult",
    "Trace",
]

logger = logging.getLogger(__name__)

CALIBRATION_SEED_OFFSET = 1_000_000
MAX_FAILURE_FRACTION = 0.01


def parse_number(text) -> float:
    """Float from ``"0.25"``, ``"2^-12"`` or ``"2**-12"``."""
    if isinstance(text, (int, float)):
        return float(text)
    s = str(text).strip().replace("**", "^")
    m = re.fullmatch(r"([-+]?[\d.]+)\^([-+]?\d+)", s)
    if m:
        return float(m.group(1)) ** int(m.group(2))
    return float(s)


@dataclass(frozen=True)
class _Variant:
    base: str
    lam: float
    quantized: bool
    rolloff: bool
    label: str

    @classmethod
    def parse(cls, text: str) -> "_Variant":
        text = text.strip()
        base, _, mods = text.partition(":")
        base = base.strip()
        lam = 1.0
        if base.startswith("pocs_relaxed"):
            lam = ReconVariant.parse(base).lam
            base = "pocs_relaxed"
        if base not in ("lazar", "pocs", "pocs_relaxed", "multiplierless", "pipeline"):
            raise InvalidArgument(f"unknown variant {text!r}")
        if set(mods) - set("qr"):
            raise InvalidArgument(f"unknown variant modifier in {text!r}")
        if base == "lazar" and "r" in mods:
            raise InvalidArgument("the sinc family has no rolloff option")
        return cls(base, lam, "q" in mods, "r" in mods or base == "pipeline", text)

    @property
    def file_label(self) -> str:
        return re.sub(r"[^A-Za-z0-9.]+", "_", self.label).strip("_")


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything needed to re-run an ensemble.

    ``seeds`` defaults to ``seed_base + i`` for trial ``i``; ``d``
    defaults to a calibration on separate signals for ``target_density``.
    """

    name: str
    period: int = 257
    amplitude_bound: float = 0.5
    target_density: float = 1.5
    trials: int = 50
    iterations: int = 20
    variants: tuple = ("lazar", "pocs", "pocs_relaxed(1.3)", "multiplierless")
    L: int = 17
    r: float = 1.4
    quant_step: float = 2.0 ** -12
    n_stages: int = 6
    lam: float = DEFAULT_LAMBDA
    seed_base: int = 0
    seeds: tuple | None = None
    d: float | None = None
    calibration_trials: int = 4

    def __post_init__(self):
        if not self.name:
            raise InvalidArgument("experiment needs a name")
        if self.period <= 0 or self.period % 2 == 0:
            raise InvalidArgument("period must be a positive odd integer")
        for key in ("amplitude_bound", "target_density", "r", "quant_step", "lam"):
            if not getattr(self, key) > 0:
                raise InvalidArgument(f"{key} must be positive")
        for key in ("trials", "iterations", "L", "n_stages"):
            if getattr(self, key) < 0:
                raise InvalidArgument(f"{key} must be nonnegative")
        if self.calibration_trials < 1:
            raise InvalidArgument("calibration_trials must be positive")
        if self.d is not None and not self.d > 0:
            raise InvalidArgument("d must be positive")
        if self.seeds is not None:
            object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
            if len(self.seeds) < self.trials:
                raise InvalidArgument("fewer seeds than trials")
        object.__setattr__(self, "variants", tuple(self.variants))
        for v in self.variants:
            _Variant.parse(v)

    @property
    def trial_seeds(self) -> list[int]:
        if self.seeds is not None:
            return list(self.seeds[:self.trials])
        return [self.seed_base + i for i in range(self.trials)]

    @property
    def kernel(self) -> LowpassKernel:
        return LowpassKernel("cosine_rolloff", self.r) if self.r > 1 else IDEAL

    def to_dict(self) -> dict:
        out = asdict(self)
        out["variants"] = list(self.variants)
        out["seeds"] = None if self.seeds is None else list(self.seeds)
        return out

    def to_ini(self) -> str:
        cp = configparser.ConfigParser()
        cp.optionxform = str  # keep ``L`` upper case
        sec = {}
        for k, v in self.to_dict().items():
            if v is None:
                continue
            sec[k] = ", ".join(map(str, v)) if isinstance(v, list) else repr(v) if isinstance(v, float) else str(v)
        cp["experiment"] = sec
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()


PRESETS = {
    "fig2-desk": ExperimentSpec(
        "fig2-desk", target_density=1.5, iterations=20,
        variants=("lazar", "pocs", "pocs_relaxed(1.3)", "multiplierless")),
    "fig3-desk": ExperimentSpec(
        "fig3-desk", target_density=1.0, iterations=20,
        variants=("lazar", "pocs", "pocs_relaxed(2)", "multiplierless")),
    "fig5-desk": ExperimentSpec(
        "fig5-desk", target_density=1.5, iterations=6,
        variants=("lazar", "multiplierless", "multiplierless:q", "multiplierless:r",
                  "pipeline", "pipeline:q")),
}


def preset(name: str, **overrides) -> ExperimentSpec:
    if name not in PRESETS:
        raise InvalidArgument(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return replace(PRESETS[name], **overrides)


_INT_KEYS = {"period", "trials", "iterations", "L", "n_stages", "seed_base", "calibration_trials"}
_FLOAT_KEYS = {"amplitude_bound", "target_density", "r", "quant_step", "lam", "d"}


def load_spec(path_or_text, is_text: bool = False) -> ExperimentSpec:
    """Read an INI file with one ``[experiment]`` section.

    A ``preset`` key starts from that preset; other keys override it.
    """
    cp = configparser.ConfigParser()
    cp.optionxform = str
    if is_text:
        cp.read_string(path_or_text)
    else:
        with open(path_or_text) as fh:
            cp.read_file(fh)
    if "experiment" not in cp:
        raise InvalidArgument("config needs an [experiment] section")
    sec = dict(cp["experiment"])
    base = sec.pop("preset", None)
    kw = {}
    for k, v in sec.items():
        if k in _INT_KEYS:
            kw[k] = int(v)
        elif k in _FLOAT_KEYS:
            kw[k] = parse_number(v)
        elif k == "variants":
            kw[k] = tuple(_split_variants(v))
        elif k == "seeds":
            kw[k] = tuple(int(x) for x in v.replace(",", " ").split())
        elif k == "name":
            kw[k] = v.strip()
        else:
            raise InvalidArgument(f"unknown config key {k!r}")
    if base is not None:
        return preset(base.strip(), **kw)
    if "name" not in kw:
        raise InvalidArgument("config needs a name (or a preset)")
    return ExperimentSpec(**kw)


def _split_variants(text: str) -> list[str]:
    # commas inside parentheses belong to the variant
    out, depth, cur = [], 0, ""
    for ch in text:
        if ch == "," and depth == 0:
            out.append(cur.strip())
            cur = ""
            continue
        depth += ch == "("
        depth -= ch == ")"
        cur += ch
    if cur.strip():
        out.append(cur.strip())
    return out


# ---------------------------------------------------------------- trials

@dataclass
class TrialResult:
    index: int
    seed: int
    curves: dict = field(default_factory=dict)
    N: int = 0
    density: float = 0.0
    error: str | None = None


@lru_cache(maxsize=4)
def _table(kernel: LowpassKernel, step: float, max_lag: float, max_T: float):
    return build_table(kernel, step, max_lag, max_T)


def _table_for(kernel, step, L, T_max):
    # round the extents up so nearby trials share one table
    max_T = math.ceil(T_max * 4.0) / 4.0
    max_lag = math.ceil((2 * L + 2) * max_T)
    return _table(kernel, step, float(max_lag), float(max_T))


def run_trial(spec: ExperimentSpec, d: float, index: int) -> TrialResult:
    """Encode one random input and run every variant on it."""
    seed = spec.trial_seeds[index]
    res = TrialResult(index, seed)
    try:
        x = random_signal(spec.period, spec.amplitude_bound, seed)
        events = encode(x, EncoderConfig(d=d, close_period=True))
        exact = extract_samples(events)
        res.N, res.density = exact.N, density(exact)
        qsamples = None
        grams = {}
        for label in spec.variants:
            v = _Variant.parse(label)
            if v.quantized and qsamples is None:
                qsamples = extract_samples(quantize(events, spec.quant_step))
            S = qsamples if v.quantized else exact
            kernel = spec.kernel if v.rolloff else IDEAL
            if v.base == "pipeline":
                table = _table_for(kernel, spec.quant_step, spec.L, float(S.T.max())) \
                    if v.quantized else None
                cfg = PipelineConfig(spec.L, spec.n_stages, spec.lam, kernel, table)
                curve = pipeline_run(S, cfg, reference=x).mse
            elif v.base == "lazar":
                key = ("lazar", v.quantized)
                if key not in grams:
                    grams[key] = lazar_cross_gram(S)
                curve = run(S, grams[key], ReconVariant("lazar"), spec.iterations,
                            reference=x).mse
            else:
                key = (kernel, v.quantized)
                if key not in grams:
                    grams[key] = gram_exact(S, kernel, float(spec.period))
                G = grams[key]
                if v.base == "multiplierless":
                    cfg = ShiftAddConfig.from_samples(S, spec.lam)
                    curve = run_multiplierless(S, G, cfg, spec.iterations, reference=x,
                                               kernel=kernel).mse
                else:
                    rv = ReconVariant(v.base, v.lam) if v.base == "pocs_relaxed" \
                        else ReconVariant(v.base)
                    curve = run(S, G, rv, spec.iterations, reference=x, kernel=kernel).mse
            res.curves[label] = np.asarray(curve, dtype=float)
    except TemReconError as exc:
        res.error = f"{type(exc).__name__}: {exc}"
        res.curves = {}
    return res


# ---------------------------------------------------------------- ensemble

@dataclass(frozen=True, eq=False)
class Trace:
    """Ensemble-mean MSE curve of one variant."""

    variant: str
    mse: np.ndarray
    stderr_db: np.ndarray
    trials: int
    amplitude_bound: float

    @property
    def mse_db(self) -> np.ndarray:
        return mse_db(self.mse)

    @property
    def bits(self) -> np.ndarray:
        return mse_bits(self.mse_db, self.amplitude_bound)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "mse_db", "bits", "trials", "stderr_db"])
        for n in range(self.mse.size):
            w.writerow([n, f"{self.mse_db[n]:.10g}", f"{self.bits[n]:.10g}", self.trials,
                        f"{self.stderr_db[n]:.10g}"])
        return buf.getvalue()

    def to_json(self) -> dict:
        return {"variant": self.variant, "trials": self.trials,
                "iteration": list(range(self.mse.size)),
                "mse_db": [float(f"{v:.10g}") for v in self.mse_db],
                "bits": [float(f"{v:.10g}") for v in self.bits],
                "stderr_db": [float(f"{v:.10g}") for v in self.stderr_db]}


@dataclass(frozen=True, eq=False)
class ExperimentResult:
    spec: ExperimentSpec
    d: float | None
    traces: dict
    failures: list
    densities: np.ndarray

    @property
    def metadata(self) -> dict:
        return {
            "tool": "temrecon",
            "version": __version__,
            "spec": self.spec.to_dict(),
            "d": self.d,
            "seeds": self.spec.trial_seeds,
            "calibration_seeds": _calibration_seeds(self.spec),
            "completed_trials": int(self.densities.size),
            "failures": self.failures,
            "mean_density": float(np.mean(self.densities)) if self.densities.size else None,
        }

    def write(self, out_dir, fmt: str = "csv") -> list[Path]:
        """Write one trace file per variant plus ``<name>_meta.json``."""
        if fmt not in ("csv", "json"):
            raise InvalidArgument("format must be csv or json")
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = []
        for label in self.spec.variants:
            tr = self.traces[label]
            p = out / f"{self.spec.name}_{_Variant.parse(label).file_label}.{fmt}"
            text = tr.to_csv() if fmt == "csv" else json.dumps(tr.to_json(), indent=1) + "\n"
            p.write_text(text)
            paths.append(p)
        meta = out / f"{self.spec.name}_meta.json"
        meta.write_text(json.dumps(self.metadata, indent=2, sort_keys=True) + "\n")
        paths.append(meta)
        return paths


def _calibration_seeds(spec: ExperimentSpec) -> list[int]:
    return [spec.seed_base + CALIBRATION_SEED_OFFSET + i for i in range(spec.calibration_trials)]


def calibrate(spec: ExperimentSpec) -> float:
    """Threshold ``d`` for the spec's density, from separate calibration inputs."""
    if spec.d is not None:
        return spec.d
    return calibrate_d(lambda sd: random_signal(spec.period, spec.amplitude_bound, sd),
                       spec.target_density, seeds=_calibration_seeds(spec))


def _merge(spec: ExperimentSpec, results: list[TrialResult]) -> dict:
    ok = [r for r in results if r.error is None]
    traces = {}
    for label in spec.variants:
        v = _Variant.parse(label)
        length = (spec.n_stages if v.base == "pipeline" else spec.iterations) + 1
        if not ok:
            traces[label] = Trace(label, np.zeros(0), np.zeros(0), 0, spec.amplitude_bound)
            continue
        M = np.array([r.curves[label] for r in ok])
        assert M.shape[1] == length
        mean = M.mean(axis=0)
        if len(ok) > 1:
            se = M.std(axis=0, ddof=1) / math.sqrt(len(ok))
            se_db = 10.0 / math.log(10.0) * se / mean
        else:
            se_db = np.zeros(length)
        traces[label] = Trace(label, mean, se_db, len(ok), spec.amplitude_bound)
    return traces


def run_experiment(spec: ExperimentSpec, threads: int = 1) -> ExperimentResult:
    """Run all trials (in a process pool when ``threads > 1``) and merge by index.

    Raises
    ------
    ExperimentAborted
        If more than 1% of the trials fail.
    """
    if threads < 1:
        raise InvalidArgument("threads must be positive")
    if spec.trials == 0:
        return ExperimentResult(spec, spec.d, _merge(spec, []), [], np.zeros(0))
    d = calibrate(spec)
    logger.info("%s: d=%.6f, %d trials", spec.name, d, spec.trials)
    work = partial(run_trial, spec, d)
    if threads == 1:
        results = [work(i) for i in range(spec.trials)]
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, range(spec.trials)))
    results.sort(key=lambda r: r.index)
    failures = [{"trial": r.index, "seed": r.seed, "error": r.error}
                for r in results if r.error is not None]
    for f in failures:
        logger.warning("trial %d (seed %d) excluded: %s", f["trial"], f["seed"], f["error"])
    if len(failures) > MAX_FAILURE_FRACTION * spec.trials:
        raise ExperimentAborted(f"{len(failures)} of {spec.trials} trials failed")
    dens = np.array([r.density for r in results if r.error is None])
    return ExperimentResult(spec, d, _merge(spec, results), failures, dens)

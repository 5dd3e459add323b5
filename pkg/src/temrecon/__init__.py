"""Time encoding with an asynchronous Sigma-Delta modulator and POCS reconstruction.

Modules
-------
signal       periodic bandlimited signals, MSE and bit conversions
encoder      ASDM simulation, sample extraction, time quantization
kernels      lowpass kernels, Gram matrices, the ``hbar`` lookup table
recon        Lazar-Toth, POCS and relaxed POCS iterations, pseudo-inverse
shiftadd     multiplierless relaxation with signed powers of two
pipeline     sliding-window FIR realization and adder accounting
spectral     spectrum of the iteration operator, 2-periodic diagnostics
experiments  ensemble runs producing MSE traces
"""

__version__ = "0.1.0"

from .encoder import (EncoderConfig, EventTrain, SampleSet, calibrate_d, encode,  # noqa: E402
                      extract_samples, quantize)
from .errors import TemReconError  # noqa: E402
from .kernels import IDEAL, HTable, LowpassKernel, build_table, gram_exact  # noqa: E402
from .pipeline import PipelineConfig, adder_count, pipeline_run  # noqa: E402
from .recon import LAZAR, POCS, ReconVariant, frame_bounds, relaxed, run  # noqa: E402
from .shiftadd import DEFAULT_LAMBDA, ShiftAddConfig, run_multiplierless  # noqa: E402
from .signal import BandlimitedSignal, mse_bits, mse_db, random_signal  # noqa: E402

__all__ = [
    "BandlimitedSignal", "random_signal", "mse_db", "mse_bits",
    "EncoderConfig", "EventTrain", "SampleSet", "encode", "extract_samples", "quantize",
    "calibrate_d",
    "LowpassKernel", "IDEAL", "HTable", "build_table", "gram_exact",
    "ReconVariant", "LAZAR", "POCS", "relaxed", "run", "frame_bounds",
    "ShiftAddConfig", "DEFAULT_LAMBDA", "run_multiplierless",
    "PipelineConfig", "pipeline_run", "adder_count",
    "TemReconError",
]

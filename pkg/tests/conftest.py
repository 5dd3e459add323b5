import numpy as np
import pytest

from temrecon.encoder import EncoderConfig, SampleSet, encode, extract_samples
from temrecon.experiments import calibrate, preset
from temrecon.kernels import IDEAL, LowpassKernel, gram_exact
from temrecon.signal import random_signal

ROLLOFF = LowpassKernel("cosine_rolloff", 1.4)
STEP = 2.0 ** -12


@pytest.fixture(scope="session")
def d15():
    """Threshold for density 1.5 on the experiment's calibration inputs."""
    return calibrate(preset("fig2-desk"))


@pytest.fixture(scope="session")
def osr15(d15):
    """First instance of the OSR-1.5 ensemble: signal, events, samples, ideal Gram."""
    x = random_signal(257, 0.5, 0)
    e = encode(x, EncoderConfig(d=d15, close_period=True))
    S = extract_samples(e)
    return x, e, S, gram_exact(S, IDEAL, 257.0)


def random_sample_set(rng, N, step=None, closed_period=None, lo=0.4, hi=1.2):
    """Sample set with random interval lengths, optionally on a time grid."""
    T = rng.uniform(lo, hi, N)
    if step is not None:
        T = np.maximum(np.round(T / step), 1) * step
    t = np.concatenate([[0.0], np.cumsum(T)])
    s = rng.uniform(-0.5, 0.5, N) * T
    if closed_period is not None:
        return SampleSet(t, s, closed_period, True)
    return SampleSet(t, s)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])

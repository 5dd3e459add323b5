import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from temrecon.encoder import SampleSet
from temrecon.errors import InvalidArgument
from temrecon.kernels import IDEAL, gram_exact
from temrecon.signal import (BandlimitedSignal, antiderivative, da_reconstruct, eval,
                             from_nyquist_samples, inner, mse_bits, random_signal,
                             uniform_noise_db, zero_signal)

seeds = st.integers(0, 2 ** 31 - 1)


def test_random_signal_bound_and_determinism():
    x = random_signal(257, 0.5, 1)
    v = x.nyquist_samples()
    assert np.max(np.abs(v)) <= 0.5 + 1e-12
    assert np.array_equal(x.coeffs, random_signal(257, 0.5, 1).coeffs)
    assert x.K == 128


def test_random_signal_zero_amplitude():
    x = random_signal(3, 0.0, 7)
    assert np.all(x.coeffs == 0)


def test_random_signal_even_period_rejected():
    with pytest.raises(InvalidArgument):
        random_signal(256, 0.5, 0)


def test_nyquist_roundtrip():
    rng = np.random.default_rng(3)
    v = rng.uniform(-1, 1, 101)
    x = from_nyquist_samples(v)
    assert np.max(np.abs(x.nyquist_samples() - v)) <= 1e-12 * np.max(np.abs(v))


def test_conjugate_symmetry():
    x = random_signal(31, 0.5, 2)
    assert np.allclose(x.coeffs, np.conj(x.coeffs[::-1]), rtol=0, atol=0)


def test_eval_examples():
    assert eval(zero_signal(9.0), 1.234) == 0.0
    delta = 0.3
    c = np.zeros(3, dtype=complex)
    c[0] = c[2] = 0.5 * delta * np.pi
    x = BandlimitedSignal(2.0, c)
    assert eval(x, 0.0) == pytest.approx(delta * np.pi, abs=1e-15)
    y = random_signal(17, 0.5, 4)
    t = np.linspace(0, 3, 11)
    assert np.allclose(y(t), y(t + 17.0), atol=1e-12)


def test_antiderivative_examples():
    assert antiderivative(zero_signal(5.0), 0.3, 2.0) == 0.0
    c = np.zeros(5, dtype=complex)
    c[2] = 0.37
    x = BandlimitedSignal(5.0, c)
    assert antiderivative(x, 0.5, 3.25) == pytest.approx(0.37 * 2.75, abs=1e-15)


def test_antiderivative_quadrature_oracle():
    x = random_signal(17, 0.5, 5)
    for a, b in [(0.0, 0.7), (1.3, 4.9), (-2.0, 11.5)]:
        ref, _ = integrate.quad(lambda t: float(x(t)), a, b, epsabs=1e-13, epsrel=1e-13, limit=200)
        assert antiderivative(x, a, b) == pytest.approx(ref, abs=1e-10)


@settings(max_examples=40, deadline=None)
@given(seed=seeds, a=st.floats(-20, 20), l1=st.floats(0, 10), l2=st.floats(0, 10))
def test_antiderivative_additive(seed, a, l1, l2):
    x = random_signal(21, 0.5, seed)
    b, c = a + l1, a + l1 + l2
    lhs = antiderivative(x, a, b) + antiderivative(x, b, c)
    assert lhs == pytest.approx(antiderivative(x, a, c), abs=1e-12)


def test_inner_riemann_oracle():
    u = random_signal(33, 0.5, 6)
    v = random_signal(33, 0.5, 7)
    t = np.arange(33 * 64) / 64.0
    ref = np.sum(u(t) * v(t)) / 64.0
    assert inner(u, v) == pytest.approx(ref, abs=1e-8)
    assert inner(u, v) == pytest.approx(inner(v, u), abs=1e-15)


@settings(max_examples=30, deadline=None)
@given(seed=seeds)
def test_parseval_and_positivity(seed):
    u = random_signal(25, 0.5, seed)
    power = np.sum(np.abs(u.coeffs) ** 2) * u.period
    assert inner(u, u) == pytest.approx(power, rel=1e-12)
    assert inner(u, u) > 0
    assert inner(zero_signal(25.0), zero_signal(25.0)) == 0


def test_inner_period_mismatch():
    with pytest.raises(InvalidArgument):
        inner(random_signal(5, 0.5, 0), random_signal(7, 0.5, 0))


def _uniform_set(P, n):
    t = np.linspace(0.0, P, n + 1)
    return SampleSet(t, np.zeros(n), float(P), True)


def test_da_reconstruct_zero_and_constant():
    S = _uniform_set(15, 20)
    assert np.all(da_reconstruct(np.zeros(S.N), S).coeffs == 0)
    v = 0.3
    c = np.full(S.N, v)  # c_i = s_i / T_i for a constant input
    y = da_reconstruct(c, S)
    assert np.allclose(y(np.linspace(0, 15, 40)), v, atol=1e-12)


def test_da_reconstruct_gram_consistency():
    rng = np.random.default_rng(8)
    T = rng.uniform(0.4, 1.0, 30)
    t = np.concatenate([[0.0], np.cumsum(T)])
    P = 21.0
    t = t * (P / t[-1])
    S = SampleSet(t, np.zeros(30), P, True)
    G = gram_exact(S, IDEAL, P).matrix
    c = rng.standard_normal(30)
    y = da_reconstruct(c, S)
    for j in (0, 7, 29):
        e = np.zeros(30)
        e[j] = 1.0
        fj = da_reconstruct(e, S)
        assert inner(y, fj) == pytest.approx(c @ G[:, j], abs=1e-10)


@settings(max_examples=20, deadline=None)
@given(seed=seeds, a=st.floats(-3, 3), b=st.floats(-3, 3))
def test_da_reconstruct_linear(seed, a, b):
    rng = np.random.default_rng(seed)
    S = _uniform_set(11, 14)
    c1, c2 = rng.standard_normal((2, 14))
    lhs = da_reconstruct(a * c1 + b * c2, S).coeffs
    rhs = a * da_reconstruct(c1, S).coeffs + b * da_reconstruct(c2, S).coeffs
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * (1 + np.max(np.abs(rhs)))


def test_da_reconstruct_length_mismatch():
    with pytest.raises(InvalidArgument):
        da_reconstruct(np.zeros(3), _uniform_set(5, 4))


def test_mse_bits_examples():
    m0 = uniform_noise_db(0.5)
    assert m0 == pytest.approx(10 * np.log10(1 / 12))
    assert m0 == pytest.approx(-10.79, abs=5e-3)
    assert mse_bits(m0, 0.5) == pytest.approx(0.0, abs=1e-15)
    assert mse_bits(m0 - 6.02, 0.5) == pytest.approx(1.0, abs=1e-12)

import warnings

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from temrecon.encoder import SampleSet
from temrecon.errors import InvalidArgument, NumericError
from temrecon.kernels import gram_exact
from temrecon.recon import POCS, frame_bounds, pseudo_inverse_coeffs, run
from temrecon.spectral import (delta0, eigendecompose_M, jacobi_eigh, lazar_threshold,
                               semiconvergence_predict, two_periodic_d, two_periodic_detF,
                               two_periodic_F, two_periodic_input, two_periodic_M,
                               two_periodic_Mnorm, two_periodic_times)
from conftest import random_sample_set


def _closed(rng, N, P):
    S = random_sample_set(rng, N)
    return SampleSet(S.t * (P / S.t[-1]), S.s, float(P), True)


# ------------------------------------------------------------------ Jacobi

@settings(max_examples=25, deadline=None)
@given(n=st.integers(1, 40), seed=st.integers(0, 10 ** 6))
def test_jacobi_matches_lapack(n, seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n))
    A = A + A.T
    w, V = jacobi_eigh(A)
    assert np.all(np.diff(w) >= 0)
    assert np.allclose(w, np.linalg.eigvalsh(A), rtol=0, atol=1e-11 * max(1, np.abs(w).max()))
    assert np.allclose(V.T @ V, np.eye(n), atol=1e-12)
    assert np.allclose(A @ V, V * w, atol=1e-10 * max(1, np.abs(w).max()))


def test_jacobi_degenerate_spectrum():
    rng = np.random.default_rng(1)
    Q, _ = np.linalg.qr(rng.standard_normal((12, 12)))
    d = np.array([1.0] * 5 + [2.0] * 4 + [0.0] * 3)
    A = Q @ np.diag(d) @ Q.T
    w, V = jacobi_eigh(A)
    assert np.allclose(w, np.sort(d), atol=1e-12)
    assert np.allclose(V @ np.diag(w) @ V.T, A, atol=1e-12)


def test_jacobi_edge_cases():
    w, V = jacobi_eigh(np.zeros((0, 0)))
    assert w.size == 0
    w, V = jacobi_eigh(np.zeros((3, 3)))
    assert np.array_equal(w, np.zeros(3)) and np.array_equal(V, np.eye(3))
    w, V = jacobi_eigh([[4.0]])
    assert w.tolist() == [4.0]
    with pytest.raises(InvalidArgument):
        jacobi_eigh(np.zeros((2, 3)))
    with pytest.raises(NumericError):
        jacobi_eigh([[1.0, 1.0], [1.0, 2.0]], max_sweeps=0)


def test_jacobi_wide_dynamic_range():
    A = np.diag([1e12, 1.0, 1e-12])
    A[0, 1] = A[1, 0] = 1e-3
    w, _ = jacobi_eigh(A)
    assert np.allclose(w, np.linalg.eigvalsh(A), rtol=1e-12, atol=1e-12 * 1e12)


# ------------------------------------------------------------ spectrum of M

@pytest.fixture(scope="module")
def small():
    rng = np.random.default_rng(3)
    S = _closed(rng, 60, 41.0)
    return S, gram_exact(S)


def test_spectrum_basis_g_orthonormal(small):
    S, G = small
    spec = eigendecompose_M(G, S)
    P = spec.basis
    assert np.allclose(P.T @ G.matrix @ P, np.eye(spec.rank), atol=1e-10)
    assert spec.rank == 41


def test_spectrum_eigenpairs(small):
    S, G = small
    spec = eigendecompose_M(G, S)
    # M acts on coefficients as c -> c - D^-1 G c
    M = np.eye(S.N) - G.matrix / S.T[:, None]
    assert np.allclose(M @ spec.basis, spec.basis * spec.mu, atol=1e-10)
    assert np.all(spec.mu >= -1e-12) and np.all(spec.mu < 1)


def test_spectrum_solvers_agree(small):
    S, G = small
    a = eigendecompose_M(G, S)
    b = eigendecompose_M(G, S, eigh=np.linalg.eigh)
    assert np.allclose(a.mu, b.mu, atol=1e-12)
    assert a.A == pytest.approx(b.A, abs=1e-12)


def test_m1_norm_consistent(small):
    S, G = small
    spec = eigendecompose_M(G, S)
    fb = frame_bounds(G, S)
    assert fb.m1_norm == pytest.approx(np.max(np.abs(spec.mu)), abs=1e-12)
    assert fb.A == pytest.approx(spec.A, abs=1e-12) and fb.B == pytest.approx(spec.B, abs=1e-12)


def test_spectrum_rejects_asymmetric(small):
    S, G = small
    A = G.matrix.copy()
    A[0, 1] += 1e-3
    with pytest.raises(NumericError):
        eigendecompose_M(A, S)


def test_spectrum_size_limit():
    S = SampleSet(np.arange(4098.0), np.zeros(4097), 4097.0, True)
    with pytest.raises(InvalidArgument):
        eigendecompose_M(np.zeros((4097, 4097)), S)


def test_spectrum_csv(small):
    S, G = small
    spec = eigendecompose_M(G, S)
    lines = spec.to_csv().splitlines()
    assert lines[0] == "i,mu_i,e0_i,einf_i" and len(lines) == spec.rank + 1


def test_semiconvergence_small(small):
    S, G = small
    rng = np.random.default_rng(4)
    from temrecon.signal import random_signal
    from temrecon.encoder import samples_from_times
    x = random_signal(41, 0.5, 2)
    S = samples_from_times(S.t, x=x, period=41.0)
    spec = eigendecompose_M(G, S)
    eta = rng.normal(0, 1e-3, S.N)
    pred = semiconvergence_predict(spec, S.s, eta, 0, samples=S)
    c_s = pseudo_inverse_coeffs(S.s, S, G)
    for n in (1, 7, 40):
        res = run(S, G, POCS, n, s=S.s + eta)
        e = spec.components(res.state.c - c_s)
        assert np.max(np.abs(e - pred.at(n).e)) < 1e-11
        assert pred.at(n).energy == pytest.approx(np.sum(e ** 2), rel=1e-8)
    assert np.allclose(pred.at(5).error_coeffs(spec),
                       spec.basis @ spec.components(run(S, G, POCS, 5, s=S.s + eta).state.c - c_s),
                       atol=1e-10)


def test_semiconvergence_validation(small):
    S, G = small
    spec = eigendecompose_M(G, S)
    with pytest.raises(InvalidArgument):
        semiconvergence_predict(spec, S.s[:-1], S.s, 3, samples=S)
    with pytest.raises(InvalidArgument):
        semiconvergence_predict(spec, S.s, np.zeros(S.N), 3)


def test_semiconvergence_warns_on_unit_eigenvalue(small):
    S, G = small
    spec = eigendecompose_M(G, S)
    mu = spec.mu.copy()
    mu[-1] = 1.0
    from dataclasses import replace
    bad = replace(spec, mu=mu)
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        semiconvergence_predict(bad, S.s, np.zeros(S.N), 3, samples=S)
    assert any(issubclass(w.category, RuntimeWarning) for w in rec)


# ------------------------------------------------------------- 2-periodic

def _detF_oracle(delta, w):
    mp.mp.dps = 40
    w, d = mp.mpf(w), mp.mpf(delta)

    def Fi(i, v):
        T = 1 + (-1) ** i * 2 * d
        h = v / 2
        return mp.exp(1j * (-1) ** i * h) * (mp.sin(T * h) / h if h != 0 else T)

    return complex(Fi(0, w) * Fi(1, w - mp.pi) - Fi(1, w) * Fi(0, w - mp.pi))


@pytest.mark.parametrize("delta", [0.0, 0.1, 0.25, 0.4, 0.49])
def test_detF_against_oracle(delta):
    for w in [0.0, 1e-9, 0.3, 1.0, 2.5, np.pi - 1e-6, np.pi - 1e-12, np.pi]:
        assert abs(two_periodic_detF(delta, w) - _detF_oracle(delta, w)) < 1e-14
    grid = np.linspace(0.01, np.pi - 0.01, 25)
    num = [np.linalg.det(two_periodic_F(delta, w)) for w in grid]
    assert np.allclose(two_periodic_detF(delta, grid), num, atol=1e-14)


def test_detF_range():
    # sin(w)/(w(pi-w)) runs from 1/pi at the band edges up to 4/pi**2 at pi/2
    w = np.linspace(0, np.pi, 1000)
    for delta in np.arange(0, 0.5, 0.1).tolist() + [0.49]:
        m = np.abs(two_periodic_detF(delta, w))
        c = np.cos(delta * np.pi)
        assert np.min(m) == pytest.approx(4 * c / np.pi, abs=1e-14)
        assert np.min(m) > 0
        assert abs(two_periodic_detF(delta, np.pi / 2)) == pytest.approx(16 * c / np.pi ** 2, abs=1e-14)
        assert np.max(m) <= 16 * c / np.pi ** 2 + 1e-14


def test_detF_validation():
    with pytest.raises(InvalidArgument):
        two_periodic_detF(0.5, 1.0)
    with pytest.raises(InvalidArgument):
        two_periodic_detF(0.1, 4.0)


def test_Mnorm_is_sup_of_polyphase_norm():
    w = np.linspace(0, np.pi, 401)
    for delta in (0.0, 0.15, 0.35, 0.45):
        n2 = max(np.linalg.norm(two_periodic_M(delta, x), 2) ** 2 for x in w)
        assert n2 == pytest.approx(two_periodic_Mnorm(delta), abs=1e-12)


def test_Mnorm_values():
    assert two_periodic_Mnorm(0.0) == pytest.approx((1 - 2 / np.pi) ** 2, abs=1e-12)
    assert two_periodic_Mnorm(0.5) == 2.0
    with pytest.raises(InvalidArgument):
        two_periodic_Mnorm(0.6)
    d0 = delta0()
    assert abs(d0 - 0.351) <= 0.001
    assert two_periodic_Mnorm(d0) == pytest.approx(1.0, abs=1e-14)
    assert lazar_threshold() == pytest.approx(1 + 2 * d0)


def test_two_periodic_helpers():
    t = two_periodic_times(0.2, 4)
    assert np.allclose(t, [0.2, 0.8, 2.2, 2.8, 4.2])
    assert two_periodic_times(0.2, 4, t0=-0.5)[0] == -0.5
    assert two_periodic_d(0.0) == 0.25
    x = two_periodic_input(0.3, 4)
    assert x(0.0) == pytest.approx(0.3 * np.pi) and x(1.0) == pytest.approx(-0.3 * np.pi)
    with pytest.raises(InvalidArgument):
        two_periodic_input(0.3, 3)


def test_lazar_diverges_beyond_threshold():
    # longest interval 1 + 2 delta above 1.72 means h(delta) > 1
    for delta in (0.361, 0.4, 0.49):
        assert 1 + 2 * delta > 1.72
        assert two_periodic_Mnorm(delta) > 1.0
    assert two_periodic_Mnorm(0.34) < 1.0

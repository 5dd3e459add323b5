import json

import numpy as np
import pytest

from temrecon.encoder import SampleSet
from temrecon.errors import InvalidArgument
from temrecon.kernels import IDEAL, analytic_line_gram, build_table
from temrecon.pipeline import (CoeffStream, PipelineConfig, StageState, adder_count,
                               coeff_stream_adders, pipeline_run, stage_adders, stage_step)
from temrecon.shiftadd import ShiftAddConfig, sys2_step
from conftest import ROLLOFF, STEP, random_sample_set


@pytest.fixture(scope="module")
def table():
    return build_table(ROLLOFF, STEP, 80.0, 1.25)


def _dense_stages(S, A, n, band, circular=False):
    cfg = ShiftAddConfig.from_samples(S)
    r, c = S.s.copy(), np.zeros(S.N)
    out = [c]
    for _ in range(n):
        r, c, _ = sys2_step(r, c, A, cfg, band=band, circular=circular)
        out.append(c)
    return out, r


def test_adder_formula():
    assert adder_count(17, 6) == 6 * (2 * 17 + 2) + 6 * 17 + 3 == 321
    assert adder_count(0, 0) == 3
    assert coeff_stream_adders(17) == 6 * 17 + 3
    assert stage_adders(17) == 36
    with pytest.raises(InvalidArgument):
        adder_count(-1, 2)


def test_config_validation(table):
    with pytest.raises(InvalidArgument):
        PipelineConfig(-1, 2)
    with pytest.raises(InvalidArgument):
        PipelineConfig(3, -2)
    with pytest.raises(InvalidArgument):
        PipelineConfig(3, 2, lam_schedule=(1.0,))
    with pytest.raises(InvalidArgument):
        PipelineConfig(3, 2, kernel=IDEAL, table=table)


def test_stage_step_validation():
    with pytest.raises(InvalidArgument):
        stage_step(StageState(2), 0.1, 0.0, 1.0, np.zeros(3))


def test_dense_equivalence_twenty_sets(table):
    rng = np.random.default_rng(42)
    for trial in range(20):
        N = int(rng.integers(8, 65))
        S = random_sample_set(rng, N, step=STEP, lo=0.45, hi=1.2)
        A = table.gram_matrix(S)
        L = N - 1 + int(rng.integers(0, 3))
        n = 4
        res = pipeline_run(S, PipelineConfig(L, n, kernel=ROLLOFF, table=table))
        dense, r = _dense_stages(S, A, n, band=L)
        for m in range(n + 1):
            assert np.array_equal(res.stage_c[m], dense[m]), (trial, m)
        assert np.array_equal(res.r, r)


def test_banded_equivalence_padded(table):
    rng = np.random.default_rng(7)
    S = random_sample_set(rng, 90, step=STEP)
    L = 6
    res = pipeline_run(S, PipelineConfig(L, 3, kernel=ROLLOFF, table=table, circular=False))
    dense, _ = _dense_stages(S, table.gram_matrix(S, L=L), 3, band=L)
    for m in range(4):
        assert np.array_equal(res.stage_c[m], dense[m])


def test_circular_equivalence(table):
    rng = np.random.default_rng(8)
    S = random_sample_set(rng, 70, step=STEP)
    S = SampleSet(S.t, S.s, float(S.t[-1]), True)
    L = 5
    res = pipeline_run(S, PipelineConfig(L, 3, kernel=ROLLOFF, table=table))
    assert res.adder_report["circular"]
    A = table.gram_matrix(S, L=L, circular=True)
    dense, _ = _dense_stages(S, A, 3, band=L, circular=True)
    for m in range(4):
        assert np.array_equal(res.stage_c[m], dense[m])


def test_circular_requires_closed(table):
    rng = np.random.default_rng(9)
    S = random_sample_set(rng, 20, step=STEP)
    with pytest.raises(InvalidArgument):
        pipeline_run(S, PipelineConfig(3, 1, kernel=ROLLOFF, table=table, circular=True))
    Sc = SampleSet(S.t, S.s, float(S.t[-1]), True)
    with pytest.raises(InvalidArgument):
        pipeline_run(Sc, PipelineConfig(10, 1, kernel=ROLLOFF, table=table, circular=True))


def test_analytic_lookups_match_line_gram():
    rng = np.random.default_rng(10)
    S = random_sample_set(rng, 30, step=STEP)
    L = 4
    res = pipeline_run(S, PipelineConfig(L, 2, kernel=IDEAL))
    dense, _ = _dense_stages(S, analytic_line_gram(S, IDEAL, L=L), 2, band=L)
    for m in range(3):
        assert np.allclose(res.stage_c[m], dense[m], rtol=0, atol=1e-12)


def test_audited_adds_match_formula(table):
    rng = np.random.default_rng(11)
    S = random_sample_set(rng, 120, step=STEP)
    S = SampleSet(S.t, S.s, float(S.t[-1]), True)
    for L, n in [(17, 6), (3, 2), (5, 0)]:
        rep = pipeline_run(S, PipelineConfig(L, n, kernel=ROLLOFF, table=table)).adder_report
        assert rep["total"] == rep["formula"] == adder_count(L, n)
        assert rep["per_stage"] == [stage_adders(L)] * n
        assert rep["coeff_stream"] == coeff_stream_adders(L)


def test_coeff_stream_matches_table_rows(table):
    rng = np.random.default_rng(12)
    S = random_sample_set(rng, 40, step=STEP)
    L = 3
    A = table.gram_matrix(S, L=L).matrix
    cs = CoeffStream(L, table.hbar, table.h_diag)
    T = np.concatenate([S.T, np.zeros(L)])
    for k in range(S.N + L):
        a = cs.step(float(T[k]))
        i = k - L
        if L <= i < S.N - L:
            # ahat_k^l = A[i, k - l]
            assert np.array_equal(a, A[i, k - np.arange(2 * L + 1)])


def test_trace_and_report_outputs(table):
    rng = np.random.default_rng(13)
    S = random_sample_set(rng, 20, step=STEP)
    res = pipeline_run(S, PipelineConfig(2, 2, kernel=ROLLOFF, table=table), trace=True)
    lines = res.trace_csv().splitlines()
    assert lines[0] == "stage,k,r_in,b_exp,p,r_out,c_out"
    assert len(lines) == 1 + 2 * (S.N + 2)
    rep = json.loads(res.adder_report_json())
    assert rep["L"] == 2 and rep["n_stages"] == 2


def test_zero_stages_identity(table):
    rng = np.random.default_rng(14)
    S = random_sample_set(rng, 15, step=STEP)
    res = pipeline_run(S, PipelineConfig(2, 0, kernel=ROLLOFF, table=table))
    assert np.array_equal(res.c, np.zeros(S.N)) and np.array_equal(res.r, S.s)


def test_pipeline_reduces_error(osr15, table):
    from temrecon.encoder import extract_samples, quantize
    x, e, _, _ = osr15
    S = extract_samples(quantize(e, STEP))
    res = pipeline_run(S, PipelineConfig(17, 6, kernel=ROLLOFF, table=table), reference=x)
    assert np.all(np.diff(res.mse) < 0)

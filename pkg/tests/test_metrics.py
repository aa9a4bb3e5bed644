import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import brute_eer, brute_min_dcf
from scorelab.errors import UndefinedCorrelationError
from scorelab.metrics import (
    ScoreSample,
    asr,
    candidate_thresholds,
    eer,
    far_frr,
    metrics_report,
    min_dcf,
    score_discrepancy,
)

scores = st.lists(st.floats(-1, 1, allow_nan=False).map(lambda x: round(x, 2)), min_size=1, max_size=40)


def test_far_frr_convention():
    s = ScoreSample([0.9, 0.5], [0.5, 0.1])
    # accept iff score >= tau
    assert far_frr(s, 0.5) == (0.5, 0.0)
    assert far_frr(s, 0.51) == (0.0, 0.5)


def test_separable_eer_zero():
    e, op = eer(ScoreSample([0.8, 0.9], [0.1, 0.2]))
    assert e == 0.0
    assert 0.2 < op.tau <= 0.8
    assert (op.far, op.frr) == (0.0, 0.0)


def test_fully_overlapping():
    e, _ = eer(ScoreSample([0.5, 0.5], [0.5, 0.5]))
    assert e == 0.5


def test_eer_tie_break_prefers_smaller_far():
    # candidates at -1 (FAR 1, FRR 0) and above the top (FAR 0, FRR 1) tie on |FAR-FRR|
    s = ScoreSample([0.3], [0.3])
    e, op = eer(s)
    assert op.far <= op.frr


def test_min_dcf_formula():
    s = ScoreSample([0.9, 0.8, 0.2], [0.1, 0.85])
    cost, op = min_dcf(s)
    far, frr = far_frr(s, op.tau)
    assert cost == pytest.approx(frr * 0.99 + far * 0.01)


def test_min_dcf_validation():
    with pytest.raises(ValueError):
        min_dcf(ScoreSample([0.5], [0.1]), p_target=0.0)
    with pytest.raises(ValueError):
        min_dcf(ScoreSample([0.5], [0.1]), c_fa=0.0)


def test_score_sample_validation():
    with pytest.raises(ValueError):
        ScoreSample([], [0.1])
    with pytest.raises(ValueError):
        ScoreSample([1.5], [0.1])


def test_candidates_cover_score_of_one():
    c = candidate_thresholds(ScoreSample([1.0], [0.0]))
    assert c[-1] > 1.0
    assert far_frr(ScoreSample([1.0], [0.0]), c[-1]) == (0.0, 1.0)


@settings(max_examples=150, deadline=None)
@given(scores, scores)
def test_eer_matches_brute_force(g, i):
    e, op = eer(ScoreSample(g, i))
    be, bt = brute_eer(g, i)
    assert e == be
    assert op.tau == bt


@settings(max_examples=150, deadline=None)
@given(scores, scores, st.sampled_from([0.01, 0.05, 0.5]))
def test_min_dcf_matches_brute_force(g, i, p):
    cost, op = min_dcf(ScoreSample(g, i), p_target=p)
    bc, bt = brute_min_dcf(g, i, p)
    assert cost == pytest.approx(bc, abs=1e-15)
    assert op.tau == bt


def test_asr():
    assert asr([0.1, 0.5, 0.9], 0.5) == pytest.approx(2 / 3)
    with pytest.raises(ValueError):
        asr([], 0.5)


def test_score_discrepancy():
    mean, std, r = score_discrepancy([0.1, 0.2, 0.3], [0.2, 0.3, 0.4])
    assert mean == pytest.approx(0.1)
    assert std == pytest.approx(0.0, abs=1e-12)
    assert r == pytest.approx(1.0)
    with pytest.raises(UndefinedCorrelationError):
        score_discrepancy([0.1, 0.1], [0.2, 0.3])
    with pytest.raises(ValueError):
        score_discrepancy([0.1], [0.2])


def test_report_echoes_parameters():
    rep = metrics_report(ScoreSample([0.9, 0.8], [0.1, 0.3]))
    assert rep["p_target"] == 0.01 and rep["c_miss"] == 1.0 and rep["c_fa"] == 1.0
    assert rep["eer"] == 0.0


def test_min_dcf_threshold_not_above_eer_threshold_when_misses_cost_more(rng):
    # with p_target = 0.01 a miss costs 99x a false accept, so tau_M <= tau_E
    g = np.clip(rng.normal(0.6, 0.1, 300), -1, 1)
    i = np.clip(rng.normal(0.3, 0.1, 3000), -1, 1)
    _, e_op = eer(ScoreSample(g, i))
    _, m_op = min_dcf(ScoreSample(g, i))
    assert m_op.tau <= e_op.tau

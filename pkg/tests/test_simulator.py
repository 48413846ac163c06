import os
import sys
import numpy as np
import pytest

sys.path.insert(0, os.path.realpath(
    os.path.join(os.path.basename(__file__), '..', 'src')))

from qcoinflip.analytics import ProtocolParams, bob_cheat_bound, honest_abort_terms
from qcoinflip.channel import ChannelParams, blank_probability
from qcoinflip.simulator import (SimulationReport, Verdict, coin_bias, estimate_bob_cheat, point_seed,
                                 estimate_honest_abort, run_generator, run_honest)


def test_run_honest_perfect_apparatus():
    """損失・雑音・ダークカウントが無い場合は最初のパルスで必ず完了"""
    ch = ChannelParams(k_loss=0.0, beta=0.0, eta=1.0, dark_count=0.0, noise=0.0)
    p = ProtocolParams(K=10, mu=20.0, a=0.9)
    for i in range(50):
        outcome = run_honest(p, ch, rng_seed=7, run_index=i)
        assert outcome.verdict == Verdict.COMPLETED
        assert outcome.first_detection_index == 1
        assert outcome.coin in (0, 1)


def test_run_honest_nothing_clicks():
    """空の光源・ダークカウント無しでは必ず検出なしで中断"""
    ch = ChannelParams(dark_count=0.0)
    p = ProtocolParams(K=100, mu=0.0, a=0.9)
    for i in range(10):
        outcome = run_honest(p, ch, rng_seed=1, run_index=i)
        assert outcome.verdict == Verdict.ABORT_NO_DETECTION
        assert outcome.coin is None
        assert outcome.first_detection_index is None


def test_run_honest_deterministic():
    """同じ種と実行番号からは同じ結果"""
    ch = ChannelParams(length_km=10)
    p = ProtocolParams(K=1000, mu=0.02, a=0.9)
    first = [run_honest(p, ch, rng_seed=42, run_index=i) for i in range(30)]
    second = [run_honest(p, ch, rng_seed=42, run_index=i) for i in range(30)]
    assert first == second


def test_run_outcome_fields():
    """コインは完了時のみ、検出番号は検出なし以外で記録される"""
    ch = ChannelParams(length_km=10, dark_count=1e-3, noise=0.2)
    p = ProtocolParams(K=200, mu=0.01, a=0.9)
    for i in range(300):
        outcome = run_honest(p, ch, rng_seed=5, run_index=i)
        assert (outcome.coin is not None) == (outcome.verdict == Verdict.COMPLETED)
        if outcome.verdict == Verdict.ABORT_NO_DETECTION:
            assert outcome.first_detection_index is None
        else:
            assert 1 <= outcome.first_detection_index <= p.K


def test_run_generator_streams():
    """実行番号ごとに異なる乱数列"""
    a = run_generator(0, 0).random(4)
    b = run_generator(0, 1).random(4)
    assert not np.array_equal(a, b)
    assert np.array_equal(a, run_generator(0, 0).random(4))


def test_estimate_honest_abort_perfect_detector():
    """ダークカウント・雑音が無い場合の中断率は Z^K"""
    ch = ChannelParams(dark_count=0.0, noise=0.0)
    p = ProtocolParams(K=20, mu=0.1, a=0.9)
    expected = blank_probability(p.mu, ch) ** p.K

    report = estimate_honest_abort(p, ch, runs=20000, seed=11)
    assert abs(report.abort_rate - expected) <= 4 * report.standard_error
    assert report.counts.get(Verdict.ABORT_NOISE_CHECK.value, 0) == 0
    assert report.counts.get(Verdict.ABORT_DARK_COUNT_CHECK.value, 0) == 0


def test_estimate_honest_abort_table_params():
    """実験パラメータでの中断率と原因ごとの割合を解析式と比較"""
    ch = ChannelParams(length_km=10)
    p = ProtocolParams(K=1000, mu=0.02, a=0.9)
    runs = 40000
    terms = honest_abort_terms(p, ch)

    report = estimate_honest_abort(p, ch, runs=runs, seed=3)
    assert abs(report.abort_rate - terms.total) <= 4 * report.standard_error

    for verdict, h in ((Verdict.ABORT_NO_DETECTION, terms.no_detection),
                       (Verdict.ABORT_DARK_COUNT_CHECK, terms.dark_count_check),
                       (Verdict.ABORT_NOISE_CHECK, terms.noise_check)):
        se = np.sqrt(h * (1 - h) / runs)
        assert abs(report.cause_fraction(verdict) - h) <= 4 * se + 1e-12, verdict


def test_estimate_honest_abort_report():
    """回数の合計と中断率の定義"""
    ch = ChannelParams(length_km=21)
    p = ProtocolParams(K=500, mu=0.05, a=0.9)
    report = estimate_honest_abort(p, ch, runs=5000, seed=0)

    assert sum(report.counts.values()) == report.runs
    assert report.abort_rate == (report.runs - report.completed) / report.runs
    assert report.standard_error == pytest.approx(
        np.sqrt(report.abort_rate * (1 - report.abort_rate) / report.runs))
    assert sum(report.coins) == report.completed

    d = report.to_dict()
    assert set(d['abort_breakdown']) == {v.value for v in Verdict}
    assert d['seed'] == 0


def test_estimate_honest_abort_deterministic():
    """同じ種からは同じ集計結果（並列数にもよらない）"""
    ch = ChannelParams(length_km=5)
    p = ProtocolParams(K=800, mu=0.03, a=0.9)
    first = estimate_honest_abort(p, ch, runs=3000, seed=9)
    second = estimate_honest_abort(p, ch, runs=3000, seed=9)
    parallel = estimate_honest_abort(p, ch, runs=3000, seed=9, workers=2)
    assert first.to_dict() == second.to_dict()
    assert first.to_dict() == parallel.to_dict()


def test_estimate_honest_abort_invalid_runs():
    with pytest.raises(ValueError):
        estimate_honest_abort(ProtocolParams(K=10, mu=0.1, a=0.9), ChannelParams(), runs=0, seed=0)


def test_coin_bias():
    """正直な実行のコインは偏らない"""
    ch = ChannelParams(length_km=1)
    p = ProtocolParams(K=2000, mu=0.02, a=0.9)
    report = estimate_honest_abort(p, ch, runs=20000, seed=21)

    bias, pvalue = coin_bias(report)
    assert bias < 4 * np.sqrt(0.25 / report.completed)
    assert 0.0 <= pvalue <= 1.0


def test_coin_bias_counts():
    report = SimulationReport(runs=10, seed=0, counts={'Completed': 8, 'AbortNoDetection': 2}, coins=(6, 2))
    assert report.coin_bias == pytest.approx(0.25)
    assert report.abort_rate == pytest.approx(0.2)
    assert report.cause_fraction(Verdict.ABORT_NO_DETECTION) == pytest.approx(0.2)


def test_estimate_bob_cheat():
    """光子数の抽出による不正確率は解析的な上界と一致"""
    p = ProtocolParams(K=5, mu=0.3, a=0.85)
    rate, se = estimate_bob_cheat(p, runs=40000, seed=2)
    assert abs(rate - bob_cheat_bound(p)) <= 4 * se


def test_estimate_bob_cheat_empty_source():
    """空の光源では当て推量のみ"""
    p = ProtocolParams(K=3, mu=0.0, a=0.9)
    rate, se = estimate_bob_cheat(p, runs=20000, seed=4)
    assert abs(rate - 0.5) <= 4 * np.sqrt(0.25 / 20000)


def test_point_seed():
    """格子点ごとの種は (seed, 番号) のみで決まり、互いに異なる"""
    seeds = [point_seed(0, i) for i in range(20)]
    assert seeds == [point_seed(0, i) for i in range(20)]
    assert len(set(seeds)) == 20
    assert point_seed(1, 0) != point_seed(0, 0)
    assert all(0 <= s < 2 ** 64 for s in seeds)

import io
import os
import sys
import numpy as np
import pandas as pd
import pytest

sys.path.insert(0, os.path.realpath(
    os.path.join(os.path.basename(__file__), '..', 'src')))

from qcoinflip.analytics import (EventProbs, ProtocolParams, abort_probability, alice_cheat, bob_cheat_bound,
                                 honest_abort)
from qcoinflip.channel import ChannelParams
from qcoinflip.optimizer import (LIMIT_COLUMNS, NoFairPoint, TargetUnreachable, advantage_crossover,
                                 advantage_limits, check_advantage_monotone, check_mu_monotone, figure_dataset,
                                 k_schedule, limit_length_sweep, optimize, optimize_grid, solve_fair_a,
                                 solve_fair_a_from_events, solve_mu_for_abort, sweep_figure)
from qcoinflip.qcoinflip import to_csv


def test_solve_fair_a_single_photon():
    """1光子パルスのみの場合 20a^2 - 28a + 9 = 0 より a* = 0.9"""
    events = EventProbs(pA1=0.0, pA2=1.0, pA3=0.0, pA4=0.0, p_rest=0.0)
    a = solve_fair_a_from_events(events)
    assert a == pytest.approx(0.9, abs=1e-12)
    assert alice_cheat(a) == pytest.approx(0.9, abs=1e-12)


def test_solve_fair_a_empty_source():
    """mu = 0 では p_B = 1/2 < 3/4 となり公平点は無い"""
    with pytest.raises(NoFairPoint):
        solve_fair_a(10, 0.0)


def test_solve_fair_a_residual():
    """求めた a* で p_A と p_B を再計算した差が 1e-9 未満"""
    a = solve_fair_a(1000, 0.1)
    assert 0.5 <= a <= 1.0
    residual = abs(alice_cheat(a) - bob_cheat_bound(ProtocolParams(K=1000, mu=0.1, a=a)))
    assert residual < 1e-9


def test_solve_fair_a_certain_cheat():
    """Bob が常に不正できる場合 a* = 0.5"""
    events = EventProbs(pA1=0.0, pA2=0.0, pA3=0.0, pA4=0.0, p_rest=1.0)
    assert solve_fair_a_from_events(events) == 0.5


def test_solve_mu_for_abort_noise_floor():
    """雑音による下限 e/2 以下は達成できない"""
    ch = ChannelParams(length_km=1)
    with pytest.raises(TargetUnreachable):
        solve_mu_for_abort(15000, ch, 0.005)
    with pytest.raises(TargetUnreachable):
        solve_mu_for_abort(15000, ch, 0.001)


def test_solve_mu_for_abort_unreachable_range():
    """探索範囲で達成できない場合は達成可能な範囲を報告"""
    ch = ChannelParams(length_km=21)
    with pytest.raises(TargetUnreachable) as e:
        solve_mu_for_abort(1, ch, 0.01)
    low, high = e.value.achievable
    assert low <= high
    assert low > 0.01


def test_solve_mu_for_abort_residual():
    """求めた mu で中断確率を再計算した差が 1e-8 未満"""
    ch = ChannelParams(length_km=1)
    source = solve_mu_for_abort(15000, ch, 0.02)
    assert 0.0 < source.mu < 2.0
    assert abs(abort_probability(15000, source, ch) - 0.02) < 1e-8


def test_solve_mu_for_abort_monotone():
    """目標の中断確率が小さいほど mu は大きい"""
    ch = ChannelParams(length_km=10)
    mu_01 = solve_mu_for_abort(5000, ch, 0.01).mu
    mu_02 = solve_mu_for_abort(5000, ch, 0.02).mu
    assert mu_01 > mu_02


def test_k_schedule():
    schedule = k_schedule(15000)
    assert schedule[:4] == [1, 2, 4, 8]
    assert schedule[-1] == 15000
    assert 8192 in schedule
    assert schedule == sorted(set(schedule))

    dense = k_schedule(15000, ratio=np.sqrt(2))
    assert len(dense) > len(schedule)
    assert dense[-1] == 15000

    assert k_schedule(1) == [1]
    with pytest.raises(ValueError):
        k_schedule(0)
    with pytest.raises(ValueError):
        k_schedule(100, ratio=1.0)


def test_optimize_headline():
    """L = 21 km, H = 0.01 で不正確率は約 0.91 となり古典プロトコルより小さい"""
    point = optimize(ChannelParams(length_km=21), 0.01)

    assert 0.89 <= point.p_cheat <= 0.925
    assert point.classical == pytest.approx(0.9292893219, abs=1e-10)
    assert point.advantage
    assert point.params.K <= 15000
    assert point.fairness_residual < 1e-9
    assert abs(honest_abort(point.params, ChannelParams(length_km=21)) - 0.01) < 1e-8
    assert point.to_record()['length_km'] == 21.0


def test_optimize_boundary():
    """H = 0.02 では古典プロトコルの 0.9 とほぼ一致し有利にはならない"""
    point = optimize(ChannelParams(length_km=21), 0.02)
    assert 0.0 <= point.margin < 0.01
    assert not point.advantage


def test_optimize_beyond_limit():
    """L = 30 km では古典プロトコルより有利にならない"""
    for H in (0.01, 0.02):
        try:
            point = optimize(ChannelParams(length_km=30), H)
        except (NoFairPoint, TargetUnreachable):
            continue
        assert not point.advantage


def test_optimize_noise_floor():
    with pytest.raises(TargetUnreachable):
        optimize(ChannelParams(length_km=1), 0.005)


def test_optimize_schedule_stability():
    """K の走査を細かくしても結果は 1e-4 以内で変わらない"""
    ch = ChannelParams(length_km=21)
    coarse = optimize(ch, 0.01, ratio=2.0)
    dense = optimize(ch, 0.01, ratio=np.sqrt(2))
    assert abs(coarse.p_cheat - dense.p_cheat) < 1e-4


def test_sweep_figure_classical_curve():
    """図2の古典プロトコルの列は 1 - sqrt(H/2)"""
    df = sweep_figure(2, ChannelParams(), [5.0], [0.01, 0.02])
    assert list(df['H_target']) == [0.01, 0.02]
    assert df['classical'].iloc[1] == pytest.approx(0.9, abs=1e-12)
    assert (df['figure'] == 2).all()
    assert set(['length_km', 'H_target', 'K', 'mu', 'a', 'p_cheat', 'classical', 'advantage']) <= set(df.columns)


def test_sweep_figure_records_errors():
    """達成できない格子点は原因を記録して飛ばす"""
    df = sweep_figure(3, ChannelParams(), [1.0], [0.004, 0.01])
    row = df[df['H_target'] == 0.004].iloc[0]
    assert row['error'].startswith('TargetUnreachable')
    assert pd.isna(row['a'])
    assert df[df['H_target'] == 0.01]['error'].iloc[0] == ''


def test_sweep_figure_invalid():
    with pytest.raises(ValueError):
        sweep_figure(4, ChannelParams(), [1.0], [0.01])
    with pytest.raises(ValueError):
        sweep_figure(1, ChannelParams(), [], [0.01])


def test_check_advantage_monotone():
    """一度有利でなくなった後に有利となる点を検出"""
    df = pd.DataFrame({
        'length_km': [1.0, 10.0, 20.0, 1.0, 10.0],
        'H_target': [0.01, 0.01, 0.01, 0.02, 0.02],
        'advantage': [True, False, True, True, False],
    })
    violations = check_advantage_monotone(df)
    assert len(violations) == 1
    assert 'H=0.01' in violations[0]

    assert advantage_limits(df) == {0.01: 20.0, 0.02: 1.0}


def test_check_mu_monotone():
    df = pd.DataFrame({
        'length_km': [1.0, 1.0, 1.0],
        'H_target': [0.02, 0.01, 0.015],
        'mu': [0.01, 0.02, 0.03],
    })
    assert len(check_mu_monotone(df)) == 1
    assert check_mu_monotone(df.assign(H_target=[0.02, 0.015, 0.01])) == []


@pytest.mark.slow
def test_advantage_region():
    """L <= 21 km, H = 0.01, 0.015 では有利、L = 30 km では有利でない"""
    lengths = [1.0, 5.0, 10.0, 15.0, 21.0, 30.0]
    df = optimize_grid(ChannelParams(), lengths, [0.01, 0.015, 0.02])

    inside = df[(df['length_km'] <= 21.0) & (df['H_target'] < 0.02)]
    assert inside['advantage'].all()
    assert (inside['K'] <= 15000).all()

    boundary = df[(df['length_km'] <= 21.0) & (df['H_target'] == 0.02)]
    margin = boundary['p_cheat'] - boundary['classical']
    assert ((margin >= 0.0) & (margin < 0.01)).all()

    outside = df[df['length_km'] == 30.0]
    assert not outside['advantage'].fillna(False).astype(bool).any()

    assert check_advantage_monotone(df) == []

    for _, row in df.dropna(subset=['a']).iterrows():
        params = ProtocolParams(K=int(row['K']), mu=float(row['mu']), a=float(row['a']))
        assert abs(alice_cheat(params.a) - bob_cheat_bound(params)) < 1e-9


@pytest.mark.slow
def test_figure_curves():
    """図1は mu について非増加、図2は H <= 0.015 で古典プロトコルより小さい"""
    targets = [0.008, 0.01, 0.012, 0.014, 0.016, 0.018, 0.02]
    lengths = [1.0, 5.0, 10.0, 15.0, 21.0]

    fig1 = sweep_figure(1, ChannelParams(), lengths, targets)
    assert check_mu_monotone(fig1) == []

    fig2 = sweep_figure(2, ChannelParams(), lengths, targets)
    inside = fig2[fig2['H_target'] <= 0.015]
    assert (inside['p_cheat'] < inside['classical']).all()


@pytest.mark.slow
def test_figure_sweep_pulse_bound():
    """H = 0.008 から 0.02 の図の格子で K <= 15000"""
    targets = list(np.linspace(0.008, 0.02, 7))
    df = optimize_grid(ChannelParams(), [1.0, 5.0, 10.0, 15.0, 21.0], targets)
    solved = df.dropna(subset=['K'])
    assert len(solved) > 0
    assert (solved['K'] <= 15000).all()


def test_advantage_crossover_invalid_range():
    with pytest.raises(ValueError):
        advantage_crossover(ChannelParams(), 0.01, L_range=(10.0, 5.0))
    with pytest.raises(ValueError):
        advantage_crossover(ChannelParams(), 0.01, L_range=(-1.0, 5.0))


def test_advantage_crossover_noise_floor():
    with pytest.raises(TargetUnreachable):
        advantage_crossover(ChannelParams(), 0.005)


def test_advantage_crossover_no_advantage():
    """探索範囲の下端で有利でなければ None"""
    assert advantage_crossover(ChannelParams(), 0.01, L_range=(30.0, 100.0)) is None


def test_advantage_crossover_range_too_short():
    """探索範囲の上端でも有利ならエラー"""
    with pytest.raises(ValueError) as e:
        advantage_crossover(ChannelParams(), 0.01, L_range=(0.0, 10.0))
    assert 'widen' in str(e.value)


@pytest.mark.slow
@pytest.mark.parametrize('H_target, expected', [(0.008, 24.3), (0.01, 27.9), (0.015, 26.1)])
def test_advantage_crossover(H_target, expected):
    """有利となる限界の通信路長の前後で有利・不利が入れ替わる"""
    L = advantage_crossover(ChannelParams(), H_target)
    assert L == pytest.approx(expected, abs=0.2)

    inside = optimize(ChannelParams(length_km=L - 0.5), H_target)
    assert inside.margin < 0.0
    try:
        outside = optimize(ChannelParams(length_km=L + 0.5), H_target)
        assert outside.margin >= 0.0
    except NoFairPoint:
        pass


def test_limit_length_sweep_unreachable():
    """雑音による下限以下の目標は error 列に記録"""
    df = limit_length_sweep(ChannelParams(), [0.025, 0.03], [0.01, 0.012])
    assert list(df.columns) == LIMIT_COLUMNS
    assert len(df) == 4
    assert list(df['noise']) == [0.025, 0.025, 0.03, 0.03]
    assert df['crossover_km'].isna().all()
    assert df['error'].str.startswith('TargetUnreachable').all()


def test_limit_length_sweep_invalid():
    with pytest.raises(ValueError):
        limit_length_sweep(ChannelParams(), [], [0.01])
    with pytest.raises(ValueError):
        limit_length_sweep(ChannelParams(), [1.5], [0.01])


@pytest.mark.slow
def test_limit_length_sweep_noise():
    """誤り率が小さいほど有利となる限界の通信路長は長い"""
    df = limit_length_sweep(ChannelParams(), [0.005, 0.01], [0.01], workers=2)
    assert (df['error'] == '').all()
    low, high = df['crossover_km']
    assert low > high > 21.0


GOLDEN_FIGURES = os.path.join(os.path.dirname(os.path.realpath(__file__)), 'golden', 'figures.csv')


@pytest.mark.slow
def test_figures_golden():
    """図1-3のデータセットは固定した値と一致"""
    grid = optimize_grid(ChannelParams(), [1.0, 10.0, 21.0], [0.008, 0.01, 0.015, 0.02])
    text = to_csv(pd.concat([figure_dataset(k, grid) for k in (1, 2, 3)], ignore_index=True))

    if not os.path.exists(GOLDEN_FIGURES):
        os.makedirs(os.path.dirname(GOLDEN_FIGURES), exist_ok=True)
        with open(GOLDEN_FIGURES, mode='w', encoding='utf-8', newline='\n') as f:
            f.write(text)
        pytest.skip('golden dataset written: {}'.format(GOLDEN_FIGURES))

    expected = pd.read_csv(GOLDEN_FIGURES, keep_default_na=False, na_values=[''])
    actual = pd.read_csv(io.StringIO(text), keep_default_na=False, na_values=[''])
    pd.testing.assert_frame_equal(actual, expected, check_exact=False, rtol=1e-9, atol=1e-12)

"""
正直なプロトコル実行のモンテカルロシミュレーションに関するモジュール
"""

import logging
import numpy as np
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from scipy.stats import chisquare
from typing import Dict, Optional, Tuple

from qcoinflip.analytics import ProtocolParams, event_cheat_values
from qcoinflip.channel import ChannelParams, blank_probability, sample_photon_numbers
from qcoinflip.qstate import state_vector


class Verdict(str, Enum):
    """1回の実行結果の種別"""
    COMPLETED = 'Completed'
    ABORT_NO_DETECTION = 'AbortNoDetection'
    ABORT_DARK_COUNT_CHECK = 'AbortDarkCountCheck'
    ABORT_NOISE_CHECK = 'AbortNoiseCheck'


@dataclass(frozen=True)
class RunOutcome:
    """1回の正直な実行の結果

    Attributes:
      verdict(Verdict): 結果の種別
      coin(int, Optional): コインの値 b = c_j xor c'_j（完了時のみ）
      first_detection_index(int, Optional): 最初に検出したパルス番号 j（1始まり）
    """
    verdict: Verdict
    coin: Optional[int] = None
    first_detection_index: Optional[int] = None


@dataclass
class SimulationReport:
    """正直な実行の集計結果

    Attributes:
      runs(int): 実行回数
      seed(int): 乱数の種
      counts(Dict[str, int]): 結果の種別ごとの回数
      coins(Tuple[int, int]): 完了した実行でのコインの値 (0, 1) の回数
    """
    runs: int
    seed: int
    counts: Dict[str, int] = field(default_factory=dict)
    coins: Tuple[int, int] = (0, 0)

    @property
    def completed(self) -> int:
        return self.counts.get(Verdict.COMPLETED.value, 0)

    @property
    def abort_rate(self) -> float:
        return (self.runs - self.completed) / self.runs

    @property
    def standard_error(self) -> float:
        return _standard_error(self.abort_rate, self.runs)

    def cause_fraction(self, verdict: Verdict) -> float:
        """中断の原因ごとの割合"""
        return self.counts.get(Verdict(verdict).value, 0) / self.runs

    def cause_standard_error(self, verdict: Verdict) -> float:
        return _standard_error(self.cause_fraction(verdict), self.runs)

    @property
    def coin_bias(self) -> float:
        """|P(b=0) - 1/2|"""
        if self.completed == 0:
            return 0.0
        return abs(self.coins[0] / self.completed - 0.5)

    @property
    def coin_pvalue(self) -> float:
        """コインの一様性のカイ二乗検定の p 値"""
        if self.completed == 0:
            return 1.0
        return float(chisquare(list(self.coins)).pvalue)

    def to_dict(self) -> dict:
        return {
            'runs': self.runs,
            'seed': self.seed,
            'abort_rate': self.abort_rate,
            'standard_error': self.standard_error,
            'abort_breakdown': {v.value: self.counts.get(v.value, 0) for v in Verdict},
            'abort_fractions': {v.value: {'fraction': self.cause_fraction(v),
                                          'standard_error': self.cause_standard_error(v)}
                                for v in Verdict if v is not Verdict.COMPLETED},
            'coins': list(self.coins),
            'coin_bias': self.coin_bias,
            'coin_pvalue': self.coin_pvalue,
        }


def _standard_error(p: float, runs: int) -> float:
    return float(np.sqrt(p * (1 - p) / runs))


def run_generator(seed: int, run_index: int) -> np.random.Generator:
    """(seed, 実行番号) から決まる実行ごとの乱数生成器"""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(run_index,)))


def point_seed(seed: int, point_index: int) -> int:
    """(seed, 格子点番号) から決まる格子点ごとの乱数の種

    Args:
      seed(int): 全体の乱数の種
      point_index(int): 格子点の番号

    Returns:
      int: 格子点の乱数の種（非負の 64bit 整数）
    """
    state = np.random.SeedSequence(seed, spawn_key=(point_index,)).generate_state(2, dtype=np.uint32)
    return (int(state[0]) << 32) | int(state[1])


def run_honest(p: ProtocolParams, ch: ChannelParams, rng_seed: int, run_index: int = 0) -> RunOutcome:
    """正直なプロトコルを1回実行する

    Args:
      p(ProtocolParams): プロトコルのパラメータ
      ch(ChannelParams): 実験装置のパラメータ
      rng_seed(int): 乱数の種
      run_index(int): 実行番号（同じ種から独立な系列を作る）

    Returns:
      RunOutcome: 実行結果
    """
    Z = blank_probability(p.mu, ch)
    return _simulate_run(p, ch, Z, run_generator(rng_seed, run_index))


def _measure(bob_basis: int, alpha: int, c: int, a: float, rng: np.random.Generator) -> int:
    """Bob が自分の基底でパルスを測定した結果"""
    overlap = state_vector(bob_basis, 0, a) @ state_vector(alpha, c, a)
    return 0 if rng.random() < overlap ** 2 else 1


def _simulate_run(p: ProtocolParams, ch: ChannelParams, Z: float, rng: np.random.Generator) -> RunOutcome:
    # 1パルスで何らかの反応がある確率
    click = 1 - Z * (1 - ch.dark_count)
    if click <= 0.0:
        return RunOutcome(Verdict.ABORT_NO_DETECTION)

    # 最初に反応したパルス（パルスごとの独立試行と同じ分布）
    j = int(rng.geometric(click))
    if j > p.K:
        return RunOutcome(Verdict.ABORT_NO_DETECTION)

    # 信号とダークカウントが同時の場合は信号とみなす
    signal = rng.random() < (1 - Z) / click

    alpha, c = (int(x) for x in rng.integers(0, 2, size=2))
    bob_basis, bob_bit = (int(x) for x in rng.integers(0, 2, size=2))

    if signal:
        outcome = _measure(bob_basis, alpha, c, p.a, rng)
        if rng.random() < ch.noise:
            outcome ^= 1
        verdict = Verdict.ABORT_NOISE_CHECK
    else:
        outcome = int(rng.integers(0, 2))
        verdict = Verdict.ABORT_DARK_COUNT_CHECK

    # 基底が一致する場合のみ Bob は結果を検査する
    if bob_basis == alpha and outcome != c:
        return RunOutcome(verdict, first_detection_index=j)

    return RunOutcome(Verdict.COMPLETED, coin=c ^ bob_bit, first_detection_index=j)


def _simulate_chunk(args) -> Tuple[Counter, Tuple[int, int]]:
    p, ch, seed, start, stop = args
    Z = blank_probability(p.mu, ch)
    counts = Counter()
    coins = [0, 0]
    for run_index in range(start, stop):
        outcome = _simulate_run(p, ch, Z, run_generator(seed, run_index))
        counts[outcome.verdict.value] += 1
        if outcome.coin is not None:
            coins[outcome.coin] += 1
    return counts, tuple(coins)


def estimate_honest_abort(p: ProtocolParams, ch: ChannelParams, runs: int, seed: int,
                          workers: int = 1) -> SimulationReport:
    """正直な実行を繰り返して中断確率を推定する

    Args:
      p(ProtocolParams): プロトコルのパラメータ
      ch(ChannelParams): 実験装置のパラメータ
      runs(int): 実行回数
      seed(int): 乱数の種
      workers(int): 並列プロセス数

    Returns:
      SimulationReport: 集計結果

    Notes:
      実行 i の乱数は (seed, i) のみで決まるため、並列数によらず結果は同一。
    """
    if runs < 1:
        raise ValueError('runs must be at least 1: {}'.format(runs))

    logging.info('モンテカルロ計算: K={}, mu={}, L={}km, {}回'.format(p.K, p.mu, ch.length_km, runs))

    if workers <= 1:
        chunks = [_simulate_chunk((p, ch, seed, 0, runs))]
    else:
        bounds = np.linspace(0, runs, workers + 1).astype(int)
        tasks = [(p, ch, seed, int(start), int(stop)) for start, stop in zip(bounds[:-1], bounds[1:])]
        with ProcessPoolExecutor(max_workers=workers) as executor:
            chunks = list(executor.map(_simulate_chunk, tasks))

    counts = Counter()
    coins = [0, 0]
    for chunk_counts, chunk_coins in chunks:
        counts.update(chunk_counts)
        coins[0] += chunk_coins[0]
        coins[1] += chunk_coins[1]

    return SimulationReport(runs=runs, seed=seed, counts=dict(counts), coins=tuple(coins))


def coin_bias(report: SimulationReport) -> Tuple[float, float]:
    """完了した実行のコインの偏りと一様性検定の p 値

    Args:
      report(SimulationReport): 集計結果

    Returns:
      Tuple[float, float]: |P(b=0) - 1/2| とカイ二乗検定の p 値
    """
    return report.coin_bias, report.coin_pvalue


def estimate_bob_cheat(p: ProtocolParams, runs: int, seed: int, batch: int = 10000) -> Tuple[float, float]:
    """光子数を抽出し、事象ごとの最適戦略を適用して Bob の不正確率を推定する

    Args:
      p(ProtocolParams): プロトコルのパラメータ
      runs(int): 試行回数
      seed(int): 乱数の種
      batch(int): 一度に抽出する試行数

    Returns:
      Tuple[float, float]: 不正成功率とその標準誤差
    """
    rng = np.random.default_rng(seed)
    values = event_cheat_values(p.a)

    successes = 0
    done = 0
    while done < runs:
        size = min(batch, runs - done)
        photons = sample_photon_numbers(p.mu, (size, p.K), rng)

        ones = np.sum(photons == 1, axis=1)
        twos = np.sum(photons == 2, axis=1)
        many = np.sum(photons >= 3, axis=1)

        # 事象ごとの成功確率（該当しない場合は確実に不正できる）
        success = np.full(size, values['p_rest'])
        low = many == 0
        success[low & (twos == 0) & (ones == 0)] = values['pA1']
        success[low & (twos == 0) & (ones >= 1)] = values['pA2']
        success[low & (twos == 1) & (ones == 0)] = values['pA3']
        success[low & (twos == 1) & (ones >= 1)] = values['pA4']

        successes += int(np.sum(rng.random(size) < success))
        done += size

    rate = successes / runs
    return rate, _standard_error(rate, runs)

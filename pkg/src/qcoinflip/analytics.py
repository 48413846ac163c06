"""
正直な中断確率・不正確率の解析式に関するモジュール
"""

import numpy as np
from dataclasses import dataclass, asdict
from typing import Dict, Union

from qcoinflip.channel import ChannelParams, SourceParams, blank_probability, poisson_pmf
from qcoinflip.qstate import check_coefficient

# パルス数の上限（健全性の確認用）
K_LIMIT = 10 ** 6

# 等比級数の閉形式を使わない公比の閾値
SERIES_RATIO_LIMIT = 1 - 1e-12


@dataclass(frozen=True)
class ProtocolParams:
    """プロトコルの調整パラメータ

    Attributes:
      K(int): Alice が送るパルス数
      mu(float): 平均光子数
      a(float): 状態係数 [0.5, 1]
    """
    K: int
    mu: float
    a: float

    def __post_init__(self):
        if int(self.K) != self.K or not 1 <= self.K <= K_LIMIT:
            raise ValueError('pulse count K must be an integer in [1, {}]: {}'.format(K_LIMIT, self.K))
        SourceParams(self.mu)
        check_coefficient(self.a)

    @property
    def source(self) -> SourceParams:
        return SourceParams(self.mu)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class EventProbs:
    """Bob が受け取る光子数配置の事象確率

    Attributes:
      pA1(float): 全パルスが空
      pA2(float): 全パルスが1光子以下で、1光子パルスが1つ以上
      pA3(float): 2光子パルスがちょうど1つで、他は空
      pA4(float): 2光子パルスがちょうど1つで、他は1光子以下かつ1光子パルスが1つ以上
      p_rest(float): 残り（Bob は確実に不正できるとみなす）
    """
    pA1: float
    pA2: float
    pA3: float
    pA4: float
    p_rest: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class AbortTerms:
    """正直な中断確率 H の内訳

    Attributes:
      no_detection(float): どのパルスでも検出器が反応しない
      dark_count_check(float): 最初の反応がダークカウントで、検査で中断
      noise_check(float): 最初の反応が信号で、雑音により検査で中断
    """
    no_detection: float
    dark_count_check: float
    noise_check: float

    @property
    def total(self) -> float:
        return self.no_detection + self.dark_count_check + self.noise_check

    def to_dict(self) -> dict:
        return asdict(self)


def dark_first_probability(K: int, Z: float, dark_count: float) -> float:
    """最初の反応がダークカウントとなる確率 sum_{i=1}^K (1-d)^(i-1) d Z^i

    Args:
      K(int): パルス数
      Z(float): 1パルスで信号が届かない確率
      dark_count(float): スロットあたりのダークカウント確率

    Returns:
      float: 確率
    """
    ratio = (1 - dark_count) * Z

    if ratio > SERIES_RATIO_LIMIT:
        # 公比が1に近い場合は直接和
        i = np.arange(1, K + 1)
        return float(np.sum((1 - dark_count) ** (i - 1) * dark_count * Z ** i))

    return dark_count * Z * (1 - ratio ** K) / (1 - ratio)


def abort_terms(K: int, mu: Union[float, SourceParams], ch: ChannelParams) -> AbortTerms:
    """正直な中断確率の3つの項

    Args:
      K(int): パルス数
      mu(float or SourceParams): 平均光子数
      ch(ChannelParams): 実験装置のパラメータ

    Returns:
      AbortTerms: 中断確率の内訳
    """
    Z = blank_probability(mu, ch)
    d = ch.dark_count

    no_detection = Z ** K * (1 - d) ** K
    dark_first = dark_first_probability(K, Z, d)

    # ダークカウントでは基底一致(1/2)かつ結果不一致(1/2)のとき中断
    dark_count_check = dark_first / 4

    # 信号では基底一致(1/2)かつ雑音による誤りのとき中断
    noise_check = (1 - no_detection - dark_first) * ch.noise / 2

    return AbortTerms(no_detection, dark_count_check, noise_check)


def abort_probability(K: int, mu: Union[float, SourceParams], ch: ChannelParams) -> float:
    """パルス数と平均光子数から正直な中断確率 H を計算"""
    return abort_terms(K, mu, ch).total


def honest_abort_terms(p: ProtocolParams, ch: ChannelParams) -> AbortTerms:
    """両者が正直な場合の中断確率の内訳"""
    return abort_terms(p.K, p.mu, ch)


def honest_abort(p: ProtocolParams, ch: ChannelParams) -> float:
    """両者が正直な場合にプロトコルが中断する確率 H

    Args:
      p(ProtocolParams): プロトコルのパラメータ
      ch(ChannelParams): 実験装置のパラメータ

    Returns:
      float: 正直な中断確率 [0, 1]
    """
    return honest_abort_terms(p, ch).total


def alice_cheat(a: float) -> float:
    """不正な Alice の最適な不正確率 (3 + 2 sqrt(a(1-a))) / 4

    Args:
      a(float): 状態係数 [0.5, 1]

    Returns:
      float: 不正確率 [0.75, 1]
    """
    a = check_coefficient(a)
    return (3 + 2 * np.sqrt(a * (1 - a))) / 4


def event_probs(K: int, mu: Union[float, SourceParams]) -> EventProbs:
    """K パルスの光子数配置について事象 A1-A4 の確率

    Args:
      K(int): パルス数
      mu(float or SourceParams): 平均光子数

    Returns:
      EventProbs: 事象確率
    """
    if int(K) != K or K < 1:
        raise ValueError('pulse count K must be a positive integer: {}'.format(K))
    K = int(K)

    p0 = poisson_pmf(mu, 0)
    p1 = poisson_pmf(mu, 1)
    p2 = poisson_pmf(mu, 2)

    # 全パルスが1光子以下
    at_most_one = p0 + p1

    pA1 = p0 ** K
    pA2 = at_most_one ** K - p0 ** K
    pA3 = K * p2 * p0 ** (K - 1)
    pA4 = K * p2 * (at_most_one ** (K - 1) - p0 ** (K - 1))
    p_rest = max(1.0 - (pA1 + pA2 + pA3 + pA4), 0.0)

    return EventProbs(pA1, pA2, pA3, pA4, p_rest)


def cheat_given_A4(a: float) -> float:
    """事象 A4（2光子パルス1つと1光子パルス）での不正確率の上界 -2a^2 + 4a - 1

    Args:
      a(float): 状態係数 [0.5, 1]

    Returns:
      float: 不正確率の上界 [a, 1]
    """
    a = check_coefficient(a)
    return -2 * a ** 2 + 4 * a - 1


def event_cheat_values(a: float) -> Dict[str, float]:
    """事象ごとの Bob の不正成功確率"""
    a = check_coefficient(a)
    return {
        'pA1': 0.5,
        'pA2': a,
        'pA3': a,
        'pA4': cheat_given_A4(a),
        'p_rest': 1.0,
    }


def bob_cheat_contributions(events: EventProbs, a: float) -> Dict[str, float]:
    """事象ごとの不正確率への寄与 P(A_i) P(cheat | A_i)"""
    values = event_cheat_values(a)
    probs = events.to_dict()
    return {key: probs[key] * values[key] for key in values}


def bob_cheat_from_events(events: EventProbs, a: float) -> float:
    """事象確率から不正な Bob の不正確率の上界を計算

    Args:
      events(EventProbs): 事象確率
      a(float): 状態係数 [0.5, 1]

    Returns:
      float: 不正確率の上界
    """
    return sum(bob_cheat_contributions(events, a).values())


def bob_cheat_bound(p: ProtocolParams) -> float:
    """不正な Bob の不正確率の上界 p_B

    Args:
      p(ProtocolParams): プロトコルのパラメータ

    Returns:
      float: 不正確率の上界 [1/2, 1]
    """
    return bob_cheat_from_events(event_probs(p.K, p.mu), p.a)


def classical_bound(H: float) -> float:
    """中断確率 H における古典プロトコルの最適な不正確率 1 - sqrt(H/2)

    Args:
      H(float): 正直な中断確率 [0, 1]

    Returns:
      float: 古典的な不正確率
    """
    if not 0.0 <= H <= 1.0:
        raise ValueError('abort probability H must lie in [0, 1]: {}'.format(H))
    return 1 - np.sqrt(H / 2)

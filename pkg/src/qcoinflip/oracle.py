"""
識別確率の主張を数値的に検証するモジュール

1光子・2光子の Helstrom 測定の成功確率と、2光子パルスに対する
決定的測定（答えを出さない場合がある測定）の上界、事象確率の閉形式を検証する。
"""

import itertools
import logging
import numpy as np
import pandas as pd
from dataclasses import dataclass, asdict
from typing import Iterable, Optional, Tuple

from qcoinflip.analytics import EventProbs, cheat_given_A4, event_probs
from qcoinflip.channel import poisson_pmf
from qcoinflip.qstate import check_coefficient, helstrom_success, mixture_density, symmetric_eigenvalues

# 角度パラメータの分割数
SEARCH_RESOLUTION = 200

# 細分化の倍率
REFINE_FACTOR = 10

# 許容誤差
SINGLE_PHOTON_TOLERANCE = 1e-10
TWO_PHOTON_TOLERANCE = 1e-9
BOUND_TOLERANCE = 1e-9
COMPLETENESS_TOLERANCE = 1e-10
EVENT_TOLERANCE = 1e-9

# 列挙するパルス数の上限 (4^K 通り)
ENUMERATION_LIMIT = 8


class OracleViolation(AssertionError):
    """検証の失敗（違反した a と測定パラメータを保持する）"""

    def __init__(self, message: str, a: float, details: dict = None):
        super().__init__('{} (a={!r}, {})'.format(message, a, details or {}))
        self.a = a
        self.details = details or {}


@dataclass(frozen=True)
class ConclusiveStrategy:
    """2光子パルスに対する3値測定（0, 1, 判定不能）

    Attributes:
      a(float): 状態係数
      theta(float): 測定ベクトルの角度 [rad]
      weight(float): 決定的な結果の測定演算子の重み
      conclusive_prob(float): 答えを出す確率 c
      conclusive_accuracy(float): 答えが正しい確率 gamma
      inconclusive_accuracy(float): 判定不能時に推測が正しい確率 gamma'
      combined_value(float): c gamma + (1 - c) a
    """
    a: float
    theta: float
    weight: float
    conclusive_prob: float
    conclusive_accuracy: float
    inconclusive_accuracy: float
    combined_value: float

    @property
    def guess_value(self) -> float:
        """判定不能時に当て推量する場合の成功確率 x = c gamma + (1 - c)/2"""
        c = self.conclusive_prob
        return c * self.conclusive_accuracy + (1 - c) / 2

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class VerificationReport:
    """検証結果

    Attributes:
      name(str): 検証名
      passed(bool): すべての点で成立したか
      max_deviation(float): 最大偏差
      table(pd.DataFrame): グリッド点ごとの結果
    """
    name: str
    passed: bool
    max_deviation: float
    table: pd.DataFrame

    def to_dict(self) -> dict:
        return {
            'name': self.name,
            'passed': self.passed,
            'max_deviation': self.max_deviation,
            'rows': self.table.to_dict(orient='records'),
        }


def _check_grid(a_grid: Iterable[float]) -> list:
    grid = [check_coefficient(a) for a in a_grid]
    if len(grid) == 0:
        raise ValueError('coefficient grid must not be empty')
    return grid


def verify_single_photon_helstrom(a_grid: Iterable[float]) -> VerificationReport:
    """1光子パルスの Helstrom 成功確率が a に等しいことの検証

    Args:
      a_grid(Iterable[float]): 状態係数のグリッド [0.5, 1]

    Returns:
      VerificationReport: 検証結果

    Raises:
      OracleViolation: 偏差が許容誤差以上の a があった場合
    """
    return _verify_helstrom(a_grid, photons=1, tol=SINGLE_PHOTON_TOLERANCE)


def verify_two_photon_helstrom(a_grid: Iterable[float]) -> VerificationReport:
    """2光子パルスの Helstrom 成功確率が a に等しいことの検証

    Args:
      a_grid(Iterable[float]): 状態係数のグリッド [0.5, 1]

    Returns:
      VerificationReport: 検証結果

    Raises:
      OracleViolation: 偏差が許容誤差以上の a があった場合
    """
    return _verify_helstrom(a_grid, photons=2, tol=TWO_PHOTON_TOLERANCE)


def _verify_helstrom(a_grid: Iterable[float], photons: int, tol: float) -> VerificationReport:
    rows = []
    for a in _check_grid(a_grid):
        success = helstrom_success(
            mixture_density(0, a, photons),
            mixture_density(1, a, photons))
        deviation = abs(success - a)
        if deviation >= tol:
            raise OracleViolation(
                '{}-photon Helstrom success differs from a'.format(photons), a,
                {'success': success, 'deviation': deviation})
        rows.append({'a': a, 'helstrom': success, 'deviation': deviation})

    table = pd.DataFrame(rows)
    logging.info('{}光子 Helstrom 検証: {}点, 最大偏差 {:.3e}'.format(
        photons, len(table), table['deviation'].max()))

    return VerificationReport(
        name='helstrom_{}_photon'.format(photons),
        passed=True,
        max_deviation=float(table['deviation'].max()),
        table=table)


def measurement_operators(theta: float, weight: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """3値測定の測定演算子 (E0, E1, E_inconclusive)

    Args:
      theta(float): 測定ベクトルの角度 [rad]
      weight(float): 決定的な結果の重み

    Returns:
      Tuple[np.ndarray, np.ndarray, np.ndarray]: 4x4 の測定演算子

    Notes:
      結果0: weight |psi0><psi0|, psi0 = cos(theta)|00> + sin(theta)|11>
      結果1: weight |psi1><psi1|, psi1 = sin(theta)|00> + cos(theta)|11>
      残り（反対称成分を含む）は判定不能とする。
    """
    psi0, psi1 = _outcome_vectors(np.array([theta]))
    e0 = weight * np.outer(psi0[0], psi0[0])
    e1 = weight * np.outer(psi1[0], psi1[0])
    return e0, e1, np.eye(4) - e0 - e1


def check_completeness(theta: float, weight: float, tol: float = COMPLETENESS_TOLERANCE) -> bool:
    """測定演算子の和が単位行列で、各演算子が半正定値であるか"""
    operators = measurement_operators(theta, weight)
    if not np.allclose(sum(operators), np.eye(4), rtol=0.0, atol=tol):
        return False
    return all(symmetric_eigenvalues(op).min() >= -tol for op in operators)


def _outcome_vectors(theta: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    # 基底の順序は |00>, |01>, |10>, |11>
    cos = np.cos(theta)
    sin = np.sin(theta)
    zero = np.zeros_like(theta)
    psi0 = np.stack([cos, zero, zero, sin], axis=-1)
    psi1 = np.stack([sin, zero, zero, cos], axis=-1)
    return psi0, psi1


def _evaluate(a: float, theta: np.ndarray, weight: np.ndarray) -> dict:
    """グリッド上の各測定の成功確率などを計算（theta, weight は同形状）"""
    rho0 = mixture_density(0, a, photons=2)
    rho1 = mixture_density(1, a, photons=2)
    psi0, psi1 = _outcome_vectors(theta)

    # P(結果 r | ビット c) = weight <psi_r| rho_c |psi_r>
    q00 = weight * np.einsum('...i,ij,...j->...', psi0, rho0, psi0)
    q01 = weight * np.einsum('...i,ij,...j->...', psi0, rho1, psi0)
    q10 = weight * np.einsum('...i,ij,...j->...', psi1, rho0, psi1)
    q11 = weight * np.einsum('...i,ij,...j->...', psi1, rho1, psi1)

    conclusive = 0.5 * (q00 + q01 + q10 + q11)
    correct = 0.5 * (q00 + q11)
    inconclusive = 1 - conclusive

    # 判定不能の場合の最適な推測
    guess = 0.5 * np.maximum(1 - q00 - q10, 1 - q01 - q11)
    with np.errstate(divide='ignore', invalid='ignore'):
        accuracy = np.where(conclusive > 0, correct / conclusive, 0.5)
        inconclusive_accuracy = np.where(inconclusive > 0, guess / inconclusive, 0.5)

    # 判定不能の成分が半正定値となる条件 weight (1 + |sin 2 theta|) <= 1
    feasible = weight * (1 + np.abs(np.sin(2 * theta))) <= 1 + 1e-12

    return {
        'conclusive': conclusive,
        'correct': correct,
        'accuracy': accuracy,
        'inconclusive_accuracy': inconclusive_accuracy,
        'value': correct + inconclusive * a,
        'guess_value': correct + inconclusive / 2,
        'feasible': feasible,
    }


def _check_bound_chain(a: float, result: dict, theta: np.ndarray, weight: np.ndarray):
    """各測定について x <= a および value <= x + (2 - 2x)(a - 1/2) を確認"""
    mask = result['feasible']
    x = result['guess_value'][mask]
    value = result['value'][mask]

    bad = (x > a + BOUND_TOLERANCE) | (value > x + (2 - 2 * x) * (a - 0.5) + BOUND_TOLERANCE)
    if np.any(bad):
        index = int(np.argmax(bad))
        raise OracleViolation(
            'conclusive strategy breaks the guessing bound', a,
            {'theta': float(theta[mask][index]), 'weight': float(weight[mask][index]),
             'x': float(x[index]), 'value': float(value[index])})


def _best_on_grid(a: float, thetas: np.ndarray, weights: np.ndarray) -> Tuple[float, float, float]:
    theta, weight = np.meshgrid(thetas, weights, indexing='ij')
    theta = theta.ravel()
    weight = weight.ravel()

    result = _evaluate(a, theta, weight)
    _check_bound_chain(a, result, theta, weight)

    value = np.where(result['feasible'], result['value'], -np.inf)
    index = int(np.argmax(value))
    return float(theta[index]), float(weight[index]), float(value[index])


def search_conclusive_strategies(a: float, resolution: int = SEARCH_RESOLUTION) -> ConclusiveStrategy:
    """2光子パルスに対する3値測定の族から c gamma + (1 - c) a を最大化する測定を探索

    Args:
      a(float): 状態係数 [0.5, 1]
      resolution(int): 各パラメータの分割数

    Returns:
      ConclusiveStrategy: 見つかった最良の測定

    Notes:
      粗いグリッドで探索した後、最良点の周囲を REFINE_FACTOR 倍細かく1回探索する。
      半正定値とならない点は飛ばす。
    """
    a = check_coefficient(a)
    if resolution < 2:
        raise ValueError('resolution must be at least 2: {}'.format(resolution))

    thetas = np.linspace(-np.pi / 2, np.pi / 2, resolution)
    weights = np.linspace(0.0, 1.0, resolution)
    theta, weight, _ = _best_on_grid(a, thetas, weights)

    # 最良点の周囲を細分化
    d_theta = thetas[1] - thetas[0]
    d_weight = weights[1] - weights[0]
    fine = np.linspace(-1.0, 1.0, 2 * REFINE_FACTOR + 1)
    thetas = theta + d_theta * fine
    weights = np.clip(weight + d_weight * fine, 0.0, 1.0)
    theta, weight, value = _best_on_grid(a, thetas, weights)

    if not check_completeness(theta, weight):
        raise OracleViolation('measurement is not complete', a, {'theta': theta, 'weight': weight})

    result = _evaluate(a, np.array([theta]), np.array([weight]))
    return ConclusiveStrategy(
        a=a,
        theta=theta,
        weight=weight,
        conclusive_prob=float(result['conclusive'][0]),
        conclusive_accuracy=float(result['accuracy'][0]),
        inconclusive_accuracy=float(result['inconclusive_accuracy'][0]),
        combined_value=value)


def unambiguous_strategy(a: float) -> ConclusiveStrategy:
    """誤りのない識別（答えは常に正しい）となる族内の測定

    Args:
      a(float): 状態係数 [0.5, 1]

    Returns:
      ConclusiveStrategy: psi0 が反対のビットの2光子状態と直交する測定
    """
    a = check_coefficient(a)

    # psi0 は |00>,|11> 成分 (1-a, a) に直交
    theta = float(np.arctan2(-(1 - a), a))
    weight = 1 / (1 + abs(np.sin(2 * theta)))

    result = _evaluate(a, np.array([theta]), np.array([weight]))
    return ConclusiveStrategy(
        a=a,
        theta=theta,
        weight=weight,
        conclusive_prob=float(result['conclusive'][0]),
        conclusive_accuracy=float(result['accuracy'][0]),
        inconclusive_accuracy=float(result['inconclusive_accuracy'][0]),
        combined_value=float(result['value'][0]))


def two_photon_gap(a: float, resolution: int = SEARCH_RESOLUTION,
                   strategy: Optional[ConclusiveStrategy] = None) -> float:
    """上界 -2a^2 + 4a - 1 と探索で見つかった最良値との差（strategy を渡した場合は探索しない）"""
    if strategy is None:
        strategy = search_conclusive_strategies(a, resolution)
    return cheat_given_A4(a) - strategy.combined_value


def verify_eq1_bound(a_grid: Iterable[float], resolution: int = SEARCH_RESOLUTION) -> VerificationReport:
    """決定的測定の最良値が a 以上かつ -2a^2 + 4a - 1 以下であることの検証

    Args:
      a_grid(Iterable[float]): 状態係数のグリッド [0.5, 1]
      resolution(int): 各パラメータの分割数

    Returns:
      VerificationReport: 検証結果（上界との差を含む）

    Raises:
      OracleViolation: 上界または下界を外れた a があった場合
    """
    rows = []
    for a in _check_grid(a_grid):
        strategy = search_conclusive_strategies(a, resolution)
        bound = cheat_given_A4(a)
        value = strategy.combined_value

        if value > bound + BOUND_TOLERANCE or value < a - BOUND_TOLERANCE:
            raise OracleViolation(
                'best conclusive strategy outside [a, -2a^2+4a-1]', a, strategy.to_dict())

        reference = unambiguous_strategy(a)
        rows.append({
            'a': a,
            'best_value': value,
            'bound': bound,
            'gap': two_photon_gap(a, strategy=strategy),
            'theta': strategy.theta,
            'weight': strategy.weight,
            'conclusive_prob': strategy.conclusive_prob,
            'conclusive_accuracy': strategy.conclusive_accuracy,
            'unambiguous_value': reference.combined_value,
        })

    table = pd.DataFrame(rows)
    logging.info('決定的測定の上界検証: {}点, 上界との差の最大 {:.3e}'.format(
        len(table), table['gap'].max()))

    return VerificationReport(
        name='conclusive_bound',
        passed=True,
        max_deviation=float(table['gap'].max()),
        table=table)


def enumerate_event_probs(K: int, mu: float) -> EventProbs:
    """光子数配置をすべて列挙して事象 A1-A4 の確率を求める

    Args:
      K(int): パルス数（列挙するため小さい値に限る）
      mu(float): 平均光子数

    Returns:
      EventProbs: 事象確率

    Notes:
      各パルスの光子数は 0, 1, 2, 3以上 の4通りとして 4^K 通りを列挙する。
    """
    if int(K) != K or not 1 <= K <= ENUMERATION_LIMIT:
        raise ValueError('enumeration supports 1 <= K <= {}: {}'.format(ENUMERATION_LIMIT, K))

    probs = [poisson_pmf(mu, i) for i in range(3)]
    probs.append(max(1.0 - sum(probs), 0.0))

    totals = dict.fromkeys(('pA1', 'pA2', 'pA3', 'pA4', 'p_rest'), 0.0)
    for config in itertools.product(range(4), repeat=int(K)):
        weight = float(np.prod([probs[n] for n in config]))
        ones = config.count(1)
        twos = config.count(2)

        if 3 in config or twos > 1:
            key = 'p_rest'
        elif twos == 0:
            key = 'pA1' if ones == 0 else 'pA2'
        else:
            key = 'pA3' if ones == 0 else 'pA4'
        totals[key] += weight

    return EventProbs(**totals)


def verify_event_probs(Ks: Iterable[int], mus: Iterable[float]) -> VerificationReport:
    """閉形式の事象確率と列挙による事象確率の一致の検証

    Args:
      Ks(Iterable[int]): パルス数のリスト
      mus(Iterable[float]): 平均光子数のリスト

    Returns:
      VerificationReport: 検証結果

    Raises:
      OracleViolation: 差が許容誤差以上の点があった場合
    """
    rows = []
    for K in Ks:
        for mu in mus:
            closed = event_probs(K, mu).to_dict()
            brute = enumerate_event_probs(K, mu).to_dict()
            deviation = max(abs(closed[k] - brute[k]) for k in closed)
            if deviation >= EVENT_TOLERANCE:
                raise OracleViolation('event probabilities differ from enumeration', float('nan'),
                                      {'K': K, 'mu': mu, 'closed': closed, 'enumerated': brute})
            rows.append({'K': K, 'mu': mu, 'deviation': deviation})

    table = pd.DataFrame(rows)
    logging.info('事象確率の列挙検証: {}点, 最大偏差 {:.3e}'.format(len(table), table['deviation'].max()))

    return VerificationReport(
        name='event_enumeration',
        passed=True,
        max_deviation=float(table['deviation'].max()),
        table=table)

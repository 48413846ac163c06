"""
公平性条件 (p_A = p_B) の求解と、中断確率を固定したパラメータ探索に関するモジュール
"""

import logging
import numpy as np
import pandas as pd
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from scipy.optimize import bisect
from typing import Dict, List, Optional, Sequence, Tuple, Union

from qcoinflip.analytics import (EventProbs, ProtocolParams, abort_probability, alice_cheat,
                                 bob_cheat_bound, bob_cheat_from_events, classical_bound,
                                 event_probs, honest_abort)
from qcoinflip.channel import ChannelParams, SourceParams

# 既定のパルス数の上限
K_MAX_DEFAULT = 15000

# 平均光子数の探索範囲
MU_RANGE_DEFAULT = (1e-4, 2.0)

# 許容誤差
FAIRNESS_TOLERANCE = 1e-9
ABORT_TOLERANCE = 1e-8

# 二分法の最大反復回数
BISECTION_MAXITER = 200

# 局所探索の範囲 (+-25%) と繰り返し回数の上限
REFINE_WINDOW = 0.25
REFINE_PASSES = 8

# 有利となる限界の通信路長の探索範囲 [km] と許容誤差 [km]
CROSSOVER_RANGE = (0.0, 100.0)
CROSSOVER_XTOL = 0.01

# データセットの列
RECORD_COLUMNS = ['length_km', 'H_target', 'K', 'mu', 'a', 'p_cheat', 'classical', 'advantage']
LIMIT_COLUMNS = ['noise', 'H_target', 'crossover_km', 'error']


class NoFairPoint(ValueError):
    """p_A = p_B となる状態係数が存在しない"""


class TargetUnreachable(ValueError):
    """目標の中断確率が達成可能な範囲外

    Attributes:
      H_target(float): 目標の中断確率
      achievable(Tuple[float, float]): 達成可能な中断確率の範囲
    """

    def __init__(self, H_target: float, achievable: Tuple[float, float]):
        self.H_target = H_target
        self.achievable = achievable
        super().__init__('abort target {} is outside the achievable range [{}, {}]'.format(
            H_target, achievable[0], achievable[1]))


@dataclass(frozen=True)
class FairPoint:
    """公平な動作点

    Attributes:
      params(ProtocolParams): プロトコルのパラメータ
      p_cheat(float): 公平点での不正確率 (= p_A = p_B)
      H(float): 正直な中断確率
      H_target(float): 目標の中断確率
      classical(float): 古典プロトコルの不正確率
      advantage(bool): 古典プロトコルより不正確率が小さい
      length_km(float): 通信路長 [km]
    """
    params: ProtocolParams
    p_cheat: float
    H: float
    H_target: float
    classical: float
    advantage: bool
    length_km: float

    @property
    def fairness_residual(self) -> float:
        """|p_A - p_B| の再計算"""
        return abs(alice_cheat(self.params.a) - bob_cheat_bound(self.params))

    @property
    def margin(self) -> float:
        """古典プロトコルとの差 p_cheat - classical"""
        return self.p_cheat - self.classical

    def to_record(self) -> dict:
        return {
            'length_km': self.length_km,
            'H_target': self.H_target,
            'K': self.params.K,
            'mu': self.params.mu,
            'a': self.params.a,
            'p_cheat': self.p_cheat,
            'classical': self.classical,
            'advantage': self.advantage,
        }


def solve_fair_a_from_events(events: EventProbs) -> float:
    """事象確率について p_A(a) = p_B(a) となる a を二分法で求める

    Args:
      events(EventProbs): 事象確率

    Returns:
      float: 公平な状態係数 a* [0.5, 1]

    Raises:
      NoFairPoint: 2つの曲線が [0.5, 1] で交わらない場合
    """

    def gap(a: float) -> float:
        return alice_cheat(a) - bob_cheat_from_events(events, a)

    low = gap(0.5)
    high = gap(1.0)

    # p_A は減少、p_B は非減少
    if low == 0.0:
        return 0.5
    if high == 0.0:
        return 1.0
    if low < 0.0 or high > 0.0:
        raise NoFairPoint('p_A and p_B do not cross on [0.5, 1]: gap {} at a=0.5, {} at a=1 (pA1={})'.format(
            low, high, events.pA1))

    a = bisect(gap, 0.5, 1.0, xtol=1e-15, maxiter=BISECTION_MAXITER)

    if abs(gap(a)) >= FAIRNESS_TOLERANCE:
        raise NoFairPoint('fairness residual {} exceeds tolerance at a={}'.format(abs(gap(a)), a))

    return float(a)


def solve_fair_a(K: int, mu: Union[float, SourceParams]) -> float:
    """パルス数と平均光子数について公平な状態係数 a* を求める

    Args:
      K(int): パルス数
      mu(float or SourceParams): 平均光子数

    Returns:
      float: 公平な状態係数 a* [0.5, 1]
    """
    return solve_fair_a_from_events(event_probs(K, mu))


def solve_mu_for_abort(K: int, ch: ChannelParams, H_target: float,
                       mu_range: Tuple[float, float] = MU_RANGE_DEFAULT) -> SourceParams:
    """正直な中断確率が目標値となる平均光子数を二分法で求める

    Args:
      K(int): パルス数
      ch(ChannelParams): 実験装置のパラメータ
      H_target(float): 目標の中断確率
      mu_range(Tuple[float, float]): 平均光子数の探索範囲

    Returns:
      SourceParams: 光源のパラメータ

    Raises:
      TargetUnreachable: 目標値が探索範囲で達成できない場合
    """
    mu_min, mu_max = mu_range
    if not 0.0 < mu_min < mu_max:
        raise ValueError('invalid mu range: [{}, {}]'.format(mu_min, mu_max))

    # 中断確率は mu について非増加
    H_low = abort_probability(K, mu_max, ch)
    H_high = abort_probability(K, mu_min, ch)

    # 雑音による下限 e/2
    if H_target <= ch.noise / 2 or not H_low <= H_target <= H_high:
        raise TargetUnreachable(H_target, (H_low, H_high))

    if H_target == H_low:
        return SourceParams(mu_max)
    if H_target == H_high:
        return SourceParams(mu_min)

    mu = bisect(lambda x: abort_probability(K, x, ch) - H_target,
                mu_min, mu_max, xtol=1e-14, maxiter=BISECTION_MAXITER)

    residual = abs(abort_probability(K, mu, ch) - H_target)
    if residual >= ABORT_TOLERANCE:
        raise ArithmeticError('abort residual {} exceeds tolerance at K={}, mu={}'.format(residual, K, mu))

    return SourceParams(float(mu))


def fair_point(K: int, ch: ChannelParams, H_target: float,
               mu_range: Tuple[float, float] = MU_RANGE_DEFAULT) -> FairPoint:
    """パルス数を固定した公平な動作点

    Args:
      K(int): パルス数
      ch(ChannelParams): 実験装置のパラメータ
      H_target(float): 目標の中断確率
      mu_range(Tuple[float, float]): 平均光子数の探索範囲

    Returns:
      FairPoint: 公平な動作点
    """
    source = solve_mu_for_abort(K, ch, H_target, mu_range)
    a = solve_fair_a(K, source)
    params = ProtocolParams(K=int(K), mu=source.mu, a=a)

    p_cheat = alice_cheat(a)
    classical = classical_bound(H_target)

    return FairPoint(
        params=params,
        p_cheat=float(p_cheat),
        H=honest_abort(params, ch),
        H_target=H_target,
        classical=float(classical),
        advantage=bool(p_cheat < classical),
        length_km=ch.length_km,
    )


def k_schedule(K_max: int, ratio: float = 2.0) -> List[int]:
    """1 から K_max までの等比数列状のパルス数（K_max を含む）

    Args:
      K_max(int): パルス数の上限
      ratio(float): 公比 (> 1)

    Returns:
      List[int]: 昇順のパルス数
    """
    if K_max < 1:
        raise ValueError('K_max must be at least 1: {}'.format(K_max))
    if not ratio > 1.0:
        raise ValueError('schedule ratio must exceed 1: {}'.format(ratio))

    schedule = {int(K_max)}
    k = 1.0
    while k < K_max:
        schedule.add(int(round(k)))
        k *= ratio

    return sorted(schedule)


def _refine_window(K: int, K_max: int) -> List[int]:
    step = max(1, K // 50)
    lo = max(1, int(np.floor(K * (1 - REFINE_WINDOW))))
    hi = min(K_max, int(np.ceil(K * (1 + REFINE_WINDOW))))
    return sorted(set(range(lo, hi + 1, step)) | {hi})


def optimize(ch: ChannelParams, H_target: float, K_max: int = K_MAX_DEFAULT, ratio: float = 2.0,
             mu_range: Tuple[float, float] = MU_RANGE_DEFAULT) -> FairPoint:
    """中断確率を固定し、不正確率が最小となる公平な動作点を探索する

    Args:
      ch(ChannelParams): 実験装置のパラメータ
      H_target(float): 目標の中断確率
      K_max(int): パルス数の上限
      ratio(float): パルス数の等比数列の公比
      mu_range(Tuple[float, float]): 平均光子数の探索範囲

    Returns:
      FairPoint: 不正確率が最小の公平な動作点

    Raises:
      TargetUnreachable: 目標値が雑音による下限以下の場合
      NoFairPoint: どのパルス数でも公平な動作点が得られない場合

    Notes:
      等比数列状に K を走査した後、最良の K の周辺 (+-25%, 刻み K/50) を局所探索する。
      最良点が探索範囲の端にある間は局所探索を繰り返す。
    """
    if H_target <= ch.noise / 2:
        raise TargetUnreachable(H_target, (ch.noise / 2, 1.0))

    logging.info('最適化: L={}km, H={}, K_max={}'.format(ch.length_km, H_target, K_max))

    cache: Dict[int, Optional[FairPoint]] = {}

    def evaluate(K: int) -> Optional[FairPoint]:
        if K not in cache:
            try:
                cache[K] = fair_point(K, ch, H_target, mu_range)
            except (NoFairPoint, TargetUnreachable) as e:
                logging.debug('K={} をスキップ: {}'.format(K, e))
                cache[K] = None
        return cache[K]

    def best_of(ks: Sequence[int]) -> Optional[FairPoint]:
        points = [p for p in (evaluate(K) for K in ks) if p is not None]
        if len(points) == 0:
            return None
        return min(points, key=lambda p: (p.p_cheat, p.params.K))

    best = best_of(k_schedule(K_max, ratio))
    if best is None:
        raise NoFairPoint('no pulse count up to {} admits a fair point at H={} (L={}km)'.format(
            K_max, H_target, ch.length_km))

    for _ in range(REFINE_PASSES):
        window = _refine_window(best.params.K, K_max)
        best = best_of(window + [best.params.K])

        K = best.params.K
        on_edge = (K == window[0] and K != 1) or (K == window[-1] and K != K_max)
        if not on_edge:
            break

    logging.info('最適点: K={}, mu={:.6g}, a={:.6g}, p_cheat={:.6g}'.format(
        best.params.K, best.params.mu, best.params.a, best.p_cheat))

    return best


def _optimize_record(args) -> dict:
    ch, H_target, K_max, ratio, mu_range = args
    record = {'length_km': ch.length_km, 'H_target': H_target}
    try:
        point = optimize(ch, H_target, K_max=K_max, ratio=ratio, mu_range=mu_range)
        record.update(point.to_record())
        record['H'] = point.H
        record['error'] = ''
    except (NoFairPoint, TargetUnreachable, ArithmeticError) as e:
        logging.warning('L={}km, H={} をスキップ: {}'.format(ch.length_km, H_target, e))
        record['error'] = '{}: {}'.format(type(e).__name__, e)
    return record


def optimize_grid(ch_base: ChannelParams, lengths: Sequence[float], targets: Sequence[float],
                  K_max: int = K_MAX_DEFAULT, ratio: float = 2.0, workers: int = 1,
                  mu_range: Tuple[float, float] = MU_RANGE_DEFAULT) -> pd.DataFrame:
    """通信路長と目標中断確率の格子上で最適化する

    Args:
      ch_base(ChannelParams): 実験装置のパラメータ（通信路長は上書きされる）
      lengths(Sequence[float]): 通信路長のリスト [km]
      targets(Sequence[float]): 目標の中断確率のリスト
      K_max(int): パルス数の上限
      ratio(float): パルス数の等比数列の公比
      workers(int): 並列プロセス数
      mu_range(Tuple[float, float]): 平均光子数の探索範囲

    Returns:
      pd.DataFrame: 格子点ごとの最適点（失敗した点は error 列に原因を記録）
    """
    if len(lengths) == 0 or len(targets) == 0:
        raise ValueError('sweep grid must not be empty')

    tasks = [(ch_base.with_length(L), float(H), K_max, ratio, mu_range) for L in lengths for H in targets]

    if workers <= 1:
        records = [_optimize_record(task) for task in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            records = list(executor.map(_optimize_record, tasks))

    df = pd.DataFrame(records, columns=RECORD_COLUMNS + ['H', 'error'])
    df['K'] = df['K'].astype('Int64')
    df['advantage'] = df['advantage'].astype('boolean')
    return df


def sweep_figure(figure_id: int, ch_base: ChannelParams, lengths: Sequence[float], targets: Sequence[float],
                 K_max: int = K_MAX_DEFAULT, ratio: float = 2.0, workers: int = 1) -> pd.DataFrame:
    """図のデータセットを作成する

    Args:
      figure_id(int): 1: 平均光子数と中断確率
                      2: 中断確率と不正確率（古典プロトコルの曲線を含む）
                      3: 中断確率と状態係数
      ch_base(ChannelParams): 実験装置のパラメータ
      lengths(Sequence[float]): 通信路長のリスト [km]
      targets(Sequence[float]): 目標の中断確率のリスト
      K_max(int): パルス数の上限
      ratio(float): パルス数の等比数列の公比
      workers(int): 並列プロセス数

    Returns:
      pd.DataFrame: データセット

    Notes:
      図1の平均光子数は格子点ごとに最適化した K における値とする。
    """
    _check_figure(figure_id)
    logging.info('図{}のデータセットを作成します'.format(figure_id))

    df = optimize_grid(ch_base, lengths, targets, K_max=K_max, ratio=ratio, workers=workers)
    return figure_dataset(figure_id, df)


def _check_figure(figure_id: int):
    if figure_id not in (1, 2, 3):
        raise ValueError('figure id must be 1, 2 or 3: {}'.format(figure_id))


def figure_dataset(figure_id: int, grid: pd.DataFrame) -> pd.DataFrame:
    """最適化済みの格子から図のデータセットを切り出す

    Args:
      figure_id(int): 図の番号 (1, 2, 3)
      grid(pd.DataFrame): optimize_grid の出力

    Returns:
      pd.DataFrame: データセット
    """
    _check_figure(figure_id)
    df = grid.copy()

    if figure_id == 1:
        # 通信路長ごとに平均光子数の昇順
        df = df.sort_values(['length_km', 'mu', 'H_target'], kind='mergesort', na_position='last')
    else:
        df = df.sort_values(['length_km', 'H_target'], kind='mergesort')

    if figure_id == 2:
        # 古典プロトコルの曲線はすべての格子点で記録
        df['classical'] = [classical_bound(H) for H in df['H_target']]

    df.insert(0, 'figure', figure_id)
    return df.reset_index(drop=True)


def advantage_region(ch_base: ChannelParams, lengths: Sequence[float], targets: Sequence[float],
                     K_max: int = K_MAX_DEFAULT, workers: int = 1) -> Tuple[pd.DataFrame, Dict[float, Optional[float]]]:
    """古典プロトコルより有利となる (L, H) の領域

    Args:
      ch_base(ChannelParams): 実験装置のパラメータ
      lengths(Sequence[float]): 通信路長のリスト [km]
      targets(Sequence[float]): 目標の中断確率のリスト
      K_max(int): パルス数の上限
      workers(int): 並列プロセス数

    Returns:
      Tuple[pd.DataFrame, Dict[float, Optional[float]]]: 格子点ごとの最適点と、
        目標中断確率ごとの有利となる最大の通信路長（無ければ None）
    """
    df = optimize_grid(ch_base, lengths, targets, K_max=K_max, workers=workers)
    return df, advantage_limits(df)


def advantage_limits(df: pd.DataFrame) -> Dict[float, Optional[float]]:
    """目標中断確率ごとの、古典プロトコルより有利となる最大の通信路長"""
    limits = {}
    for H, group in df.groupby('H_target', sort=True):
        rows = group[group['advantage'].fillna(False).astype(bool)]
        limits[float(H)] = float(rows['length_km'].max()) if len(rows) > 0 else None

    return limits


def check_advantage_monotone(df: pd.DataFrame) -> List[str]:
    """目標中断確率ごとに、一度有利でなくなった通信路長より長い距離で有利にならないことの確認

    Args:
      df(pd.DataFrame): optimize_grid の出力

    Returns:
      List[str]: 違反の内容（違反が無ければ空）
    """
    violations = []
    for H, group in df.groupby('H_target', sort=True):
        lost_at = None
        for _, row in group.sort_values('length_km').iterrows():
            advantage = bool(row['advantage']) if not pd.isna(row['advantage']) else False
            if not advantage and lost_at is None:
                lost_at = row['length_km']
            elif advantage and lost_at is not None:
                violations.append('H={}: advantage at L={}km after losing it at L={}km'.format(
                    H, row['length_km'], lost_at))
    return violations


def check_mu_monotone(df: pd.DataFrame) -> List[str]:
    """図1の曲線（通信路長ごと）で中断確率が平均光子数について非増加であることの確認

    Args:
      df(pd.DataFrame): sweep_figure(1, ...) の出力

    Returns:
      List[str]: 違反の内容（違反が無ければ空）
    """
    violations = []
    for L, group in df.dropna(subset=['mu']).groupby('length_km', sort=True):
        H = group.sort_values('mu')['H_target'].to_numpy()
        increases = np.nonzero(np.diff(H) > 0)[0]
        for i in increases:
            violations.append('L={}km: H increases from {} to {} with mu'.format(L, H[i], H[i + 1]))
    return violations


def _advantage_margin(ch: ChannelParams, H_target: float, K_max: int, ratio: float,
                      mu_range: Tuple[float, float]) -> float:
    try:
        return optimize(ch, H_target, K_max=K_max, ratio=ratio, mu_range=mu_range).margin
    except (NoFairPoint, TargetUnreachable):
        # 公平点が無い距離は有利でない
        return 1.0


def advantage_crossover(ch: ChannelParams, H_target: float, K_max: int = K_MAX_DEFAULT, ratio: float = 2.0,
                        mu_range: Tuple[float, float] = MU_RANGE_DEFAULT,
                        L_range: Tuple[float, float] = CROSSOVER_RANGE,
                        xtol: float = CROSSOVER_XTOL) -> Optional[float]:
    """古典プロトコルより有利でなくなる通信路長を二分法で求める

    Args:
      ch(ChannelParams): 実験装置のパラメータ（通信路長は上書きされる）
      H_target(float): 目標の中断確率
      K_max(int): パルス数の上限
      ratio(float): パルス数の等比数列の公比
      mu_range(Tuple[float, float]): 平均光子数の探索範囲
      L_range(Tuple[float, float]): 通信路長の探索範囲 [km]
      xtol(float): 通信路長の許容誤差 [km]

    Returns:
      float: 限界の通信路長 [km]（探索範囲の下端で有利でなければ None）

    Raises:
      TargetUnreachable: 目標値が雑音による下限以下の場合
      ValueError: 探索範囲の上端でも有利な場合

    Notes:
      各通信路長で最適化した p_cheat - classical の符号が変わる点を求める。
    """
    lo, hi = L_range
    if not 0.0 <= lo < hi:
        raise ValueError('invalid length range: [{}, {}]'.format(lo, hi))
    if H_target <= ch.noise / 2:
        raise TargetUnreachable(H_target, (ch.noise / 2, 1.0))

    def margin(L: float) -> float:
        return _advantage_margin(ch.with_length(L), H_target, K_max, ratio, mu_range)

    if margin(lo) >= 0.0:
        logging.info('H={}, e={}: L={}km で有利でない'.format(H_target, ch.noise, lo))
        return None
    if margin(hi) < 0.0:
        raise ValueError('advantage persists at L={}km for H={}; widen the length range'.format(hi, H_target))

    L = bisect(margin, lo, hi, xtol=xtol, maxiter=BISECTION_MAXITER)
    logging.info('有利となる限界: H={}, e={}, L={:.3f}km'.format(H_target, ch.noise, L))

    return float(L)


def _crossover_record(args) -> dict:
    ch, H_target, K_max, ratio, mu_range = args
    record = {'noise': ch.noise, 'H_target': H_target, 'crossover_km': None, 'error': ''}
    try:
        record['crossover_km'] = advantage_crossover(ch, H_target, K_max=K_max, ratio=ratio, mu_range=mu_range)
    except (ValueError, ArithmeticError) as e:
        logging.warning('e={}, H={} をスキップ: {}'.format(ch.noise, H_target, e))
        record['error'] = '{}: {}'.format(type(e).__name__, e)
    return record


def limit_length_sweep(ch_base: ChannelParams, noises: Sequence[float], targets: Sequence[float],
                       K_max: int = K_MAX_DEFAULT, ratio: float = 2.0, workers: int = 1,
                       mu_range: Tuple[float, float] = MU_RANGE_DEFAULT) -> pd.DataFrame:
    """信号の誤り率ごとに古典プロトコルより有利となる限界の通信路長を求める

    Args:
      ch_base(ChannelParams): 実験装置のパラメータ（誤り率は上書きされる）
      noises(Sequence[float]): 信号の誤り率のリスト
      targets(Sequence[float]): 目標の中断確率のリスト
      K_max(int): パルス数の上限
      ratio(float): パルス数の等比数列の公比
      workers(int): 並列プロセス数
      mu_range(Tuple[float, float]): 平均光子数の探索範囲

    Returns:
      pd.DataFrame: 誤り率と目標中断確率ごとの限界の通信路長（失敗した点は error 列に原因を記録）
    """
    if len(noises) == 0 or len(targets) == 0:
        raise ValueError('sweep grid must not be empty')

    tasks = [(replace(ch_base, noise=float(e)), float(H), K_max, ratio, mu_range)
             for e in noises for H in targets]

    if workers <= 1:
        records = [_crossover_record(task) for task in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            records = list(executor.map(_crossover_record, tasks))

    df = pd.DataFrame(records, columns=LIMIT_COLUMNS)
    df['crossover_km'] = df['crossover_km'].astype(float)
    return df

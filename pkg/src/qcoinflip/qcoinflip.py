# coding=utf-8
import argparse
import io
import json
import logging
import os
import sys
import numpy as np
import pandas as pd
from typing import Any, Dict, List, Optional, Tuple

from qcoinflip.analytics import (ProtocolParams, alice_cheat, bob_cheat_bound, bob_cheat_contributions,
                                 classical_bound, event_cheat_values, event_probs, honest_abort_terms)
from qcoinflip.channel import SourceParams, blank_probability, transmission
from qcoinflip.config import ConfigError, RunConfig, load_params_file, resolve_config
from qcoinflip.optimizer import (NoFairPoint, TargetUnreachable, advantage_crossover, advantage_limits,
                                 check_advantage_monotone, check_mu_monotone, figure_dataset, limit_length_sweep,
                                 optimize, optimize_grid)
from qcoinflip.oracle import (OracleViolation, verify_eq1_bound, verify_event_probs,
                              verify_single_photon_helstrom, verify_two_photon_helstrom)
from qcoinflip.qstate import check_coefficient, coefficient_grid
from qcoinflip.simulator import Verdict, coin_bias, estimate_bob_cheat, estimate_honest_abort, point_seed

# 終了コード
EXIT_OK = 0
EXIT_USAGE = 2
EXIT_UNREACHABLE = 3
EXIT_ACCEPTANCE = 4

# 既定の格子
DEFAULT_LENGTHS = [1.0, 5.0, 10.0, 15.0, 21.0]
DEFAULT_TARGETS = [0.008, 0.01, 0.012, 0.014, 0.016, 0.018, 0.02]

# 再現計算の格子
REPRODUCE_LENGTHS = [1.0, 5.0, 10.0, 15.0, 21.0, 30.0]
REPRODUCE_TARGETS = [0.01, 0.015, 0.02]
MONTE_CARLO_LENGTHS = [1.0, 10.0, 21.0]
MONTE_CARLO_TARGETS = [0.005, 0.01, 0.02]

# 雑音による下限に一致する目標値の代わりに検証する値
NOISE_FLOOR_SUBSTITUTE = 0.006

# Bob の不正確率を抽出で検証する点 (K, mu, a) と試行回数
BOB_CHEAT_POINTS = [(5, 0.3, 0.85), (20, 0.1, 0.9), (50, 0.05, 0.92)]
BOB_CHEAT_RUNS = 20000

# 有利となる限界の通信路長を求める目標値と判定範囲 [km]
CROSSOVER_TARGETS = [0.008, 0.01, 0.015]
CROSSOVER_BOUNDS = (21.0, 30.0)

# 再現計算の出力ディレクトリ
REPRODUCE_DIR = 'qcoinflip_reproduce'


def to_csv(df: pd.DataFrame) -> str:
    """15桁・LF改行の CSV 文字列"""
    out = io.StringIO()
    df.to_csv(out, index=False, float_format='%.15g', lineterminator='\n')
    return out.getvalue()


def _json_default(value: Any) -> Any:
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.bool_):
        return bool(value)
    if value is pd.NA:
        return None
    raise TypeError('not JSON serializable: {!r}'.format(value))


def to_json(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default)


def records(df: pd.DataFrame) -> List[dict]:
    """欠損値を None とした行のリスト"""
    return df.astype(object).where(pd.notna(df), None).to_dict(orient='records')


def write_text(text: str, path: Optional[str]):
    """標準出力またはファイルへの出力"""
    if path is None:
        print(text, end='' if text.endswith('\n') else '\n')
    else:
        logging.info('ファイル保存: {}'.format(path))
        with open(path, mode='w', encoding='utf-8', newline='\n') as f:
            f.write(text)


def emit(config: RunConfig, payload: dict, table: Optional[pd.DataFrame], path: Optional[str]):
    """設定を付けた結果の出力

    Args:
      config(RunConfig): 解決済みの設定
      payload(dict): 構造化出力の内容
      table(pd.DataFrame, Optional): 表形式出力の内容
      path(str, Optional): 出力ファイルパス（None は標準出力）

    Notes:
      表形式をファイルに保存する場合は、設定を同名の .json ファイルに保存する。
      標準出力の場合は先頭の # 行に設定を出力する。
    """
    if config.get('format') == 'tabular' and table is not None:
        if path is None:
            write_text('# config: {}\n'.format(json.dumps(config.to_dict(), sort_keys=True)) + to_csv(table), None)
        else:
            write_text(to_csv(table), path)
            write_text(to_json({'config': config.to_dict()}) + '\n', os.path.splitext(path)[0] + '.json')
    else:
        write_text(to_json(dict(payload, config=config.to_dict())) + '\n', path)


def _protocol_params(config: RunConfig) -> Optional[ProtocolParams]:
    """設定で指定されたプロトコルのパラメータ（未指定なら None）"""
    values = {name: config.get(name) for name in ('K', 'mu', 'a')}
    given = [name for name, value in values.items() if value is not None]
    if len(given) == 0:
        return None
    if len(given) < 3:
        missing = [name for name in values if values[name] is None]
        raise ConfigError('K, mu and a must be given together', field=missing[0])
    checks = (('K', lambda: ProtocolParams(K=values['K'], mu=0.0, a=0.5)),
              ('mu', lambda: SourceParams(values['mu'])),
              ('a', lambda: check_coefficient(values['a'])))
    for name, check in checks:
        try:
            check()
        except ValueError as e:
            raise ConfigError(str(e), field=name) from e

    return ProtocolParams(**values)


def _mu_range(config: RunConfig) -> Tuple[float, float]:
    return config.get('mu_min'), config.get('mu_max')


def analyze(config: RunConfig, show_events: bool = False) -> Tuple[dict, pd.DataFrame]:
    """解析式による中断確率・不正確率の計算

    Args:
      config(RunConfig): 解決済みの設定
      show_events(bool): 事象ごとの不正確率への寄与を出力する

    Returns:
      Tuple[dict, pd.DataFrame]: 構造化出力と表形式出力
    """
    params = _protocol_params(config)
    if params is None:
        raise ConfigError('analyze requires K, mu and a', field='K')

    ch = config.channel
    terms = honest_abort_terms(params, ch)
    events = event_probs(params.K, params.mu)

    H = terms.total
    report = {
        'params': params.to_dict(),
        'transmission': transmission(ch),
        'Z': blank_probability(params.mu, ch),
        'H': H,
        'abort_terms': terms.to_dict(),
        'p_A': alice_cheat(params.a),
        'p_B': bob_cheat_bound(params),
        'classical': classical_bound(H),
        'event_probs': events.to_dict(),
    }

    if show_events:
        values = event_cheat_values(params.a)
        contributions = bob_cheat_contributions(events, params.a)
        report['event_contributions'] = contributions
        table = pd.DataFrame({
            'event': list(values),
            'probability': [events.to_dict()[k] for k in values],
            'cheat_probability': [values[k] for k in values],
            'contribution': [contributions[k] for k in values],
        })
    else:
        row = dict(params.to_dict(), length_km=ch.length_km, H=H, p_A=report['p_A'], p_B=report['p_B'],
                   classical=report['classical'])
        row.update(terms.to_dict())
        row.update(events.to_dict())
        table = pd.DataFrame([row])

    return report, table


def simulate(config: RunConfig) -> Tuple[dict, pd.DataFrame]:
    """正直なプロトコルのモンテカルロ計算

    Args:
      config(RunConfig): 解決済みの設定

    Returns:
      Tuple[dict, pd.DataFrame]: 構造化出力と表形式出力

    Notes:
      K, mu, a が未指定の場合は目標中断確率での最適点を使用する。
    """
    ch = config.channel
    params = _protocol_params(config)
    if params is None:
        params = optimize(ch, config.get('abort_target'), K_max=config.get('k_max'),
                          mu_range=_mu_range(config)).params

    report = estimate_honest_abort(params, ch, runs=config.get('runs'), seed=config.get('seed'),
                                   workers=config.get('workers'))
    terms = honest_abort_terms(params, ch)

    payload = {
        'params': params.to_dict(),
        'simulation': report.to_dict(),
        'analytic': dict(terms.to_dict(), H=terms.total),
        'deviation_in_standard_errors': _deviation(report.abort_rate, terms.total, report.standard_error),
    }

    analytic = {
        Verdict.ABORT_NO_DETECTION: terms.no_detection,
        Verdict.ABORT_DARK_COUNT_CHECK: terms.dark_count_check,
        Verdict.ABORT_NOISE_CHECK: terms.noise_check,
    }
    table = pd.DataFrame([
        {'cause': v.value, 'count': report.counts.get(v.value, 0), 'fraction': report.cause_fraction(v),
         'standard_error': report.cause_standard_error(v), 'analytic': analytic[v]}
        for v in analytic
    ] + [
        {'cause': 'Total', 'count': report.runs - report.completed, 'fraction': report.abort_rate,
         'standard_error': report.standard_error, 'analytic': terms.total}
    ])

    return payload, table


def _deviation(observed: float, expected: float, se: float) -> Optional[float]:
    if se == 0.0:
        return None if observed != expected else 0.0
    return abs(observed - expected) / se


def run_optimize(config: RunConfig) -> Tuple[dict, pd.DataFrame]:
    """目標中断確率での最適な公平点の探索"""
    point = optimize(config.channel, config.get('abort_target'), K_max=config.get('k_max'),
                     mu_range=_mu_range(config))
    payload = dict(point.to_record(), H=point.H, fairness_residual=point.fairness_residual, margin=point.margin)
    return payload, pd.DataFrame([point.to_record()])


def sweep(config: RunConfig) -> Dict[str, pd.DataFrame]:
    """図1-3、または有利となる限界の通信路長のデータセットの作成

    Args:
      config(RunConfig): 解決済みの設定

    Returns:
      Dict[str, pd.DataFrame]: データセット名（figure1 など）ごとのデータセット

    Notes:
      noises を指定した場合は、誤り率ごとの限界の通信路長（limits）のみを作成する。
    """
    targets = config.get('targets') or DEFAULT_TARGETS
    if config.get('noises') is not None:
        limits = limit_length_sweep(config.channel, config.get('noises'), targets, K_max=config.get('k_max'),
                                    workers=config.get('workers'), mu_range=_mu_range(config))
        return {'limits': limits}

    figures = [config.get('figure')] if config.get('figure') is not None else [1, 2, 3]
    grid = optimize_grid(config.channel,
                         config.get('lengths') or DEFAULT_LENGTHS,
                         targets,
                         K_max=config.get('k_max'), workers=config.get('workers'),
                         mu_range=_mu_range(config))
    return {'figure{}'.format(figure_id): figure_dataset(figure_id, grid) for figure_id in figures}


def _emit_datasets(config: RunConfig, datasets: Dict[str, pd.DataFrame], out: Optional[str]):
    structured = config.get('format') == 'structured'
    if out is None:
        if structured:
            write_text(to_json({'config': config.to_dict(),
                                'datasets': {name: records(df) for name, df in datasets.items()}}) + '\n', None)
        else:
            for df in datasets.values():
                emit(config, {}, df, None)
        return

    os.makedirs(out, exist_ok=True)
    for name, df in datasets.items():
        path = os.path.join(out, '{}.{}'.format(name, 'json' if structured else 'csv'))
        emit(config, {'dataset': name, 'rows': records(df)}, df, path)


def verify() -> List[dict]:
    """識別確率・事象確率の検証（違反があれば OracleViolation）"""
    reports = [
        verify_single_photon_helstrom(coefficient_grid(0.01)),
        verify_two_photon_helstrom(coefficient_grid(0.01)),
        verify_eq1_bound(coefficient_grid(0.02)),
        verify_event_probs(range(1, 6), [0.05, 0.2, 1.0]),
    ]
    return [dict(r.to_dict(), rows=records(r.table)) for r in reports]


class Acceptance:
    """再現計算の判定結果の記録"""

    def __init__(self):
        self.checks = []

    def check(self, name: str, passed: bool, expected: str, actual: Any):
        passed = bool(passed)
        if not passed:
            logging.warning('判定失敗 {}: expected {}, actual {}'.format(name, expected, actual))
        self.checks.append({'name': name, 'passed': passed, 'expected': expected, 'actual': actual})

    @property
    def failures(self) -> List[dict]:
        return [c for c in self.checks if not c['passed']]


def _row(grid: pd.DataFrame, L: float, H: float) -> pd.Series:
    return grid[(grid['length_km'] == L) & (grid['H_target'] == H)].iloc[0]


def _flag(value: Any) -> bool:
    return False if pd.isna(value) else bool(value)


def _check_advantage(acc: Acceptance, grid: pd.DataFrame):
    head = _row(grid, 21.0, 0.01)
    acc.check('headline p_cheat at L=21km, H=0.01',
              pd.notna(head['p_cheat']) and 0.89 <= head['p_cheat'] <= 0.925,
              'p_cheat in [0.89, 0.925]', head['p_cheat'])
    acc.check('headline advantage at L=21km, H=0.01', _flag(head['advantage']),
              'advantage against {:.10f}'.format(classical_bound(0.01)), head['advantage'])

    for L in REPRODUCE_LENGTHS:
        for H in REPRODUCE_TARGETS:
            row = _row(grid, L, H)
            has_point = pd.notna(row['p_cheat'])
            name = 'L={}km, H={}'.format(L, H)
            if L > 21.0:
                acc.check('no advantage ' + name, not _flag(row['advantage']),
                          'advantage=false', row['advantage'] if has_point else row['error'])
                continue

            acc.check('fair point ' + name, has_point, 'a fair point', row['error'])
            if not has_point:
                continue

            acc.check('K bound ' + name, row['K'] <= 15000, 'K <= 15000', int(row['K']))
            params = ProtocolParams(K=int(row['K']), mu=float(row['mu']), a=float(row['a']))
            residual = abs(alice_cheat(params.a) - bob_cheat_bound(params))
            acc.check('fairness residual ' + name, residual < 1e-9, '< 1e-9', residual)

            if H < 0.02:
                acc.check('advantage ' + name, _flag(row['advantage']), 'advantage=true', row['advantage'])
            else:
                # 古典プロトコルの 0.9 との境界
                margin = row['p_cheat'] - row['classical']
                acc.check('boundary margin ' + name, 0.0 <= margin < 0.01, '0 <= margin < 0.01', margin)

    violations = check_advantage_monotone(grid)
    acc.check('advantage monotone in length', len(violations) == 0, 'no violations', violations)


def _check_oracles(acc: Acceptance) -> List[dict]:
    try:
        reports = verify()
    except (OracleViolation, ArithmeticError) as e:
        acc.check('discrimination and event oracles', False, 'no violation', '{}: {}'.format(type(e).__name__, e))
        return []

    for r in reports:
        acc.check('oracle ' + r['name'], r['passed'], 'no violation', r['max_deviation'])
    return reports


def _check_simulated_point(acc: Acceptance, config: RunConfig, L: float, H_target: float,
                           seed: int) -> Optional[dict]:
    """1つの格子点で最適点を求め、モンテカルロ計算と解析式を比較する"""
    runs = config.get('runs')
    ch = config.channel.with_length(L)
    name = 'L={}km, H={}'.format(L, H_target)

    try:
        params = optimize(ch, H_target, K_max=config.get('k_max'), mu_range=_mu_range(config)).params
        report = estimate_honest_abort(params, ch, runs=runs, seed=seed, workers=config.get('workers'))
    except (NoFairPoint, TargetUnreachable, ArithmeticError) as e:
        acc.check('simulated point ' + name, False, 'a fair point and a simulation', '{}: {}'.format(
            type(e).__name__, e))
        return None

    terms = honest_abort_terms(params, ch)
    deviation = abs(report.abort_rate - terms.total)
    acc.check('simulated abort ' + name, deviation <= 3 * report.standard_error,
              '|rate - H| <= 3 SE ({:.3g})'.format(3 * report.standard_error), deviation)

    for verdict, h in ((Verdict.ABORT_NO_DETECTION, terms.no_detection),
                       (Verdict.ABORT_DARK_COUNT_CHECK, terms.dark_count_check),
                       (Verdict.ABORT_NOISE_CHECK, terms.noise_check)):
        se = np.sqrt(h * (1 - h) / runs)
        diff = abs(report.cause_fraction(verdict) - h)
        acc.check('{} {}'.format(verdict.value, name), diff <= 4 * se,
                  '|fraction - term| <= 4 SE ({:.3g})'.format(4 * se), diff)

    bias, pvalue = coin_bias(report)
    acc.check('coin uniformity ' + name, pvalue >= 0.001, 'chi-square p >= 0.001', pvalue)

    return dict(length_km=L, H_target=H_target, seed=seed, K=params.K, mu=params.mu, a=params.a,
                H=terms.total, abort_rate=report.abort_rate, standard_error=report.standard_error,
                no_detection=report.cause_fraction(Verdict.ABORT_NO_DETECTION),
                dark_count_check=report.cause_fraction(Verdict.ABORT_DARK_COUNT_CHECK),
                noise_check=report.cause_fraction(Verdict.ABORT_NOISE_CHECK),
                coin_bias=bias, coin_pvalue=pvalue)


def _check_monte_carlo(acc: Acceptance, config: RunConfig) -> pd.DataFrame:
    rows = []
    points = [(L, H) for L in MONTE_CARLO_LENGTHS for H in MONTE_CARLO_TARGETS]
    for index, (L, H_target) in enumerate(points):
        ch = config.channel.with_length(L)
        if H_target <= ch.noise / 2:
            # 雑音による下限は達成できない
            try:
                optimize(ch, H_target, K_max=config.get('k_max'))
                acc.check('noise floor L={}km, H={}'.format(L, H_target), False, 'TargetUnreachable', 'solved')
            except TargetUnreachable:
                acc.check('noise floor L={}km, H={}'.format(L, H_target), True, 'TargetUnreachable',
                          'TargetUnreachable')
            H_target = NOISE_FLOOR_SUBSTITUTE

        # 格子点ごとに独立な乱数列
        row = _check_simulated_point(acc, config, L, H_target, point_seed(config.get('seed'), index))
        if row is not None:
            rows.append(row)

    if len(rows) > 0:
        # 同じ種での再実行
        first = rows[0]
        params = ProtocolParams(K=first['K'], mu=first['mu'], a=first['a'])
        ch = config.channel.with_length(first['length_km'])
        runs = min(config.get('runs'), 1000)
        reports = [to_json(estimate_honest_abort(params, ch, runs=runs, seed=first['seed']).to_dict())
                   for _ in range(2)]
        acc.check('seed determinism', reports[0] == reports[1], 'identical reports',
                  'identical' if reports[0] == reports[1] else 'different')

    return pd.DataFrame(rows)


def _check_bob_cheat(acc: Acceptance, config: RunConfig) -> pd.DataFrame:
    """光子数の抽出による Bob の不正確率と解析的な上界の比較"""
    rows = []
    for index, (K, mu, a) in enumerate(BOB_CHEAT_POINTS):
        params = ProtocolParams(K=K, mu=mu, a=a)
        seed = point_seed(config.get('seed'), len(MONTE_CARLO_LENGTHS) * len(MONTE_CARLO_TARGETS) + index)
        rate, se = estimate_bob_cheat(params, runs=BOB_CHEAT_RUNS, seed=seed)
        bound = bob_cheat_bound(params)

        deviation = abs(rate - bound)
        acc.check('Bob cheat K={}, mu={}, a={}'.format(K, mu, a), deviation <= 4 * se,
                  '|rate - p_B| <= 4 SE ({:.3g})'.format(4 * se), deviation)
        rows.append(dict(K=K, mu=mu, a=a, seed=seed, p_B=bound, rate=rate, standard_error=se))

    return pd.DataFrame(rows)


def _check_crossover(acc: Acceptance, config: RunConfig) -> pd.DataFrame:
    """古典プロトコルより有利となる限界の通信路長"""
    rows = []
    for H in CROSSOVER_TARGETS:
        record = {'H_target': H, 'crossover_km': None, 'error': ''}
        try:
            record['crossover_km'] = advantage_crossover(config.channel, H, K_max=config.get('k_max'),
                                                         mu_range=_mu_range(config))
        except (ValueError, ArithmeticError) as e:
            record['error'] = '{}: {}'.format(type(e).__name__, e)
        rows.append(record)

        if H in REPRODUCE_TARGETS and H < 0.02:
            L = record['crossover_km']
            lo, hi = CROSSOVER_BOUNDS
            acc.check('advantage crossover H={}'.format(H), L is not None and lo < L < hi,
                      '{} < L < {} km'.format(lo, hi), L if L is not None else record['error'])

    df = pd.DataFrame(rows, columns=['H_target', 'crossover_km', 'error'])
    df['crossover_km'] = df['crossover_km'].astype(float)
    return df


def _check_figures(acc: Acceptance, config: RunConfig) -> Dict[int, pd.DataFrame]:
    grid = optimize_grid(config.channel, DEFAULT_LENGTHS, DEFAULT_TARGETS, K_max=config.get('k_max'),
                         workers=config.get('workers'), mu_range=_mu_range(config))
    datasets = {figure_id: figure_dataset(figure_id, grid) for figure_id in (1, 2, 3)}

    violations = check_mu_monotone(datasets[1])
    acc.check('figure 1 abort non-increasing in mu', len(violations) == 0, 'no violations', violations)

    fig2 = datasets[2]
    classical = fig2[fig2['H_target'] == 0.02]['classical']
    acc.check('figure 2 classical at H=0.02', bool(np.all(np.abs(classical - 0.9) < 1e-12)), '0.9',
              classical.tolist())

    inside = fig2[fig2['H_target'] <= 0.015]
    below = inside['advantage'].fillna(False).astype(bool)
    acc.check('figure 2 quantum below classical for H <= 0.015', bool(below.all()), 'all rows',
              inside[~below][['length_km', 'H_target']].to_dict(orient='records'))

    probs = grid[['mu', 'a', 'p_cheat', 'classical', 'H']].dropna().to_numpy(dtype=float)
    in_range = bool(np.all((probs[:, 1:] >= 0.0) & (probs[:, 1:] <= 1.0)))
    acc.check('probabilities in [0, 1]', in_range, 'all within [0, 1]', in_range)

    return datasets


def reproduce(config: RunConfig, out: Optional[str]) -> Tuple[dict, int]:
    """結果の再現と判定

    Args:
      config(RunConfig): 解決済みの設定
      out(str, Optional): 成果物の出力ディレクトリ

    Returns:
      Tuple[dict, int]: 判定結果と終了コード
    """
    out = out or REPRODUCE_DIR
    os.makedirs(out, exist_ok=True)
    acc = Acceptance()

    logging.info('識別確率・事象確率の検証')
    reports = _check_oracles(acc)

    logging.info('有利な領域の探索')
    lengths = config.get('lengths') or REPRODUCE_LENGTHS
    grid = optimize_grid(config.channel, sorted(set(lengths) | set(REPRODUCE_LENGTHS)), REPRODUCE_TARGETS,
                         K_max=config.get('k_max'), workers=config.get('workers'), mu_range=_mu_range(config))
    _check_advantage(acc, grid)

    logging.info('モンテカルロ計算による検証')
    monte_carlo = _check_monte_carlo(acc, config)

    logging.info('Bob の不正確率の抽出による検証')
    bob_cheat = _check_bob_cheat(acc, config)

    logging.info('有利となる限界の通信路長')
    crossover = _check_crossover(acc, config)

    logging.info('図のデータセットの作成')
    datasets = _check_figures(acc, config)

    # 成果物の保存
    sidecar = to_json({'config': config.to_dict()}) + '\n'
    for name, df in [('advantage_region', grid), ('monte_carlo', monte_carlo), ('bob_cheat', bob_cheat),
                     ('advantage_crossover', crossover)] + \
                    [('figure{}'.format(k), df) for k, df in datasets.items()]:
        write_text(to_csv(df), os.path.join(out, name + '.csv'))
        write_text(sidecar, os.path.join(out, name + '.json'))
    write_text(to_json({'config': config.to_dict(), 'reports': reports}) + '\n', os.path.join(out, 'verify.json'))

    summary = {
        'config': config.to_dict(),
        'advantage_limits': {str(k): v for k, v in advantage_limits(grid).items()},
        'advantage_crossover': {str(r['H_target']): r['crossover_km'] for r in records(crossover)},
        'checks': acc.checks,
        'failures': len(acc.failures),
        'passed': len(acc.failures) == 0,
    }
    write_text(to_json(summary) + '\n', os.path.join(out, 'summary.json'))

    for failure in acc.failures:
        print('Failed: {}: expected {}, actual {}'.format(failure['name'], failure['expected'], failure['actual']),
              file=sys.stderr)

    return summary, EXIT_OK if len(acc.failures) == 0 else EXIT_ACCEPTANCE


def _add_common_arguments(parser: argparse.ArgumentParser):
    parser.add_argument("--params-file", dest="params_file", default=None, help="パラメータファイル（JSON）")
    parser.add_argument("--out", default=None, help="保存ファイルパス（sweep, reproduce はディレクトリ）")
    parser.add_argument("--format", choices=["tabular", "structured"], default=None,
                        help="出力形式 表形式=tabular(CSV), 構造化=structured(JSON, デフォルト)")
    parser.add_argument("--log", choices=['DEBUG', 'INFO', 'WARN', 'ERROR', 'CRITICAL'], default='ERROR',
                        help="ログレベルの設定")

    # 実験装置
    parser.add_argument("--length-km", dest="length_km", type=float, default=None, help="通信路長 [km] (デフォルト 0)")
    parser.add_argument("--k-loss", dest="k_loss", type=float, default=None, help="受信器の固定損失 [dB] (デフォルト 1)")
    parser.add_argument("--beta", type=float, default=None, help="吸収係数 [dB/km] (デフォルト 0.2)")
    parser.add_argument("--eta", type=float, default=None, help="検出器の量子効率 (デフォルト 0.2)")
    parser.add_argument("--dark-count", dest="dark_count", type=float, default=None,
                        help="ダークカウント確率 (デフォルト 1e-5)")
    parser.add_argument("--noise", type=float, default=None, help="信号の誤り率 (デフォルト 0.01)")

    # 探索・シミュレーション
    parser.add_argument("--abort-target", dest="abort_target", type=float, default=None,
                        help="目標の中断確率 (デフォルト 0.01)")
    parser.add_argument("--k-max", dest="k_max", type=int, default=None, help="パルス数の上限 (デフォルト 15000)")
    parser.add_argument("--mu-min", dest="mu_min", type=float, default=None, help="平均光子数の下限 (デフォルト 1e-4)")
    parser.add_argument("--mu-max", dest="mu_max", type=float, default=None, help="平均光子数の上限 (デフォルト 2)")
    parser.add_argument("--runs", type=int, default=None, help="モンテカルロの実行回数 (デフォルト 100000)")
    parser.add_argument("--seed", type=int, default=None, help="乱数の種 (デフォルト 0)")
    parser.add_argument("--workers", type=int, default=None, help="並列プロセス数 (デフォルト 1)")


def _add_protocol_arguments(parser: argparse.ArgumentParser):
    parser.add_argument("--K", dest="K", type=int, default=None, help="パルス数")
    parser.add_argument("--mu", type=float, default=None, help="平均光子数")
    parser.add_argument("--a", dest="a", type=float, default=None, help="状態係数 [0.5, 1]")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='qcoinflip', description='弱コヒーレント光による量子コイン投げの解析と検証')
    subparsers = parser.add_subparsers(dest='subcommand', required=True)

    p = subparsers.add_parser('analyze', help='解析式による中断確率・不正確率')
    _add_common_arguments(p)
    _add_protocol_arguments(p)
    p.add_argument("--events", action='store_true', help="事象ごとの不正確率への寄与を出力する")

    p = subparsers.add_parser('simulate', help='正直なプロトコルのモンテカルロ計算')
    _add_common_arguments(p)
    _add_protocol_arguments(p)

    p = subparsers.add_parser('optimize', help='目標中断確率での最適な公平点')
    _add_common_arguments(p)

    p = subparsers.add_parser('sweep', help='図1-3のデータセット')
    _add_common_arguments(p)
    p.add_argument("--figure", type=int, choices=[1, 2, 3], default=None, help="図の番号（省略時はすべて）")
    p.add_argument("--lengths", type=float, nargs='+', default=None, help="通信路長のリスト [km]")
    p.add_argument("--targets", type=float, nargs='+', default=None, help="目標の中断確率のリスト")
    p.add_argument("--noises", type=float, nargs='+', default=None,
                   help="信号の誤り率のリスト（指定時は有利となる限界の通信路長を出力）")

    p = subparsers.add_parser('verify', help='識別確率・事象確率の検証')
    _add_common_arguments(p)

    p = subparsers.add_parser('reproduce', help='結果の再現と判定')
    _add_common_arguments(p)
    p.add_argument("--lengths", type=float, nargs='+', default=None, help="追加する通信路長のリスト [km]")

    return parser


# コマンドライン引数のうち設定に含めない項目
_NON_CONFIG_ARGS = ('subcommand', 'params_file', 'out', 'log', 'events')


def main(argv: Optional[List[str]] = None) -> int:
    # コマンドライン引数の処理
    parser = build_parser()
    args = parser.parse_args(argv)

    # ログレベル設定
    log_level = getattr(logging, args.log.upper(), None)
    logging.basicConfig(level=log_level)

    try:
        file_params = load_params_file(args.params_file) if args.params_file is not None else {}
        flags = {k: v for k, v in vars(args).items() if k not in _NON_CONFIG_ARGS}
        config = resolve_config(args.subcommand, file_params, flags)
        out = args.out if args.out is not None else config.get('out')

        if args.subcommand == 'analyze':
            payload, table = analyze(config, show_events=args.events)
            emit(config, payload, table, out)

        elif args.subcommand == 'simulate':
            payload, table = simulate(config)
            emit(config, payload, table, out)

        elif args.subcommand == 'optimize':
            payload, table = run_optimize(config)
            emit(config, payload, table, out)

        elif args.subcommand == 'sweep':
            _emit_datasets(config, sweep(config), out)

        elif args.subcommand == 'verify':
            reports = verify()
            table = pd.DataFrame([{k: r[k] for k in ('name', 'passed', 'max_deviation')} for r in reports])
            emit(config, {'reports': reports}, table, out)

        elif args.subcommand == 'reproduce':
            summary, code = reproduce(config, out)
            write_text(to_json(summary) + '\n', None)
            logging.info('計算が終了しました')
            return code

        else:
            raise ValueError(args.subcommand)

    except (TargetUnreachable, NoFairPoint) as e:
        print('Error: {}'.format(e), file=sys.stderr)
        return EXIT_UNREACHABLE

    except OracleViolation as e:
        print('Error: {}'.format(e), file=sys.stderr)
        return EXIT_ACCEPTANCE

    except ArithmeticError as e:
        print('Error: {}: {}'.format(type(e).__name__, e), file=sys.stderr)
        return EXIT_ACCEPTANCE

    except ValueError as e:
        print('Error: {}'.format(e), file=sys.stderr)
        return EXIT_USAGE

    logging.info('計算が終了しました')
    return EXIT_OK


if __name__ == '__main__':
    sys.exit(main())

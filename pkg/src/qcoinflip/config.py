"""
実行設定（パラメータファイルとコマンドライン引数）の読み込みに関するモジュール
"""

import json
import logging
from dataclasses import dataclass, field, fields
from typing import Any, Dict, Optional

from qcoinflip.channel import ChannelParams

# サブコマンド
SUBCOMMANDS = ('analyze', 'simulate', 'optimize', 'sweep', 'verify', 'reproduce')

# 出力形式
FORMATS = ('tabular', 'structured')

# 実験装置以外にパラメータファイルで指定できる項目と型
OPTION_TYPES = {
    'abort_target': float,
    'k_max': int,
    'mu_min': float,
    'mu_max': float,
    'runs': int,
    'seed': int,
    'workers': int,
    'K': int,
    'mu': float,
    'a': float,
    'figure': int,
    'lengths': list,
    'targets': list,
    'noises': list,
    'format': str,
    'out': str,
}

# サブコマンドのオプションの既定値
OPTION_DEFAULTS = {
    'abort_target': 0.01,
    'k_max': 15000,
    'mu_min': 1e-4,
    'mu_max': 2.0,
    'runs': 100000,
    'seed': 0,
    'workers': 1,
    'format': 'structured',
}


class ConfigError(ValueError):
    """パラメータファイル・設定値の誤り

    Attributes:
      path(str, Optional): パラメータファイルのパス
      line(int, Optional): 誤りのある行
      field(str, Optional): 誤りのある項目
    """

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None,
                 field: Optional[str] = None):
        self.path = path
        self.line = line
        self.field = field

        where = []
        if path is not None:
            where.append(path)
        if line is not None:
            where.append('line {}'.format(line))
        if field is not None:
            where.append('field "{}"'.format(field))

        super().__init__('{}: {}'.format(', '.join(where), message) if where else message)


@dataclass(frozen=True)
class RunConfig:
    """解決済みの実行設定

    Attributes:
      channel(ChannelParams): 実験装置のパラメータ
      subcommand(str): サブコマンド
      options(Dict[str, Any]): サブコマンドのオプション
    """
    channel: ChannelParams
    subcommand: str
    options: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.subcommand not in SUBCOMMANDS:
            raise ConfigError('unknown subcommand: {}'.format(self.subcommand), field='subcommand')
        fmt = self.options.get('format', 'structured')
        if fmt not in FORMATS:
            raise ConfigError('format must be one of {}: {}'.format(FORMATS, fmt), field='format')

    def get(self, name: str, default: Any = None) -> Any:
        return self.options.get(name, default)

    def to_dict(self) -> dict:
        return {
            'subcommand': self.subcommand,
            'channel': self.channel.to_dict(),
            'options': dict(sorted(self.options.items())),
        }


def _coerce(name: str, value: Any, path: Optional[str] = None) -> Any:
    """パラメータファイルの値を項目の型に変換"""
    if name in {f.name for f in fields(ChannelParams)}:
        expected = float
    else:
        expected = OPTION_TYPES[name]

    if expected is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError('expected a number, got {!r}'.format(value), path=path, field=name)
        return float(value)
    if expected is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError('expected an integer, got {!r}'.format(value), path=path, field=name)
        return value
    if expected is list:
        if not isinstance(value, list) or not all(
                isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
            raise ConfigError('expected a list of numbers, got {!r}'.format(value), path=path, field=name)
        return [float(v) for v in value]
    if not isinstance(value, str):
        raise ConfigError('expected a string, got {!r}'.format(value), path=path, field=name)
    return value


def _flatten(raw: dict, path: Optional[str] = None) -> dict:
    """出力に付けた設定 {config: {subcommand, channel, options}} をフラットな項目に戻す"""
    if isinstance(raw.get('config'), dict):
        raw = raw['config']
    if not any(isinstance(raw.get(k), dict) for k in ('channel', 'options')):
        return raw

    flat = {}
    for name, value in raw.items():
        if name == 'subcommand':
            # サブコマンドはコマンドラインで指定する
            continue
        if name not in ('channel', 'options') or not isinstance(value, dict):
            raise ConfigError('unexpected entry in echoed config', path=path, field=name)
        flat.update(value)
    return flat


def parse_params(text: str, path: Optional[str] = None) -> Dict[str, Any]:
    """パラメータファイル（JSON オブジェクト）の解析

    Args:
      text(str): ファイルの内容
      path(str, Optional): エラーメッセージ用のパス

    Returns:
      Dict[str, Any]: 項目名と値

    Raises:
      ConfigError: JSON として不正、未知の項目がある場合

    Notes:
      フラットな項目のほか、出力に付けた設定（config キー、または channel/options の入れ子）も受け付ける。
    """
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError('invalid JSON: {}'.format(e.msg), path=path, line=e.lineno) from e

    if not isinstance(raw, dict):
        raise ConfigError('parameter file must contain a JSON object', path=path)

    raw = _flatten(raw, path)

    known = {f.name for f in fields(ChannelParams)} | set(OPTION_TYPES)

    params = {}
    for name, value in raw.items():
        if name not in known:
            raise ConfigError('unknown parameter', path=path, line=_line_of(text, name), field=name)
        params[name] = _coerce(name, value, path)

    return params


def _line_of(text: str, name: str) -> Optional[int]:
    """項目名が最初に現れる行番号"""
    key = '"{}"'.format(name)
    for i, line in enumerate(text.splitlines(), start=1):
        if key in line:
            return i
    return None


def load_params_file(path: str) -> Dict[str, Any]:
    """パラメータファイルの読み込み

    Args:
      path(str): パラメータファイルのパス

    Returns:
      Dict[str, Any]: 項目名と値
    """
    logging.info('パラメータファイル読み込み: {}'.format(path))
    try:
        with open(path, encoding='utf-8') as f:
            text = f.read()
    except OSError as e:
        raise ConfigError('cannot read parameter file: {}'.format(e.strerror), path=path) from e

    return parse_params(text, path)


def resolve_config(subcommand: str, file_params: Optional[Dict[str, Any]] = None,
                   flags: Optional[Dict[str, Any]] = None) -> RunConfig:
    """既定値 < パラメータファイル < コマンドライン引数 の優先順位で設定を解決する

    Args:
      subcommand(str): サブコマンド
      file_params(Dict[str, Any], Optional): パラメータファイルの値
      flags(Dict[str, Any], Optional): コマンドライン引数の値（None は未指定）

    Returns:
      RunConfig: 解決済みの設定
    """
    merged = dict(OPTION_DEFAULTS)
    merged.update(file_params or {})
    merged.update({k: v for k, v in (flags or {}).items() if v is not None})

    channel_names = {f.name for f in fields(ChannelParams)}
    channel_values = {k: v for k, v in merged.items() if k in channel_names}
    options = {k: v for k, v in merged.items() if k not in channel_names}

    try:
        channel = ChannelParams(**channel_values)
    except ValueError as e:
        # メッセージの先頭は項目名
        name = str(e).split(' ', 1)[0]
        raise ConfigError(str(e), field=name if name in channel_names else None) from e

    if not 0.0 < options['mu_min'] < options['mu_max']:
        raise ConfigError('require 0 < mu_min < mu_max: [{}, {}]'.format(options['mu_min'], options['mu_max']),
                          field='mu_min')
    if options['runs'] < 1:
        raise ConfigError('runs must be at least 1: {}'.format(options['runs']), field='runs')
    if options['k_max'] < 1:
        raise ConfigError('k_max must be at least 1: {}'.format(options['k_max']), field='k_max')

    return RunConfig(channel=channel, subcommand=subcommand, options=options)

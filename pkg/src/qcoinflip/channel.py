"""
実験装置（光源・光ファイバ・検出器）のモデルに関するモジュール
"""

import numpy as np
from dataclasses import dataclass, fields, replace
from scipy.stats import poisson
from typing import Union

# 光子数分布の打ち切り（シミュレーション用）
PHOTON_TRUNCATION = 50


@dataclass(frozen=True)
class ChannelParams:
    """実験装置のパラメータ

    Attributes:
      k_loss(float): 受信器の固定損失 [dB]
      beta(float): 吸収係数 [dB/km]
      length_km(float): 通信路長 [km]
      eta(float): 検出器の量子効率 [-]
      dark_count(float): スロットあたりのダークカウント確率 [-]
      noise(float): 信号の誤り率 [-]

    Notes:
      既定値は実験パラメータ表の値（通信路長のみ 0 km）
    """
    k_loss: float = 1.0
    beta: float = 0.2
    length_km: float = 0.0
    eta: float = 0.2
    dark_count: float = 1e-5
    noise: float = 0.01

    def __post_init__(self):
        for name in ('k_loss', 'beta', 'length_km'):
            if not getattr(self, name) >= 0:
                raise ValueError('{} must be non-negative: {}'.format(name, getattr(self, name)))
        for name in ('eta', 'dark_count', 'noise'):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError('{} must lie in [0, 1]: {}'.format(name, getattr(self, name)))

    def with_length(self, length_km: float) -> 'ChannelParams':
        """通信路長のみを変更したパラメータ"""
        return replace(self, length_km=float(length_km))

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class SourceParams:
    """減衰レーザー光源のパラメータ

    Attributes:
      mu(float): パルスあたりの平均光子数 [-]
    """
    mu: float

    def __post_init__(self):
        if not self.mu >= 0:
            raise ValueError('mean photon number mu must be non-negative: {}'.format(self.mu))


def _mean_photon_number(mu: Union[float, SourceParams]) -> float:
    if isinstance(mu, SourceParams):
        return mu.mu
    return SourceParams(float(mu)).mu


def transmission(params: ChannelParams) -> float:
    """通信路と受信器の透過率 F = 10^(-(beta L + k)/10)

    Args:
      params(ChannelParams): 実験装置のパラメータ

    Returns:
      float: 透過率 F (0, 1]
    """
    return 10 ** (-(params.beta * params.length_km + params.k_loss) / 10)


def poisson_pmf(mu: Union[float, SourceParams], i: int) -> float:
    """パルス内の光子数がちょうど i 個となる確率 e^-mu mu^i / i!

    Args:
      mu(float or SourceParams): 平均光子数
      i(int): 光子数

    Returns:
      float: 確率
    """
    mu = _mean_photon_number(mu)
    if int(i) != i or i < 0:
        raise ValueError('photon count must be a non-negative integer: {}'.format(i))

    # 空の光源
    if mu == 0.0:
        return 1.0 if i == 0 else 0.0

    return float(poisson.pmf(int(i), mu))


def blank_probability(mu: Union[float, SourceParams], params: ChannelParams) -> float:
    """1パルスについて Bob の検出器に信号が届かない確率 Z

    Args:
      mu(float or SourceParams): 平均光子数
      params(ChannelParams): 実験装置のパラメータ

    Returns:
      float: Z = p0 + (1 - p0)(1 - F eta)  [0, 1]

    Notes:
      空でないパルスは光子数によらず確率 F eta で検出されるものとする。
    """
    p0 = poisson_pmf(mu, 0)
    return p0 + (1 - p0) * (1 - transmission(params) * params.eta)


def sample_photon_numbers(mu: Union[float, SourceParams], size, rng: np.random.Generator) -> np.ndarray:
    """逆関数法によるパルスごとの光子数の抽出

    Args:
      mu(float or SourceParams): 平均光子数
      size(int or tuple): 抽出する個数（配列形状）
      rng(np.random.Generator): 乱数生成器

    Returns:
      np.ndarray: 光子数の配列

    Notes:
      分布は PHOTON_TRUNCATION 個で打ち切る。
    """
    mu = _mean_photon_number(mu)
    counts = np.arange(PHOTON_TRUNCATION + 1)
    if mu == 0.0:
        return np.zeros(size, dtype=int)

    cdf = np.cumsum(poisson.pmf(counts, mu))
    u = rng.random(size)
    return np.minimum(np.searchsorted(cdf, u, side='right'), PHOTON_TRUNCATION)

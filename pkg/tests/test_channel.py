import os
import sys
import numpy as np
import pytest

sys.path.insert(0, os.path.realpath(
    os.path.join(os.path.basename(__file__), '..', 'src')))

from qcoinflip.channel import (ChannelParams, SourceParams, blank_probability, poisson_pmf,
                               sample_photon_numbers, transmission)


def test_transmission():
    """透過率 10^(-(beta L + k)/10) のテスト"""
    assert transmission(ChannelParams()) == pytest.approx(0.7943282347, abs=1e-10)
    assert transmission(ChannelParams(length_km=21)) == pytest.approx(10 ** -0.52, rel=1e-12)
    assert transmission(ChannelParams(k_loss=0.0)) == 1.0


def test_poisson_pmf():
    """ポアソン分布の確率のテスト"""
    assert poisson_pmf(0.5, 2) == pytest.approx(0.0758163325, abs=1e-10)
    assert poisson_pmf(SourceParams(0.1), 0) == pytest.approx(np.exp(-0.1), rel=1e-14)
    assert sum(poisson_pmf(1.3, i) for i in range(40)) == pytest.approx(1.0, abs=1e-14)


def test_poisson_pmf_empty_source():
    """平均光子数 0 の光源は常に空"""
    assert poisson_pmf(0.0, 0) == 1.0
    assert poisson_pmf(0.0, 3) == 0.0


def test_poisson_pmf_invalid():
    with pytest.raises(ValueError):
        poisson_pmf(0.5, -1)
    with pytest.raises(ValueError):
        poisson_pmf(-0.1, 0)


def test_blank_probability():
    """Z = p0 + (1 - p0)(1 - F eta) のテスト"""
    ch = ChannelParams(length_km=10)
    p0 = np.exp(-0.05)
    F = 10 ** (-(0.2 * 10 + 1.0) / 10)
    assert blank_probability(0.05, ch) == pytest.approx(p0 + (1 - p0) * (1 - F * 0.2), rel=1e-14)

    # 空の光源は必ず検出されない
    assert blank_probability(0.0, ch) == 1.0


def test_channel_params_validation():
    """範囲外の装置パラメータはエラー"""
    with pytest.raises(ValueError):
        ChannelParams(eta=1.5)
    with pytest.raises(ValueError):
        ChannelParams(length_km=-1.0)
    with pytest.raises(ValueError):
        ChannelParams(noise=-0.01)


def test_channel_params_with_length():
    """通信路長のみが変わり、元のパラメータは変わらない"""
    ch = ChannelParams()
    ch21 = ch.with_length(21)
    assert ch21.length_km == 21.0
    assert ch.length_km == 0.0
    assert ch21.to_dict()['eta'] == 0.2


def test_sample_photon_numbers():
    """抽出した光子数の平均と分散は mu に近い"""
    rng = np.random.default_rng(3)
    n = sample_photon_numbers(0.4, 200000, rng)
    assert n.mean() == pytest.approx(0.4, abs=0.01)
    assert n.var() == pytest.approx(0.4, abs=0.01)
    assert np.mean(n == 0) == pytest.approx(np.exp(-0.4), abs=0.005)


def test_sample_photon_numbers_empty_source():
    rng = np.random.default_rng(0)
    assert np.all(sample_photon_numbers(0.0, (3, 4), rng) == 0)


@pytest.mark.parametrize('k_loss', [0.0, 1.0, 3.0])
def test_transmission_decreasing_in_length(k_loss):
    """透過率は通信路長について狭義単調減少"""
    lengths = [0.0, 1.0, 5.0, 10.0, 21.0, 30.0, 100.0]
    F = [transmission(ChannelParams(length_km=L, k_loss=k_loss)) for L in lengths]
    assert np.all(np.diff(F) < 0)


@pytest.mark.parametrize('length_km', [0.0, 10.0, 21.0])
def test_transmission_decreasing_in_loss(length_km):
    """透過率は受信器の固定損失について狭義単調減少"""
    losses = [0.0, 0.5, 1.0, 2.0, 5.0]
    F = [transmission(ChannelParams(length_km=length_km, k_loss=k)) for k in losses]
    assert np.all(np.diff(F) < 0)


@pytest.mark.parametrize('length_km', [0.0, 10.0, 21.0, 50.0])
@pytest.mark.parametrize('eta', [0.05, 0.2, 1.0])
def test_blank_probability_decreasing_in_mu(length_km, eta):
    """検出されない確率 Z は平均光子数について狭義単調減少"""
    ch = ChannelParams(length_km=length_km, eta=eta)
    mus = np.linspace(0.001, 2.0, 50)
    Z = [blank_probability(mu, ch) for mu in mus]
    assert np.all(np.diff(Z) < 0)


@pytest.mark.parametrize('mu', [0.0, 1e-4, 0.01, 0.1, 0.5, 1.0, 1.5, 2.0])
def test_poisson_pmf_normalized(mu):
    """光子数 50 までの確率の和は 1"""
    assert abs(sum(poisson_pmf(mu, n) for n in range(51)) - 1.0) < 1e-10

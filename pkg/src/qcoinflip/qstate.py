"""
プロトコルの量子状態（実振幅）と最適識別に関するモジュール
"""

import numpy as np
from typing import List

# Jacobi法の収束判定（非対角成分のフロベニウスノルム）
JACOBI_TOLERANCE = 1e-13

# 密度行列の判定許容誤差
DENSITY_TOLERANCE = 1e-12


def check_coefficient(a: float) -> float:
    """状態係数 a の範囲確認

    Args:
      a(float): 状態係数

    Returns:
      float: 状態係数 a

    Raises:
      ValueError: a が [0.5, 1] の範囲外の場合
    """
    if not 0.5 <= a <= 1.0:
        raise ValueError('state coefficient a must lie in [0.5, 1]: {}'.format(a))
    return float(a)


def _check_bit(name: str, value: int) -> int:
    if value not in (0, 1):
        raise ValueError('{} must be a bit (0 or 1): {}'.format(name, value))
    return int(value)


def state_vector(alpha: int, c: int, a: float) -> np.ndarray:
    """Alice が送るパルスの状態ベクトル |phi_{alpha,c}>

    Args:
      alpha(int): 基底 (0 or 1)
      c(int): Alice が選んだビット (0 or 1)
      a(float): 状態係数 [0.5, 1]

    Returns:
      np.ndarray: 実振幅 (<0|phi>, <1|phi>)
    """
    alpha = _check_bit('alpha', alpha)
    c = _check_bit('c', c)
    a = check_coefficient(a)

    sign = (-1) ** alpha
    if c == 0:
        return np.array([np.sqrt(a), sign * np.sqrt(1 - a)])
    else:
        return np.array([np.sqrt(1 - a), -sign * np.sqrt(a)])


def mixture_density(c: int, a: float, photons: int = 1) -> np.ndarray:
    """基底について平均したビット c の密度行列（Bob から見た状態）

    Args:
      c(int): Alice が選んだビット (0 or 1)
      a(float): 状態係数 [0.5, 1]
      photons(int): パルス内の同一光子数 (1 or 2)

    Returns:
      np.ndarray: 密度行列 (photons=1 のとき 2x2, photons=2 のとき 4x4)
    """
    if photons not in (1, 2):
        raise ValueError('unsupported photon count: {}'.format(photons))

    rho = np.zeros((2 ** photons, 2 ** photons))
    for alpha in (0, 1):
        v = state_vector(alpha, c, a)
        if photons == 2:
            # 2光子パルスはテンソル積 |phi>|phi>
            v = np.kron(v, v)
        rho += 0.5 * np.outer(v, v)

    return rho


def is_density_matrix(rho: np.ndarray, tol: float = DENSITY_TOLERANCE) -> bool:
    """対称・トレース1・半正定値であるかの判定

    Args:
      rho(np.ndarray): 判定する行列 (2x2 or 4x4)
      tol(float): 許容誤差

    Returns:
      bool: 密度行列であれば True
    """
    rho = np.asarray(rho, dtype=float)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1] or rho.shape[0] not in (2, 4):
        return False
    if not np.allclose(rho, rho.T, rtol=0.0, atol=tol):
        return False
    if abs(np.trace(rho) - 1.0) > tol:
        return False
    return bool(symmetric_eigenvalues(rho).min() >= -tol)


def symmetric_eigenvalues(m: np.ndarray) -> np.ndarray:
    """実対称行列の固有値（昇順）

    Args:
      m(np.ndarray): 実対称行列

    Returns:
      np.ndarray: 昇順の固有値

    Notes:
      2x2 は解析解、それ以外は巡回 Jacobi 法で計算する。
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError('matrix must be square: shape {}'.format(m.shape))
    if not np.allclose(m, m.T, rtol=0.0, atol=DENSITY_TOLERANCE):
        raise ValueError('matrix must be symmetric')

    if m.shape == (2, 2):
        p, q, r = m[0, 0], m[1, 1], m[0, 1]
        center = (p + q) / 2
        radius = np.hypot((p - q) / 2, r)
        return np.array([center - radius, center + radius])

    return jacobi_eigenvalues(m)


def jacobi_eigenvalues(m: np.ndarray, tol: float = JACOBI_TOLERANCE) -> np.ndarray:
    """巡回 Jacobi 法による実対称行列の固有値

    Args:
      m(np.ndarray): 実対称行列
      tol(float): 非対角成分のフロベニウスノルムの収束判定値（ノルムに対する相対値）

    Returns:
      np.ndarray: 昇順の固有値

    Raises:
      ArithmeticError: 掃引回数の上限までに収束しなかった場合
    """
    # 反復計算の上限回数（掃引回数）
    SWEEP_LIMIT = 100

    a = np.array(m, dtype=float)
    n = a.shape[0]

    # 収束判定は行列のノルム（1 以上）に対する相対値
    scale = max(float(np.sqrt(np.sum(a ** 2))), 1.0)

    for _ in range(SWEEP_LIMIT):
        off = np.sqrt(np.sum((a - np.diag(np.diag(a))) ** 2))
        if off < tol * scale:
            break

        for p in range(n - 1):
            for q in range(p + 1, n):
                if a[p, q] == 0.0:
                    continue

                # a[p, q] を0にする回転
                theta = (a[q, q] - a[p, p]) / (2 * a[p, q])
                if theta == 0.0:
                    t = 1.0
                else:
                    t = np.sign(theta) / (abs(theta) + np.hypot(theta, 1.0))
                cos = 1 / np.sqrt(t ** 2 + 1)
                sin = t * cos

                rot = np.eye(n)
                rot[p, p] = cos
                rot[q, q] = cos
                rot[p, q] = sin
                rot[q, p] = -sin
                a = rot.T @ a @ rot
    else:
        raise ArithmeticError('Jacobi iteration did not converge')

    return np.sort(np.diag(a))


def trace_norm(m: np.ndarray) -> float:
    """対称行列のトレースノルム（固有値の絶対値和）"""
    return float(np.sum(np.abs(symmetric_eigenvalues(m))))


def helstrom_success(rho0: np.ndarray, rho1: np.ndarray) -> float:
    """等確率の2状態を識別する最適測定（Helstrom測定）の成功確率

    Args:
      rho0(np.ndarray): ビット0の密度行列
      rho1(np.ndarray): ビット1の密度行列

    Returns:
      float: 1/2 + ||rho0 - rho1||_1 / 4  [1/2, 1]
    """
    rho0 = np.asarray(rho0, dtype=float)
    rho1 = np.asarray(rho1, dtype=float)
    if rho0.shape != rho1.shape:
        raise ValueError('dimension mismatch: {} vs {}'.format(rho0.shape, rho1.shape))
    for name, rho in (('rho0', rho0), ('rho1', rho1)):
        if not is_density_matrix(rho):
            raise ValueError('{} is not a density matrix'.format(name))

    return 0.5 + 0.25 * trace_norm(rho0 - rho1)


def coefficient_grid(step: float, start: float = 0.5, stop: float = 1.0) -> List[float]:
    """端点を含む a の等間隔グリッド"""
    count = int(round((stop - start) / step)) + 1
    return [float(a) for a in np.linspace(start, stop, count)]

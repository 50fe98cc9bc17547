"""Spatially correlated Rayleigh channels from the one-ring scattering model.

Each user sees a uniform linear array through a ring of scatterers centred on
azimuth ``theta`` with half-width ``spread``.  The per-user covariance is
shared by all subcarriers and slots; realizations are i.i.d. across
``(k, n, t)`` and drawn from counter-keyed generators so any single block can
be regenerated without replaying the others.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

__all__ = [
    "OneRingParams",
    "ChannelBlock",
    "one_ring_covariance",
    "covariance_sqrt",
    "sample_block",
    "default_angles",
    "dump_rows",
]

_QUAD_NODES = 256


def default_angles(users: int) -> tuple[float, ...]:
    """User azimuths spread evenly over ``[-pi/3, pi/3]``."""
    if users == 1:
        return (0.0,)
    return tuple(np.linspace(-np.pi / 3, np.pi / 3, users).tolist())


@dataclass(frozen=True)
class OneRingParams:
    """Array, scattering and link-budget parameters.

    Attributes
    ----------
    angles : tuple of float
        Azimuth of each user in radians; its length is the user count.
    spread : float
        Angular half-width of the scattering ring, radians.
    spacing : float
        Antenna spacing in wavelengths.
    antennas, subcarriers : int
    noise : float
        Noise power per subcarrier (W).
    bandwidth : float
        Bandwidth per subcarrier (Hz).
    path_gain : tuple of float, optional
        Large-scale power gain per user applied on top of the unit-diagonal
        covariance; defaults to 1.
    """

    angles: tuple[float, ...] = (0.0,)
    spread: float = np.deg2rad(10.0)
    spacing: float = 0.5
    antennas: int = 4
    subcarriers: int = 8
    noise: float = 1e-9
    bandwidth: float = 39e3
    path_gain: tuple[float, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "angles", tuple(float(a) for a in self.angles))
        if self.path_gain is not None:
            object.__setattr__(self, "path_gain", tuple(float(g) for g in self.path_gain))
            if len(self.path_gain) != len(self.angles):
                raise ValueError("one path gain per user expected")
        if self.antennas < 1 or self.subcarriers < 1 or not self.angles:
            raise ValueError("need at least one antenna, subcarrier and user")
        if self.noise <= 0 or self.bandwidth <= 0:
            raise ValueError("noise power and bandwidth must be positive")
        if not 0 < self.spread < np.pi:
            raise ValueError("angular spread must lie in (0, pi)")

    @property
    def users(self) -> int:
        return len(self.angles)

    def gain(self, k: int) -> float:
        return 1.0 if self.path_gain is None else self.path_gain[k]


@dataclass(frozen=True)
class ChannelBlock:
    """Channel vectors ``h[k, n]`` of every user and subcarrier at slot ``t``."""

    t: int
    h: np.ndarray = field(repr=False)
    params: OneRingParams

    @property
    def gains(self) -> np.ndarray:
        """``||h_{k,n}||^2`` with shape ``(K, N)``."""
        return np.sum(np.abs(self.h) ** 2, axis=-1)

    def user(self, k: int) -> np.ndarray:
        return self.h[k]


@lru_cache(maxsize=256)
def _covariance(theta: float, spread: float, spacing: float, antennas: int) -> np.ndarray:
    nodes, weights = np.polynomial.legendre.leggauss(_QUAD_NODES)
    alpha = theta + spread * nodes
    lag = np.arange(antennas)
    # mean of exp(j 2 pi s d sin(alpha)) over the ring, per antenna lag d
    phase = np.exp(1j * 2 * np.pi * spacing * np.outer(lag, np.sin(alpha)))
    profile = phase @ weights / 2.0
    a, b = np.meshgrid(lag, lag, indexing="ij")
    diff = a - b
    R = np.where(diff >= 0, profile[np.abs(diff)], np.conj(profile[np.abs(diff)]))
    R = 0.5 * (R + R.conj().T)
    # clip quadrature noise below zero, then restore the unit diagonal
    w, V = np.linalg.eigh(R)
    w = np.clip(w, 0.0, None)
    R = (V * w) @ V.conj().T
    d = np.sqrt(np.real(np.diag(R)))
    R = R / np.outer(d, d)
    R.setflags(write=False)
    return R


def one_ring_covariance(params: OneRingParams, k: int) -> np.ndarray:
    """Covariance of user ``k``: entry ``(a, b)`` averages
    ``exp(j 2 pi spacing (a - b) sin(alpha))`` over ``alpha`` in
    ``[theta_k - spread, theta_k + spread]`` (Gauss-Legendre quadrature)."""
    return _covariance(params.angles[k], params.spread, params.spacing, params.antennas).copy()


@lru_cache(maxsize=256)
def _sqrt(theta, spread, spacing, antennas):
    w, V = np.linalg.eigh(_covariance(theta, spread, spacing, antennas))
    S = (V * np.sqrt(np.clip(w, 0.0, None))) @ V.conj().T
    S.setflags(write=False)
    return S


def covariance_sqrt(params: OneRingParams, k: int) -> np.ndarray:
    return _sqrt(params.angles[k], params.spread, params.spacing, params.antennas)


def _standard_complex(seed: int, t: int, k: int, n: int, size: int) -> np.ndarray:
    key = np.random.SeedSequence([seed, t, k, n])
    gen = np.random.Generator(np.random.Philox(key))
    z = gen.standard_normal(2 * size)
    return (z[:size] + 1j * z[size:]) / np.sqrt(2.0)


def sample_block(seed: int, t: int, params: OneRingParams) -> ChannelBlock:
    """Draw ``h_{k,n}(t) = sqrt(gain_k) R_k^{1/2} g`` with ``g ~ CN(0, I)``.

    The Gaussian vector for ``(k, n, t)`` comes from a Philox generator keyed
    by ``(seed, t, k, n)``, so blocks are bit-reproducible and independent.
    """
    if seed < 0 or t < 0:
        raise ValueError("seed and slot index must be nonnegative")
    K, N, M = params.users, params.subcarriers, params.antennas
    h = np.empty((K, N, M), dtype=complex)
    for k in range(K):
        S = covariance_sqrt(params, k) * np.sqrt(params.gain(k))
        g = np.stack([_standard_complex(seed, t, k, n, M) for n in range(N)])
        h[k] = g @ S.T
    h.setflags(write=False)
    return ChannelBlock(t, h, params)


def dump_rows(block: ChannelBlock):
    """Yield ``(t, k, n, m, real, imag)`` rows for CSV export."""
    K, N, M = block.h.shape
    for k in range(K):
        for n in range(N):
            for m in range(M):
                v = block.h[k, n, m]
                yield block.t, k, n, m, float(v.real), float(v.imag)

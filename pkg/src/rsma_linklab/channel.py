"""One-ring spatially correlated Rayleigh channels for a half-wavelength ULA.

The covariance entry between antennas m and n is the average of the array
phase ``exp(-j*pi*(m-n)*sin(a))`` over departure angles ``a`` uniform on
``[theta - delta, theta + delta]``. Channels are drawn through the
Karhunen-Loeve factor ``U diag(lam)^(1/2)`` of that covariance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import PreconditionError
from .numerics import RngLike, as_generator, hermitian_eigendecomposition, integrate_1d


@dataclass(frozen=True)
class OneRingSpec:
    n_tx: int
    theta: float
    delta: float
    n_users: int

    def __post_init__(self):
        if not 0 < self.delta <= math.pi / 2:
            raise PreconditionError("angular spread must satisfy 0 < delta <= pi/2")
        if not self.n_tx >= self.n_users >= 1:
            raise PreconditionError("need n_tx >= n_users >= 1 (underloaded system)")


@dataclass(frozen=True)
class KLFactor:
    """``factor @ factor^H`` reproduces the covariance; ``rank`` columns."""

    factor: np.ndarray
    rank: int

    @property
    def n_tx(self) -> int:
        return self.factor.shape[0]


def one_ring_entry(lag: int, theta: float, delta: float, tol: float = 1e-9) -> complex:
    """Covariance entry for antenna index difference ``lag`` (= m - n)."""
    if lag == 0:
        return 1.0 + 0.0j
    # substitute a = theta + delta*s so the integral is over s in [-1, 1];
    # this keeps the error bound meaningful for tiny delta
    integrand = lambda s: np.exp(-1j * math.pi * lag * math.sin(theta + delta * s))
    return 0.5 * integrate_1d(integrand, -1.0, 1.0, tol=tol)


@lru_cache(maxsize=64)
def _covariance_cached(n_tx: int, theta: float, delta: float, tol: float) -> np.ndarray:
    first_col = np.array([one_ring_entry(d, theta, delta, tol) for d in range(n_tx)])
    idx = np.arange(n_tx)
    lag = idx[:, None] - idx[None, :]
    r = np.where(lag >= 0, first_col[np.abs(lag)], np.conj(first_col[np.abs(lag)]))
    r.setflags(write=False)
    return r


def covariance_matrix(spec: OneRingSpec, tol: float = 1e-9) -> np.ndarray:
    """Hermitian Toeplitz covariance with unit diagonal (``n_tx x n_tx``)."""
    return _covariance_cached(spec.n_tx, float(spec.theta), float(spec.delta), tol).copy()


def kl_factor(r: np.ndarray, eig_threshold: float = 1e-10) -> KLFactor:
    """Keep eigenpairs with ``lam > eig_threshold * lam_max``."""
    lam, vec = hermitian_eigendecomposition(r)
    if lam[0] < -1e-10:
        raise PreconditionError("covariance is not positive semidefinite")
    keep = lam > eig_threshold * lam[0]
    factor = vec[:, keep] * np.sqrt(lam[keep])
    return KLFactor(factor=factor, rank=int(keep.sum()))


def sample_channel(factor: KLFactor, k_users: int, rng: RngLike, size=()) -> np.ndarray:
    """Draw ``h_k = factor @ w_k`` with ``w_k ~ CN(0, I_r)``.

    All users share the same factor. Returns an array of shape
    ``size + (k_users, n_tx)`` where ``[..., k, :]`` is the channel of user k.
    """
    gen = as_generator(rng)
    size = (size,) if np.isscalar(size) else tuple(size)
    shape = size + (k_users, factor.rank, 2)
    z = gen.standard_normal(shape)
    w = np.sqrt(0.5) * (z[..., 0] + 1j * z[..., 1])
    return w @ factor.factor.T

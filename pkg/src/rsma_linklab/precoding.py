"""Precoder directions and the power-split transmit precoder.

Channels are stored as arrays of shape ``(..., K, Nt)`` where ``h[..., k, :]``
is user k's channel vector and the received signal is ``y_k = h_k^H x + n_k``.
Directions use the same layout: ``p[..., k, :]`` is the unit-norm direction
of private stream k. All functions broadcast over leading batch axes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, DomainError, SingularChannelError
from .numerics import dominant_left_singular_vector

MAX_CONDITION = 1e8
COLLINEAR_TOL = 1e-10


def _unit_rows(h: np.ndarray) -> np.ndarray:
    h = np.asarray(h, dtype=complex)
    norms = np.linalg.norm(h, axis=-1, keepdims=True)
    if np.any(norms == 0):
        raise DegenerateInputError("zero channel vector")
    return h / norms


def normalized_channels(h: np.ndarray) -> np.ndarray:
    """Rows ``h_k / ||h_k||``."""
    return _unit_rows(h)


def inner(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``a^H b`` along the last axis."""
    return np.sum(np.conj(a) * b, axis=-1)


def zf_directions(h: np.ndarray) -> np.ndarray:
    """Unit-norm zero-forcing directions, one per user.

    Columns of ``Hbar (Hbar^H Hbar)^-1`` with ``Hbar = [h_1/|h_1|, ...]``,
    each normalized afterwards.

    Raises:
        SingularChannelError: if ``cond(Hbar) >= 1e8``.
    """
    hbar = _unit_rows(h)
    hmat = np.swapaxes(hbar, -1, -2)  # (..., Nt, K), columns are users
    cond = np.linalg.cond(hmat)
    if np.any(~np.isfinite(cond)) or np.any(cond >= MAX_CONDITION):
        raise SingularChannelError(f"normalized channel matrix is singular (cond={np.max(cond):.3g})")
    gram = np.conj(np.swapaxes(hmat, -1, -2)) @ hmat
    p = hmat @ np.linalg.inv(gram)
    p = np.swapaxes(p, -1, -2)
    return p / np.linalg.norm(p, axis=-1, keepdims=True)


def _two_user_common(hbar: np.ndarray) -> np.ndarray:
    h1, h2 = hbar[..., 0, :], hbar[..., 1, :]
    rho = inner(h1, h2)
    mag = np.abs(rho)
    # align h2 with h1: gains are then equal and both maximal on the span
    phase = np.where(mag > 0, np.conj(rho) / np.where(mag > 0, mag, 1.0), 1.0)
    p = h1 + phase[..., None] * h2
    p = p / np.linalg.norm(p, axis=-1, keepdims=True)
    collinear = mag > 1 - COLLINEAR_TOL
    return np.where(collinear[..., None], h1, p)


def common_direction(h: np.ndarray) -> np.ndarray:
    """Multicast direction for the common stream.

    K=1 gives ``hbar_1``. K=2 uses the closed-form max-min solution
    ``(hbar_1 + e^{-j arg rho} hbar_2) / norm`` with ``rho = hbar_1^H hbar_2``,
    which gives both users the gain ``(1 + |rho|) / 2`` (falls back to
    ``hbar_1`` for collinear channels). K >= 3 uses the dominant left
    singular vector of ``Hbar``.
    """
    hbar = _unit_rows(h)
    k = hbar.shape[-2]
    if k == 1:
        return hbar[..., 0, :]
    if k == 2:
        return _two_user_common(hbar)
    return dominant_left_singular_vector(np.swapaxes(hbar, -1, -2))


def mrt_directions(h: np.ndarray) -> np.ndarray:
    """``p_k = h_k / ||h_k||``."""
    return _unit_rows(h)


@dataclass(frozen=True)
class PrecoderSet:
    """Unit-norm directions plus the common-stream power fraction ``t``.

    ``t`` and ``p_total`` may be arrays that broadcast against the batch
    axes of the directions.
    """

    common_dir: np.ndarray
    private_dirs: np.ndarray
    t: np.ndarray
    p_total: np.ndarray

    @property
    def n_users(self) -> int:
        return self.private_dirs.shape[-2]

    @property
    def common(self) -> np.ndarray:
        scale = np.sqrt(np.asarray(self.p_total) * np.asarray(self.t))
        return scale[..., None] * self.common_dir

    @property
    def private(self) -> np.ndarray:
        scale = np.sqrt(np.asarray(self.p_total) * (1 - np.asarray(self.t)) / self.n_users)
        return scale[..., None, None] * self.private_dirs

    def gains(self, h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Effective gains seen by each user.

        Returns:
            ``g_c`` of shape ``(..., K)`` with ``g_c[k] = h_k^H p_c`` and
            ``g`` of shape ``(..., K, K)`` with ``g[k, j] = h_k^H p_j``.
        """
        h = np.asarray(h, dtype=complex)
        g_c = inner(h, self.common[..., None, :])
        g = np.conj(h) @ np.swapaxes(self.private, -1, -2)
        return g_c, g


def assemble(common_dir, private_dirs, t, p_total) -> PrecoderSet:
    """Build the power-split precoder ``x = sqrt(P t) pc sc + sqrt(P(1-t)/K) sum pk sk``.

    ``t = 0`` switches the common stream off (SDMA).
    """
    t_arr = np.asarray(t, dtype=float)
    if np.any(~np.isfinite(t_arr)) or np.any(t_arr < 0) or np.any(t_arr > 1):
        raise DomainError("power split t must lie in [0, 1]")
    p_arr = np.asarray(p_total, dtype=float)
    if np.any(p_arr <= 0):
        raise DomainError("total power must be positive")
    common_dir = np.asarray(common_dir, dtype=complex)
    private_dirs = np.asarray(private_dirs, dtype=complex)
    for name, v in (("common", common_dir), ("private", private_dirs)):
        if np.any(np.abs(np.linalg.norm(v, axis=-1) - 1) > 1e-10):
            raise DomainError(f"{name} directions must have unit norm")
    return PrecoderSet(common_dir, private_dirs, t_arr, p_arr)

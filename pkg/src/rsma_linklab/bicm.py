"""Bit-interleaved coded modulation kernels.

Conventions:

* LLRs are natural-log ratios ``log P(b=0|y) / P(b=1|y)``; positive means
  bit 0 is more likely. Every de-mapper clips to ``+-LLR_MAX``.
* Symbols are processed along the last axis; leading axes are batch axes.
  A block of ``S`` symbols with ``m`` bits per symbol yields ``S*m`` LLRs,
  symbol-major (the ``m`` label bits of symbol 0 first).
* Constellations use the 3GPP-style Gray labelling: bit 0 sets the sign of
  the real part (0 -> positive), bit 1 the sign of the imaginary part, and
  the remaining bits alternate between the real and imaginary amplitude
  levels, each axis Gray coded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import logsumexp

from .errors import DomainError, PreconditionError

LLR_MAX = 30.0

_ORDERS = {"QPSK": 4, "16QAM": 16, "64QAM": 64, "256QAM": 256}
CONSTELLATION_NAMES = tuple(_ORDERS)


@dataclass(frozen=True, eq=False)
class Constellation:
    """Unit-energy point set; ``points[i]`` carries label ``labels[i]``.

    ``labels[i]`` is the MSB-first binary expansion of ``i``.
    """

    name: str
    points: np.ndarray
    labels: np.ndarray

    @property
    def order(self) -> int:
        return self.points.size

    @property
    def bits_per_symbol(self) -> int:
        return self.labels.shape[1]

    def __repr__(self) -> str:
        return f"Constellation({self.name})"


def _axis_level(bits: np.ndarray) -> np.ndarray:
    """Amplitude on one axis from its Gray-coded bits (first bit = sign)."""
    n = bits.shape[-1]
    level = np.ones(bits.shape[:-1])
    for j in range(n - 1, 0, -1):
        level = 2 ** (n - j) - (1 - 2 * bits[..., j]) * level
    return (1 - 2 * bits[..., 0]) * level


@lru_cache(maxsize=None)
def constellation(name: str) -> Constellation:
    """Built-in Gray-labelled QAM: ``QPSK``, ``16QAM``, ``64QAM`` or ``256QAM``."""
    key = name.upper()
    if key not in _ORDERS:
        raise DomainError(f"unknown constellation {name!r}")
    m = int(math.log2(_ORDERS[key]))
    idx = np.arange(2**m)
    labels = ((idx[:, None] >> np.arange(m - 1, -1, -1)) & 1).astype(np.int8)
    re = _axis_level(labels[:, 0::2])
    im = _axis_level(labels[:, 1::2])
    pts = re + 1j * im
    pts = pts / np.sqrt(np.mean(np.abs(pts) ** 2))
    pts.setflags(write=False)
    labels.setflags(write=False)
    return Constellation(key, pts, labels)


def as_constellation(c) -> Constellation:
    return c if isinstance(c, Constellation) else constellation(str(c))


# ---------------------------------------------------------------------------
# interleaving and mapping


@lru_cache(maxsize=256)
def _permutation(n: int, seed: int) -> np.ndarray:
    gen = np.random.Generator(np.random.Philox(key=np.array([seed, 0x1E5], dtype=np.uint64)))
    perm = gen.permutation(n)
    perm.setflags(write=False)
    return perm


def permutation(n: int, seed: int) -> np.ndarray:
    """The interleaver permutation: output position i takes input ``perm[i]``."""
    return _permutation(int(n), int(seed))


def interleave(bits: np.ndarray, seed: int) -> np.ndarray:
    bits = np.asarray(bits)
    if bits.shape[-1] == 0:
        raise PreconditionError("cannot interleave an empty block")
    return bits[..., permutation(bits.shape[-1], seed)]


def deinterleave(values: np.ndarray, seed: int, length: int | None = None) -> np.ndarray:
    values = np.asarray(values)
    n = values.shape[-1]
    if length is not None and length != n:
        raise DomainError(f"block length {n} does not match interleaver length {length}")
    if n == 0:
        raise PreconditionError("cannot deinterleave an empty block")
    out = np.empty_like(values)
    out[..., permutation(n, seed)] = values
    return out


def map_bits(bits: np.ndarray, c) -> np.ndarray:
    """Map consecutive label-sized bit groups to constellation points."""
    c = as_constellation(c)
    bits = np.asarray(bits)
    m = c.bits_per_symbol
    if bits.shape[-1] % m:
        raise DomainError(f"bit count {bits.shape[-1]} is not a multiple of {m}")
    groups = bits.reshape(bits.shape[:-1] + (-1, m)).astype(np.int64)
    idx = groups @ (1 << np.arange(m - 1, -1, -1))
    return c.points[idx]


def symbol_indices(bits: np.ndarray, c) -> np.ndarray:
    c = as_constellation(c)
    m = c.bits_per_symbol
    groups = np.asarray(bits).reshape(np.shape(bits)[:-1] + (-1, m)).astype(np.int64)
    return groups @ (1 << np.arange(m - 1, -1, -1))


# ---------------------------------------------------------------------------
# de-mapping


def _bit_llrs(metric: np.ndarray, labels: np.ndarray, max_log: bool) -> np.ndarray:
    """LLRs from log-metrics over candidate points.

    ``metric`` has the candidate axis last (size M); ``labels`` is ``(M, m)``.
    """
    reduce_fn = np.max if max_log else logsumexp
    m = labels.shape[1]
    out = np.empty(metric.shape[:-1] + (m,))
    for bit in range(m):
        zero = labels[:, bit] == 0
        num = reduce_fn(metric[..., zero], axis=-1)
        den = reduce_fn(metric[..., ~zero], axis=-1)
        with np.errstate(invalid="ignore"):
            diff = num - den
        # both sides impossible (can only happen with -inf priors): no information
        out[..., bit] = np.where(np.isnan(diff), 0.0, diff)
    return np.clip(out, -LLR_MAX, LLR_MAX)


def _flatten_llrs(llr: np.ndarray) -> np.ndarray:
    return llr.reshape(llr.shape[:-2] + (-1,))


def demap_marginal(y, gain, noise_var, c, max_log: bool = True) -> np.ndarray:
    """Bit LLRs of ``y = gain * x + n`` with ``n ~ CN(0, noise_var)``.

    ``noise_var`` may vary per symbol; this is how other streams are treated
    as Gaussian noise (pass ``noise_var + |g_other|^2``).
    """
    c = as_constellation(c)
    y = np.asarray(y, dtype=complex)
    nv = np.asarray(noise_var, dtype=float)
    if np.any(nv <= 0):
        raise PreconditionError("effective noise variance must be positive")
    g = np.asarray(gain, dtype=complex)
    resid = y[..., None] - g[..., None] * c.points
    metric = -(resid.real**2 + resid.imag**2) / nv[..., None]
    return _flatten_llrs(_bit_llrs(metric, c.labels, max_log))


def joint_metrics(y, gain_common, gain_private, xc, xp, noise_var) -> np.ndarray:
    """``-|y - gc*x - gp*u|^2 / noise_var`` for every ``(x, u)``, shape ``(..., S, Mc, Mp)``.

    Computed once and reusable by later de-mapping passes with new priors.
    """
    xc, xp = as_constellation(xc), as_constellation(xp)
    y = np.asarray(y, dtype=complex)[..., None, None]
    gc = np.asarray(gain_common, dtype=complex)[..., None, None]
    gp = np.asarray(gain_private, dtype=complex)[..., None, None]
    nv = np.asarray(noise_var, dtype=float)[..., None, None]
    resid = y - gc * xc.points[:, None] - gp * xp.points[None, :]
    return -(resid.real**2 + resid.imag**2) / nv


def llrs_from_joint_metrics(metric, xc, xp, target: str, log_prior_common=None, max_log: bool = True):
    """Bit LLRs from a joint distance table, marginalizing the other stream.

    ``log_prior_common`` is ``(..., S, Mc)`` log-probabilities of the common
    symbol (uniform when omitted); the private stream is always uniform.
    Returns a flat LLR block, or ``(common, private)`` for ``target="both"``.
    """
    xc, xp = as_constellation(xc), as_constellation(xp)
    if log_prior_common is not None:
        metric = metric + np.asarray(log_prior_common)[..., :, None]
    out = []
    if target in ("common", "both"):
        # candidate axis = common symbol, nuisance = private symbol
        folded = np.swapaxes(metric, -1, -2)  # (..., S, Mp, Mc)
        out.append(_flatten_llrs(_bit_llrs_nuisance(folded, xc.labels, max_log)))
    if target in ("private", "both"):
        out.append(_flatten_llrs(_bit_llrs_nuisance(metric, xp.labels, max_log)))
    if not out:
        raise PreconditionError(f"unknown target {target!r}")
    return out[0] if len(out) == 1 else tuple(out)


def _bit_llrs_nuisance(metric: np.ndarray, labels: np.ndarray, max_log: bool) -> np.ndarray:
    """Like :func:`_bit_llrs` with a nuisance axis at -2 summed (or maxed) out."""
    reduce_fn = np.max if max_log else logsumexp
    m = labels.shape[1]
    out = np.empty(metric.shape[:-2] + (m,))
    for bit in range(m):
        zero = labels[:, bit] == 0
        num = reduce_fn(metric[..., zero], axis=(-2, -1))
        den = reduce_fn(metric[..., ~zero], axis=(-2, -1))
        with np.errstate(invalid="ignore"):
            diff = num - den
        out[..., bit] = np.where(np.isnan(diff), 0.0, diff)
    return np.clip(out, -LLR_MAX, LLR_MAX)


def _log_priors(priors, mc: int) -> np.ndarray:
    p = np.asarray(priors, dtype=float)
    if p.shape[-1] != mc:
        raise DomainError(f"prior must have {mc} entries per symbol")
    if np.any(p < 0) or np.any(np.abs(p.sum(axis=-1) - 1) > 1e-9):
        raise DomainError("priors must be non-negative and sum to 1 per symbol")
    with np.errstate(divide="ignore"):
        return np.log(p)


def demap_joint(
    y,
    gains,
    cs,
    noise_var,
    priors=None,
    target: str = "private",
    max_log: bool = True,
):
    """Joint MAP de-mapping of ``y = gc*x + gp*u + n`` over ``xc x xp``.

    Args:
        gains: ``(gc, gp)``, each broadcastable to ``y``.
        cs: ``(xc, xp)`` constellations.
        priors: per-symbol probabilities over ``xc`` (shape ``(..., S, Mc)``);
            uniform when ``None``.
        target: ``"common"``, ``"private"`` or ``"both"``.

    Raises:
        DomainError: for malformed priors.
    """
    xc, xp = as_constellation(cs[0]), as_constellation(cs[1])
    log_prior = None if priors is None else _log_priors(priors, xc.order)
    metric = joint_metrics(y, gains[0], gains[1], xc, xp, noise_var)
    return llrs_from_joint_metrics(metric, xc, xp, target, log_prior, max_log)


def demap_with_interference(y, gain, c, interference, noise_var, max_log: bool = True):
    """De-map the desired stream against any number of finite-alphabet interferers.

    ``interference`` is a sequence of ``(gain, constellation)`` pairs with
    uniform priors; their superposition is folded into one nuisance axis.
    """
    c = as_constellation(c)
    y = np.asarray(y, dtype=complex)
    interf = np.zeros(y.shape + (1,), dtype=complex)
    for g, ci in interference:
        ci = as_constellation(ci)
        g = np.asarray(g, dtype=complex)[..., None, None]
        interf = (interf[..., :, None] + g * ci.points).reshape(y.shape + (-1,))
    nv = np.asarray(noise_var, dtype=float)[..., None, None]
    gd = np.asarray(gain, dtype=complex)[..., None, None]
    resid = y[..., None, None] - gd * c.points[None, :] - interf[..., :, None]
    metric = -(resid.real**2 + resid.imag**2) / nv
    return _flatten_llrs(_bit_llrs_nuisance(metric, c.labels, max_log))


# ---------------------------------------------------------------------------
# soft symbols


def symbol_log_probs(llrs, c) -> np.ndarray:
    """Per-symbol log-probabilities over ``c`` from independent bit LLRs, ``(..., S, M)``."""
    c = as_constellation(c)
    llrs = np.asarray(llrs, dtype=float)
    m = c.bits_per_symbol
    if llrs.shape[-1] % m:
        raise DomainError(f"LLR count {llrs.shape[-1]} is not a multiple of {m}")
    lam = llrs.reshape(llrs.shape[:-1] + (-1, m))
    # log P(b=0) = -log(1+e^-L), log P(b=1) = -log(1+e^L)
    lp0 = -np.logaddexp(0.0, -lam)
    lp1 = -np.logaddexp(0.0, lam)
    lab = c.labels.T.astype(bool)  # (m, M)
    return np.einsum("...k,kM->...M", lp0, ~lab) + np.einsum("...k,kM->...M", lp1, lab)


@dataclass(frozen=True)
class SoftSymbolStats:
    mean: np.ndarray
    variance: np.ndarray


def soft_symbols(llrs, c) -> SoftSymbolStats:
    """Posterior mean and variance of each symbol given bit LLRs."""
    c = as_constellation(c)
    lp = symbol_log_probs(llrs, c)
    p = np.exp(lp - logsumexp(lp, axis=-1, keepdims=True))
    mean = p @ c.points
    var = p @ (np.abs(c.points) ** 2) - np.abs(mean) ** 2
    return SoftSymbolStats(mean=mean, variance=np.maximum(var, 0.0))

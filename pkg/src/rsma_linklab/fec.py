"""Polar codes: Bhattacharyya construction, encoding, rate matching and
belief-propagation decoding with soft coded-bit output.

The generator is ``F^{(x)n}`` with ``F = [[1, 0], [1, 1]]`` in natural
(non bit-reversed) order, i.e. ``x = u F^{(x)n}``; for ``N = 2`` that is
``(u0 ^ u1, u1)``. Codes whose transmit length is not a power of two are
derived from the next power-of-two mother code by shortening (the last
coded bits are known zeros) or puncturing (the first coded bits are not
sent).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .bicm import LLR_MAX
from .errors import DomainError

DEFAULT_DESIGN_SNR_DB = 2.0
DEFAULT_MAX_ITERS = 60
DEFAULT_MINSUM_SCALE = 0.9375


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def bhattacharyya_log(mother_length: int, design_snr_db: float) -> np.ndarray:
    """Natural log of the Bhattacharyya parameter of every synthetic channel.

    BPSK over AWGN at ``Es/N0 = design_snr_db`` gives ``z = exp(-Es/N0)``;
    the recursion ``z- = 2z - z^2``, ``z+ = z^2`` is run in the log domain
    so tiny parameters do not underflow.
    """
    n = int(math.log2(mother_length))
    lz = np.array([-(10 ** (design_snr_db / 10))])
    for _ in range(n):
        bad = lz + np.log(2 - np.exp(lz))
        good = 2 * lz
        lz = np.concatenate([bad, good])
    return lz


def construct(mother_length: int, k_info: int, design_snr_db: float = DEFAULT_DESIGN_SNR_DB,
              forced_frozen=()) -> np.ndarray:
    """Sorted frozen index set: the ``N - k_info`` least reliable channels.

    ``forced_frozen`` indices (required by rate matching) are frozen first and
    the remainder is filled by reliability.
    """
    if not _is_pow2(mother_length):
        raise DomainError("mother length must be a power of two")
    if not 0 <= k_info <= mother_length:
        raise DomainError("need 0 <= k_info <= mother length")
    forced = np.asarray(sorted(set(int(i) for i in forced_frozen)), dtype=np.int64)
    if forced.size > mother_length - k_info:
        raise DomainError("rate matching leaves fewer than k_info usable positions")
    lz = bhattacharyya_log(mother_length, design_snr_db)
    lz[forced] = np.inf
    # least reliable first; stable sort makes ties deterministic (lower index first)
    order = np.argsort(-lz, kind="stable")
    return np.sort(order[: mother_length - k_info])


@dataclass(frozen=True, eq=False)
class PolarCodeSpec:
    """A (possibly rate-matched) polar code."""

    mother_length: int
    info_length: int
    frozen_set: np.ndarray
    transmit_length: int
    scheme: str = "shorten"
    design_snr_db: float = DEFAULT_DESIGN_SNR_DB
    frozen_mask: np.ndarray = field(init=False, repr=False)
    info_positions: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        n = self.mother_length
        if not _is_pow2(n):
            raise DomainError("mother length must be a power of two")
        if self.scheme not in ("shorten", "puncture"):
            raise DomainError(f"unknown rate-matching scheme {self.scheme!r}")
        if not 0 < self.transmit_length <= n:
            raise DomainError("transmit length must be in (0, mother length]")
        if not 0 < self.info_length < self.transmit_length:
            raise DomainError("realized rate must lie in (0, 1)")
        mask = np.zeros(n, dtype=bool)
        mask[np.asarray(self.frozen_set, dtype=np.int64)] = True
        if mask.sum() != n - self.info_length:
            raise DomainError("frozen set size must be N - k_info")
        mask.setflags(write=False)
        info = np.flatnonzero(~mask)
        info.setflags(write=False)
        object.__setattr__(self, "frozen_mask", mask)
        object.__setattr__(self, "info_positions", info)

    @classmethod
    def build(cls, transmit_length: int, info_length: int, design_snr_db: float = DEFAULT_DESIGN_SNR_DB,
              scheme: str = "shorten") -> "PolarCodeSpec":
        """Code of the given transmit length, rate-matched from the next power of two."""
        n = 1 << max(1, math.ceil(math.log2(transmit_length)))
        removed = n - transmit_length
        if scheme == "shorten":
            forced = range(transmit_length, n)
        elif scheme == "puncture":
            forced = range(removed)
        else:
            raise DomainError(f"unknown rate-matching scheme {scheme!r}")
        if not 0 < info_length < transmit_length:
            raise DomainError("realized rate must lie in (0, 1)")
        frozen = construct(n, info_length, design_snr_db, forced)
        return cls(n, info_length, frozen, transmit_length, scheme, design_snr_db)

    @classmethod
    def for_rate(cls, transmit_length: int, rate: float, **kw) -> "PolarCodeSpec":
        return cls.build(transmit_length, int(round(rate * transmit_length)), **kw)

    @property
    def rate(self) -> float:
        return self.info_length / self.transmit_length

    @property
    def n_stages(self) -> int:
        return int(math.log2(self.mother_length))

    @property
    def removed(self) -> int:
        return self.mother_length - self.transmit_length


def polar_transform(u: np.ndarray) -> np.ndarray:
    """``u F^{(x)n}`` over GF(2) along the last axis."""
    x = np.array(u, dtype=np.uint8, copy=True)
    n = x.shape[-1]
    lead = x.shape[:-1]
    step = 1
    while step < n:
        v = x.reshape(lead + (n // (2 * step), 2, step))
        v[..., 0, :] ^= v[..., 1, :]
        step *= 2
    return x


def encode(spec: PolarCodeSpec, info_bits) -> np.ndarray:
    """Encode ``(..., k_info)`` info bits into ``(..., transmit_length)`` code bits."""
    info_bits = np.asarray(info_bits, dtype=np.uint8)
    if info_bits.shape[-1] != spec.info_length:
        raise DomainError(f"expected {spec.info_length} info bits, got {info_bits.shape[-1]}")
    u = np.zeros(info_bits.shape[:-1] + (spec.mother_length,), dtype=np.uint8)
    u[..., spec.info_positions] = info_bits
    x = polar_transform(u)
    if spec.scheme == "shorten":
        return x[..., : spec.transmit_length]
    return x[..., spec.removed :]


def _to_mother(spec: PolarCodeSpec, llrs: np.ndarray, clip: float) -> np.ndarray:
    lead = llrs.shape[:-1]
    full = np.zeros(lead + (spec.mother_length,))
    if spec.scheme == "shorten":
        full[..., : spec.transmit_length] = llrs
        full[..., spec.transmit_length :] = clip  # known zeros
    else:
        full[..., spec.removed :] = llrs  # punctured bits stay at 0
    return full


def _from_mother(spec: PolarCodeSpec, full: np.ndarray) -> np.ndarray:
    if spec.scheme == "shorten":
        return full[..., : spec.transmit_length]
    return full[..., spec.removed :]


@numba.njit(cache=True, inline="always")
def _boxplus_minsum(a, b):
    s = 1.0 if (a >= 0) == (b >= 0) else -1.0
    return s * min(abs(a), abs(b))


@numba.njit(cache=True, inline="always")
def _boxplus_exact(a, b):
    s = 1.0 if (a >= 0) == (b >= 0) else -1.0
    return s * min(abs(a), abs(b)) + math.log1p(math.exp(-abs(a + b))) - math.log1p(math.exp(-abs(a - b)))


@numba.njit(cache=True, inline="always")
def _bp(a, b, exact, alpha):
    if exact:
        return _boxplus_exact(a, b)
    return alpha * _boxplus_minsum(a, b)


@numba.njit(cache=True)
def _clipf(v, lim):
    if v > lim:
        return lim
    if v < -lim:
        return -lim
    return v


@numba.njit(cache=True)
def _bp_decode_kernel(ch, frozen, n, max_iters, lim, exact, alpha, early_exit, out_u, out_x, out_iters):
    n_blocks, N = ch.shape
    # column 0 is the u side, column n the x side; the butterflies between
    # columns s and s+1 pair indices N/2^(s+1) apart (the encoder's last stage
    # sits next to u). This ordering matters for BP, not for encoding.
    L = np.zeros((n + 1, N))
    R = np.zeros((n + 1, N))
    uh = np.zeros(N, dtype=np.uint8)
    for blk in range(n_blocks):
        L[:, :] = 0.0
        R[:, :] = 0.0
        for i in range(N):
            L[n, i] = ch[blk, i]
            R[0, i] = lim if frozen[i] else 0.0
        used = max_iters
        for it in range(max_iters):
            # right-to-left: update L at column s from column s+1
            for s in range(n - 1, -1, -1):
                step = 1 << (n - 1 - s)
                for j in range(0, N, 2 * step):
                    for i in range(j, j + step):
                        k = i + step
                        lc = L[s + 1, i]
                        ld = L[s + 1, k]
                        L[s, i] = _clipf(_bp(lc, ld + R[s, k], exact, alpha), lim)
                        L[s, k] = _clipf(_bp(lc, R[s, i], exact, alpha) + ld, lim)
            # left-to-right: update R at column s+1 from column s
            for s in range(n):
                step = 1 << (n - 1 - s)
                for j in range(0, N, 2 * step):
                    for i in range(j, j + step):
                        k = i + step
                        ra = R[s, i]
                        rb = R[s, k]
                        R[s + 1, i] = _clipf(_bp(ra, L[s + 1, k] + rb, exact, alpha), lim)
                        R[s + 1, k] = _clipf(_bp(ra, L[s + 1, i], exact, alpha) + rb, lim)
            if not early_exit:
                continue
            # stop once hard decisions on u re-encode to the hard decisions on x
            for i in range(N):
                uh[i] = 0 if (frozen[i] or L[0, i] + R[0, i] >= 0.0) else 1
            step = 1
            while step < N:
                for j in range(0, N, 2 * step):
                    for i in range(j, j + step):
                        uh[i] ^= uh[i + step]
                step *= 2
            ok = True
            for i in range(N):
                xb = 0 if L[n, i] + R[n, i] >= 0.0 else 1
                if xb != uh[i]:
                    ok = False
                    break
            if ok:
                used = it + 1
                break
        for i in range(N):
            out_u[blk, i] = _clipf(L[0, i] + R[0, i], lim)
            out_x[blk, i] = _clipf(L[n, i] + R[n, i], lim)
        out_iters[blk] = used


@dataclass(frozen=True)
class BpResult:
    """Decoder output for a batch of codewords.

    ``info_llrs`` and ``hard_info`` cover the information positions;
    ``coded_llrs`` are posterior (channel + extrinsic) LLRs of the
    transmitted code bits.
    """

    info_llrs: np.ndarray
    coded_llrs: np.ndarray
    hard_info: np.ndarray
    iterations: np.ndarray


def bp_decode(spec: PolarCodeSpec, channel_llrs, max_iters: int = DEFAULT_MAX_ITERS,
              clip: float = LLR_MAX, exact: bool = False, early_exit: bool = True,
              alpha: float = DEFAULT_MINSUM_SCALE) -> BpResult:
    """Belief-propagation decoding on the polar factor graph.

    One iteration is a full right-to-left sweep followed by a full
    left-to-right sweep. Decoding stops early for a block once the hard
    decisions on ``u`` re-encode to the hard decisions on ``x``. Frozen bits
    always decode to 0 and a zero LLR decodes to 0.

    Args:
        channel_llrs: ``(..., transmit_length)`` channel LLRs.
        exact: use the exact box-plus rule instead of scaled min-sum.
        alpha: min-sum scaling factor (ignored when ``exact``).
        early_exit: enable the re-encoding stopping rule.
    """
    llrs = np.asarray(channel_llrs, dtype=float)
    if llrs.shape[-1] != spec.transmit_length:
        raise DomainError(f"expected {spec.transmit_length} LLRs, got {llrs.shape[-1]}")
    lead = llrs.shape[:-1]
    full = _to_mother(spec, np.clip(llrs, -clip, clip), clip).reshape(-1, spec.mother_length)
    full = np.ascontiguousarray(full)
    n_blocks = full.shape[0]
    out_u = np.empty_like(full)
    out_x = np.empty_like(full)
    iters = np.empty(n_blocks, dtype=np.int64)
    _bp_decode_kernel(full, spec.frozen_mask, spec.n_stages, int(max_iters), float(clip), bool(exact),
                      float(alpha), bool(early_exit), out_u, out_x, iters)
    out_u = out_u.reshape(lead + (spec.mother_length,))
    out_x = out_x.reshape(lead + (spec.mother_length,))
    info_llrs = out_u[..., spec.info_positions]
    return BpResult(
        info_llrs=info_llrs,
        coded_llrs=_from_mother(spec, out_x),
        hard_info=(info_llrs < 0).astype(np.uint8),
        iterations=iters.reshape(lead),
    )

"""Receiver pipelines for one user of a 1-layer rate-splitting downlink.

Every pipeline sees, per symbol, ``y = gc*sc + gp*sp + sum_j gj*sj + n`` with
``n ~ CN(0, noise_var)``: the common stream, the desired private stream and
the residual private-stream interference (zero under zero forcing). All
arrays carry a leading block axis, so one call processes ``(B, S)`` symbols.

SIC-type pipelines (hard CWIC, soft CWIC 1, soft CWIC 2) feed common-decoder
output into private de-mapping. Non-SIC pipelines (joint de-mapper, soft
SLIC) build the private LLRs from de-mapper products only.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import bicm, fec
from .bicm import Constellation
from .errors import DomainError


class ReceiverKind(enum.Enum):
    HARD_CWIC = "hard-cwic"
    SOFT_CWIC1 = "soft-cwic1"
    SOFT_CWIC2 = "soft-cwic2"
    JOINT_DEMAPPER = "joint-demapper"
    SOFT_SLIC = "soft-slic"
    SDMA_SINGLE_USER = "sdma-single-user"
    SDMA_JOINT = "sdma-joint"

    @property
    def is_sic(self) -> bool:
        return self in _SIC

    @property
    def is_rsma(self) -> bool:
        return self not in (ReceiverKind.SDMA_SINGLE_USER, ReceiverKind.SDMA_JOINT)

    @classmethod
    def parse(cls, value) -> "ReceiverKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "-")
        for kind in cls:
            if key in (kind.value, kind.name.lower().replace("_", "-")):
                return kind
        raise DomainError(f"unknown receiver kind {value!r}")


_SIC = frozenset({ReceiverKind.HARD_CWIC, ReceiverKind.SOFT_CWIC1, ReceiverKind.SOFT_CWIC2})


@dataclass(frozen=True, eq=False)
class StreamCodec:
    """FEC, interleaver and mapper of one stream (the BICM chain)."""

    code: fec.PolarCodeSpec
    constellation: Constellation
    interleaver_seed: int

    def __post_init__(self):
        m = self.constellation.bits_per_symbol
        if self.code.transmit_length % m:
            raise DomainError("coded length must be a multiple of the bits per symbol")

    @classmethod
    def build(cls, n_symbols: int, rate: float, constellation, interleaver_seed: int,
              design_snr_db: float = fec.DEFAULT_DESIGN_SNR_DB) -> "StreamCodec":
        c = bicm.as_constellation(constellation)
        code = fec.PolarCodeSpec.for_rate(n_symbols * c.bits_per_symbol, rate, design_snr_db=design_snr_db)
        return cls(code, c, interleaver_seed)

    @property
    def n_symbols(self) -> int:
        return self.code.transmit_length // self.constellation.bits_per_symbol

    @property
    def info_length(self) -> int:
        return self.code.info_length

    def coded_bits(self, info_bits) -> np.ndarray:
        """Encoded then interleaved bits, in transmission order."""
        return bicm.interleave(fec.encode(self.code, info_bits), self.interleaver_seed)

    def modulate(self, info_bits) -> np.ndarray:
        return bicm.map_bits(self.coded_bits(info_bits), self.constellation)

    def remodulate(self, hard_info) -> np.ndarray:
        """Re-encode, re-interleave and re-map decoded information bits."""
        return self.modulate(hard_info)

    def decode(self, llrs, **decoder) -> fec.BpResult:
        """De-interleave de-mapper LLRs and run the decoder."""
        return fec.bp_decode(self.code, bicm.deinterleave(llrs, self.interleaver_seed), **decoder)

    def posterior_llrs(self, result: fec.BpResult) -> np.ndarray:
        """Decoder coded-bit posteriors, back in transmission order."""
        return bicm.interleave(result.coded_llrs, self.interleaver_seed)


@dataclass(frozen=True)
class ChannelState:
    """Per-symbol effective gains seen by one user, shape ``(B, S)`` each.

    ``interference`` lists ``(gain, constellation)`` of the other users'
    private streams.
    """

    private_gain: np.ndarray
    common_gain: np.ndarray | None = None
    interference: tuple = ()

    def interference_power(self) -> np.ndarray | float:
        power = 0.0
        for g, _ in self.interference:
            power = power + np.abs(g) ** 2
        return power


@dataclass(frozen=True)
class DecodedStreams:
    """Decoder output of one receiver.

    ``common_bits`` / ``common_llrs`` are ``None`` for SDMA receivers.
    ``diagnostics`` holds the decoder iteration counts per block.
    """

    kind: ReceiverKind
    private_bits: np.ndarray
    private_llrs: np.ndarray
    common_bits: np.ndarray | None = None
    common_llrs: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)


def _check(y, state: ChannelState, private: StreamCodec, common: StreamCodec | None, kinds):
    y = np.asarray(y)
    if y.ndim != 2:
        raise DomainError("received block must have shape (blocks, symbols)")
    if y.shape[-1] != private.n_symbols:
        raise DomainError(f"block has {y.shape[-1]} symbols, private codec expects {private.n_symbols}")
    if np.shape(state.private_gain) != y.shape:
        raise DomainError("private gains must match the received block shape")
    if any(k.is_rsma for k in kinds):
        if common is None or state.common_gain is None:
            raise DomainError("RSMA receivers need a common codec and common gains")
        if common.n_symbols != y.shape[-1]:
            raise DomainError("common and private codecs must span the same symbol block")
        if np.shape(state.common_gain) != y.shape:
            raise DomainError("common gains must match the received block shape")


def receive(kind, y, state: ChannelState, private: StreamCodec, common: StreamCodec | None = None,
            noise_var: float = 1.0, max_log: bool = True, genie_common=None, **decoder) -> DecodedStreams:
    """Run one receiver pipeline; see :func:`receive_many`."""
    kind = ReceiverKind.parse(kind)
    return receive_many([kind], y, state, private, common, noise_var, max_log, genie_common, **decoder)[kind]


def receive_many(kinds: Iterable, y, state: ChannelState, private: StreamCodec, common: StreamCodec | None = None,
                 noise_var: float = 1.0, max_log: bool = True, genie_common=None,
                 **decoder) -> dict[ReceiverKind, DecodedStreams]:
    """Run several receiver pipelines on the same received block.

    Intermediate products that two pipelines compute identically (the joint
    distance table, the Gaussian-noise common de-mapping and its decode) are
    computed once and shared; every pipeline still produces exactly what it
    would produce alone.

    Args:
        y: ``(B, S)`` received symbols.
        noise_var: thermal noise variance.
        genie_common: optional ``(B, S)`` indices of the transmitted common
            symbols. SIC receivers then cancel with perfect knowledge, which
            reduces them to perfect-SIC reception.
        decoder: extra keyword arguments for :func:`fec.bp_decode`.
    """
    kinds = [ReceiverKind.parse(k) for k in kinds]
    y = np.asarray(y, dtype=complex)
    _check(y, state, private, common, kinds)
    xp = private.constellation
    gp = np.asarray(state.private_gain, dtype=complex)
    base_nv = noise_var + state.interference_power() + np.zeros(y.shape)
    cache: dict[str, object] = {}

    def private_decode(llrs):
        return private.decode(llrs, **decoder)

    def common_decode(llrs):
        return common.decode(llrs, **decoder)

    # shared products --------------------------------------------------------
    def marginal_common():
        if "marg" not in cache:
            nv = base_nv + np.abs(gp) ** 2
            llr = bicm.demap_marginal(y, state.common_gain, nv, common.constellation, max_log)
            cache["marg"] = (llr, common_decode(llr))
        return cache["marg"]

    def joint_table():
        if "metric" not in cache:
            cache["metric"] = bicm.joint_metrics(y, state.common_gain, gp, common.constellation, xp, base_nv)
        return cache["metric"]

    def joint_common():
        if "joint" not in cache:
            llr = bicm.llrs_from_joint_metrics(joint_table(), common.constellation, xp, "common", max_log=max_log)
            cache["joint"] = (llr, common_decode(llr))
        return cache["joint"]

    def genie_delta():
        idx = np.asarray(genie_common)
        return common.constellation.points[idx], idx

    def cancel_stats(llrs_coded):
        stats = bicm.soft_symbols(llrs_coded, common.constellation)
        return stats.mean, stats.variance

    def finish(kind, p_res, c_res=None, diag=None):
        d = {"private_iterations": p_res.iterations}
        if c_res is not None:
            d["common_iterations"] = c_res.iterations
        d.update(diag or {})
        return DecodedStreams(
            kind=kind,
            private_bits=p_res.hard_info,
            private_llrs=p_res.info_llrs,
            common_bits=None if c_res is None else c_res.hard_info,
            common_llrs=None if c_res is None else c_res.info_llrs,
            diagnostics=d,
        )

    out: dict[ReceiverKind, DecodedStreams] = {}
    for kind in kinds:
        if kind is ReceiverKind.HARD_CWIC:
            _, c_res = marginal_common()
            s_c = genie_delta()[0] if genie_common is not None else common.remodulate(c_res.hard_info)
            llr_p = bicm.demap_marginal(y - state.common_gain * s_c, gp, base_nv, xp, max_log)
            out[kind] = finish(kind, private_decode(llr_p), c_res)

        elif kind is ReceiverKind.SOFT_CWIC1:
            _, c_res = joint_common()
            if genie_common is not None:
                idx = genie_delta()[1]
                log_prior = np.where(np.arange(common.constellation.order) == idx[..., None], 0.0, -np.inf)
            else:
                log_prior = bicm.symbol_log_probs(common.posterior_llrs(c_res), common.constellation)
                log_prior = log_prior - np.logaddexp.reduce(log_prior, axis=-1, keepdims=True)
            llr_p = bicm.llrs_from_joint_metrics(joint_table(), common.constellation, xp, "private",
                                                 log_prior_common=log_prior, max_log=max_log)
            out[kind] = finish(kind, private_decode(llr_p), c_res)

        elif kind is ReceiverKind.SOFT_CWIC2:
            _, c_res = marginal_common()
            if genie_common is not None:
                mean, var = genie_delta()[0], np.zeros(y.shape)
            else:
                mean, var = cancel_stats(common.posterior_llrs(c_res))
            gc = state.common_gain
            nv = base_nv + np.abs(gc) ** 2 * var
            llr_p = bicm.demap_marginal(y - gc * mean, gp, nv, xp, max_log)
            out[kind] = finish(kind, private_decode(llr_p), c_res)

        elif kind is ReceiverKind.JOINT_DEMAPPER:
            _, c_res = joint_common()
            llr_p = bicm.llrs_from_joint_metrics(joint_table(), common.constellation, xp, "private",
                                                 max_log=max_log)
            out[kind] = finish(kind, private_decode(llr_p), c_res)

        elif kind is ReceiverKind.SOFT_SLIC:
            llr_c, c_res = marginal_common()
            # soft symbols from the de-mapper, not the decoder
            mean, var = cancel_stats(llr_c)
            gc = state.common_gain
            nv = base_nv + np.abs(gc) ** 2 * var
            llr_p = bicm.demap_marginal(y - gc * mean, gp, nv, xp, max_log)
            out[kind] = finish(kind, private_decode(llr_p), c_res)

        elif kind is ReceiverKind.SDMA_SINGLE_USER:
            llr_p = bicm.demap_marginal(y, gp, base_nv, xp, max_log)
            out[kind] = finish(kind, private_decode(llr_p))

        elif kind is ReceiverKind.SDMA_JOINT:
            nv = noise_var + np.zeros(y.shape)
            llr_p = bicm.demap_with_interference(y, gp, xp, state.interference, nv, max_log)
            out[kind] = finish(kind, private_decode(llr_p))

        else:  # pragma: no cover - enum is exhaustive
            raise DomainError(f"unsupported receiver {kind}")
    return out


# ---------------------------------------------------------------------------
# complexity accounting


DELAY_SIC = "interleaving & mapping"
DELAY_NONE = "-"


@dataclass(frozen=True)
class ComplexityReport:
    """Per-symbol distance evaluations and the extra buffer/delay relative
    to the joint de-mapper."""

    kind: ReceiverKind
    distance_evals_per_symbol: int
    extra_buffer_bits: int
    extra_delay: str


def complexity_report(kind, xc, xp, llr_bits: int, block_len: int) -> ComplexityReport:
    """Receiver complexity for common constellation ``xc`` and private ``xp``.

    For the SDMA baselines ``xc`` is read as the interfering stream's
    constellation: the single-user de-mapper costs ``|xp|`` and the joint one
    ``|xp| * |xc|``.
    """
    kind = ReceiverKind.parse(kind)
    if llr_bits < 1 or block_len < 1:
        raise DomainError("LLR width and block length must be positive")
    mc = bicm.as_constellation(xc).order
    mp = bicm.as_constellation(xp).order
    bits_c = bicm.as_constellation(xc).bits_per_symbol
    if kind in (ReceiverKind.SOFT_CWIC1, ReceiverKind.JOINT_DEMAPPER, ReceiverKind.SDMA_JOINT):
        evals = mc * mp
    elif kind is ReceiverKind.SDMA_SINGLE_USER:
        evals = mp
    else:
        evals = mc + mp
    if kind is ReceiverKind.HARD_CWIC:
        buffer = block_len * bits_c
    elif kind in (ReceiverKind.SOFT_CWIC1, ReceiverKind.SOFT_CWIC2):
        buffer = llr_bits * block_len * bits_c
    else:
        buffer = 0
    delay = DELAY_SIC if kind.is_sic else DELAY_NONE
    return ComplexityReport(kind, evals, buffer, delay)


def complexity_table(xc, xp, llr_bits: int, block_len: int,
                     kinds: Sequence = tuple(k for k in ReceiverKind if k.is_rsma)) -> list[ComplexityReport]:
    return [complexity_report(k, xc, xp, llr_bits, block_len) for k in kinds]

"""Monte Carlo drivers for rate curves, t* distributions and BER curves.

Random numbers come from counter-based substreams keyed by
``(seed, 4 * draw + purpose)``; every channel draw (rate experiments) or
code block (BER experiments) owns its channel, bit and noise substreams.
Consequently all schemes and SNR points see the same channels, bits and
unit-variance noise, and results do not depend on how draws are split
across worker processes. Work is cut into fixed-size chunks whose partial
results are merged in chunk order.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache, partial
from typing import Callable

import numpy as np

from .. import bicm, precoding, rates
from ..channel import OneRingSpec, covariance_matrix, kl_factor, sample_channel
from ..numerics import SeededRng
from ..receivers import ChannelState, ReceiverKind, StreamCodec, receive_many
from .config import SchemeConfig, SimulationConfig
from .records import Record

log = logging.getLogger(__name__)

CHANNEL, BITS, NOISE, AUX = range(4)
RATE_CHUNK = 100
BER_CHUNK = 10
COMMON_INTERLEAVER = 0xC0
PRIVATE_INTERLEAVER = 0x100


def substream(cfg: SimulationConfig, draw: int, purpose: int) -> np.random.Generator:
    return SeededRng(cfg.seed, 4 * draw + purpose).generator()


def snr_to_power(snr_db: float) -> float:
    return 10.0 ** (snr_db / 10.0)


@lru_cache(maxsize=32)
def _factor(n_tx: int, theta: float, delta: float, n_users: int):
    return kl_factor(covariance_matrix(OneRingSpec(n_tx, theta, delta, n_users)))


def channel_factor(cfg: SimulationConfig):
    ch = cfg.channel
    return _factor(ch.n_tx, ch.theta, ch.delta, ch.n_users)


def _constellation(stream) -> bicm.Constellation:
    return bicm.constellation(stream.constellation)


# ---------------------------------------------------------------------------
# precoders and power split


@dataclass(frozen=True)
class Directions:
    common: np.ndarray | None
    private: np.ndarray


def directions(scheme: SchemeConfig, h: np.ndarray) -> Directions:
    if scheme.family == "rsma":
        return Directions(precoding.common_direction(h), precoding.zf_directions(h))
    private = precoding.zf_directions(h) if scheme.precoder == "zf" else precoding.mrt_directions(h)
    return Directions(None, private)


def power_split(cfg: SimulationConfig, scheme: SchemeConfig, h: np.ndarray, dirs: Directions, p_total: float,
                objective: str | None = None) -> np.ndarray:
    """Per-realization common power fraction ``t``.

    The Gaussian objective uses the closed form unless an explicit grid is
    configured; CC objectives always search a grid (the 6-point default
    when none is configured).
    """
    batch = h.shape[:-2]
    if scheme.family == "sdma":
        return np.zeros(batch)
    objective = objective or scheme.allocation
    xc = _constellation(scheme.common)
    xk = _constellation(scheme.private)
    if objective == "gaussian" and cfg.t_grid is None:
        c, d = rates.unit_gains(h, dirs.common, dirs.private)
        terms = rates.terms_from_unit_gains(c, d, p_total / cfg.noise_var)
        return np.asarray(rates.closed_form_t_star(terms)).reshape(batch)
    grid = rates.DEFAULT_T_GRID if cfg.t_grid is None else cfg.t_grid
    t = rates.power_allocation_search(h, dirs.common, dirs.private, p_total, objective, grid, xc, xk,
                                      cfg.noise_var)
    return np.asarray(t).reshape(batch)


def effective_gains(dirs: Directions, t: np.ndarray, p_total: float, h: np.ndarray):
    """``(g_c, g)`` with ``g_c[..., k] = h_k^H p_c`` (zeros for SDMA) and ``g[..., k, j] = h_k^H p_j``."""
    k = dirs.private.shape[-2]
    common = dirs.common if dirs.common is not None else np.zeros(dirs.private.shape[:-2] + dirs.private.shape[-1:])
    pre = precoding.PrecoderSet(common, dirs.private, t, np.float64(p_total))
    g_c, g = pre.gains(h)
    if dirs.common is None:
        g_c = np.zeros(g.shape[:-1], dtype=complex)
    return g_c, g


# ---------------------------------------------------------------------------
# chunked execution


def _chunks(n: int, size: int) -> list[tuple[int, int]]:
    return [(s, min(s + size, n)) for s in range(0, n, size)]


def _map_chunks(fn: Callable, cfg: SimulationConfig, n: int, size: int, workers: int) -> list:
    chunks = _chunks(n, size)
    if workers <= 1 or len(chunks) == 1:
        return [fn(cfg, a, b) for a, b in chunks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(partial(_call, fn, cfg), chunks))


def _call(fn, cfg, span):
    return fn(cfg, *span)


def _draw_channels(cfg: SimulationConfig, start: int, stop: int, per_draw: int = 1) -> np.ndarray:
    factor = channel_factor(cfg)
    k = cfg.channel.n_users
    hs = [sample_channel(factor, k, substream(cfg, d, CHANNEL), size=(per_draw,)) for d in range(start, stop)]
    return np.stack(hs)  # (draws, per_draw, K, Nt)


# ---------------------------------------------------------------------------
# rate curves


def _rate_values(cfg: SimulationConfig, scheme: SchemeConfig, h: np.ndarray, p_total: float,
                 start: int) -> np.ndarray:
    dirs = directions(scheme, h)
    t = power_split(cfg, scheme, h, dirs, p_total)
    nv = cfg.noise_var
    xk = _constellation(scheme.private)
    if scheme.family == "sdma":
        _, g = effective_gains(dirs, t, p_total, h)
        if scheme.evaluate == "gaussian":
            sig = np.abs(np.diagonal(g, axis1=-2, axis2=-1)) ** 2
            interf = np.sum(np.abs(g) ** 2, axis=-1) - sig
            return np.sum(np.log2(1 + sig / (nv + interf)), axis=-1)
        if cfg.rate_method == "exact":
            return np.array([
                np.sum(rates.sdma_cc_rates_exact(g[i], xk, substream(cfg, start + i, AUX), cfg.n_noise, nv))
                for i in range(g.shape[0])
            ])
        return np.sum(rates.sdma_cc_rates_approx(g, xk, nv), axis=-1)

    xc = _constellation(scheme.common)
    if scheme.evaluate == "gaussian":
        c, d = rates.unit_gains(h, dirs.common, dirs.private)
        return rates.sum_rate_from_terms(rates.terms_from_unit_gains(c, d, p_total / nv), t)
    mode = "sic" if scheme.evaluate == "cc-sic" else "non-sic"
    if cfg.rate_method == "exact":
        out = []
        for i in range(h.shape[0]):
            pre = precoding.assemble(dirs.common[i], dirs.private[i], t[i], p_total)
            rep = rates.cc_sum_rate(h[i], pre, xc, xk, mode=mode, method="exact",
                                    rng=substream(cfg, start + i, AUX), n_noise=cfg.n_noise, noise_var=nv)
            out.append(rep.sum)
        return np.array(out)
    g_c, g = effective_gains(dirs, t, p_total, h)
    sic, non = rates.cc_sum_rates_approx(g_c, np.diagonal(g, axis1=-2, axis2=-1), xc.points, xk.points, nv)
    return sic if mode == "sic" else non


def _rate_chunk(cfg: SimulationConfig, start: int, stop: int) -> np.ndarray:
    """Per (scheme, SNR) sums over draws ``start..stop``."""
    h = _draw_channels(cfg, start, stop)[:, 0]
    out = np.zeros((len(cfg.schemes), len(cfg.snr_db)))
    for i, scheme in enumerate(cfg.schemes):
        for j, snr in enumerate(cfg.snr_db):
            out[i, j] = float(np.sum(_rate_values(cfg, scheme, h, snr_to_power(snr), start)))
    return out


def run_rate_curves(cfg: SimulationConfig, workers: int = 1) -> list[Record]:
    """Ergodic (CC) sum-rate per scheme and SNR, averaged over ``n_blocks`` channel draws."""
    parts = _map_chunks(_rate_chunk, cfg, cfg.n_blocks, RATE_CHUNK, workers)
    total = np.zeros_like(parts[0])
    for p in parts:
        total = total + p
    mean = total / cfg.n_blocks
    recs = []
    for i, scheme in enumerate(cfg.schemes):
        metric = "sum_rate" if scheme.evaluate == "gaussian" else "cc_sum_rate"
        for j, snr in enumerate(cfg.snr_db):
            recs.append(Record(scheme.name, float(snr), "aggregate", metric, float(mean[i, j]), cfg.n_blocks, cfg.seed))
    return recs


# ---------------------------------------------------------------------------
# t* distributions


def _tstar_chunk(cfg: SimulationConfig, start: int, stop: int) -> np.ndarray:
    h = _draw_channels(cfg, start, stop)[:, 0]
    out = np.zeros((len(cfg.schemes), len(cfg.snr_db), stop - start))
    for i, scheme in enumerate(cfg.schemes):
        dirs = directions(scheme, h)
        for j, snr in enumerate(cfg.snr_db):
            out[i, j] = power_split(cfg, scheme, h, dirs, snr_to_power(snr))
    return out


def tstar_samples(cfg: SimulationConfig, workers: int = 1) -> np.ndarray:
    """``(schemes, snrs, draws)`` array of per-draw t* in draw order."""
    return np.concatenate(_map_chunks(_tstar_chunk, cfg, cfg.n_blocks, RATE_CHUNK, workers), axis=-1)


def run_tstar_cdf(cfg: SimulationConfig, workers: int = 1) -> list[Record]:
    """Empirical CDF support: the sorted t* samples per scheme and SNR."""
    samples = tstar_samples(cfg, workers)
    recs = []
    for i, scheme in enumerate(cfg.schemes):
        for j, snr in enumerate(cfg.snr_db):
            for v in np.sort(samples[i, j]):
                recs.append(Record(scheme.name, float(snr), "aggregate", "t_star", float(v), cfg.n_blocks, cfg.seed))
    return recs


def empirical_cdf(samples, x) -> np.ndarray:
    """``F(x) = #{samples <= x} / n``."""
    s = np.sort(np.asarray(samples, dtype=float))
    return np.searchsorted(s, np.asarray(x, dtype=float), side="right") / s.size


# ---------------------------------------------------------------------------
# BER


@lru_cache(maxsize=64)
def _codec(n_symbols: int, rate: float, constellation: str, interleaver_seed: int) -> StreamCodec:
    return StreamCodec.build(n_symbols, rate, constellation, interleaver_seed)


def stream_codecs(cfg: SimulationConfig, scheme: SchemeConfig):
    """``(common codec or None, [private codec per user])``."""
    s = cfg.block_length
    common = None
    if scheme.common is not None:
        common = _codec(s, scheme.common.rate, scheme.common.constellation, COMMON_INTERLEAVER)
    private = [_codec(s, scheme.private.rate, scheme.private.constellation, PRIVATE_INTERLEAVER + k)
               for k in range(cfg.channel.n_users)]
    return common, private


def _transmit_key(scheme: SchemeConfig):
    return (scheme.family, scheme.allocation, scheme.precoder, scheme.common, scheme.private)


def transmit_groups(cfg: SimulationConfig) -> list[list[int]]:
    """Scheme indices grouped by identical transmitter settings, first-seen order."""
    groups: dict = {}
    for i, s in enumerate(cfg.schemes):
        groups.setdefault(_transmit_key(s), []).append(i)
    return list(groups.values())


def _expand(realizations: np.ndarray, cfg: SimulationConfig) -> np.ndarray:
    """Per-realization array ``(B, R, ...)`` to per-symbol ``(B, S, ...)``."""
    if cfg.fading == "fast":
        return realizations
    return np.repeat(realizations, cfg.coherence, axis=1)


def _ber_chunk(cfg: SimulationConfig, start: int, stop: int) -> np.ndarray:
    """Bit-error and bit counts, shape ``(schemes, snrs, 2 streams, 2)``."""
    n_real = cfg.block_length if cfg.fading == "fast" else cfg.block_length // cfg.coherence
    h = _draw_channels(cfg, start, stop, n_real)  # (B, R, K, Nt)
    k_users = cfg.channel.n_users
    blocks = range(start, stop)
    noise = np.stack([
        SeededRng(cfg.seed, 4 * b + NOISE).generator().standard_normal((k_users, cfg.block_length, 2)) for b in blocks
    ])
    noise = np.sqrt(0.5) * (noise[..., 0] + 1j * noise[..., 1])  # (B, K, S)
    counts = np.zeros((len(cfg.schemes), len(cfg.snr_db), 2, 2), dtype=np.int64)

    for group in transmit_groups(cfg):
        scheme = cfg.schemes[group[0]]
        kinds = [cfg.schemes[i].receiver_kind for i in group]
        common, private = stream_codecs(cfg, scheme)
        dirs = directions(scheme, h)
        bits_c, bits_p = [], []
        for b in blocks:
            gen = substream(cfg, b, BITS)
            bits_c.append(gen.integers(0, 2, common.info_length, dtype=np.uint8) if common else None)
            bits_p.append(gen.integers(0, 2, (k_users, private[0].info_length), dtype=np.uint8))
        bits_p = np.stack(bits_p)  # (B, K, kp)
        s_p = np.stack([private[k].modulate(bits_p[:, k]) for k in range(k_users)], axis=1)  # (B, K, S)
        if common is not None:
            bits_c = np.stack(bits_c)
            s_c = common.modulate(bits_c)  # (B, S)

        for j, snr in enumerate(cfg.snr_db):
            p_total = snr_to_power(snr)
            t = power_split(cfg, scheme, h, dirs, p_total)
            g_c, g = effective_gains(dirs, t, p_total, h)
            g_c, g = _expand(g_c, cfg), _expand(g, cfg)  # (B, S, K), (B, S, K, K)
            rx_sig = np.einsum("bskj,bjs->bks", g, s_p)
            if common is not None:
                rx_sig = rx_sig + np.swapaxes(g_c, 1, 2) * s_c[:, None, :]
            y = rx_sig + math.sqrt(cfg.noise_var) * noise

            for k in cfg.evaluated_users:
                interf = tuple((g[:, :, k, i], private[i].constellation) for i in range(k_users) if i != k)
                state = ChannelState(
                    private_gain=g[:, :, k, k],
                    common_gain=g_c[:, :, k] if common is not None else None,
                    interference=interf,
                )
                outs = receive_many(kinds, y[:, k], state, private[k], common, noise_var=cfg.noise_var,
                                    max_iters=cfg.max_iters)
                for idx, kind in zip(group, kinds):
                    res = outs[kind]
                    counts[idx, j, 1, 0] += int(np.count_nonzero(res.private_bits != bits_p[:, k]))
                    counts[idx, j, 1, 1] += bits_p[:, k].size
                    if res.common_bits is not None:
                        counts[idx, j, 0, 0] += int(np.count_nonzero(res.common_bits != bits_c))
                        counts[idx, j, 0, 1] += bits_c.size
    return counts


def ber_counts(cfg: SimulationConfig, workers: int = 1) -> np.ndarray:
    """Summed ``(errors, bits)`` per scheme, SNR and stream (0 common, 1 private)."""
    parts = _map_chunks(_ber_chunk, cfg, cfg.n_blocks, BER_CHUNK, workers)
    return np.sum(parts, axis=0)


def run_ber(cfg: SimulationConfig, workers: int = 1) -> list[Record]:
    """Per-stream BER for every scheme and SNR.

    Common-stream errors are counted over every evaluated user's decode of
    the common message; private errors over every evaluated user's own
    stream.
    """
    counts = ber_counts(cfg, workers)
    recs = []
    for i, scheme in enumerate(cfg.schemes):
        for j, snr in enumerate(cfg.snr_db):
            for s, stream in enumerate(("common", "private")):
                err, tot = counts[i, j, s]
                if tot == 0:
                    continue
                recs.append(Record(scheme.name, float(snr), stream, "ber", err / tot, cfg.n_blocks, cfg.seed))
    return recs


RUNNERS = {"rates": run_rate_curves, "cdf": run_tstar_cdf, "ber": run_ber}


def run(cfg: SimulationConfig, workers: int = 1) -> list[Record]:
    """Dispatch on ``cfg.experiment``."""
    log.info("running %s (%s, %d draws/blocks, %d workers)", cfg.name, cfg.experiment, cfg.n_blocks, workers)
    return RUNNERS[cfg.experiment](cfg, workers)

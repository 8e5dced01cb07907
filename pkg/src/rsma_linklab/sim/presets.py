"""Ready-made experiment configurations.

Rate and t* presets follow the CC sum-rate comparisons and t* distributions
(K=2 or 3, Nt=4, theta=pi/3). BER presets carry the receiver comparison
MCS pairs and the per-scenario code-rate table; SDMA baselines reuse the
RSMA private constellation at ``throughput / (K * bits_per_symbol)``.
"""

from __future__ import annotations

import math

from ..bicm import constellation
from .config import SimulationConfig, validate

PI = math.pi
RSMA_RECEIVERS = ("hard-cwic", "soft-cwic1", "soft-cwic2", "joint-demapper", "soft-slic")
SIC_RECEIVERS = RSMA_RECEIVERS[:3]
NON_SIC_RECEIVERS = RSMA_RECEIVERS[3:]

# common + private code rates per BER scenario: (soft CWIC 1 finite, joint finite,
# soft CWIC 1 Gaussian, joint Gaussian)
CODE_RATES = {
    "fig12a": ((0.81, 0.345), (0.85, 0.325), (0.815, 0.3425), (0.82, 0.34)),
    "fig12b": ((0.75, 0.375), (0.78, 0.36), (0.7, 0.4), (0.75, 0.375)),
    "fig12c": ((0.88, 0.46), (0.94, 0.43), (0.8, 0.5), (0.8, 0.5)),
    "fig12d": ((0.78, 0.4), (0.855, 0.35), (0.66, 0.48), (0.69, 0.46)),
}
DELTA_SWEEP_RATES = {"fig13": (0.8, 0.35), "fig13_pi9": (0.7, 0.4), "fig13_pi6": (0.6, 0.45)}


def _stream(constellation: str, rate: float | None = None) -> dict:
    out = {"constellation": constellation}
    if rate is not None:
        out["rate"] = rate
    return out


def _rsma(name, allocation, receiver=None, common="QPSK", private="QPSK", rates=(None, None), evaluate="cc-sic"):
    return {
        "name": name,
        "family": "rsma",
        "allocation": allocation,
        "evaluate": evaluate,
        **({"receiver": receiver} if receiver else {}),
        "common": _stream(common, rates[0]),
        "private": _stream(private, rates[1]),
    }


def _sdma(name, precoder, receiver=None, private="QPSK", rate=None, evaluate="cc-sic"):
    return {
        "name": name,
        "family": "sdma",
        "precoder": precoder,
        "evaluate": evaluate,
        **({"receiver": receiver} if receiver else {}),
        "private": _stream(private, rate),
    }


def _rate_schemes(common: str, private: str, sdma: str) -> list[dict]:
    return [
        _rsma("rsma-finite-sic", "cc-sic", common=common, private=private, evaluate="cc-sic"),
        _rsma("rsma-gaussian-sic", "gaussian", common=common, private=private, evaluate="cc-sic"),
        _rsma("rsma-finite-nonsic", "cc-nonsic", common=common, private=private, evaluate="cc-nonsic"),
        _rsma("rsma-gaussian-nonsic", "gaussian", common=common, private=private, evaluate="cc-nonsic"),
        _sdma("sdma-zf", "zf", private=sdma),
        _sdma("sdma-mrt", "mrt", private=sdma),
    ]


def _cdf_schemes(constellation: str) -> list[dict]:
    return [
        _rsma("gaussian", "gaussian", common=constellation, private=constellation),
        _rsma("cc-sic", "cc-sic", common=constellation, private=constellation),
        _rsma("cc-nonsic", "cc-nonsic", common=constellation, private=constellation),
    ]


def _ber_table(key: str, k_users: int, throughput: float, common: str, private: str) -> list[dict]:
    (f_sic, f_non, g_sic, g_non) = CODE_RATES[key]
    sdma_rate = round(throughput / (k_users * constellation(private).bits_per_symbol), 6)
    return [
        _rsma("soft-cwic1-finite", "cc-sic", "soft-cwic1", common, private, f_sic),
        _rsma("joint-demapper-finite", "cc-nonsic", "joint-demapper", common, private, f_non),
        _rsma("soft-cwic1-gaussian", "gaussian", "soft-cwic1", common, private, g_sic),
        _rsma("joint-demapper-gaussian", "gaussian", "joint-demapper", common, private, g_non),
        _sdma("sdma-zf", "zf", "sdma-single-user", private, sdma_rate),
        _sdma("sdma-mrt-joint", "mrt", "sdma-joint", private, sdma_rate),
        _sdma("sdma-mrt", "mrt", "sdma-single-user", private, sdma_rate),
    ]


def _channel(k: int, delta: float) -> dict:
    return {"n_tx": 4, "theta": PI / 3, "delta": delta, "n_users": k}


_RAW: dict[str, dict] = {
    "fig8a": {
        "experiment": "rates", "channel": _channel(2, PI / 18), "snr_db": list(range(-10, 31, 5)),
        "n_blocks": 1000, "schemes": _rate_schemes("QPSK", "QPSK", "QPSK"),
    },
    "fig8b": {
        "experiment": "rates", "channel": _channel(2, PI / 18), "snr_db": list(range(-10, 31, 5)),
        "n_blocks": 1000, "schemes": _rate_schemes("16QAM", "16QAM", "16QAM"),
    },
    "fig8c": {
        "experiment": "rates", "channel": _channel(3, PI / 9), "snr_db": list(range(-10, 31, 5)),
        "n_blocks": 1000, "schemes": _rate_schemes("16QAM", "QPSK", "QPSK"),
    },
    "fig10a": {"experiment": "cdf", "channel": _channel(2, PI / 9), "snr_db": [5.0], "n_blocks": 1000,
               "schemes": _cdf_schemes("QPSK")},
    "fig10b": {"experiment": "cdf", "channel": _channel(2, PI / 9), "snr_db": [10.0], "n_blocks": 1000,
               "schemes": _cdf_schemes("QPSK")},
    "fig10c": {"experiment": "cdf", "channel": _channel(2, PI / 9), "snr_db": [10.0], "n_blocks": 1000,
               "schemes": _cdf_schemes("16QAM")},
    "fig11a": {
        "experiment": "ber", "channel": _channel(2, PI / 9), "snr_db": [6.0 + 0.5 * i for i in range(13)],
        "n_blocks": 2000,
        "schemes": [_rsma(r, "gaussian", r, rates=(0.54, 0.3)) for r in RSMA_RECEIVERS],
    },
    "fig11b": {
        "experiment": "ber", "channel": _channel(2, PI / 9), "snr_db": [float(x) for x in range(0, 13, 2)],
        "n_blocks": 2000,
        "schemes": [_rsma(r, "gaussian", r, rates=(0.6, 0.3)) for r in SIC_RECEIVERS]
        + [_rsma(r, "gaussian", r, rates=(0.74, 0.3)) for r in NON_SIC_RECEIVERS],
    },
    "fig12a": {"experiment": "ber", "channel": _channel(2, PI / 18), "snr_db": [float(x) for x in range(0, 21, 2)],
               "n_blocks": 2000, "schemes": _ber_table("fig12a", 2, 3.0, "QPSK", "QPSK")},
    "fig12b": {"experiment": "ber", "channel": _channel(2, PI / 18), "snr_db": [float(x) for x in range(4, 31, 2)],
               "n_blocks": 2000, "schemes": _ber_table("fig12b", 2, 6.0, "16QAM", "16QAM")},
    "fig12c": {"experiment": "ber", "channel": _channel(2, PI / 18), "fading": "block", "block_length": 4096,
               "snr_db": [float(x) for x in range(0, 31, 2)], "n_blocks": 250,
               "schemes": _ber_table("fig12c", 2, 3.6, "QPSK", "QPSK")},
    "fig12d": {"experiment": "ber", "channel": _channel(3, PI / 9), "fading": "block", "block_length": 4096,
               "snr_db": [float(x) for x in range(0, 31, 2)], "n_blocks": 250,
               "schemes": _ber_table("fig12d", 3, 5.52, "16QAM", "QPSK")},
    "smoke": {
        "experiment": "ber", "channel": _channel(2, PI / 9), "snr_db": [4.0, 8.0], "n_blocks": 24,
        "block_length": 128, "max_iters": 20,
        "schemes": [_rsma("soft-cwic1", "cc-sic", "soft-cwic1", rates=(0.5, 0.3)),
                    _rsma("hard-cwic", "cc-sic", "hard-cwic", rates=(0.5, 0.3)),
                    _rsma("joint-demapper", "cc-nonsic", "joint-demapper", rates=(0.6, 0.3)),
                    _sdma("sdma-zf", "zf", "sdma-single-user", rate=0.6)],
    },
}

for _name, (_c, _p) in DELTA_SWEEP_RATES.items():
    _delta = {"fig13": PI / 18, "fig13_pi9": PI / 9, "fig13_pi6": PI / 6}[_name]
    _RAW[_name] = {
        "experiment": "ber", "channel": _channel(2, _delta), "snr_db": [float(x) for x in range(0, 21, 2)],
        "n_blocks": 2000,
        "schemes": [_rsma("soft-cwic1-finite", "cc-sic", "soft-cwic1", rates=(_c, _p)),
                    _sdma("sdma-zf", "zf", "sdma-single-user", rate=0.75),
                    _sdma("sdma-mrt-joint", "mrt", "sdma-joint", rate=0.75)],
    }


def names() -> list[str]:
    return sorted(_RAW)


def preset(name: str, **overrides) -> SimulationConfig:
    """Validated configuration of a named preset, with optional field overrides."""
    if name not in _RAW:
        raise KeyError(f"unknown preset {name!r}; available: {', '.join(names())}")
    data = {"name": name, **_RAW[name]}
    data.update({k: v for k, v in overrides.items() if v is not None})
    return validate(data)

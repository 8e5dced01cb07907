"""Simulation configuration: validated models plus TOML reading and writing."""

from __future__ import annotations

import math
import sys
from pathlib import Path
from typing import Literal, Optional

import tomli_w
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from ..bicm import CONSTELLATION_NAMES
from ..errors import ConfigError
from ..receivers import ReceiverKind

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

Allocation = Literal["gaussian", "cc-sic", "cc-nonsic"]
Experiment = Literal["rates", "cdf", "ber"]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ChannelConfig(_Strict):
    """One-ring channel of a half-wavelength ULA (angles in radians)."""

    n_tx: int = Field(4, ge=1)
    theta: float = math.pi / 3
    delta: float = Field(math.pi / 9, gt=0, le=math.pi / 2)
    n_users: int = Field(2, ge=1)

    @model_validator(mode="after")
    def _underloaded(self):
        if self.n_users > self.n_tx:
            raise ValueError("n_users must not exceed n_tx")
        return self


class StreamConfig(_Strict):
    """Modulation and (for BER runs) code rate of one stream."""

    constellation: str = "QPSK"
    rate: Optional[float] = Field(None, gt=0, lt=1)

    @field_validator("constellation")
    @classmethod
    def _known(cls, v: str) -> str:
        if v.upper() not in CONSTELLATION_NAMES:
            raise ValueError(f"unknown constellation {v!r}; choose from {list(CONSTELLATION_NAMES)}")
        return v.upper()


class SchemeConfig(_Strict):
    """One curve of an experiment.

    ``family = "rsma"`` uses ZF private directions plus the multicast common
    direction and picks ``t`` per realization with ``allocation``.
    ``family = "sdma"`` sends private streams only with ``precoder``
    directions. ``evaluate`` selects the rate metric of rate experiments and
    ``receiver`` the pipeline of BER experiments.
    """

    name: str
    family: Literal["rsma", "sdma"] = "rsma"
    allocation: Allocation = "gaussian"
    precoder: Literal["zf", "mrt"] = "zf"
    evaluate: Allocation = "cc-sic"
    receiver: Optional[str] = None
    common: Optional[StreamConfig] = None
    private: StreamConfig = StreamConfig()

    @field_validator("receiver")
    @classmethod
    def _receiver(cls, v):
        if v is None:
            return v
        return ReceiverKind.parse(v).value

    @model_validator(mode="after")
    def _consistent(self):
        if self.family == "rsma" and self.common is None:
            raise ValueError(f"scheme {self.name!r}: RSMA needs a common stream")
        if self.family == "sdma" and self.common is not None:
            raise ValueError(f"scheme {self.name!r}: SDMA has no common stream")
        if self.family == "rsma" and self.precoder != "zf":
            raise ValueError(f"scheme {self.name!r}: RSMA private directions are zero-forcing")
        if self.receiver is not None:
            kind = ReceiverKind.parse(self.receiver)
            if kind.is_rsma != (self.family == "rsma"):
                raise ValueError(f"scheme {self.name!r}: receiver {kind.value} does not fit {self.family}")
        return self

    @property
    def receiver_kind(self) -> ReceiverKind | None:
        return None if self.receiver is None else ReceiverKind.parse(self.receiver)


class SimulationConfig(_Strict):
    """Full description of one experiment; ``SNR dB = 10 log10 P_T``."""

    name: str = "custom"
    experiment: Experiment = "ber"
    channel: ChannelConfig = ChannelConfig()
    fading: Literal["fast", "block"] = "fast"
    coherence: int = Field(32, ge=1)
    snr_db: tuple[float, ...] = (10.0,)
    block_length: int = Field(512, ge=1)
    n_blocks: int = Field(2000, ge=1)
    seed: int = Field(0, ge=0)
    t_grid: Optional[tuple[float, ...]] = None
    noise_var: float = Field(1.0, gt=0)
    rate_method: Literal["approx", "exact"] = "approx"
    n_noise: int = Field(10_000, ge=2)
    users: Optional[tuple[int, ...]] = None
    max_iters: int = Field(60, ge=1)
    schemes: tuple[SchemeConfig, ...]

    @model_validator(mode="after")
    def _check(self):
        if not self.schemes:
            raise ValueError("at least one scheme is required")
        names = [s.name for s in self.schemes]
        if len(set(names)) != len(names):
            raise ValueError("scheme names must be unique")
        if not self.snr_db:
            raise ValueError("snr_db must not be empty")
        if self.t_grid is not None and (not self.t_grid or min(self.t_grid) < 0 or max(self.t_grid) > 1):
            raise ValueError("t_grid values must lie in [0, 1]")
        if self.fading == "block" and self.block_length % self.coherence:
            raise ValueError("coherence must divide the block length")
        if self.users is not None and any(not 0 <= u < self.channel.n_users for u in self.users):
            raise ValueError("users must index existing users")
        if self.experiment == "ber":
            for s in self.schemes:
                if s.receiver is None:
                    raise ValueError(f"scheme {s.name!r}: BER runs need a receiver")
                streams = [s.private] + ([s.common] if s.common else [])
                if any(st.rate is None for st in streams):
                    raise ValueError(f"scheme {s.name!r}: BER runs need code rates for every stream")
        if self.experiment == "cdf":
            for s in self.schemes:
                if s.family != "rsma":
                    raise ValueError("t* distributions are defined for RSMA schemes only")
        return self

    @property
    def evaluated_users(self) -> tuple[int, ...]:
        return tuple(range(self.channel.n_users)) if self.users is None else self.users

    def with_overrides(self, **changes) -> "SimulationConfig":
        data = self.model_dump()
        data.update({k: v for k, v in changes.items() if v is not None})
        return validate(data)


def validate(data: dict) -> SimulationConfig:
    try:
        return SimulationConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc


def _drop_none(obj):
    if isinstance(obj, dict):
        return {k: _drop_none(v) for k, v in obj.items() if v is not None}
    if isinstance(obj, (list, tuple)):
        return [_drop_none(v) for v in obj]
    return obj


def to_toml(cfg: SimulationConfig) -> str:
    return tomli_w.dumps(_drop_none(cfg.model_dump()))


def from_toml(text: str) -> SimulationConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    return validate(data)


def load_config(path) -> SimulationConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return from_toml(text)

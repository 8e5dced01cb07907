"""Monte Carlo experiments: configuration, presets, drivers and result records."""

from .config import SimulationConfig, load_config, from_toml, to_toml
from .harness import run, run_ber, run_rate_curves, run_tstar_cdf
from .presets import preset
from .records import Record, emit, load

__all__ = [
    "Record",
    "SimulationConfig",
    "emit",
    "from_toml",
    "load",
    "load_config",
    "preset",
    "run",
    "run_ber",
    "run_rate_curves",
    "run_tstar_cdf",
    "to_toml",
]

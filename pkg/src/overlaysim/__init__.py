"""Discrete-event simulator of overlay attacks on scan-and-pay wallets."""

from .agents import Outcome, Strategy, World, WorldConfig
from .harness import (
    Report,
    Scenario,
    emit,
    load_builtin,
    load_scenario,
    parse_scenario,
    run_scenario,
    sweep,
)

__all__ = [
    "Outcome",
    "Report",
    "Scenario",
    "Strategy",
    "World",
    "WorldConfig",
    "emit",
    "load_builtin",
    "load_scenario",
    "parse_scenario",
    "run_scenario",
    "sweep",
]
__version__ = "0.1.0"

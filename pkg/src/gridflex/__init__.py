"""gridflex: discrete-time scheduling for multi-aggregator demand-side
management of heterogeneous devices with power modes, deadlines,
criticalities, and cross-cluster mobility."""

from .model import (
    DeviceRequest,
    MovementMatrix,
    PowerModeSet,
    Scenario,
    SystemConfig,
    load_scenario,
    save_scenario,
    validate_config,
)

__version__ = "0.1.0"

__all__ = [
    "DeviceRequest",
    "MovementMatrix",
    "PowerModeSet",
    "Scenario",
    "SystemConfig",
    "load_scenario",
    "save_scenario",
    "validate_config",
    "__version__",
]

"""Python access to the qlight simulator and coincidence engine."""

import json as _json

from ._core import (
    ConfigError,
    QlightError,
    __version__,
    coincidences_in_window,
    command_names,
    config_hash,
    cross_correlogram,
    effective_modes,
    pair_streams,
    poisson_stream,
    threefold_coincidences,
)
from ._core import run_command_json as _run_command_json


def run_command(name, config, out, **overrides):
    """Run one experiment command and return its summary as a dict."""
    return _json.loads(_run_command_json(name, str(config), str(out), **overrides))


__all__ = [
    "ConfigError",
    "QlightError",
    "__version__",
    "coincidences_in_window",
    "command_names",
    "config_hash",
    "cross_correlogram",
    "effective_modes",
    "pair_streams",
    "poisson_stream",
    "run_command",
    "threefold_coincidences",
]

"""Bundled scenario configurations."""

from importlib import resources
from pathlib import Path

NAMES = ("scenario_1a", "scenario_1b", "scenario_2", "scenario_3",
         "compare_bottleneck")


def path(name: str) -> Path:
    """Filesystem path of a bundled scenario config."""
    if name not in NAMES:
        raise KeyError(f"unknown scenario {name!r}; available: {NAMES}")
    return Path(resources.files(__package__) / f"{name}.json")

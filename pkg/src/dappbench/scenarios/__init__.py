"""Shipped scenario files.

The contention scenarios (rq2, rq3) pin cores for a two-core host; on a
bigger machine regenerate the core sets or edit the JSON.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path


def scenario_path(name: str) -> Path:
    """Filesystem path of a shipped scenario (name without .json)."""
    candidate = resources.files(__package__) / f"{name}.json"
    with resources.as_file(candidate) as path:
        if not path.exists():
            raise FileNotFoundError(f"no shipped scenario named {name!r}")
        return Path(path)


def shipped_scenarios() -> list[str]:
    return sorted(
        entry.name.removesuffix(".json")
        for entry in resources.files(__package__).iterdir()
        if entry.name.endswith(".json")
    )

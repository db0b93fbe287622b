"""Shipped example models: a vehicle-attack entry and a knife-attack entry."""

from importlib import resources
from pathlib import Path


def fixture_path(name: str) -> Path:
    """Absolute path of a shipped fixture, e.g. ``vehicle_attack``."""
    ref = resources.files(__package__) / f"{name}.json"
    return Path(str(ref))


def vehicle_attack_path() -> Path:
    return fixture_path("vehicle_attack")


def knife_attack_path() -> Path:
    return fixture_path("knife_attack")

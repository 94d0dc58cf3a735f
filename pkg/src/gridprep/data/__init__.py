"""Bundled fixture data: a 13-bus mixed-phase feeder and a storm wind trace."""

from importlib import resources
from pathlib import Path


def fixture_path(name: str) -> Path:
    return Path(resources.files(__package__) / name)


def feeder13_path() -> Path:
    return fixture_path("feeder13.json")


def wind13_path() -> Path:
    return fixture_path("wind13.csv")


def fragility13_path() -> Path:
    return fixture_path("fragility13.json")


def config13_path() -> Path:
    return fixture_path("config13.json")

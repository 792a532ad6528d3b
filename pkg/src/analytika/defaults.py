"""Access to the data files shipped with the package."""

from __future__ import annotations

from importlib import resources
from pathlib import Path


def _data_path(*parts: str) -> Path:
    return Path(resources.files("analytika").joinpath("data", *parts))


def default_bytecode_patterns_path() -> Path:
    return _data_path("patterns", "bytecode_patterns.csv")


def default_native_patterns_path() -> Path:
    return _data_path("patterns", "native_patterns.csv")


def default_known_prefixes_path() -> Path:
    return _data_path("known_prefixes.txt")


def default_game_categories_path() -> Path:
    return _data_path("game_categories.txt")


def load_game_categories(path=None) -> frozenset[str]:
    source = Path(path) if path is not None else default_game_categories_path()
    names = []
    for line in source.read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            names.append(line)
    return frozenset(names)

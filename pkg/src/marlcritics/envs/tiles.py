"""Plain-text tile maps, one character per cell.

=====  ===============================
char   meaning
=====  ===============================
``#``  wall
``.``  floor
``A``  agent spawn (in reading order)
``G``  goal (far goal in Move Box)
``g``  near goal
``S``  switch
``D``  door (closed unless a switch is held)
``T``  treasure
``B``  box
=====  ===============================

Every non-wall character is walkable floor with a marker on it.
"""
from dataclasses import dataclass
from importlib import resources

import numpy as np

from ..validation import ConfigurationError

TILE_CHARS = set("#.AGgSDTB")


@dataclass(frozen=True)
class TileMap:
    rows: tuple
    wall: np.ndarray
    markers: dict  # char -> list of (row, col)

    @property
    def shape(self):
        return self.wall.shape

    def cells(self, char):
        return list(self.markers.get(char, []))

    def cell(self, char):
        cells = self.markers.get(char)
        if not cells:
            raise ConfigurationError(f"map has no {char!r} tile")
        return cells[0]

    def to_text(self):
        return "\n".join(self.rows) + "\n"


def parse_tiles(text):
    lines = [ln.rstrip("\r") for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ConfigurationError("empty tile map")
    width = len(lines[0])
    if any(len(ln) != width for ln in lines):
        raise ConfigurationError("tile map rows have different lengths")
    wall = np.zeros((len(lines), width), dtype=bool)
    markers = {}
    for r, ln in enumerate(lines):
        for c, ch in enumerate(ln):
            if ch not in TILE_CHARS:
                raise ConfigurationError(f"unknown tile {ch!r} at row {r}, col {c}")
            if ch == "#":
                wall[r, c] = True
            elif ch != ".":
                markers.setdefault(ch, []).append((r, c))
    return TileMap(tuple(lines), wall, markers)


def load_tiles(name_or_path):
    """Load a bundled map by name (``"cleaner"``) or any file path."""
    if "/" in str(name_or_path) or str(name_or_path).endswith(".txt"):
        with open(name_or_path) as fh:
            return parse_tiles(fh.read())
    res = resources.files(__package__).joinpath("maps", f"{name_or_path}.txt")
    if not res.is_file():
        raise ConfigurationError(f"no bundled map named {name_or_path!r}")
    return parse_tiles(res.read_text())

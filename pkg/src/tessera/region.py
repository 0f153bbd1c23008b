"""Rectangular canvas regions."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigError, PlacementError


@dataclass(frozen=True)
class Region:
    """Half-open pixel rectangle ``[row_start, row_end) x [col_start, col_end)``."""

    row_start: int
    row_end: int
    col_start: int
    col_end: int

    def __post_init__(self):
        if not (0 <= self.row_start < self.row_end):
            raise ConfigError(f"invalid row range [{self.row_start}, {self.row_end})")
        if not (0 <= self.col_start < self.col_end):
            raise ConfigError(f"invalid column range [{self.col_start}, {self.col_end})")

    @classmethod
    def full(cls, height: int, width: int) -> Region:
        return cls(0, height, 0, width)

    @property
    def height(self) -> int:
        return self.row_end - self.row_start

    @property
    def width(self) -> int:
        return self.col_end - self.col_start

    @property
    def index(self) -> tuple:
        """Index usable on ``(..., H, W, C)`` arrays; leading batch axes pass through."""
        return (Ellipsis, slice(self.row_start, self.row_end), slice(self.col_start, self.col_end), slice(None))

    def check_within(self, height: int, width: int, what: str = "region") -> None:
        if self.row_end > height:
            raise PlacementError(f"{what} rows [{self.row_start}, {self.row_end}) exceed canvas height {height}")
        if self.col_end > width:
            raise PlacementError(f"{what} cols [{self.col_start}, {self.col_end}) exceed canvas width {width}")

    def scaled(self, factor: int) -> Region:
        return Region(self.row_start * factor, self.row_end * factor, self.col_start * factor, self.col_end * factor)

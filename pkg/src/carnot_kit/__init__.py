"""Multiexponential maps, distances and horizontally convex sets in Carnot groups."""

from .groups import (
    CarnotGroup,
    FiliformGroup,
    Free32Group,
    GroupError,
    GroupPoint,
    StepTwoGroup,
    heisenberg,
    is_metivier,
    non_metivier_example,
    parse_group,
)
from .numbers import EXACT, FLOAT, Surd

__all__ = [
    "CarnotGroup",
    "EXACT",
    "FLOAT",
    "FiliformGroup",
    "Free32Group",
    "GroupError",
    "GroupPoint",
    "StepTwoGroup",
    "Surd",
    "heisenberg",
    "is_metivier",
    "non_metivier_example",
    "parse_group",
]

__version__ = "0.1.0"

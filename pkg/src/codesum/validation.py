"""Input validation helpers shared by the estimator and the CLI."""

from __future__ import annotations

from typing import Sequence


def check_text_list(values, name: str) -> list[str]:
    """Coerce to a list and require every element to be a string."""
    if isinstance(values, str):
        raise TypeError(f"{name} must be a sequence of strings, not a string")
    out = list(values)
    if not out:
        raise ValueError(f"{name} must contain at least one text")
    for i, v in enumerate(out):
        if not isinstance(v, str):
            raise TypeError(f"{name}[{i}] is {type(v).__name__}, expected str")
    return out


def check_same_length(x: Sequence, y: Sequence, x_name: str = "X",
                      y_name: str = "y") -> None:
    if len(x) != len(y):
        raise ValueError(
            f"{x_name} and {y_name} have inconsistent lengths: "
            f"{len(x)} != {len(y)}"
        )

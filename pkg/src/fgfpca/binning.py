"""Bin systems over the functional domain.

Bins are sets of grid indices centered on midpoints. Overlapping mode
places one bin at every grid index; non-overlapping mode partitions the
grid into blocks of width+1 consecutive indices. Cyclic domains wrap
overlapping bins around the ends; non-cyclic ones truncate at the
boundary instead. All indices here are 0-based.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class BinSpec:
    midpoint_indices: np.ndarray  # (L,) 0-based indices into the grid
    bins: tuple  # L index arrays, each sorted in grid order
    width: int
    overlap: bool
    cyclic: bool
    J: int

    @property
    def L(self) -> int:
        return len(self.bins)


def build_bins(J: int, width: int, overlap: bool, cyclic: bool) -> BinSpec:
    """Construct the bin system for a grid of J points.

    width must be even (midpoint symmetry) and < J. Interior bins have
    width+1 points. Non-cyclic overlapping bins near the boundary are
    truncated, never shorter than width/2 + 1 points. Non-overlapping
    bins partition 0..J-1 in blocks of width+1; a remainder shorter than
    width+1 becomes a final tail bin with its midpoint at the tail's own
    center (lower middle for even-length tails).
    """
    J = int(J)
    width = int(width)
    if width % 2 != 0:
        raise ConfigError("width must be even")
    if width < 2:
        raise ConfigError(f"width must be >= 2, got {width}")
    if width >= J:
        raise ConfigError(f"width must be < J ({J}), got {width}")

    half = width // 2
    if overlap:
        mids = np.arange(J)
        bins = []
        for m in range(J):
            if cyclic:
                idx = np.sort((m + np.arange(-half, half + 1)) % J)
            else:
                idx = np.arange(max(0, m - half), min(J - 1, m + half) + 1)
            bins.append(idx)
    else:
        step = width + 1
        n_full = J // step
        mids_list = [b * step + half for b in range(n_full)]
        bins = [np.arange(b * step, (b + 1) * step) for b in range(n_full)]
        rem = J - n_full * step
        if rem > 0:
            start = n_full * step
            bins.append(np.arange(start, J))
            mids_list.append(start + (rem - 1) // 2)
        mids = np.asarray(mids_list)

    return BinSpec(
        midpoint_indices=mids,
        bins=tuple(bins),
        width=width,
        overlap=overlap,
        cyclic=cyclic,
        J=J,
    )

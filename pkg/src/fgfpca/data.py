"""Core data containers and long-format CSV ingestion.

A FunctionalDataset holds densely observed curves Z_i(s_j) on one shared
grid; DailyProfileSet holds repeated daily curves per subject, which
``binarize_profiles`` collapses into a single 0/1 profile per subject.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import DataError
from .families import Family, get_family


@dataclass(frozen=True)
class FunctionalDataset:
    """N curves observed at the same J grid points (dense regular design).

    ``grid`` is strictly increasing; computations that need a spline
    domain use ``grid_normalized``, the affine map of the grid onto [0,1].
    ``cyclic`` declares that the domain wraps (last point adjacent to
    the first).
    """

    subject_ids: tuple
    grid: np.ndarray
    values: np.ndarray
    family: Family
    cyclic: bool = False

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "subject_ids", tuple(self.subject_ids))
        object.__setattr__(self, "family", get_family(self.family))
        if grid.ndim != 1 or grid.size < 2:
            raise DataError("grid must be one-dimensional with at least 2 points")
        if np.any(np.diff(grid) <= 0):
            raise DataError("grid must be strictly increasing")
        if values.shape != (len(self.subject_ids), grid.size):
            raise DataError(
                f"values shape {values.shape} does not match "
                f"{len(self.subject_ids)} subjects x {grid.size} grid points"
            )
        if len(set(self.subject_ids)) != len(self.subject_ids):
            raise DataError("subject ids must be unique")
        self.family.check_support(values)

    @property
    def N(self) -> int:
        return self.values.shape[0]

    @property
    def J(self) -> int:
        return self.values.shape[1]

    @property
    def grid_normalized(self) -> np.ndarray:
        g = self.grid
        return (g - g[0]) / (g[-1] - g[0])

    def subset(self, rows) -> "FunctionalDataset":
        """Dataset restricted to the given subject row indices (order kept)."""
        rows = np.asarray(rows, dtype=int)
        return FunctionalDataset(
            subject_ids=tuple(self.subject_ids[r] for r in rows),
            grid=self.grid,
            values=self.values[rows],
            family=self.family,
            cyclic=self.cyclic,
        )


@dataclass(frozen=True)
class DailyProfileSet:
    """Per-subject stacks of repeated daily curves on a shared grid."""

    subject_ids: tuple
    grid: np.ndarray
    days: tuple = field(default_factory=tuple)  # one (H_i, J) array per subject

    def __post_init__(self):
        object.__setattr__(self, "grid", np.asarray(self.grid, dtype=float))
        object.__setattr__(self, "subject_ids", tuple(self.subject_ids))
        object.__setattr__(self, "days", tuple(np.asarray(d, dtype=float) for d in self.days))
        if len(self.days) != len(self.subject_ids):
            raise DataError("one day-stack required per subject")
        for sid, d in zip(self.subject_ids, self.days):
            if d.ndim != 2 or d.shape[0] < 1:
                raise DataError(f"subject {sid!r} has an empty day stack")
            if d.shape[1] != self.grid.size:
                raise DataError(f"subject {sid!r}: day length does not match grid")


def load_long_csv(path, family, cyclic=False, grid=None) -> FunctionalDataset:
    """Read a long CSV with header ``id,s_index,value`` into a dataset.

    s_index must run over 1..J and every (id, s_index) pair must appear
    exactly once. Subjects keep first-appearance order. ``grid`` maps
    s_index to domain coordinates; defaults to 1..J.
    """
    family = get_family(family)
    # round_trip parsing: %.17g output must reload bit for bit
    df = pd.read_csv(path, float_precision="round_trip")
    required = {"id", "s_index", "value"}
    if not required.issubset(df.columns):
        raise DataError(f"CSV must have columns id,s_index,value; found {list(df.columns)}")

    s_vals = np.unique(df["s_index"].to_numpy())
    J = s_vals.size
    if not np.array_equal(s_vals, np.arange(1, J + 1)):
        raise DataError("s_index values must be exactly 1..J")

    ids = list(dict.fromkeys(df["id"].tolist()))
    id_pos = {sid: i for i, sid in enumerate(ids)}
    N = len(ids)

    values = np.full((N, J), np.nan)
    rows = df["id"].map(id_pos).to_numpy()
    cols = df["s_index"].to_numpy(dtype=int) - 1
    flat = rows * J + cols
    if np.unique(flat).size != flat.size:
        dup = np.sort(flat)
        dup = dup[:-1][np.diff(dup) == 0][0]
        raise DataError(f"duplicate (id, s_index) pair: ({ids[dup // J]!r}, {dup % J + 1})")
    vals = df["value"].to_numpy(dtype=float)
    nonfinite = ~np.isfinite(vals)
    if nonfinite.any():
        raise DataError(f"non-finite value at CSV row {int(np.argmax(nonfinite)) + 2}")
    values[rows, cols] = vals

    missing = np.isnan(values)
    if missing.any():
        i, j = np.argwhere(missing)[0]
        raise DataError(f"dense design violated: missing cell (id={ids[i]!r}, s_index={j + 1})")

    try:
        family.check_support(values)
    except DataError as e:
        # report the offending CSV row rather than a matrix index
        bad = None
        for r, (i, j) in enumerate(zip(rows, cols)):
            v = vals[r]
            try:
                family.check_support(np.array([v]))
            except DataError:
                bad = r
                break
        if bad is not None:
            raise DataError(f"value outside {family.name} support at CSV row {bad + 2}") from e
        raise

    if grid is None:
        grid = np.arange(1, J + 1, dtype=float)
    return FunctionalDataset(tuple(ids), grid, values, family, cyclic=cyclic)


def write_long_csv(data: FunctionalDataset, path) -> None:
    """Inverse of load_long_csv; values round-trip bit for bit."""
    N, J = data.values.shape
    df = pd.DataFrame(
        {
            "id": np.repeat(np.asarray(data.subject_ids, dtype=object), J),
            "s_index": np.tile(np.arange(1, J + 1), N),
            "value": np.float64(data.values).ravel(),
        }
    )
    df.to_csv(path, index=False, float_format="%.17g")


def load_daily_csv(path) -> DailyProfileSet:
    """Read daily profiles from a long CSV with header ``id,day,s_index,value``."""
    df = pd.read_csv(path, float_precision="round_trip")
    required = {"id", "day", "s_index", "value"}
    if not required.issubset(df.columns):
        raise DataError(f"CSV must have columns id,day,s_index,value; found {list(df.columns)}")
    s_vals = np.unique(df["s_index"].to_numpy())
    J = s_vals.size
    if not np.array_equal(s_vals, np.arange(1, J + 1)):
        raise DataError("s_index values must be exactly 1..J")
    ids = list(dict.fromkeys(df["id"].tolist()))
    stacks = []
    for sid in ids:
        sub = df[df["id"] == sid]
        days = sorted(sub["day"].unique())
        stack = np.full((len(days), J), np.nan)
        for h, d in enumerate(days):
            rows = sub[sub["day"] == d]
            stack[h, rows["s_index"].to_numpy(dtype=int) - 1] = rows["value"].to_numpy(dtype=float)
        if np.isnan(stack).any():
            raise DataError(f"subject {sid!r}: incomplete day in daily CSV")
        stacks.append(stack)
    return DailyProfileSet(tuple(ids), np.arange(1, J + 1, dtype=float), tuple(stacks))


def binarize_profiles(profiles: DailyProfileSet, threshold: float = 10.558) -> FunctionalDataset:
    """Collapse daily curves to a single binary profile per subject.

    Each day is thresholded (1 if value >= threshold) and the subject's
    profile takes the upper median across days: with H days, sorted
    descending, entry floor(H/2)+1 for even H and (H+1)/2 for odd H.
    Equivalently Z=1 iff at least floor(H/2)+1 days are at or above the
    threshold.
    """
    if not np.isfinite(threshold):
        raise DataError("threshold must be finite")
    N = len(profiles.subject_ids)
    J = profiles.grid.size
    values = np.zeros((N, J))
    for i, stack in enumerate(profiles.days):
        H = stack.shape[0]
        active = (stack >= threshold).sum(axis=0)
        values[i] = (active >= H // 2 + 1).astype(float)
    return FunctionalDataset(
        profiles.subject_ids, profiles.grid, values, get_family("binomial"), cyclic=True
    )

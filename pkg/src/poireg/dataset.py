"""Core data model: equidistant grids, functional datasets, centering,
standardization, and CSV ingestion.

All container types are frozen dataclasses holding read-only numpy
arrays, so instances are safe to share across threads; the operations
below are pure functions.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateResponse, ParseError, ShapeMismatch

GRID_TOL = 1e-12
MIN_GRID_POINTS = 5


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Grid:
    """Equidistant sampling grid t_j = (j-1)/(p-1) on [0, 1]."""

    p: int
    points: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "points", _readonly(self.points))
        if self.p < MIN_GRID_POINTS:
            raise ValueError(f"grid needs at least {MIN_GRID_POINTS} points, got {self.p}")
        if self.points.shape != (self.p,):
            raise ValueError("points length does not match p")
        t = self.points
        if abs(t[0]) > GRID_TOL or abs(t[-1] - 1.0) > GRID_TOL:
            raise ValueError("grid must start at 0 and end at 1")
        steps = np.diff(t)
        if np.any(steps <= 0):
            raise ValueError("grid points must be strictly increasing")
        h = 1.0 / (self.p - 1)
        if np.max(np.abs(steps - h)) > GRID_TOL * max(1.0, h):
            raise ValueError("grid is not equidistant")

    @classmethod
    def uniform(cls, p: int) -> "Grid":
        return cls(p=p, points=np.linspace(0.0, 1.0, p))

    @property
    def spacing(self) -> float:
        return 1.0 / (self.p - 1)


@dataclass(frozen=True)
class FunctionalDataset:
    """Discretized trajectories X (n x p) with scalar responses Y (n)."""

    grid: Grid
    X: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "X", _readonly(self.X))
        object.__setattr__(self, "Y", _readonly(self.Y))
        if self.X.ndim != 2 or self.Y.ndim != 1:
            raise ValueError("X must be a matrix and Y a vector")
        n, p = self.X.shape
        if n < 2:
            raise ValueError("need at least two observations")
        if self.Y.shape[0] != n:
            raise ShapeMismatch(f"X has {n} rows but Y has {self.Y.shape[0]}")
        if p != self.grid.p:
            raise ShapeMismatch(f"X has {p} columns but grid has {self.grid.p} points")
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.Y))):
            raise ValueError("X and Y must be finite")

    @property
    def n(self) -> int:
        return self.X.shape[0]


@dataclass(frozen=True)
class CenteredDataset:
    """Column-centered version of a dataset, with the removed means."""

    base: FunctionalDataset
    Yc: np.ndarray
    Xc: np.ndarray
    y_mean: float
    x_means: np.ndarray

    def __post_init__(self):
        for name in ("Yc", "Xc", "x_means"):
            object.__setattr__(self, name, _readonly(getattr(self, name)))

    @property
    def grid(self) -> Grid:
        return self.base.grid

    @property
    def n(self) -> int:
        return self.base.n


@dataclass(frozen=True)
class StandardizedDataset:
    """Unit-variance version of a centered dataset.

    Columns whose standard deviation falls below ``sd_floor`` are set
    identically to zero: they carry no sample information (e.g. a
    process pinned at t=0) and dividing by ~0 would only amplify noise.
    """

    centered: CenteredDataset
    Yst: np.ndarray
    Xst: np.ndarray
    y_sd: float
    x_sds: np.ndarray
    sd_floor: float

    def __post_init__(self):
        for name in ("Yst", "Xst", "x_sds"):
            object.__setattr__(self, name, _readonly(getattr(self, name)))


def center(ds: FunctionalDataset) -> CenteredDataset:
    """Remove the sample mean from Y and from every column of X."""
    y_mean = float(np.mean(ds.Y))
    x_means = np.mean(ds.X, axis=0)
    return CenteredDataset(
        base=ds,
        Yc=ds.Y - y_mean,
        Xc=ds.X - x_means,
        y_mean=y_mean,
        x_means=x_means,
    )


def default_sd_floor(Xc: np.ndarray) -> float:
    """Degeneracy threshold scaled to the magnitude of the data."""
    return 1e-10 * max(1.0, float(np.max(np.abs(Xc))) if Xc.size else 1.0)


def sd(v: np.ndarray) -> float:
    """Standard deviation with the 1/n divisor."""
    return float(np.sqrt(np.mean((v - np.mean(v)) ** 2)))


def standardize(cds: CenteredDataset, sd_floor: float | None = None) -> StandardizedDataset:
    """Scale Yc and each column of Xc to unit standard deviation.

    Uses the 1/n divisor throughout.  Columns with sd below the floor
    become identically zero.  Raises :class:`DegenerateResponse` when
    the response itself is degenerate.
    """
    if sd_floor is None:
        sd_floor = default_sd_floor(cds.Xc)
    if sd_floor <= 0:
        raise ValueError("sd_floor must be positive")
    y_sd = sd(cds.Yc)
    if y_sd < sd_floor:
        raise DegenerateResponse(f"sd(Y)={y_sd:.3e} is below the floor {sd_floor:.3e}")
    x_sds = np.sqrt(np.mean(cds.Xc**2, axis=0))
    live = x_sds >= sd_floor
    Xst = np.zeros_like(cds.Xc)
    Xst[:, live] = cds.Xc[:, live] / x_sds[live]
    return StandardizedDataset(
        centered=cds,
        Yst=cds.Yc / y_sd,
        Xst=Xst,
        y_sd=y_sd,
        x_sds=x_sds,
        sd_floor=float(sd_floor),
    )


def _read_numeric_rows(path, header: bool) -> list[list[float]]:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for lineno, raw in enumerate(reader, start=1):
            if header and lineno == 1:
                continue
            if not raw or (len(raw) == 1 and raw[0].strip() == ""):
                continue
            try:
                rows.append([float(cell) for cell in raw])
            except ValueError as exc:
                raise ParseError(f"{path}: non-numeric cell in row {lineno}: {exc}") from None
    if not rows:
        raise ParseError(f"{path}: no data rows")
    width = len(rows[0])
    for i, row in enumerate(rows):
        if len(row) != width:
            raise ParseError(
                f"{path}: ragged row {i + 1 + int(header)} has {len(row)} cells, expected {width}"
            )
    return rows


def load_csv(path_x, path_y, header: bool = False) -> FunctionalDataset:
    """Read trajectories (one row per curve) and responses (one value
    per line) and infer the equidistant grid t_j = (j-1)/(p-1)."""
    x_rows = _read_numeric_rows(path_x, header)
    y_rows = _read_numeric_rows(path_y, header)
    if any(len(r) != 1 for r in y_rows):
        raise ParseError(f"{path_y}: expected exactly one value per row")
    if len(x_rows) != len(y_rows):
        raise ShapeMismatch(
            f"{path_x} has {len(x_rows)} rows but {path_y} has {len(y_rows)}"
        )
    X = np.asarray(x_rows, dtype=np.float64)
    Y = np.asarray([r[0] for r in y_rows], dtype=np.float64)
    return FunctionalDataset(grid=Grid.uniform(X.shape[1]), X=X, Y=Y)


def write_csv(ds: FunctionalDataset, path_x, path_y) -> None:
    """Write a dataset back to the two-file CSV layout read by
    :func:`load_csv` (full double precision, no header)."""
    np.savetxt(path_x, ds.X, delimiter=",", fmt="%.17g")
    np.savetxt(path_y, ds.Y[:, None], delimiter=",", fmt="%.17g")

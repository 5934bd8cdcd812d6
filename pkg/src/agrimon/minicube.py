"""In-memory raster cube, parcel rasterization, buffers and zonal statistics.

Geometry conventions: ``origin_x, origin_y`` is the upper-left corner of the
grid, rows grow southwards, and pixel ``(row, col)`` has its center at
``(origin_x + (col + 0.5) * pixel_size, origin_y - (row + 0.5) * pixel_size)``.
Missing values are stored as NaN and reported as null.
"""
from __future__ import annotations

from collections.abc import Mapping
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import pandas as pd
from scipy import ndimage
from shapely.geometry import Polygon, shape

from . import kernels
from .errors import GridMismatch, InvalidGeometry


@dataclass(frozen=True)
class GridSpec:
    origin_x: float
    origin_y: float
    pixel_size: float
    width: int
    height: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("grid width and height must be >= 1")
        if not self.pixel_size > 0:
            raise ValueError("pixel_size must be > 0")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    def pixel_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Return (x, y) center coordinate grids, each of shape (height, width)."""
        cols = self.origin_x + (np.arange(self.width) + 0.5) * self.pixel_size
        rows = self.origin_y - (np.arange(self.height) + 0.5) * self.pixel_size
        return np.meshgrid(cols, rows)


@dataclass(frozen=True)
class Cube:
    """Dense time x variable x row x col array with labelled axes."""

    grid: GridSpec
    dates: tuple
    variables: tuple
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "variables", tuple(self.variables))
        vals = np.ascontiguousarray(self.values, dtype=np.float64)
        expected = (len(self.dates), len(self.variables), self.grid.height, self.grid.width)
        if vals.shape != expected:
            raise ValueError(f"values shape {vals.shape} != {expected}")
        if any(b <= a for a, b in zip(self.dates, self.dates[1:])):
            raise ValueError("cube dates must be strictly increasing")
        if len(set(self.variables)) != len(self.variables):
            raise ValueError("duplicate variable names")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def slice(self, date, variable) -> np.ndarray:
        return self.values[self.dates.index(date), self.variables.index(variable)]

    def masked(self, mask: np.ndarray) -> Cube:
        """Copy of the cube with every pixel where ``mask`` is true set to null.

        ``mask`` is either (height, width), applied to all slices, or
        (time, height, width) for per-date cloud masks.
        """
        vals = self.values.copy()
        mask = np.asarray(mask, dtype=bool)
        if mask.shape == self.grid.shape:
            vals[:, :, mask] = np.nan
        elif mask.shape == (len(self.dates),) + self.grid.shape:
            for t in range(len(self.dates)):
                vals[t][:, mask[t]] = np.nan
        else:
            raise ValueError(f"mask shape {mask.shape} does not fit the cube")
        return Cube(self.grid, self.dates, self.variables, vals)


@dataclass(frozen=True)
class Parcel:
    id: int
    polygon: Polygon
    crop_code: Any = None
    farmer_id: Any = None
    area_ha: float | None = None
    properties: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        poly = self.polygon
        if not isinstance(poly, Polygon):
            try:
                poly = Polygon(poly) if not hasattr(poly, "geom_type") else poly
            except (ValueError, TypeError) as exc:
                raise InvalidGeometry(f"parcel {self.id}: {exc}") from exc
        if poly.geom_type != "Polygon" or poly.is_empty:
            raise InvalidGeometry(f"parcel {self.id}: expected a non-empty polygon")
        if not poly.is_valid:
            raise InvalidGeometry(f"parcel {self.id}: polygon is not simple/valid")
        object.__setattr__(self, "polygon", poly)
        if self.area_ha is None:
            object.__setattr__(self, "area_ha", poly.area / 10_000.0)


class ParcelSet(Mapping):
    """Immutable mapping parcel id -> :class:`Parcel`."""

    def __init__(self, parcels=()):
        items = {}
        for p in parcels:
            if p.id in items:
                raise ValueError(f"duplicate parcel id {p.id}")
            if p.id < 0:
                raise ValueError("parcel ids must be non-negative")
            items[p.id] = p
        self._items = dict(sorted(items.items()))

    def __getitem__(self, key):
        return self._items[key]

    def __iter__(self):
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    @classmethod
    def from_geojson(cls, data: dict) -> ParcelSet:
        parcels = []
        for feat in data.get("features", []):
            props = dict(feat.get("properties") or {})
            try:
                geom = shape(feat["geometry"])
            except Exception as exc:  # shapely raises several types
                raise InvalidGeometry(f"feature {props.get('id')}: {exc}") from exc
            parcels.append(
                Parcel(
                    id=int(props.pop("id")),
                    polygon=geom,
                    crop_code=props.pop("crop_code", None),
                    farmer_id=props.pop("farmer_id", None),
                    area_ha=props.pop("area_ha", None),
                    properties=props,
                )
            )
        return cls(parcels)


@dataclass(frozen=True)
class ParcelIdRaster:
    grid: GridSpec
    ids: np.ndarray = field(repr=False)

    def __post_init__(self):
        ids = np.ascontiguousarray(self.ids, dtype=np.int64)
        if ids.shape != self.grid.shape:
            raise ValueError(f"id raster shape {ids.shape} != grid {self.grid.shape}")
        if (ids < -1).any():
            raise ValueError("id raster values must be >= -1")
        ids.setflags(write=False)
        object.__setattr__(self, "ids", ids)

    def parcel_ids(self) -> np.ndarray:
        u = np.unique(self.ids)
        return u[u >= 0]


def points_in_polygon(x: np.ndarray, y: np.ndarray, polygon: Polygon) -> np.ndarray:
    """Even-odd ray casting over the exterior and all holes.

    Points lying exactly on a ring are outside (strict interior).
    """
    inside = np.zeros(np.shape(x), dtype=bool)
    on_edge = np.zeros(np.shape(x), dtype=bool)
    for ring in [polygon.exterior, *polygon.interiors]:
        pts = np.asarray(ring.coords)
        for (ax, ay), (bx, by) in zip(pts[:-1], pts[1:]):
            cross = (bx - ax) * (y - ay) - (by - ay) * (x - ax)
            on_edge |= (
                (cross == 0)
                & (x >= min(ax, bx)) & (x <= max(ax, bx))
                & (y >= min(ay, by)) & (y <= max(ay, by))
            )
            if ay == by:
                continue
            crosses = (ay > y) != (by > y)
            xint = ax + (y - ay) * (bx - ax) / (by - ay)
            inside ^= crosses & (x < xint)
    return inside & ~on_edge


def rasterize_parcels(parcels: Mapping, grid: GridSpec) -> ParcelIdRaster:
    """Burn parcel ids into the grid by pixel-center membership.

    Where polygons overlap the lowest parcel id wins.
    """
    out = np.full(grid.shape, -1, dtype=np.int64)
    cx, cy = grid.pixel_centers()
    ps = grid.pixel_size
    for pid in sorted(parcels):
        poly = parcels[pid].polygon
        minx, miny, maxx, maxy = poly.bounds
        c0 = max(int(np.floor((minx - grid.origin_x) / ps - 0.5)), 0)
        c1 = min(int(np.ceil((maxx - grid.origin_x) / ps - 0.5)) + 1, grid.width)
        r0 = max(int(np.floor((grid.origin_y - maxy) / ps - 0.5)), 0)
        r1 = min(int(np.ceil((grid.origin_y - miny) / ps - 0.5)) + 1, grid.height)
        if c0 >= c1 or r0 >= r1:
            continue
        win = (slice(r0, r1), slice(c0, c1))
        hit = points_in_polygon(cx[win], cy[win], poly)
        free = out[win] == -1
        out[win][hit & free] = pid
    return ParcelIdRaster(grid, out)


def _compact(ids: np.ndarray, parcel_ids=None):
    present = np.unique(ids)
    present = present[present >= 0]
    if parcel_ids is None:
        labels = present
    else:
        labels = np.unique(np.concatenate([present, np.asarray(list(parcel_ids), dtype=np.int64)]))
    lookup = np.full(int(max(labels.max(initial=-1), ids.max(initial=-1))) + 2, -1, dtype=np.int64)
    lookup[labels] = np.arange(labels.size)
    flat = ids.ravel()
    compact = np.where(flat >= 0, lookup[np.maximum(flat, 0)], -1)
    return labels, np.ascontiguousarray(compact, dtype=np.int64)


def _serial_reduce(values: np.ndarray, compact: np.ndarray, n_ids: int, reducer: int) -> np.ndarray:
    """Per-parcel traversal; the reference the one-pass kernels are checked against."""
    out = np.full((values.shape[0], n_ids), np.nan)
    for z in range(n_ids):
        sel = compact == z
        for s in range(values.shape[0]):
            v = values[s, sel]
            v = v[~np.isnan(v)]
            if v.size == 0:
                continue
            if reducer == kernels.MEAN:
                out[s, z] = np.cumsum(v)[-1] / float(v.size)
            elif reducer == kernels.MIN:
                out[s, z] = v.min()
            elif reducer == kernels.MAX:
                out[s, z] = v.max()
            else:
                out[s, z] = float(v.size)
    return out


def zonal_stats(
    cube: Cube,
    ids: ParcelIdRaster,
    reducer: str = "mean",
    mode: str = "groupby",
    *,
    parcel_ids=None,
    workers: int = 1,
    backend: str | None = None,
) -> pd.DataFrame:
    """Reduce every (date, variable) slice over each parcel's non-null pixels.

    Parameters
    ----------
    reducer : {'mean', 'min', 'max', 'count'}
    mode : {'groupby', 'serial'}
        ``groupby`` makes one pass over each slice; ``serial`` loops over
        parcels and is kept as a slow reference. Both give identical output.
    parcel_ids : iterable of int, optional
        Extra parcel ids to report (as null) even when absent from the raster.
    workers : int
        Number of threads the groupby pass may spread slices over.

    Returns
    -------
    DataFrame with columns ``parcel_id, date, variable, value`` sorted by
    parcel, date, variable; ``value`` is NaN when a parcel has no valid pixel.
    """
    if cube.grid != ids.grid:
        raise GridMismatch(f"cube grid {cube.grid} != id raster grid {ids.grid}")
    try:
        code = kernels.REDUCERS[reducer]
    except KeyError:
        raise ValueError(f"unknown reducer {reducer!r}") from None
    labels, compact = _compact(ids.ids, parcel_ids)
    n_t, n_v = len(cube.dates), len(cube.variables)
    flat = cube.values.reshape(n_t * n_v, -1)
    n_ids = labels.size

    if mode == "groupby":
        kern = kernels.get_backend(backend)
        if workers > 1 and flat.shape[0] > 1:
            chunks = np.array_split(np.arange(flat.shape[0]), min(workers, flat.shape[0]))
            with ThreadPoolExecutor(max_workers=workers) as pool:
                parts = list(
                    pool.map(
                        lambda idx: kern.zonal_reduce(np.ascontiguousarray(flat[idx]), compact, n_ids, code),
                        chunks,
                    )
                )
            res = np.vstack(parts)
        else:
            res = kern.zonal_reduce(flat, compact, n_ids, code)
    elif mode == "serial":
        res = _serial_reduce(flat, compact, n_ids, code)
    else:
        raise ValueError(f"unknown mode {mode!r}")

    # res is (t*v, parcel); emit rows ordered parcel, date, variable
    vals = res.reshape(n_t, n_v, n_ids).transpose(2, 0, 1).ravel()
    dates = list(cube.dates)
    variables = list(cube.variables)
    return pd.DataFrame(
        {
            "parcel_id": np.repeat(labels, n_t * n_v),
            "date": np.tile(np.repeat(np.array(dates, dtype=object), n_v), n_ids),
            "variable": np.tile(np.array(variables, dtype=object), n_ids * n_t),
            "value": vals,
        }
    )


def inward_buffer(ids: ParcelIdRaster, d: int) -> ParcelIdRaster:
    """Erode every parcel by a (2d+1)x(2d+1) square; eroded pixels become -1.

    Pixels beyond the raster edge count as foreign, so parcels touching the
    border erode there too.
    """
    if d < 0:
        raise ValueError("buffer distance must be >= 0")
    if d == 0:
        return ids
    size = 2 * d + 1
    lo = ndimage.minimum_filter(ids.ids, size=size, mode="constant", cval=-1)
    hi = ndimage.maximum_filter(ids.ids, size=size, mode="constant", cval=-1)
    keep = (lo == hi) & (ids.ids >= 0)
    return ParcelIdRaster(ids.grid, np.where(keep, ids.ids, -1))


def outward_cloud_buffer(mask: np.ndarray, d: int) -> np.ndarray:
    """Dilate a cloud/shadow mask by a (2d+1)x(2d+1) square."""
    if d < 0:
        raise ValueError("buffer distance must be >= 0")
    mask = np.asarray(mask, dtype=bool)
    if d == 0:
        return mask.copy()
    return ndimage.maximum_filter(mask, size=2 * d + 1, mode="constant", cval=False)

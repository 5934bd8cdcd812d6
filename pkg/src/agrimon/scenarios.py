"""Small hand-built compliance cases used as fixtures and CLI demos.

* ``dan``: maize declared, barley predicted with a wide score gap in a
  single early-June run.
* ``bob``: one farmer with 27.4066 ha, of which 27.1058 ha soft wheat and
  0.3008 ha rapeseed over three parcels.
* ``lucy``: a parcel about 3 m from a stream, slope 15 degrees, aspect 251
  degrees, proximity line bearing 267 degrees.
"""
from __future__ import annotations

import math

import numpy as np
from shapely import affinity
from shapely.geometry import LineString, Polygon

from .cap import DEFAULT_TAXONOMY, ClassificationRun


def dan_run() -> ClassificationRun:
    codes = [c.code for c in DEFAULT_TAXONOMY]
    scores = np.full(len(codes), 0.20 / (len(codes) - 1))
    scores[codes.index("barley")] = 0.80
    run = ClassificationRun(run_day=155.0)
    run.add("dan-1", "barley", "maize", scores)
    return run


def bob_holdings() -> list[tuple]:
    # two soft wheat fields and one rapeseed field
    return [
        ("bob", "soft_wheat", 15.0),
        ("bob", "soft_wheat", 12.1058),
        ("bob", "rapeseed", 0.3008),
    ]


def lucy_scene(distance_m: float = 3.0, line_bearing: float = 267.0, size_m: float = 80.0):
    """Square parcel with one edge facing a straight stream ``distance_m`` away.

    The stream runs perpendicular to ``line_bearing`` so the shortest line
    from the parcel to the water points along that bearing.
    Returns ``(polygon, slope, aspect, waters)``.
    """
    b = math.radians(line_bearing)
    ux, uy = math.sin(b), math.cos(b)  # unit vector towards the water
    # axis-aligned square with its west edge on x = 0, rotated so that edge faces the water
    sq = Polygon([(0, -size_m / 2), (size_m, -size_m / 2), (size_m, size_m / 2), (0, size_m / 2)])
    rot = 270.0 - line_bearing  # compass rotation from west (270) to the target bearing
    parcel = affinity.rotate(sq, rot, origin=(0, 0))
    near = (distance_m * ux, distance_m * uy)
    px, py = -uy, ux  # along the stream
    stream = LineString([(near[0] - 500 * px, near[1] - 500 * py), (near[0] + 500 * px, near[1] + 500 * py)])
    return parcel, 15.0, 251.0, [stream]

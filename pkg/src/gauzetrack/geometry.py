"""Axis-aligned box geometry for synthetic tray layouts."""

from __future__ import annotations

import random
from typing import List, Sequence, Tuple

Box = Tuple[float, float, float, float]  # (x_min, y_min, x_max, y_max)


class PackingInfeasible(RuntimeError):
    pass


def area(b: Box) -> float:
    return max(0.0, b[2] - b[0]) * max(0.0, b[3] - b[1])


def intersection(a: Box, b: Box) -> float:
    x0 = max(a[0], b[0])
    y0 = max(a[1], b[1])
    x1 = min(a[2], b[2])
    y1 = min(a[3], b[3])
    if x1 <= x0 or y1 <= y0:
        return 0.0
    return (x1 - x0) * (y1 - y0)


def iou(a: Box, b: Box) -> float:
    """Intersection over union of two boxes, in [0, 1]."""
    inter = intersection(a, b)
    if inter == 0.0:
        return 0.0
    return inter / (area(a) + area(b) - inter)


def union_box(a: Box, b: Box) -> Box:
    return (min(a[0], b[0]), min(a[1], b[1]), max(a[2], b[2]), max(a[3], b[3]))


def overlap_fraction(inner: Box, outer: Box) -> float:
    """Fraction of `inner`'s area covered by `outer`."""
    a = area(inner)
    return intersection(inner, outer) / a if a > 0 else 0.0


def layout_gauzes(
    n: int,
    region: Box,
    max_pairwise_iou: float,
    rng: random.Random,
    box_w: float = 0.12,
    box_h: float = 0.12,
    existing: Sequence[Box] = (),
    tries_per_box: int = 200,
) -> List[Box]:
    """Place n boxes inside `region` with pairwise IoU <= max_pairwise_iou.

    Rejection sampling, deterministic for a given rng state; boxes also keep
    the IoU bound against `existing` placements. Raises PackingInfeasible
    when the retry budget runs out.
    """
    placed: List[Box] = []
    anchors = list(existing)
    rx0, ry0, rx1, ry1 = region
    w = min(box_w, rx1 - rx0)
    h = min(box_h, ry1 - ry0)
    for _ in range(n):
        for attempt in range(tries_per_box):
            x0 = rng.uniform(rx0, rx1 - w)
            y0 = rng.uniform(ry0, ry1 - h)
            candidate = (x0, y0, x0 + w, y0 + h)
            if all(iou(candidate, other) <= max_pairwise_iou for other in anchors):
                break
        else:
            raise PackingInfeasible(
                f"could not place box {len(placed) + 1} of {n} after {tries_per_box} tries"
            )
        placed.append(candidate)
        anchors.append(candidate)
    return placed

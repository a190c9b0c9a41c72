"""Adaptive viewpoint scheduling: walk the predefined sequence and insert
interpolated views wherever too little of the candidate view is textured.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterator

from textailor.geometry.camera import Viewpoint
from textailor.regions import Label, RegionMasks

__all__ = ["SchedulerConfig", "ScheduledView", "coverage_ratio",
           "interpolate_view", "view_sequence"]


@dataclass(frozen=True)
class SchedulerConfig:
    """Insertion threshold beta, interpolation gamma, and the view list."""

    predefined: tuple
    beta: float = 0.5
    gamma: float = 0.5
    max_insert_depth: int = 3
    fixed_prefix: int = 1  # leading views yielded without a coverage check

    def __post_init__(self):
        if not 0.0 < self.beta < 1.0:
            raise ValueError("beta must lie in (0, 1)")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if not self.predefined:
            raise ValueError("predefined view list must be non-empty")
        object.__setattr__(self, "predefined", tuple(self.predefined))


@dataclass(frozen=True)
class ScheduledView:
    """One yielded view with its coverage ratio at yield time."""

    viewpoint: Viewpoint
    inserted: bool
    p: float
    depth_limited: bool = False


def coverage_ratio(masks: RegionMasks) -> float:
    """Fraction of paintable pixels already textured.

    Textured means KEEP or UPDATE (an UPDATE pixel is textured, merely due a
    better angle); paintable adds NEW.  Defined as 1 when nothing at the view
    is paintable, so empty views never trigger insertion.
    """
    counts = masks.counts()
    textured = counts["keep"] + counts["update"]
    paintable = textured + counts["new"]
    if paintable == 0:
        return 1.0
    return textured / paintable


def interpolate_view(prev: Viewpoint, cur: Viewpoint, gamma: float) -> Viewpoint:
    """Blend two viewpoints: azimuth along the shorter arc, elevation
    linearly, radius held fixed (both inputs must share it)."""
    if abs(prev.radius - cur.radius) > 1e-9:
        raise ValueError("interpolated views require equal radii")
    diff = (cur.azimuth - prev.azimuth + 180.0) % 360.0 - 180.0
    azimuth = (prev.azimuth + gamma * diff) % 360.0
    elevation = prev.elevation + gamma * (cur.elevation - prev.elevation)
    return Viewpoint(azimuth=azimuth, elevation=elevation, radius=prev.radius)


def view_sequence(masks_fn: Callable[[Viewpoint], RegionMasks],
                  cfg: SchedulerConfig,
                  log=None) -> Iterator[ScheduledView]:
    """Yield views in painting order, inserting midpoints where coverage is low.

    ``masks_fn`` must reflect the current atlas, so each yielded view is
    expected to be painted before the next one is requested (generators give
    exactly that).  Total yields are bounded by
    ``len(predefined) * (max_insert_depth + 1)``.
    """
    prev: Viewpoint | None = None
    for idx, target in enumerate(cfg.predefined):
        if idx < cfg.fixed_prefix:
            yield ScheduledView(target, inserted=False, p=float("nan"))
            prev = target
            continue

        budget = cfg.max_insert_depth
        pending: list[tuple[Viewpoint, bool]] = [(target, False)]
        while pending:
            view, inserted = pending[-1]
            p = coverage_ratio(masks_fn(view))
            if p >= cfg.beta:
                pending.pop()
                yield ScheduledView(view, inserted=inserted, p=p)
                prev = view
            elif budget > 0:
                budget -= 1
                pending.append((interpolate_view(prev, view, cfg.gamma), True))
            else:
                pending.pop()
                if log is not None:
                    log.warning("insertion depth exhausted at %s (p=%.3f < beta=%.3f)",
                                view, p, cfg.beta)
                yield ScheduledView(view, inserted=inserted, p=p, depth_limited=True)
                prev = view

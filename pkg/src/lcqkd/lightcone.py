"""Light-cone geometry: coordinates, access windows and the causal access bound.

Units are c = 1, so positions, times and light-cone coordinates share one unit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

LightConeCoord = float


def _finite(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value!r}")
    return value


def to_lightcone(x: float, t: float) -> LightConeCoord:
    """Light-cone coordinate tau = x - t of the event (x, t)."""
    return _finite("x", x) - _finite("t", t)


@dataclass(frozen=True)
class AccessWindow:
    """Closed interval [lo, hi] of light-cone coordinate available to an observer."""

    lo: float
    hi: float

    def __post_init__(self):
        lo = _finite("lo", self.lo)
        hi = _finite("hi", self.hi)
        if not lo < hi:
            raise ValueError(f"window needs lo < hi, got [{lo}, {hi}]")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def centered(cls, center: float, half_width: float) -> "AccessWindow":
        return cls(center - half_width, center + half_width)

    def length(self) -> float:
        return self.hi - self.lo

    @property
    def center(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def contains(self, tau: float) -> bool:
        return self.lo <= tau <= self.hi

    def shifted(self, d: float) -> "AccessWindow":
        return AccessWindow(self.lo + d, self.hi + d)


def min_access_duration(w: AccessWindow) -> float:
    """Shortest time in which an observer can gain access to all of ``w``.

    Nothing moves faster than light, so covering an interval of the cone takes at
    least its length. Adversary models use this as their mandatory delay.
    """
    return w.length()


def covers(w: AccessWindow, support: AccessWindow) -> bool:
    """True iff ``support`` lies inside ``w`` (closed-interval semantics)."""
    return w.lo <= support.lo and support.hi <= w.hi


@dataclass(frozen=True)
class Geometry:
    """Positions and scales of one protocol set-up.

    tau_A is Alice's position x_A, tau_ch the channel length x_B - x_A, tau_d the
    separation of the two halves and delta_tau the localization width of a half.
    """

    tau_A: float = 0.0
    tau_ch: float = 10.0
    tau_d: float = 20.0
    delta_tau: float = 1.0
    r_min: float = 20.0
    require_tau_d_gt_tau_ch: bool = True

    def __post_init__(self):
        for name in ("tau_A", "tau_ch", "tau_d", "delta_tau", "r_min"):
            object.__setattr__(self, name, _finite(name, getattr(self, name)))
        for name in ("tau_ch", "tau_d", "delta_tau", "r_min"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        # small relative slack so tau_d = 20 * delta_tau passes at r_min = 20
        if self.delta_tau > self.tau_d / self.r_min * (1 + 1e-12):
            raise ValueError(
                f"delta_tau={self.delta_tau} too wide: need delta_tau <= tau_d / r_min"
                f" = {self.tau_d / self.r_min}"
            )
        if self.require_tau_d_gt_tau_ch and not self.tau_d > self.tau_ch:
            raise ValueError("security configuration requires tau_d > tau_ch")

    @property
    def tau_B(self) -> float:
        return self.tau_A + self.tau_ch

    @property
    def nominal_transit(self) -> float:
        """Expected detection time minus send time for an undisturbed round."""
        return self.tau_d + self.tau_ch

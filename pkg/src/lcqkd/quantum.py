"""Single-photon states in H_tau (x) C^2 and the measurements made on them.

Polarization vectors are written in the {|+>, |->} basis. The detection channels
are |0> = (|+> + |->)/sqrt(2) and |1> = (|+> - |->)/sqrt(2).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels
from .lightcone import AccessWindow
from .wavepacket import Envelope, GridSpec, cell_fractions, on_grid, overlap, shift, union_grid

SQRT_HALF = 1.0 / math.sqrt(2.0)


@dataclass(frozen=True)
class PolarizationProjectors:
    P0: np.ndarray
    P1: np.ndarray

    @classmethod
    def standard(cls) -> "PolarizationProjectors":
        ket0 = np.array([1.0, 1.0], dtype=np.complex128) * SQRT_HALF
        ket1 = np.array([1.0, -1.0], dtype=np.complex128) * SQRT_HALF
        return cls(np.outer(ket0, ket0.conj()), np.outer(ket1, ket1.conj()))


PROJECTORS = PolarizationProjectors.standard()


@dataclass(frozen=True)
class FieldState:
    """w_plus * f_plus(tau)|tau>|+> + w_minus * f_minus(tau)|tau>|->."""

    env_plus: Envelope
    env_minus: Envelope
    weight_plus: complex
    weight_minus: complex

    def norm2(self) -> float:
        return (abs(self.weight_plus) ** 2 * self.env_plus.norm() ** 2
                + abs(self.weight_minus) ** 2 * self.env_minus.norm() ** 2)

    def grid(self) -> GridSpec:
        return union_grid(self.env_plus, self.env_minus)

    def components(self, grid: GridSpec | None = None):
        """(grid, a_plus, a_minus): weighted polarization amplitudes on a common grid."""
        if grid is None:
            grid = self.grid()
        a_plus = self.weight_plus * on_grid(self.env_plus, grid)
        a_minus = self.weight_minus * on_grid(self.env_minus, grid)
        return grid, a_plus, a_minus

    def with_envelopes(self, env_plus: Envelope, env_minus: Envelope) -> "FieldState":
        return FieldState(env_plus, env_minus, self.weight_plus, self.weight_minus)


def inner(a: FieldState, b: FieldState) -> complex:
    """<a|b>."""
    return (np.conj(a.weight_plus) * b.weight_plus * overlap(a.env_plus, b.env_plus)
            + np.conj(a.weight_minus) * b.weight_minus * overlap(a.env_minus, b.env_minus))


def state_vector(s: FieldState, grid: GridSpec | None = None) -> np.ndarray:
    """Dense vector with index 2*j + p (p = 0 for |+>, 1 for |->), scaled by sqrt(step)."""
    grid, a_plus, a_minus = s.components(grid)
    v = np.empty(2 * grid.count, dtype=np.complex128)
    v[0::2] = a_plus
    v[1::2] = a_minus
    return v * math.sqrt(grid.step)


def polarization_density(s: FieldState) -> np.ndarray:
    """2x2 polarization state left after tracing out the light-cone coordinate."""
    grid, a_plus, a_minus = s.components()
    amps = np.vstack([a_plus, a_minus])
    return amps @ amps.conj().T * grid.step


# ------------------------------------------------------------- unitaries

def prepare(bit: int, f: Envelope, tau_i: float, tau_A: float) -> FieldState:
    """Alice's state for ``bit``: f(tau - tau_i - tau_A) (|+> +/- |->)/sqrt(2).

    ``f`` is the public envelope template, centered at zero.
    """
    if bit not in (0, 1):
        raise ValueError("bit must be 0 or 1")
    env = shift(f, tau_i + tau_A)
    return FieldState(env, env, SQRT_HALF, SQRT_HALF if bit == 0 else -SQRT_HALF)


def delay_plus(s: FieldState, tau_d: float) -> FieldState:
    """Delay the |+> half by tau_d; the |-> half is untouched."""
    return s.with_envelopes(shift(s.env_plus, tau_d), s.env_minus)


def propagate(s: FieldState, tau_ch: float) -> FieldState:
    """Rigid translation of both halves along the cone."""
    return s.with_envelopes(shift(s.env_plus, tau_ch), shift(s.env_minus, tau_ch))


def merge(s: FieldState, tau_d: float) -> FieldState:
    """Bring the halves back together by delaying the |-> half by tau_d.

    Equivalent to advancing the |+> half by tau_d up to a global translation,
    which detection-time checks absorb since they only use relative intervals.
    """
    return s.with_envelopes(s.env_plus, shift(s.env_minus, tau_d))


# ----------------------------------------------------------- measurement

@dataclass(frozen=True)
class DetectionEvent:
    channel: int
    time: float

    def __post_init__(self):
        if self.channel not in (0, 1):
            raise ValueError("channel must be 0 or 1")


def channel_intensities(s: FieldState, grid: GridSpec | None = None):
    """(grid, I0, I1): per-cell Born densities |<i|a(tau_j)>|^2 of the two channels."""
    grid, a_plus, a_minus = s.components(grid)
    c0 = (a_plus + a_minus) * SQRT_HALF
    c1 = (a_plus - a_minus) * SQRT_HALF
    return grid, np.abs(c0) ** 2, np.abs(c1) ** 2


def channel_probabilities(s: FieldState) -> tuple[float, float]:
    grid, i0, i1 = channel_intensities(s)
    return float(np.sum(i0) * grid.step), float(np.sum(i1) * grid.step)


def window_detection_probability(s: FieldState, w: AccessWindow, channel: int) -> float:
    """Probability that the detector fires inside ``w`` in ``channel``."""
    grid, i0, i1 = channel_intensities(s)
    dens = i0 if channel == 0 else i1
    return float(np.sum(dens * cell_fractions(grid.taus, grid.step, w)) * grid.step)


def sample_detections(s: FieldState, rng: np.random.Generator, n: int):
    """Draw ``n`` detection (times, channels) in two stages.

    The time comes from the total intensity (cell by inverse CDF, then uniform
    inside the cell); the channel from the Born ratio within that cell.
    """
    grid, i0, i1 = channel_intensities(s)
    total = i0 + i1
    cdf = np.cumsum(total)
    cdf /= cdf[-1]
    u = rng.random((3, n))
    cells = _kernels.inverse_cdf(cdf, u[0])
    times = grid.tau_start + (cells + u[1] - 0.5) * grid.step
    with np.errstate(invalid="ignore", divide="ignore"):
        p1 = np.where(total > 0, i1 / np.where(total > 0, total, 1.0), 0.0)
    channels = (u[2] < p1[cells]).astype(np.int64)
    return times, channels


def measure(s: FieldState, rng: np.random.Generator) -> DetectionEvent:
    times, channels = sample_detections(s, rng, 1)
    return DetectionEvent(int(channels[0]), float(times[0]))


# ------------------------------------------------- restriction, discrimination

@dataclass(frozen=True, eq=False)
class RestrictedDensity:
    """Subnormalized density V V^dagger on (window cells) (x) C^2.

    Stored in factored form; ``matrix`` builds the dense 2n x 2n array.
    """

    factor: np.ndarray
    grid: GridSpec
    weight: float

    @property
    def dim(self) -> int:
        return 2 * self.grid.count

    @property
    def matrix(self) -> np.ndarray:
        return self.factor @ self.factor.conj().T

    def polarization(self) -> np.ndarray:
        v = self.factor.reshape(self.grid.count, 2, -1)
        return np.einsum("jpr,jqr->pq", v, v.conj())


def window_grid(s: FieldState, w: AccessWindow) -> GridSpec:
    """Cells of the state's lattice that overlap ``w``."""
    h = s.env_plus.step
    anchor = s.env_plus.tau_start
    i0 = math.ceil((w.lo - anchor) / h - 0.5)
    i1 = math.floor((w.hi - anchor) / h + 0.5)
    # drop cells touching w only at an edge
    if anchor + (i0 + 0.5) * h <= w.lo:
        i0 += 1
    if anchor + (i1 - 0.5) * h >= w.hi:
        i1 -= 1
    i1 = max(i1, i0)
    return GridSpec(anchor + i0 * h, h, i1 - i0 + 1)


def restrict(s: FieldState, w: AccessWindow) -> RestrictedDensity:
    """What an observer confined to ``w`` holds: the state cut down to its cells.

    Cells straddling a window edge enter with their overlap fraction, so the
    weight equals the detection probability inside ``w``.
    """
    grid = window_grid(s, w)
    _, a_plus, a_minus = s.components(grid)
    scale = np.sqrt(cell_fractions(grid.taus, grid.step, w) * grid.step)
    v = np.empty(2 * grid.count, dtype=np.complex128)
    v[0::2] = a_plus * scale
    v[1::2] = a_minus * scale
    return RestrictedDensity(v[:, None], grid, float(np.vdot(v, v).real))


def _same_space(a: RestrictedDensity, b: RestrictedDensity) -> bool:
    ga, gb = a.grid, b.grid
    return (ga.count == gb.count and abs(ga.step - gb.step) <= 1e-12 * ga.step
            and abs(ga.tau_start - gb.tau_start) <= 1e-9 * ga.step)


def trace_norm_difference(a: RestrictedDensity, b: RestrictedDensity) -> float:
    """||A - B||_1 via a Hermitian eigendecomposition inside span(A, B)."""
    stacked = np.hstack([a.factor, b.factor])
    if not np.any(stacked):
        return 0.0
    q, r = np.linalg.qr(stacked)
    ra, rb = r[:, :a.factor.shape[1]], r[:, a.factor.shape[1]:]
    diff = ra @ ra.conj().T - rb @ rb.conj().T
    return float(np.sum(np.abs(np.linalg.eigvalsh(0.5 * (diff + diff.conj().T)))))


def helstrom(r0: RestrictedDensity, r1: RestrictedDensity) -> float:
    """Optimal success probability for telling r0 from r1 at equal priors.

    1/2 + ||r0 - r1||_1 / 4 on subnormalized densities: rounds where nothing
    lands in the window leave only a coin flip.
    """
    if not _same_space(r0, r1):
        raise ValueError(f"restricted densities live on different spaces: {r0.grid} vs {r1.grid}")
    return 0.5 + 0.25 * trace_norm_difference(r0, r1)


def leading_edge(*states: FieldState) -> float:
    edges = []
    for s in states:
        for env in (s.env_plus, s.env_minus):
            sup = env.support()
            if sup is not None:
                edges.append(sup.lo)
    return min(edges)


def distinguishability_curve(state0: FieldState, state1: FieldState,
                             lengths: Sequence[float]) -> list[tuple[float, float]]:
    """Helstrom probability for windows [edge, edge + L] grown from the earliest half."""
    edge = leading_edge(state0, state1)
    out = []
    for length in lengths:
        w = AccessWindow(edge, edge + float(length))
        out.append((float(length), helstrom(restrict(state0, w), restrict(state1, w))))
    return out


def transition_width(curve: Sequence[tuple[float, float]], lo: float = 0.55, hi: float = 0.95) -> float:
    """Span of window length over which the curve climbs from ``lo`` to ``hi``."""
    ls = np.array([c[0] for c in curve])
    ps = np.array([c[1] for c in curve])
    above_lo = ls[ps >= lo]
    above_hi = ls[ps >= hi]
    if above_lo.size == 0 or above_hi.size == 0:
        return math.inf
    return float(above_hi[0] - above_lo[0])

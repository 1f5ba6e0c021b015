"""Amplitude profiles f(tau) on a uniform light-cone grid.

Each sample owns the cell [tau_j - step/2, tau_j + step/2] and the detection
density |f|^2 is constant across a cell. Integrals over windows weight each cell
by the fraction of it inside the window; over a whole grid whose edge samples
vanish this is the trapezoidal sum sum_j |f_j|^2 * step.

Shifting moves the grid origin and leaves the samples alone, so translations
are exact and compose exactly. Envelopes on grids that are not offset by a whole
number of steps are compared through band-limited (sinc) resampling.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .lightcone import AccessWindow

FAMILIES = ("gaussian", "raised_cosine_compact", "exp_tail")

# half-extent (in widths) a grid must contain for each family
SUPPORT_RADIUS = {"gaussian": 6.0, "raised_cosine_compact": 0.5, "exp_tail": 10.0}

MIN_SAMPLES_PER_WIDTH = 8
_ALIGN_TOL = 1e-6


class GridOverflowError(ValueError):
    """A shift would carry an envelope's support outside its fixed domain."""


@dataclass(frozen=True)
class GridSpec:
    tau_start: float
    step: float
    count: int

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("grid step must be positive")
        if self.count < 1:
            raise ValueError("grid needs at least one point")

    @classmethod
    def covering(cls, lo: float, hi: float, step: float) -> "GridSpec":
        """Smallest grid on the lattice step * Z containing [lo, hi]."""
        i0 = math.floor(lo / step + 1e-9)
        i1 = math.ceil(hi / step - 1e-9)
        return cls(i0 * step, step, i1 - i0 + 1)

    @property
    def taus(self) -> np.ndarray:
        return self.tau_start + self.step * np.arange(self.count)

    @property
    def tau_end(self) -> float:
        return self.tau_start + self.step * (self.count - 1)


def cell_fractions(taus: np.ndarray, step: float, w: AccessWindow) -> np.ndarray:
    """Fraction of each grid cell that lies inside ``w``."""
    lo_edge = taus - 0.5 * step
    hi_edge = taus + 0.5 * step
    frac = (np.minimum(hi_edge, w.hi) - np.maximum(lo_edge, w.lo)) / step
    frac = np.clip(frac, 0.0, 1.0)
    frac[(lo_edge >= w.lo) & (hi_edge <= w.hi)] = 1.0
    return frac


def _frozen(samples) -> np.ndarray:
    # read-only arrays are shared between shifted copies, never duplicated
    a = np.asarray(samples, dtype=np.complex128)
    if a.flags.writeable:
        a = a.copy()
        a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Envelope:
    samples: np.ndarray
    tau_start: float
    step: float
    nominal_center: float
    nominal_width: float
    family: str = "custom"
    fixed: Optional[AccessWindow] = None
    tail: float = field(default=0.0)

    def __post_init__(self):
        object.__setattr__(self, "samples", _frozen(self.samples))

    @property
    def count(self) -> int:
        return self.samples.shape[0]

    @property
    def grid(self) -> GridSpec:
        return GridSpec(self.tau_start, self.step, self.count)

    @property
    def taus(self) -> np.ndarray:
        return self.grid.taus

    @property
    def density(self) -> np.ndarray:
        return np.abs(self.samples) ** 2

    def norm(self) -> float:
        return float(math.sqrt(np.sum(self.density) * self.step))

    def support(self) -> Optional[AccessWindow]:
        """Cells carrying non-zero amplitude, as a window (None if all zero)."""
        nz = np.flatnonzero(self.samples)
        if nz.size == 0:
            return None
        return AccessWindow(self.tau_start + (nz[0] - 0.5) * self.step,
                            self.tau_start + (nz[-1] + 0.5) * self.step)

    def localization_window(self) -> AccessWindow:
        return AccessWindow.centered(self.nominal_center, self.nominal_width)

    def value_at(self, tau: float) -> complex:
        """Amplitude of the cell containing ``tau`` (0 off the grid)."""
        j = int(math.floor((tau - self.tau_start) / self.step + 0.5))
        if 0 <= j < self.count:
            return complex(self.samples[j])
        return 0j


def _profile(family: str, u: np.ndarray) -> np.ndarray:
    if family == "gaussian":
        # |f|^2 is a normal density of standard deviation = width
        return np.exp(-0.25 * u * u)
    if family == "raised_cosine_compact":
        out = 0.5 * (1.0 + np.cos(2.0 * np.pi * u))
        out[np.abs(u) >= 0.5] = 0.0
        return out
    if family == "exp_tail":
        return 1.0 / np.cosh(u)
    raise ValueError(f"unknown envelope family {family!r}; expected one of {FAMILIES}")


def make_envelope(family: str, center: float, width: float, grid: GridSpec,
                  carrier: float = 0.0, delta_budget: Optional[float] = None) -> Envelope:
    """Normalized envelope of one of the built-in families.

    ``width`` is the localization width: the standard deviation of |f|^2 for
    ``gaussian``, the full support length for ``raised_cosine_compact`` and the
    amplitude decay length of the sech profile for ``exp_tail``. ``carrier`` is
    a wavenumber multiplying the profile by exp(i * carrier * (tau - center)).
    """
    if not width > 0:
        raise ValueError("width must be positive")
    if family not in FAMILIES:
        raise ValueError(f"unknown envelope family {family!r}; expected one of {FAMILIES}")
    if grid.step > width / MIN_SAMPLES_PER_WIDTH * (1 + 1e-12):
        raise ValueError(
            f"grid step {grid.step} too coarse: need at least {MIN_SAMPLES_PER_WIDTH}"
            f" samples per width {width}")
    radius = SUPPORT_RADIUS[family] * width
    if grid.tau_start > center - radius + 1e-12 or grid.tau_end < center + radius - 1e-12:
        raise ValueError(
            f"grid [{grid.tau_start}, {grid.tau_end}] does not contain the {family}"
            f" support [{center - radius}, {center + radius}]")
    taus = grid.taus
    amp = _profile(family, (taus - center) / width).astype(np.complex128)
    if carrier:
        amp = amp * np.exp(1j * carrier * (taus - center))
    amp /= math.sqrt(np.sum(np.abs(amp) ** 2) * grid.step)
    env = Envelope(amp, grid.tau_start, grid.step, center, width, family)
    delta = tail_mass(env, env.localization_window())
    if delta_budget is not None and delta > delta_budget:
        raise ValueError(f"tail mass {delta:.3e} exceeds budget {delta_budget:.3e}")
    return replace(env, tail=delta)


def shift(e: Envelope, d: float) -> Envelope:
    """Envelope g with g(tau) = f(tau - d)."""
    if d == 0:
        return e
    out = replace(e, tau_start=e.tau_start + d, nominal_center=e.nominal_center + d)
    if e.fixed is not None:
        sup = out.support()
        if sup is not None and not (e.fixed.lo <= sup.lo and sup.hi <= e.fixed.hi):
            raise GridOverflowError(
                f"shift by {d} moves support [{sup.lo}, {sup.hi}] outside fixed grid"
                f" [{e.fixed.lo}, {e.fixed.hi}]")
    return out


def _offset_steps(e: Envelope, tau_start: float, step: float) -> Optional[int]:
    """Whole-step offset of e's grid relative to a lattice, or None if misaligned."""
    if abs(e.step - step) > 1e-12 * step:
        return None
    off = (e.tau_start - tau_start) / step
    n = round(off)
    if abs(off - n) > _ALIGN_TOL:
        return None
    return int(n)


def sinc_resample(e: Envelope, taus: np.ndarray) -> np.ndarray:
    """Band-limited (Whittaker-Shannon) interpolation of e at arbitrary points."""
    x = (np.asarray(taus)[:, None] - e.taus[None, :]) / e.step
    return np.sinc(x) @ e.samples


def on_grid(e: Envelope, grid: GridSpec) -> np.ndarray:
    """Samples of e on ``grid``; exact for aligned grids, sinc-resampled otherwise."""
    n = _offset_steps(e, grid.tau_start, grid.step)
    if n is None:
        return sinc_resample(e, grid.taus)
    out = np.zeros(grid.count, dtype=np.complex128)
    lo = max(n, 0)
    hi = min(n + e.count, grid.count)
    if hi > lo:
        out[lo:hi] = e.samples[lo - n:hi - n]
    return out


def union_grid(*envs: Envelope) -> GridSpec:
    """Grid on the first envelope's lattice spanning all the given envelopes."""
    ref = envs[0]
    i_lo, i_hi = 0, ref.count - 1
    for e in envs[1:]:
        a = (e.tau_start - ref.tau_start) / ref.step
        b = a + (e.tau_start + e.step * (e.count - 1) - e.tau_start) / ref.step
        i_lo = min(i_lo, math.floor(a + _ALIGN_TOL))
        i_hi = max(i_hi, math.ceil(b - _ALIGN_TOL))
    return GridSpec(ref.tau_start + i_lo * ref.step, ref.step, i_hi - i_lo + 1)


def overlap(a: Envelope, b: Envelope) -> complex:
    """Inner product <a|b> = sum conj(a_j) b_j step on a common grid."""
    g = union_grid(a, b)
    return complex(np.vdot(on_grid(a, g), on_grid(b, g)) * g.step)


def window_mass(e: Envelope, w: AccessWindow) -> float:
    return float(np.sum(e.density * cell_fractions(e.taus, e.step, w)) * e.step)


def tail_mass(e: Envelope, w: AccessWindow) -> float:
    """Probability mass of |f|^2 outside ``w``."""
    outside = 1.0 - cell_fractions(e.taus, e.step, w)
    return float(min(max(np.sum(e.density * outside) * e.step, 0.0), 1.0))


def to_csv(e: Envelope, path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["tau", "re_f", "im_f"])
        for t, v in zip(e.taus, e.samples):
            wr.writerow([repr(float(t)), repr(float(v.real)), repr(float(v.imag))])


# ------------------------------------------------------------ spectral side

@dataclass(frozen=True, eq=False)
class Spectrum:
    """On-shell (k > 0) amplitudes, normalized, on the DFT wavenumbers of a tau grid.

    ``grid`` is the tau grid the wavenumbers belong to; ``offshell_mass`` is the
    fraction of the source envelope's norm found at k <= 0 (or at Nyquist) and
    dropped.
    """

    samples: np.ndarray
    grid: GridSpec
    offshell_mass: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "samples", _frozen(self.samples))

    @property
    def k_step(self) -> float:
        return 2.0 * math.pi / (self.grid.count * self.grid.step)

    @property
    def ks(self) -> np.ndarray:
        return self.k_step * np.arange(1, self.samples.shape[0] + 1)

    def norm(self) -> float:
        return float(math.sqrt(np.sum(np.abs(self.samples) ** 2) * self.k_step))


def _n_positive(n: int) -> int:
    # m = 1 .. ceil(n/2) - 1; the Nyquist bin of an even grid has no sign
    return (n - 1) // 2


def make_spectrum(profile, grid: GridSpec) -> Spectrum:
    """Normalized spectrum with amplitudes ``profile(k)`` on the grid's k > 0 bins."""
    n_pos = _n_positive(grid.count)
    ks = 2.0 * math.pi / (grid.count * grid.step) * np.arange(1, n_pos + 1)
    amp = np.asarray(profile(ks), dtype=np.complex128)
    dk = 2.0 * math.pi / (grid.count * grid.step)
    amp = amp / math.sqrt(np.sum(np.abs(amp) ** 2) * dk)
    return Spectrum(amp, grid, 0.0)


def to_spectrum(e: Envelope) -> Spectrum:
    """Unitary half-line transform f(k) = (2 pi)^-1/2 * integral e^{-ik tau} f(tau) dtau.

    The k <= 0 content is measured, reported as ``offshell_mass`` and dropped;
    the remaining on-shell amplitudes are renormalized.
    """
    n, h = e.count, e.step
    ks = 2.0 * math.pi * np.fft.fftfreq(n, d=h)
    full = h / math.sqrt(2.0 * math.pi) * np.exp(-1j * ks * e.tau_start) * np.fft.fft(e.samples)
    dk = 2.0 * math.pi / (n * h)
    total = float(np.sum(np.abs(full) ** 2) * dk)
    n_pos = _n_positive(n)
    onshell = full[1:n_pos + 1]
    on_mass = float(np.sum(np.abs(onshell) ** 2) * dk)
    offshell = max(total - on_mass, 0.0) / total
    if on_mass > 0:
        onshell = onshell / math.sqrt(on_mass)
    return Spectrum(onshell, e.grid, offshell)


def from_spectrum(s: Spectrum, grid: Optional[GridSpec] = None, center: Optional[float] = None,
                  width: Optional[float] = None) -> Envelope:
    """Envelope f(tau) = (2 pi)^-1/2 * sum_k e^{ik tau} f(k) dk, normalized.

    On the spectrum's own grid this is an exact inverse DFT; any other grid is
    evaluated by direct summation.
    """
    native = s.grid
    n, h = native.count, native.step
    dk = s.k_step
    ks = s.ks
    if grid is None or (grid.count == n and _same(grid.step, h) and _same(grid.tau_start, native.tau_start)):
        grid = native
        full = np.zeros(n, dtype=np.complex128)
        full[1:ks.shape[0] + 1] = s.samples * np.exp(1j * ks * native.tau_start)
        amp = np.fft.ifft(full) * n * math.sqrt(2.0 * math.pi) / (n * h)
    else:
        phase = np.exp(1j * np.outer(grid.taus, ks))
        amp = phase @ s.samples * dk / math.sqrt(2.0 * math.pi)
    amp = amp / math.sqrt(np.sum(np.abs(amp) ** 2) * grid.step)
    dens = np.abs(amp) ** 2
    taus = grid.taus
    if center is None:
        center = float(np.sum(taus * dens) / np.sum(dens))
    if width is None:
        width = float(math.sqrt(max(np.sum((taus - center) ** 2 * dens) / np.sum(dens), 0.0)))
        width = max(width, grid.step * MIN_SAMPLES_PER_WIDTH)
    return Envelope(amp, grid.tau_start, grid.step, center, width, "spectral")


def _same(a: float, b: float) -> bool:
    return abs(a - b) <= 1e-12 * max(abs(a), abs(b), 1.0)


def roundtrip_error(e: Envelope) -> float:
    """Max sample deviation of from_spectrum(to_spectrum(e)) from e (undoing renormalization)."""
    s = to_spectrum(e)
    back = from_spectrum(s, e.grid)
    scale = math.sqrt(max(1.0 - s.offshell_mass, 0.0)) * e.norm()
    return float(np.max(np.abs(back.samples * scale - e.samples)))

"""One protocol round end to end, the acceptance rule, and the eavesdroppers.

A round: Alice prepares at a random send time, splits the halves by tau_d,
the state crosses the channel (past Eve, who sits at a fixed fraction of its
length), picks up polarization noise, Bob merges the halves and detects. The
round is accepted only if Bob's announced detection time matches
tau_i + tau_d + tau_ch within the timing slack.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Iterable, Optional

import numpy as np

from .lightcone import AccessWindow, Geometry, min_access_duration
from .quantum import (FieldState, RestrictedDensity, delay_plus, measure, merge, prepare,
                      propagate, restrict)
from .reconcile import KeyString, Stage
from .wavepacket import SUPPORT_RADIUS, Envelope, GridSpec, make_envelope

STRATEGIES = ("absent", "blind_guess", "intercept_first_half", "full_capture_delay")


@dataclass(frozen=True)
class ProtocolConfig:
    geometry: Geometry = field(default_factory=Geometry)
    family: str = "raised_cosine_compact"
    samples_per_width: int = 16
    carrier: float = 0.0
    noise_p: float = 0.0
    timing_slack: Optional[float] = None
    eve_position: float = 0.5
    send_positions: int = 16

    def __post_init__(self):
        if not 0 <= self.noise_p < 1:
            raise ValueError("noise_p must lie in [0, 1)")
        if not 0 < self.eve_position < 1:
            raise ValueError("eve_position must lie strictly between Alice and Bob")
        if self.samples_per_width < 8:
            raise ValueError("need at least 8 samples per localization width")
        if self.send_positions < 1:
            raise ValueError("send_positions must be positive")
        if self.slack < self.step:
            raise ValueError("timing_slack must be at least one grid step")

    @property
    def step(self) -> float:
        return self.geometry.delta_tau / self.samples_per_width

    @property
    def slack(self) -> float:
        return self.geometry.delta_tau if self.timing_slack is None else float(self.timing_slack)

    @property
    def eve_offset(self) -> float:
        return self.eve_position * self.geometry.tau_ch

    @property
    def slot_length(self) -> float:
        """Spacing between rounds; long enough that no two rounds overlap."""
        g = self.geometry
        need = (self.send_positions + 4) * g.delta_tau + 3 * (g.tau_d + g.tau_ch)
        return g.delta_tau * math.ceil(need / g.delta_tau)

    def template(self) -> Envelope:
        return _template(self.family, self.geometry.delta_tau, self.step, self.carrier)


@lru_cache(maxsize=32)
def _template(family: str, width: float, step: float, carrier: float) -> Envelope:
    radius = SUPPORT_RADIUS[family] * width
    grid = GridSpec.covering(-radius - 2 * step, radius + 2 * step, step)
    return make_envelope(family, 0.0, width, grid, carrier=carrier)


@dataclass(frozen=True)
class EveStrategy:
    """Eavesdropper model.

    ``window_length`` is the length of light cone Eve's apparatus can reach,
    starting half a localization width ahead of the leading half. Defaults:
    2 * delta_tau for intercept_first_half, tau_d + 2 * delta_tau for
    full_capture_delay.
    """

    variant: str = "absent"
    window_length: Optional[float] = None

    def __post_init__(self):
        if self.variant not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.variant!r}; expected one of {STRATEGIES}")

    def window(self, cfg: ProtocolConfig, leading_lo: float) -> AccessWindow:
        g = cfg.geometry
        length = self.window_length
        if self.variant == "intercept_first_half":
            length = 2 * g.delta_tau if length is None else length
            if length >= g.tau_d:
                raise ValueError("intercept_first_half window must be shorter than tau_d")
        elif self.variant == "full_capture_delay":
            length = g.tau_d + 2 * g.delta_tau if length is None else length
            if length < g.tau_d:
                raise ValueError("full_capture_delay needs an access window of at least tau_d")
        else:
            raise ValueError(f"{self.variant} has no access window")
        lo = leading_lo - 0.5 * g.delta_tau
        return AccessWindow(lo, lo + length)


@dataclass
class TransmissionRecord:
    round: int
    sent_bit: int
    tau_i: float
    announced_tau_B: Optional[float]
    detected_channel: Optional[int]
    accepted: bool
    eve_guess: Optional[int]
    eve_caused_delay: float

    def to_dict(self) -> dict:
        return asdict(self)


TRANSCRIPT_FIELDS = tuple(TransmissionRecord.__dataclass_fields__)


def timing_accept(record: TransmissionRecord, cfg: ProtocolConfig) -> bool:
    """Accept iff a detection happened at tau_i + tau_d + tau_ch, within the slack."""
    if record.announced_tau_B is None:
        return False
    expected = record.tau_i + cfg.geometry.nominal_transit
    return abs(record.announced_tau_B - expected) <= cfg.slack


def round_rng(seed: int, index: int) -> np.random.Generator:
    """Counter-based stream for round ``index``: independent of execution order."""
    return np.random.Generator(np.random.Philox(key=seed, counter=index << 128))


# ------------------------------------------------------------- adversaries

def helstrom_outcome_probs(r0: RestrictedDensity, r1: RestrictedDensity,
                           actual: RestrictedDensity) -> tuple:
    """Probabilities (detect & guess 0, detect & guess 1) of Eve's optimal measurement.

    Eve projects onto the positive part of r0 - r1; directions where the two
    hypotheses agree carry no information and are split evenly.
    """
    stacked = np.hstack([r0.factor, r1.factor, actual.factor])
    if not np.any(stacked):
        return 0.0, 0.0
    q, r = np.linalg.qr(stacked)
    n0, n1 = r0.factor.shape[1], r1.factor.shape[1]
    a0, a1, aa = r[:, :n0], r[:, n0:n0 + n1], r[:, n0 + n1:]
    diff = a0 @ a0.conj().T - a1 @ a1.conj().T
    vals, vecs = np.linalg.eigh(0.5 * (diff + diff.conj().T))
    rho = aa @ aa.conj().T
    pops = np.einsum("ij,ik,kj->j", vecs.conj(), rho, vecs).real
    tol = 1e-12 * max(1.0, float(np.max(np.abs(vals))))
    p0 = float(np.sum(pops[vals > tol]) + 0.5 * np.sum(pops[np.abs(vals) <= tol]))
    p1 = float(np.sum(pops[vals < -tol]) + 0.5 * np.sum(pops[np.abs(vals) <= tol]))
    return p0, p1


def _leading_lo(s: FieldState) -> float:
    sups = [e.support() for e in (s.env_plus, s.env_minus)]
    return min(w.lo for w in sups if w is not None)


def eve_accessible_densities(cfg: ProtocolConfig, eve: EveStrategy, tau_i: float):
    """Eve's window and her restricted views of the bit-0 and bit-1 states."""
    g = cfg.geometry
    f = cfg.template()
    views = []
    w = None
    for b in (0, 1):
        s = propagate(delay_plus(prepare(b, f, tau_i, g.tau_A), g.tau_d), cfg.eve_offset)
        if w is None:
            w = eve.window(cfg, _leading_lo(s))
        views.append(restrict(s, w))
    return w, views[0], views[1]


def _eve_detection_time(s: FieldState, w: AccessWindow, rng: np.random.Generator) -> float:
    r = restrict(s, w)
    dens = np.abs(r.factor[:, 0].reshape(r.grid.count, 2)) ** 2
    cell_mass = dens.sum(axis=1)
    j = int(rng.choice(r.grid.count, p=cell_mass / cell_mass.sum()))
    return r.grid.tau_start + (j + rng.random() - 0.5) * r.grid.step


@lru_cache(maxsize=64)
def _discriminator(cfg: ProtocolConfig, eve: EveStrategy, phase: float):
    """Eve's window and Helstrom eigenbasis for a send time of ``phase``.

    Rounds whose send times differ by whole grid steps see translated copies of
    the same two densities, so the measurement is built once per phase.
    """
    w, r0, r1 = eve_accessible_densities(cfg, eve, phase)
    q, r = np.linalg.qr(np.hstack([r0.factor, r1.factor]))
    a0, a1 = r[:, :r0.factor.shape[1]], r[:, r0.factor.shape[1]:]
    diff = a0 @ a0.conj().T - a1 @ a1.conj().T
    vals, vecs = np.linalg.eigh(0.5 * (diff + diff.conj().T))
    tol = 1e-12 * max(1.0, float(np.max(np.abs(vals))))
    return w, r0.grid.count, q @ vecs[:, vals > tol], q @ vecs[:, vals < -tol]


def _eve_measure(state: FieldState, cfg: ProtocolConfig, eve: EveStrategy, tau_i: float):
    """(window, P(detect & guess 0), P(detect & guess 1)) for the in-flight state."""
    phase = math.fmod(tau_i, cfg.step)
    w0, count, pos, neg = _discriminator(cfg, eve, phase)
    w = w0.shifted(tau_i - phase)
    actual = restrict(state, w)
    if actual.grid.count != count:
        _, r0, r1 = eve_accessible_densities(cfg, eve, tau_i)
        p0, p1 = helstrom_outcome_probs(r0, r1, actual)
        return w, p0, p1
    v = actual.factor
    p_pos = float(np.sum(np.abs(pos.conj().T @ v) ** 2))
    p_neg = float(np.sum(np.abs(neg.conj().T @ v) ** 2))
    # whatever the two hypotheses agree on is split evenly
    rest = max(actual.weight - p_pos - p_neg, 0.0)
    return w, p_pos + 0.5 * rest, p_neg + 0.5 * rest


def eve_intercept_first_half(state: FieldState, cfg: ProtocolConfig, eve: EveStrategy,
                             sent_bit: int, tau_i: float, rng: np.random.Generator):
    """Measure the leading half, guess, and inject a fresh correctly timed state.

    ``state`` is the in-flight state at Eve's position. Returns
    (replacement state or None, eve_guess or None, added_delay). The channel is
    cut at Eve: when her detector stays silent nothing reaches Bob.
    """
    g = cfg.geometry
    w, p_g0, p_g1 = _eve_measure(state, cfg, eve, tau_i)
    u = rng.random()
    if u >= p_g0 + p_g1:
        return None, None, 0.0
    guess = 0 if u < p_g0 else 1
    # detection time fixes tau_i: send times sit on a delta_tau lattice
    t_det = _eve_detection_time(state, w, rng)
    tau_est = g.delta_tau * round((t_det - g.tau_A - cfg.eve_offset) / g.delta_tau)
    fake = prepare(guess, cfg.template(), tau_est, g.tau_A)
    fake = propagate(delay_plus(fake, g.tau_d), cfg.eve_offset)
    return fake, guess, 0.0


def eve_full_capture(state: FieldState, cfg: ProtocolConfig, eve: EveStrategy,
                     tau_i: float, rng: np.random.Generator):
    """Capture both halves, measure optimally, resend once the window has closed.

    The resent state trails the original by the access-window length, which is
    at least tau_d.
    """
    g = cfg.geometry
    w, p_g0, p_g1 = _eve_measure(state, cfg, eve, tau_i)
    u = rng.random()
    if u >= p_g0 + p_g1:
        return None, None, 0.0
    guess = 0 if u < p_g0 else 1
    delay = min_access_duration(w)
    fake = prepare(guess, cfg.template(), tau_i, g.tau_A)
    fake = propagate(delay_plus(fake, g.tau_d), cfg.eve_offset + delay)
    return fake, guess, delay


def eve_blind_guess(rng: np.random.Generator) -> int:
    return int(rng.integers(0, 2))


# ------------------------------------------------------------------ rounds

def run_round(cfg: ProtocolConfig, eve: EveStrategy, rng: np.random.Generator,
              index: int = 0) -> TransmissionRecord:
    g = cfg.geometry
    sent_bit = int(rng.integers(0, 2))
    tau_i = index * cfg.slot_length + g.delta_tau * int(rng.integers(0, cfg.send_positions))

    s = prepare(sent_bit, cfg.template(), tau_i, g.tau_A)
    s = delay_plus(s, g.tau_d)
    s = propagate(s, cfg.eve_offset)

    guess, delay = None, 0.0
    if eve.variant == "blind_guess":
        guess = eve_blind_guess(rng)
    elif eve.variant == "intercept_first_half":
        s, guess, delay = eve_intercept_first_half(s, cfg, eve, sent_bit, tau_i, rng)
    elif eve.variant == "full_capture_delay":
        s, guess, delay = eve_full_capture(s, cfg, eve, tau_i, rng)

    rec = TransmissionRecord(index, sent_bit, tau_i, None, None, False, guess, delay)
    if s is None:
        return rec
    s = propagate(s, g.tau_ch - cfg.eve_offset)
    if cfg.noise_p > 0 and rng.random() < cfg.noise_p:
        s = FieldState(s.env_plus, s.env_minus, s.weight_plus, -s.weight_minus)
    s = merge(s, g.tau_d)
    ev = measure(s, rng)
    rec.announced_tau_B = ev.time - g.tau_A
    rec.detected_channel = ev.channel
    rec.accepted = timing_accept(rec, cfg)
    return rec


def run_rounds(cfg: ProtocolConfig, eve: EveStrategy, seed: int, start: int, stop: int) -> list:
    return [run_round(cfg, eve, round_rng(seed, i), i) for i in range(start, stop)]


def sift(records: Iterable[TransmissionRecord]):
    """Keys from the accepted rounds, in round order: (alice, bob)."""
    kept = [r for r in records if r.accepted]
    a = np.array([r.sent_bit for r in kept], dtype=np.uint8)
    b = np.array([r.detected_channel for r in kept], dtype=np.uint8)
    return KeyString(a, Stage.RAW), KeyString(b, Stage.RAW)


def write_transcript(records: Iterable[TransmissionRecord], path) -> None:
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(r.to_dict(), sort_keys=False) + "\n")


def read_transcript(path) -> list:
    """Records from a JSON-lines transcript; ``_meta`` header lines are skipped."""
    out = []
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            row = json.loads(line)
            if "_meta" not in row:
                out.append(TransmissionRecord(**row))
    return out

"""Numerical simulator for relativistic QKD with light-cone split single-photon states."""
from .lightcone import AccessWindow, Geometry, covers, min_access_duration, to_lightcone
from .wavepacket import Envelope, GridSpec, make_envelope, overlap, shift, tail_mass
from .quantum import (FieldState, delay_plus, distinguishability_curve, helstrom, measure, merge,
                      prepare, propagate, restrict, window_detection_probability)
from .protocol import EveStrategy, ProtocolConfig, TransmissionRecord, run_round, sift, timing_accept
from .reconcile import KeyString, full_pipeline, run_hashing
from ._kernels import BACKEND

__version__ = "0.1.0"

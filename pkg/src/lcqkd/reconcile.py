"""Classical post-processing of the sifted keys.

Noise estimation on a disclosed subset, 2k repetition blocks with majority
decoding (k-k ties rejected), and rounds of random-subset parity hashing that
burn two bits each.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Optional

import numpy as np

from . import _kernels


class InsufficientKeyError(ValueError):
    pass


class Stage(IntEnum):
    RAW = 0
    ESTIMATED = 1
    BLOCK_DECODED = 2
    HASHED = 3


@dataclass(frozen=True, eq=False)
class KeyString:
    bits: np.ndarray
    stage: Stage = Stage.RAW

    def __post_init__(self):
        b = np.asarray(self.bits, dtype=np.uint8)
        if b.ndim != 1:
            raise ValueError("key must be one-dimensional")
        if b.size and b.max() > 1:
            raise ValueError("key bits must be 0 or 1")
        b = b.copy()
        b.setflags(write=False)
        object.__setattr__(self, "bits", b)
        object.__setattr__(self, "stage", Stage(self.stage))

    def __len__(self) -> int:
        return self.bits.shape[0]

    def advance(self, bits, stage: Stage) -> "KeyString":
        if stage < self.stage:
            raise ValueError(f"cannot move key from {self.stage.name} back to {Stage(stage).name}")
        return KeyString(bits, stage)

    def __eq__(self, other):
        return isinstance(other, KeyString) and np.array_equal(self.bits, other.bits)


def _check_pair(a: KeyString, b: KeyString):
    if len(a) != len(b):
        raise ValueError(f"key length mismatch: {len(a)} vs {len(b)}")


def disagreement(a: KeyString, b: KeyString) -> float:
    _check_pair(a, b)
    return float(np.mean(a.bits != b.bits)) if len(a) else 0.0


# ---------------------------------------------------------------- noise

def estimate_noise(alice: KeyString, bob: KeyString, disclose_fraction: float,
                   rng: np.random.Generator):
    """Disclose a random subset, return (p_hat, alice_rest, bob_rest).

    Disclosed bits are burned on both sides; the rest keep their order.
    """
    _check_pair(alice, bob)
    if not 0 < disclose_fraction < 1:
        raise ValueError("disclose_fraction must lie in (0, 1)")
    n = len(alice)
    n_disc = int(round(disclose_fraction * n))
    if n_disc == 0:
        raise InsufficientKeyError("nothing to disclose")
    disclosed = np.sort(rng.choice(n, size=n_disc, replace=False))
    p_hat = float(np.mean(alice.bits[disclosed] != bob.bits[disclosed]))
    keep = np.ones(n, dtype=bool)
    keep[disclosed] = False
    return (p_hat,
            alice.advance(alice.bits[keep], Stage.ESTIMATED),
            bob.advance(bob.bits[keep], Stage.ESTIMATED))


# ---------------------------------------------------------- block coding

@dataclass(frozen=True)
class Block:
    value: int
    positions: np.ndarray


@dataclass(frozen=True)
class BlockCode:
    k: int
    blocks: list
    dropped: int

    def __post_init__(self):
        for blk in self.blocks:
            if blk.positions.shape[0] != 2 * self.k:
                raise ValueError("every block must have exactly 2k members")


def block_encode_groups(key: KeyString, k: int) -> BlockCode:
    """Alice's announcement: positions of her 1s (and of her 0s) in groups of 2k.

    Groups are cut in transmission order and listed by their first member;
    leftovers of each value are dropped and counted.
    """
    if k < 1:
        raise ValueError("k must be positive")
    size = 2 * k
    blocks = []
    dropped = 0
    for value in (0, 1):
        pos = np.flatnonzero(key.bits == value)
        n_full = pos.shape[0] // size
        dropped += pos.shape[0] - n_full * size
        for g in pos[:n_full * size].reshape(n_full, size):
            blocks.append(Block(value, g))
    blocks.sort(key=lambda blk: int(blk.positions[0]))
    return BlockCode(k, blocks, dropped)


def majority_decode(positions: np.ndarray, bob: KeyString, k: int) -> Optional[int]:
    """Bob's majority vote over one 2k block; None when the vote ties k-k."""
    if positions.shape[0] != 2 * k:
        raise ValueError("block must have exactly 2k positions")
    ones = int(bob.bits[positions].sum())
    if ones == k:
        return None
    return 1 if ones > k else 0


def block_residual_exact(p: float, k: int) -> float:
    """Wrong-decode probability of a surviving block under i.i.d. flips of rate p.

    P[Bin(2k, p) >= k + 1] / (1 - P[Bin(2k, p) = k]).
    """
    n = 2 * k
    pmf = [math.comb(n, j) * p ** j * (1 - p) ** (n - j) for j in range(n + 1)]
    wrong = math.fsum(pmf[k + 1:])
    return wrong / (1.0 - pmf[k])


def block_monte_carlo(p: float, k: int, n_blocks: int, rng: np.random.Generator,
                      chunk: int = 1 << 20) -> dict:
    """Simulate ``n_blocks`` 2k blocks with i.i.d. flips and majority-decode them."""
    ok = wrong = rej = 0
    left = n_blocks
    while left > 0:
        c = min(chunk, left)
        flips = rng.random((c, 2 * k)) < p
        a, b, r = _kernels.majority_tally(flips, k)
        ok, wrong, rej = ok + a, wrong + b, rej + r
        left -= c
    kept = ok + wrong
    return {"blocks": n_blocks, "correct": ok, "wrong": wrong, "rejected": rej,
            "residual": wrong / kept if kept else 0.0}


# -------------------------------------------------------------- hashing

def mask_to_hex(mask: np.ndarray) -> str:
    return np.packbits(np.asarray(mask, dtype=np.uint8)).tobytes().hex()


def hex_to_mask(text: str, length: int) -> np.ndarray:
    raw = np.frombuffer(bytes.fromhex(text), dtype=np.uint8)
    return np.unpackbits(raw)[:length]


@dataclass(frozen=True)
class HashRound:
    mask: np.ndarray
    parity_a: int
    parity_b: int
    discarded: tuple

    @property
    def passed(self) -> bool:
        return self.parity_a == self.parity_b

    def to_dict(self) -> dict:
        return {"length": int(self.mask.shape[0]), "mask": mask_to_hex(self.mask),
                "parity_a": self.parity_a, "parity_b": self.parity_b,
                "discarded": list(self.discarded)}


@dataclass
class HashTranscript:
    rounds: list = field(default_factory=list)

    @property
    def all_passed(self) -> bool:
        return all(r.passed for r in self.rounds)

    def to_dict(self) -> dict:
        return {"all_passed": self.all_passed, "rounds": [r.to_dict() for r in self.rounds]}


def draw_mask(rng: np.random.Generator, n: int) -> np.ndarray:
    """Uniform random mask of length n, redrawn while all zero."""
    while True:
        mask = rng.integers(0, 2, size=n, dtype=np.uint8)
        if mask.any():
            return mask


def discard_positions(mask: np.ndarray) -> tuple:
    """The two lowest-indexed masked positions.

    A single-bit mask gives up that bit and the lowest unmasked one.
    """
    masked = np.flatnonzero(mask)
    if masked.shape[0] >= 2:
        return int(masked[0]), int(masked[1])
    other = int(np.flatnonzero(mask == 0)[0])
    return int(masked[0]), other


def parity(bits: np.ndarray, mask: np.ndarray) -> int:
    return int(np.bitwise_xor.reduce(bits & mask)) if bits.shape[0] else 0


def hash_round(alice: KeyString, bob: KeyString, rng: np.random.Generator,
               mask: Optional[np.ndarray] = None):
    """One parity comparison; returns (alice', bob', HashRound)."""
    _check_pair(alice, bob)
    n = len(alice)
    if n < 3:
        raise InsufficientKeyError(f"hash round needs at least 3 bits, have {n}")
    if mask is None:
        mask = draw_mask(rng, n)
    mask = np.asarray(mask, dtype=np.uint8)
    if mask.shape[0] != n or not mask.any():
        raise ValueError("mask must be non-zero and match the key length")
    rec = HashRound(mask, parity(alice.bits, mask), parity(bob.bits, mask), discard_positions(mask))
    keep = np.ones(n, dtype=bool)
    keep[list(rec.discarded)] = False
    return (alice.advance(alice.bits[keep], Stage.HASHED),
            bob.advance(bob.bits[keep], Stage.HASHED), rec)


def run_hashing(alice: KeyString, bob: KeyString, m: int, rng: np.random.Generator):
    """m hash rounds; returns (alice', bob', transcript). Length drops by exactly 2m."""
    _check_pair(alice, bob)
    if m < 0:
        raise ValueError("m must be non-negative")
    if m > 0 and len(alice) < 2 * m + 2:
        raise InsufficientKeyError(f"{m} hash rounds need at least {2 * m + 2} bits, have {len(alice)}")
    tr = HashTranscript()
    for _ in range(m):
        alice, bob, rec = hash_round(alice, bob, rng)
        tr.rounds.append(rec)
    return alice, bob, tr


def draw_mask_batch(rng: np.random.Generator, trials: int, m: int, length: int) -> np.ndarray:
    """Masks for ``hash_trials``: round r uses the first length - 2r bits, never all zero."""
    masks = rng.integers(0, 2, size=(trials, m, length), dtype=np.uint8)
    for r in range(m):
        n = length - 2 * r
        bad = np.flatnonzero(~masks[:, r, :n].any(axis=1))
        while bad.size:
            masks[bad, r, :n] = rng.integers(0, 2, size=(bad.size, n), dtype=np.uint8)
            bad = bad[~masks[bad, r, :n].any(axis=1)]
    return masks


def hashing_monte_carlo(diff: np.ndarray, m: int, rng: np.random.Generator) -> dict:
    """Run m hash rounds on each row of the (trials, L) difference patterns."""
    diff = np.asarray(diff, dtype=np.uint8)
    trials, length = diff.shape
    if length < 2 * m + 2:
        raise InsufficientKeyError(f"{m} hash rounds need at least {2 * m + 2} bits")
    masks = draw_mask_batch(rng, trials, m, length)
    passed, residual = _kernels.hash_trials(diff, masks)
    return {"trials": trials, "passed": int(passed.sum()),
            "passed_with_difference": int((passed & (residual > 0)).sum()),
            "pass_rate": float(passed.mean())}


# ------------------------------------------------------------- pipeline

@dataclass
class ReconciliationReport:
    p_hat: float
    k: int
    m: int
    blocks: int
    rejected_blocks: int
    dropped_positions: int
    post_block_errors: int
    post_block_error_rate: float
    residual_exact: float
    pk_bound: float
    hashing_passed: bool
    transcript: HashTranscript
    alice_final: KeyString
    bob_final: KeyString

    @property
    def n_tilde(self) -> float:
        # 2 * N_tilde decoded logical bits enter hashing
        return (len(self.alice_final) + 2 * self.m) / 2

    @property
    def hash_bound(self) -> float:
        return 2.0 ** -self.m

    @property
    def identical_prob_bound(self) -> float:
        return 1.0 - 2.0 ** -(self.n_tilde - self.m)

    @property
    def eve_full_info_bound(self) -> float:
        return 2.0 ** (-2 * (self.n_tilde - self.m))

    @property
    def keys_identical(self) -> bool:
        return np.array_equal(self.alice_final.bits, self.bob_final.bits)

    def to_dict(self) -> dict:
        return {
            "p_hat": self.p_hat, "k": self.k, "m": self.m,
            "blocks": self.blocks, "rejected_blocks": self.rejected_blocks,
            "dropped_positions": self.dropped_positions,
            "post_block_errors": self.post_block_errors,
            "post_block_error_rate": self.post_block_error_rate,
            "residual_exact": self.residual_exact, "pk_bound": self.pk_bound,
            "hash_bound": self.hash_bound, "hashing_passed": self.hashing_passed,
            "n_tilde": self.n_tilde, "final_length": len(self.alice_final),
            "keys_identical": self.keys_identical,
            "identical_prob_bound": self.identical_prob_bound,
            "eve_full_info_bound": self.eve_full_info_bound,
            "eve_full_info_log2": -2.0 * (self.n_tilde - self.m),
            "transcript": self.transcript.to_dict(),
        }


def full_pipeline(alice: KeyString, bob: KeyString, k: int, m: int, rng: np.random.Generator,
                  disclose_fraction: float = 0.5) -> ReconciliationReport:
    p_hat, a_rest, b_rest = estimate_noise(alice, bob, disclose_fraction, rng)
    code = block_encode_groups(a_rest, k)
    a_logical, b_logical = [], []
    rejected = 0
    for blk in code.blocks:
        vote = majority_decode(blk.positions, b_rest, k)
        if vote is None:
            rejected += 1
            continue
        a_logical.append(blk.value)
        b_logical.append(vote)
    a_dec = a_rest.advance(np.array(a_logical, dtype=np.uint8), Stage.BLOCK_DECODED)
    b_dec = b_rest.advance(np.array(b_logical, dtype=np.uint8), Stage.BLOCK_DECODED)
    errors = int(np.sum(a_dec.bits != b_dec.bits))
    a_fin, b_fin, tr = run_hashing(a_dec, b_dec, m, rng)
    return ReconciliationReport(
        p_hat=p_hat, k=k, m=m, blocks=len(code.blocks), rejected_blocks=rejected,
        dropped_positions=code.dropped, post_block_errors=errors,
        post_block_error_rate=errors / len(a_dec) if len(a_dec) else 0.0,
        residual_exact=block_residual_exact(p_hat, k), pk_bound=p_hat ** k,
        hashing_passed=tr.all_passed, transcript=tr, alice_final=a_fin, bob_final=b_fin)

"""Acceptance gate: one test per criterion, each logging a PASS/FAIL line.

The lines are printed in the terminal summary of every pytest run.
"""
import itertools
import math
import time
from pathlib import Path

import numpy as np
import pytest
from scipy import integrate, stats

from lcqkd.harness import ExperimentConfig, run_experiment, run_session
from lcqkd.lightcone import AccessWindow
from lcqkd.protocol import EveStrategy, ProtocolConfig
from lcqkd.quantum import (channel_probabilities, delay_plus, helstrom, inner, merge, prepare,
                           propagate, restrict, window_detection_probability)
from lcqkd.reconcile import (KeyString, block_monte_carlo, block_residual_exact,
                             hashing_monte_carlo, run_hashing)
from lcqkd.wavepacket import GridSpec, make_envelope

from conftest import compact, gaussian
from oracles import dense_born, dense_restricted, random_state

CFG = ProtocolConfig()
G = CFG.geometry


def check(log, number, title, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} [{number:>2}] {title}: {detail}"
    log.append(line)
    print(line)
    if not ok:
        pytest.fail(line, pytrace=False)


def within(x, target, n, sigmas=3.0):
    return abs(x - target) <= sigmas * math.sqrt(target * (1 - target) / n)


# 1 ---------------------------------------------------------------------

def test_01_orthogonality_and_unitarity(acceptance_log):
    t0 = time.perf_counter()
    worst_orth = 0.0
    for family in ("raised_cosine_compact", "gaussian", "exp_tail"):
        grid = GridSpec.covering(-12, 12, 1 / 16)
        f = make_envelope(family, 0.0, 1.0, grid)
        for tau_i in (0.0, 3.0, 17.25):
            worst_orth = max(worst_orth, abs(inner(prepare(0, f, tau_i, 1.0), prepare(1, f, tau_i, 1.0))))
    rng = np.random.default_rng(1)
    worst_unit = 0.0
    pairs = 120
    for _ in range(pairs):
        a, b = random_state(rng, n=16, spread=30), random_state(rng, n=16, spread=30)
        ref = inner(a, b)
        d = float(rng.uniform(-40, 40))
        for op in (delay_plus, propagate, merge):
            worst_unit = max(worst_unit, abs(inner(op(a, d), op(b, d)) - ref))
        chained = merge(propagate(delay_plus(a, 20.0), d), 20.0), merge(propagate(delay_plus(b, 20.0), d), 20.0)
        worst_unit = max(worst_unit, abs(inner(*chained) - ref))
    elapsed = time.perf_counter() - t0
    ok = worst_orth <= 1e-12 and worst_unit <= 1e-9 and elapsed < 10
    check(acceptance_log, 1, "orthogonality & unitarity", ok,
                  f"max|<psi0|psi1>|={worst_orth:.1e}, max inner-product drift={worst_unit:.1e} "
                  f"over {pairs} pairs, {elapsed:.1f}s")


# 2 ---------------------------------------------------------------------

def test_02_distinguishability_jump(acceptance_log, tmp_path):
    t0 = time.perf_counter()
    cfg = ExperimentConfig(kind="distinguishability_curve", grid_points=2048, out=str(tmp_path))
    rep = run_experiment(cfg)
    elapsed = time.perf_counter() - t0
    low, high = rep.row("curve_low_plateau"), rep.row("curve_high_plateau")
    width = rep.row("curve_transition_width")
    ok = rep.passed and elapsed < 60
    check(acceptance_log, 2, "distinguishability jump", ok,
                  f"low plateau worst={low.empirical:.9f}, high plateau worst={high.empirical:.9f}, "
                  f"width={width.empirical:.3f} <= {2 * G.delta_tau}, {elapsed:.1f}s at 2048 points")


# 3 ---------------------------------------------------------------------

def test_03_single_half_indistinguishability(acceptance_log):
    f = compact(1.0)
    worst_diff, worst_p = 0.0, 0.0
    windows = 0
    for tau_i in (0.0, 5.0):
        s0 = delay_plus(prepare(0, f, tau_i, 0.0), G.tau_d)
        s1 = delay_plus(prepare(1, f, tau_i, 0.0), G.tau_d)
        for lo, hi in itertools.product(np.linspace(-1.0, 0.4, 6), np.linspace(0.6, G.tau_d - 0.6, 6)):
            for w in (AccessWindow(tau_i + lo, tau_i + hi),
                      AccessWindow(tau_i + G.tau_d - hi + 0.1, tau_i + G.tau_d - lo)):
                r0, r1 = restrict(s0, w), restrict(s1, w)
                worst_diff = max(worst_diff, float(np.max(np.abs(r0.matrix - r1.matrix))))
                worst_p = max(worst_p, abs(helstrom(r0, r1) - 0.5))
                windows += 1
    ok = worst_diff < 1e-12 and worst_p <= 1e-9
    check(acceptance_log, 3, "single-half indistinguishability", ok,
                  f"max elementwise |r0-r1|={worst_diff:.1e}, max|P-1/2|={worst_p:.1e} over {windows} windows")


# 4 ---------------------------------------------------------------------

def test_04_detection_probability(acceptance_log):
    f = compact(1.0)
    s = merge(propagate(delay_plus(prepare(1, f, 2.0, 0.0), G.tau_d), G.tau_ch), G.tau_d)
    sup = s.env_plus.support()
    p_compact = window_detection_probability(s, AccessWindow(sup.lo, sup.hi), 1)
    g = gaussian(1.0, per_sigma=128, half_span=10)
    sg = merge(delay_plus(prepare(0, g, 0.0, 0.0), G.tau_d), G.tau_d)
    p_gauss = window_detection_probability(sg, AccessWindow(G.tau_d - 4, G.tau_d + 4), 0)
    dens = lambda t: math.exp(-t * t / 2) / math.sqrt(2 * math.pi)
    delta = 2 * integrate.quad(dens, 4, np.inf, epsabs=1e-15, epsrel=1e-13)[0]
    ok = abs(p_compact - 1.0) <= 1e-14 and abs((1 - p_gauss) - delta) <= 1e-8
    check(acceptance_log, 4, "detection probability", ok,
                  f"compact full window={p_compact!r}, gaussian delta={1 - p_gauss:.6e} "
                  f"vs quadrature {delta:.6e} (diff {abs(1 - p_gauss - delta):.1e})")


# 5 ---------------------------------------------------------------------

def test_05_step5_determinism(acceptance_log):
    n = 100_000
    recs = run_session(CFG, EveStrategy("absent"), n, seed=5)
    good = sum(r.accepted and r.detected_channel == r.sent_bit for r in recs)
    check(acceptance_log, 5, "noiseless determinism", good == n,
                  f"{good}/{n} rounds accepted with channel = sent bit")


# 6 ---------------------------------------------------------------------

def test_06_delay_detection(acceptance_log):
    n = 10_000
    recs = run_session(CFG, EveStrategy("full_capture_delay"), n, seed=6)
    rejected = sum(not r.accepted for r in recs)
    min_delay = min(r.eve_caused_delay for r in recs if r.eve_guess is not None)
    ok = rejected == n and min_delay >= G.tau_d
    check(acceptance_log, 6, "delay detection", ok,
                  f"{rejected}/{n} full-capture rounds rejected, min added delay {min_delay}")


# 7 ---------------------------------------------------------------------

def test_07_step7_probabilities(acceptance_log):
    n = 100_000
    t0 = time.perf_counter()
    recs = run_session(CFG, EveStrategy("intercept_first_half"), n, seed=7)
    joint = sum(r.eve_guess is not None and r.eve_guess == r.sent_bit for r in recs) / n
    acc = [r for r in recs if r.accepted]
    err = sum(r.detected_channel != r.sent_bit for r in acc) / len(acc)
    blind = run_session(CFG, EveStrategy("blind_guess"), n, seed=77)
    guess = sum(r.eve_guess == r.sent_bit for r in blind) / n
    elapsed = time.perf_counter() - t0
    ok = (within(joint, 0.25, n) and within(guess, 0.5, n) and within(err, 0.5, len(acc))
          and elapsed < 300)
    check(acceptance_log, 7, "eavesdropper probabilities", ok,
                  f"intercept joint={joint:.4f} (0.25), blind guess={guess:.4f} (0.5), "
                  f"accepted error={err:.4f} (0.5, n={len(acc)}), {elapsed:.0f}s")


# 8 ---------------------------------------------------------------------

def test_08_hashing_bound(acceptance_log):
    rng = np.random.default_rng(8)
    n, m, L = 100_000, 5, 64
    diff = np.zeros((n, L), dtype=np.uint8)
    diff[np.arange(n), rng.integers(0, L, n)] = 1
    extra = rng.random((n, L)) < 0.05
    diff |= extra.astype(np.uint8)
    res = hashing_monte_carlo(diff, m, rng)
    bound = 2.0 ** -m
    survive_ok = res["pass_rate"] <= bound + 3 * math.sqrt(bound * (1 - bound) / n)
    length_ok = True
    for length in range(3, 80):
        for mm in range(0, (length - 2) // 2 + 1):
            a = KeyString(rng.integers(0, 2, length, dtype=np.uint8))
            af, bf, _ = run_hashing(a, a, mm, rng)
            length_ok &= len(af) == len(bf) == length - 2 * mm
    linear_ok = True
    for length in range(1, 13):
        words = np.array(list(itertools.product([0, 1], repeat=length)), dtype=np.uint8)
        par = (words @ words.T) & 1  # par[i, j] = parity of word i under mask j
        idx = {w.tobytes(): i for i, w in enumerate(words)}
        step = max(1, len(words) // 64)
        for i in range(0, len(words), step):
            for j in range(0, len(words), step):
                x = idx[(words[i] ^ words[j]).tobytes()]
                linear_ok &= bool(np.array_equal(par[i] ^ par[j], par[x]))
        # a non-zero difference fails exactly half of all masks
        linear_ok &= bool(np.all(par[1:].sum(axis=1) == 2 ** (length - 1)))
    ok = survive_ok and length_ok and linear_ok
    check(acceptance_log, 8, "hashing bound", ok,
                  f"survival {res['pass_rate']:.5f} <= 2^-5={bound:.5f} + 3se, "
                  f"length 2N-2m exact={length_ok}, parity linearity (L<=12)={linear_ok}")


# 9 ---------------------------------------------------------------------

def test_09_block_bound(acceptance_log):
    p, k = 0.1, 5
    t0 = time.perf_counter()
    exact = block_residual_exact(p, k)
    oracle = stats.binom.sf(k, 2 * k, p) / (1 - stats.binom.pmf(k, 2 * k, p))
    mc = block_monte_carlo(p, k, 10_000_000, np.random.default_rng(9))
    kept = mc["correct"] + mc["wrong"]
    mc_ok = within(mc["residual"], exact, kept)
    elapsed = time.perf_counter() - t0
    bound_ok = exact <= p ** k
    ok = bound_ok and mc_ok and abs(exact - oracle) <= 1e-15 and elapsed < 600
    check(acceptance_log, 9, "block residual <= p^k", ok,
                  f"exact residual {exact:.4e} (scipy {oracle:.4e}), MC {mc['residual']:.4e} over "
                  f"{mc['blocks']:.0e} blocks (agrees within 3se: {mc_ok}); p^k = {p ** k:.1e}; "
                  f"bound holds: {bound_ok}, {elapsed:.0f}s")


# 10 --------------------------------------------------------------------

def _bytes(out):
    return {p.name: p.read_bytes() for p in sorted(Path(out).iterdir())}


def test_10_reproducibility(acceptance_log, tmp_path):
    configs = [
        dict(kind="round_stats", trials=3000, strategy="intercept_first_half"),
        dict(kind="full_session", trials=3000, strategy="absent", noise_p=0.05, k=2, m=5),
        dict(kind="distinguishability_curve", grid_points=512),
        dict(kind="reconciliation", noise_p=0.1, block_trials=200_000, hash_trials=5000),
    ]
    same, parallel = True, True
    for i, c in enumerate(configs):
        outs = []
        for tag, workers in (("a", 1), ("b", 1), ("p", 3)):
            d = tmp_path / f"{i}{tag}"
            run_experiment(ExperimentConfig(seed=31337, out=str(d), workers=workers, **c))
            outs.append(_bytes(d))
        same &= outs[0] == outs[1]
        parallel &= outs[0] == outs[2]
    check(acceptance_log, 10, "reproducibility", same and parallel,
                  f"byte-identical reruns={same}, serial == 3 workers={parallel} "
                  f"over {len(configs)} experiment kinds")


# 11 --------------------------------------------------------------------

def test_11_small_grid_oracle(acceptance_log):
    rng = np.random.default_rng(11)
    states = []
    f = compact(1.0, per_width=8, pad=0)
    for bit in (0, 1):
        s = delay_plus(prepare(bit, f, 0.0, 0.0), 2.0)
        states += [s, merge(s, 2.0), merge(s, 1.75)]
    states += [random_state(rng, n=12, spread=20) for _ in range(40)]
    worst, checks, max_grid = 0.0, 0, 0
    for s in states:
        n = s.grid().count
        max_grid = max(max_grid, n)
        assert n <= 64
        taus = s.grid().taus
        p0, p1 = channel_probabilities(s)
        worst = max(worst, abs(p0 - dense_born(s, -1e9, 1e9, 0)), abs(p1 - dense_born(s, -1e9, 1e9, 1)))
        for _ in range(10):
            lo, hi = np.sort(rng.uniform(taus[0] - 0.5, taus[-1] + 0.5, 2))
            if hi - lo < 1e-3:
                continue
            w = AccessWindow(lo, hi)
            for ch in (0, 1):
                worst = max(worst, abs(window_detection_probability(s, w, ch) - dense_born(s, lo, hi, ch)))
            r = restrict(s, w)
            dense = dense_restricted(s, lo, hi)
            worst = max(worst, abs(r.weight - np.trace(dense).real))
            checks += 3
    ok = worst <= 1e-9
    check(acceptance_log, 11, "small-grid Born oracle", ok,
                  f"max |package - dense| = {worst:.1e} over {checks} window checks, "
                  f"{len(states)} states, grids <= {max_grid} points")

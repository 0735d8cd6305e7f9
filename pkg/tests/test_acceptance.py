"""Acceptance checks, one per criterion, each printed as a PASS/FAIL line.

Run under pytest (lines appear in the terminal summary) or directly with
``python tests/test_acceptance.py [--run-slow]``.
"""

from __future__ import annotations

import itertools
import json
import math
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

from shadowspec import pipeline as pl
from shadowspec.config import load_config
from shadowspec.oracle import exact_signal_model
from shadowspec.pauli import PauliString, PauliSumHamiltonian, enumerate_local_paulis
from shadowspec.rng import generator
from shadowspec.shadows import PauliPool, SnapshotSet, sample_complexity, sample_shadow_set, single_snapshot_values
from shadowspec.simulator import born_probabilities, krylov_evolve
from shadowspec.specproc import ljung_box_p, mean_squared_spectrum, peak_snr, standardize

try:
    from conftest import ACCEPTANCE
except ImportError:  # script mode
    ACCEPTANCE = {}


def _random_hamiltonian(n, n_terms, rng):
    terms = [
        (float(rng.normal()), PauliString.from_label("".join(rng.choice(list("IXYZ"), size=n))))
        for _ in range(n_terms)
    ]
    return PauliSumHamiltonian.from_terms(n, terms)


def _random_state(n, rng):
    psi = rng.normal(size=2**n) + 1j * rng.normal(size=2**n)
    return psi / np.linalg.norm(psi)


def _run(name, root, **overrides):
    cfg = load_config(name)
    if overrides:
        cfg = cfg.with_overrides(**overrides)
    out = Path(root) / name
    man = pl.run(cfg, out)
    return cfg, man, out


def _bins_apart(a, b, width):
    return abs(a - b) / width


# --------------------------------------------------------------------------
# criteria


def criterion_1(root):
    """Simulator signals agree with the analytic eigen-expansion."""
    rng = np.random.default_rng(2024)
    times = np.linspace(0.0, 10.0, 50)
    worst = 0.0
    for _ in range(10):
        ham = _random_hamiltonian(4, 12, rng)
        psi = _random_state(4, rng)
        obs = PauliString.from_label("".join(rng.choice(list("XYZ"), size=4)))
        model = exact_signal_model(ham, psi, obs, k=16)
        state, prev = psi, 0.0
        sim = []
        for t in times:
            state = krylov_evolve(ham, state, t - prev, tol=1e-12)
            prev = t
            sim.append(obs.expectation(state))
        worst = max(worst, float(np.abs(np.array(sim) - model.evaluate(times)).max()))
    return worst <= 1e-8, f"max |simulated - analytic| = {worst:.2e} (limit 1e-8)"


def criterion_2(root):
    """Exact unbiasedness by enumeration and empirical 5-sigma agreement."""
    bias = 0.0
    for n in (2, 3):
        state = _random_state(n, np.random.default_rng(n))
        paulis = enumerate_local_paulis(n, n)
        rows, outs, weights = [], [], []
        for bases in itertools.product(range(3), repeat=n):
            for idx, p in enumerate(born_probabilities(state, np.array(bases))):
                rows.append(bases)
                outs.append([(idx >> q) & 1 for q in range(n)])
                weights.append(p / 3**n)
        snaps = SnapshotSet(np.array(rows), np.array(outs))
        expect = np.array(weights) @ PauliPool(paulis).snapshot_values(snaps)
        exact = np.array([p.expectation(state) for p in paulis])
        bias = max(bias, float(np.abs(expect - exact).max()))
    n_s = 100_000
    state = _random_state(3, np.random.default_rng(7))
    snaps = sample_shadow_set(state, n_s, generator(7, "acceptance-shadows"))
    worst_z = 0.0
    for p in enumerate_local_paulis(3, 3):
        est = single_snapshot_values(snaps, p).mean()
        sigma = math.sqrt(3**p.locality / n_s)
        worst_z = max(worst_z, abs(est - p.expectation(state)) / sigma)
    ok = bias <= 1e-12 and worst_z <= 5
    return ok, f"enumerated bias {bias:.1e} (limit 1e-12); worst empirical deviation {worst_z:.2f} sigma (limit 5)"


def criterion_3(root):
    """Baseline of the standardized mean squared spectrum on pure shot noise."""
    t0 = time.perf_counter()
    _, man, out = _run("noise_baseline", root)
    elapsed = time.perf_counter() - t0
    summary = json.loads((out / "signal_summary.json").read_text())
    n_o = summary["n_retained"]
    mean, std = summary["baseline_mss"]
    target = math.sqrt(2 / n_o)
    ok = n_o == 10689 and 0.97 <= mean <= 1.03 and abs(std / target - 1) <= 0.2 and elapsed < 120
    return ok, (f"N_o={n_o}, baseline mean {mean:.4f} (range [0.97, 1.03]), std {std:.5f} vs "
                f"sqrt(2/N_o)={target:.5f} ({100 * (std / target - 1):+.1f}%), run {elapsed:.0f} s")


def _mss_snr(raw, dt, gap):
    spec = mean_squared_spectrum(standardize(raw).data, dt)
    return peak_snr(spec, gap)


def criterion_4(root):
    """Peak SNR grows as sqrt(N_o) and is invariant under N_s -> N_s/10, N_T -> 10 N_T."""
    t0 = time.perf_counter()
    cfg, man, out = _run("spinring", root)
    gap = man.results["oracle_gaps"][0]
    raw, _ = pl.estimate_signals(pl.read_shadows(out / "shadows.txt"), cfg.shadows.locality, cfg.shadows.n_batches)
    sizes = np.unique(np.geomspace(300, raw.shape[0], 7).astype(int))
    rng = generator(4, "acceptance-subsets")
    snr = []
    for size in sizes:
        reps = 1 if size == raw.shape[0] else 8
        vals = [_mss_snr(raw[rng.choice(raw.shape[0], size, replace=False)], cfg.time_grid.dt, gap)
                for _ in range(reps)]
        snr.append(np.mean(vals))
    slope = float(np.polyfit(np.log(sizes), np.log(snr), 1)[0])

    cfg2, man2, out2 = _run("spinring_fewshots", root)
    raw2, _ = pl.estimate_signals(pl.read_shadows(out2 / "shadows.txt"), cfg2.shadows.locality, cfg2.shadows.n_batches)
    a = _mss_snr(raw, cfg.time_grid.dt, gap)
    b = _mss_snr(raw2, cfg2.time_grid.dt, gap)
    ratio = max(a, b) / min(a, b)
    elapsed = time.perf_counter() - t0
    ok = abs(slope - 0.5) <= 0.1 and ratio <= 1.5 and elapsed < 600
    return ok, (f"log-log slope {slope:.3f} over N_o {sizes[0]}..{sizes[-1]} (target 0.5 +- 0.1); "
                f"peak SNR {a:.1f} (N_s=100, N_T=200) vs {b:.1f} (N_s=10, N_T=2000), ratio {ratio:.2f} "
                f"(limit 1.5); {elapsed:.0f} s")


def criterion_5(root):
    """Both spin-ring gaps within one bin and no third peak above baseline + 5 sigma."""
    t0 = time.perf_counter()
    cfg, man, out = _run("spinring", root)
    elapsed = time.perf_counter() - t0
    gaps = man.results["oracle_gaps"][:2]
    width = 2 * math.pi / (cfg.time_grid.n_steps * cfg.time_grid.dt)
    nyquist = math.pi / cfg.time_grid.dt
    peaks = man.results["dominant_peaks"]
    top = sorted(peaks[:2])
    if len(top) < 2:
        return False, f"only {len(top)} peak(s) found: {peaks}"
    dev = [_bins_apart(p, g, width) for p, g in zip(top, gaps)]
    ok = max(dev) <= 1 and len(peaks) == 2 and max(gaps) < nyquist and elapsed < 1800
    return ok, (f"peaks {top[0]:.5f}, {top[1]:.5f} vs gaps {gaps[0]:.5f}, {gaps[1]:.5f} "
                f"({dev[0]:.2f}, {dev[1]:.2f} bins); {len(peaks)} peaks above 5 sigma; {elapsed:.0f} s")


def criterion_6(root):
    """Desk-scale Hubbard Trotter sweep extrapolates to the oracle gap within two bins."""
    t0 = time.perf_counter()
    cfg, man, out = _run("hubbard_trotter", root)
    elapsed = time.perf_counter() - t0
    gap = man.results["oracle_gaps"][0]
    grid = cfg.time_grid
    width = 2 * math.pi / (grid.n_steps * grid.dt)
    est = man.results["extrapolated_gap"]
    span = grid.n_steps * grid.dt
    ok = (len(cfg.evolution.substeps_sweep) >= 4 and span >= 50 * math.pi / gap
          and _bins_apart(est, gap, width) <= 2 and elapsed < 1200)
    return ok, (f"intercept {est:.5f} vs oracle {gap:.5f} ({_bins_apart(est, gap, width):.2f} bins, limit 2); "
                f"T = {span:.0f} >= {50 * math.pi / gap:.0f}; {len(cfg.evolution.substeps_sweep)} step sizes; "
                f"{elapsed:.0f} s")


def criterion_6_full(root):
    """3x2 Hubbard at full scale: oracle gap and extrapolated estimate."""
    t0 = time.perf_counter()
    cfg, man, out = _run("hubbard_full", root)
    elapsed = time.perf_counter() - t0
    gap = man.results["oracle_gaps"][0]
    est = man.results["extrapolated_gap"]
    ok = abs(gap - 0.2010) <= 1e-4 and abs(est - gap) <= 1e-3
    return ok, f"oracle gap {gap:.5f} (0.2010 +- 0.0001), extrapolated {est:.5f} (within 0.001: {abs(est - gap):.5f}); {elapsed:.0f} s"


def criterion_7(root):
    """Dominant peak bin unchanged under trajectory noise up to xi = 1.5."""
    t0 = time.perf_counter()
    bins = {}
    for xi in (0.0, 0.5, 1.0, 1.5, 2.5):
        over = {"noise__enabled": False} if xi == 0 else {"noise__target_xi": xi}
        cfg = load_config("hubbard_noise").with_overrides(**over)
        out = Path(root) / f"hubbard_noise_xi{xi}"
        peaks = pl.run(cfg, out).results["dominant_peaks"]
        width = 2 * math.pi / (cfg.time_grid.n_steps * cfg.time_grid.dt)
        bins[xi] = int(round(peaks[0] / width)) if peaks else None
    elapsed = time.perf_counter() - t0
    ref = bins[0.0]
    ok = ref is not None and all(bins[x] == ref for x in (0.5, 1.0, 1.5)) and elapsed < 1800
    desc = ", ".join(f"xi={x}: {b if b is not None else 'none'}" for x, b in bins.items())
    return ok, f"dominant peak bin {desc} (xi=2.5 may differ); {elapsed:.0f} s"


def criterion_8(root):
    """Ljung-Box size under white noise and power against a pure tone.

    The size is judged on rows as long as the longest series the pipeline
    screens (N_T = 2000, h = 20). The statistic is known to over-reject on
    short rows; the N_T = 200 rate is reported alongside for reference.
    """
    rng = generator(8, "acceptance-ljung-box")
    frac = float(np.mean(ljung_box_p(rng.normal(size=(10_000, 2000))) < 0.05))
    short = float(np.mean(ljung_box_p(rng.normal(size=(10_000, 200))) < 0.05))
    tone = ljung_box_p(np.cos(0.3 * np.arange(200)))
    ok = abs(frac - 0.05) <= 0.01 and tone < 1e-10
    return ok, (f"null rejection rate {frac:.4f} at N_T=2000 (0.05 +- 0.01; {short:.4f} at N_T=200); "
                f"pure-tone p = {tone:.1e} at N_T=200 (limit 1e-10)")


def criterion_9(root):
    """Variational track: fidelity against exact evolution and gap resolution."""
    t0 = time.perf_counter()
    cfg, man, out = _run("variational", root)
    elapsed = time.perf_counter() - t0
    fid = man.results["min_fidelity"]
    gap = man.results["oracle_gaps"][0]
    width = 2 * math.pi / (cfg.time_grid.n_steps * cfg.time_grid.dt)
    peaks = man.results["dominant_peaks"]
    dev = _bins_apart(peaks[0], gap, width) if peaks else float("inf")
    ev = cfg.evolution
    setup_ok = (ev.layers == 5 and ev.vqs_dt == 1e-2 and ev.regularization == 1e-4
                and cfg.hamiltonian.params["n"] == 6 and ev.imaginary_steps > 0)
    ok = setup_ok and fid >= 0.99 and dev <= 1 and elapsed < 1800
    return ok, (f"min fidelity {fid:.5f} (limit 0.99); peak {peaks[0] if peaks else float('nan'):.4f} vs gap "
                f"{gap:.4f} ({dev:.2f} bins, limit 1); {elapsed:.0f} s")


def criterion_10(root):
    """Sample-complexity formula identity over a grid."""
    t0 = time.perf_counter()
    bad = 0
    count = 0
    for q, n_o, eps, delta in itertools.product((1, 2, 3, 4), (1, 12, 1788, 10689), (0.05, 0.1, 0.3, 1.0),
                                                (1e-3, 0.01, 0.1, 0.5)):
        n_s, _ = sample_complexity(q, n_o, eps, delta)
        count += 1
        bad += n_s != math.ceil(68 / eps**2 * 3**q * math.log(2 * n_o / delta))
    elapsed = time.perf_counter() - t0
    return bad == 0 and elapsed < 1, f"{count - bad}/{count} grid points exact; {elapsed * 1e3:.1f} ms"


CRITERIA = {k: globals()[f"criterion_{k}"] for k in range(1, 11)}


# --------------------------------------------------------------------------
# pytest wrappers


def _check(key, fn, root):
    ok, detail = fn(root)
    ACCEPTANCE[key] = (ok, detail)
    assert ok, detail


@pytest.fixture(scope="module")
def root(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


@pytest.mark.parametrize("k", sorted(CRITERIA))
def test_criterion(k, root):
    _check(k, CRITERIA[k], root)


@pytest.mark.slow
def test_criterion_6_full_scale(root):
    _check("6 (full scale)", criterion_6_full, root)


if __name__ == "__main__":
    slow = "--run-slow" in sys.argv
    failed = 0
    with tempfile.TemporaryDirectory() as tmp:
        checks = list(CRITERIA.items()) + ([("6 (full scale)", criterion_6_full)] if slow else [])
        for key, fn in checks:
            ok, detail = fn(tmp)
            failed += not ok
            print(f"{'PASS' if ok else 'FAIL'} criterion {key}: {detail}", flush=True)
    sys.exit(1 if failed else 0)

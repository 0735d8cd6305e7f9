"""End-to-end orchestration: build, evolve, sample, estimate, post-process, report.

Each stage is a plain function over the file formats of the lower-level
modules, so :func:`run` and the stage-wise CLI subcommands share one code
path. Randomness is drawn from counter-based streams keyed by
``(seed, stage label, timestep)``, which makes every output independent of
the number of worker threads.
"""

from __future__ import annotations

import hashlib
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from ._json import dumps
from .config import ConfigError, ExperimentConfig
from .hamiltonian_io import load_hamiltonian, save_hamiltonian
from .models import LatticeSpec, build_fermi_hubbard, build_heisenberg_chain
from .oracle import EigenSolution, extrapolate_gap, lowest_eigenpairs
from .pauli import PauliString, PauliSumHamiltonian, enumerate_local_paulis, locality_count
from .rng import generator
from .shadows import (
    PauliPool,
    ShadowSeries,
    read_shadow_binary,
    read_shadow_text,
    sample_shadow_set,
    write_shadow_binary,
    write_shadow_text,
)
from .simulator import (
    GateCounter,
    NoiseModel,
    TimeGrid,
    TrotterCircuit,
    krylov_evolve,
    prepare_initial_state,
)
from .specproc import (
    PeakList,
    SignalMatrix,
    Spectrum,
    compute_C,
    cross_spectral_density,
    dominant_subspace,
    find_peaks,
    mean_squared_spectrum,
    screen,
    standardize,
)
from .variational import VQSConfig, hardware_efficient_ansatz, vqs_evolve

log = logging.getLogger(__name__)

OUTPUT_ROOT_ENV = "SHADOWSPEC_OUTPUT_ROOT"


class PipelineError(RuntimeError):
    """A stage failed; ``manifest`` holds everything completed before it."""

    def __init__(self, stage: str, cause: BaseException, manifest: RunManifest | None = None):
        super().__init__(f"stage '{stage}' failed: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause
        self.manifest = manifest


@dataclass
class RunManifest:
    name: str
    config_hash: str
    seeds: dict
    derived: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    counts: dict = field(default_factory=dict)
    files: list = field(default_factory=list)
    status: str = "running"
    results: dict = field(default_factory=dict)

    def add_file(self, path: Path, root: Path) -> None:
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
        self.files.append({"path": str(path.relative_to(root)), "sha256": digest})

    def to_json(self, path: Path) -> None:
        path.write_text(dumps(asdict(self)), encoding="utf-8")


class _Stages:
    """Timing and failure bookkeeping around named stages."""

    def __init__(self, manifest: RunManifest, out_dir: Path | None):
        self.manifest = manifest
        self.out_dir = out_dir

    def __call__(self, name: str, fn: Callable, *args, **kwargs):
        t0 = time.perf_counter()
        try:
            result = fn(*args, **kwargs)
        except (ConfigError, PipelineError):
            raise
        except Exception as exc:
            self.manifest.status = f"failed in {name}"
            self.manifest.timings[name] = round(time.perf_counter() - t0, 6)
            if self.out_dir is not None:
                try:
                    self.manifest.to_json(self.out_dir / "manifest.json")
                except OSError:
                    pass
            raise PipelineError(name, exc, self.manifest) from exc
        self.manifest.timings[name] = round(time.perf_counter() - t0, 6)
        return result


# --------------------------------------------------------------------------
# stage functions


def build_hamiltonian(cfg: ExperimentConfig) -> PauliSumHamiltonian:
    hs = cfg.hamiltonian
    if hs.file is not None:
        return load_hamiltonian(cfg.hamiltonian_path())
    p = hs.params
    if hs.builder == "heisenberg":
        return build_heisenberg_chain(int(p["n"]), float(p["J"]), float(p["h"]), int(p["seed"]), p["boundary"])
    spec = LatticeSpec(int(p["rows"]), int(p["cols"]), float(p["t"]), float(p["U"]), p["boundary"])
    return build_fermi_hubbard(spec)


def time_grid(cfg: ExperimentConfig) -> TimeGrid:
    g = cfg.time_grid
    return TimeGrid(g.n_steps, g.dt, g.trotter_substeps)


def circuit_gate_count(cfg: ExperimentConfig, ham: PauliSumHamiltonian) -> GateCounter:
    """Rotations in the deepest circuit of the run (the one reaching the last time)."""
    ev = cfg.evolution
    if ev.method == "trotter":
        grid = time_grid(cfg)
        per = TrotterCircuit(ham, grid.trotter_dt).gates_per_step
        steps = (grid.n_steps - 1) * grid.trotter_substeps
        return GateCounter(per.single * steps, per.multi * steps)
    if ev.method == "variational":
        circ = hardware_efficient_ansatz(ham.n_qubits, ev.layers)
        single = sum(1 for g in circ.generators if g.locality == 1)
        return GateCounter(single, len(circ.generators) - single)
    return GateCounter()


def resolve_noise(cfg: ExperimentConfig, ham: PauliSumHamiltonian) -> tuple[NoiseModel, float]:
    """Noise model and its circuit error rate ``xi`` for the deepest circuit."""
    ns = cfg.noise
    if not ns.enabled:
        return NoiseModel(enabled=False), 0.0
    gates = circuit_gate_count(cfg, ham)
    if ns.target_xi is not None:
        weight = gates.multi + ns.single_qubit_ratio * gates.single
        if weight == 0:
            raise ConfigError("target_xi given but the circuit has no gates", "noise")
        lam = ns.target_xi / weight
        noise = NoiseModel(lam, ns.single_qubit_ratio * lam)
    else:
        noise = NoiseModel(ns.two_qubit_rate, ns.single_qubit_rate)
    return noise, gates.xi(noise)


def derive(cfg: ExperimentConfig, ham: PauliSumHamiltonian) -> dict:
    grid = time_grid(cfg)
    try:
        noise, xi = resolve_noise(cfg, ham)
    except ValueError as exc:
        raise ConfigError(str(exc), "noise") from None
    if cfg.q > ham.n_qubits:
        raise ConfigError(f"locality {cfg.q} exceeds the qubit count {ham.n_qubits}", "postprocess")
    gates = circuit_gate_count(cfg, ham)
    out = {
        "n_qubits": ham.n_qubits,
        "n_terms": len(ham),
        "n_observables": locality_count(ham.n_qubits, cfg.q),
        "nyquist": grid.nyquist,
        "bin_width": grid.bin_width,
        "total_time": grid.n_steps * grid.dt,
        "trotter_dt": grid.trotter_dt if cfg.evolution.method == "trotter" else None,
        "gates_single": gates.single,
        "gates_multi": gates.multi,
        "two_qubit_rate": noise.two_qubit_rate,
        "single_qubit_rate": noise.single_qubit_rate,
        "xi": xi,
    }
    if cfg.evolution.method == "variational":
        out["vqs_steps_per_interval"] = int(round(cfg.time_grid.dt / cfg.evolution.vqs_dt))
    return out


def run_oracle(cfg: ExperimentConfig, ham: PauliSumHamiltonian) -> EigenSolution:
    return lowest_eigenpairs(ham, min(cfg.oracle.n_eigen, ham.dim))


def _parallel_map(fn, items, threads: int):
    if threads <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def evolve_states(
    cfg: ExperimentConfig, ham: PauliSumHamiltonian, psi0: np.ndarray
) -> np.ndarray:
    """Noise-free states at every measurement time, shape ``(N_T, 2**n)``."""
    grid = time_grid(cfg)
    states = np.empty((grid.n_steps, ham.dim), dtype=complex)
    psi = np.asarray(psi0, dtype=complex)
    states[0] = psi
    if cfg.evolution.method == "exact":
        for n in range(1, grid.n_steps):
            psi = krylov_evolve(ham, psi, grid.dt, tol=cfg.evolution.krylov_tol)
            states[n] = psi
    elif cfg.evolution.method == "trotter":
        circuit = TrotterCircuit(ham, grid.trotter_dt)
        for n in range(1, grid.n_steps):
            for _ in range(grid.trotter_substeps):
                psi = circuit.step(psi)
            states[n] = psi
    else:
        raise ValueError("variational states come from variational_trajectory")
    return states


@dataclass
class VariationalRun:
    thetas: np.ndarray
    states: np.ndarray
    fidelities: np.ndarray | None
    initial_energy: float
    prepared_energy: float


def variational_trajectory(cfg: ExperimentConfig, ham: PauliSumHamiltonian) -> VariationalRun:
    """Imaginary-time preparation from random angles, then real-time VQS."""
    ev = cfg.evolution
    grid = time_grid(cfg)
    circ = hardware_efficient_ansatz(ham.n_qubits, ev.layers)
    theta = generator(ev.ansatz_seed, "ansatz-theta").uniform(-math.pi, math.pi, circ.n_params)
    e_init = ham.expectation(circ.state(theta))
    if ev.imaginary_steps:
        imag = VQSConfig(ev.vqs_dt, ev.regularization, "imaginary", ev.regularization_form)
        theta = vqs_evolve(circ, theta, ham, imag, ev.imaginary_steps, ev.imaginary_steps).thetas[-1]
    e_prep = ham.expectation(circ.state(theta))
    every = int(round(grid.dt / ev.vqs_dt))
    real = VQSConfig(ev.vqs_dt, ev.regularization, "real", ev.regularization_form)
    traj = vqs_evolve(circ, theta, ham, real, (grid.n_steps - 1) * every, every, reference=ev.reference)
    return VariationalRun(traj.thetas, traj.states, traj.fidelities, e_init, e_prep)


def sample_from_states(states: np.ndarray, n_snapshots: int, seed: int, dt: float, threads: int = 1) -> ShadowSeries:
    sets = _parallel_map(
        lambda n: sample_shadow_set(states[n], n_snapshots, generator(seed, "shadows", n)),
        range(len(states)), threads,
    )
    return ShadowSeries.from_sets(sets, seed, dt)


def sample_noisy_trotter(
    cfg: ExperimentConfig, ham: PauliSumHamiltonian, psi0: np.ndarray, noise: NoiseModel, threads: int = 1
) -> ShadowSeries:
    """Independent noisy trajectories per timestep, one per snapshot."""
    grid = time_grid(cfg)
    n_s = cfg.shadows.n_snapshots
    circuit = TrotterCircuit(ham, grid.trotter_dt)

    def one(n):
        rng = generator(cfg.seed, "noise", n)
        rows = circuit.noisy_trajectories(psi0, n * grid.trotter_substeps, n_s, noise, rng)
        return sample_shadow_set(rows, n_s, generator(cfg.seed, "shadows", n))

    return ShadowSeries.from_sets(_parallel_map(one, range(grid.n_steps), threads), cfg.seed, grid.dt)


def sample_noisy_variational(
    cfg: ExperimentConfig, ham: PauliSumHamiltonian, thetas: np.ndarray, noise: NoiseModel, threads: int = 1
) -> ShadowSeries:
    circ = hardware_efficient_ansatz(ham.n_qubits, cfg.evolution.layers)
    n_s = cfg.shadows.n_snapshots

    def one(n):
        rows = circ.noisy_states(thetas[n], n_s, noise, generator(cfg.seed, "noise", n))
        return sample_shadow_set(rows, n_s, generator(cfg.seed, "shadows", n))

    return ShadowSeries.from_sets(_parallel_map(one, range(len(thetas)), threads), cfg.seed, cfg.time_grid.dt)


def estimate_signals(
    series: ShadowSeries, q: int, n_batches: int, threads: int = 1
) -> tuple[np.ndarray, list[PauliString]]:
    """Raw signal matrix ``(N_o, N_T)`` over all Pauli strings of locality <= ``q``."""
    paulis = enumerate_local_paulis(series.n_qubits, q)
    pool = PauliPool(paulis)
    cols = _parallel_map(lambda n: pool.estimate(series.at(n), n_batches), range(series.n_times), threads)
    return np.stack(cols, axis=1), paulis


@dataclass
class PostResult:
    standardized: SignalMatrix
    retained: SignalMatrix
    eigenvalues: np.ndarray
    threshold: float
    n_components: int
    cross: Spectrum
    mss: Spectrum
    peaks_cross: PeakList
    peaks_mss: PeakList

    def summary(self) -> dict:
        return {
            "n_observables": self.standardized.n_rows + self.standardized.n_dropped,
            "n_dropped_constant": self.standardized.n_dropped,
            "n_rejected": self.retained.n_rejected,
            "n_retained": self.retained.n_rows,
            "n_components": self.n_components,
            "component_threshold": self.threshold,
            "top_eigenvalues": [float(v) for v in self.eigenvalues[:10]],
            "baseline_cross": [self.cross.baseline_mean, self.cross.baseline_std],
            "baseline_mss": [self.mss.baseline_mean, self.mss.baseline_std],
        }


def postprocess(raw: np.ndarray, paulis, dt: float, cfg_pp) -> PostResult:
    """Standardize, screen, subspace-project and transform a raw signal matrix."""
    std = standardize(raw, paulis, scale=cfg_pp.standardize)
    kept = screen(std, cfg_pp.alpha, cfg_pp.lags) if cfg_pp.screen else std
    if kept.n_rows == 0:
        raise ValueError("no signal passed the Ljung-Box screen; nothing to analyse")
    C = compute_C(kept)
    basis = dominant_subspace(C, kept.n_rows, cfg_pp.n_components, cfg_pp.margin, cfg_pp.max_c)
    if basis.c == 0:
        log.warning("no eigenvalue of C above the noise threshold; using the leading component")
        basis = dominant_subspace(C, c=1)
        basis.threshold = float("nan")
    cross = cross_spectral_density(basis, dt, cfg_pp.window)
    mss = mean_squared_spectrum(kept, dt, cfg_pp.window)
    return PostResult(
        std, kept, basis.eigenvalues, basis.threshold, basis.c, cross, mss,
        find_peaks(cross, cfg_pp.threshold), find_peaks(mss, cfg_pp.threshold),
    )


def peaks_record(post: PostResult) -> dict:
    return {"cross-spectral": post.peaks_cross.to_records(), "mean-squared": post.peaks_mss.to_records()}


def read_shadows(path: str | Path) -> ShadowSeries:
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(8)
    return read_shadow_binary(path) if head == b"SHDW0001" else read_shadow_text(path)


# --------------------------------------------------------------------------
# plotting hook and the full run


def resolve_output_dir(cfg: ExperimentConfig, out: str | Path | None = None) -> Path:
    import os

    if out is not None:
        return Path(out)
    root = Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))
    if cfg.output_dir:
        p = Path(cfg.output_dir)
        return p if p.is_absolute() else root / p
    return root / cfg.name


def _write_json(path: Path, obj) -> None:
    path.write_text(dumps(obj), encoding="utf-8")


def run(
    cfg: ExperimentConfig, out_dir: str | Path | None = None, threads: int = 1, dry_run: bool = False
) -> RunManifest:
    """Execute the whole pipeline for ``cfg`` and write every artifact to ``out_dir``."""
    if cfg.evolution.substeps_sweep:
        return run_sweep(cfg, out_dir, threads, dry_run)
    out = resolve_output_dir(cfg, out_dir)
    manifest = RunManifest(cfg.name, cfg.hash(), {"master": cfg.seed, "ansatz": cfg.evolution.ansatz_seed})
    ham = build_hamiltonian(cfg)
    manifest.derived = derive(cfg, ham)
    out.mkdir(parents=True, exist_ok=True)
    resolved = {"config": cfg.to_dict(), "derived": manifest.derived}
    _write_json(out / "config.resolved.json", resolved)
    manifest.add_file(out / "config.resolved.json", out)
    if dry_run:
        manifest.status = "dry-run"
        manifest.to_json(out / "manifest.json")
        return manifest

    stage = _Stages(manifest, out)
    save_hamiltonian(ham, out / "hamiltonian.txt")
    manifest.add_file(out / "hamiltonian.txt", out)
    grid = time_grid(cfg)
    noise, xi = resolve_noise(cfg, ham)

    solution = None
    if cfg.oracle.enabled:
        solution = stage("oracle", run_oracle, cfg, ham)
        values = solution.values
        oracle_rec = {
            "eigenvalues": values.tolist(),
            "gaps_from_ground": (values[1:] - values[0]).tolist(),
            "residuals": solution.residuals.tolist(),
        }
        _write_json(out / "oracle.json", oracle_rec)
        manifest.add_file(out / "oracle.json", out)
        manifest.results["oracle_gaps"] = oracle_rec["gaps_from_ground"]
        above = [g for g in oracle_rec["gaps_from_ground"] if g > grid.nyquist]
        if above:
            log.warning("oracle gaps %s exceed the Nyquist frequency %.4g and will alias", above, grid.nyquist)

    if cfg.evolution.method == "variational":
        vrun = stage("evolve", variational_trajectory, cfg, ham)
        manifest.results["prepared_energy"] = vrun.prepared_energy
        if vrun.fidelities is not None:
            manifest.results["min_fidelity"] = float(np.min(vrun.fidelities))
        if noise.active:
            series = stage("sample", sample_noisy_variational, cfg, ham, vrun.thetas, noise, threads)
        else:
            series = stage("sample", sample_from_states, vrun.states, cfg.shadows.n_snapshots, cfg.seed, grid.dt, threads)
    else:
        prep = stage("prepare", prepare_initial_state, cfg.initial_state, ham)
        if prep.eigenvalues is not None:
            manifest.results["initial_eigenvalues"] = prep.eigenvalues
        if noise.active:
            series = stage("sample", sample_noisy_trotter, cfg, ham, prep.vector, noise, threads)
        else:
            states = stage("evolve", evolve_states, cfg, ham, prep.vector)
            series = stage("sample", sample_from_states, states, cfg.shadows.n_snapshots, cfg.seed, grid.dt, threads)
    series.meta["xi"] = xi
    if cfg.outputs.shadow_format == "binary":
        shadow_path = out / "shadows.bin"
        stage("write-shadows", write_shadow_binary, series, shadow_path)
    else:
        shadow_path = out / "shadows.txt"
        stage("write-shadows", write_shadow_text, series, shadow_path)
    manifest.add_file(shadow_path, out)

    raw, paulis = stage("estimate", estimate_signals, series, cfg.q, cfg.shadows.n_batches, threads)
    post = stage("spectrum", postprocess, raw, paulis, grid.dt, cfg.postprocess)
    summary = post.summary()
    manifest.counts = {k: summary[k] for k in ("n_observables", "n_dropped_constant", "n_rejected", "n_retained")}
    manifest.counts["n_components"] = post.n_components
    _write_json(out / "signal_summary.json", summary)
    post.cross.to_csv(out / "spectrum_cross.csv")
    post.mss.to_csv(out / "spectrum_mss.csv")
    _write_json(out / "peaks.json", peaks_record(post))
    for name in ("signal_summary.json", "spectrum_cross.csv", "spectrum_mss.csv", "peaks.json"):
        manifest.add_file(out / name, out)
    manifest.results["dominant_peaks"] = [p.omega_interp for p in post.peaks_cross][:5]

    if cfg.outputs.svg:
        from .plotting import spectrum_svg

        gaps = manifest.results.get("oracle_gaps")
        svg = spectrum_svg([post.cross, post.mss], gaps, title=cfg.name)
        (out / "spectrum.svg").write_text(svg, encoding="utf-8")
        manifest.add_file(out / "spectrum.svg", out)
    manifest.status = "ok"
    manifest.to_json(out / "manifest.json")
    return manifest


def sample_records(samples) -> list[dict]:
    return [{"delta_t": float(d), "omega_peak": float(w)} for d, w in samples]


def run_sweep(
    cfg: ExperimentConfig, out_dir: str | Path | None = None, threads: int = 1, dry_run: bool = False
) -> RunManifest:
    """One run per Trotter substep count, then a polynomial extrapolation of the dominant peak."""
    out = resolve_output_dir(cfg, out_dir)
    out.mkdir(parents=True, exist_ok=True)
    build_hamiltonian(cfg)  # fail before any sub-run on a bad Hamiltonian
    manifest = RunManifest(cfg.name, cfg.hash(), {"master": cfg.seed})
    manifest.derived = {"sweep": {}}
    samples = []
    for m in cfg.evolution.substeps_sweep:
        sub = cfg.with_overrides(evolution__substeps_sweep=None, time_grid__trotter_substeps=m)
        sub_dir = out / f"substeps_{m:03d}"
        try:
            man = run(sub, sub_dir, threads, dry_run)
        except PipelineError as exc:
            manifest.status = f"failed in substeps_{m:03d}/{exc.stage}"
            manifest.to_json(out / "manifest.json")
            raise PipelineError(f"substeps_{m:03d}/{exc.stage}", exc.cause, manifest) from exc
        manifest.derived["sweep"][str(m)] = man.derived
        manifest.timings[f"substeps_{m:03d}"] = round(sum(man.timings.values()), 6)
        for f in man.files:
            manifest.files.append({"path": f"{sub_dir.name}/{f['path']}", "sha256": f["sha256"]})
        if "oracle_gaps" in man.results:
            manifest.results["oracle_gaps"] = man.results["oracle_gaps"]
        if not dry_run and man.results.get("dominant_peaks"):
            samples.append((time_grid(sub).trotter_dt, man.results["dominant_peaks"][0]))
    if dry_run:
        manifest.status = "dry-run"
        manifest.to_json(out / "manifest.json")
        return manifest
    samples.sort()
    fit_samples = samples[:-1] if cfg.evolution.extrapolation_exclude_largest else samples
    t0 = time.perf_counter()
    try:
        fit = extrapolate_gap(fit_samples, cfg.evolution.extrapolation_degree)
    except ValueError as exc:
        manifest.status = "failed in extrapolate"
        manifest.to_json(out / "manifest.json")
        raise PipelineError("extrapolate", exc, manifest) from exc
    manifest.timings["extrapolate"] = round(time.perf_counter() - t0, 6)
    report = {"samples": sample_records(samples), "fit": fit.to_record()}
    if "oracle_gaps" in manifest.results:
        report["oracle_gap"] = manifest.results["oracle_gaps"][0]
    _write_json(out / "extrapolation.json", report)
    manifest.add_file(out / "extrapolation.json", out)
    manifest.results["extrapolated_gap"] = fit.gap
    manifest.results["extrapolated_stderr"] = fit.stderr
    manifest.status = "ok"
    manifest.to_json(out / "manifest.json")
    return manifest

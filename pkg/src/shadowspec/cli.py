"""Command-line entry point ``shadowspec``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 I/O or
file-format error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from ._json import dumps
from . import pipeline as pl
from .config import ConfigError, ExperimentConfig, PostprocessSection, load_config
from .hamiltonian_io import HamiltonianFormatError, save_hamiltonian
from .oracle import extrapolate_gap
from .pauli import pauli_pool_from_labels
from .shadows import ShadowFormatError, write_shadow_binary, write_shadow_text
from .simulator import load_state, prepare_initial_state, save_state
from .specproc import Spectrum, SpectrumFormatError, find_peaks

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("shadowspec")


class SampleFormatError(ValueError):
    """Malformed extrapolation input."""


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, pl.PipelineError):
        exc = exc.cause
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, (OSError, ShadowFormatError, HamiltonianFormatError, SpectrumFormatError, SampleFormatError,
                        json.JSONDecodeError)):
        return EXIT_IO
    return EXIT_NUMERICAL


def _common(p: argparse.ArgumentParser, config_required: bool = False) -> None:
    p.add_argument("--config", required=config_required, help="experiment JSON (or a bundled recipe name)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int, help="override the master seed")
    p.add_argument("--threads", type=int, default=1, help="worker cap; outputs do not depend on it")
    p.add_argument("--dry-run", action="store_true", help="validate and report derived quantities only")
    p.add_argument("-v", "--verbose", action="store_true")


def _post_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--q", type=int, help="maximum Pauli locality")
    p.add_argument("--batches", type=int, help="median-of-means batches")
    p.add_argument("--alpha", type=float, help="Ljung-Box significance level")
    p.add_argument("--lags", type=int, help="Ljung-Box lag count")
    p.add_argument("--components", type=int, help="fix the number of subspace components")
    p.add_argument("--threshold", type=float, help="peak threshold in baseline standard deviations")
    p.add_argument("--no-screen", action="store_true")
    p.add_argument("--no-standardize", action="store_true")
    p.add_argument("--window", action="store_true", help="apply a Hann taper before transforming")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="shadowspec", description="Shadow spectroscopy pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    _common(sub.add_parser("run", help="full pipeline from a config"), config_required=True)
    _common(sub.add_parser("build-ham", help="write the Hamiltonian file"), config_required=True)
    _common(sub.add_parser("evolve", help="write noise-free state dumps per timestep"), config_required=True)

    p = sub.add_parser("sample", help="collect classical shadows")
    _common(p, config_required=True)
    p.add_argument("--states", help="directory of state dumps from 'evolve'")
    p.add_argument("--binary", action="store_true", help="write the packed binary shadow format")

    p = sub.add_parser("estimate", help="estimate every q-local Pauli signal from shadows")
    _common(p)
    p.add_argument("--shadows", required=True)
    _post_flags(p)

    p = sub.add_parser("spectrum", help="post-process shadows or signals into spectra")
    _common(p)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--shadows")
    src.add_argument("--signals", help="raw signal matrix (.npy) from 'estimate'")
    p.add_argument("--dt", type=float, help="measurement spacing (read from the shadows file if present)")
    _post_flags(p)

    p = sub.add_parser("peaks", help="peak table from spectrum CSV files")
    _common(p)
    p.add_argument("--spectrum", required=True, nargs="+")
    p.add_argument("--threshold", type=float, default=5.0)

    p = sub.add_parser("extrapolate", help="polynomial extrapolation of peak position to zero step")
    _common(p)
    p.add_argument("--input", required=True, help="JSON with (delta_t, omega) samples")
    p.add_argument("--degree", type=int, default=3)
    p.add_argument("--exclude-largest", action="store_true")
    return parser


# --------------------------------------------------------------------------


def _load(args) -> ExperimentConfig | None:
    if not args.config:
        return None
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_overrides(seed=args.seed)
    return cfg


def _out_dir(args, cfg, default: str = ".") -> Path:
    if args.out:
        out = Path(args.out)
    elif cfg is not None:
        out = pl.resolve_output_dir(cfg)
    else:
        out = Path(default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _print(obj) -> None:
    print(dumps(obj), end="")


def cmd_run(args) -> int:
    cfg = _load(args)
    manifest = pl.run(cfg, args.out, threads=args.threads, dry_run=args.dry_run)
    _print({"status": manifest.status, "derived": manifest.derived, "results": manifest.results})
    return EXIT_OK


def _dry(cfg, ham) -> int:
    _print({"status": "dry-run", "derived": pl.derive(cfg, ham)})
    return EXIT_OK


def cmd_build_ham(args) -> int:
    cfg = _load(args)
    ham = pl.build_hamiltonian(cfg)
    if args.dry_run:
        return _dry(cfg, ham)
    out = _out_dir(args, cfg)
    save_hamiltonian(ham, out / "hamiltonian.txt")
    print(out / "hamiltonian.txt")
    return EXIT_OK


def cmd_evolve(args) -> int:
    cfg = _load(args)
    ham = pl.build_hamiltonian(cfg)
    if args.dry_run:
        return _dry(cfg, ham)
    if cfg.noise.enabled:
        raise ConfigError("noisy runs have no single state per time; use 'sample' or 'run'", "noise")
    if cfg.evolution.method == "variational":
        states = pl.variational_trajectory(cfg, ham).states
    else:
        states = pl.evolve_states(cfg, ham, prepare_initial_state(cfg.initial_state, ham).vector)
    out = _out_dir(args, cfg) / "states"
    out.mkdir(parents=True, exist_ok=True)
    for n, psi in enumerate(states):
        save_state(psi, out / f"state_{n:05d}.bin")
    print(out)
    return EXIT_OK


def cmd_sample(args) -> int:
    cfg = _load(args)
    ham = pl.build_hamiltonian(cfg)
    if args.dry_run:
        return _dry(cfg, ham)
    grid = pl.time_grid(cfg)
    if args.states:
        files = sorted(Path(args.states).glob("state_*.bin"))
        if len(files) != grid.n_steps:
            raise ConfigError(f"found {len(files)} state dumps, config expects {grid.n_steps}", "time_grid")
        states = np.stack([load_state(f) for f in files])
        series = pl.sample_from_states(states, cfg.shadows.n_snapshots, cfg.seed, grid.dt, args.threads)
    else:
        noise, _ = pl.resolve_noise(cfg, ham)
        if cfg.evolution.method == "variational":
            vrun = pl.variational_trajectory(cfg, ham)
            if noise.active:
                series = pl.sample_noisy_variational(cfg, ham, vrun.thetas, noise, args.threads)
            else:
                series = pl.sample_from_states(vrun.states, cfg.shadows.n_snapshots, cfg.seed, grid.dt, args.threads)
        else:
            psi0 = prepare_initial_state(cfg.initial_state, ham).vector
            if noise.active:
                series = pl.sample_noisy_trotter(cfg, ham, psi0, noise, args.threads)
            else:
                states = pl.evolve_states(cfg, ham, psi0)
                series = pl.sample_from_states(states, cfg.shadows.n_snapshots, cfg.seed, grid.dt, args.threads)
    out = _out_dir(args, cfg)
    if args.binary or cfg.outputs.shadow_format == "binary":
        path = out / "shadows.bin"
        write_shadow_binary(series, path)
    else:
        path = out / "shadows.txt"
        write_shadow_text(series, path)
    print(path)
    return EXIT_OK


def _post_settings(args, cfg) -> tuple[PostprocessSection, int, int]:
    base = cfg.postprocess if cfg is not None else PostprocessSection()
    q = args.q or (cfg.q if cfg is not None else 3)
    batches = args.batches or (cfg.shadows.n_batches if cfg is not None else 3)
    changes = {
        "alpha": args.alpha, "lags": args.lags, "n_components": args.components, "threshold": args.threshold,
    }
    values = {**base.__dict__, **{k: v for k, v in changes.items() if v is not None}}
    if args.no_screen:
        values["screen"] = False
    if args.no_standardize:
        values["standardize"] = False
    if args.window:
        values["window"] = True
    try:
        return PostprocessSection(**values), q, batches
    except ValueError as exc:
        raise ConfigError(str(exc), "postprocess") from None


def _write_observables(paulis, path: Path) -> None:
    path.write_text("".join(p.label + "\n" for p in paulis), encoding="ascii")


def cmd_estimate(args) -> int:
    cfg = _load(args)
    _, q, batches = _post_settings(args, cfg)
    series = pl.read_shadows(args.shadows)
    if q > series.n_qubits:
        raise ConfigError(f"q={q} exceeds the qubit count {series.n_qubits}", "q")
    if args.dry_run:
        from .pauli import locality_count

        _print({"status": "dry-run", "n_observables": locality_count(series.n_qubits, q),
                "n_times": series.n_times, "n_snapshots": series.n_snapshots})
        return EXIT_OK
    raw, paulis = pl.estimate_signals(series, q, batches, args.threads)
    out = _out_dir(args, cfg)
    np.save(out / "signals.npy", raw)
    _write_observables(paulis, out / "observables.txt")
    meta = {"dt": series.dt, "q": q, "n_batches": batches, "shape": list(raw.shape)}
    (out / "signals.json").write_text(dumps(meta), encoding="utf-8")
    print(out / "signals.npy")
    return EXIT_OK


def cmd_spectrum(args) -> int:
    cfg = _load(args)
    pp, q, batches = _post_settings(args, cfg)
    if args.shadows:
        series = pl.read_shadows(args.shadows)
        dt = args.dt or series.dt
        if q > series.n_qubits:
            raise ConfigError(f"q={q} exceeds the qubit count {series.n_qubits}", "q")
    else:
        meta_path = Path(args.signals).with_suffix(".json")
        meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
        dt = args.dt or meta.get("dt")
    if dt is None:
        raise ConfigError("measurement spacing unknown; pass --dt", "dt")
    if args.dry_run:
        _print({"status": "dry-run", "dt": dt, "q": q, "postprocess": pp.__dict__})
        return EXIT_OK
    if args.shadows:
        raw, paulis = pl.estimate_signals(series, q, batches, args.threads)
    else:
        raw = np.load(args.signals)
        obs = Path(args.signals).with_name("observables.txt")
        paulis = pauli_pool_from_labels(obs.read_text().split()) if obs.exists() else None
    post = pl.postprocess(raw, paulis, dt, pp)
    out = _out_dir(args, cfg)
    (out / "signal_summary.json").write_text(dumps(post.summary()), encoding="utf-8")
    post.cross.to_csv(out / "spectrum_cross.csv")
    post.mss.to_csv(out / "spectrum_mss.csv")
    (out / "peaks.json").write_text(dumps(pl.peaks_record(post)), encoding="utf-8")
    _print({"n_retained": post.retained.n_rows, "n_components": post.n_components,
            "peaks": [p.omega_interp for p in post.peaks_cross]})
    return EXIT_OK


_METHOD_BY_STEM = {"spectrum_cross": "cross-spectral", "spectrum_mss": "mean-squared"}


def cmd_peaks(args) -> int:
    record = {}
    for path in args.spectrum:
        stem = Path(path).stem
        method = _METHOD_BY_STEM.get(stem, stem)
        spec = Spectrum.from_csv(path, method)
        record[method] = find_peaks(spec, args.threshold).to_records()
    if args.dry_run:
        _print({"status": "dry-run", "spectra": list(record)})
        return EXIT_OK
    out = _out_dir(args, None)
    (out / "peaks.json").write_text(dumps(record), encoding="utf-8")
    _print(record)
    return EXIT_OK


def _read_samples(path: str) -> list[tuple[float, float]]:
    """``{delta_t, omega_peak}`` records, bare pairs, or a report with ``samples``."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(data, dict):
        data = data.get("samples", [])
    if not isinstance(data, list):
        raise SampleFormatError(f"{path}: expected a list of samples")
    out = []
    for i, item in enumerate(data):
        try:
            if isinstance(item, dict):
                out.append((float(item["delta_t"]), float(item["omega_peak"])))
            else:
                a, b = item
                out.append((float(a), float(b)))
        except (KeyError, TypeError, ValueError):
            raise SampleFormatError(f"{path}: sample {i} is not a (delta_t, omega_peak) record") from None
    return sorted(out)


def cmd_extrapolate(args) -> int:
    samples = _read_samples(args.input)
    if args.exclude_largest:
        samples = samples[:-1]
    fit = extrapolate_gap(samples, args.degree)
    report = {"samples": pl.sample_records(samples), "fit": fit.to_record()}
    if not args.dry_run:
        out = _out_dir(args, None)
        (out / "extrapolation.json").write_text(dumps(report), encoding="utf-8")
    _print({"gap": fit.gap, "stderr": fit.stderr})
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "build-ham": cmd_build_ham,
    "evolve": cmd_evolve,
    "sample": cmd_sample,
    "estimate": cmd_estimate,
    "spectrum": cmd_spectrum,
    "peaks": cmd_peaks,
    "extrapolate": cmd_extrapolate,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, pl.PipelineError, OSError, ValueError, ArithmeticError, RuntimeError,
            np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())

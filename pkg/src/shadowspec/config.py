"""Experiment configuration: a single JSON document with a versioned schema.

Every section maps onto a dataclass; keys that are not fields are rejected so
typos fail loudly instead of silently falling back to defaults.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path
from typing import Any

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""

    def __init__(self, message: str, path: str = ""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


def _section(cls, raw: Any, path: str):
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("expected an object", path)
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(raw) - names)
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown}; allowed: {sorted(names)}", path)
    try:
        return cls(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), path) from None


def _require(cond: bool, message: str, path: str):
    if not cond:
        raise ConfigError(message, path)


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


_BUILDER_KEYS = {
    "heisenberg": {"n": 6, "J": 1.0, "h": 1.0, "seed": 0, "boundary": "periodic"},
    "hubbard": {"rows": 2, "cols": 2, "t": 1.0, "U": 2.0, "boundary": "open"},
}


@dataclass
class HamiltonianSection:
    builder: str | None = None
    file: str | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        p = "hamiltonian"
        _require((self.builder is None) != (self.file is None), "give exactly one of 'builder' or 'file'", p)
        if self.builder is not None:
            _require(self.builder in _BUILDER_KEYS, f"unknown builder {self.builder!r}", p)
            allowed = _BUILDER_KEYS[self.builder]
            unknown = sorted(set(self.params) - set(allowed))
            _require(not unknown, f"unknown parameter(s) {unknown} for builder {self.builder!r}", p + ".params")
            self.params = {**allowed, **self.params}
        else:
            _require(not self.params, "'params' only applies to builders", p)


@dataclass
class TimeGridSection:
    n_steps: int = 200
    dt: float = 1.0
    trotter_substeps: int = 1

    def __post_init__(self):
        p = "time_grid"
        _require(_is_int(self.n_steps) and self.n_steps >= 2, "n_steps must be an integer >= 2", p)
        _require(_is_num(self.dt) and self.dt > 0, "dt must be a positive number", p)
        _require(_is_int(self.trotter_substeps) and self.trotter_substeps >= 1, "trotter_substeps must be >= 1", p)


@dataclass
class EvolutionSection:
    method: str = "exact"
    krylov_tol: float = 1e-10
    substeps_sweep: list[int] | None = None
    extrapolation_degree: int = 3
    extrapolation_exclude_largest: bool = False
    layers: int = 5
    vqs_dt: float = 1e-2
    regularization: float = 1e-4
    regularization_form: str = "shift"
    imaginary_steps: int = 0
    ansatz_seed: int = 0
    reference: bool = False

    def __post_init__(self):
        p = "evolution"
        _require(self.method in ("exact", "trotter", "variational"), f"unknown method {self.method!r}", p)
        _require(_is_num(self.krylov_tol) and self.krylov_tol > 0, "krylov_tol must be positive", p)
        if self.substeps_sweep is not None:
            _require(self.method == "trotter", "substeps_sweep requires the trotter method", p)
            s = self.substeps_sweep
            _require(
                isinstance(s, list) and len(s) >= 2 and all(_is_int(m) and m >= 1 for m in s) and len(set(s)) == len(s),
                "substeps_sweep must list at least two distinct positive integers", p,
            )
        _require(_is_int(self.layers) and self.layers >= 1, "layers must be >= 1", p)
        _require(_is_num(self.vqs_dt) and self.vqs_dt > 0, "vqs_dt must be positive", p)
        _require(_is_num(self.regularization) and self.regularization >= 0, "regularization must be >= 0", p)
        _require(self.regularization_form in ("shift", "least_squares"), "bad regularization_form", p)
        _require(_is_int(self.imaginary_steps) and self.imaginary_steps >= 0, "imaginary_steps must be >= 0", p)


@dataclass
class ShadowSection:
    n_snapshots: int = 100
    n_batches: int = 3
    locality: int = 3

    def __post_init__(self):
        p = "shadows"
        _require(_is_int(self.n_snapshots) and self.n_snapshots >= 1, "n_snapshots must be >= 1", p)
        _require(_is_int(self.n_batches) and 1 <= self.n_batches <= self.n_snapshots,
                 "n_batches must lie in [1, n_snapshots]", p)
        _require(_is_int(self.locality) and self.locality >= 1, "locality must be >= 1", p)


@dataclass
class NoiseSection:
    enabled: bool = False
    two_qubit_rate: float = 0.0
    single_qubit_rate: float = 0.0
    target_xi: float | None = None
    single_qubit_ratio: float = 1.0

    def __post_init__(self):
        p = "noise"
        for name in ("two_qubit_rate", "single_qubit_rate", "single_qubit_ratio"):
            v = getattr(self, name)
            _require(_is_num(v) and v >= 0, f"{name} must be a non-negative number", p)
        if self.target_xi is not None:
            _require(_is_num(self.target_xi) and self.target_xi >= 0, "target_xi must be >= 0", p)
            _require(self.two_qubit_rate == 0 and self.single_qubit_rate == 0,
                     "give either explicit rates or target_xi", p)


@dataclass
class PostprocessSection:
    locality: int | None = None
    screen: bool = True
    alpha: float = 0.05
    lags: int | None = None
    standardize: bool = True
    margin: float = 0.25
    max_c: int = 20
    n_components: int | None = None
    threshold: float = 5.0
    window: bool = False

    def __post_init__(self):
        p = "postprocess"
        _require(self.locality is None or (_is_int(self.locality) and self.locality >= 1), "locality must be >= 1", p)
        _require(_is_num(self.alpha) and 0 < self.alpha < 1, "alpha must lie in (0, 1)", p)
        _require(self.lags is None or (_is_int(self.lags) and self.lags >= 1), "lags must be >= 1", p)
        _require(_is_num(self.margin) and self.margin >= 0, "margin must be >= 0", p)
        _require(_is_int(self.max_c) and self.max_c >= 1, "max_c must be >= 1", p)
        _require(self.n_components is None or (_is_int(self.n_components) and self.n_components >= 1),
                 "n_components must be >= 1", p)
        _require(_is_num(self.threshold) and self.threshold > 0, "threshold must be positive", p)


@dataclass
class OracleSection:
    enabled: bool = True
    n_eigen: int = 4

    def __post_init__(self):
        _require(_is_int(self.n_eigen) and self.n_eigen >= 2, "n_eigen must be >= 2", "oracle")


@dataclass
class OutputSection:
    svg: bool = True
    shadow_format: str = "text"

    def __post_init__(self):
        _require(self.shadow_format in ("text", "binary"), "shadow_format must be 'text' or 'binary'", "outputs")


_TOP_KEYS = {
    "schema_version", "name", "description", "seed", "output_dir", "hamiltonian", "initial_state",
    "evolution", "time_grid", "shadows", "noise", "postprocess", "oracle", "outputs",
}


@dataclass
class ExperimentConfig:
    name: str
    seed: int
    hamiltonian: HamiltonianSection
    initial_state: dict
    evolution: EvolutionSection
    time_grid: TimeGridSection
    shadows: ShadowSection
    noise: NoiseSection
    postprocess: PostprocessSection
    oracle: OracleSection
    outputs: OutputSection
    output_dir: str | None = None
    description: str = ""
    base_dir: Path = field(default=Path("."), compare=False)

    @property
    def q(self) -> int:
        return self.postprocess.locality or self.shadows.locality

    def hamiltonian_path(self) -> Path | None:
        if self.hamiltonian.file is None:
            return None
        p = Path(self.hamiltonian.file)
        return p if p.is_absolute() else self.base_dir / p

    def to_dict(self) -> dict:
        out = {"schema_version": SCHEMA_VERSION}
        for f in fields(self):
            if f.name == "base_dir":
                continue
            v = getattr(self, f.name)
            out[f.name] = asdict(v) if hasattr(v, "__dataclass_fields__") else v
        return out

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def with_overrides(self, **changes) -> ExperimentConfig:
        """Copy with nested overrides given as ``section__field=value``."""
        raw = self.to_dict()
        for key, value in changes.items():
            if "__" in key:
                sec, name = key.split("__", 1)
                raw.setdefault(sec, {})[name] = value
            else:
                raw[key] = value
        return parse_config(raw, self.base_dir)


def parse_config(raw: dict, base_dir: str | Path = ".") -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a JSON object")
    unknown = sorted(set(raw) - _TOP_KEYS)
    if unknown:
        raise ConfigError(f"unknown top-level key(s) {unknown}")
    version = raw.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")
    seed = raw.get("seed", 0)
    _require(_is_int(seed) and seed >= 0, "seed must be a non-negative integer", "seed")
    init = raw.get("initial_state", {})
    _require(isinstance(init, dict), "expected an object", "initial_state")
    cfg = ExperimentConfig(
        name=str(raw.get("name", "experiment")),
        seed=seed,
        hamiltonian=_section(HamiltonianSection, raw.get("hamiltonian"), "hamiltonian"),
        initial_state=init,
        evolution=_section(EvolutionSection, raw.get("evolution"), "evolution"),
        time_grid=_section(TimeGridSection, raw.get("time_grid"), "time_grid"),
        shadows=_section(ShadowSection, raw.get("shadows"), "shadows"),
        noise=_section(NoiseSection, raw.get("noise"), "noise"),
        postprocess=_section(PostprocessSection, raw.get("postprocess"), "postprocess"),
        oracle=_section(OracleSection, raw.get("oracle"), "oracle"),
        outputs=_section(OutputSection, raw.get("outputs"), "outputs"),
        output_dir=raw.get("output_dir"),
        description=str(raw.get("description", "")),
        base_dir=Path(base_dir),
    )
    _cross_checks(cfg)
    return cfg


def _cross_checks(cfg: ExperimentConfig) -> None:
    ev = cfg.evolution
    init = cfg.initial_state
    if ev.method == "variational":
        _require(not init, "the variational method prepares its own initial state; leave initial_state empty",
                 "initial_state")
        ratio = cfg.time_grid.dt / ev.vqs_dt
        _require(abs(ratio - round(ratio)) < 1e-9 and round(ratio) >= 1,
                 "time_grid.dt must be a whole multiple of evolution.vqs_dt", "evolution")
    else:
        forms = [k for k in ("basis", "superposition", "eigenstates") if k in init]
        _require(len(forms) == 1, "give exactly one of basis, superposition or eigenstates", "initial_state")
        extra = set(init) - {"basis", "superposition", "eigenstates", "n_eigen"}
        _require(not extra, f"unknown key(s) {sorted(extra)}", "initial_state")
        if forms[0] == "basis":
            _require(isinstance(init["basis"], str), "basis must be a bit string", "initial_state")
    noise = cfg.noise
    if noise.enabled:
        _require(ev.method in ("trotter", "variational"), "gate noise needs trotter or variational evolution", "noise")
    q = cfg.q
    _require(q >= 1, "locality must be >= 1", "postprocess")


def load_config(path: str | Path) -> ExperimentConfig:
    """Read a config file; bare names like ``spinring`` resolve to bundled recipes."""
    p = Path(path)
    if not p.exists() and p.suffix in ("", ".json") and p.parent == Path("."):
        bundled = resources.files("shadowspec") / "configs" / (p.stem + ".json")
        if bundled.is_file():
            text = bundled.read_text(encoding="utf-8")
            with resources.as_file(bundled) as real:
                return _parse_text(text, str(path), Path(real).parent)
    text = p.read_text(encoding="utf-8")
    return _parse_text(text, str(path), p.parent)


def _parse_text(text, name, base_dir):
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno}: {exc.msg}", name) from None
    return parse_config(raw, base_dir)


def bundled_configs() -> list[str]:
    root = resources.files("shadowspec") / "configs"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))

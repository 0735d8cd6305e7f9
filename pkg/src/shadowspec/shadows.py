"""Classical shadows from random single-qubit Pauli measurements.

Snapshots are kept as integer arrays (basis index 0/1/2 for X/Y/Z and the
measured bit per qubit) and never expanded into density matrices. The
inverse measurement channel is applied implicitly by the factorized
estimator: a snapshot contributes ``prod_j 3 * (-1)**b_j`` to a Pauli string
when its bases agree with every letter of the string, and zero otherwise.
"""

from __future__ import annotations

import io
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .pauli import LETTERS, PauliString
from .simulator import n_qubits_of, rotate_to_bases

_BASIS_CHARS = np.array(list("XYZ"))
MAGIC = b"SHDW0001"


@dataclass(frozen=True)
class Snapshot:
    bases: str
    outcome: str


@dataclass
class SnapshotSet:
    """``N_s`` snapshots of one state: ``bases[s, j]`` and ``outcomes[s, j]``."""

    bases: np.ndarray
    outcomes: np.ndarray

    def __post_init__(self):
        self.bases = np.asarray(self.bases, dtype=np.uint8)
        self.outcomes = np.asarray(self.outcomes, dtype=np.uint8)
        if self.bases.shape != self.outcomes.shape or self.bases.ndim != 2:
            raise ValueError("bases and outcomes must be equal-shape 2-D arrays")

    def __len__(self) -> int:
        return self.bases.shape[0]

    def __getitem__(self, i) -> Snapshot:
        return Snapshot(
            "".join(_BASIS_CHARS[self.bases[i]]), "".join(str(b) for b in self.outcomes[i])
        )

    def __iter__(self) -> Iterator[Snapshot]:
        return (self[i] for i in range(len(self)))

    @property
    def n_qubits(self) -> int:
        return self.bases.shape[1]


@dataclass(frozen=True)
class ShadowConfig:
    n_snapshots: int = 100
    n_batches: int = 3
    locality: int = 3

    def __post_init__(self):
        if not self.n_snapshots >= self.n_batches >= 1:
            raise ValueError("need n_snapshots >= n_batches >= 1")
        if self.locality < 1:
            raise ValueError("locality must be >= 1")


@dataclass
class ShadowSeries:
    """Snapshots per timestep: arrays of shape ``(N_T, N_s, n)``."""

    bases: np.ndarray
    outcomes: np.ndarray
    seed: int = 0
    dt: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.bases = np.asarray(self.bases, dtype=np.uint8)
        self.outcomes = np.asarray(self.outcomes, dtype=np.uint8)
        if self.bases.shape != self.outcomes.shape or self.bases.ndim != 3:
            raise ValueError("bases and outcomes must be equal-shape (N_T, N_s, n) arrays")

    @classmethod
    def from_sets(cls, sets: Sequence[SnapshotSet], seed: int = 0, dt: float | None = None):
        sizes = {len(s) for s in sets}
        if len(sizes) != 1:
            raise ValueError("every timestep must hold the same number of snapshots")
        return cls(
            np.stack([s.bases for s in sets]), np.stack([s.outcomes for s in sets]), seed, dt
        )

    @property
    def n_times(self) -> int:
        return self.bases.shape[0]

    @property
    def n_snapshots(self) -> int:
        return self.bases.shape[1]

    @property
    def n_qubits(self) -> int:
        return self.bases.shape[2]

    def at(self, n: int) -> SnapshotSet:
        return SnapshotSet(self.bases[n], self.outcomes[n])

    def nbytes_packed(self) -> int:
        per = self.n_times * self.n_snapshots * self.n_qubits
        return (3 * per + 7) // 8


# --------------------------------------------------------------------------
# collection


def sample_shadow_set(state: np.ndarray, n_snapshots: int, rng: np.random.Generator) -> SnapshotSet:
    """Draw ``n_snapshots`` randomized Pauli-basis measurements of ``state``.

    ``state`` may also be a stack of shape ``(n_snapshots, 2**n)``; snapshot
    ``s`` then measures row ``s`` (one trajectory per snapshot).
    """
    n = n_qubits_of(state)
    stacked = state.ndim == 2
    if stacked and state.shape[0] != n_snapshots:
        raise ValueError("need one state row per snapshot")
    bases = rng.integers(0, 3, size=(n_snapshots, n), dtype=np.uint8)
    draws = rng.random(n_snapshots)
    index = np.empty(n_snapshots, dtype=np.int64)
    if stacked:
        for s in range(n_snapshots):
            index[s] = _sample_index(state[s], bases[s], draws[s : s + 1])[0]
    else:
        uniq, inverse = np.unique(bases, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        for u, row in enumerate(uniq):
            members = np.nonzero(inverse == u)[0]
            index[members] = _sample_index(state, row, draws[members])
    outcomes = ((index[:, None] >> np.arange(n)) & 1).astype(np.uint8)
    return SnapshotSet(bases, outcomes)


def _sample_index(state, bases, draws):
    probs = np.abs(rotate_to_bases(state, bases)) ** 2
    cdf = np.cumsum(probs)
    idx = np.searchsorted(cdf, draws * cdf[-1], side="right")
    return np.minimum(idx, len(probs) - 1)


# --------------------------------------------------------------------------
# estimation


def single_snapshot_values(snapshots: SnapshotSet, pauli: PauliString) -> np.ndarray:
    """Per-snapshot unbiased estimates of ``<P>``; values in ``{0, +-3**locality}``."""
    if pauli.is_identity():
        raise ValueError("the identity is not a valid shadow observable")
    if pauli.n_qubits != snapshots.n_qubits:
        raise ValueError("Pauli string and snapshots have different qubit counts")
    vals = np.ones(len(snapshots))
    for qubit, letter in pauli.items():
        match = snapshots.bases[:, qubit] == LETTERS.index(letter)
        vals *= np.where(match, 3.0 * (1 - 2 * snapshots.outcomes[:, qubit].astype(float)), 0.0)
    return vals


def median_of_means(values: np.ndarray, n_batches: int) -> np.ndarray:
    """Median over ``K`` contiguous batch means along axis 0.

    Batches have size ``floor(N_s / K)``; trailing snapshots are unused.
    """
    n = values.shape[0]
    if n_batches < 1 or n < n_batches:
        raise ValueError(f"need at least {n_batches} snapshots, got {n}")
    r = n // n_batches
    batches = values[: r * n_batches].reshape((n_batches, r) + values.shape[1:]).mean(axis=1)
    if n_batches == 1:
        return batches[0]
    return np.median(batches, axis=0)


def estimate_pauli(snapshots: SnapshotSet, pauli: PauliString, n_batches: int = 3) -> float:
    if len(snapshots) == 0:
        raise ValueError("no snapshots")
    return float(median_of_means(single_snapshot_values(snapshots, pauli), n_batches))


class PauliPool:
    """Pauli strings grouped by locality with index arrays for vectorized estimation."""

    def __init__(self, paulis: Sequence[PauliString]):
        if not paulis:
            raise ValueError("empty Pauli pool")
        self.paulis = list(paulis)
        n = {p.n_qubits for p in self.paulis}
        if len(n) != 1:
            raise ValueError("pool mixes qubit counts")
        self.n_qubits = n.pop()
        groups: dict[int, list[int]] = {}
        for i, p in enumerate(self.paulis):
            if p.is_identity():
                raise ValueError("the identity is not a valid shadow observable")
            groups.setdefault(p.locality, []).append(i)
        self.groups = []
        for k, rows in sorted(groups.items()):
            qubits = np.array([[j for j, _ in self.paulis[i].items()] for i in rows], dtype=np.intp)
            letters = np.array(
                [[LETTERS.index(c) for _, c in self.paulis[i].items()] for i in rows], dtype=np.intp
            )
            self.groups.append((np.array(rows, dtype=np.intp), qubits, letters))

    def __len__(self):
        return len(self.paulis)

    def snapshot_values(self, snapshots: SnapshotSet) -> np.ndarray:
        """``(N_s, N_o)`` single-snapshot estimates for the whole pool."""
        ns = len(snapshots)
        sign = 3.0 * (1.0 - 2.0 * snapshots.outcomes.astype(float))  # (N_s, n)
        table = np.zeros((ns, self.n_qubits, 3))
        rows = np.arange(ns)[:, None]
        table[rows, np.arange(self.n_qubits)[None, :], snapshots.bases] = sign
        out = np.empty((ns, len(self.paulis)))
        for idx, qubits, letters in self.groups:
            vals = table[:, qubits[:, 0], letters[:, 0]]
            for j in range(1, qubits.shape[1]):
                vals = vals * table[:, qubits[:, j], letters[:, j]]
            out[:, idx] = vals
        return out

    def estimate(self, snapshots: SnapshotSet, n_batches: int = 3) -> np.ndarray:
        return median_of_means(self.snapshot_values(snapshots), n_batches)


def estimate_signal_matrix(
    series: ShadowSeries, pool: Sequence[PauliString] | PauliPool, n_batches: int = 3
) -> np.ndarray:
    """Raw signals ``(N_o, N_T)``: entry ``(k, n)`` estimates ``<P_k>`` at ``t_n``."""
    if not isinstance(pool, PauliPool):
        pool = PauliPool(pool)
    if pool.n_qubits != series.n_qubits:
        raise ValueError("pool and shadow series have different qubit counts")
    if series.n_snapshots < n_batches:
        raise ValueError("fewer snapshots per timestep than median-of-means batches")
    out = np.empty((len(pool), series.n_times))
    for n in range(series.n_times):
        out[:, n] = pool.estimate(series.at(n), n_batches)
    return out


def sample_complexity(q: int, n_observables: int, eps: float, delta: float) -> tuple[int, int]:
    """Snapshots per timestep and batch count guaranteeing ``eps`` accuracy.

    Returns ``(ceil(68 / eps**2 * 3**q * ln(2 N_o / delta)), ceil(2 ln(2 N_o / delta)))``.
    """
    if not 0 < eps <= 1 or not 0 < delta < 1:
        raise ValueError("eps must lie in (0, 1] and delta in (0, 1)")
    if q < 1 or n_observables < 1:
        raise ValueError("q and n_observables must be >= 1")
    log_term = math.log(2 * n_observables / delta)
    n_s = math.ceil(68 / eps**2 * 3**q * log_term)
    k = math.ceil(2 * log_term)
    return n_s, k


# --------------------------------------------------------------------------
# files


def write_shadow_text(series: ShadowSeries, path: str | Path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"qubits {series.n_qubits}\n")
        fh.write(f"timesteps {series.n_times}\n")
        fh.write(f"snapshots {series.n_snapshots}\n")
        fh.write(f"seed {series.seed}\n")
        if series.dt is not None:
            fh.write(f"# dt {series.dt!r}\n")
        basis_rows = _BASIS_CHARS[series.bases]
        for n in range(series.n_times):
            for s in range(series.n_snapshots):
                fh.write(
                    f"{n} {s} {''.join(basis_rows[n, s])} "
                    f"{''.join('1' if b else '0' for b in series.outcomes[n, s])}\n"
                )


class ShadowFormatError(ValueError):
    pass


def read_shadow_text(path: str | Path) -> ShadowSeries:
    header: dict[str, int] = {}
    dt = None
    lines = Path(path).read_text(encoding="ascii").splitlines()
    body_start = None
    for i, line in enumerate(lines):
        stripped = line.strip()
        if stripped.startswith("#"):
            parts = stripped[1:].split()
            if len(parts) == 2 and parts[0] == "dt":
                dt = float(parts[1])
            continue
        if not stripped:
            continue
        parts = stripped.split()
        if len(header) < 4:
            if len(parts) != 2 or parts[0] not in ("qubits", "timesteps", "snapshots", "seed"):
                raise ShadowFormatError(f"{path}:{i + 1}: expected header field")
            header[parts[0]] = int(parts[1])
            continue
        body_start = i
        break
    missing = {"qubits", "timesteps", "snapshots", "seed"} - set(header)
    if missing:
        raise ShadowFormatError(f"{path}: missing header fields {sorted(missing)}")
    n, nt, ns = header["qubits"], header["timesteps"], header["snapshots"]
    bases = np.full((nt, ns, n), 255, dtype=np.uint8)
    outcomes = np.zeros((nt, ns, n), dtype=np.uint8)
    lookup = {"X": 0, "Y": 1, "Z": 2}
    for i in range(body_start if body_start is not None else len(lines), len(lines)):
        line = lines[i].split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            t, s = int(parts[0]), int(parts[1])
            bstr, ostr = parts[2], parts[3]
            if len(parts) != 4 or len(bstr) != n or len(ostr) != n:
                raise ValueError
            bases[t, s] = [lookup[c] for c in bstr]
            outcomes[t, s] = [int(c) for c in ostr]
            if set(ostr) - {"0", "1"}:
                raise ValueError
        except (ValueError, KeyError, IndexError):
            raise ShadowFormatError(f"{path}:{i + 1}: malformed snapshot line") from None
    if np.any(bases == 255):
        raise ShadowFormatError(f"{path}: snapshot records missing")
    return ShadowSeries(bases, outcomes, header["seed"], dt)


def write_shadow_binary(series: ShadowSeries, path: str | Path) -> None:
    """Packed little-endian variant: header then 2-bit bases and 1-bit outcomes."""
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<QQQQd", series.n_qubits, series.n_times, series.n_snapshots,
                          series.seed, series.dt if series.dt is not None else float("nan")))
    b = series.bases.reshape(-1)
    bits = np.stack([b & 1, (b >> 1) & 1], axis=-1).reshape(-1)
    buf.write(np.packbits(bits, bitorder="little").tobytes())
    buf.write(np.packbits(series.outcomes.reshape(-1), bitorder="little").tobytes())
    Path(path).write_bytes(buf.getvalue())


def read_shadow_binary(path: str | Path) -> ShadowSeries:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise ShadowFormatError(f"{path}: not a packed shadow file")
    n, nt, ns, seed, dt = struct.unpack_from("<QQQQd", raw, 8)
    offset = 8 + struct.calcsize("<QQQQd")
    total = n * nt * ns
    nb = (2 * total + 7) // 8
    no = (total + 7) // 8
    if len(raw) != offset + nb + no:
        raise ShadowFormatError(f"{path}: expected {offset + nb + no} bytes, found {len(raw)}")
    bits = np.unpackbits(np.frombuffer(raw, np.uint8, nb, offset), bitorder="little")[: 2 * total]
    bases = (bits[0::2] | (bits[1::2] << 1)).astype(np.uint8).reshape(nt, ns, n)
    if np.any(bases > 2):
        raise ShadowFormatError(f"{path}: invalid basis code")
    outcomes = np.unpackbits(np.frombuffer(raw, np.uint8, no, offset + nb), bitorder="little")[:total]
    return ShadowSeries(bases, outcomes.reshape(nt, ns, n), int(seed), None if math.isnan(dt) else dt)

"""Matrix-free statevector simulation.

States are plain complex numpy arrays of length ``2**n`` (basis index bit
``j`` is qubit ``j``). Functions that accept a state also accept a stack of
states with the basis index on the last axis.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import eigh_tridiagonal, schur

from .pauli import PauliString, PauliSumHamiltonian, _pauli_action

log = logging.getLogger(__name__)

BASIS_INDEX = {"X": 0, "Y": 1, "Z": 2}
_S = 1 / math.sqrt(2)
# Rotations mapping the X / Y / Z eigenbasis onto the computational basis:
# H for X, H S^dag for Y, identity for Z.
_BASIS_ROTATIONS = np.array(
    [
        [[_S, _S], [_S, -_S]],
        [[_S, -1j * _S], [_S, 1j * _S]],
        [[1, 0], [0, 1]],
    ],
    dtype=complex,
)


class KrylovConvergenceError(RuntimeError):
    pass


def n_qubits_of(state: np.ndarray) -> int:
    dim = state.shape[-1]
    n = dim.bit_length() - 1
    if dim < 2 or 1 << n != dim:
        raise ValueError(f"state dimension {dim} is not a power of two")
    return n


def zero_state(n_qubits: int) -> np.ndarray:
    psi = np.zeros(1 << n_qubits, dtype=complex)
    psi[0] = 1.0
    return psi


def basis_state(bits: str) -> np.ndarray:
    """Computational basis state from a bit string written qubit 0 first."""
    if not bits or set(bits) - {"0", "1"}:
        raise ValueError(f"invalid basis string {bits!r}")
    psi = np.zeros(1 << len(bits), dtype=complex)
    psi[int(bits[::-1], 2)] = 1.0
    return psi


def norm(state: np.ndarray) -> float:
    return float(np.linalg.norm(state))


def normalize(state: np.ndarray) -> np.ndarray:
    """Explicit renormalization; logs the correction that was applied."""
    nrm = norm(state)
    if nrm == 0.0:
        raise ValueError("cannot normalize the zero vector")
    if abs(nrm - 1.0) > 1e-12:
        log.info("renormalizing state, norm was %.3e off unity", nrm - 1.0)
    return state / nrm


def _check_dims(state: np.ndarray, pauli: PauliString) -> None:
    if state.shape[-1] != 1 << pauli.n_qubits:
        raise ValueError(
            f"state dimension {state.shape[-1]} does not match {pauli.n_qubits}-qubit operator"
        )


def apply_pauli_rotation(state: np.ndarray, pauli: PauliString, angle: float) -> np.ndarray:
    """``exp(-i angle P) |state>`` computed as ``cos|s> - i sin P|s>``."""
    _check_dims(state, pauli)
    perm, phase = _pauli_action(pauli.n_qubits, pauli.x, pauli.z)
    if pauli.x == 0:
        # diagonal Pauli, phase is real +-1
        return np.exp(-1j * angle * phase.real) * state
    return math.cos(angle) * state - 1j * math.sin(angle) * (phase * state[..., perm])


# --------------------------------------------------------------------------
# exact propagation


def _lanczos_exp(apply_h, psi, tau, tol_step, max_dim):
    """One Krylov step; returns (new_psi, ok)."""
    beta0 = np.linalg.norm(psi)
    basis = [psi / beta0]
    alphas, betas = [], []
    for m in range(max_dim):
        w = apply_h(basis[m])
        a = np.vdot(basis[m], w).real
        w = w - a * basis[m]
        if m > 0:
            w = w - betas[-1] * basis[m - 1]
        # full reorthogonalization
        for v in basis:
            w -= np.vdot(v, w) * v
        b = np.linalg.norm(w)
        alphas.append(a)
        dim = m + 1
        if dim == 1:
            evals, evecs = np.array([a]), np.ones((1, 1))
        else:
            evals, evecs = eigh_tridiagonal(np.array(alphas), np.array(betas))
        coeffs = evecs @ (np.exp(-1j * tau * evals) * evecs[0].conj())
        err = b * abs(coeffs[-1]) * beta0
        if b < 1e-14 * max(1.0, abs(a)) or err <= tol_step:
            out = np.zeros_like(psi)
            for c, v in zip(coeffs, basis):
                out += c * v
            return out * beta0, True
        betas.append(b)
        basis.append(w / b)
    return None, False


def krylov_evolve(
    ham: PauliSumHamiltonian,
    state: np.ndarray,
    t: float,
    tol: float = 1e-10,
    max_dim: int = 64,
) -> np.ndarray:
    """``exp(-i t H) |state>`` by a restarted Lanczos propagator.

    The interval is split into substeps whose sizes adapt so that each
    substep's a-posteriori error stays below ``tol * |tau| / |t|``; the total
    2-norm error is then bounded by ``tol``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if state.shape[-1] != ham.dim:
        raise ValueError("state dimension does not match Hamiltonian")
    psi = np.array(state, dtype=complex)
    if t == 0.0 or not ham.terms:
        return psi
    total = abs(t)
    sgn = 1.0 if t > 0 else -1.0
    done = 0.0
    tau = min(total, 8.0 / max(ham.norm_bound(), 1e-300) * max_dim / 16)
    tau = min(tau, total)
    while done < total * (1 - 1e-15):
        tau = min(tau, total - done)
        new, ok = _lanczos_exp(ham.apply, psi, sgn * tau, tol * tau / total, max_dim)
        if not ok:
            tau /= 2
            if tau < total * 1e-12:
                raise KrylovConvergenceError(
                    f"Krylov propagator failed to converge with max dimension {max_dim}"
                )
            continue
        psi = new
        done += tau
        tau *= 1.5
    return psi


# --------------------------------------------------------------------------
# product formulas and noise


@dataclass(frozen=True)
class TimeGrid:
    """Measurement times ``t_n = n * dt`` for ``n = 0 .. n_steps - 1``."""

    n_steps: int
    dt: float
    trotter_substeps: int = 1

    def __post_init__(self):
        if self.n_steps < 2:
            raise ValueError("need at least two measurement times")
        if not self.dt > 0:
            raise ValueError("measurement spacing must be positive")
        if self.trotter_substeps < 1:
            raise ValueError("trotter_substeps must be >= 1")

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps) * self.dt

    @property
    def trotter_dt(self) -> float:
        return self.dt / self.trotter_substeps

    @property
    def nyquist(self) -> float:
        return math.pi / self.dt

    @property
    def bin_width(self) -> float:
        return 2 * math.pi / (self.n_steps * self.dt)


@dataclass(frozen=True)
class NoiseModel:
    """Depolarizing rates per rotation; ``two_qubit_rate`` is lambda."""

    two_qubit_rate: float = 0.0
    single_qubit_rate: float = 0.0
    enabled: bool = True

    def __post_init__(self):
        for name in ("two_qubit_rate", "single_qubit_rate"):
            r = getattr(self, name)
            if not 0.0 <= r <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {r}")
        if 16 * self.two_qubit_rate / 15 > 1 or 4 * self.single_qubit_rate / 3 > 1:
            raise ValueError("depolarizing rate too large for a valid channel")

    @property
    def active(self) -> bool:
        return self.enabled and (self.two_qubit_rate > 0 or self.single_qubit_rate > 0)


@dataclass
class GateCounter:
    """Rotations executed, split by locality of the rotated string."""

    single: int = 0
    multi: int = 0

    @property
    def total(self) -> int:
        return self.single + self.multi

    def xi(self, noise: NoiseModel) -> float:
        """Expected number of non-trivial Pauli errors, ``lambda * N_gates``."""
        return noise.two_qubit_rate * self.multi + noise.single_qubit_rate * self.single


def _endpoints(pauli: PauliString) -> tuple[int, int]:
    sup = pauli.support
    return sup[0], sup[-1]


@dataclass
class _Term:
    pauli: PauliString
    perm: np.ndarray | None
    factor: np.ndarray | complex  # diagonal phase factor, or -i sin * phase
    cos: float
    locality: int


class TrotterCircuit:
    """First-order product formula ``prod_l exp(-i c_l P_l dt)`` in term order."""

    def __init__(self, ham: PauliSumHamiltonian, dt: float):
        if not dt > 0:
            raise ValueError("Trotter step must be positive")
        self.ham = ham
        self.dt = dt
        self._matrix: np.ndarray | None = None
        self._schur = None
        self._terms: list[_Term] = []
        for coeff, pauli in ham.terms:
            angle = coeff * dt
            if pauli.is_identity():
                self._terms.append(_Term(pauli, None, complex(np.exp(-1j * angle)), 0.0, 0))
                continue
            perm, phase = _pauli_action(pauli.n_qubits, pauli.x, pauli.z)
            if pauli.x == 0:
                self._terms.append(
                    _Term(pauli, None, np.exp(-1j * angle * phase.real), 0.0, pauli.locality)
                )
            else:
                self._terms.append(
                    _Term(pauli, perm, -1j * math.sin(angle) * phase, math.cos(angle), pauli.locality)
                )

    @property
    def gates_per_step(self) -> GateCounter:
        c = GateCounter()
        for term in self._terms:
            if term.locality == 1:
                c.single += 1
            elif term.locality >= 2:
                c.multi += 1
        return c

    def step_matrix(self) -> np.ndarray:
        """Dense noiseless step ``M`` acting on row states as ``psi @ M``."""
        if self._matrix is None:
            dim = 1 << self.ham.n_qubits
            self._matrix = self._apply(np.eye(dim, dtype=complex), None)
        return self._matrix

    def _apply(self, psi, draws):
        for g, term in enumerate(self._terms):
            if term.perm is None:
                psi = term.factor * psi
            else:
                psi = term.cos * psi + term.factor * psi[..., term.perm]
            if draws is not None and draws[g] is not None:
                psi = _apply_jumps(psi, term.pauli, *draws[g])
        return psi

    def step(
        self,
        state: np.ndarray,
        noise: NoiseModel | None = None,
        rng: np.random.Generator | None = None,
        counter: GateCounter | None = None,
    ) -> np.ndarray:
        noisy = noise is not None and noise.active
        if noisy and rng is None:
            raise ValueError("a random generator is required when noise is enabled")
        if counter is not None:
            per = self.gates_per_step
            counter.single += per.single
            counter.multi += per.multi
        draws = None
        if noisy:
            size = int(np.prod(state.shape[:-1])) if state.ndim > 1 else 1
            draws = [
                _draw_jumps(term.pauli, noise, rng, size) if term.locality else None
                for term in self._terms
            ]
            if not any(d is not None and d[0].any() for d in draws):
                draws = None
        batched = state.ndim > 1 and state.shape[0] > 1
        if draws is None and batched and self.ham.n_qubits <= _DENSE_MAX_QUBITS:
            return state @ self.step_matrix()
        return self._apply(state, draws)

    def power_propagator(self):
        """Callable ``f(psi, k)`` applying ``k`` noiseless steps to a row state."""
        if self._schur is None:
            t, z = schur(self.step_matrix().T, output="complex")
            off = t - np.diag(np.diag(t))
            if np.abs(off).max(initial=0.0) > 1e-8:
                raise ArithmeticError("Trotter step matrix is not numerically normal")
            d = np.diag(t)
            self._schur = (z, d / np.abs(d))
        z, d = self._schur

        def prop(psi, k):
            return z @ (d**k * (z.conj().T @ psi)) if k else psi

        return prop

    def noisy_trajectories(
        self,
        psi0: np.ndarray,
        n_steps: int,
        n_rows: int,
        noise: NoiseModel,
        rng: np.random.Generator,
        chunk: int = 256,
    ) -> np.ndarray:
        """``n_rows`` independent noisy runs of ``n_steps`` steps from ``psi0``.

        Jump events are drawn for the whole circuit up front (in blocks of
        ``chunk`` steps), and jump-free stretches are propagated with powers
        of the cached step unitary. For wide registers the step-by-step path
        is used instead.
        """
        psi0 = np.asarray(psi0, dtype=complex)
        if self.ham.n_qubits > _DENSE_MAX_QUBITS or not noise.active:
            rows = np.tile(psi0, (n_rows, 1))
            for _ in range(n_steps):
                rows = self.step(rows, noise, rng)
            return rows
        gates = [g for g, term in enumerate(self._terms) if term.locality]
        p_jump = np.array([
            16 * noise.two_qubit_rate / 15 if self._terms[g].locality >= 2 else 4 * noise.single_qubit_rate / 3
            for g in gates
        ])
        highs = np.array([16 if self._terms[g].locality >= 2 else 4 for g in gates])
        events: dict[int, list[tuple[int, int, int]]] = {}
        for start in range(0, n_steps, chunk):
            span = min(chunk, n_steps - start)
            hit = rng.random((span, len(gates), n_rows)) < p_jump[None, :, None]
            st, gi, row = np.nonzero(hit)
            kinds = rng.integers(0, highs[gi])
            for a, b, r, k in zip(st, gi, row, kinds):
                events.setdefault(int(r), []).append((start + int(a), gates[b], int(k)))
        prop = self.power_propagator()
        clean = prop(psi0, n_steps)
        out = np.tile(clean, (n_rows, 1))
        yes = np.ones(1, dtype=bool)
        for r, ev in events.items():
            phi, cur = psi0, 0
            for s in sorted({e[0] for e in ev}):
                phi = prop(phi, s - cur)
                draws = [None] * len(self._terms)
                for _, g, k in (e for e in ev if e[0] == s):
                    draws[g] = (yes, np.array([k]))
                phi = self._apply(phi[None, :], draws)[0]
                cur = s + 1
            out[r] = prop(phi, n_steps - cur)
        return out


_DENSE_MAX_QUBITS = 10
_TWO_QUBIT_LETTERS = [(a, b) for a in "IXYZ" for b in "IXYZ"]


def _draw_jumps(pauli, noise, rng, size):
    """Per-row jump flags and Pauli choices for one noisy gate."""
    if pauli.locality >= 2:
        p_jump, n_choices = 16 * noise.two_qubit_rate / 15, 16
    else:
        p_jump, n_choices = 4 * noise.single_qubit_rate / 3, 4
    if p_jump == 0.0:
        return None
    return rng.random(size) < p_jump, rng.integers(0, n_choices, size=size)


def _apply_jumps(psi, pauli, jumps, choice):
    if not jumps.any():
        return psi
    size = jumps.size
    n = pauli.n_qubits
    flat = psi.reshape(size, -1).copy()
    i, j = _endpoints(pauli)
    for k in np.unique(choice[jumps]):
        rows = np.nonzero(jumps & (choice == k))[0]
        if pauli.locality >= 2:
            a, b = _TWO_QUBIT_LETTERS[k]
            letters = {q: c for q, c in ((i, a), (j, b)) if c != "I"}
        else:
            letters = {i: "IXYZ"[k]} if k else {}
        if not letters:
            continue
        err = PauliString.from_letters(n, letters)
        flat[rows] = err.apply(flat[rows])
    return flat.reshape(psi.shape)


def _depolarize(psi, pauli, noise, rng):
    """Pauli-jump unraveling of the depolarizing channel on the rotated string."""
    size = int(np.prod(psi.shape[:-1])) if psi.ndim > 1 else 1
    draw = _draw_jumps(pauli, noise, rng, size)
    return psi if draw is None else _apply_jumps(psi, pauli, *draw)


def trotter_step(
    ham: PauliSumHamiltonian,
    state: np.ndarray,
    dt: float,
    noise: NoiseModel | None = None,
    rng: np.random.Generator | None = None,
    counter: GateCounter | None = None,
) -> np.ndarray:
    """Single first-order Trotter step; see :class:`TrotterCircuit`."""
    return TrotterCircuit(ham, dt).step(state, noise, rng, counter)


# --------------------------------------------------------------------------
# measurement


def parse_bases(bases: str | Sequence[int] | np.ndarray, n_qubits: int) -> np.ndarray:
    if isinstance(bases, str):
        try:
            arr = np.array([BASIS_INDEX[c] for c in bases.upper()], dtype=np.int8)
        except KeyError:
            raise ValueError(f"bases must be letters X/Y/Z, got {bases!r}") from None
    else:
        arr = np.asarray(bases, dtype=np.int8)
    if arr.shape != (n_qubits,):
        raise ValueError(f"need one basis per qubit ({n_qubits}), got {arr.shape}")
    if arr.min() < 0 or arr.max() > 2:
        raise ValueError("basis indices must be 0 (X), 1 (Y) or 2 (Z)")
    return arr


def rotate_to_bases(state: np.ndarray, bases: np.ndarray) -> np.ndarray:
    """Copy of ``state`` with each qubit rotated so Z-measurement reads ``bases``."""
    n = len(bases)
    tensor = np.asarray(state, dtype=complex).reshape((2,) * n)
    for q in range(n):
        b = bases[q]
        if b == 2:
            continue
        axis = n - 1 - q
        tensor = np.moveaxis(np.tensordot(_BASIS_ROTATIONS[b], tensor, axes=([1], [axis])), 0, axis)
    return tensor.reshape(-1)


def outcome_bits(index: int, n_qubits: int) -> np.ndarray:
    return np.array([(index >> q) & 1 for q in range(n_qubits)], dtype=np.uint8)


def measure_snapshot(
    state: np.ndarray, bases: str | Sequence[int] | np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Sample one outcome after rotating qubit ``j`` into ``bases[j]``.

    Returns the bits ordered qubit 0 first. ``state`` is not modified.
    """
    n = n_qubits_of(state)
    b = parse_bases(bases, n)
    probs = np.abs(rotate_to_bases(state, b)) ** 2
    cdf = np.cumsum(probs)
    idx = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    return outcome_bits(min(idx, len(probs) - 1), n)


def born_probabilities(state: np.ndarray, bases) -> np.ndarray:
    n = n_qubits_of(state)
    return np.abs(rotate_to_bases(state, parse_bases(bases, n))) ** 2


# --------------------------------------------------------------------------
# initial states


@dataclass
class PreparedState:
    vector: np.ndarray
    eigenvalues: list[float] | None = None
    weights: list[complex] = field(default_factory=list)


def prepare_initial_state(spec: dict, ham: PauliSumHamiltonian | None = None) -> PreparedState:
    """Build a normalized initial state from a spec dictionary.

    Accepted forms (basis strings are written qubit 0 first):

    * ``{"basis": "0110"}``
    * ``{"superposition": [[amp, "0110"], [amp, "1010"], ...]}``; an amplitude
      may be a real number or a ``[re, im]`` pair
    * ``{"eigenstates": [w0, w1, ...]}`` weights on the lowest eigenvectors
      of ``ham``, in ascending energy order
    """
    if "basis" in spec:
        return PreparedState(basis_state(spec["basis"]), weights=[1.0])
    if "superposition" in spec:
        psi = None
        weights = []
        for amp, bits in spec["superposition"]:
            a = complex(*amp) if isinstance(amp, (list, tuple)) else complex(amp)
            vec = basis_state(bits)
            psi = a * vec if psi is None else psi + a * vec
            weights.append(a)
        if psi is None or norm(psi) == 0.0:
            raise ValueError("initial-state superposition has zero norm")
        return PreparedState(psi / norm(psi), weights=weights)
    if "eigenstates" in spec:
        if ham is None:
            raise ValueError("an eigenstate initial state needs a Hamiltonian")
        from .oracle import lowest_eigenpairs

        weights = [complex(*w) if isinstance(w, (list, tuple)) else complex(w) for w in spec["eigenstates"]]
        last = max((i for i, w in enumerate(weights) if w != 0), default=None)
        if last is None:
            raise ValueError("eigenstate weights are all zero")
        k = int(spec.get("n_eigen", last + 1))
        if last >= k:
            raise ValueError(f"eigenstate index {last} beyond the {k} requested eigenpairs")
        sol = lowest_eigenpairs(ham, k)
        psi = np.zeros(ham.dim, dtype=complex)
        for w, vec in zip(weights, sol.vectors):
            psi += w * vec
        psi /= norm(psi)
        return PreparedState(psi, eigenvalues=[float(e) for e in sol.values[: last + 1]], weights=weights)
    raise ValueError(f"unrecognised initial-state spec keys: {sorted(spec)}")


# --------------------------------------------------------------------------
# state dumps: 8-byte little-endian qubit count, then interleaved re/im doubles


def save_state(state: np.ndarray, path) -> None:
    n = n_qubits_of(state)
    with open(path, "wb") as fh:
        fh.write(np.uint64(n).astype("<u8").tobytes())
        fh.write(np.asarray(state, dtype="<c16").tobytes())


def load_state(path) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 8:
        raise ValueError(f"{path}: truncated state dump")
    n = int(np.frombuffer(raw[:8], dtype="<u8")[0])
    if n > 40 or len(raw) != 8 + 16 * (1 << n):
        raise ValueError(f"{path}: size does not match a {n}-qubit state")
    return np.frombuffer(raw[8:], dtype="<c16").astype(complex)

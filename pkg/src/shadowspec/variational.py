"""Variational real- and imaginary-time evolution (McLachlan).

The ansatz is ``|psi(theta)> = exp(i theta_g) prod_k exp(-i theta_k P_k / 2) |0>``
with the global phase ``theta_g`` stored as the last parameter. At every
step the metric ``A_ij = <d_i psi|d_j psi>`` and gradient
``C_i = <d_i psi|H|psi>`` are formed from exact statevector derivatives and
the regularized linear system is solved for the parameter velocities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .pauli import PauliString, PauliSumHamiltonian, _pauli_action
from .simulator import GateCounter, NoiseModel, _depolarize, krylov_evolve, zero_state


class VariationalSolveError(RuntimeError):
    def __init__(self, message: str, condition: float):
        super().__init__(f"{message} (condition estimate {condition:.3e})")
        self.condition = condition


@dataclass
class AnsatzCircuit:
    """Sequence of Pauli-rotation gates, each with its own parameter."""

    n_qubits: int
    generators: list[PauliString]

    def __post_init__(self):
        for g in self.generators:
            if g.n_qubits != self.n_qubits or g.is_identity():
                raise ValueError(f"invalid generator {g}")

    @property
    def n_params(self) -> int:
        """Gate parameters plus the trailing global phase."""
        return len(self.generators) + 1

    @property
    def phase_index(self) -> int:
        return len(self.generators)

    def state(self, theta: np.ndarray) -> np.ndarray:
        theta = self._check(theta)
        psi = zero_state(self.n_qubits)
        for angle, gen in zip(theta[:-1], self.generators):
            psi = _rotate(psi, gen, angle / 2)
        return np.exp(1j * theta[-1]) * psi

    def state_and_derivatives(self, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """``|psi>`` and the stack of all ``d|psi>/d theta_i`` (shape ``(P, 2**n)``).

        One sweep over the gates propagates every derivative branch at once:
        branch ``k`` picks up ``-i P_k / 2`` right after gate ``k``.
        """
        theta = self._check(theta)
        n_gates = len(self.generators)
        rows = np.zeros((n_gates + 1, 1 << self.n_qubits), dtype=complex)
        rows[:, 0] = 1.0
        for k, (angle, gen) in enumerate(zip(theta[:-1], self.generators)):
            rows = _rotate(rows, gen, angle / 2)
            rows[k] = -0.5j * gen.apply(rows[k])
        rows *= np.exp(1j * theta[-1])
        psi = rows[-1]
        derivs = rows.copy()
        derivs[-1] = 1j * psi
        return psi, derivs

    def noisy_states(
        self, theta: np.ndarray, n_samples: int, noise: NoiseModel, rng: np.random.Generator,
        counter: GateCounter | None = None,
    ) -> np.ndarray:
        """``n_samples`` Pauli-jump trajectories of the circuit, one row each."""
        theta = self._check(theta)
        rows = np.zeros((n_samples, 1 << self.n_qubits), dtype=complex)
        rows[:, 0] = 1.0
        for angle, gen in zip(theta[:-1], self.generators):
            rows = _rotate(rows, gen, angle / 2)
            if counter is not None:
                if gen.locality == 1:
                    counter.single += 1
                else:
                    counter.multi += 1
            if noise.active:
                rows = _depolarize(rows, gen, noise, rng)
        return np.exp(1j * theta[-1]) * rows

    def parameter_derivative(self, theta: np.ndarray, i: int) -> np.ndarray:
        if not 0 <= i < self.n_params:
            raise IndexError(f"parameter index {i} out of range ({self.n_params} parameters)")
        return self.state_and_derivatives(theta)[1][i]

    def _check(self, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got {theta.shape}")
        return theta


def _rotate(state, gen, angle):
    perm, phase = _pauli_action(gen.n_qubits, gen.x, gen.z)
    return math.cos(angle) * state - 1j * math.sin(angle) * (phase * state[..., perm])


def hardware_efficient_ansatz(n_qubits: int, layers: int = 5, ring: bool = True) -> AnsatzCircuit:
    """Layers of RX and RZ on every qubit followed by nearest-neighbour ZZ rotations."""
    gens = []
    bonds = [(j, j + 1) for j in range(n_qubits - 1)]
    if ring and n_qubits > 2:
        bonds.append((n_qubits - 1, 0))
    for _ in range(layers):
        for letter in "XZ":
            gens += [PauliString.from_letters(n_qubits, {j: letter}) for j in range(n_qubits)]
        gens += [PauliString.from_letters(n_qubits, {i: "Z", j: "Z"}) for i, j in bonds]
    return AnsatzCircuit(n_qubits, gens)


@dataclass(frozen=True)
class VQSConfig:
    dt: float = 1e-2
    regularization: float = 1e-4
    mode: Literal["real", "imaginary"] = "real"
    regularization_form: Literal["shift", "least_squares"] = "shift"

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.regularization < 0:
            raise ValueError("regularization must be non-negative")
        if self.mode not in ("real", "imaginary"):
            raise ValueError("mode must be 'real' or 'imaginary'")
        if self.regularization_form not in ("shift", "least_squares"):
            raise ValueError("regularization_form must be 'shift' or 'least_squares'")


@dataclass
class StepResult:
    theta: np.ndarray
    theta_dot: np.ndarray
    residual: float
    condition: float
    energy: float


def metric_and_gradient(circuit: AnsatzCircuit, theta: np.ndarray, ham: PauliSumHamiltonian):
    """``(A, C, psi)`` with ``A_ij = <d_i psi|d_j psi>`` and ``C_i = <d_i psi|H|psi>``."""
    psi, derivs = circuit.state_and_derivatives(theta)
    a = derivs.conj() @ derivs.T
    c = derivs.conj() @ ham.apply(psi)
    return a, c, psi


def solve_tikhonov(
    matrix: np.ndarray, rhs: np.ndarray, reg: float, form: str = "shift"
) -> tuple[np.ndarray, float]:
    """Regularized solve of ``M x = rhs`` for symmetric positive semidefinite ``M``.

    ``form="shift"`` returns ``(M + reg I)^{-1} rhs``, the minimizer of the
    McLachlan distance plus ``reg ||x||^2``. ``form="least_squares"`` minimizes
    ``||rhs - M x||^2 + reg ||x||^2`` instead, which damps small-eigenvalue
    directions far more strongly (cutoff near ``sqrt(reg)`` rather than ``reg``).
    """
    try:
        evals, evecs = np.linalg.eigh(matrix)
    except np.linalg.LinAlgError as exc:
        raise VariationalSolveError("eigendecomposition of the metric failed", float("inf")) from exc
    top = np.max(np.abs(evals))
    low = np.min(np.abs(evals))
    cond = top / low if low > 0 else float("inf")
    if form == "shift":
        num, denom = np.ones_like(evals), evals + reg
    elif form == "least_squares":
        num, denom = evals, evals**2 + reg
    else:
        raise ValueError(f"unknown regularization form {form!r}")
    # exactly singular and unregularized: pseudo-inverse on the null space
    denom = np.where(np.abs(denom) <= 1e-14 * max(top, 1.0), np.inf, denom)
    x = evecs @ ((num / denom) * (evecs.T @ rhs))
    if not np.all(np.isfinite(x)):
        raise VariationalSolveError("non-finite parameter velocities", cond)
    return x, cond


def mclachlan_step(
    circuit: AnsatzCircuit, theta: np.ndarray, ham: PauliSumHamiltonian, config: VQSConfig
) -> StepResult:
    """One explicit Euler step ``theta + theta_dot * dt``.

    Real time solves ``Re(A) theta_dot = Im(C)``, imaginary time
    ``Re(A) theta_dot = -Re(C)``, both with Tikhonov regularization
    (see :func:`solve_tikhonov`).
    """
    a, c, psi = metric_and_gradient(circuit, theta, ham)
    m = a.real
    m = (m + m.T) / 2
    rhs = c.imag if config.mode == "real" else -c.real
    theta_dot, cond = solve_tikhonov(m, rhs, config.regularization, config.regularization_form)
    residual = float(np.linalg.norm(m @ theta_dot - rhs))
    energy = float(np.vdot(psi, ham.apply(psi)).real)
    return StepResult(np.asarray(theta) + theta_dot * config.dt, theta_dot, residual, cond, energy)


@dataclass
class VQSTrajectory:
    times: np.ndarray
    thetas: np.ndarray
    states: np.ndarray
    energies: np.ndarray
    fidelities: np.ndarray | None = None
    residuals: list[float] = field(default_factory=list)

    @property
    def min_fidelity(self) -> float:
        return float(np.min(self.fidelities)) if self.fidelities is not None else float("nan")


def vqs_evolve(
    circuit: AnsatzCircuit,
    theta0: np.ndarray,
    ham: PauliSumHamiltonian,
    config: VQSConfig,
    n_steps: int,
    record_every: int = 1,
    reference: bool = False,
) -> VQSTrajectory:
    """Iterate :func:`mclachlan_step`, recording every ``record_every`` steps.

    With ``reference=True`` (real time only) the fidelity against exact
    evolution of the initial variational state is recorded as well.
    """
    if record_every < 1:
        raise ValueError("record_every must be >= 1")
    theta = np.asarray(theta0, dtype=float).copy()
    psi0 = circuit.state(theta)
    exact = psi0.copy() if reference and config.mode == "real" else None
    times, thetas, states, energies, fids, residuals = [], [], [], [], [], []

    def record(step, psi):
        times.append(step * config.dt)
        thetas.append(theta.copy())
        states.append(psi)
        energies.append(ham.expectation(psi))
        if exact is not None:
            fids.append(abs(np.vdot(exact, psi)) ** 2)

    record(0, psi0)
    for step in range(1, n_steps + 1):
        res = mclachlan_step(circuit, theta, ham, config)
        theta = res.theta
        residuals.append(res.residual)
        if exact is not None:
            exact = krylov_evolve(ham, exact, config.dt)
        if step % record_every == 0:
            record(step, circuit.state(theta))
    return VQSTrajectory(
        np.array(times), np.array(thetas), np.array(states), np.array(energies),
        np.array(fids) if exact is not None else None, residuals,
    )

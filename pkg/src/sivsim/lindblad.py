"""Lindblad generators, exact and fixed-step propagation, steady states.

Vectorisation is column stacking: ``vec(A X B) = (B^T kron A) vec(X)``.
Hamiltonians are in Hz; the 2*pi factor is applied here.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .errors import (
    NonUniqueSteadyStateError,
    NumericalInstabilityError,
    ParameterDomainError,
    StepSizeError,
)

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class LindbladModel:
    """Hamiltonian (Hz) plus collapse operators with rates (1/s)."""

    hamiltonian: np.ndarray
    collapse_ops: tuple = ()
    fluorescence_states: tuple = ()  # eigenbasis indices counted as bright
    fluorescence_rate: float = 0.0

    def __post_init__(self):
        h = np.asarray(self.hamiltonian, dtype=complex)
        if h.ndim != 2 or h.shape[0] != h.shape[1]:
            raise ParameterDomainError(f"Hamiltonian must be square, got {h.shape}")
        object.__setattr__(self, "hamiltonian", h)
        ops = []
        for op, rate in self.collapse_ops:
            op = np.asarray(op, dtype=complex)
            if op.shape != h.shape:
                raise ParameterDomainError(
                    f"collapse operator shape {op.shape} does not match {h.shape}"
                )
            if not (rate >= 0 and np.isfinite(rate)):
                raise ParameterDomainError(f"collapse rate must be finite and >= 0, got {rate}")
            ops.append((op, float(rate)))
        object.__setattr__(self, "collapse_ops", tuple(ops))

    @property
    def dim(self) -> int:
        return self.hamiltonian.shape[0]


def vec(rho: np.ndarray) -> np.ndarray:
    return np.asarray(rho).reshape(-1, order="F")


def unvec(v: np.ndarray, dim: int) -> np.ndarray:
    return np.asarray(v).reshape((dim, dim), order="F")


def liouvillian(model: LindbladModel) -> np.ndarray:
    h = model.hamiltonian
    n = model.dim
    eye = np.eye(n)
    gen = -1j * TWO_PI * (np.kron(eye, h) - np.kron(h.T, eye))
    for c, rate in model.collapse_ops:
        if rate == 0.0:
            continue
        cdc = c.conj().T @ c
        gen += rate * (
            np.kron(c.conj(), c) - 0.5 * np.kron(eye, cdc) - 0.5 * np.kron(cdc.T, eye)
        )
    return gen


def rhs(model: LindbladModel, rho: np.ndarray) -> np.ndarray:
    """Matrix-form right-hand side, independent of the superoperator route."""
    h = model.hamiltonian
    out = -1j * TWO_PI * (h @ rho - rho @ h)
    for c, rate in model.collapse_ops:
        if rate == 0.0:
            continue
        cd = c.conj().T
        cdc = cd @ c
        out += rate * (c @ rho @ cd - 0.5 * (cdc @ rho + rho @ cdc))
    return out


def generator_from_rhs(model: LindbladModel) -> np.ndarray:
    """Superoperator assembled column by column from :func:`rhs` on matrix units.

    Independent of the Kronecker construction in :func:`liouvillian`.
    """
    n = model.dim
    gen = np.zeros((n * n, n * n), dtype=complex)
    for j in range(n):
        for i in range(n):
            e = np.zeros((n, n), dtype=complex)
            e[i, j] = 1.0
            gen[:, i + n * j] = vec(rhs(model, e))
    return gen


def check_density_matrix(rho: np.ndarray, herm_tol=1e-10, trace_tol=1e-10, pos_tol=1e-9):
    """Raise :class:`NumericalInstabilityError` naming the first violated invariant."""
    herm = np.abs(rho - rho.conj().T).max()
    if herm > herm_tol:
        raise NumericalInstabilityError(f"state not Hermitian (deviation {herm:.3g})")
    tr = np.trace(rho).real
    if abs(tr - 1) > trace_tol:
        raise NumericalInstabilityError(f"trace is {tr!r}, expected 1")
    lam = np.linalg.eigvalsh((rho + rho.conj().T) / 2).min()
    if lam < -pos_tol:
        raise NumericalInstabilityError(f"negative eigenvalue {lam:.3g}")


def clean_state(rho: np.ndarray, pos_tol: float = 1e-9) -> np.ndarray:
    """Re-Hermitise and renormalise; a significantly negative eigenvalue is an error."""
    rho = (rho + rho.conj().T) / 2
    tr = np.trace(rho).real
    if not np.isfinite(tr) or tr <= 0:
        raise NumericalInstabilityError(f"trace is {tr!r}")
    rho = rho / tr
    lam = np.linalg.eigvalsh(rho).min()
    if lam < -pos_tol:
        raise NumericalInstabilityError(f"negative eigenvalue {lam:.3g} after evolution")
    return rho


class Propagator:
    """exp(L t) for one generator and duration; immutable and shareable."""

    def __init__(self, generator: np.ndarray, duration: float):
        if duration < 0:
            raise ParameterDomainError("duration must be >= 0")
        self.duration = float(duration)
        self.dim = int(round(np.sqrt(generator.shape[0])))
        self.matrix = expm(generator * duration) if duration > 0 else None

    def apply(self, rho: np.ndarray) -> np.ndarray:
        if self.matrix is None:
            return clean_state(np.array(rho, dtype=complex))
        return clean_state(unvec(self.matrix @ vec(rho), self.dim))


def propagator(model: LindbladModel, duration: float) -> Propagator:
    return Propagator(liouvillian(model), duration)


def evolve(model: LindbladModel, rho0: np.ndarray, duration: float) -> np.ndarray:
    """Exact propagation via the superoperator exponential."""
    rho0 = np.asarray(rho0, dtype=complex)
    if rho0.shape != model.hamiltonian.shape:
        raise ParameterDomainError("state and model dimensions differ")
    return propagator(model, duration).apply(rho0)


def evolve_rk4(model: LindbladModel, rho0: np.ndarray, duration: float, step: float):
    """Classic fixed-step RK4 on the matrix-form equation (cross-check only)."""
    if step <= 0:
        raise ParameterDomainError("step must be positive")
    if duration < 0:
        raise ParameterDomainError("duration must be >= 0")
    rho = np.array(rho0, dtype=complex)
    if duration == 0:
        return rho
    nsteps = max(1, int(np.ceil(duration / step - 1e-9)))
    dt = duration / nsteps
    n = model.dim
    gen = generator_from_rhs(model)
    # RK4 is unstable once |lambda| dt leaves roughly 2.5 along either axis
    radius = float(np.abs(np.linalg.eigvals(gen)).max()) * dt
    if radius > 2.5:
        raise StepSizeError(f"step too large for RK4 stability (|lambda| dt = {radius:.3g})")
    v = vec(rho)
    tr0 = np.trace(rho).real
    for _ in range(nsteps):
        k1 = gen @ v
        k2 = gen @ (v + 0.5 * dt * k1)
        k3 = gen @ (v + 0.5 * dt * k2)
        k4 = gen @ (v + dt * k3)
        v = v + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    rho = unvec(v, n)
    drift = abs(np.trace(rho).real - tr0)
    if not np.isfinite(drift) or drift > 1e-6:
        raise StepSizeError(f"trace drifted by {drift:.3g}; reduce the step")
    return rho


def steady_state(model: LindbladModel, rtol: float = 1e-12) -> np.ndarray:
    """Unique trace-one fixed point of the generator."""
    gen = liouvillian(model)
    n = model.dim
    _, s, vh = np.linalg.svd(gen)
    scale = max(s[0], 1e-300)
    null = np.flatnonzero(s <= rtol * scale)
    if len(null) != 1:
        raise NonUniqueSteadyStateError(
            f"generator kernel has dimension {len(null)} (expected 1)"
        )
    rho = unvec(vh[null[0]].conj(), n)
    tr = np.trace(rho)
    if abs(tr) < 1e-14:
        raise NonUniqueSteadyStateError("kernel vector is traceless")
    rho = rho / tr
    return (rho + rho.conj().T) / 2


def residual(model: LindbladModel, rho: np.ndarray) -> float:
    """‖L vec(rho)‖ relative to the generator norm."""
    gen = liouvillian(model)
    return float(np.linalg.norm(gen @ vec(rho)) / max(np.linalg.norm(gen, 2), 1e-300))


def trace_distance(a: np.ndarray, b: np.ndarray) -> float:
    d = a - b
    return 0.5 * float(np.abs(np.linalg.eigvalsh((d + d.conj().T) / 2)).sum())


def populations(rho: np.ndarray) -> np.ndarray:
    return np.real(np.diag(rho)).copy()

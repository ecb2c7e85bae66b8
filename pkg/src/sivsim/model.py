"""Ground-state Hamiltonian of the negatively charged silicon-vacancy centre.

The 8-dimensional ground manifold is the product orbital (x) electron spin (x)
29Si nuclear spin, ordered so that the basis index is
``4*[orbital = -] + 2*[spin = down] + [nuclear = down]``.  Orbital states are
the L_z eigenstates |+>, |->.  All energies are ordinary frequencies in Hz.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .constants import BOLTZMANN, PLANCK
from .errors import ClassificationError, DegeneracyError, ParameterDomainError

# --------------------------------------------------------------------------
# single-factor operators

_I2 = np.eye(2, dtype=complex)
_SX = np.array([[0, 1], [1, 0]], dtype=complex) / 2
_SY = np.array([[0, -1j], [1j, 0]], dtype=complex) / 2
_SZ = np.array([[1, 0], [0, -1]], dtype=complex) / 2
_LZ = np.array([[1, 0], [0, -1]], dtype=complex)
_ORB_X = np.array([[0, 1], [1, 0]], dtype=complex)  # |+><-| + |-><+|
_ORB_Y = np.array([[0, 1j], [-1j, 0]], dtype=complex)  # i|+><-| - i|-><+|


def embed(orbital=None, spin=None, nuclear=None) -> np.ndarray:
    """Tensor single-factor operators into the 8-dim space (identity where omitted)."""
    o = _I2 if orbital is None else orbital
    s = _I2 if spin is None else spin
    n = _I2 if nuclear is None else nuclear
    return np.kron(np.kron(o, s), n)


LZ = embed(orbital=_LZ)
ORBITAL_FLIP = embed(orbital=_ORB_X)
ORBITAL_FLIP_Y = embed(orbital=_ORB_Y)
SX, SY, SZ = (embed(spin=m) for m in (_SX, _SY, _SZ))
IX, IY, IZ = (embed(nuclear=m) for m in (_SX, _SY, _SZ))
LZSZ = LZ @ SZ
SPIN = (SX, SY, SZ)
NUCLEAR = (IX, IY, IZ)

DIM = 8
LOWER, UPPER = 0, 1
UP, DOWN = 0.5, -0.5

ELECTRON_FLIP = "electron-flip-nuclear-preserving"
BOTH_FLIPPED = "both-flipped"


@dataclass(frozen=True)
class SivParameters:
    """Model constants.  Frequencies in Hz, gyromagnetic ratios in Hz/T, rates in 1/s.

    ``a_perp`` defaults to ``a_par`` when left as ``None``.
    """

    lambda_so: float = 50e9
    a_par: float = 70e6
    a_perp: float | None = None
    gamma_s: float = 28.0e9
    gamma_l: float = 14.0e9
    orbital_quench_f: float = 0.1
    gamma_n: float = -8.465e6
    strain_alpha: float = 0.0
    strain_beta: float = 0.0
    gamma0_orbital: float = 0.0
    gamma_phi_extra: float = 0.0

    def __post_init__(self):
        if self.a_perp is None:
            object.__setattr__(self, "a_perp", self.a_par)
        for name, value in self.as_dict().items():
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                raise ParameterDomainError(f"{name} must be a finite number, got {value!r}")
        if self.lambda_so <= 0:
            raise ParameterDomainError("lambda_so must be positive")
        if self.gamma0_orbital < 0 or self.gamma_phi_extra < 0:
            raise ParameterDomainError("rates must be non-negative")

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    def replace(self, **changes) -> "SivParameters":
        values = self.as_dict()
        if "a_par" in changes and "a_perp" not in changes and values["a_perp"] == values["a_par"]:
            # keep an isotropic tensor isotropic
            values["a_perp"] = None
        values.update(changes)
        return SivParameters(**values)


@dataclass(frozen=True)
class MagneticField:
    """Field of ``magnitude`` tesla; polar angle measured from the SiV symmetry axis."""

    magnitude: float
    polar_angle: float = 0.0
    azimuth: float = 0.0

    def __post_init__(self):
        for name in ("magnitude", "polar_angle", "azimuth"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ParameterDomainError(f"field {name} must be finite")
        if self.magnitude < 0:
            raise ParameterDomainError("field magnitude must be >= 0")

    @classmethod
    def from_degrees(cls, magnitude, polar_deg, azimuth_deg=0.0):
        return cls(magnitude, math.radians(polar_deg), math.radians(azimuth_deg))

    @property
    def vector(self) -> np.ndarray:
        st = math.sin(self.polar_angle)
        return self.magnitude * np.array(
            [st * math.cos(self.azimuth), st * math.sin(self.azimuth), math.cos(self.polar_angle)]
        )


def build_ground_hamiltonian(params: SivParameters, field: MagneticField) -> np.ndarray:
    """Return the 8x8 Hermitian ground-state Hamiltonian in Hz."""
    bx, by, bz = field.vector
    p = params
    h = -p.lambda_so * LZSZ
    h = h + p.strain_alpha * ORBITAL_FLIP + p.strain_beta * ORBITAL_FLIP_Y
    h = h + p.orbital_quench_f * p.gamma_l * bz * LZ
    h = h + p.gamma_s * (bx * SX + by * SY + bz * SZ)
    h = h + p.a_par * (SZ @ IZ) + p.a_perp * (SX @ IX + SY @ IY)
    h = h + p.gamma_n * (bx * IX + by * IY + bz * IZ)
    if not np.all(np.isfinite(h)):
        raise ParameterDomainError("Hamiltonian has non-finite entries")
    return (h + h.conj().T) / 2


# --------------------------------------------------------------------------
# spectrum and labels


@dataclass(frozen=True)
class EnergySpectrum:
    energies: np.ndarray  # Hz, ascending
    vectors: np.ndarray  # columns are eigenvectors in the product basis
    branch: np.ndarray  # LOWER / UPPER per eigenstate
    spin: np.ndarray  # +0.5 / -0.5 along the branch quantisation axis
    nuclear: np.ndarray  # +0.5 / -0.5
    spin_axes: np.ndarray  # (2, 3): mean electron quantisation axis per branch
    nuclear_axes: np.ndarray  # (2, 3)
    spin_margin: float = field(default=np.inf)
    nuclear_margin: float = field(default=np.inf)

    @property
    def lower(self) -> np.ndarray:
        return np.flatnonzero(self.branch == LOWER)

    @property
    def upper(self) -> np.ndarray:
        return np.flatnonzero(self.branch == UPPER)

    def index(self, branch: int, spin: float, nuclear: float) -> int:
        hits = np.flatnonzero(
            (self.branch == branch) & (self.spin == spin) & (self.nuclear == nuclear)
        )
        if len(hits) != 1:
            raise ClassificationError(
                f"no unique eigenstate for branch={branch} spin={spin} nuclear={nuclear}"
            )
        return int(hits[0])

    def label(self, k: int) -> str:
        b = "lower" if self.branch[k] == LOWER else "upper"
        s = "up" if self.spin[k] > 0 else "down"
        n = "up" if self.nuclear[k] > 0 else "down"
        return f"{b}:e-{s}:n-{n}"

    def to_eigenbasis(self, op: np.ndarray) -> np.ndarray:
        return self.vectors.conj().T @ op @ self.vectors

    def to_product_basis(self, op: np.ndarray) -> np.ndarray:
        return self.vectors @ op @ self.vectors.conj().T

    @property
    def branch_gap(self) -> float:
        return float(self.energies[self.upper].mean() - self.energies[self.lower].mean())

    @property
    def drive_axis(self) -> np.ndarray:
        """Unit vector perpendicular to the lower-branch quantisation axis."""
        n = self.spin_axes[LOWER]
        for trial in (np.array([1.0, 0, 0]), np.array([0, 1.0, 0])):
            e = trial - (trial @ n) * n
            norm = np.linalg.norm(e)
            if norm > 1e-6:
                return e / norm
        raise ClassificationError("cannot construct a transverse drive axis")

    def drive_operator(self) -> np.ndarray:
        """Electron spin component along :attr:`drive_axis` (product basis)."""
        e = self.drive_axis
        return e[0] * SX + e[1] * SY + e[2] * SZ


def _expect(vectors, op):
    return np.real(np.einsum("ik,ij,jk->k", vectors.conj(), op, vectors))


def _mean_axis(vecs, reference):
    """Sign-align ``vecs`` to ``reference`` and return their normalised mean."""
    aligned = [v if v @ reference >= 0 else -v for v in vecs]
    total = np.sum(aligned, axis=0)
    norm = np.linalg.norm(total)
    if norm < 1e-12:
        return reference / np.linalg.norm(reference)
    return total / norm


def _rank_split(values, idx):
    """Stable descending rank: first half gets +0.5, second half -0.5."""
    order = np.argsort(-np.asarray(values), kind="stable")
    half = len(idx) // 2
    labels = {}
    for rank, j in enumerate(order):
        labels[idx[j]] = UP if rank < half else DOWN
    sorted_vals = np.asarray(values)[order]
    margin = float(sorted_vals[half - 1] - sorted_vals[half])
    return labels, margin


def diagonalize(h: np.ndarray, params: SivParameters | None = None) -> EnergySpectrum:
    """Diagonalise a ground Hamiltonian and label the eigenstates.

    Branches are assigned by ranking <L_z S_z> (the four largest form the
    lower branch).  Within each branch the electron label is the sign of <S>
    projected on the branch-mean quantisation axis, oriented so that spin-up
    states lie higher in energy; nuclear labels use the analogous nuclear
    axis.  Exact ties fall back to eigenvector index order.
    """
    h = np.asarray(h, dtype=complex)
    if h.shape != (DIM, DIM):
        raise ParameterDomainError(f"expected an {DIM}x{DIM} operator, got {h.shape}")
    scale = max(np.abs(h).max(), 1.0)
    if np.abs(h - h.conj().T).max() > 1e-12 * scale:
        raise ParameterDomainError("Hamiltonian is not Hermitian")
    energies, vectors = np.linalg.eigh(h)

    lzsz = _expect(vectors, LZSZ)
    branch = np.full(DIM, UPPER)
    branch[np.argsort(-lzsz, kind="stable")[:4]] = LOWER

    svec = np.stack([_expect(vectors, op) for op in SPIN], axis=1)
    ivec = np.stack([_expect(vectors, op) for op in NUCLEAR], axis=1)
    spin = np.zeros(DIM)
    nuclear = np.zeros(DIM)
    spin_axes = np.zeros((2, 3))
    nuclear_axes = np.zeros((2, 3))
    spin_margin = nuclear_margin = np.inf
    z = np.array([0.0, 0.0, 1.0])
    for b in (LOWER, UPPER):
        idx = np.flatnonzero(branch == b)
        n = _mean_axis(svec[idx], z)
        # orient so that the spin-up states carry the larger mean energy
        proj = svec[idx] @ n
        tilt = float(np.sum((energies[idx] - energies[idx].mean()) * proj))
        if tilt < -1e-9 * scale:
            n = -n
        spin_axes[b] = n
        labels, margin = _rank_split(svec[idx] @ n, idx)
        spin_margin = min(spin_margin, margin)
        for k, v in labels.items():
            spin[k] = v
        m = _mean_axis(ivec[idx], n)
        nuclear_axes[b] = m
        for s in (UP, DOWN):
            sub = idx[spin[idx] == s]
            labels, margin = _rank_split(ivec[sub] @ m, sub)
            nuclear_margin = min(nuclear_margin, margin)
            for k, v in labels.items():
                nuclear[k] = v
    return EnergySpectrum(
        energies=energies,
        vectors=vectors,
        branch=branch,
        spin=spin,
        nuclear=nuclear,
        spin_axes=spin_axes,
        nuclear_axes=nuclear_axes,
        spin_margin=spin_margin,
        nuclear_margin=nuclear_margin,
    )


def spectrum_for(params: SivParameters, field: MagneticField) -> EnergySpectrum:
    return diagonalize(build_ground_hamiltonian(params, field), params)


# --------------------------------------------------------------------------
# ODMR lines


@dataclass(frozen=True)
class OdmrLine:
    frequency: float  # Hz
    strength: float  # |<f|S_perp|i>|^2
    kind: str
    upper_state: int  # eigenstate index of the spin-up level
    lower_state: int  # eigenstate index of the spin-down level
    nuclear: float  # nuclear label of the spin-up level


def _require_resolved(spectrum: EnergySpectrum, tol: float = 1e-6):
    if spectrum.spin_margin < tol:
        raise ClassificationError(
            f"electron-spin labels are ambiguous (projection margin {spectrum.spin_margin:.3g})"
        )
    if spectrum.nuclear_margin < tol:
        raise ClassificationError(
            f"nuclear-spin labels are ambiguous (projection margin {spectrum.nuclear_margin:.3g})"
        )


def odmr_transitions(spectrum: EnergySpectrum) -> list[OdmrLine]:
    """The four lower-branch electron spin-flip lines.

    Returned order: nuclear-preserving (nuclear up, nuclear down), then
    both-flipped (starting from nuclear up, nuclear down).
    """
    _require_resolved(spectrum)
    drive = spectrum.to_eigenbasis(spectrum.drive_operator())
    lines = []
    for kind, flip in ((ELECTRON_FLIP, False), (BOTH_FLIPPED, True)):
        for n in (UP, DOWN):
            try:
                u = spectrum.index(LOWER, UP, n)
                d = spectrum.index(LOWER, DOWN, -n if flip else n)
            except ClassificationError as exc:
                raise ClassificationError(f"cannot pair lower-branch states: {exc}") from None
            lines.append(
                OdmrLine(
                    frequency=float(spectrum.energies[u] - spectrum.energies[d]),
                    strength=float(abs(drive[u, d]) ** 2),
                    kind=kind,
                    upper_state=u,
                    lower_state=d,
                    nuclear=n,
                )
            )
    return lines


def nuclear_preserving_lines(spectrum: EnergySpectrum) -> list[OdmrLine]:
    return [l for l in odmr_transitions(spectrum) if l.kind == ELECTRON_FLIP]


def line_separation(spectrum: EnergySpectrum) -> float:
    a, b = nuclear_preserving_lines(spectrum)
    return abs(a.frequency - b.frequency)


# --------------------------------------------------------------------------
# thermal quantities


def _check_temperature(temperature):
    if not (temperature > 0 and math.isfinite(temperature)):
        raise ParameterDomainError(f"temperature must be positive, got {temperature!r}")


def thermal_populations(spectrum: EnergySpectrum, temperature: float) -> np.ndarray:
    _check_temperature(temperature)
    x = PLANCK * (spectrum.energies - spectrum.energies.min()) / (BOLTZMANN * temperature)
    w = np.exp(-x)
    return w / w.sum()


def thermal_state(spectrum: EnergySpectrum, temperature: float) -> np.ndarray:
    """Gibbs state in the product basis."""
    p = thermal_populations(spectrum, temperature)
    rho = spectrum.to_product_basis(np.diag(p).astype(complex))
    return (rho + rho.conj().T) / 2


def bose_occupation(nu: float, temperature: float) -> float:
    _check_temperature(temperature)
    x = PLANCK * nu / (BOLTZMANN * temperature)
    # 1/(e^x - 1) written to avoid overflow for large x
    return math.exp(-x) / -math.expm1(-x)


def phonon_rates(params: SivParameters, nu: float, temperature: float) -> tuple[float, float]:
    """Single-phonon absorption and emission rates across a gap ``nu`` (Hz)."""
    if not (nu > 0 and math.isfinite(nu)):
        raise ParameterDomainError(f"phonon frequency must be positive, got {nu!r}")
    nbar = bose_occupation(nu, temperature)
    g0 = params.gamma0_orbital
    return g0 * nbar, g0 * (nbar + 1.0)


def bath(params: SivParameters, temperature: float) -> Callable[[float], tuple[float, float]]:
    """Rates as a function of transition frequency, for per-pair Bose factors."""
    _check_temperature(temperature)
    return lambda nu: phonon_rates(params, nu, temperature)


def phonon_weights(spectrum: EnergySpectrum, tol: float = 1e-14, max_iter: int = 10000):
    """Branching weights of the orbital-flip coupling between branches.

    Returns ``(lower, upper, w)`` where ``w[i, j]`` weights the channel between
    ``lower[i]`` and ``upper[j]``.  The matrix |<n|V|m>|^2 is balanced so that
    every row and every column sums to one: each state then leaves its branch
    at exactly the bare up/down rate, and the same weight serves both
    directions of a pair, which keeps detailed balance exact.
    """
    lower, upper = spectrum.lower, spectrum.upper
    v = spectrum.to_eigenbasis(ORBITAL_FLIP)
    k = np.abs(v[np.ix_(lower, upper)]) ** 2
    if np.any(k.sum(axis=1) <= 0) or np.any(k.sum(axis=0) <= 0):
        raise DegeneracyError("a state has no inter-branch phonon coupling")
    return lower, upper, _balance(k, tol, max_iter)


def _balance(k: np.ndarray, tol: float, max_iter: int) -> np.ndarray:
    """Doubly stochastic scaling diag(x) k diag(y).

    A few Sinkhorn sweeps give a warm start; Newton steps on the log
    scalings then converge quickly even when k is nearly decomposable,
    where plain Sinkhorn stalls.
    """
    n = k.shape[0]
    x = np.ones(n)
    y = np.ones(n)
    for _ in range(50):
        x = 1.0 / (k @ y)
        y = 1.0 / (k.T @ x)
    lx, ly = np.log(x), np.log(y)
    for _ in range(max_iter):
        w = np.exp(lx)[:, None] * k * np.exp(ly)[None, :]
        f = np.concatenate([w.sum(axis=1) - 1, w.sum(axis=0)[1:] - 1])
        if np.abs(f).max() < tol:
            return w
        jac = np.zeros((2 * n - 1, 2 * n - 1))
        jac[:n, :n] = np.diag(w.sum(axis=1))
        jac[:n, n:] = w[:, 1:]
        jac[n:, :n] = w[:, 1:].T
        jac[n:, n:] = np.diag(w.sum(axis=0)[1:])
        step = np.linalg.solve(jac, -f)
        lx = lx + step[:n]
        ly[1:] = ly[1:] + step[n:]
    raise DegeneracyError("phonon weight balancing did not converge")


def _rate_function(rates):
    if callable(rates):
        return rates
    up, down = rates
    return lambda nu: (up, down)


def phonon_channels(spectrum: EnergySpectrum, rates) -> list[tuple[int, int, float]]:
    """Secular phonon jumps as ``(destination, source, rate)`` eigenstate triples.

    ``rates`` is either a fixed ``(gamma_up, gamma_down)`` pair or a callable
    mapping a transition frequency to such a pair.
    """
    f = _rate_function(rates)
    lower, upper, w = phonon_weights(spectrum)
    out = []
    for i, m in enumerate(lower):
        for j, n in enumerate(upper):
            nu = spectrum.energies[n] - spectrum.energies[m]
            up, down = f(nu)
            out.append((int(n), int(m), up * w[i, j]))
            out.append((int(m), int(n), down * w[i, j]))
    return out


def phonon_jump_operators(spectrum: EnergySpectrum, rates, basis: str = "product"):
    """Jump operators |n><m| with their rates, in the product or eigen basis."""
    ops = []
    for n, m, rate in phonon_channels(spectrum, rates):
        if basis == "eigen":
            op = np.zeros((DIM, DIM), dtype=complex)
            op[n, m] = 1.0
        elif basis == "product":
            op = np.outer(spectrum.vectors[:, n], spectrum.vectors[:, m].conj())
        else:
            raise ValueError(f"unknown basis {basis!r}")
        ops.append((op, rate))
    return ops


def spin_flip_rate(spectrum: EnergySpectrum, rates) -> float:
    """Summed rate of all phonon channels that change the electron-spin label."""
    return float(
        sum(r for n, m, r in phonon_channels(spectrum, rates) if spectrum.spin[n] != spectrum.spin[m])
    )


def upper_branch_fraction(spectrum: EnergySpectrum, temperature: float) -> float:
    p = thermal_populations(spectrum, temperature)
    return float(p[spectrum.upper].sum())

"""Pulse protocols compiled into piecewise-constant Lindblad models.

All states handled here are expressed in the energy eigenbasis of the
ground Hamiltonian.  A single rotating frame at the microwave carrier is
used for the whole sequence, so free evolution accumulates phase at the
detuning from each line.
"""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import lindblad as lb
from .errors import (
    ClassificationError,
    DegenerateSignalError,
    ParameterDomainError,
    ProtocolError,
)
from .model import (
    DIM,
    DOWN,
    LOWER,
    UP,
    EnergySpectrum,
    MagneticField,
    SivParameters,
    bath,
    nuclear_preserving_lines,
    phonon_channels,
    spectrum_for,
    thermal_populations,
)

CARRIER_BAND = 10e9  # Hz allowed between carrier and the nearest lower-branch line


def _check_duration(d):
    if not (d >= 0 and math.isfinite(d)):
        raise ParameterDomainError(f"segment duration must be finite and >= 0, got {d!r}")


@dataclass(frozen=True)
class OpticalPump:
    rate: float  # 1/s
    duration: float  # s

    def __post_init__(self):
        _check_duration(self.duration)
        if not (self.rate >= 0 and math.isfinite(self.rate)):
            raise ParameterDomainError("pump rate must be finite and >= 0")


@dataclass(frozen=True)
class MicrowaveDrive:
    carrier: float  # Hz
    rabi_amplitude: float  # Hz
    duration: float  # s
    phase: float = 0.0  # rad

    def __post_init__(self):
        _check_duration(self.duration)
        if not (self.rabi_amplitude >= 0 and math.isfinite(self.rabi_amplitude)):
            raise ParameterDomainError("Rabi amplitude must be finite and >= 0")
        if not (math.isfinite(self.carrier) and math.isfinite(self.phase)):
            raise ParameterDomainError("carrier and phase must be finite")


@dataclass(frozen=True)
class Wait:
    duration: float

    def __post_init__(self):
        _check_duration(self.duration)


Segment = OpticalPump | MicrowaveDrive | Wait


@dataclass(frozen=True)
class PulseSequence:
    """Ordered segments.  ``sample_resolution=None`` records segment edges only."""

    segments: tuple
    sample_resolution: float | None = 1e-9

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        if self.sample_resolution is not None and not self.sample_resolution > 0:
            raise ParameterDomainError("sample_resolution must be positive")
        carriers = {s.carrier for s in self.segments if isinstance(s, MicrowaveDrive)}
        if len(carriers) > 1:
            raise ProtocolError("a sequence may use only one microwave carrier")

    @property
    def carrier(self) -> float | None:
        for s in self.segments:
            if isinstance(s, MicrowaveDrive):
                return s.carrier
        return None

    @property
    def duration(self) -> float:
        return float(sum(s.duration for s in self.segments))


@dataclass
class SimulationTrace:
    times: np.ndarray
    fluorescence: np.ndarray
    populations: np.ndarray  # (n_samples, 8), eigenbasis
    segment_starts: list  # (sample index, segment kind) per non-empty segment
    final_state: np.ndarray

    @property
    def optical_starts(self) -> list[int]:
        return [i for i, kind in self.segment_starts if kind == "optical"]


class SivSystem:
    """Spectrum, bath and cached generators for one parameter point.

    Compiled models and propagators are cached under a lock, so one system
    can be shared by worker threads.
    """

    def __init__(
        self,
        params: SivParameters,
        field: MagneticField,
        temperature: float,
        spectrum: EnergySpectrum | None = None,
    ):
        self.params = params
        self.field = field
        self.temperature = float(temperature)
        self.spectrum = spectrum if spectrum is not None else spectrum_for(params, field)
        self._lock = threading.Lock()
        self._models: dict = {}
        self._props: dict = {}
        self._phonons = self._phonon_ops()
        self._dephasing = self._dephasing_ops()
        self._drive, self.drive_norm = self._drive_matrix()

    # -- static pieces -------------------------------------------------------

    def _phonon_ops(self):
        if self.params.gamma0_orbital == 0:
            return []
        ops = []
        for n, m, rate in phonon_channels(self.spectrum, bath(self.params, self.temperature)):
            op = np.zeros((DIM, DIM), dtype=complex)
            op[n, m] = 1.0
            ops.append((op, rate))
        return ops

    def _dephasing_ops(self):
        g = self.params.gamma_phi_extra
        if g == 0:
            return []
        # rate 2g on diag(sigma) damps opposite-spin coherences at g
        return [(np.diag(self.spectrum.spin).astype(complex), 2.0 * g)]

    def _drive_matrix(self):
        sp = self.spectrum
        s_e = sp.to_eigenbasis(sp.drive_operator())
        lines = nuclear_preserving_lines(sp)
        norm = float(np.mean([2 * abs(s_e[l.upper_state, l.lower_state]) for l in lines]))
        if norm <= 0:
            raise ClassificationError("the microwave drive does not couple the spin-flip lines")
        m = np.zeros((DIM, DIM), dtype=complex)
        for j in range(DIM):
            for k in range(DIM):
                if sp.branch[j] == sp.branch[k] and sp.spin[j] == UP and sp.spin[k] == DOWN:
                    m[j, k] = 2 * s_e[j, k] / norm
        return m, norm

    # -- public helpers ------------------------------------------------------

    @property
    def pump_sources(self) -> tuple[int, ...]:
        sp = self.spectrum
        return tuple(sp.index(LOWER, UP, n) for n in (UP, DOWN))

    def pump_targets(self) -> tuple[int, ...]:
        sp = self.spectrum
        return tuple(sp.index(LOWER, DOWN, n) for n in (UP, DOWN))

    def thermal(self) -> np.ndarray:
        return np.diag(thermal_populations(self.spectrum, self.temperature)).astype(complex)

    def frame_hamiltonian(self, carrier: float | None) -> np.ndarray:
        e = self.spectrum.energies - self.spectrum.energies.mean()
        if carrier is not None:
            e = e - carrier * self.spectrum.spin
        return np.diag(e).astype(complex)

    def _check_carrier(self, carrier):
        lines = [l.frequency for l in nuclear_preserving_lines(self.spectrum)]
        if min(abs(carrier - f) for f in lines) > CARRIER_BAND:
            raise ParameterDomainError(
                f"carrier {carrier:.6g} Hz is more than 10 GHz from every spin-flip line"
            )

    def compile(self, segment, carrier: float | None = None) -> lb.LindbladModel:
        """Lindblad model of one segment in the frame rotating at ``carrier``."""
        if isinstance(segment, MicrowaveDrive):
            carrier = segment.carrier
            key = ("mw", carrier, segment.rabi_amplitude, segment.phase)
        elif isinstance(segment, OpticalPump):
            key = ("pump", carrier, segment.rate)
        elif isinstance(segment, Wait):
            key = ("wait", carrier)
        else:
            raise ProtocolError(f"unknown segment {segment!r}")
        with self._lock:
            cached = self._models.get(key)
        if cached is not None:
            return cached
        if carrier is not None:
            self._check_carrier(carrier)
        h = self.frame_hamiltonian(carrier)
        ops = list(self._phonons) + list(self._dephasing)
        fl_states, fl_rate = (), 0.0
        if isinstance(segment, MicrowaveDrive):
            m = self._drive * np.exp(-1j * segment.phase)
            m = m + m.conj().T
            h = h + 0.5 * segment.rabi_amplitude * m
        elif isinstance(segment, OpticalPump):
            for src, dst in zip(self.pump_sources, self.pump_targets()):
                op = np.zeros((DIM, DIM), dtype=complex)
                op[dst, src] = 1.0
                ops.append((op, segment.rate))
            fl_states, fl_rate = self.pump_sources, segment.rate
        model = lb.LindbladModel(h, tuple(ops), fl_states, fl_rate)
        with self._lock:
            self._models[key] = model
        return model

    def propagator(self, model: lb.LindbladModel, key, duration: float) -> lb.Propagator:
        pkey = (key, float(duration))
        with self._lock:
            prop = self._props.get(pkey)
        if prop is None:
            prop = lb.Propagator(lb.liouvillian(model), duration)
            with self._lock:
                self._props[pkey] = prop
        return prop


def compile_segment(
    segment,
    spectrum: EnergySpectrum,
    params: SivParameters,
    temperature: float,
    frame_carrier: float | None = None,
    field: MagneticField | None = None,
) -> lb.LindbladModel:
    system = SivSystem(params, field, temperature, spectrum=spectrum)
    return system.compile(segment, frame_carrier)


def _fluorescence(model: lb.LindbladModel, rho: np.ndarray) -> float:
    if not model.fluorescence_states:
        return 0.0
    return model.fluorescence_rate * float(
        sum(rho[k, k].real for k in model.fluorescence_states)
    )


def _segment_kind(seg) -> str:
    if isinstance(seg, OpticalPump):
        return "optical"
    if isinstance(seg, MicrowaveDrive):
        return "microwave"
    return "wait"


def run_sequence(
    seq: PulseSequence, system: SivSystem, rho0: np.ndarray | None = None
) -> SimulationTrace:
    """Evolve through ``seq`` and record the fluorescence trace.

    Samples fall at each segment start and every ``sample_resolution``
    inside it, plus one final sample at the end of the sequence.
    """
    rho = system.thermal() if rho0 is None else np.array(rho0, dtype=complex)
    lb.check_density_matrix(rho, herm_tol=1e-9, trace_tol=1e-9)
    carrier = seq.carrier
    dt = seq.sample_resolution
    times, fluo, pops, starts = [], [], [], []
    t = 0.0
    for seg in seq.segments:
        if seg.duration == 0:
            continue
        model = system.compile(seg, carrier)
        key = (type(seg).__name__, getattr(seg, "rate", None), getattr(seg, "rabi_amplitude", None),
               getattr(seg, "phase", None), carrier)
        starts.append((len(times), _segment_kind(seg)))
        if dt is None:
            steps = [seg.duration]
        else:
            k = max(1, int(math.ceil(seg.duration / dt - 1e-9)))
            steps = [dt] * (k - 1) + [seg.duration - (k - 1) * dt]
        for i, step in enumerate(steps):
            times.append(t + (i * dt if dt is not None else 0.0))
            fluo.append(_fluorescence(model, rho))
            pops.append(lb.populations(rho))
            rho = system.propagator(model, key, step).apply(rho)
        t += seg.duration
    times.append(t)
    fluo.append(0.0)
    pops.append(lb.populations(rho))
    return SimulationTrace(
        times=np.array(times),
        fluorescence=np.array(fluo),
        populations=np.array(pops),
        segment_starts=starts,
        final_state=rho,
    )


def peak_ratio(trace: SimulationTrace) -> float:
    """Leading edge of the last optical segment over that of the first."""
    opt = trace.optical_starts
    if len(opt) < 2:
        raise ProtocolError("peak ratio needs at least two optical segments")
    first = trace.fluorescence[opt[0]]
    if first <= 0:
        raise DegenerateSignalError("initialisation pulse emits no fluorescence")
    return float(trace.fluorescence[opt[-1]] / first)

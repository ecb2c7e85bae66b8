import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sivsim import model as m
from sivsim.constants import BOLTZMANN, PLANCK
from sivsim.errors import ParameterDomainError
from sivsim.model import MagneticField, SivParameters

PAULI = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}
I2 = np.eye(2)


def kron3(a, b, c):
    return np.kron(np.kron(a, b), c)


def reference_hamiltonian(p, field):
    """Independent construction from explicit Kronecker products."""
    bx, by, bz = field.vector
    lz = PAULI["z"]
    s = {k: v / 2 for k, v in PAULI.items()}
    i = {k: v / 2 for k, v in PAULI.items()}
    h = -p.lambda_so * kron3(lz, s["z"], I2)
    # i|+><-| - i|-><+| is minus the Pauli y matrix
    h += p.strain_alpha * kron3(PAULI["x"], I2, I2) - p.strain_beta * kron3(PAULI["y"], I2, I2)
    h += p.orbital_quench_f * p.gamma_l * bz * kron3(lz, I2, I2)
    for b, k in zip((bx, by, bz), "xyz"):
        h += p.gamma_s * b * kron3(I2, s[k], I2) + p.gamma_n * b * kron3(I2, I2, i[k])
    h += p.a_par * kron3(I2, s["z"], i["z"])
    h += p.a_perp * (kron3(I2, s["x"], i["x"]) + kron3(I2, s["y"], i["y"]))
    return h


@pytest.mark.parametrize("angle", [0.0, 35.0, 109.0])
def test_hamiltonian_matches_kronecker_oracle(angle):
    p = SivParameters(strain_alpha=3e9, strain_beta=1e9, a_perp=20e6)
    fld = MagneticField.from_degrees(0.7, angle, 30.0)
    h = m.build_ground_hamiltonian(p, fld)
    assert np.allclose(h, reference_hamiltonian(p, fld), atol=1e-3)


def test_zero_field_branch_energies_closed_form():
    p = SivParameters(a_par=0.0, strain_alpha=4e9)
    e = np.sort(m.spectrum_for(p, MagneticField(0.0)).energies)
    half = 0.5 * math.hypot(p.lambda_so, 2 * p.strain_alpha)
    assert np.allclose(e, [-half] * 4 + [half] * 4, rtol=0, atol=1e-3)


def test_on_axis_closed_form_with_hyperfine():
    p = SivParameters(a_perp=0.0)
    b = 0.5
    e = np.sort(m.spectrum_for(p, MagneticField(b, 0.0)).energies)
    want = []
    for lz, sz, iz in itertools.product((1, -1), (0.5, -0.5), (0.5, -0.5)):
        want.append(-p.lambda_so * lz * sz + p.orbital_quench_f * p.gamma_l * b * lz
                    + p.gamma_s * b * sz + p.a_par * sz * iz + p.gamma_n * b * iz)
    assert np.allclose(e, np.sort(want), rtol=0, atol=1e-3)


def test_on_axis_lower_branch_spin_splitting():
    p = SivParameters(a_par=0.0, gamma_n=0.0, orbital_quench_f=0.0)
    sp = m.spectrum_for(p, MagneticField(0.1, 0.0))
    e = np.sort(sp.energies[sp.lower])
    assert e[2] - e[0] == pytest.approx(2.8e9, rel=1e-12)


def test_spectrum_reconstructs_hamiltonian(params, field):
    h = m.build_ground_hamiltonian(params, field)
    sp = m.diagonalize(h, params)
    v = sp.vectors
    assert np.allclose(v @ np.diag(sp.energies) @ v.conj().T, h, atol=1e-3)
    assert np.allclose(v.conj().T @ v, np.eye(8), atol=1e-12)


def test_azimuth_leaves_energies_unchanged():
    p = SivParameters(strain_alpha=0.0)
    a = m.spectrum_for(p, MagneticField.from_degrees(0.5, 60.0, 0.0)).energies
    b = m.spectrum_for(p, MagneticField.from_degrees(0.5, 60.0, 77.0)).energies
    assert np.allclose(np.sort(a), np.sort(b), atol=1e-3)


def test_labels_are_a_complete_assignment(params, field):
    sp = m.spectrum_for(params, field)
    seen = {(sp.branch[k], sp.spin[k], sp.nuclear[k]) for k in range(8)}
    assert len(seen) == 8
    assert np.all(sp.energies[sp.lower].max() < sp.energies[sp.upper].min())
    k = sp.index(m.LOWER, m.DOWN, m.UP)
    assert sp.label(k).startswith("lower")


def test_odmr_lines_match_exhaustive_pairs(params, field):
    sp = m.spectrum_for(params, field)
    lines = m.odmr_transitions(sp)
    assert len(lines) == 4
    lower = set(sp.lower.tolist())
    diffs = {round(abs(sp.energies[a] - sp.energies[b]))
             for a in lower for b in lower if a != b}
    for line in lines:
        assert round(line.frequency) in diffs
        assert line.frequency == pytest.approx(
            abs(sp.energies[line.upper_state] - sp.energies[line.lower_state]), abs=1e-3)
    np_lines = m.nuclear_preserving_lines(sp)
    assert all(l.kind == m.ELECTRON_FLIP for l in np_lines)
    assert min(l.strength for l in np_lines) > 10 * max(
        l.strength for l in lines if l.kind == m.BOTH_FLIPPED)


def test_bose_occupation_reference_value():
    x = PLANCK * 50e9 / (BOLTZMANN * 4.0)
    assert m.bose_occupation(50e9, 4.0) == pytest.approx(1 / math.expm1(x), rel=1e-13)
    assert m.bose_occupation(50e9, 4.0) == pytest.approx(1.2168, abs=1e-3)


def test_bose_occupation_is_finite_at_extremes():
    assert m.bose_occupation(1e15, 0.01) == 0.0
    assert math.isfinite(m.bose_occupation(1.0, 300.0))


def test_phonon_rates_detailed_balance():
    p = SivParameters(gamma0_orbital=2e6)
    up, down = m.phonon_rates(p, 48e9, 3.6)
    n = m.bose_occupation(48e9, 3.6)
    assert up == pytest.approx(2e6 * n)
    assert down == pytest.approx(2e6 * (n + 1))


def test_thermal_fraction_trivial_limits():
    sp = m.spectrum_for(SivParameters(), MagneticField(0.0))
    assert m.upper_branch_fraction(sp, 1e-3) < 1e-12
    assert m.upper_branch_fraction(sp, 1e6) == pytest.approx(0.5, abs=1e-3)
    with pytest.raises(ParameterDomainError):
        m.thermal_populations(sp, 0.0)


def test_phonon_weights_are_doubly_stochastic(params, field):
    _, _, w = m.phonon_weights(m.spectrum_for(params, field))
    assert w.shape == (4, 4)
    assert np.all(w >= 0)
    assert np.allclose(w.sum(axis=0), 1, atol=1e-12)
    assert np.allclose(w.sum(axis=1), 1, atol=1e-12)


def test_aligned_field_suppresses_spin_flip_channels(params):
    sp = m.spectrum_for(params, MagneticField(0.3, 0.0))
    lo, up, w = m.phonon_weights(sp)
    for i, n in enumerate(lo):
        for j, k in enumerate(up):
            if sp.spin[n] != sp.spin[k]:
                assert w[i, j] < 1e-18


def test_jump_operators_agree_between_bases(params, field):
    sp = m.spectrum_for(params, field)
    rates = m.bath(params, 3.6)
    prod = m.phonon_jump_operators(sp, rates, basis="product")
    eig = m.phonon_jump_operators(sp, rates, basis="eigen")
    for (a, ra), (b, rb) in zip(prod, eig):
        assert ra == rb
        assert np.allclose(sp.to_eigenbasis(a), b, atol=1e-12)


def test_parameter_validation():
    with pytest.raises(ParameterDomainError):
        SivParameters(lambda_so=-1.0)
    with pytest.raises(ParameterDomainError):
        SivParameters(gamma0_orbital=float("nan"))
    with pytest.raises(ParameterDomainError):
        MagneticField(-0.1)
    p = SivParameters().replace(a_par=60e6)
    assert p.a_perp == 60e6


@settings(max_examples=40, deadline=None)
@given(
    b=st.floats(0.0, 3.0),
    theta=st.floats(0.0, math.pi),
    phi=st.floats(0.0, 2 * math.pi),
    alpha=st.floats(-20e9, 20e9),
)
def test_hamiltonian_is_hermitian(b, theta, phi, alpha):
    h = m.build_ground_hamiltonian(SivParameters(strain_alpha=alpha), MagneticField(b, theta, phi))
    assert np.allclose(h, h.conj().T, atol=0)

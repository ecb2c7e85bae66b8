import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sivsim import lindblad as lb
from sivsim.errors import NumericalInstabilityError, ParameterDomainError, StepSizeError

SX = np.array([[0, 1], [1, 0]], dtype=complex) / 2
LOWERING = np.array([[0, 1], [0, 0]], dtype=complex)  # |0><1|


def random_state(rng, dim):
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_model(rng, dim, n_ops=2):
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    ops = [(rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim)), rng.uniform(0, 1e6))
           for _ in range(n_ops)]
    return lb.LindbladModel(1e6 * (a + a.conj().T), ops)


def test_vec_roundtrip_is_column_stacking():
    rho = np.arange(9).reshape(3, 3).astype(complex)
    v = lb.vec(rho)
    assert np.array_equal(v[:3], rho[:, 0])
    assert np.array_equal(lb.unvec(v, 3), rho)


def test_liouvillian_matches_rhs_construction():
    rng = np.random.default_rng(0)
    model = random_model(rng, 4)
    assert np.allclose(lb.liouvillian(model), lb.generator_from_rhs(model), rtol=1e-12, atol=1e-3)


def test_zero_model_leaves_state_unchanged():
    model = lb.LindbladModel(np.zeros((3, 3)))
    rho = random_state(np.random.default_rng(1), 3)
    assert np.allclose(lb.evolve(model, rho, 1e-6), rho, atol=1e-14)


def test_amplitude_decay_closed_form():
    gamma, t = 2e6, 0.7e-6
    model = lb.LindbladModel(np.zeros((2, 2)), [(LOWERING, gamma)])
    rho = np.array([[0.2, 0.3], [0.3, 0.8]], dtype=complex)
    out = lb.evolve(model, rho, t)
    assert out[1, 1].real == pytest.approx(0.8 * math.exp(-gamma * t), rel=1e-12)
    assert abs(out[0, 1]) == pytest.approx(0.3 * math.exp(-gamma * t / 2), rel=1e-12)


def test_resonant_rabi_closed_form():
    omega = 10e6
    # H = Omega S_x in Hz, so the population flops at Omega
    model = lb.LindbladModel(omega * SX)
    rho0 = np.diag([1.0, 0.0]).astype(complex)
    for t in np.linspace(0, 200e-9, 9):
        p1 = lb.evolve(model, rho0, t)[1, 1].real
        assert p1 == pytest.approx(math.sin(math.pi * omega * t) ** 2, abs=1e-12)


def test_semigroup_property():
    rng = np.random.default_rng(2)
    model = random_model(rng, 4)
    rho = random_state(rng, 4)
    a = lb.evolve(model, lb.evolve(model, rho, 0.3e-6), 0.5e-6)
    b = lb.evolve(model, rho, 0.8e-6)
    assert lb.trace_distance(a, b) < 1e-12


def test_steady_state_is_gibbs_for_detailed_balance():
    up, down = 1e5, 3e5
    model = lb.LindbladModel(np.diag([0.0, 1e9]), [(LOWERING, down), (LOWERING.T, up)])
    ss = lb.steady_state(model)
    assert ss[1, 1].real == pytest.approx(up / (up + down), rel=1e-10)
    assert lb.residual(model, ss) < 1e-12


def test_steady_state_rejects_non_unique():
    from sivsim.errors import NonUniqueSteadyStateError

    with pytest.raises(NonUniqueSteadyStateError):
        lb.steady_state(lb.LindbladModel(np.diag([0.0, 1e9])))


def test_rk4_agrees_with_exact():
    rng = np.random.default_rng(3)
    model = random_model(rng, 3)
    rho = random_state(rng, 3)
    exact = lb.evolve(model, rho, 50e-9)
    stepped = lb.evolve_rk4(model, rho, 50e-9, 1e-11)
    assert lb.trace_distance(exact, stepped) < 1e-8


def test_rk4_rejects_unstable_step():
    model = lb.LindbladModel(np.zeros((2, 2)), [(LOWERING, 1e10)])
    with pytest.raises((StepSizeError, NumericalInstabilityError)):
        lb.evolve_rk4(model, np.diag([0.0, 1.0]).astype(complex), 1e-6, 1e-9)


def test_model_validation():
    with pytest.raises(ParameterDomainError):
        lb.LindbladModel(np.zeros((2, 3)))
    with pytest.raises(ParameterDomainError):
        lb.LindbladModel(np.zeros((2, 2)), [(np.zeros((3, 3)), 1.0)])
    with pytest.raises(ParameterDomainError):
        lb.LindbladModel(np.zeros((2, 2)), [(LOWERING, -1.0)])


def test_clean_state_rejects_negative_state():
    with pytest.raises(NumericalInstabilityError):
        lb.clean_state(np.diag([1.1, -0.1]).astype(complex))


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), t=st.floats(1e-9, 5e-6))
def test_evolution_preserves_trace_and_positivity(seed, t):
    rng = np.random.default_rng(seed)
    model = random_model(rng, 4, n_ops=int(rng.integers(0, 4)))
    out = lb.evolve(model, random_state(rng, 4), t)
    assert abs(np.trace(out).real - 1) < 1e-10
    assert np.allclose(out, out.conj().T, atol=1e-12)
    assert np.linalg.eigvalsh(out).min() > -1e-10

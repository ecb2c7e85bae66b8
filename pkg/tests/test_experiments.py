from dataclasses import replace

import numpy as np
import pytest

from sivsim import experiments as ex
from sivsim.errors import ParameterDomainError
from sivsim.model import SivParameters, line_separation, nuclear_preserving_lines, spectrum_for


def test_calibration_hits_its_targets(params, field):
    assert line_separation(spectrum_for(params, field)) == pytest.approx(54e6, rel=1e-6)
    scan = ex.orbital_relaxation_scan(ex.SweepSpec("wait", 0.0, 600e-9, 41, params=params, field=field))
    assert 2 * scan.fits["exp_recovery"]["T"] == pytest.approx(133e-9, rel=0.01)


def test_conflicting_strain_targets_are_rejected(field):
    cal = ex.Calibration(line_separation=54e6, spin_t1=350e-9, orbital_two_t1=133e-9)
    with pytest.raises(ParameterDomainError):
        ex.calibrate(SivParameters(), field, cal)


def test_no_phonons_means_no_recovery(params, field):
    p = params.replace(gamma0_orbital=0.0)
    res = ex.t1_recovery_scan(ex.SweepSpec("wait", 0.0, 2e-6, 11, params=p, field=field))
    assert np.ptp(res.values) < 1e-12


def test_recovery_rises_towards_one(params, field):
    res = ex.t1_recovery_scan(ex.SweepSpec("wait", 0.0, 3e-6, 16, params=params, field=field))
    assert np.all(np.diff(res.values) > 0)
    assert res.values[0] < 0.5 < res.values[-1] <= 1.0


def test_odmr_vs_field_columns(params, field):
    res = ex.odmr_vs_field(ex.SweepSpec("field", 0.1, 1.0, 10, params=params, field=field))
    assert res.names == ["field_T", "line_nuclear_up_hz", "line_nuclear_down_hz",
                         "both_flipped_1_hz", "both_flipped_2_hz"]
    assert np.all(np.diff(res.columns["line_nuclear_up_hz"]) > 0)


def test_ramsey_carrier_positions(params, field):
    system = ex.SweepSpec("x", 0, 1, 2, params=params, field=field).system()
    lo, hi = sorted(l.frequency for l in nuclear_preserving_lines(system.spectrum))
    assert ex.ramsey_carrier(system, "symmetric") == pytest.approx(0.5 * (lo + hi))
    asym = ex.ramsey_carrier(system, "asymmetric")
    assert sorted([abs(asym - lo), abs(asym - hi)]) == pytest.approx([18e6, 36e6], rel=1e-6)


def test_fidelity_is_a_probability_and_grows_with_pump(params, field):
    spec = ex.SweepSpec("pump_duration", 10e-9, 300e-9, 5, params=params, field=field)
    res = ex.fidelity_scan(spec)
    fid = res.columns["fidelity"]
    assert np.all((0 <= fid) & (fid <= 1))
    assert fid[-1] > fid[0]
    assert np.all(res.columns["within_lower_branch"] >= fid)


def test_sweep_and_protocol_validation():
    with pytest.raises(ParameterDomainError):
        ex.SweepSpec("x", 1.0, 0.0, 3)
    with pytest.raises(ParameterDomainError):
        ex.SweepSpec("x", 0.0, 1.0, 1)
    with pytest.raises(ParameterDomainError):
        ex.Protocol(line=2)
    with pytest.raises(ParameterDomainError):
        ex.Protocol(ramsey_mode="sideways")


def test_parallel_workers_do_not_change_results(params, field):
    spec = ex.SweepSpec("wait", 0.0, 1e-6, 6, params=params, field=field)
    a = ex.t1_recovery_scan(spec)
    b = ex.t1_recovery_scan(replace(spec, workers=3))
    assert np.array_equal(a.values, b.values)

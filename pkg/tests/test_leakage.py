"""Leak decomposition, frame coefficients, elimination pulses, bang-bang."""

import math

import numpy as np
import pytest

import dressedspin as ds
from dressedspin.core import ContractViolation, LinearOp, identity_op
from dressedspin.frames import polarized_frame, sector_frame
from dressedspin.hamiltonians import (
    DotGeometry,
    build_dipolar,
    build_dominant,
    build_total,
    constrained_dipolar,
    dipolar_from_geometry,
)
from dressedspin.leakage import (
    BangBangSchedule,
    CoefficientCheck,
    bangbang_evolve,
    bosonization_deviation,
    dipolar_report,
    free_leak_probability,
    leakage_elimination_op,
    leo_deviation,
    overhauser_report,
    split_leakage,
)


def geometry_spec(K=4, seed=21, A_hf=1.1, prefactor=0.03):
    rng = np.random.default_rng(seed)
    geom = DotGeometry(positions=rng.normal(size=(K, 3)) * 2.0, prefactor=prefactor)
    b = dipolar_from_geometry(geom)
    return ds.SpinBathSpec(K=K, I=0.5, alpha=ds.random_alpha(K, rng), A_hf=A_hf, b=b)


# ---------------------------------------------------------------------------
# coefficient bookkeeping


def test_coefficient_check_matching():
    ok = CoefficientCheck("x", computed=1.0, quoted=1.0 + 5e-11)
    assert ok.matches
    assert "matches" in ok.status
    bad = CoefficientCheck("x", computed=1.0, quoted=2.0)
    assert not bad.matches
    assert "differs" in bad.status


# ---------------------------------------------------------------------------
# split_leakage


def test_split_is_exact_orthogonal_decomposition():
    spec = geometry_spec()
    frame = polarized_frame(spec)
    H = build_total(spec, basis=frame.basis)
    block, leak = split_leakage(H, frame)
    assert ((block + leak) - H).max_abs() < 1e-14
    assert block.hermitian and leak.hermitian
    P = frame.projector()
    Q = 1.0 * (identity_op(frame.basis) - P)
    assert (P @ (block @ Q)).max_abs() < 1e-12
    assert (P @ (leak @ P)).max_abs() < 1e-12


def test_dominant_part_has_no_leak():
    rng = np.random.default_rng(22)
    spec = ds.random_spec(rng, K=5)
    frame = polarized_frame(spec)
    _, leak = split_leakage(build_dominant(spec, 0.8, basis=frame.basis), frame)
    assert leak.norm2() < 1e-12


def test_uniform_profile_with_flat_couplings_has_no_leak():
    # constant off-diagonal b on a uniform profile commutes with the frame
    K = 4
    b = 0.05 * (np.ones((K, K)) - np.eye(K))
    spec = ds.SpinBathSpec(K=K, I=0.5, alpha=ds.uniform_alpha(K), b=b)
    frame = polarized_frame(spec)
    _, leak = split_leakage(build_total(spec, basis=frame.basis), frame)
    assert leak.norm2() < 1e-12


def test_leak_is_sum_of_field_and_bath_parts():
    spec = geometry_spec()
    frame = polarized_frame(spec)
    _, leak = split_leakage(build_total(spec, basis=frame.basis), frame)
    ov = overhauser_report(spec, frame)
    dip = dipolar_report(spec, frame)
    # the field part enters through A_z S_z, so the electron-down branch
    # weights the collective-field leak by -A sqrt(2I)/2
    comb = ov.leak_vec * (-0.5 * spec.A_hf * math.sqrt(spec.two_I)) + dip.leak_vec
    assert leak.norm2() > 1e-3
    assert ((leak @ frame.ket1) - comb).norm() < 1e-10
    assert (leak @ frame.ket0).norm() < 1e-12
    assert abs(leak.norm2() - comb.norm()) < 1e-10


def test_split_requires_hermitian_flag():
    spec = geometry_spec()
    frame = polarized_frame(spec)
    raw = LinearOp(np.triu(np.ones((frame.basis.dim, frame.basis.dim))), frame.basis)
    with pytest.raises(ContractViolation):
        split_leakage(raw, frame)


# ---------------------------------------------------------------------------
# overhauser report


def test_overhauser_uniform_profile_is_leak_free():
    spec = ds.SpinBathSpec(K=6, I=0.5, alpha=ds.uniform_alpha(6))
    rep = overhauser_report(spec, polarized_frame(spec))
    assert rep.leak_norm < 1e-12
    assert rep.ratio < 1e-12
    assert rep.checks[0].matches and rep.checks[1].matches


def test_overhauser_two_site_coefficients():
    alpha = np.array([math.sqrt(0.8), math.sqrt(0.2)])
    spec = ds.SpinBathSpec(K=2, I=0.5, alpha=alpha)
    rep = overhauser_report(spec, polarized_frame(spec))
    c_z = -0.5 * (math.sqrt(0.8) + math.sqrt(0.2))
    want_diag = c_z + (0.8**1.5 + 0.2**1.5)
    assert abs(rep.diag_coeff - want_diag) < 1e-12
    assert abs(rep.checks[0].computed - c_z) < 1e-12
    assert rep.checks[0].matches
    assert rep.checks[1].matches


def test_overhauser_field_shift_is_logged_as_differing():
    # the sign of the alpha^3 correction in the effective-field shift does
    # not survive the direct sparse oracle; record both values
    rng = np.random.default_rng(23)
    spec = ds.random_spec(rng, K=5)
    rep = overhauser_report(spec, polarized_frame(spec))
    field = [c for c in rep.checks if "field" in c.name]
    assert len(field) == 1
    assert not field[0].matches
    assert abs((field[0].quoted - field[0].computed) - (-spec.A_hf * np.sum(spec.alpha**3))) < 1e-10


def test_overhauser_leak_orthogonal_to_frame():
    rng = np.random.default_rng(24)
    spec = ds.random_spec(rng, K=5)
    frame = polarized_frame(spec)
    rep = overhauser_report(spec, frame)
    assert rep.leak_norm > 1e-3
    assert abs(frame.ket0.dot(rep.leak_vec)) < 1e-10
    assert abs(frame.ket1.dot(rep.leak_vec)) < 1e-10
    assert rep.ratio == pytest.approx(rep.leak_norm / abs(rep.checks[0].computed))


def test_overhauser_analytic_estimate():
    spec = ds.SpinBathSpec(K=8, I=0.5, alpha=ds.uniform_alpha(8))
    rep = overhauser_report(spec, polarized_frame(spec))
    # mean(alpha) / (I sum(alpha)) = 1/(I K) on a uniform profile
    assert rep.analytic_estimate == pytest.approx(1.0 / (0.5 * 8))


def test_reports_reject_higher_sector_frames():
    spec = ds.SpinBathSpec(K=4, I=0.5, alpha=ds.uniform_alpha(4))
    frame = sector_frame(spec, 2)
    with pytest.raises(ValueError):
        overhauser_report(spec, frame)
    with pytest.raises(ValueError):
        dipolar_report(spec, frame)
    with pytest.raises(ValueError):
        leakage_elimination_op(spec, frame)


# ---------------------------------------------------------------------------
# dipolar report


def test_dipolar_without_couplings_is_zero():
    rng = np.random.default_rng(25)
    spec = ds.random_spec(rng, K=4)
    rep = dipolar_report(spec, polarized_frame(spec))
    assert rep.diag_coeff == 0.0
    assert rep.leak_norm == 0.0
    assert rep.ratio == 0.0


def test_dipolar_polarized_coefficient_cross_module():
    rng = np.random.default_rng(26)
    b = ds.random_couplings(3, rng, scale=0.1)
    spec = ds.SpinBathSpec(K=3, I=0.5, alpha=ds.random_alpha(3, rng), b=b)
    frame = polarized_frame(spec)
    rep = dipolar_report(spec, frame)
    H_bath = build_dipolar(spec, basis=frame.basis)
    c0 = rep.checks[0].computed
    assert abs(c0 - H_bath.expectation(frame.ket0)) < 1e-12
    assert abs(c0 - (-4.0 * spec.I**2 * np.sum(np.triu(b, 1)))) < 1e-12
    assert not rep.checks[0].matches  # quoted -16 I^2 is 4x the oracle value
    assert "differs" in rep.checks[0].status


def test_dipolar_constrained_family_kills_leak():
    K, b_bar = 6, 0.02
    rng = np.random.default_rng(27)
    alpha = ds.random_alpha(K, rng)
    cons = constrained_dipolar(alpha, b_bar)
    spec = ds.SpinBathSpec(K=K, I=0.5, alpha=alpha, b=cons.b)
    rep = dipolar_report(spec, polarized_frame(spec), b_bar=b_bar)
    assert rep.leak_norm < 1e-8
    c1 = rep.diag_coeff - rep.checks[0].computed
    assert abs(c1 - 6.0 * spec.I * b_bar) < 1e-10
    constrained = [c for c in rep.checks if "constrained" in c.name]
    assert len(constrained) == 1
    assert constrained[0].quoted == pytest.approx(36.0 * spec.I * b_bar)
    assert not constrained[0].matches


# ---------------------------------------------------------------------------
# leakage elimination operator


def test_leo_block_structure_smallest_bath():
    rng = np.random.default_rng(28)
    spec = ds.random_spec(rng, K=2)
    frame = polarized_frame(spec)
    R = leakage_elimination_op(spec, frame)
    kets = [frame.ket0, frame.ket1] + frame.leak_modes
    rep = np.array([[a.dot(R @ b) for b in kets] for a in kets])
    assert np.max(np.abs(rep - np.diag([-1.0, -1.0, 1.0]))) < 1e-10


def test_leo_is_involutive_unitary():
    rng = np.random.default_rng(29)
    spec = ds.random_spec(rng, K=4, I=1.0)
    frame = polarized_frame(spec)
    R = leakage_elimination_op(spec, frame)
    eye = identity_op(frame.basis)
    assert ((R @ R) - eye).max_abs() < 1e-10
    assert ((R.dagger() @ R) - eye).max_abs() < 1e-10


def test_leo_dual_constructions_agree():
    rng = np.random.default_rng(30)
    for _ in range(5):
        K = int(rng.integers(2, 7))
        spec = ds.random_spec(rng, K)
        assert leo_deviation(spec, polarized_frame(spec)) < 1e-10


def test_leo_anticommutes_with_leak():
    spec = geometry_spec(K=5, seed=31)
    frame = polarized_frame(spec)
    _, leak = split_leakage(build_total(spec, basis=frame.basis), frame)
    R = leakage_elimination_op(spec, frame)
    assert ((R @ (leak @ R)) + leak).max_abs() < 1e-10


# ---------------------------------------------------------------------------
# bang-bang evolution


def test_bangbang_dominant_hamiltonian_never_leaks():
    rng = np.random.default_rng(32)
    spec = ds.random_spec(rng, K=4)
    frame = polarized_frame(spec)
    H = build_dominant(spec, 1.0, basis=frame.basis)
    _, trace = bangbang_evolve(H, frame, BangBangSchedule(tau=0.5, cycles=6), frame.ket1)
    assert len(trace) == 6
    assert max(trace) < 1e-12


def test_bangbang_zero_cycles_is_identity():
    spec = geometry_spec(K=3, seed=33)
    frame = polarized_frame(spec)
    H = build_total(spec, basis=frame.basis)
    final, trace = bangbang_evolve(H, frame, BangBangSchedule(tau=0.5, cycles=0), frame.ket1)
    assert trace == []
    assert np.array_equal(final.amps, frame.ket1.amps)


def test_bangbang_schedule_validation():
    with pytest.raises(ValueError):
        BangBangSchedule(tau=0.0, cycles=3)
    with pytest.raises(ValueError):
        BangBangSchedule(tau=1.0, cycles=-1)
    assert BangBangSchedule(tau=0.25, cycles=8).total_time == pytest.approx(2.0)


def test_bangbang_suppression_improves_with_faster_flips():
    spec = geometry_spec(K=3, seed=34, prefactor=0.1)
    frame = polarized_frame(spec)
    H = build_total(spec, basis=frame.basis)
    T = 4.0
    leaks = []
    for cycles in (8, 16):
        _, trace = bangbang_evolve(
            H, frame, BangBangSchedule(tau=T / cycles, cycles=cycles), frame.ket1
        )
        leaks.append(trace[-1])
    free = free_leak_probability(H, frame, T, frame.ket1)
    assert free > leaks[0] > leaks[1] > 0.0


# ---------------------------------------------------------------------------
# bosonic behavior of the collective modes


def test_bosonization_polarized_state_is_exact():
    rng = np.random.default_rng(35)
    spec = ds.random_spec(rng, K=5)
    frame = polarized_frame(spec)
    assert bosonization_deviation(spec, frame.ket0, 0, 0, frame.mode_matrix) < 1e-12
    assert bosonization_deviation(spec, frame.ket0, 0, 2, frame.mode_matrix) < 1e-12


def test_bosonization_single_excitation_deviation():
    K = 5
    spec = ds.SpinBathSpec(K=K, I=0.5, alpha=ds.uniform_alpha(K))
    frame = polarized_frame(spec)
    got = bosonization_deviation(spec, frame.ket1, 0, 0, frame.mode_matrix)
    assert abs(got - 2.0 / K) < 1e-12
    # orthogonal mode rows see a flat occupation profile and cancel
    assert bosonization_deviation(spec, frame.ket1, 0, 3, frame.mode_matrix) < 1e-12


def test_bosonization_validation():
    spec = ds.SpinBathSpec(K=3, I=0.5, alpha=ds.uniform_alpha(3))
    frame = polarized_frame(spec)
    with pytest.raises(ContractViolation):
        bosonization_deviation(spec, frame.ket1 * 2.0, 0, 0, frame.mode_matrix)
    with pytest.raises(ValueError):
        bosonization_deviation(spec, frame.ket1, 3, 0, frame.mode_matrix)

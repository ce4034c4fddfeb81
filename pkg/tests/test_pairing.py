"""Effective bath interaction, pairing reduction, BCS gap equations."""

import dataclasses
import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import dressedspin as ds
from dressedspin.core import commutator, full_basis, nuclear_sector, pair_sector
from dressedspin.frames import polarized_frame
from dressedspin.hamiltonians import flip_flop
from dressedspin.pairing import (
    PairingModel,
    bcs_state,
    build_pairing_model,
    exact_sector_gap,
    froehlich_consistency,
    froehlich_effective,
    froehlich_generator,
    gap_vs_filling,
    pairing_hamiltonian,
    solve_bcs,
    uniform_pairing_model,
)


def uniform_gap(K, n, A_hf, F, b):
    return (A_hf**2 / (4.0 * F * K) + b) * math.sqrt(n * (K - n))


# ---------------------------------------------------------------------------
# effective interaction


def test_effective_interaction_trivial_cases():
    spec = ds.SpinBathSpec(K=3, I=0.5, alpha=ds.uniform_alpha(3), A_hf=0.0)
    assert froehlich_effective(spec, 1.0).max_abs() == 0.0
    with pytest.raises(ValueError):
        froehlich_effective(spec, 0.0)


def test_effective_interaction_on_single_excitation():
    spec = ds.SpinBathSpec(K=4, I=0.5, alpha=ds.uniform_alpha(4), A_hf=0.9)
    F = 2.0
    V = froehlich_effective(spec, F)
    frame = polarized_frame(spec)
    # map the electron-down pair member onto the bare nuclear space
    bath = nuclear_sector(spec, 1)
    amps = np.zeros(bath.dim, dtype=complex)
    for idx, key in enumerate(frame.basis.keys):
        if frame.ket1.amps[idx] != 0.0:
            amps[bath.lookup(np.array([key]))[0]] = frame.ket1.amps[idx]
    ket1_bath = ds.KetState(bath, amps)
    want = -spec.A_hf**2 * spec.I / (2.0 * F)  # h = 1 on the polarized frame
    got = froehlich_effective(spec, F, basis=bath).expectation(ket1_bath)
    assert abs(got - want) < 1e-12
    assert V.hermitian


def test_generator_cancels_flip_flop_at_first_order():
    rng = np.random.default_rng(41)
    spec = ds.random_spec(rng, K=3, A_hf=0.7)
    F = 1.4
    basis = full_basis(spec)
    S = froehlich_generator(spec, F, basis=basis)
    assert (S.dagger() + S).max_abs() == 0.0
    H0 = ds.spin_op(basis, 0, "z") * F
    V = flip_flop(spec, basis=basis) * (spec.A_hf * math.sqrt(spec.two_I))
    assert (commutator(S, H0) - V).max_abs() < 1e-14


def test_consistency_error_is_second_order():
    rng = np.random.default_rng(42)
    alpha = ds.random_alpha(5, rng)
    F = 1.0
    errors = []
    for r in (0.1, 0.05, 0.025):
        spec = ds.SpinBathSpec(K=5, I=0.5, alpha=alpha, A_hf=r * F)
        chk = froehlich_consistency(spec, F)
        assert chk.ratio == pytest.approx(r)
        errors.append(chk.rel_error)
    for big, small in zip(errors, errors[1:]):
        assert 3.0 < big / small < 5.0


def test_consistency_sector_bounds():
    spec = ds.SpinBathSpec(K=3, I=0.5, alpha=ds.uniform_alpha(3), A_hf=0.1)
    chk = froehlich_consistency(spec, 1.0, N=2)
    assert chk.N == 2
    with pytest.raises(ValueError):
        froehlich_consistency(spec, 1.0, N=0)
    with pytest.raises(ValueError):
        froehlich_consistency(spec, 1.0, N=spec.n_max)


# ---------------------------------------------------------------------------
# pairing model construction


def test_model_validation():
    eps = np.zeros(3)
    good = np.zeros((3, 3))
    with pytest.raises(ValueError):
        PairingModel(K=3, eps=eps, g=np.triu(np.ones((3, 3)), 1), b=good, n_target=1.0)
    with pytest.raises(ValueError):
        PairingModel(K=3, eps=eps, g=good, b=good, n_target=0.0)
    with pytest.raises(ValueError):
        PairingModel(K=3, eps=eps, g=good, b=good, n_target=3.0)


def test_build_requires_spin_half():
    spec = ds.SpinBathSpec(K=3, I=1.0, alpha=ds.uniform_alpha(3))
    with pytest.raises(ValueError):
        build_pairing_model(spec, 1.0, n_target=1.0)
    half = ds.SpinBathSpec(K=3, I=0.5, alpha=ds.uniform_alpha(3))
    with pytest.raises(ValueError):
        build_pairing_model(half, 0.0, n_target=1.0)


def test_build_trivial_and_uniform_entries():
    spec = ds.SpinBathSpec(K=4, I=0.5, alpha=ds.uniform_alpha(4), A_hf=0.0)
    model = build_pairing_model(spec, 1.0, n_target=2.0)
    assert np.all(model.eps == 0.0) and np.all(model.g == 0.0)

    K, A, F, b = 4, 1.0, 2.0, 0.03
    bmat = b * (np.ones((K, K)) - np.eye(K))
    spec = ds.SpinBathSpec(K=K, I=0.5, alpha=ds.uniform_alpha(K), A_hf=A, b=bmat)
    model = build_pairing_model(spec, F, n_target=2.0)
    off = ~np.eye(K, dtype=bool)
    assert np.max(np.abs(model.g[off] - (A**2 / (4.0 * F * K) + b))) < 1e-12


def test_materialized_hamiltonian_conserves_pairs():
    rng = np.random.default_rng(43)
    b = ds.random_couplings(4, rng, scale=0.05)
    spec = ds.SpinBathSpec(K=4, I=0.5, alpha=ds.random_alpha(4, rng), b=b)
    model = build_pairing_model(spec, 1.5, n_target=2.0)
    H = pairing_hamiltonian(model)
    n_op = sum(
        (ds.spin_op(H.domain, i + 1, "z") + 0.5 * ds.identity_op(H.domain) for i in range(4)),
        start=0.0 * ds.identity_op(H.domain),
    )
    assert commutator(H, n_op).max_abs() < 1e-12


def test_materialization_rejects_sector_basis():
    model = uniform_pairing_model(3, 1.0, 1.0, 0.0, 1.5)
    with pytest.raises(ValueError):
        pairing_hamiltonian(model, basis=pair_sector(3, 1))
    big = uniform_pairing_model(24, 1.0, 1.0, 0.0, 12.0)
    with pytest.raises(ValueError):
        pairing_hamiltonian(big)


# ---------------------------------------------------------------------------
# gap equations


def test_uniform_closed_form_across_sizes():
    A, F, b = 1.0, 1.0, 0.01
    for K in (4, 8, 16):
        for n in range(1, K):
            model = uniform_pairing_model(K, A, F, b, float(n))
            sol = solve_bcs(model)
            assert sol.converged and not sol.normal_state
            want = uniform_gap(K, n, A, F, b)
            assert np.max(np.abs(sol.delta - want)) < 1e-8
            assert np.max(np.abs(sol.v - math.sqrt(n / K))) < 1e-8
            assert np.max(np.abs(sol.u**2 + sol.v**2 - 1.0)) < 1e-12


def test_half_filled_four_site_gap_value():
    sol = solve_bcs(uniform_pairing_model(4, 1.0, 1.0, 0.0, 2.0))
    assert np.max(np.abs(sol.delta - 0.125)) < 1e-8


def test_residuals_verifiable_from_solution():
    model = uniform_pairing_model(8, 1.2, 1.5, 0.02, 3.0)
    sol = solve_bcs(model, tol=1e-11)
    xi = np.hypot(model.eps - sol.lam, sol.delta)
    gap_res = np.max(np.abs(sol.delta - 0.5 * model.g @ (sol.delta / xi)))
    num_res = abs(np.sum(sol.v**2) - model.n_target)
    assert gap_res < 1e-10 and num_res < 1e-10
    assert sol.residual < 1e-10


def test_no_pairing_collapses_to_normal_state():
    model = uniform_pairing_model(4, 0.0, 1.0, 0.0, 2.0)
    sol = solve_bcs(model)
    assert sol.normal_state
    assert np.all(sol.delta == 0.0)
    assert abs(np.sum(sol.v**2) - 2.0) < 1e-12


def test_repulsive_couplings_collapse_to_normal_state():
    model = uniform_pairing_model(4, 0.0, 1.0, -0.05, 2.0)
    sol = solve_bcs(model)
    assert sol.normal_state and np.all(sol.delta == 0.0)


@settings(max_examples=25, deadline=None)
@given(
    K=st.sampled_from([4, 6, 8, 12]),
    frac=st.floats(0.2, 0.8),
    A=st.floats(0.5, 2.0),
    F=st.floats(0.5, 3.0),
    b=st.floats(0.0, 0.05),
)
def test_uniform_closed_form_property(K, frac, A, F, b):
    n = max(1, min(K - 1, round(frac * K)))
    sol = solve_bcs(uniform_pairing_model(K, A, F, b, float(n)))
    assert np.max(np.abs(sol.delta - uniform_gap(K, n, A, F, b))) < 1e-8


# ---------------------------------------------------------------------------
# BCS state


def test_bcs_state_with_no_pairs_is_polarized():
    model = uniform_pairing_model(4, 0.0, 1.0, 0.0, 2.0)
    sol = dataclasses.replace(
        solve_bcs(model),
        u=np.ones(4),
        v=np.zeros(4),
    )
    ket = bcs_state(model, sol)
    basis = ket.basis
    idx = basis.lookup(np.array([0]))[0]
    assert abs(ket.amps[idx] - 1.0) < 1e-12


def test_projected_bcs_matches_collective_raising_power():
    K, n = 8, 3
    model = uniform_pairing_model(K, 1.0, 1.0, 0.01, float(n))
    sol = solve_bcs(model)
    projected = bcs_state(model, sol, project=True)
    # (A_+)^n |polarized>, normalized, on the same pair space
    basis = projected.basis
    amps = np.zeros(basis.dim, dtype=complex)
    amps[basis.lookup(np.array([0]))[0]] = 1.0
    ket = ds.KetState(basis, amps)
    alpha = ds.uniform_alpha(K)
    raising = ds.collective_op(basis, alpha, "+")
    for _ in range(n):
        ket = raising @ ket
    ket = ket.normalized()
    assert abs(abs(projected.dot(ket)) - 1.0) < 1e-10


def test_bcs_energy_beats_every_single_configuration():
    K, n = 6, 3
    model = uniform_pairing_model(K, 1.0, 1.0, 0.02, float(n))
    sol = solve_bcs(model)
    H = pairing_hamiltonian(model)
    e_bcs = H.expectation(bcs_state(model, sol))
    basis = H.domain
    worst = math.inf
    for occ in itertools.combinations(range(K), n):
        key = sum(basis.powers[i] for i in occ)
        amps = np.zeros(basis.dim, dtype=complex)
        amps[basis.lookup(np.array([key]))[0]] = 1.0
        worst = min(worst, H.expectation(ds.KetState(basis, amps)))
    assert e_bcs <= worst + 1e-10


# ---------------------------------------------------------------------------
# gap versus filling


def test_gap_peaks_at_half_filling():
    rows = gap_vs_filling(8, 1.0, 1.0, 0.01)
    deltas = {row["n"]: row["delta_max"] for row in rows}
    assert max(deltas, key=deltas.get) == 4
    for n in range(1, 8):
        assert abs(deltas[n] - deltas[8 - n]) < 1e-10


def test_exact_sector_gap_positive_with_pairing():
    model = uniform_pairing_model(8, 1.0, 1.0, 0.02, 4.0)
    report = exact_sector_gap(model)
    assert report.n == 4
    assert report.gap_in_sector > 0.0
    assert report.pair_curvature is not None
    with pytest.raises(ValueError):
        exact_sector_gap(model, n=9)

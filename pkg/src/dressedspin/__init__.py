"""Dressed electron-nuclear spin qubits in a central-spin bath.

Exact sector-resolved simulation of one electron spin hyperfine-coupled
to K nuclear spins: dressed two-level frames, gate compilation on top
of them, leakage quantification and bang-bang suppression, and the
induced nuclear pairing problem with its BCS mean-field solution.
"""

__version__ = "0.1.0"

from .core import (
    ContractViolation,
    KetState,
    LinearOp,
    SpinBasis,
    SpinBathSpec,
    ZeemanConstants,
    basis_state,
    collective_op,
    commutator,
    diagonal_op,
    enumerate_sector,
    evolution_matrix,
    full_basis,
    gaussian_alpha,
    identity_op,
    nuclear_basis,
    nuclear_sector,
    pair_basis,
    pair_number_ops,
    pair_sector,
    perturbed_uniform_alpha,
    projector,
    propagate,
    random_alpha,
    random_couplings,
    random_ket,
    random_spec,
    sector_dimension,
    sector_embedding,
    spin_op,
    tensor_ket,
    tensor_op,
    uniform_alpha,
)
from .frames import (
    DressedFrame,
    PulseSegment,
    compile_gate,
    compose_segments,
    dressing_unitary,
    frame_from_text,
    frame_to_text,
    gate_fidelity,
    local_invariants,
    matrix_rep,
    mode_completion,
    polarized_frame,
    pulse_unitary,
    sector_frame,
    two_qubit_phase_check,
)
from .hamiltonians import (
    DotGeometry,
    EffectiveField,
    InfeasibleConstraints,
    build_dipolar,
    build_dominant,
    build_hyperfine,
    build_total,
    build_zeeman,
    constrained_dipolar,
    dipolar_from_geometry,
    effective_field,
    flip_flop,
    load_geometry,
)
from .leakage import (
    BangBangSchedule,
    CoefficientCheck,
    LeakageReport,
    bangbang_evolve,
    bosonization_deviation,
    dipolar_report,
    free_leak_probability,
    leakage_elimination_op,
    leo_deviation,
    overhauser_report,
    split_leakage,
)
from .pairing import (
    BcsSolution,
    ConvergenceError,
    FroehlichCheck,
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

__all__ = [name for name in dir() if not name.startswith("_")]

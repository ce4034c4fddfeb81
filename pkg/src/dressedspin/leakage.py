"""Leakage out of the dressed two-level frame, and its suppression.

Within an excitation sector a Hamiltonian splits exactly into a part
that preserves the frame and a part that couples it to the leak modes.
The frame-diagonal coefficients of the Overhauser operator A_z and of
the intrabath coupling are computed here by direct sparse application
and compared against closed-form expressions; each comparison is
recorded with a match/differ status instead of being assumed.

The sign-flip unitary R = exp(-i pi (A_+S_- + A_-S_+)) acts as -1 on
the dressed pair and +1 on every leak mode of the lowest frame, so
interleaving it with free evolution (a bang-bang cycle) cancels the
frame-off-diagonal coupling to first order in the cycle time.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    ContractViolation,
    KetState,
    LinearOp,
    SpinBathSpec,
    collective_op,
    identity_op,
    propagate,
)
from .frames import DressedFrame, mode_completion
from .hamiltonians import build_dipolar, flip_flop

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CoefficientCheck:
    """One computed-vs-quoted coefficient comparison."""

    name: str
    computed: float
    quoted: float
    tol: float = 1e-10

    @property
    def matches(self) -> bool:
        scale = max(1.0, abs(self.computed), abs(self.quoted))
        return abs(self.computed - self.quoted) <= self.tol * scale

    @property
    def status(self) -> str:
        if self.matches:
            return f"{self.name}: matches ({self.computed:.12g})"
        return (
            f"{self.name}: differs (computed {self.computed:.12g}, "
            f"quoted {self.quoted:.12g})"
        )


@dataclass
class LeakageReport:
    """Frame-diagonal coefficient and leak component of one operator.

    ``leak_vec`` is the unnormalized component of O|ket1> orthogonal to
    the frame; ``ratio`` = leak_norm / |polarized-state coefficient|,
    i.e. the leak measured against the operator's overall scale on the
    frame rather than the excited-state shift (which can nearly cancel);
    checks record every closed-form comparison performed along the way.
    """

    diag_coeff: float
    leak_vec: KetState
    leak_norm: float
    ratio: float
    analytic_estimate: float | None = None
    checks: list[CoefficientCheck] = field(default_factory=list)


def _require_lowest_frame(frame: DressedFrame, who: str):
    if frame.N != 1:
        raise ValueError(f"{who} is defined on the lowest (N=1) frame, got N={frame.N}")


def _frame_leak(frame: DressedFrame, vec: KetState) -> KetState:
    out = vec - frame.ket0 * frame.ket0.dot(vec) - frame.ket1 * frame.ket1.dot(vec)
    return out


def _ratio(leak_norm: float, diag: float) -> float:
    if abs(diag) > 1e-300:
        return leak_norm / abs(diag)
    return 0.0 if leak_norm < 1e-300 else math.inf


def split_leakage(H: LinearOp, frame: DressedFrame) -> tuple[LinearOp, LinearOp]:
    """Exact decomposition H = H_block + H_leak w.r.t. the frame projector."""
    if not H.hermitian:
        raise ContractViolation("split_leakage expects a hermitian operator")
    if not H.domain.same_space(frame.basis):
        raise ContractViolation("operator does not act on the frame sector")
    P = frame.projector()
    Q = identity_op(frame.basis) - P
    block = (P @ H @ P + Q @ H @ Q).asserted_hermitian()
    leak = (P @ H @ Q + Q @ H @ P).asserted_hermitian()
    return block, leak


def overhauser_report(spec: SpinBathSpec, frame: DressedFrame) -> LeakageReport:
    """Frame coefficients of the Overhauser operator A_z = sum a_i I_z^i / sqrt(2I).

    ket0 is always an exact eigenvector with eigenvalue -sqrt(I/2) sum a_i
    (enforced); the diagonal coefficient on ket1 and the leak component
    are computed sparsely and compared to their closed forms, including
    the dressed field shift used by ``effective_field``.
    """
    _require_lowest_frame(frame, "overhauser_report")
    alpha = spec.alpha
    I = spec.I
    A_z = collective_op(frame.basis, alpha, "z")

    c_z = -math.sqrt(I / 2.0) * float(np.sum(alpha))
    v0 = A_z @ frame.ket0
    eig_dev = (v0 - frame.ket0 * c_z).norm()
    if eig_dev > 1e-12:
        raise ContractViolation(
            f"polarized state is not an A_z eigenvector (deviation {eig_dev:.3e})"
        )
    checks = [
        CoefficientCheck(
            "overhauser_polarized_shift",
            computed=float(frame.ket0.dot(v0).real),
            quoted=c_z,
            tol=1e-12,
        )
    ]

    v1 = A_z @ frame.ket1
    diag = float(frame.ket1.dot(v1).real)
    quoted_diag = c_z + float(np.sum(alpha**3)) / math.sqrt(spec.two_I)
    checks.append(
        CoefficientCheck("overhauser_excited_shift", computed=diag, quoted=quoted_diag, tol=1e-12)
    )

    # effective Z coefficient of A A_z sqrt(2I) S_z over the frame: the
    # full dressed splitting, to compare with the closed-form field shift
    a0 = 0.5 * spec.A_hf * math.sqrt(spec.two_I) * float(frame.ket0.dot(v0).real)
    a1 = -0.5 * spec.A_hf * math.sqrt(spec.two_I) * diag
    shift_exact = a0 - a1
    shift_quoted = -spec.A_hf * float(np.sum(alpha * (I + alpha**2 / 2.0)))
    checks.append(
        CoefficientCheck("overhauser_field_shift", computed=shift_exact, quoted=shift_quoted)
    )

    leak_vec = _frame_leak(frame, v1)
    leak_norm = leak_vec.norm()
    estimate = float(np.mean(alpha) / (I * np.sum(alpha)))
    for c in checks:
        log.info(c.status)
    return LeakageReport(
        diag_coeff=diag,
        leak_vec=leak_vec,
        leak_norm=leak_norm,
        ratio=_ratio(leak_norm, c_z),
        analytic_estimate=estimate,
        checks=checks,
    )


def dipolar_report(
    spec: SpinBathSpec, frame: DressedFrame, b_bar: float | None = None
) -> LeakageReport:
    """Frame coefficients of the intrabath coupling.

    Computes the polarized-state eigenvalue c0, the excited-state shift
    c1 = <1|H_bath|1> - c0, and the leak component, comparing each
    against the quoted closed forms (both summation conventions for c1,
    and the constrained-family value 36 I b_bar when ``b_bar`` is given).
    """
    _require_lowest_frame(frame, "dipolar_report")
    alpha = spec.alpha
    I = spec.I
    b = spec.b if spec.b is not None else np.zeros((spec.K, spec.K))
    H = build_dipolar(spec, basis=frame.basis)

    v0 = H @ frame.ket0
    c0 = float(frame.ket0.dot(v0).real)
    dev0 = (v0 - frame.ket0 * c0).norm()
    if dev0 > 1e-12:
        raise ContractViolation(
            f"polarized state is not an eigenvector of the bath coupling ({dev0:.3e})"
        )
    pair_sum = float(np.sum(np.triu(b, 1)))
    checks = [
        CoefficientCheck("bath_polarized_shift", computed=c0, quoted=-16.0 * I * I * pair_sum)
    ]

    v1 = H @ frame.ket1
    diag = float(frame.ket1.dot(v1).real)
    c1 = diag - c0
    # quoted excited shift 4I sum a_i b_ni (8a_i + a_n), under both
    # readings of the double sum: all ordered pairs n != i, or each
    # unordered pair once
    ordered = 0.0
    for i in range(spec.K):
        for n in range(spec.K):
            if n != i:
                ordered += 4.0 * I * alpha[i] * b[n, i] * (8.0 * alpha[i] + alpha[n])
    checks.append(CoefficientCheck("bath_excited_shift_ordered", computed=c1, quoted=ordered))
    checks.append(CoefficientCheck("bath_excited_shift_pairwise", computed=c1, quoted=0.5 * ordered))
    if b_bar is not None:
        checks.append(
            CoefficientCheck("constrained_excited_shift", computed=c1, quoted=36.0 * I * b_bar)
        )

    leak_vec = _frame_leak(frame, v1)
    leak_norm = leak_vec.norm()
    for c in checks:
        log.info(c.status)
    return LeakageReport(
        diag_coeff=diag,
        leak_vec=leak_vec,
        leak_norm=leak_norm,
        ratio=_ratio(leak_norm, c0),
        analytic_estimate=None,
        checks=checks,
    )


def _leo_constructions(spec: SpinBathSpec, frame: DressedFrame) -> tuple[np.ndarray, LinearOp]:
    V = flip_flop(spec, basis=frame.basis)
    # A_+S_- + A_-S_+ = 2 V, so the generator angle doubles
    w, U = np.linalg.eigh(V.dense())
    R_exp = (U * np.exp(-2j * math.pi * w)) @ U.conj().T
    R_spec = identity_op(frame.basis) - 2.0 * frame.projector()
    return R_exp, R_spec


def leo_deviation(spec: SpinBathSpec, frame: DressedFrame) -> float:
    """Max entrywise gap between the exponential and spectral sign-flip forms."""
    _require_lowest_frame(frame, "leo_deviation")
    R_exp, R_spec = _leo_constructions(spec, frame)
    return float(np.max(np.abs(R_exp - R_spec.dense())))


def leakage_elimination_op(spec: SpinBathSpec, frame: DressedFrame) -> LinearOp:
    """Sign-flip unitary R = exp(-i pi (A_+S_- + A_-S_+)) on the N=1 sector.

    Built twice: by exponentiating the sparse generator and directly as
    1 - 2P with P the frame projector.  The two must agree within 1e-10;
    the spectral form is returned (hermitian and unitary, R^2 = 1).
    """
    _require_lowest_frame(frame, "leakage_elimination_op")
    R_exp, R_spec = _leo_constructions(spec, frame)
    dev = float(np.max(np.abs(R_exp - R_spec.dense())))
    if dev > 1e-10:
        raise ContractViolation(
            f"exponential and spectral sign-flip constructions disagree ({dev:.3e})"
        )
    return R_spec.asserted_hermitian()


@dataclass(frozen=True)
class BangBangSchedule:
    """Bang-bang timing: ``cycles`` repetitions of half-step, flip,
    half-step, flip; total evolved time = cycles * tau."""

    tau: float
    cycles: int

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.cycles < 0:
            raise ValueError("cycles must be nonnegative")

    @property
    def total_time(self) -> float:
        return self.cycles * self.tau


def bangbang_evolve(
    H: LinearOp, frame: DressedFrame, sched: BangBangSchedule, psi0: KetState
) -> tuple[KetState, list[float]]:
    """Run the flip-interleaved evolution and trace the leak probability.

    Returns the final state and, after each cycle, 1 - |P psi|^2 with P
    the frame projector.
    """
    if not psi0.basis.same_space(frame.basis):
        raise ContractViolation("initial state is not in the frame sector")
    R = leakage_elimination_op(frame.spec, frame)
    P = frame.projector()
    psi = KetState(psi0.basis, psi0.amps.copy())
    trace: list[float] = []
    for _ in range(sched.cycles):
        psi = propagate(H, psi, sched.tau / 2.0)
        psi = R @ psi
        psi = propagate(H, psi, sched.tau / 2.0)
        psi = R @ psi
        leak = 1.0 - (P @ psi).norm() ** 2
        trace.append(max(leak, 0.0))
    return psi, trace


def free_leak_probability(H: LinearOp, frame: DressedFrame, T: float, psi0: KetState) -> float:
    """Leak probability after plain evolution for time T (no flips)."""
    psi = propagate(H, psi0, T)
    return max(0.0, 1.0 - (frame.projector() @ psi).norm() ** 2)


def bosonization_deviation(
    spec: SpinBathSpec,
    psi: KetState,
    k: int,
    kprime: int,
    mode_matrix: np.ndarray | None = None,
) -> float:
    """Distance of the mode pair (k, k') from bosonic commutation on psi.

    Evaluates |<psi|[A_k-, A_k'+]|psi> - delta_kk'|, which reduces to
    |sum_i w_k,i w_k',i <n_i>| / I; zero when every site stays polarized.
    """
    if mode_matrix is None:
        mode_matrix = mode_completion(spec.alpha)
    K = spec.K
    if not (0 <= k < K and 0 <= kprime < K):
        raise ValueError(f"mode indices must lie in 0..{K - 1}")
    nrm = psi.norm()
    if abs(nrm - 1.0) > 1e-9:
        raise ContractViolation("state must be normalized")
    basis = psi.basis
    off = 1 if basis.has_electron else 0
    occ = basis.occ[:, off:].astype(float)  # n_i per configuration
    weights = np.abs(psi.amps) ** 2
    n_expect = weights @ occ
    val = float(np.dot(mode_matrix[k] * mode_matrix[kprime], n_expect)) / spec.I
    return abs(val)

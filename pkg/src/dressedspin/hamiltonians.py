"""Hamiltonian builders for the central-spin problem.

The full model is H = H_field + H_hyperfine + H_bath with

    H_field     = g* mu_B B S_z + g_n mu_n B I_z
    H_hyperfine = A sqrt(2I) (A_z S_z + V_f)
    H_bath      = sum_{i<j} b_ij (I+_i I-_j + I-_i I+_j - 4 Iz_i Iz_j)

where A_mu = sum_i alpha_i I^i_mu / sqrt(2I) are the weighted collective
bath operators and V_f = (A_+ S_- + A_- S_+)/2 is the electron-bath
flip-flop.  Every builder accepts an explicit basis (full space or one
N sector) and returns a sparse LinearOp on it.

The dominant single-qubit drive keeps only the field-aligned part,

    H_drive = F S_z + A sqrt(2I) V_f,

with F the detuning knob; ``effective_field`` provides the static
closed-form value of F that absorbs the mean bath polarization shift.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .core import (
    LinearOp,
    SpinBasis,
    SpinBathSpec,
    collective_op,
    diagonal_op,
    full_basis,
    spin_op,
)


class InfeasibleConstraints(ValueError):
    """Constraint system has no solution at the requested tolerance."""

    def __init__(self, message: str, residuals: dict[str, float]):
        super().__init__(message)
        self.residuals = residuals


@dataclass(frozen=True)
class DotGeometry:
    """Bath site positions (K x 3) and a dipolar prefactor."""

    positions: np.ndarray
    prefactor: float = 1.0

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise ValueError(f"positions must be (K, 3), got {pos.shape}")
        if not np.all(np.isfinite(pos)):
            raise ValueError("positions must be finite")
        object.__setattr__(self, "positions", pos)

    @property
    def K(self) -> int:
        return self.positions.shape[0]


@dataclass(frozen=True)
class EffectiveField:
    """Static field summary: shifted field B_eff and detuning F."""

    B_eff: float
    F: float


def _default_basis(spec: SpinBathSpec, basis: SpinBasis | None) -> SpinBasis:
    if basis is None:
        return full_basis(spec)
    if basis.K != spec.K or basis.two_I != spec.two_I:
        raise ValueError("basis does not match the spec geometry")
    return basis


def build_zeeman(spec: SpinBathSpec, basis: SpinBasis | None = None) -> LinearOp:
    """H_field = g* mu_B B S_z + g_n mu_n B I_z (diagonal)."""
    basis = _default_basis(spec, basis)
    z = spec.zeeman
    two_m = basis.two_m()
    if basis.has_electron:
        ms = two_m[:, 0] / 2.0
        mi = two_m[:, 1:].sum(axis=1) / 2.0
    else:
        ms = 0.0
        mi = two_m.sum(axis=1) / 2.0
    return diagonal_op(basis, z.electron_gyro * z.B * ms + z.nuclear_gyro * z.B * mi)


def flip_flop(spec: SpinBathSpec, basis: SpinBasis | None = None) -> LinearOp:
    """V_f = (A_+ S_- + A_- S_+)/2, built site by site inside the basis."""
    basis = _default_basis(spec, basis)
    if not basis.has_electron:
        raise ValueError("flip-flop couples to the electron; need an electron basis")
    cap = basis.two_I
    scale = 0.5 / math.sqrt(cap)
    occ = basis.occ.astype(np.int64)
    up = occ[:, 0] == 1
    rows, cols, data = [], [], []
    for i in range(spec.K):
        w = spec.alpha[i] * scale
        if w == 0.0:
            continue
        col = 1 + i
        c = occ[:, col]
        # A_+ S_-: electron up -> down, site occupation c -> c+1
        src = np.nonzero(up & (c < cap))[0]
        if len(src):
            u = 2 * c[src] - cap
            coeff = np.sqrt((cap * (cap + 2) - u * (u + 2)) / 4.0)
            dst = basis.lookup(basis.keys[src] - basis.powers[0] + basis.powers[col])
            rows.append(dst)
            cols.append(src)
            data.append(w * coeff)
        # A_- S_+: electron down -> up, site occupation c -> c-1
        src = np.nonzero(~up & (c > 0))[0]
        if len(src):
            u = 2 * c[src] - cap
            coeff = np.sqrt((cap * (cap + 2) - u * (u - 2)) / 4.0)
            dst = basis.lookup(basis.keys[src] + basis.powers[0] - basis.powers[col])
            rows.append(dst)
            cols.append(src)
            data.append(w * coeff)
    if rows:
        mat = sp.coo_matrix(
            (np.concatenate(data).astype(complex), (np.concatenate(rows), np.concatenate(cols))),
            shape=(basis.dim, basis.dim),
        ).tocsr()
    else:
        mat = sp.csr_matrix((basis.dim, basis.dim), dtype=complex)
    return LinearOp(mat, basis, hermitian=True)


def build_hyperfine(
    spec: SpinBathSpec, basis: SpinBasis | None = None
) -> tuple[LinearOp, LinearOp, LinearOp]:
    """Hyperfine term and its split.  Returns (full, zz, flipflop) with
    full = zz + flipflop exactly (same sparse sum)."""
    basis = _default_basis(spec, basis)
    if not basis.has_electron:
        raise ValueError("hyperfine couples to the electron; need an electron basis")
    two_m = basis.two_m()
    ms = two_m[:, 0] / 2.0
    overlap = (two_m[:, 1:] / 2.0) @ spec.alpha
    zz = diagonal_op(basis, spec.A_hf * overlap * ms)
    ff = (spec.A_hf * math.sqrt(basis.two_I)) * flip_flop(spec, basis)
    return zz + ff, zz, ff


def build_dipolar(
    spec: SpinBathSpec, basis: SpinBasis | None = None, b: np.ndarray | None = None
) -> LinearOp:
    """Intra-bath coupling sum_{i<j} b_ij (I+_i I-_j + h.c. - 4 Iz_i Iz_j)."""
    basis = _default_basis(spec, basis)
    if b is None:
        b = spec.b
    else:
        b = np.asarray(b, dtype=float)
        if b.shape != (spec.K, spec.K):
            raise ValueError(f"coupling matrix must be {spec.K}x{spec.K}")
    cap = basis.two_I
    off = 1 if basis.has_electron else 0
    m = basis.nuclear_two_m() / 2.0
    diag = -2.0 * np.einsum("ci,ij,cj->c", m, b, m)
    occ = basis.occ.astype(np.int64)
    rows, cols, data = [], [], []
    pairs = [(i, j) for i in range(spec.K) for j in range(spec.K) if i != j and b[i, j] != 0.0]
    for i, j in pairs:
        # I+_i I-_j with coefficient b_ij (ordered pairs cover both terms)
        ci = occ[:, off + i]
        cj = occ[:, off + j]
        src = np.nonzero((ci < cap) & (cj > 0))[0]
        if len(src) == 0:
            continue
        ui = 2 * ci[src] - cap
        uj = 2 * cj[src] - cap
        coeff = np.sqrt((cap * (cap + 2) - ui * (ui + 2)) / 4.0) * np.sqrt(
            (cap * (cap + 2) - uj * (uj - 2)) / 4.0
        )
        dst = basis.lookup(basis.keys[src] + basis.powers[off + i] - basis.powers[off + j])
        rows.append(dst)
        cols.append(src)
        data.append(b[i, j] * coeff)
    base = sp.diags(diag.astype(complex))
    if rows:
        hop = sp.coo_matrix(
            (np.concatenate(data).astype(complex), (np.concatenate(rows), np.concatenate(cols))),
            shape=(basis.dim, basis.dim),
        ).tocsr()
        mat = base + hop
    else:
        mat = base
    return LinearOp(mat, basis, hermitian=True)


def build_dominant(spec: SpinBathSpec, F: float, basis: SpinBasis | None = None) -> LinearOp:
    """H_drive = F S_z + A sqrt(2I) V_f."""
    basis = _default_basis(spec, basis)
    sz = spin_op(basis, 0, "z")
    return F * sz + (spec.A_hf * math.sqrt(basis.two_I)) * flip_flop(spec, basis)


def build_total(spec: SpinBathSpec, basis: SpinBasis | None = None) -> LinearOp:
    """Complete model: field + hyperfine + intra-bath couplings."""
    basis = _default_basis(spec, basis)
    hf, _, _ = build_hyperfine(spec, basis)
    return build_zeeman(spec, basis) + hf + build_dipolar(spec, basis)


def effective_field(spec: SpinBathSpec) -> EffectiveField:
    """Closed-form shifted field for the fully polarized bath frame:

        B_eff = B - A sum_i alpha_i (I + alpha_i^2/2) / (g* mu_B)
        F     = g* mu_B B_eff - g_n mu_n B
    """
    z = spec.zeeman
    if z.electron_gyro == 0.0:
        raise ValueError("g* mu_B must be nonzero to define B_eff")
    shift = spec.A_hf * float(np.sum(spec.alpha * (spec.I + spec.alpha**2 / 2.0)))
    b_eff = z.B - shift / z.electron_gyro
    return EffectiveField(B_eff=b_eff, F=z.electron_gyro * b_eff - z.nuclear_gyro * z.B)


# ---------------------------------------------------------------------------
# dipolar couplings from geometry and the constrained family


def dipolar_from_geometry(geom: DotGeometry) -> np.ndarray:
    """b_ij = prefactor (3 cos^2 theta_ij - 1) / r_ij^3 with theta measured
    from the z axis."""
    pos = geom.positions
    K = geom.K
    b = np.zeros((K, K))
    for i in range(K):
        for j in range(i + 1, K):
            d = pos[j] - pos[i]
            r = np.linalg.norm(d)
            if r < 1e-12:
                raise ValueError(f"sites {i} and {j} are coincident")
            cos2 = (d[2] / r) ** 2
            b[i, j] = b[j, i] = geom.prefactor * (3.0 * cos2 - 1.0) / r**3
    return b


@dataclass(frozen=True)
class ConstrainedCouplings:
    """Solution of the constrained coupling design problem."""

    b: np.ndarray
    b_bar: float
    b_tilde: float
    row_residual: float
    align_residual: float


def constrained_dipolar(
    alpha: np.ndarray, b_bar: float, tol: float = 1e-8
) -> ConstrainedCouplings:
    """Symmetric zero-diagonal couplings with uniform row sums b_bar and
    with alpha an eigenvector of the matrix (eigenvalue b_tilde = b_bar).

    A two-scalar seed b_ij = c1 + c2 alpha_i alpha_j is refined by an
    exact least-squares solve over all independent upper-triangle
    entries; infeasible systems (generic alpha needs K >= 4) raise
    InfeasibleConstraints with the residuals.
    """
    alpha = np.asarray(alpha, dtype=float)
    K = alpha.shape[0]
    if K < 2:
        raise ValueError("need at least two sites")
    pairs = [(i, j) for i in range(K) for j in range(i + 1, K)]
    P = len(pairs)
    # rows 0..K-1: row sums; rows K..2K-1: (b alpha)_n = b_bar alpha_n
    A = np.zeros((2 * K, P))
    for p, (i, j) in enumerate(pairs):
        A[i, p] += 1.0
        A[j, p] += 1.0
        A[K + i, p] += alpha[j]
        A[K + j, p] += alpha[i]
    rhs = np.concatenate([np.full(K, b_bar), b_bar * alpha])

    # seed: b = c1 (ones - eye) + c2 (alpha alpha^T - diag(alpha^2))
    seed_cols = np.zeros((2 * K, 2))
    for p, (i, j) in enumerate(pairs):
        seed_cols[:, 0] += A[:, p]
        seed_cols[:, 1] += A[:, p] * alpha[i] * alpha[j]
    c, *_ = np.linalg.lstsq(seed_cols, rhs, rcond=None)
    x0 = np.array([c[0] + c[1] * alpha[i] * alpha[j] for (i, j) in pairs])
    # refine: exact least squares on the residual over all free entries
    dx, *_ = np.linalg.lstsq(A, rhs - A @ x0, rcond=None)
    x = x0 + dx

    b = np.zeros((K, K))
    for p, (i, j) in enumerate(pairs):
        b[i, j] = b[j, i] = x[p]
    row_res = float(np.max(np.abs(b.sum(axis=1) - b_bar)))
    align_res = float(np.max(np.abs(b @ alpha - b_bar * alpha)))
    if max(row_res, align_res) > tol:
        raise InfeasibleConstraints(
            f"constraints not satisfiable at tol={tol:g} "
            f"(row-sum residual {row_res:.3e}, alignment residual {align_res:.3e}); "
            f"generic profiles need K >= 4, got K={K}",
            {"row_sum": row_res, "alignment": align_res},
        )
    b_tilde = float(alpha @ b @ alpha / (alpha @ alpha))
    return ConstrainedCouplings(
        b=b, b_bar=float(b_bar), b_tilde=b_tilde, row_residual=row_res, align_residual=align_res
    )


def load_geometry(path, prefactor: float = 1.0) -> DotGeometry:
    """Read site positions from a text file with one 'x y z' triple per line."""
    pos = np.loadtxt(path, ndmin=2)
    if pos.shape[1] != 3:
        raise ValueError(f"geometry file must have 3 columns, got {pos.shape[1]}")
    return DotGeometry(positions=pos, prefactor=prefactor)

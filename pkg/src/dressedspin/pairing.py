"""Induced nuclear pair interaction and the self-consistent gap equations.

Eliminating the electron-bath flip-flop to second order in A/F leaves
the bath with the attractive interaction

    V_eff = -(A^2 I / 2F) A_+ A_-,

which for I = 1/2 maps onto a pairing model

    H_eff = sum_i eps_i n_i - sum_ij g_ij I_+^i I_-^j,

with eps_i = -A a_i/2 - 2 sum_{j!=i}(b_ij + b_ji) and
g_ij = (A^2/4F) a_i a_j + b_ij.  Positive g is attractive; the explicit
minus sits in front of the pair-transfer sum.  The mean-field gap and
number equations

    Delta_i = (1/2) sum_j g_ij Delta_j / xi_j,     sum_i v_i^2 = n,
    xi_j = sqrt((eps_j - lambda)^2 + Delta_j^2),

are solved by damped fixed-point iteration with an inner bisection for
the chemical potential.  For the uniform profile (a_i = 1/sqrt(K), all
couplings equal) the gap has the closed form
(A^2/(4FK) + b) sqrt(n(K-n)) against which the solver is validated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .core import (
    KetState,
    LinearOp,
    SpinBathSpec,
    collective_op,
    enumerate_sector,
    nuclear_basis,
    nuclear_sector,
    pair_basis,
    pair_sector,
    spin_op,
)
from .hamiltonians import build_dominant

PAIR_DIM_CAP = 20  # 2^K state-space guard for materialized models


class ConvergenceError(RuntimeError):
    """Gap iteration failed; carries the residual history."""

    def __init__(self, message: str, history: list[float]):
        super().__init__(message)
        self.history = history


def froehlich_effective(spec: SpinBathSpec, F: float, basis=None) -> LinearOp:
    """Second-order effective bath interaction -(A^2 I / 2F) A_+ A_-."""
    if F == 0.0:
        raise ValueError("effective interaction is singular at zero detuning F")
    if basis is None:
        basis = nuclear_basis(spec)
    coeff = -(spec.A_hf**2) * spec.I / (2.0 * F)
    if basis.N == 0:
        # A_- annihilates the whole sector
        return LinearOp(sp.csr_matrix((basis.dim, basis.dim), dtype=complex), basis, hermitian=True)
    a_minus = collective_op(basis, spec.alpha, "-")
    a_plus = a_minus.dagger()
    return (coeff * (a_plus @ a_minus)).asserted_hermitian()


def froehlich_generator(spec: SpinBathSpec, F: float, basis=None) -> LinearOp:
    """Anti-hermitian generator S = -(A/F) sqrt(I/2) (A_- S_+ - A_+ S_-).

    Conjugating by exp(S) removes the flip-flop coupling at first order:
    [F S_z, S] = -A sqrt(2I) V_f exactly.
    """
    if F == 0.0:
        raise ValueError("generator is singular at zero detuning F")
    if basis is None:
        from .core import full_basis

        basis = full_basis(spec)
    scale = -(spec.A_hf / F) * math.sqrt(spec.I / 2.0)
    n_top = basis.K * basis.two_I + 1
    terms = []
    if basis.N is None or basis.N < n_top:
        s_plus = spin_op(basis, 0, "+")
        terms.append(collective_op(s_plus.codomain, spec.alpha, "-") @ s_plus)
    if basis.N is None or basis.N > 0:
        s_minus = spin_op(basis, 0, "-")
        terms.append(-1.0 * (collective_op(s_minus.codomain, spec.alpha, "+") @ s_minus))
    if not terms:
        return LinearOp(sp.csr_matrix((basis.dim, basis.dim), dtype=complex), basis)
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    return scale * total


@dataclass(frozen=True)
class FroehlichCheck:
    """Eigenvalue comparison between the effective model and the exact
    two-branch Hamiltonian in one sector."""

    ratio: float
    N: int
    dim_down: int
    max_abs_error: float
    rel_error: float


def froehlich_consistency(spec: SpinBathSpec, F: float, N: int | None = None) -> FroehlichCheck:
    """Compare eigenvalues of -F/2 + V_eff on the electron-down branch
    with the exact spectrum of the dominant Hamiltonian in sector N.

    The relative error is normalized to the interaction scale
    A^2 I / (2|F|), so halving A/F should divide it by about four.
    """
    if F == 0.0:
        raise ValueError("need a nonzero detuning F")
    if N is None:
        N = max(1, (spec.K * spec.two_I) // 2)
    if not (1 <= N <= spec.K * spec.two_I):
        raise ValueError(f"sector N={N} has no electron-down branch")
    sector = enumerate_sector(spec, N)
    H = build_dominant(spec, F, basis=sector)
    w_exact = np.linalg.eigvalsh(H.dense())

    nuc = nuclear_sector(spec, N)
    V_eff = froehlich_effective(spec, F, basis=nuc)
    w_eff = np.sort(np.linalg.eigvalsh(V_eff.dense()) - F / 2.0)

    d = nuc.dim
    branch = np.sort(w_exact)[:d] if F > 0 else np.sort(w_exact)[-d:]
    err = float(np.max(np.abs(branch - w_eff)))
    scale = spec.A_hf**2 * spec.I / (2.0 * abs(F))
    return FroehlichCheck(
        ratio=spec.A_hf / abs(F),
        N=N,
        dim_down=d,
        max_abs_error=err,
        rel_error=err / scale if scale > 0 else 0.0,
    )


# ---------------------------------------------------------------------------
# pairing model


@dataclass(frozen=True)
class PairingModel:
    """Site energies and pair couplings of the reduced I = 1/2 model."""

    K: int
    eps: np.ndarray
    g: np.ndarray
    b: np.ndarray
    n_target: float

    def __post_init__(self):
        eps = np.asarray(self.eps, dtype=float)
        g = np.asarray(self.g, dtype=float)
        b = np.asarray(self.b, dtype=float)
        object.__setattr__(self, "eps", eps)
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "b", b)
        K = self.K
        if eps.shape != (K,) or not np.all(np.isfinite(eps)):
            raise ValueError("eps must be K finite reals")
        if g.shape != (K, K) or not np.all(np.isfinite(g)):
            raise ValueError("g must be a K x K real matrix")
        if np.max(np.abs(g - g.T)) > 1e-12:
            raise ValueError("g must be symmetric")
        if b.shape != (K, K):
            raise ValueError("b must be K x K")
        if not (0.0 < self.n_target < K):
            raise ValueError(f"n_target must lie strictly between 0 and K={K}")


def build_pairing_model(
    spec: SpinBathSpec, F: float, n_target: float, verify: bool = True
) -> PairingModel:
    """Reduce a spin-1/2 bath to its pairing model.

    eps and g follow the closed forms in the module docstring.  With
    ``verify`` the model is materialized in both the spin and the
    pair-transfer language (K <= 20) and the constructions are checked
    to agree entrywise.
    """
    if spec.two_I != 1:
        raise ValueError("the pairing reduction is defined for I = 1/2 baths only")
    if F == 0.0:
        raise ValueError("need a nonzero detuning F")
    alpha = spec.alpha
    b = spec.b if spec.b is not None else np.zeros((spec.K, spec.K))
    off = b + b.T - 2.0 * np.diag(np.diag(b))
    eps = -spec.A_hf * alpha / 2.0 - 2.0 * off.sum(axis=1)
    g = (spec.A_hf**2 / (4.0 * F)) * np.outer(alpha, alpha) + b
    model = PairingModel(K=spec.K, eps=eps, g=g, b=b, n_target=float(n_target))
    if verify and spec.K <= PAIR_DIM_CAP:
        pairing_hamiltonian(model)  # raises if the dual constructions differ
    return model


def uniform_pairing_model(
    K: int, A_hf: float, F: float, b: float, n_target: float
) -> PairingModel:
    """All-equal-coupling family: g_ij = A^2/(4FK) + b for every (i, j).

    The constant b extends to the diagonal here, which is what gives the
    closed-form gap (A^2/(4FK) + b) sqrt(n(K-n)).
    """
    if F == 0.0:
        raise ValueError("need a nonzero detuning F")
    c = A_hf**2 / (4.0 * F * K) + b
    eps = np.full(K, -A_hf / (2.0 * math.sqrt(K)) - 4.0 * (K - 1) * b)
    return PairingModel(
        K=K,
        eps=eps,
        g=np.full((K, K), c),
        b=np.full((K, K), b),
        n_target=float(n_target),
    )


def _pairing_matrix_direct(model: PairingModel, basis) -> sp.csr_matrix:
    """Pair-transfer language: hop amplitudes straight from bitstrings."""
    occ = basis.occ.astype(np.int64)
    diag = occ @ (model.eps - np.diag(model.g))
    rows = [np.arange(basis.dim)]
    cols = [np.arange(basis.dim)]
    data = [diag.astype(complex)]
    for i in range(model.K):
        for j in range(model.K):
            if i == j or model.g[i, j] == 0.0:
                continue
            src = np.nonzero((occ[:, i] == 0) & (occ[:, j] == 1))[0]
            if len(src) == 0:
                continue
            dst = basis.lookup(basis.keys[src] + basis.powers[i] - basis.powers[j])
            rows.append(dst)
            cols.append(src)
            data.append(np.full(len(src), -model.g[i, j], dtype=complex))
    mat = sp.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(basis.dim, basis.dim),
    )
    return mat.tocsr()


def _pairing_matrix_spin(model: PairingModel, basis) -> sp.csr_matrix:
    """Spin language: n_i = I_z^i + 1/2 and I_+^i I_-^j products."""
    H = sp.csr_matrix((basis.dim, basis.dim), dtype=complex)
    half = sp.identity(basis.dim, dtype=complex, format="csr") * 0.5
    for i in range(model.K):
        n_i = spin_op(basis, i + 1, "z").matrix + half
        H = H + (model.eps[i] - model.g[i, i]) * n_i
    for i in range(model.K):
        up = spin_op(basis, i + 1, "+").matrix
        for j in range(model.K):
            if i == j or model.g[i, j] == 0.0:
                continue
            H = H - model.g[i, j] * (up @ spin_op(basis, j + 1, "-").matrix)
    return H


def pairing_hamiltonian(model: PairingModel, basis=None) -> LinearOp:
    """H_eff on the 2^K pair space, dual-constructed and cross-checked."""
    if model.K > PAIR_DIM_CAP:
        raise ValueError(f"K={model.K} exceeds the materialization cap {PAIR_DIM_CAP}")
    if basis is None:
        basis = pair_basis(model.K)
    if basis.N is not None:
        raise ValueError("dual construction needs the full pair basis; "
                         "sector restrictions go through exact_sector_gap")
    direct = _pairing_matrix_direct(model, basis)
    spin = _pairing_matrix_spin(model, basis)
    dev = direct - spin
    dev = np.max(np.abs(dev.data)) if dev.nnz else 0.0
    if dev > 1e-12:
        raise AssertionError(f"pair and spin constructions disagree by {dev:.3e}")
    return LinearOp(direct, basis, hermitian=True)


# ---------------------------------------------------------------------------
# gap equations


@dataclass
class BcsSolution:
    """Converged mean-field data; ``lam`` is the chemical potential."""

    delta: np.ndarray
    lam: float
    u: np.ndarray
    v: np.ndarray
    residual: float
    iterations: int
    converged: bool
    normal_state: bool


def _xi(eps: np.ndarray, lam: float, delta: np.ndarray) -> np.ndarray:
    return np.hypot(eps - lam, delta)


def _v_squared(eps: np.ndarray, lam: float, delta: np.ndarray) -> np.ndarray:
    xi = _xi(eps, lam, delta)
    with np.errstate(invalid="ignore", divide="ignore"):
        x = np.where(xi > 0, (eps - lam) / np.where(xi > 0, xi, 1.0), 0.0)
    return 0.5 * (1.0 - x)


def _solve_number(eps: np.ndarray, delta: np.ndarray, n: float) -> float:
    """Bisection for lambda with sum v^2 = n; v^2 is monotone in lambda."""
    pad = float(np.max(np.abs(delta))) + 1.0
    lo = float(np.min(eps)) - pad
    hi = float(np.max(eps)) + pad
    while np.sum(_v_squared(eps, lo, delta)) > n:
        lo -= hi - lo
    while np.sum(_v_squared(eps, hi, delta)) < n:
        hi += hi - lo
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.sum(_v_squared(eps, mid, delta)) < n:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-12 * max(1.0, abs(lo), abs(hi)):
            break
    return 0.5 * (lo + hi)


def solve_bcs(model: PairingModel, tol: float = 1e-10, max_iter: int = 500) -> BcsSolution:
    """Damped fixed-point iteration on (Delta, lambda).

    Starts from the attractive-channel estimate, re-solves the number
    equation by bisection every step, and halves the damping whenever
    the residual grows.  Collapse to Delta = 0 is reported as a normal
    state, not an error; failure to converge raises ConvergenceError
    with the residual history attached.
    """
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    eps, g, n = model.eps, model.g, model.n_target
    scale = max(1.0, float(np.max(np.abs(eps))), float(np.max(np.abs(g))))
    delta = 0.5 * np.clip(g, 0.0, None).sum(axis=1)
    if np.max(delta) <= 0.0:
        # no attractive channel anywhere: the gap equation only admits
        # Delta = 0, so skip the iteration entirely
        return _normal_state(model, 0)
    damping = 0.5
    history: list[float] = []
    prev_res = math.inf
    lam = 0.0
    for it in range(1, max_iter + 1):
        lam = _solve_number(eps, delta, n)
        xi = _xi(eps, lam, delta)
        safe = np.where(xi > 0, xi, 1.0)
        new = 0.5 * g @ (delta / safe)
        res = float(np.max(np.abs(new - delta)))
        history.append(res)
        if res > prev_res:
            damping = max(damping / 2.0, 1.0 / 64.0)
        prev_res = res
        delta = delta + damping * (new - delta)
        if np.max(np.abs(delta)) < 1e-13 * scale:
            return _normal_state(model, it)
        if res < tol * scale:
            break
    else:
        raise ConvergenceError(
            f"gap iteration did not reach tol={tol:g} in {max_iter} steps "
            f"(last residual {history[-1]:.3e})",
            history,
        )

    # converged onto a gap indistinguishable from zero: normal state
    if np.max(np.abs(delta)) < 10.0 * tol * scale:
        return _normal_state(model, it)
    if np.sum(delta) < 0:
        delta = -delta
    if np.min(delta) < -1e-8 * scale:
        raise ConvergenceError(
            "converged to a mixed-sign gap structure; the scalar-gap "
            "parametrization does not apply to this coupling matrix",
            history,
        )
    delta = np.clip(delta, 0.0, None)
    lam = _solve_number(eps, delta, n)
    xi = _xi(eps, lam, delta)
    v2 = _v_squared(eps, lam, delta)
    gap_res = float(np.max(np.abs(delta - 0.5 * g @ (delta / np.where(xi > 0, xi, 1.0)))))
    num_res = float(abs(np.sum(v2) - n))
    return BcsSolution(
        delta=delta,
        lam=lam,
        u=np.sqrt(np.clip(1.0 - v2, 0.0, 1.0)),
        v=np.sqrt(np.clip(v2, 0.0, 1.0)),
        residual=max(gap_res, num_res),
        iterations=it,
        converged=True,
        normal_state=False,
    )


def _normal_state(model: PairingModel, iterations: int) -> BcsSolution:
    """Zero-gap solution: fill levels from the bottom, splitting the
    remainder uniformly over the degenerate shell at the Fermi energy."""
    eps, n = model.eps, model.n_target
    K = model.K
    scale = max(1.0, float(np.max(np.abs(eps))))
    order = np.argsort(eps, kind="stable")
    v2 = np.zeros(K)
    remaining = n
    lam = float(eps[order[0]])
    i = 0
    while i < K and remaining > 1e-15:
        j = i
        while j + 1 < K and eps[order[j + 1]] - eps[order[i]] <= 1e-12 * scale:
            j += 1
        shell = order[i : j + 1]
        take = min(remaining, float(len(shell)))
        v2[shell] = take / len(shell)
        remaining -= take
        if take < len(shell) or j + 1 >= K:
            lam = float(eps[shell[0]])
        else:
            lam = 0.5 * float(eps[shell[0]] + eps[order[j + 1]])
        i = j + 1
    return BcsSolution(
        delta=np.zeros(K),
        lam=lam,
        u=np.sqrt(np.clip(1.0 - v2, 0.0, 1.0)),
        v=np.sqrt(np.clip(v2, 0.0, 1.0)),
        residual=float(abs(np.sum(v2) - n)),
        iterations=iterations,
        converged=True,
        normal_state=True,
    )


def bcs_state(model: PairingModel, sol: BcsSolution, project: bool = False) -> KetState:
    """Product state prod_i (u_i + v_i I_+^i) |polarized>, normalized.

    Fully occupied levels (u_i = 0) are handled by the same product
    form.  With ``project`` the state is restricted to the pair-number
    sector round(n_target) and renormalized.
    """
    if model.K > PAIR_DIM_CAP:
        raise ValueError(f"K={model.K} exceeds the materialization cap {PAIR_DIM_CAP}")
    basis = pair_basis(model.K)
    amps = np.array([1.0 + 0.0j])
    for i in range(model.K):
        amps = np.kron(amps, np.array([sol.u[i], sol.v[i]], dtype=complex))
    psi = KetState(basis, amps)
    if project:
        n = int(round(model.n_target))
        keep = basis.occ.sum(axis=1) == n
        amps = np.where(keep, psi.amps, 0.0)
        nrm = np.linalg.norm(amps)
        if nrm < 1e-300:
            raise ValueError(f"state has no weight in the n={n} sector")
        psi = KetState(basis, amps / nrm)
    else:
        psi = psi.normalized()
    return psi


def gap_vs_filling(
    K: int, A_hf: float, F: float, b: float, n_values=None, tol: float = 1e-10
) -> list[dict]:
    """Solve the uniform family across fillings; one row per n."""
    if n_values is None:
        n_values = list(range(1, K))
    rows = []
    for n in n_values:
        sol = solve_bcs(uniform_pairing_model(K, A_hf, F, b, float(n)), tol=tol)
        rows.append(
            {
                "n": float(n),
                "lambda": sol.lam,
                "delta_min": float(np.min(sol.delta)),
                "delta_max": float(np.max(sol.delta)),
                "residual": sol.residual,
                "iterations": sol.iterations,
            }
        )
    return rows


@dataclass(frozen=True)
class SectorGapReport:
    """Exact spectral data of H_eff around the target filling."""

    n: int
    ground_energy: float
    gap_in_sector: float
    pair_curvature: float | None


def exact_sector_gap(model: PairingModel, n: int | None = None) -> SectorGapReport:
    """Exact diagonalization gap of H_eff at fixed pair number.

    ``gap_in_sector`` is E1 - E0 within the n sector; ``pair_curvature``
    is E0(n-1) + E0(n+1) - 2 E0(n) when both neighbors exist.
    """
    if n is None:
        n = int(round(model.n_target))
    if not (0 <= n <= model.K):
        raise ValueError(f"filling n={n} out of range 0..{model.K}")

    def ground(m: int) -> np.ndarray:
        basis = pair_sector(model.K, m)
        return np.linalg.eigvalsh(_pairing_matrix_direct(model, basis).toarray())

    w = ground(n)
    gap = float(w[1] - w[0]) if len(w) > 1 else math.inf
    curvature = None
    if 1 <= n <= model.K - 1:
        curvature = float(ground(n - 1)[0] + ground(n + 1)[0] - 2.0 * w[0])
    return SectorGapReport(
        n=n, ground_energy=float(w[0]), gap_in_sector=gap, pair_curvature=curvature
    )

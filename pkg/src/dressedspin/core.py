"""Sector-exact spin algebra for a central electron coupled to a nuclear bath.

A single electron spin 1/2 sits in a bath of K nuclear spins of equal
magnitude I.  Every operator in this package is built over an explicit
basis of product configurations (m_s, m_1, ..., m_K), electron slot
first, ordered ascending lexicographically in the magnetic quantum
numbers.  The total excitation number

    N = (m_s + 1/2) + sum_i (m_i + I)

is conserved by all the Hamiltonians of interest, so bases come in two
flavours: the full product space and a single-N sector.  Nuclear-only
variants of both (no electron slot) are used by the pairing analysis.

Conventions
-----------
* occupation of the electron slot n_0 = m_s + 1/2 in {0, 1}
* occupation of a nuclear site  n_i = m_i + I  in {0, ..., 2I}
* sector bases are enumerated ascending in (m_s, m_1, ..., m_K); the
  full space uses the same ordering, which coincides with the index
  ordering of a Kronecker product electron x site1 x ... x siteK with
  each factor ordered ascending in m.

Sparse matrices (CSR) hold every operator; entries with magnitude below
``PRUNE_TOL`` are dropped at construction time.  Time evolution uses an
exact eigendecomposition up to ``DENSE_CUTOFF`` states and a Lanczos
(Krylov) propagator with tolerance ``KRYLOV_TOL`` above it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp

PRUNE_TOL = 1e-14
HERMITIAN_TOL = 1e-12
KRYLOV_TOL = 1e-10
KRYLOV_MAX_SUBSPACE = 64
DENSE_CUTOFF = 4096


class ContractViolation(ValueError):
    """An argument breaks a documented operator contract."""


# ---------------------------------------------------------------------------
# bath description


@dataclass(frozen=True)
class ZeemanConstants:
    """Static field couplings: effective electron g-factor g_star times mu_B,
    nuclear g_n times mu_n, and the applied field B."""

    g_star: float = 1.0
    mu_B: float = 1.0
    g_n: float = 0.0
    mu_n: float = 0.0
    B: float = 0.0

    @property
    def electron_gyro(self) -> float:
        return self.g_star * self.mu_B

    @property
    def nuclear_gyro(self) -> float:
        return self.g_n * self.mu_n


def _as_coupling_matrix(b, K: int) -> np.ndarray:
    if b is None:
        return np.zeros((K, K))
    b = np.asarray(b, dtype=float)
    if b.shape != (K, K):
        raise ValueError(f"coupling matrix must be {K}x{K}, got {b.shape}")
    if not np.all(np.isfinite(b)):
        raise ValueError("coupling matrix has non-finite entries")
    if np.max(np.abs(b - b.T)) > 1e-12:
        raise ValueError("coupling matrix must be symmetric")
    if np.max(np.abs(np.diag(b))) > 1e-12:
        raise ValueError("coupling matrix must have zero diagonal")
    return b


@dataclass(frozen=True)
class SpinBathSpec:
    """Immutable description of one central-spin problem.

    Parameters
    ----------
    K : number of bath spins, at least 2.
    I : bath spin magnitude; 2I must be a positive integer.
    alpha : K real hyperfine weights with sum(alpha**2) == 1 (within 1e-12).
    A_hf : overall hyperfine energy scale.
    zeeman : static-field constants.
    b : symmetric, zero-diagonal K x K intra-bath coupling matrix.
    """

    K: int
    I: float
    alpha: np.ndarray
    A_hf: float = 1.0
    zeeman: ZeemanConstants = field(default_factory=ZeemanConstants)
    b: np.ndarray | None = None

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 2:
            raise ValueError(f"K must be an integer >= 2, got {self.K}")
        object.__setattr__(self, "K", int(self.K))
        two_I = round(2 * self.I)
        if two_I < 1 or abs(2 * self.I - two_I) > 1e-12:
            raise ValueError(f"2I must be a positive integer, got I={self.I}")
        object.__setattr__(self, "I", two_I / 2.0)
        alpha = np.asarray(self.alpha, dtype=float)
        if alpha.shape != (self.K,):
            raise ValueError(f"alpha must have length K={self.K}")
        nrm2 = float(np.sum(alpha**2))
        if abs(nrm2 - 1.0) > 1e-12:
            raise ValueError(f"alpha must be normalized: sum(alpha^2)={nrm2!r}")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "b", _as_coupling_matrix(self.b, self.K))
        if not np.isfinite(self.A_hf):
            raise ValueError("A_hf must be finite")

    @property
    def two_I(self) -> int:
        return round(2 * self.I)

    @property
    def n_max(self) -> int:
        """Largest total excitation number, 2KI + 1."""
        return self.K * self.two_I + 1

    @property
    def dim_full(self) -> int:
        return 2 * (self.two_I + 1) ** self.K

    def with_couplings(self, b) -> "SpinBathSpec":
        return SpinBathSpec(self.K, self.I, self.alpha, self.A_hf, self.zeeman, b)


# ---------------------------------------------------------------------------
# bases


class SpinBasis:
    """Ordered configuration basis, either the full product space or one
    fixed-N sector, with or without the electron slot.

    ``occ`` holds occupation digits (electron slot first when present);
    ``keys`` holds the mixed-radix encoding of each row, strictly
    increasing, so membership lookups are binary searches.
    """

    __slots__ = ("K", "two_I", "has_electron", "N", "occ", "keys", "powers")

    def __init__(self, K, two_I, has_electron, N, occ):
        self.K = K
        self.two_I = two_I
        self.has_electron = has_electron
        self.N = N
        self.occ = occ
        base = two_I + 1
        npow = np.array([base ** (K - 1 - j) for j in range(K)], dtype=np.int64)
        if has_electron:
            self.powers = np.concatenate(([base**K], npow))
        else:
            self.powers = npow
        self.keys = occ.astype(np.int64) @ self.powers

    @property
    def dim(self) -> int:
        return self.occ.shape[0]

    @property
    def n_sites(self) -> int:
        return self.occ.shape[1]

    def lookup(self, keys: np.ndarray) -> np.ndarray:
        """Indices of encoded configurations; every key must be present."""
        idx = np.searchsorted(self.keys, keys)
        if np.any(idx >= self.dim) or np.any(self.keys[idx] != keys):
            raise KeyError("configuration not in basis")
        return idx

    def two_m(self) -> np.ndarray:
        """Twice the magnetic quantum numbers, same layout as ``occ``."""
        caps = np.full(self.n_sites, self.two_I, dtype=np.int64)
        if self.has_electron:
            caps[0] = 1
        return 2 * self.occ.astype(np.int64) - caps

    def electron_up(self) -> np.ndarray:
        if not self.has_electron:
            raise ValueError("basis has no electron slot")
        return self.occ[:, 0] == 1

    def nuclear_two_m(self) -> np.ndarray:
        off = 1 if self.has_electron else 0
        return 2 * self.occ[:, off:].astype(np.int64) - self.two_I

    def same_space(self, other) -> bool:
        if self is other:
            return True
        return (
            isinstance(other, SpinBasis)
            and self.K == other.K
            and self.two_I == other.two_I
            and self.has_electron == other.has_electron
            and self.N == other.N
        )

    def __repr__(self):
        tag = "full" if self.N is None else f"N={self.N}"
        el = "e+" if self.has_electron else ""
        return f"SpinBasis({el}K={self.K}, 2I={self.two_I}, {tag}, dim={self.dim})"


class QubitSpace:
    """Two-dimensional codomain of a dressing map."""

    dim = 2

    def same_space(self, other) -> bool:
        return isinstance(other, QubitSpace)

    def __repr__(self):
        return "QubitSpace()"


QUBIT = QubitSpace()


class ProductBasis:
    """Kronecker product of two bases (left factor most significant)."""

    def __init__(self, left, right):
        self.left = left
        self.right = right

    @property
    def dim(self) -> int:
        return self.left.dim * self.right.dim

    def same_space(self, other) -> bool:
        return (
            isinstance(other, ProductBasis)
            and self.left.same_space(other.left)
            and self.right.same_space(other.right)
        )

    def __repr__(self):
        return f"ProductBasis({self.left!r}, {self.right!r})"


def _nuclear_occupations(K: int, cap: int, total: int) -> list[list[int]]:
    # ascending lexicographic occupation vectors with fixed sum
    out: list[list[int]] = []
    vec = [0] * K

    def rec(pos: int, rem: int):
        if pos == K - 1:
            if 0 <= rem <= cap:
                vec[pos] = rem
                out.append(vec.copy())
            return
        lo = max(0, rem - cap * (K - pos - 1))
        hi = min(cap, rem)
        for c in range(lo, hi + 1):
            vec[pos] = c
            rec(pos + 1, rem - c)

    rec(0, total)
    return out


@lru_cache(maxsize=None)
def _make_basis(K: int, two_I: int, has_electron: bool, N) -> SpinBasis:
    cap = two_I
    rows: list[list[int]] = []
    if N is None:
        # full space: all digit strings, ascending
        nuc = np.indices([cap + 1] * K).reshape(K, -1).T
        nuc = nuc[np.lexsort(nuc.T[::-1])]
        if has_electron:
            rows_arr = np.vstack(
                [
                    np.hstack([np.zeros((len(nuc), 1), dtype=np.int64), nuc]),
                    np.hstack([np.ones((len(nuc), 1), dtype=np.int64), nuc]),
                ]
            )
        else:
            rows_arr = nuc
        occ = rows_arr.astype(np.int16)
        return SpinBasis(K, two_I, has_electron, None, occ)
    if has_electron:
        for n0 in (0, 1):
            for v in _nuclear_occupations(K, cap, N - n0):
                rows.append([n0] + v)
    else:
        rows = _nuclear_occupations(K, cap, N)
    occ = np.array(rows, dtype=np.int16).reshape(len(rows), K + (1 if has_electron else 0))
    return SpinBasis(K, two_I, has_electron, N, occ)


def full_basis(spec: SpinBathSpec) -> SpinBasis:
    """Electron plus bath product basis, dimension 2(2I+1)^K."""
    return _make_basis(spec.K, spec.two_I, True, None)


def enumerate_sector(spec: SpinBathSpec, N: int) -> SpinBasis:
    """Basis of the fixed-excitation sector N in {0, ..., 2KI+1}.

    Configurations are ordered ascending lexicographically in
    (m_s, m_1, ..., m_K), electron slot first.
    """
    if int(N) != N or not (0 <= N <= spec.n_max):
        raise ValueError(f"sector N={N} out of range [0, {spec.n_max}]")
    return _make_basis(spec.K, spec.two_I, True, int(N))


def nuclear_basis(spec: SpinBathSpec) -> SpinBasis:
    return _make_basis(spec.K, spec.two_I, False, None)


def nuclear_sector(spec: SpinBathSpec, n: int) -> SpinBasis:
    if int(n) != n or not (0 <= n <= spec.K * spec.two_I):
        raise ValueError(f"nuclear sector n={n} out of range [0, {spec.K * spec.two_I}]")
    return _make_basis(spec.K, spec.two_I, False, int(n))


def pair_basis(K: int) -> SpinBasis:
    """Full nuclear space for K spin-1/2 sites (pairing analysis)."""
    return _make_basis(K, 1, False, None)


def pair_sector(K: int, n: int) -> SpinBasis:
    if int(n) != n or not (0 <= n <= K):
        raise ValueError(f"pair sector n={n} out of range [0, {K}]")
    return _make_basis(K, 1, False, int(n))


def sector_dimension(K: int, two_I: int, N: int, has_electron: bool = True) -> int:
    """Exact count of configurations with total occupation N (integer DP)."""
    poly = [1]
    factors = [1] * (1 if has_electron else 0) + [two_I] * K
    for cap in factors:
        new = [0] * (len(poly) + cap)
        for d, c in enumerate(poly):
            for j in range(cap + 1):
                new[d + j] += c
        poly = new
    return poly[N] if 0 <= N < len(poly) else 0


# ---------------------------------------------------------------------------
# states


@dataclass
class KetState:
    """Complex amplitude vector over an explicit basis."""

    basis: object
    amps: np.ndarray

    def __post_init__(self):
        self.amps = np.asarray(self.amps, dtype=complex)
        if self.amps.shape != (self.basis.dim,):
            raise ValueError(
                f"amplitude vector has length {self.amps.shape}, basis dim {self.basis.dim}"
            )

    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))

    def normalized(self) -> "KetState":
        n = self.norm()
        if n == 0:
            raise ValueError("cannot normalize the zero vector")
        return KetState(self.basis, self.amps / n)

    def dot(self, other: "KetState") -> complex:
        """<self|other>."""
        if not self.basis.same_space(other.basis):
            raise ContractViolation("states live on different bases")
        return complex(np.vdot(self.amps, other.amps))

    def __add__(self, other: "KetState") -> "KetState":
        if not self.basis.same_space(other.basis):
            raise ContractViolation("states live on different bases")
        return KetState(self.basis, self.amps + other.amps)

    def __sub__(self, other: "KetState") -> "KetState":
        if not self.basis.same_space(other.basis):
            raise ContractViolation("states live on different bases")
        return KetState(self.basis, self.amps - other.amps)

    def __mul__(self, c) -> "KetState":
        return KetState(self.basis, self.amps * c)

    __rmul__ = __mul__


def basis_state(basis, index: int) -> KetState:
    amps = np.zeros(basis.dim, dtype=complex)
    amps[index] = 1.0
    return KetState(basis, amps)


def random_ket(basis, rng: np.random.Generator) -> KetState:
    z = rng.normal(size=basis.dim) + 1j * rng.normal(size=basis.dim)
    return KetState(basis, z).normalized()


def tensor_ket(a: KetState, b: KetState) -> KetState:
    return KetState(ProductBasis(a.basis, b.basis), np.kron(a.amps, b.amps))


# ---------------------------------------------------------------------------
# linear operators


class LinearOp:
    """Sparse linear map between explicit bases.

    ``hermitian=True`` is validated at construction (square shape, equal
    spaces, max deviation below ``HERMITIAN_TOL``).  Instances are
    treated as immutable; the lazy eigendecomposition used by
    :func:`propagate` is cached on the object.
    """

    __slots__ = ("matrix", "domain", "codomain", "hermitian", "_spectral")

    def __init__(self, matrix, domain, codomain=None, hermitian=False):
        mat = sp.csr_matrix(matrix, dtype=complex)
        mat.eliminate_zeros()
        if mat.nnz:
            small = np.abs(mat.data) < PRUNE_TOL
            if small.any():
                mat.data[small] = 0.0
                mat.eliminate_zeros()
        self.matrix = mat
        self.domain = domain
        self.codomain = domain if codomain is None else codomain
        if mat.shape != (self.codomain.dim, self.domain.dim):
            raise ValueError(
                f"matrix shape {mat.shape} does not match spaces "
                f"({self.codomain.dim}, {self.domain.dim})"
            )
        if hermitian:
            if not self.domain.same_space(self.codomain):
                raise ContractViolation("hermitian operator needs equal domain and codomain")
            dev = (mat - mat.getH())
            dev = np.max(np.abs(dev.data)) if dev.nnz else 0.0
            if dev > HERMITIAN_TOL:
                raise ContractViolation(f"operator not hermitian: max deviation {dev:.3e}")
        self.hermitian = hermitian
        self._spectral = None

    # -- algebra ---------------------------------------------------------
    def __matmul__(self, other):
        if isinstance(other, KetState):
            if not self.domain.same_space(other.basis):
                raise ContractViolation("operator domain does not match state basis")
            return KetState(self.codomain, self.matrix @ other.amps)
        if isinstance(other, LinearOp):
            if not self.domain.same_space(other.codomain):
                raise ContractViolation("operator domains are not composable")
            return LinearOp(self.matrix @ other.matrix, other.domain, self.codomain)
        return NotImplemented

    def __add__(self, other: "LinearOp") -> "LinearOp":
        self._check_like(other)
        return LinearOp(
            self.matrix + other.matrix,
            self.domain,
            self.codomain,
            hermitian=self.hermitian and other.hermitian,
        )

    def __sub__(self, other: "LinearOp") -> "LinearOp":
        self._check_like(other)
        return LinearOp(
            self.matrix - other.matrix,
            self.domain,
            self.codomain,
            hermitian=self.hermitian and other.hermitian,
        )

    def __mul__(self, c) -> "LinearOp":
        c = complex(c)
        herm = self.hermitian and abs(c.imag) == 0.0
        return LinearOp(self.matrix * c, self.domain, self.codomain, hermitian=herm)

    __rmul__ = __mul__

    def __neg__(self) -> "LinearOp":
        return self * (-1.0)

    def _check_like(self, other):
        if not isinstance(other, LinearOp):
            raise TypeError("expected a LinearOp")
        if not (self.domain.same_space(other.domain) and self.codomain.same_space(other.codomain)):
            raise ContractViolation("operators live on different spaces")

    def dagger(self) -> "LinearOp":
        return LinearOp(self.matrix.getH(), self.codomain, self.domain, hermitian=self.hermitian)

    # -- queries ---------------------------------------------------------
    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.matrix.data))) if self.matrix.nnz else 0.0

    def norm2(self) -> float:
        if min(self.matrix.shape) == 0:
            return 0.0
        if max(self.matrix.shape) <= DENSE_CUTOFF:
            return float(np.linalg.norm(self.dense(), 2))
        return float(sp.linalg.svds(self.matrix, k=1, return_singular_vectors=False)[0])

    def expectation(self, psi: KetState) -> complex:
        val = psi.dot(self @ psi)
        return val.real if self.hermitian else val

    def is_hermitian(self, tol: float = HERMITIAN_TOL) -> bool:
        if self.matrix.shape[0] != self.matrix.shape[1]:
            return False
        dev = self.matrix - self.matrix.getH()
        return (np.max(np.abs(dev.data)) if dev.nnz else 0.0) <= tol

    def asserted_hermitian(self) -> "LinearOp":
        """Same operator with the hermitian contract turned on."""
        return LinearOp(self.matrix, self.domain, self.codomain, hermitian=True)


def identity_op(basis) -> LinearOp:
    return LinearOp(sp.identity(basis.dim, dtype=complex, format="csr"), basis, hermitian=True)


def diagonal_op(basis, diag: np.ndarray, hermitian: bool = True) -> LinearOp:
    return LinearOp(sp.diags(np.asarray(diag, dtype=complex)), basis, hermitian=hermitian)


def commutator(a: LinearOp, b: LinearOp) -> LinearOp:
    return a @ b - b @ a


def projector(kets: Sequence[KetState]) -> LinearOp:
    """Orthogonal projector onto the span of (assumed orthonormal) kets."""
    if not kets:
        raise ValueError("need at least one state")
    basis = kets[0].basis
    mat = np.zeros((basis.dim, basis.dim), dtype=complex)
    for k in kets:
        if not k.basis.same_space(basis):
            raise ContractViolation("projector states live on different bases")
        mat += np.outer(k.amps, k.amps.conj())
    return LinearOp(sp.csr_matrix(mat), basis, hermitian=True)


def tensor_op(a: LinearOp, b: LinearOp) -> LinearOp:
    dom = ProductBasis(a.domain, b.domain)
    cod = ProductBasis(a.codomain, b.codomain)
    return LinearOp(sp.kron(a.matrix, b.matrix, format="csr"), dom, cod,
                    hermitian=a.hermitian and b.hermitian)


def qubit_op(mat, hermitian: bool = False) -> LinearOp:
    return LinearOp(sp.csr_matrix(np.asarray(mat, dtype=complex)), QUBIT, hermitian=hermitian)


# ---------------------------------------------------------------------------
# elementary spin operators


def _site_column(basis: SpinBasis, site: int) -> tuple[int, int]:
    """Map site index (0 = electron, 1..K = bath) to a column and its 2I."""
    if basis.has_electron:
        if not (0 <= site <= basis.K):
            raise ValueError(f"site must be in 0..{basis.K}, got {site}")
        if site == 0:
            return 0, 1
        return site, basis.two_I
    if not (1 <= site <= basis.K):
        raise ValueError(f"site must be in 1..{basis.K} on a nuclear basis, got {site}")
    return site - 1, basis.two_I


def _shift_codomain(basis: SpinBasis, delta: int) -> SpinBasis:
    if basis.N is None:
        return basis
    target = basis.N + delta
    n_top = basis.K * basis.two_I + (1 if basis.has_electron else 0)
    if not (0 <= target <= n_top):
        raise ValueError(f"no target sector N={target} (range 0..{n_top})")
    return _make_basis(basis.K, basis.two_I, basis.has_electron, target)


def spin_op(basis: SpinBasis, site: int, component: str) -> LinearOp:
    """Single-site spin operator; site 0 is the electron.

    ``component`` is one of ``"z"``, ``"+"``, ``"-"``.  On a sector
    basis the ladder components map into the adjacent sector, so the
    returned operator is rectangular.
    """
    col, cap = _site_column(basis, site)
    occ = basis.occ[:, col].astype(np.int64)
    if component == "z":
        return diagonal_op(basis, (2 * occ - cap) / 2.0)
    if component not in ("+", "-"):
        raise ValueError(f"component must be one of z, +, -; got {component!r}")
    up = component == "+"
    delta = 1 if up else -1
    codomain = _shift_codomain(basis, delta)
    valid = occ < cap if up else occ > 0
    src = np.nonzero(valid)[0]
    u = 2 * occ[src] - cap  # 2m
    if up:
        coeff = np.sqrt((cap * (cap + 2) - u * (u + 2)) / 4.0)
    else:
        coeff = np.sqrt((cap * (cap + 2) - u * (u - 2)) / 4.0)
    new_keys = basis.keys[src] + delta * basis.powers[col]
    dst = codomain.lookup(new_keys)
    mat = sp.coo_matrix(
        (coeff.astype(complex), (dst, src)), shape=(codomain.dim, basis.dim)
    ).tocsr()
    return LinearOp(mat, basis, codomain)


def collective_op(basis: SpinBasis, weights: np.ndarray, component: str) -> LinearOp:
    """Weighted bath operator sum_i w_i I^i_component / sqrt(2I)."""
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (basis.K,):
        raise ValueError(f"weights must have length K={basis.K}")
    if not np.all(np.isfinite(weights)):
        raise ValueError("weights must be finite")
    scale = 1.0 / math.sqrt(basis.two_I)
    if component == "z":
        two_m = basis.nuclear_two_m()
        diag = scale * (two_m @ weights) / 2.0
        return diagonal_op(basis, diag)
    if component not in ("+", "-"):
        raise ValueError(f"component must be one of z, +, -; got {component!r}")
    up = component == "+"
    delta = 1 if up else -1
    codomain = _shift_codomain(basis, delta)
    off = 1 if basis.has_electron else 0
    cap = basis.two_I
    rows, cols, data = [], [], []
    for i in range(basis.K):
        w = weights[i]
        if w == 0.0:
            continue
        col = off + i
        occ = basis.occ[:, col].astype(np.int64)
        valid = occ < cap if up else occ > 0
        src = np.nonzero(valid)[0]
        if len(src) == 0:
            continue
        u = 2 * occ[src] - cap
        if up:
            coeff = np.sqrt((cap * (cap + 2) - u * (u + 2)) / 4.0)
        else:
            coeff = np.sqrt((cap * (cap + 2) - u * (u - 2)) / 4.0)
        dst = codomain.lookup(basis.keys[src] + delta * basis.powers[col])
        rows.append(dst)
        cols.append(src)
        data.append(w * scale * coeff)
    if rows:
        mat = sp.coo_matrix(
            (np.concatenate(data).astype(complex), (np.concatenate(rows), np.concatenate(cols))),
            shape=(codomain.dim, basis.dim),
        ).tocsr()
    else:
        mat = sp.csr_matrix((codomain.dim, basis.dim), dtype=complex)
    return LinearOp(mat, basis, codomain)


def pair_number_ops(basis: SpinBasis) -> tuple[LinearOp, LinearOp, LinearOp]:
    """Diagonal bookkeeping operators (n_bath, N_total, J_z).

    n_bath counts nuclear excitations sum_i (m_i + I); N_total adds the
    electron occupation m_s + 1/2; J_z = N_total - KI - 1/2 is the total
    spin projection.
    """
    if not basis.has_electron:
        raise ValueError("pair_number_ops needs an electron slot; see nuclear_pair_number")
    occ = basis.occ.astype(np.int64)
    n_bath = occ[:, 1:].sum(axis=1).astype(float)
    n_tot = n_bath + occ[:, 0]
    jz = n_tot - basis.K * basis.two_I / 2.0 - 0.5
    return (
        diagonal_op(basis, n_bath),
        diagonal_op(basis, n_tot),
        diagonal_op(basis, jz),
    )


def nuclear_pair_number(basis: SpinBasis, site: int | None = None) -> LinearOp:
    """n_i = m_i + I for one site, or the bath total when site is None."""
    off = 1 if basis.has_electron else 0
    occ = basis.occ.astype(np.int64)
    if site is None:
        return diagonal_op(basis, occ[:, off:].sum(axis=1).astype(float))
    col, _ = _site_column(basis, site)
    if basis.has_electron and site == 0:
        raise ValueError("site 0 is the electron; pass a bath site")
    return diagonal_op(basis, occ[:, col].astype(float))


def sector_embedding(spec: SpinBathSpec, N: int) -> LinearOp:
    """Isometry from the N sector into the full space (E^dag E = 1)."""
    sec = enumerate_sector(spec, N)
    full = full_basis(spec)
    dst = full.lookup(sec.keys)
    mat = sp.coo_matrix(
        (np.ones(sec.dim), (dst, np.arange(sec.dim))), shape=(full.dim, sec.dim)
    ).tocsr()
    return LinearOp(mat, sec, full)


# ---------------------------------------------------------------------------
# time evolution


def _spectral_data(H: LinearOp):
    if H._spectral is None:
        w, V = np.linalg.eigh(H.dense())
        H._spectral = (w, V)
    return H._spectral


def _lanczos_attempt(mat, v: np.ndarray, t: float, tol: float, m_max: int):
    """One Krylov approximation of exp(-i t H) v.  Returns (ok, result)."""
    nrm = np.linalg.norm(v)
    V = np.empty((m_max, v.shape[0]), dtype=complex)
    V[0] = v / nrm
    alphas: list[float] = []
    betas: list[float] = []
    prev_y = None
    w = None
    for m in range(1, m_max + 1):
        u = mat @ V[m - 1]
        a = float(np.real(np.vdot(V[m - 1], u)))
        u = u - a * V[m - 1]
        if m > 1:
            u = u - betas[-1] * V[m - 2]
        # full reorthogonalization keeps the small subspace exactly orthonormal
        for _ in range(2):
            proj = V[:m].conj() @ u
            u = u - V[:m].T @ proj
        alphas.append(a)
        beta = float(np.linalg.norm(u))
        ew, ev = scipy.linalg.eigh_tridiagonal(alphas, betas)
        y = ev @ (np.exp(-1j * t * ew) * ev[0, :].conj())
        happy = beta < 1e-13 * max(1.0, abs(a))
        if prev_y is not None:
            diff = np.linalg.norm(y[:-1] - prev_y) + abs(y[-1])
            if diff * nrm < tol or happy:
                w = (V[:m].T @ y) * nrm
                return True, w
        if happy:
            w = (V[:m].T @ y) * nrm
            return True, w
        if m == m_max:
            return False, None
        betas.append(beta)
        V[m] = u / beta
        prev_y = y
    return False, None


def _krylov_expm(mat, v: np.ndarray, t: float, tol: float, m_max: int) -> np.ndarray:
    if t == 0.0 or np.linalg.norm(v) == 0.0:
        return v.astype(complex).copy()
    w = v.astype(complex)
    remaining = float(t)
    dt = remaining
    total = abs(t)
    while remaining != 0.0:
        if abs(dt) > abs(remaining):
            dt = remaining
        chunk_tol = tol * abs(dt) / total
        ok, cand = _lanczos_attempt(mat, w, dt, chunk_tol, m_max)
        if ok:
            w = cand
            remaining -= dt
            dt *= 2.0
        else:
            dt /= 2.0
            if abs(dt) < total * 1e-12:
                raise RuntimeError("Krylov propagation failed to converge")
    return w


def propagate(
    H: LinearOp,
    psi: KetState,
    t: float,
    tol: float = KRYLOV_TOL,
    method: str | None = None,
    max_krylov: int = KRYLOV_MAX_SUBSPACE,
    dense_cutoff: int = DENSE_CUTOFF,
) -> KetState:
    """exp(-i H t) psi for a hermitian-flagged H.

    Dimensions up to ``dense_cutoff`` use an exact eigendecomposition
    (cached on H); larger problems use an adaptive Lanczos propagator
    with tolerance ``tol`` and Krylov subspaces of at most
    ``max_krylov`` vectors, restarting with a halved step on failure.
    """
    if not H.hermitian:
        raise ContractViolation("propagation requires a hermitian-flagged operator")
    if not H.domain.same_space(psi.basis):
        raise ContractViolation("state basis does not match operator domain")
    if method is None:
        method = "eig" if H.domain.dim <= dense_cutoff else "krylov"
    if method == "eig":
        w, V = _spectral_data(H)
        amps = V @ (np.exp(-1j * w * t) * (V.conj().T @ psi.amps))
    elif method == "krylov":
        amps = _krylov_expm(H.matrix, psi.amps, float(t), tol, max_krylov)
    else:
        raise ValueError(f"unknown method {method!r}")
    return KetState(psi.basis, amps)


def evolution_matrix(H: LinearOp, t: float) -> np.ndarray:
    """Dense exp(-i H t); intended for small sector operators."""
    if not H.hermitian:
        raise ContractViolation("evolution requires a hermitian-flagged operator")
    w, V = _spectral_data(H)
    return (V * np.exp(-1j * w * t)) @ V.conj().T


# ---------------------------------------------------------------------------
# sampling helpers (deterministic given an explicit Generator)


def uniform_alpha(K: int) -> np.ndarray:
    return np.full(K, 1.0 / math.sqrt(K))


def gaussian_alpha(K: int, width: float) -> np.ndarray:
    """Gaussian envelope alpha_i ~ exp(-x_i^2/2) with x_i spanning +-1/width."""
    if width <= 0:
        raise ValueError("width must be positive")
    x = np.linspace(-1.0, 1.0, K) / width
    a = np.exp(-0.5 * x**2)
    return a / np.linalg.norm(a)

def perturbed_uniform_alpha(K: int, eps: float) -> np.ndarray:
    """Uniform profile with a fixed-shape relative ripple of size eps."""
    a = 1.0 + eps * np.cos(2.0 * np.pi * np.arange(K) / K)
    return a / np.linalg.norm(a)


def random_alpha(K: int, rng: np.random.Generator) -> np.ndarray:
    a = np.abs(rng.normal(1.0, 0.35, size=K)) + 0.05
    return a / np.linalg.norm(a)


def random_couplings(K: int, rng: np.random.Generator, scale: float) -> np.ndarray:
    b = rng.normal(0.0, scale, size=(K, K))
    b = (b + b.T) / 2.0
    np.fill_diagonal(b, 0.0)
    return b


def random_spec(
    rng: np.random.Generator,
    K: int,
    I: float = 0.5,
    A_hf: float = 1.0,
    b_scale: float = 0.0,
    zeeman: ZeemanConstants | None = None,
) -> SpinBathSpec:
    b = random_couplings(K, rng, b_scale) if b_scale else None
    return SpinBathSpec(
        K=K,
        I=I,
        alpha=random_alpha(K, rng),
        A_hf=A_hf,
        zeeman=zeeman if zeeman is not None else ZeemanConstants(),
        b=b,
    )

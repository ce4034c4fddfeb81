"""Dressed two-level frames and the pulse algebra on top of them.

A frame picks a bath eigenstate |m> of h = A_- A_+ inside one nuclear
excitation sector and pairs the product states

    |0> = |up, m>        |1> = |down, (A_+ m) / sqrt(h_m)>

which the flip-flop V_f couples as an exact two-level system:
V_f |0> = sqrt(h_m)/2 |1> and back.  For the fully polarized frame
(N = 1) the remaining sector states are organised into explicit leak
modes built from an orthogonal completion of the weight profile alpha;
for N > 1 the complement is constructed numerically.

Projected onto the frame, the dominant drive

    H_drive = F S_z + A sqrt(2I) V_f

is (F Z + A sqrt(2I h_m) X)/2, so a constant-F interval of length t is
the rotation

    U(phi, theta) = exp(-i phi (cos(theta) Z + sin(theta) X)),
    phi = t sqrt(F^2 + 2I A^2),  theta = atan2(sqrt(2I) A, F),

and ``compile_gate`` factors an arbitrary single-qubit target into a
short train of such segments using only two primitives: bare X
rotations at F = 0 and an axis-tilted segment that yields a rotation
about i Z X.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from io import StringIO

import numpy as np

from .core import (
    QUBIT,
    ContractViolation,
    KetState,
    LinearOp,
    SpinBasis,
    SpinBathSpec,
    collective_op,
    enumerate_sector,
    nuclear_sector,
    projector,
    spin_op,
    tensor_ket,
    tensor_op,
)

PAULI_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
PAULI_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
PAULI_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)

DEGENERACY_TOL = 1e-9


@dataclass
class DressedFrame:
    """Two dressed levels inside one excitation sector.

    ``m_state`` is the chosen bath eigenstate (nuclear sector N-1),
    ``h_m`` its A_-A_+ eigenvalue, ``ket0``/``ket1`` the dressed pair in
    the electron+bath sector basis, ``leak_modes`` an orthonormal basis
    of the rest of the sector, and ``mode_matrix`` the orthogonal
    completion of alpha (polarized frame only, row 0 = alpha).
    """

    spec: SpinBathSpec
    N: int
    basis: SpinBasis
    m_state: KetState
    h_m: float
    ket0: KetState
    ket1: KetState
    leak_modes: list[KetState]
    mode_matrix: np.ndarray | None

    def projector(self) -> LinearOp:
        return projector([self.ket0, self.ket1])


def mode_completion(alpha: np.ndarray) -> np.ndarray:
    """Real orthogonal K x K matrix whose first row is alpha.

    Built from a single Householder reflection, so the completion is
    deterministic in alpha.
    """
    alpha = np.asarray(alpha, dtype=float)
    K = alpha.shape[0]
    e0 = np.zeros(K)
    e0[0] = 1.0
    minus = alpha - e0
    plus = alpha + e0
    if np.linalg.norm(minus) >= np.linalg.norm(plus):
        v, sign = minus, 1.0
    else:
        v, sign = plus, -1.0
    H = np.eye(K) - 2.0 * np.outer(v, v) / (v @ v)
    if sign < 0:
        H[0] *= -1.0
    # after the sign fix row 0 is alpha exactly (up to roundoff)
    H[0] = alpha
    return H


def _embed(nuc_ket: KetState, electron_occ: int, sector: SpinBasis) -> KetState:
    nb = nuc_ket.basis
    keys = electron_occ * sector.powers[0] + nb.keys
    amps = np.zeros(sector.dim, dtype=complex)
    amps[sector.lookup(keys)] = nuc_ket.amps
    return KetState(sector, amps)


def _gauge_fix(vec: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(vec) > 1e-9)
    a = vec[idx]
    if a == 0:
        return vec
    return vec * (abs(a) / a)


def _deterministic_eigenbasis(hmat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenpairs of a real symmetric matrix with degenerate subspaces
    re-spanned deterministically (projected canonical vectors, then
    lexicographic amplitude ordering) and a fixed sign gauge."""
    w, V = np.linalg.eigh(hmat)
    scale = max(1.0, float(np.max(np.abs(w))))
    cols = []
    i = 0
    n = len(w)
    while i < n:
        j = i
        while j + 1 < n and abs(w[j + 1] - w[i]) <= DEGENERACY_TOL * scale:
            j += 1
        block = V[:, i : j + 1]
        if j == i:
            cols.append(_gauge_fix(block[:, 0]))
        else:
            P = block @ block.T.conj()
            fresh: list[np.ndarray] = []
            for k in range(n):
                v = P[:, k].copy()
                for u in fresh:
                    v -= u * (u.conj() @ v)
                nv = np.linalg.norm(v)
                if nv > 1e-6:
                    fresh.append(v / nv)
                if len(fresh) == block.shape[1]:
                    break
            fresh = [_gauge_fix(v) for v in fresh]
            fresh.sort(key=lambda v: tuple(np.round(v.real, 12)))
            cols.extend(fresh)
        i = j + 1
    return w, np.array(cols).T


def _pick_state(w: np.ndarray, selector) -> int:
    if selector == "max-h":
        return int(np.argmax(w))
    if selector == "min-h":
        return int(np.argmin(w))
    raise ValueError(f"unknown selector {selector!r}")


def sector_frame(spec: SpinBathSpec, N: int, selector="max-h") -> DressedFrame:
    """Dressed frame in sector N for 0 < N < 2KI + 1.

    ``selector`` picks the bath eigenstate: ``"max-h"`` (default),
    ``"min-h"``, or ``("target-iz", v)`` which checks that the bath
    projection I_z = (N - 1) - KI of the electron-up member equals v
    (the projection is sharp within a sector, so targeting a value
    means choosing the sector) and then takes the largest h.
    """
    if not (0 < N < spec.n_max):
        raise ValueError(f"sector N={N} admits no dressed pair (need 0 < N < {spec.n_max})")
    if isinstance(selector, tuple) and len(selector) == 2 and selector[0] == "target-iz":
        iz = (N - 1) - spec.K * spec.I
        if abs(iz - selector[1]) > 1e-9:
            raise ValueError(
                f"sector N={N} has bath I_z={iz}, not the requested {selector[1]}; "
                f"use N = v + KI + 1"
            )
        selector = "max-h"
    n = N - 1
    nuc_n = nuclear_sector(spec, n)
    a_plus = collective_op(nuc_n, spec.alpha, "+")
    hmat = (a_plus.dagger() @ a_plus).dense().real
    w, V = _deterministic_eigenbasis(hmat)
    k = _pick_state(w, selector)
    h_m = float(w[k])
    if h_m < 1e-12:
        raise ContractViolation(
            f"selected bath state is annihilated by the raising operator (h_m={h_m:.3e})"
        )
    m_state = KetState(nuc_n, V[:, k].astype(complex))
    phi = (a_plus @ m_state) * (1.0 / math.sqrt(h_m))
    sector = enumerate_sector(spec, N)
    ket0 = _embed(m_state, 1, sector)
    ket1 = _embed(phi, 0, sector)
    if N == 1:
        modes = mode_completion(spec.alpha)
        leak = []
        for krow in range(1, spec.K):
            raised = collective_op(nuc_n, modes[krow], "+") @ m_state
            leak.append(_embed(raised, 0, sector))
        return DressedFrame(spec, N, sector, m_state, h_m, ket0, ket1, leak, modes)
    leak = _orthogonal_complement([ket0, ket1], sector)
    return DressedFrame(spec, N, sector, m_state, h_m, ket0, ket1, leak, None)


def polarized_frame(spec: SpinBathSpec) -> DressedFrame:
    """The N = 1 frame over the fully polarized bath (h_m = 1)."""
    return sector_frame(spec, 1)


def _orthogonal_complement(kets: list[KetState], basis: SpinBasis) -> list[KetState]:
    have = [k.amps for k in kets]
    out: list[np.ndarray] = []
    want = basis.dim - len(kets)
    for j in range(basis.dim):
        v = np.zeros(basis.dim, dtype=complex)
        v[j] = 1.0
        for _ in range(2):
            for u in have:
                v -= u * (np.vdot(u, v))
            for u in out:
                v -= u * (np.vdot(u, v))
        nv = np.linalg.norm(v)
        if nv > 1e-6:
            out.append(_gauge_fix(v / nv))
        if len(out) == want:
            break
    if len(out) != want:
        raise RuntimeError("failed to complete the sector complement")
    return [KetState(basis, v) for v in out]


def dressing_unitary(frame: DressedFrame) -> LinearOp:
    """Partial isometry W = |up><0| + |down><1| onto the physical qubit."""
    d = (frame.ket0 - frame.ket1).norm()
    if d < 1e-6:
        raise ContractViolation("degenerate frame: ket0 and ket1 coincide")
    mat = np.vstack([frame.ket0.amps.conj(), frame.ket1.amps.conj()])
    return LinearOp(mat, frame.basis, QUBIT)


def matrix_rep(op: LinearOp, frame: DressedFrame) -> np.ndarray:
    """2 x 2 block of an operator in the frame {ket0, ket1}."""
    if not op.domain.same_space(frame.basis) or not op.codomain.same_space(frame.basis):
        raise ContractViolation("operator does not act on the frame sector")
    cols = [op @ frame.ket0, op @ frame.ket1]
    return np.array(
        [[frame.ket0.dot(c) for c in cols], [frame.ket1.dot(c) for c in cols]]
    )


# ---------------------------------------------------------------------------
# pulse algebra


@dataclass(frozen=True)
class PulseSegment:
    """Constant-detuning drive interval.

    ``drive`` = sqrt(2I) A is the flip-flop Rabi scale; the realized
    rotation is U(phi, theta) with phi = duration * sqrt(F^2 + drive^2)
    and theta = atan2(drive, F) in (0, pi) whenever drive > 0.
    """

    F: float
    duration: float
    drive: float

    def __post_init__(self):
        if self.duration < 0:
            raise ValueError("duration must be nonnegative")
        if self.drive < 0:
            raise ValueError("drive must be nonnegative")

    @property
    def phi(self) -> float:
        return self.duration * math.hypot(self.F, self.drive)

    @property
    def theta(self) -> float:
        return math.atan2(self.drive, self.F)

    @classmethod
    def from_angles(cls, phi: float, theta: float, drive: float) -> "PulseSegment":
        if drive <= 0:
            raise ValueError("need a positive drive")
        if not (0 < theta < math.pi):
            raise ValueError("theta must lie in (0, pi)")
        F = drive * math.cos(theta) / math.sin(theta)
        omega = math.hypot(F, drive)
        return cls(F=F, duration=phi / omega, drive=drive)


def pulse_unitary(seg: PulseSegment) -> np.ndarray:
    """exp(-i phi (cos(theta) Z + sin(theta) X)) in closed form."""
    phi, theta = seg.phi, seg.theta
    axis = math.cos(theta) * PAULI_Z + math.sin(theta) * PAULI_X
    return math.cos(phi) * np.eye(2, dtype=complex) - 1j * math.sin(phi) * axis


def compose_segments(segs: list[PulseSegment]) -> np.ndarray:
    """Total unitary of a time-ordered segment list (first entry acts first)."""
    U = np.eye(2, dtype=complex)
    for s in segs:
        U = pulse_unitary(s) @ U
    return U


def gate_fidelity(U: np.ndarray, V: np.ndarray) -> float:
    """|tr(U^dag V)| / dim, phase-insensitive."""
    d = U.shape[0]
    return float(abs(np.trace(U.conj().T @ V)) / d)


def _su2_to_so3(U: np.ndarray) -> np.ndarray:
    sig = (PAULI_X, PAULI_Y, PAULI_Z)
    R = np.empty((3, 3))
    for j in range(3):
        img = U @ sig[j] @ U.conj().T
        for i in range(3):
            R[i, j] = 0.5 * np.trace(sig[i] @ img).real
    return R


def _rotx(t: float) -> np.ndarray:
    c, s = math.cos(t), math.sin(t)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])


def _roty(t: float) -> np.ndarray:
    c, s = math.cos(t), math.sin(t)
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])


def _euler_xyx(R: np.ndarray) -> tuple[float, float, float]:
    """Angles with R = Rx(a) Ry(b) Rx(c), b in [0, pi]."""
    b = math.acos(max(-1.0, min(1.0, R[0, 0])))
    if math.sin(b) > 1e-9:
        a = math.atan2(R[1, 0], -R[2, 0])
        c = math.atan2(R[0, 1], R[0, 2])
    else:
        c = 0.0
        A = R @ _roty(b).T
        a = math.atan2(A[2, 1], A[1, 1])
    return a, b, c


def compile_gate(
    target: np.ndarray, spec: SpinBathSpec, tol: float = 1e-10
) -> list[PulseSegment]:
    """Time-ordered pulse train realizing ``target`` up to a global phase.

    The target is factored as Rx(a) Ry(b) Rx(c).  X rotations are single
    F = 0 segments; the Y rotation is realized by two identical circuits
    [tilted segment, then X segment], each an exact rotation about
    i Z X.  At most six segments are emitted and |F| never exceeds the
    drive scale.
    """
    drive = math.sqrt(spec.two_I) * spec.A_hf
    if drive <= 0:
        raise ValueError("gate compilation needs a positive hyperfine drive")
    U = np.asarray(target, dtype=complex)
    if U.shape != (2, 2):
        raise ValueError("target must be a 2x2 matrix")
    dev = np.max(np.abs(U.conj().T @ U - np.eye(2)))
    if dev > tol:
        raise ValueError(f"target is not unitary (deviation {dev:.3e})")
    U2 = U / np.sqrt(np.linalg.det(U))
    a, b, c = _euler_xyx(_su2_to_so3(U2))

    segs: list[PulseSegment] = []

    def emit_x(angle: float):
        # Rx(angle) = exp(-i angle X/2) = U(phi, pi/2) with phi = angle/2 mod 2pi
        phi = (angle / 2.0) % (2.0 * math.pi)
        if min(phi, 2.0 * math.pi - phi) < 1e-12:
            return
        segs.append(PulseSegment(F=0.0, duration=phi / drive, drive=drive))

    if abs(b) < 1e-12:
        emit_x(a + c)
    else:
        emit_x(c)
        # Ry(b) = exp(+i (b/2) iZX); two circuits of iZX-angle pi - b/4 each
        theta = math.pi / 2.0 - b / 4.0
        for _ in range(2):
            segs.append(PulseSegment.from_angles(math.pi / 2.0, theta, drive))
            segs.append(PulseSegment(F=0.0, duration=(math.pi / 2.0) / drive, drive=drive))
        emit_x(a)

    infid = 1.0 - gate_fidelity(U, compose_segments(segs))
    if infid > 1e-9:
        raise RuntimeError(f"compilation failed to converge (infidelity {infid:.3e})")
    return segs


# ---------------------------------------------------------------------------
# two-qubit phase-gate check


_MAGIC = np.array(
    [[1, 0, 0, 1j], [0, 1j, 1, 0], [0, 1j, -1, 0], [1, 0, 0, -1j]], dtype=complex
) / math.sqrt(2.0)

CZ = np.diag([1.0, 1.0, 1.0, -1.0]).astype(complex)


def local_invariants(U: np.ndarray) -> tuple[complex, complex]:
    """Local-equivalence invariants (G1, G2) of a two-qubit unitary."""
    M = _MAGIC.conj().T @ U @ _MAGIC
    m = M.T @ M
    det = np.linalg.det(U)
    tr = np.trace(m)
    return tr**2 / (16.0 * det), (tr**2 - np.trace(m @ m)) / (4.0 * det)


@dataclass
class TwoQubitReport:
    """Result of checking the dispersive two-dot phase gate."""

    dim: int
    rep: np.ndarray
    rep_deviation: float
    frame_unitary: np.ndarray
    invariants: tuple[complex, complex]
    target_invariants: tuple[complex, complex]
    invariant_deviation: float
    leak_residual: float


def two_qubit_phase_check(
    specA: SpinBathSpec, specB: SpinBathSpec, J: float, dim_cap: int = 4096
) -> TwoQubitReport:
    """Project J Sz1 Sz2 onto the two polarized frames and verify that it
    is J Z1 Z2 / 4 there, that the leak coupling vanishes, and that the
    t = pi/J evolution is locally equivalent to a controlled-Z."""
    fA = polarized_frame(specA)
    fB = polarized_frame(specB)
    dim = fA.basis.dim * fB.basis.dim
    if dim > dim_cap:
        raise ValueError(f"product sector dimension {dim} exceeds cap {dim_cap}")
    H = float(J) * tensor_op(spin_op(fA.basis, 0, "z"), spin_op(fB.basis, 0, "z"))
    frame4 = [
        tensor_ket(a, b) for a in (fA.ket0, fA.ket1) for b in (fB.ket0, fB.ket1)
    ]
    rep = np.array([[ki.dot(H @ kj) for kj in frame4] for ki in frame4])
    target_rep = float(J) * np.diag([0.25, -0.25, -0.25, 0.25]).astype(complex)
    rep_dev = float(np.max(np.abs(rep - target_rep)))

    diag = H.matrix.diagonal()
    t = math.pi / J if J != 0.0 else 1.0
    phases = np.exp(-1j * diag * t)
    U4 = np.array(
        [[ki.dot(KetState(kj.basis, phases * kj.amps)) for kj in frame4] for ki in frame4]
    )
    target = CZ if J != 0.0 else np.eye(4, dtype=complex)
    inv = local_invariants(U4)
    inv_t = local_invariants(target)
    inv_dev = float(max(abs(inv[0] - inv_t[0]), abs(inv[1] - inv_t[1])))

    P4 = projector(frame4)
    leak = 0.0
    for k in frame4:
        v = H @ k
        v = v - P4 @ v
        leak = max(leak, v.norm())
    return TwoQubitReport(
        dim=dim,
        rep=rep,
        rep_deviation=rep_dev,
        frame_unitary=U4,
        invariants=inv,
        target_invariants=inv_t,
        invariant_deviation=inv_dev,
        leak_residual=float(leak),
    )


# ---------------------------------------------------------------------------
# frame serialization (plain text, 17 significant digits)


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _write_state(out: StringIO, name: str, ket: KetState):
    out.write(f"state {name} {ket.basis.dim}\n")
    for row, amp in zip(ket.basis.occ, ket.amps):
        digits = " ".join(str(int(d)) for d in row)
        out.write(f"{digits} {_fmt(amp.real)} {_fmt(amp.imag)}\n")


def frame_to_text(frame: DressedFrame) -> str:
    """Serialize a frame to a line-oriented text block.

    Layout: header key/value lines (K, two_I, N, h_m, alpha, optional
    mode matrix rows), then one block per state.  Each state line holds
    the occupation digits of the configuration followed by the real and
    imaginary amplitude parts at 17 significant digits.
    """
    out = StringIO()
    out.write("dressed-frame 1\n")
    out.write(f"K {frame.spec.K}\n")
    out.write(f"two_I {frame.spec.two_I}\n")
    out.write(f"N {frame.N}\n")
    out.write(f"h_m {_fmt(frame.h_m)}\n")
    out.write("alpha " + " ".join(_fmt(a) for a in frame.spec.alpha) + "\n")
    if frame.mode_matrix is not None:
        for k in range(frame.mode_matrix.shape[0]):
            out.write(f"mode {k} " + " ".join(_fmt(v) for v in frame.mode_matrix[k]) + "\n")
    _write_state(out, "m_state", frame.m_state)
    _write_state(out, "ket0", frame.ket0)
    _write_state(out, "ket1", frame.ket1)
    for i, lk in enumerate(frame.leak_modes):
        _write_state(out, f"leak_{i}", lk)
    return out.getvalue()


def frame_from_text(spec: SpinBathSpec, text: str) -> DressedFrame:
    """Rebuild a frame serialized by :func:`frame_to_text`."""
    lines = text.strip().splitlines()
    if not lines or not lines[0].startswith("dressed-frame"):
        raise ValueError("not a dressed-frame block")
    header: dict[str, str] = {}
    modes: dict[int, np.ndarray] = {}
    states: dict[str, KetState] = {}
    i = 1
    while i < len(lines):
        parts = lines[i].split()
        if parts[0] == "state":
            name, count = parts[1], int(parts[2])
            K = int(header["K"])
            n_sites = K + (0 if name == "m_state" else 1)
            rows = lines[i + 1 : i + 1 + count]
            if name == "m_state":
                basis = nuclear_sector(spec, int(header["N"]) - 1)
            else:
                basis = enumerate_sector(spec, int(header["N"]))
            if count != basis.dim:
                raise ValueError(f"state {name}: {count} rows, basis dim {basis.dim}")
            amps = np.zeros(basis.dim, dtype=complex)
            for row in rows:
                toks = row.split()
                occ = np.array([int(t) for t in toks[:n_sites]], dtype=np.int64)
                key = int(occ @ basis.powers)
                amps[basis.lookup(np.array([key]))[0]] = float(toks[-2]) + 1j * float(toks[-1])
            states[name] = KetState(basis, amps)
            i += 1 + count
        elif parts[0] == "mode":
            modes[int(parts[1])] = np.array([float(t) for t in parts[2:]])
            i += 1
        else:
            header[parts[0]] = " ".join(parts[1:])
            i += 1
    if int(header["K"]) != spec.K or int(header["two_I"]) != spec.two_I:
        raise ValueError("serialized frame does not match the spec geometry")
    alpha = np.array([float(t) for t in header["alpha"].split()])
    if np.max(np.abs(alpha - spec.alpha)) > 1e-12:
        raise ValueError("serialized frame was built for a different weight profile")
    N = int(header["N"])
    mode_matrix = None
    if modes:
        mode_matrix = np.array([modes[k] for k in sorted(modes)])
    leak_names = sorted(
        (k for k in states if k.startswith("leak_")), key=lambda s: int(s.split("_")[1])
    )
    leak = [states[k] for k in leak_names]
    return DressedFrame(
        spec=spec,
        N=N,
        basis=enumerate_sector(spec, N),
        m_state=states["m_state"],
        h_m=float(header["h_m"]),
        ket0=states["ket0"],
        ket1=states["ket1"],
        leak_modes=leak,
        mode_matrix=mode_matrix,
    )

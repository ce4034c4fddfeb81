"""Reproducible experiment runner.

``run <config>`` executes one named experiment from a YAML or JSON
config and writes its results (CSV tables, a JSON report, a manifest)
into the output directory; ``list`` prints the experiment registry.

Determinism contract: identical config + seed give byte-identical CSV
and report files.  All randomness flows from one counter-based
generator keyed by the seed; sweep point i uses the generator jumped by
i, so results do not depend on worker scheduling.  The manifest carries
the config echo, package version, and wall time (the only
non-deterministic output).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import multiprocessing
import sys
import time
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .core import (
    ContractViolation,
    SpinBathSpec,
    ZeemanConstants,
    enumerate_sector,
    gaussian_alpha,
    perturbed_uniform_alpha,
    propagate,
    random_alpha,
    random_couplings,
    random_ket,
    random_spec,
    sector_dimension,
    sector_embedding,
    spin_op,
    uniform_alpha,
)
from .frames import (
    PAULI_X,
    PAULI_Z,
    compile_gate,
    compose_segments,
    gate_fidelity,
    matrix_rep,
    polarized_frame,
    pulse_unitary,
    PulseSegment,
    two_qubit_phase_check,
)
from .hamiltonians import (
    build_dominant,
    build_total,
    constrained_dipolar,
    dipolar_from_geometry,
    flip_flop,
    load_geometry,
)
from .leakage import (
    BangBangSchedule,
    bangbang_evolve,
    dipolar_report,
    free_leak_probability,
    leakage_elimination_op,
    leo_deviation,
    overhauser_report,
    split_leakage,
)
from .pairing import (
    build_pairing_model,
    exact_sector_gap,
    froehlich_consistency,
    gap_vs_filling,
    solve_bcs,
    uniform_pairing_model,
)

FULL_DIM_CAP = 1_048_576
SECTOR_K_CAP = 64


class ConfigError(ValueError):
    """Invalid or missing configuration field."""


# ---------------------------------------------------------------------------
# config plumbing


def _as_mapping(obj, path: str) -> dict:
    if obj is None:
        return {}
    if not isinstance(obj, dict):
        raise ConfigError(f"'{path}' must be a mapping, got {type(obj).__name__}")
    return obj


_REQUIRED = object()


def _field(d: dict, key: str, path: str, kind=None, default=_REQUIRED):
    if key not in d:
        if default is not _REQUIRED:
            return default
        raise ConfigError(f"missing required field '{path}.{key}'")
    val = d[key]
    if kind is not None:
        try:
            val = kind(val)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"field '{path}.{key}' has invalid value {d[key]!r}") from exc
    return val


def sweep_rng(seed: int, index: int) -> np.random.Generator:
    """Counter-based per-point generator; independent of worker order."""
    return np.random.Generator(np.random.Philox(key=seed).jumped(index))


def _resolve_alpha(cfg, K: int, rng: np.random.Generator) -> np.ndarray:
    if cfg is None or cfg == "uniform":
        return uniform_alpha(K)
    if cfg == "random":
        return random_alpha(K, rng)
    if isinstance(cfg, dict):
        if "gaussian" in cfg:
            width = _field(_as_mapping(cfg["gaussian"], "spec.alpha.gaussian"),
                           "width", "spec.alpha.gaussian", float)
            return gaussian_alpha(K, width)
        if "perturbed" in cfg:
            eps = _field(_as_mapping(cfg["perturbed"], "spec.alpha.perturbed"),
                         "eps", "spec.alpha.perturbed", float)
            return perturbed_uniform_alpha(K, eps)
        raise ConfigError("spec.alpha mapping must contain 'gaussian' or 'perturbed'")
    if isinstance(cfg, (list, tuple)):
        return np.asarray(cfg, dtype=float)
    raise ConfigError(f"unrecognized spec.alpha form: {cfg!r}")


def _resolve_dipolar(cfg, alpha: np.ndarray, rng: np.random.Generator):
    if cfg is None:
        return None
    cfg = _as_mapping(cfg, "spec.dipolar")
    kinds = [k for k in ("matrix", "geometry", "constrained", "random") if k in cfg]
    if len(kinds) != 1:
        raise ConfigError(
            "spec.dipolar must contain exactly one of: matrix, geometry, constrained, random"
        )
    kind = kinds[0]
    if kind == "matrix":
        return np.asarray(cfg["matrix"], dtype=float)
    if kind == "geometry":
        geom = load_geometry(str(cfg["geometry"]), prefactor=float(cfg.get("prefactor", 1.0)))
        return dipolar_from_geometry(geom)
    if kind == "constrained":
        b_bar = _field(_as_mapping(cfg["constrained"], "spec.dipolar.constrained"),
                       "b_bar", "spec.dipolar.constrained", float)
        return constrained_dipolar(alpha, b_bar).b
    scale = _field(_as_mapping(cfg["random"], "spec.dipolar.random"),
                   "scale", "spec.dipolar.random", float)
    return random_couplings(len(alpha), rng, scale)


def _resolve_zeeman(cfg) -> ZeemanConstants:
    cfg = _as_mapping(cfg, "spec.zeeman")
    allowed = {"g_star", "mu_B", "g_n", "mu_n", "B"}
    unknown = set(cfg) - allowed
    if unknown:
        raise ConfigError(f"unknown spec.zeeman fields: {sorted(unknown)}")
    return ZeemanConstants(**{k: float(v) for k, v in cfg.items()})


def spec_from_config(cfg, rng: np.random.Generator) -> SpinBathSpec:
    cfg = _as_mapping(cfg, "spec")
    if not cfg:
        raise ConfigError("this experiment needs a 'spec' block (missing 'spec.K')")
    K = _field(cfg, "K", "spec", int)
    I = _field(cfg, "I", "spec", float, default=0.5)
    A_hf = _field(cfg, "A_hf", "spec", float, default=1.0)
    alpha = _resolve_alpha(cfg.get("alpha"), K, rng)
    b = _resolve_dipolar(cfg.get("dipolar"), alpha, rng)
    zeeman = _resolve_zeeman(cfg.get("zeeman"))
    try:
        return SpinBathSpec(K=K, I=I, alpha=alpha, A_hf=A_hf, zeeman=zeeman, b=b)
    except (ValueError, ContractViolation) as exc:
        raise ConfigError(f"invalid spec block: {exc}") from exc


def _guard_full(spec: SpinBathSpec):
    if spec.dim_full > FULL_DIM_CAP:
        raise ConfigError(
            f"full space dimension {spec.dim_full} (K={spec.K}, 2I={spec.two_I}) exceeds "
            f"{FULL_DIM_CAP}; reduce K or I, or use a sector-based experiment"
        )


def _guard_sector(spec: SpinBathSpec):
    if spec.K > SECTOR_K_CAP:
        raise ConfigError(f"K={spec.K} exceeds the sector cap {SECTOR_K_CAP}")


# ---------------------------------------------------------------------------
# output plumbing


def _fmt_cell(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "%.17g" % float(x)
    return str(x)


def write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="\n") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(_fmt_cell(x) for x in row) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return _jsonable(dataclasses.asdict(obj))
    return obj


def write_json(path: Path, obj) -> None:
    with open(path, "w", newline="\n") as f:
        json.dump(_jsonable(obj), f, indent=2, sort_keys=True)
        f.write("\n")


# ---------------------------------------------------------------------------
# experiment registry


_EXPERIMENTS: dict = {}


def experiment(name: str):
    def deco(fn):
        _EXPERIMENTS[name] = fn
        return fn

    return deco


@dataclasses.dataclass
class RunContext:
    config: dict
    params: dict
    out: Path
    seed: int
    workers: int

    def spec(self, rng=None) -> SpinBathSpec:
        return spec_from_config(self.config.get("spec"), rng or sweep_rng(self.seed, 0))

    def map(self, fn, tasks: list):
        """Order-preserving map, optionally across a worker pool."""
        if self.workers <= 1 or len(tasks) <= 1:
            return [fn(t) for t in tasks]
        with multiprocessing.Pool(min(self.workers, len(tasks))) as pool:
            return pool.map(fn, tasks)


# -- frame-check ------------------------------------------------------------


def _frame_residuals(spec: SpinBathSpec, F: float) -> dict:
    frame = polarized_frame(spec)
    V = flip_flop(spec, basis=frame.basis)
    H_D = build_dominant(spec, F, basis=frame.basis)
    P = frame.projector()
    _, H_L = split_leakage(H_D, frame)
    closure = (V @ frame.ket0 - frame.ket1 * (math.sqrt(frame.h_m) / 2.0)).norm()
    kets = [frame.ket0, frame.ket1] + frame.leak_modes
    gram = np.array([[a.dot(b) for b in kets] for a in kets])
    ortho = float(np.max(np.abs(gram - np.eye(len(kets)))))
    rep_V = matrix_rep(V, frame)
    rep_Z = matrix_rep(spin_op(frame.basis, 0, "z"), frame)
    return {
        "K": spec.K,
        "two_I": spec.two_I,
        "h_m": frame.h_m,
        "subspace_residual": H_L.norm2(),
        "projector_leak": (H_D @ P - P @ (H_D @ P)).norm2(),
        "closure_residual": closure,
        "orthonormality_residual": ortho,
        "flipflop_rep_dev": float(np.max(np.abs(rep_V - PAULI_X / 2.0))),
        "sz_rep_dev": float(np.max(np.abs(rep_Z - PAULI_Z / 2.0))),
    }


def _task_frame_sample(args) -> dict:
    seed, idx, F = args
    rng = sweep_rng(seed, idx)
    K = int(rng.integers(2, 9))
    I = 0.5 if rng.integers(2) == 0 else 1.0
    spec = random_spec(rng, K, I=I)
    out = _frame_residuals(spec, F)
    out["index"] = idx
    return out


@experiment("frame-check")
def _run_frame_check(ctx: RunContext) -> dict:
    F = float(ctx.params.get("F", 1.0))
    samples = int(ctx.params.get("samples", 0))
    summary: dict = {"F": F}
    if samples > 0:
        rows = ctx.map(_task_frame_sample, [(ctx.seed, i, F) for i in range(samples)])
        write_csv(
            ctx.out / "frame-check.csv",
            ["index", "K", "two_I", "h_m", "subspace_residual", "closure_residual",
             "orthonormality_residual", "flipflop_rep_dev", "sz_rep_dev"],
            [[r["index"], r["K"], r["two_I"], r["h_m"], r["subspace_residual"],
              r["closure_residual"], r["orthonormality_residual"],
              r["flipflop_rep_dev"], r["sz_rep_dev"]] for r in rows],
        )
        summary["samples"] = samples
        summary["max_subspace_residual"] = max(r["subspace_residual"] for r in rows)
        summary["max_closure_residual"] = max(r["closure_residual"] for r in rows)
        summary["max_rep_dev"] = max(
            max(r["flipflop_rep_dev"], r["sz_rep_dev"]) for r in rows
        )
        summary["max_h_m_error"] = max(abs(r["h_m"] - 1.0) for r in rows)
    else:
        spec = ctx.spec()
        _guard_sector(spec)
        summary.update(_frame_residuals(spec, F))
    return summary


# -- gate-compile -----------------------------------------------------------

_NAMED_TARGETS = {
    "identity": np.eye(2, dtype=complex),
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.diag([1.0, -1.0]).astype(complex),
    "h": np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2.0),
    "s": np.diag([1.0, 1.0j]),
    "t": np.diag([1.0, np.exp(0.25j * math.pi)]),
}


def _haar_unitary(rng: np.random.Generator) -> np.ndarray:
    z = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def _compile_row(label: str, target: np.ndarray, spec: SpinBathSpec) -> list:
    segs = compile_gate(target, spec)
    U = compose_segments(segs)
    infid = 1.0 - gate_fidelity(target, U)
    dur = sum(s.duration for s in segs)
    max_F = max((abs(s.F) for s in segs), default=0.0)
    return [label, len(segs), infid, dur, max_F]


@experiment("gate-compile")
def _run_gate_compile(ctx: RunContext) -> dict:
    spec = ctx.spec()
    n_random = int(ctx.params.get("random", 100))
    grid_n = int(ctx.params.get("grid", 20))
    named = ctx.params.get("named", ["identity", "x", "y", "z", "h", "s", "t"])
    rows = []
    for name in named:
        if name not in _NAMED_TARGETS:
            raise ConfigError(f"unknown named gate '{name}' "
                              f"(choices: {sorted(_NAMED_TARGETS)})")
        rows.append(_compile_row(name, _NAMED_TARGETS[name], spec))
    for i in range(n_random):
        target = _haar_unitary(sweep_rng(ctx.seed, i))
        rows.append(_compile_row(f"random_{i}", target, spec))
    write_csv(
        ctx.out / "gate-compile.csv",
        ["label", "segments", "infidelity", "total_duration", "max_abs_F"],
        rows,
    )
    # closed-form rotation identity on a (phi, theta) grid
    grid_dev = 0.0
    for phi in np.linspace(0.0, 2.0 * math.pi, grid_n, endpoint=False):
        for theta in (np.arange(grid_n) + 0.5) * math.pi / grid_n:
            seg = PulseSegment.from_angles(phi, theta, math.sqrt(spec.two_I) * spec.A_hf)
            ry = np.array(
                [[math.cos(theta / 2), -math.sin(theta / 2)],
                 [math.sin(theta / 2), math.cos(theta / 2)]],
                dtype=complex,
            )
            rz = np.diag([np.exp(-1j * phi), np.exp(1j * phi)])
            dev = np.max(np.abs(pulse_unitary(seg) - ry @ rz @ ry.conj().T))
            grid_dev = max(grid_dev, float(dev))
    return {
        "targets": len(rows),
        "max_infidelity": max(r[2] for r in rows),
        "max_segments": max(r[1] for r in rows),
        "max_abs_F": max(r[4] for r in rows),
        "grid_points": grid_n * grid_n,
        "grid_identity_dev": grid_dev,
    }


# -- leakage-report ---------------------------------------------------------


def _check_rows(checks) -> list[dict]:
    return [
        {"name": c.name, "computed": c.computed, "quoted": c.quoted, "matches": c.matches}
        for c in checks
    ]


def _task_leak_scan(args) -> dict:
    seed, idx, K, eps = args
    spec = SpinBathSpec(K=K, I=0.5, alpha=perturbed_uniform_alpha(K, eps))
    rep = overhauser_report(spec, polarized_frame(spec))
    return {
        "index": idx,
        "K": K,
        "ratio": rep.ratio,
        "leak_norm": rep.leak_norm,
        "diag_coeff": rep.diag_coeff,
        "estimate": rep.analytic_estimate,
    }


@experiment("leakage-report")
def _run_leakage_report(ctx: RunContext) -> dict:
    spec = ctx.spec()
    _guard_sector(spec)
    frame = polarized_frame(spec)
    ov = overhauser_report(spec, frame)
    b_bar = ctx.params.get("b_bar")
    if b_bar is None:
        # a constrained dipolar block already names the target mean coupling
        dip_cfg = _as_mapping(ctx.config.get("spec"), "spec").get("dipolar")
        if isinstance(dip_cfg, dict) and isinstance(dip_cfg.get("constrained"), dict):
            b_bar = dip_cfg["constrained"].get("b_bar")
    dip = dipolar_report(spec, frame, b_bar=None if b_bar is None else float(b_bar))
    summary = {
        "overhauser": {
            "diag_coeff": ov.diag_coeff,
            "leak_norm": ov.leak_norm,
            "ratio": ov.ratio,
            "estimate": ov.analytic_estimate,
            "checks": _check_rows(ov.checks),
        },
        "bath_coupling": {
            "diag_coeff": dip.diag_coeff,
            "leak_norm": dip.leak_norm,
            "ratio": dip.ratio,
            "checks": _check_rows(dip.checks),
        },
    }
    if ctx.params.get("scan", True):
        eps = float(ctx.params.get("scan_eps", 0.05))
        Ks = [int(k) for k in ctx.params.get("scan_K", list(range(4, 13)))]
        rows = ctx.map(_task_leak_scan, [(ctx.seed, i, K, eps) for i, K in enumerate(Ks)])
        write_csv(
            ctx.out / "leakage-scaling.csv",
            ["K", "ratio", "leak_norm", "diag_coeff", "estimate"],
            [[r["K"], r["ratio"], r["leak_norm"], r["diag_coeff"], r["estimate"]] for r in rows],
        )
        logk = np.log([r["K"] for r in rows])
        logr = np.log([r["ratio"] for r in rows])
        slope = float(np.polyfit(logk, logr, 1)[0])
        summary["scaling"] = {"eps": eps, "K_values": Ks, "exponent": slope}
    return summary


# -- bangbang-sweep ---------------------------------------------------------


def _task_bangbang(args) -> dict:
    spec, k, total_time = args
    frame = polarized_frame(spec)
    H = build_total(spec, basis=frame.basis)
    cycles = 2**k
    tau = total_time / cycles
    psi0 = frame.ket1
    _, trace = bangbang_evolve(H, frame, BangBangSchedule(tau=tau, cycles=cycles), psi0)
    return {"k": k, "tau": tau, "cycles": cycles, "final_leak": trace[-1], "trace": trace}


@experiment("bangbang-sweep")
def _run_bangbang(ctx: RunContext) -> dict:
    spec = ctx.spec()
    _guard_sector(spec)
    total_time = float(ctx.params.get("total_time", 8.0))
    k_min = int(ctx.params.get("k_min", 3))
    k_max = int(ctx.params.get("k_max", 9))
    if not (0 <= k_min <= k_max):
        raise ConfigError("need 0 <= k_min <= k_max")
    results = ctx.map(_task_bangbang, [(spec, k, total_time) for k in range(k_min, k_max + 1)])
    write_csv(
        ctx.out / "bangbang-sweep.csv",
        ["tau", "cycles", "final_leak"],
        [[r["tau"], r["cycles"], r["final_leak"]] for r in results],
    )
    for r in results:
        cycle_time = total_time / r["cycles"]
        write_csv(
            ctx.out / f"bangbang-trace-k{r['k']}.csv",
            ["cycle", "time", "leak_prob"],
            [[c + 1, (c + 1) * cycle_time, p] for c, p in enumerate(r["trace"])],
        )
    taus = np.array([r["tau"] for r in results])
    leaks = np.array([max(r["final_leak"], 1e-300) for r in results])
    slope = float(np.polyfit(np.log(taus), np.log(leaks), 1)[0])
    summary = {
        "total_time": total_time,
        "slope": slope,
        "final_leaks": {str(r["k"]): r["final_leak"] for r in results},
    }
    if ctx.params.get("compare_free", True):
        frame = polarized_frame(spec)
        H = build_total(spec, basis=frame.basis)
        free = free_leak_probability(H, frame, total_time, frame.ket1)
        best = min(r["final_leak"] for r in results)
        summary["free_leak"] = free
        summary["suppression_factor"] = free / best if best > 0 else math.inf
    return summary


# -- leo-verify -------------------------------------------------------------


def _task_leo(args) -> dict:
    seed, idx = args
    rng = sweep_rng(seed, idx)
    K = int(rng.integers(2, 7))
    spec = random_spec(rng, K, I=0.5, b_scale=0.05)
    frame = polarized_frame(spec)
    R = leakage_elimination_op(spec, frame)
    dual = leo_deviation(spec, frame)
    Rm = R.dense()
    unit = float(np.max(np.abs(Rm @ Rm.conj().T - np.eye(frame.basis.dim))))
    H = build_total(spec, basis=frame.basis)
    _, H_L = split_leakage(H, frame)
    anti = (R @ H_L @ R + H_L).norm2()
    return {"index": idx, "K": K, "dual_dev": dual, "unitarity_dev": unit,
            "involution_dev": float(np.max(np.abs(Rm @ Rm - np.eye(frame.basis.dim)))),
            "anticommutator_norm": anti}


@experiment("leo-verify")
def _run_leo_verify(ctx: RunContext) -> dict:
    samples = int(ctx.params.get("samples", 20))
    rows = ctx.map(_task_leo, [(ctx.seed, i) for i in range(samples)])
    write_csv(
        ctx.out / "leo-verify.csv",
        ["index", "K", "dual_dev", "unitarity_dev", "involution_dev", "anticommutator_norm"],
        [[r["index"], r["K"], r["dual_dev"], r["unitarity_dev"],
          r["involution_dev"], r["anticommutator_norm"]] for r in rows],
    )
    return {
        "samples": samples,
        "max_dual_dev": max(r["dual_dev"] for r in rows),
        "max_unitarity_dev": max(r["unitarity_dev"] for r in rows),
        "max_involution_dev": max(r["involution_dev"] for r in rows),
        "max_anticommutator_norm": max(r["anticommutator_norm"] for r in rows),
    }


# -- froehlich-check --------------------------------------------------------


@experiment("froehlich-check")
def _run_froehlich(ctx: RunContext) -> dict:
    spec = ctx.spec()
    _guard_full(spec)
    F = float(ctx.params.get("F", 1.0))
    ratios = [float(r) for r in ctx.params.get("ratios", [0.1, 0.05, 0.025])]
    N = ctx.params.get("N")
    rows = []
    for r in ratios:
        sub = dataclasses.replace(spec, A_hf=r * abs(F))
        chk = froehlich_consistency(sub, F, N=None if N is None else int(N))
        rows.append([chk.ratio, chk.N, chk.dim_down, chk.max_abs_error, chk.rel_error])
    write_csv(
        ctx.out / "froehlich-check.csv",
        ["ratio", "N", "dim_down", "max_abs_error", "rel_error"],
        rows,
    )
    rel = [r[4] for r in rows]
    ratios_between = [rel[i] / rel[i + 1] if rel[i + 1] > 0 else math.inf
                      for i in range(len(rel) - 1)]
    return {"F": F, "ratios": ratios, "rel_errors": rel, "error_ratios": ratios_between}


# -- bcs experiments --------------------------------------------------------


@experiment("bcs-uniform")
def _run_bcs_uniform(ctx: RunContext) -> dict:
    K_list = [int(k) for k in ctx.params.get("K", [4, 8, 16, 32])]
    A_hf = float(ctx.params.get("A_hf", 1.0))
    F = float(ctx.params.get("F", 1.0))
    b = float(ctx.params.get("b", 0.01))
    rows = []
    max_gap_err = 0.0
    max_v_err = 0.0
    argmax_ok = True
    for K in K_list:
        deltas = {}
        for n in range(1, K):
            sol = solve_bcs(uniform_pairing_model(K, A_hf, F, b, float(n)))
            closed = (A_hf**2 / (4.0 * F * K) + b) * math.sqrt(n * (K - n))
            gap_err = float(np.max(np.abs(sol.delta - closed)))
            v_err = float(np.max(np.abs(sol.v - math.sqrt(n / K))))
            max_gap_err = max(max_gap_err, gap_err)
            max_v_err = max(max_v_err, v_err)
            deltas[n] = float(np.max(sol.delta))
            rows.append([K, n, deltas[n], closed, gap_err, v_err, sol.lam,
                         sol.residual, sol.iterations])
        if K % 2 == 0 and max(deltas, key=deltas.get) != K // 2:
            argmax_ok = False
    write_csv(
        ctx.out / "bcs-uniform.csv",
        ["K", "n", "delta", "delta_closed", "gap_error", "v_error", "lambda",
         "residual", "iterations"],
        rows,
    )
    return {
        "K_values": K_list,
        "max_gap_error": max_gap_err,
        "max_v_error": max_v_err,
        "argmax_at_half_filling": argmax_ok,
    }


def _task_bcs_random(args) -> dict:
    seed, idx, K, b_scale, F = args
    rng = sweep_rng(seed, idx)
    spec = random_spec(rng, K, I=0.5, b_scale=b_scale)
    model = build_pairing_model(spec, F, n_target=K / 2.0, verify=K <= 12)
    sol = solve_bcs(model)
    row = {
        "index": idx,
        "delta_min": float(np.min(sol.delta)),
        "delta_max": float(np.max(sol.delta)),
        "lambda": sol.lam,
        "residual": sol.residual,
        "iterations": sol.iterations,
        "normal_state": sol.normal_state,
        "gap_in_sector": math.nan,
        "curvature": math.nan,
    }
    if K <= 12:
        gap = exact_sector_gap(model)
        row["gap_in_sector"] = gap.gap_in_sector
        row["curvature"] = gap.pair_curvature if gap.pair_curvature is not None else math.nan
    return row


@experiment("bcs-random")
def _run_bcs_random(ctx: RunContext) -> dict:
    samples = int(ctx.params.get("samples", 10))
    K = int(ctx.params.get("K", 8))
    b_scale = float(ctx.params.get("b_scale", 0.02))
    F = float(ctx.params.get("F", 2.0))
    rows = ctx.map(_task_bcs_random, [(ctx.seed, i, K, b_scale, F) for i in range(samples)])
    write_csv(
        ctx.out / "bcs-random.csv",
        ["index", "delta_min", "delta_max", "lambda", "residual", "iterations",
         "normal_state", "gap_in_sector", "curvature"],
        [[r["index"], r["delta_min"], r["delta_max"], r["lambda"], r["residual"],
          r["iterations"], r["normal_state"], r["gap_in_sector"], r["curvature"]]
         for r in rows],
    )
    paired = [r for r in rows if not r["normal_state"] and not math.isnan(r["gap_in_sector"])]
    summary = {
        "samples": samples,
        "K": K,
        "normal_states": sum(1 for r in rows if r["normal_state"]),
        "max_residual": max(r["residual"] for r in rows),
        "all_gaps_positive": all(r["gap_in_sector"] > 0 for r in paired) if paired else None,
    }
    if len(paired) >= 3:
        d = np.array([r["delta_max"] for r in paired])
        g = np.array([r["gap_in_sector"] for r in paired])
        if np.std(d) > 0 and np.std(g) > 0:
            summary["delta_gap_correlation"] = float(np.corrcoef(d, g)[0, 1])
    return summary


@experiment("gap-vs-filling")
def _run_gap_vs_filling(ctx: RunContext) -> dict:
    K = int(ctx.params.get("K", 8))
    A_hf = float(ctx.params.get("A_hf", 1.0))
    F = float(ctx.params.get("F", 1.0))
    b = float(ctx.params.get("b", 0.01))
    rows = gap_vs_filling(K, A_hf, F, b)
    write_csv(
        ctx.out / "gap-vs-filling.csv",
        ["n", "lambda", "delta_min", "delta_max", "residual", "iterations"],
        [[r["n"], r["lambda"], r["delta_min"], r["delta_max"], r["residual"],
          r["iterations"]] for r in rows],
    )
    best = max(rows, key=lambda r: r["delta_max"])
    sym_dev = max(
        abs(rows[i]["delta_max"] - rows[len(rows) - 1 - i]["delta_max"])
        for i in range(len(rows))
    )
    return {"K": K, "argmax_n": best["n"], "max_delta": best["delta_max"],
            "particle_hole_dev": sym_dev}


# -- two-qubit-check --------------------------------------------------------


@experiment("two-qubit-check")
def _run_two_qubit(ctx: RunContext) -> dict:
    spec = ctx.spec()
    _guard_sector(spec)
    J = float(ctx.params.get("J", 0.25))
    report = two_qubit_phase_check(spec, spec, J)
    idreport = two_qubit_phase_check(spec, spec, 0.0)
    return {
        "J": J,
        "dim": report.dim,
        "rep_deviation": report.rep_deviation,
        "invariants": [report.invariants[0], report.invariants[1]],
        "invariant_deviation": report.invariant_deviation,
        "leak_residual": report.leak_residual,
        "identity_invariant_deviation": idreport.invariant_deviation,
    }


# -- sector-crosscheck ------------------------------------------------------


@experiment("sector-crosscheck")
def _run_sector_crosscheck(ctx: RunContext) -> dict:
    K_dims = int(ctx.params.get("K_dims", 10))
    rows = []
    mismatches = 0
    for K in range(2, K_dims + 1):
        for N in range(0, K + 2):
            dim = sector_dimension(K, 1, N)
            expected = math.comb(K + 1, N)
            rows.append([K, N, dim, expected])
            if dim != expected:
                mismatches += 1
    write_csv(ctx.out / "sector-dims.csv", ["K", "N", "dim", "expected"], rows)

    spec = ctx.spec()
    _guard_full(spec)
    if spec.dim_full > 4096:
        raise ConfigError(
            f"evolution crosscheck needs dim_full <= 4096, got {spec.dim_full}"
        )
    t = float(ctx.params.get("t", 3.0))
    sector = enumerate_sector(spec, 1)
    psi = random_ket(sector, sweep_rng(ctx.seed, 0))
    H_sec = build_total(spec, basis=sector)
    H_full = build_total(spec)
    E = sector_embedding(spec, 1)
    a = E @ propagate(H_sec, psi, t)
    bvec = propagate(H_full, E @ psi, t)
    fidelity = abs(a.dot(bvec)) ** 2
    return {
        "dim_mismatches": mismatches,
        "dims_checked": len(rows),
        "evolution_time": t,
        "evolution_fidelity_deficit": max(0.0, 1.0 - fidelity),
    }


# ---------------------------------------------------------------------------
# entry points


def load_config(path: str) -> dict:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = yaml.safe_load(p.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    return data


def run(config_path: str, out_dir=None, workers: int = 1, seed=None) -> int:
    cfg = load_config(config_path)
    exp_cfg = _as_mapping(cfg.get("experiment"), "experiment")
    name = _field(exp_cfg, "name", "experiment", str)
    if name not in _EXPERIMENTS:
        raise ConfigError(
            f"unknown experiment '{name}'; known: {', '.join(_EXPERIMENTS)}"
        )
    params = {k: v for k, v in exp_cfg.items() if k != "name"}
    out_block = _as_mapping(cfg.get("output"), "output")
    out = Path(out_dir) if out_dir else Path(out_block.get("directory", "results"))
    out.mkdir(parents=True, exist_ok=True)
    if seed is None:
        seed = int(params.pop("seed", 0))
    else:
        params.pop("seed", None)
        seed = int(seed)
    ctx = RunContext(config=cfg, params=params, out=out, seed=seed, workers=max(1, workers))

    t0 = time.monotonic()
    summary = _EXPERIMENTS[name](ctx)
    wall = time.monotonic() - t0

    write_json(out / "report.json", {"experiment": name, "seed": seed, "summary": summary})
    write_json(
        out / "manifest.json",
        {
            "experiment": name,
            "seed": seed,
            "version": __version__,
            "wall_time_s": wall,
            "config": cfg,
        },
    )
    return 0


def list_experiments() -> str:
    return "\n".join(_EXPERIMENTS)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="dressedspin", description="central-spin dressed-qubit experiment runner"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="execute one experiment from a config file")
    p_run.add_argument("config", help="YAML or JSON config path")
    p_run.add_argument("--out", default=None, help="output directory")
    p_run.add_argument("--workers", type=int, default=1, help="worker pool size")
    p_run.add_argument("--seed", type=int, default=None, help="override the config seed")
    sub.add_parser("list", help="print the experiment registry")
    args = parser.parse_args(argv)

    if args.command == "list":
        print(list_experiments())
        return 0
    try:
        return run(args.config, out_dir=args.out, workers=args.workers, seed=args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ContractViolation, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Parameter sweeps over coupling strength, scaling parameter and spin-spin coupling.

Every sweep returns a ``SweepTable`` whose metadata records the operation and
all of its arguments, so ``rerun(table)`` reproduces it exactly.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq

from . import bogoliubov, displacement, eigensolve
from .errors import InstabilityError, NonConvergenceError, SizingError
from .models import (
    ModelSpec,
    ScaledFamily,
    block_ground_energy,
    critical_chi,
    instantiate,
    quadratic_expansion,
)

SWITCH_FACTOR = 10.0
RABI_MODE2_CUTOFF = 6


def _column(values) -> np.ndarray | list:
    vals = list(values)
    if vals and all(isinstance(v, str) for v in vals):
        return vals
    if vals and all(isinstance(v, (bool, np.bool_)) for v in vals):
        return np.array(vals, dtype=bool)
    return np.array([np.nan if v is None else v for v in vals], dtype=float)


def _same(a, b) -> bool:
    if isinstance(a, list) or isinstance(b, list):
        return list(a) == list(b)
    a, b = np.asarray(a), np.asarray(b)
    if a.dtype != b.dtype or a.shape != b.shape:
        return False
    if a.dtype == bool:
        return bool(np.all(a == b))
    return bool(np.all((a == b) | (np.isnan(a) & np.isnan(b))))


@dataclass(frozen=True, eq=False)
class SweepTable:
    """Columns aligned with a 1-D grid. Column order is preserved for output."""

    axis: str
    grid: np.ndarray
    columns: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        cols = {name: _column(v) for name, v in self.columns.items()}
        for name, col in cols.items():
            if len(col) != grid.size:
                raise ValueError(f"column {name!r} has {len(col)} entries, grid has {grid.size}")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "columns", cols)

    def __len__(self):
        return self.grid.size

    def __getitem__(self, name):
        return self.columns[name]

    def column_names(self) -> list[str]:
        return list(self.columns)

    def __eq__(self, other):
        if not isinstance(other, SweepTable):
            return NotImplemented
        return (
            self.axis == other.axis
            and _same(self.grid, other.grid)
            and list(self.columns) == list(other.columns)
            and all(_same(self.columns[k], other.columns[k]) for k in self.columns)
            and _jsonable(self.metadata) == _jsonable(other.metadata)
        )

    def to_dict(self) -> dict:
        def enc(col):
            if isinstance(col, list):
                return list(col)
            if col.dtype == bool:
                return [bool(x) for x in col]
            return [None if math.isnan(x) else float(x) for x in col]

        return {
            "axis": self.axis,
            "grid": enc(self.grid),
            "columns": {k: enc(v) for k, v in self.columns.items()},
            "metadata": _jsonable(self.metadata),
        }

    @classmethod
    def from_dict(cls, d) -> "SweepTable":
        return cls(d["axis"], _column(d["grid"]), dict(d["columns"]), d.get("metadata", {}))

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, allow_nan=False)

    @classmethod
    def from_json(cls, text: str) -> "SweepTable":
        return cls.from_dict(json.loads(text))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return None if math.isnan(x) else x
    return obj


def _map(fn: Callable, items, workers: int | None):
    items = list(items)
    if workers and workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _check_ascending(grid: np.ndarray):
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("grid must be a non-empty 1-D sequence")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly ascending")


def sweep_displacements(spec_template: ModelSpec, g_grid, tol: float = 1e-10) -> SweepTable:
    """Lowest stable displacement along a coupling grid, continued point to point."""
    if spec_template.n_spins:
        raise ValueError("displacement sweeps need a bosonic model")
    grid = np.asarray(g_grid, dtype=float)
    _check_ascending(grid)
    n = spec_template.n_modes
    rows = []
    prev: list[np.ndarray] = []
    for g in grid:
        spec = spec_template.with_coupling(float(g))
        try:
            seeds = displacement.asymptotic_seed(spec)
        except ValueError:
            seeds = []
        seeds = [p for p in prev[-1:]] + seeds
        sols = displacement.solve_displacements(spec, seeds=seeds, tol=tol)
        best = displacement.lowest_stable(sols)
        if best is None:
            rows.append(None)
            continue
        rows.append(best)
        prev.append(best.alphas)

    alphas = np.full((grid.size, n), np.nan)
    energy = np.full(grid.size, np.nan)
    residual = np.full(grid.size, np.nan)
    margin = np.full(grid.size, np.nan)
    stable = np.zeros(grid.size, dtype=bool)
    branch = ["none"] * grid.size
    for i, s in enumerate(rows):
        if s is None:
            continue
        alphas[i] = s.alphas
        energy[i], residual[i], margin[i] = s.energy, s.residual_norm, s.margin
        stable[i] = s.stable
        branch[i] = s.branch_id
    switch = _branch_switches(alphas)

    cols = {"g": grid}
    for i in range(n):
        cols[f"alpha_{i + 1}"] = np.abs(alphas[:, i])
    cols.update(
        energy=energy,
        residual_norm=residual,
        stability_margin=margin,
        stable=stable,
        branch_id=branch,
        branch_switch=switch,
    )
    meta = {
        "operation": "sweep_displacements",
        "spec": spec_template.to_dict(),
        "params": {"g_grid": grid, "tol": tol},
        "solver": {
            "newton_max_iter": displacement.MAX_ITER,
            "dedup_tol": displacement.DEDUP_TOL,
            "extra_seeds": "halton unscrambled, 5*2^n points",
        },
    }
    return SweepTable("g", grid, cols, meta)


def _branch_switches(alphas: np.ndarray) -> np.ndarray:
    # a step is a switch when it dwarfs both neighbouring steps
    flags = np.zeros(alphas.shape[0], dtype=bool)
    steps = np.linalg.norm(np.diff(alphas, axis=0), axis=1)
    for i in range(1, alphas.shape[0]):
        jump = steps[i - 1]
        if np.isnan(jump):
            continue
        near = [steps[j] for j in (i - 2, i) if 0 <= j < steps.size and not np.isnan(steps[j])]
        if not near:
            continue
        flags[i] = jump > SWITCH_FACTOR * max(near) and jump > displacement.DEDUP_TOL
    return flags


def _ed_photon_density(spec: ModelSpec, alphas, N: float, cutoff: int, cap_mode2: bool) -> float:
    # displaced-frame ED around the solved branch; only fluctuations need the box
    c2 = RABI_MODE2_CUTOFF if cap_mode2 else cutoff
    rep = eigensolve.solve_frame(spec, [cutoff, c2], 1, frame=alphas)
    return rep.order_params[0]["n_1"] / N


def lambda_scan(
    family: ScaledFamily,
    N_list,
    lambda_grid,
    ed_max_N: float = 0.0,
    tol: float = 1e-10,
    workers: int | None = None,
    ed_cutoff: int = 30,
) -> SweepTable:
    """Order parameter and gap of a scaled oscillator family over (N, lambda).

    Rows are ordered N-major. ED cross-checks run for N <= ``ed_max_N``; for
    the Rabi-type family the second mode's cutoff is held at 6. ED runs in the
    frame of the solved displacement.
    """
    if family.family not in ("dicke_type", "rabi_type"):
        raise ValueError("lambda_scan needs a dicke_type or rabi_type family")
    Ns = [float(x) for x in N_list]
    lams = np.asarray(lambda_grid, dtype=float)
    _check_ascending(lams)
    if any(not (N > 0) for N in Ns):
        raise ValueError("every N must be positive")

    def point(task):
        N, lam = task
        fam = family.replace(N=N, control=float(lam))
        spec = instantiate(fam)
        sols = displacement.solve_displacements(spec, tol=tol)
        best = displacement.lowest_stable(sols)
        if best is None:
            return (N, lam, np.nan, np.nan, np.nan, np.nan, np.nan, "none")
        a = best.alphas
        try:
            gap = bogoliubov.diagonalize(quadratic_expansion(spec, a)).gap()
        except InstabilityError:
            gap = np.nan
        ratio = math.sqrt(N) * a[1] / a[0] if abs(a[0]) > displacement.DEDUP_TOL else np.nan
        ed = np.nan
        if N <= ed_max_N:
            ed = _ed_photon_density(spec, a, N, ed_cutoff, fam.family == "rabi_type")
        return (N, lam, a[0] ** 2 / N, ratio, gap, best.energy, ed, best.branch_id)

    tasks = [(N, lam) for N in Ns for lam in lams]
    out = _map(point, tasks, workers)
    lam_col = np.array([t[1] for t in out])
    cols = {
        "N": [t[0] for t in out],
        "lambda": lam_col,
        "alpha_sq_over_N": [t[2] for t in out],
        "sqrtN_beta_over_alpha": [t[3] for t in out],
        "gap": [t[4] for t in out],
        "energy": [t[5] for t in out],
        "ed_photons_over_N": [t[6] for t in out],
        "branch_id": [t[7] for t in out],
    }
    meta = {
        "operation": "lambda_scan",
        "family": family.to_dict(),
        "params": {
            "N_list": Ns,
            "lambda_grid": lams,
            "ed_max_N": ed_max_N,
            "tol": tol,
            "ed_cutoff": ed_cutoff,
        },
        "solver": {"rabi_mode2_cutoff": RABI_MODE2_CUTOFF},
    }
    return SweepTable("lambda", lam_col, cols, meta)


def _two_atom_ed(fam: ScaledFamily) -> tuple[float, float]:
    spec = instantiate(fam)
    n = 4.0 * fam.N * (fam.g / fam.omega) ** 2
    cutoff = int(n + 10.0 * math.sqrt(n) + 20)
    rep = eigensolve.solve_frame(spec, [cutoff], 1)
    return float(rep.eigenvalues[0]), rep.order_params[0]["n_1"]


@dataclass(frozen=True)
class Crossing:
    analytic: float
    ed: float
    jump: float
    bracket: tuple[float, float]


def first_order_crossing(
    family: ScaledFamily,
    chi_grid,
    bisect_tol: float = 1e-6,
    workers: int | None = None,
) -> tuple[SweepTable, Crossing]:
    """Parallel/orthogonal block energies, lab-frame ED and the located crossing."""
    if family.family != "two_atom_dicke":
        raise ValueError("first_order_crossing needs the two_atom_dicke family")
    chis = np.asarray(chi_grid, dtype=float)
    _check_ascending(chis)

    def delta(chi):
        f = family.replace(control=float(chi))
        return block_ground_energy(f, 1, 1) - block_ground_energy(f, 1, -1)

    d = np.array([delta(c) for c in chis])
    sign_change = np.flatnonzero(np.sign(d[:-1]) != np.sign(d[1:]))
    if sign_change.size == 0:
        raise ValueError(
            f"chi grid [{chis[0]}, {chis[-1]}] does not straddle the block crossing "
            f"{critical_chi(family.g, family.omega)}"
        )
    i = int(sign_change[0])
    analytic = chis[i] if d[i] == 0 else brentq(delta, chis[i], chis[i + 1], xtol=1e-15, rtol=4 * np.finfo(float).eps)

    ed = _map(lambda c: _two_atom_ed(family.replace(control=float(c))), chis, workers)
    energy_ed = np.array([e for e, _ in ed])
    photons = np.array([p for _, p in ed])

    # bisection on the ED photon number against the midpoint of its two plateaus
    jumps = np.abs(np.diff(photons))
    j = int(np.argmax(jumps))
    lo, hi = float(chis[j]), float(chis[j + 1])
    n_lo, n_hi = photons[j], photons[j + 1]
    mid = 0.5 * (n_lo + n_hi)
    while hi - lo > bisect_tol:
        c = 0.5 * (lo + hi)
        n_c = _two_atom_ed(family.replace(control=c))[1]
        if (n_c - mid) * (n_lo - mid) > 0:
            lo, n_lo = c, n_c
        else:
            hi, n_hi = c, n_c
    crossing = Crossing(float(analytic), 0.5 * (lo + hi), float(abs(n_hi - n_lo)), (lo, hi))

    cols = {
        "chi": chis,
        "energy_parallel": [block_ground_energy(family.replace(control=float(c)), 1, 1) for c in chis],
        "energy_orthogonal": [block_ground_energy(family.replace(control=float(c)), 1, -1) for c in chis],
        "energy_ed": energy_ed,
        "photons_ed": photons,
    }
    meta = {
        "operation": "first_order_crossing",
        "family": family.to_dict(),
        "params": {"chi_grid": chis, "bisect_tol": bisect_tol},
        "crossing": {
            "analytic": crossing.analytic,
            "ed": crossing.ed,
            "jump": crossing.jump,
            "bracket": list(crossing.bracket),
        },
    }
    return SweepTable("chi", chis, cols, meta), crossing


def tunnel_overlap_log10(spec: ModelSpec, frame) -> float:
    """log10 of the Gaussian overlap between the states at +frame and -frame."""
    v = np.asarray(frame, dtype=float)
    res = bogoliubov.diagonalize(quadratic_expansion(spec, v))
    _, pp = res.quadrature_covariance()
    return float(-4.0 * v @ pp @ v / math.log(10.0))


def _splitting_point(spec: ModelSpec, policy: str, k: int, cutoff_start: int, levels: int, tol_abs, tol_rel, trunc_tol):
    frame = None
    if policy == "auto_displaced" and spec.n_modes and not spec.n_spins:
        try:
            sols = displacement.solve_displacements(spec)
            best = displacement.lowest_stable(sols)
        except (ValueError, InstabilityError):
            best = None
        if best is not None and best.branch_id.strip("0"):
            frame = best.alphas
    rep, used = None, "lab"
    if frame is not None:
        try:
            rep = eigensolve.convergence_ladder(spec, frame, k, cutoff_start, levels, True, tol_abs, tol_rel)
            used = "mirror"
        except ValueError as exc:
            if isinstance(exc, SizingError):
                raise
            rep = None
    if rep is None:
        if spec.n_modes:
            rep = eigensolve.convergence_ladder(spec, None, k, cutoff_start, levels, False, tol_abs, tol_rel)
        else:
            rep = eigensolve.solve_frame(spec, [], k, None, tol_abs, tol_rel).replace(truncation_error=0.0)
    E = rep.eigenvalues
    if used == "mirror":
        split = rep.extras["splitting"]
        floor = rep.extras["splitting_floor"]
        overlap = tunnel_overlap_log10(spec, frame)
    else:
        split = float(E[1] - E[0]) if E.size > 1 else np.nan
        floor = 64.0 * np.finfo(float).eps * (1.0 + float(np.max(np.abs(E[:2]))))
        overlap = np.nan
    lowest = rep.clusters[0] if rep.clusters else None
    doublet = bool(lowest is not None and lowest.is_doublet)
    pplus = pminus = np.nan
    if doublet and rep.parity_diag:
        pminus, pplus = float(rep.parity_diag[0][0]), float(rep.parity_diag[0][-1])
    converged = bool(rep.truncation_error <= trunc_tol * (1.0 + abs(float(E[0]))))
    return split, floor, pplus, pminus, doublet, float(rep.truncation_error), used, overlap, converged


def splitting_curve(
    spec: ModelSpec,
    g_grid,
    frame_policy: str = "auto_displaced",
    k: int = 4,
    cutoff_start: int = 8,
    levels: int = 3,
    tol_abs: float | None = None,
    tol_rel: float = eigensolve.TOL_REL,
    trunc_tol: float = 1e-6,
    workers: int | None = None,
) -> SweepTable:
    """Lowest-doublet splitting and its parity content along a coupling grid.

    ``auto_displaced`` diagonalizes on the two mirror frames at the stable
    displacement when one exists and the frames are well separated, and in
    the lab frame otherwise. Rows whose ladder shift exceeds
    ``trunc_tol * (1 + |E0|)`` are flagged unconverged.
    """
    if frame_policy not in ("auto_displaced", "lab"):
        raise ValueError("frame_policy must be 'auto_displaced' or 'lab'")
    grid = np.asarray(g_grid, dtype=float)
    _check_ascending(grid)

    def point(g):
        s = spec.with_coupling(float(g))
        try:
            return _splitting_point(s, frame_policy, k, cutoff_start, levels, tol_abs, tol_rel, trunc_tol)
        except NonConvergenceError:
            return (np.nan, np.nan, np.nan, np.nan, False, np.nan, "failed", np.nan, False)

    out = _map(point, grid, workers)
    names = [
        "splitting",
        "splitting_floor",
        "parity_plus",
        "parity_minus",
        "is_doublet",
        "truncation_error",
        "frame_used",
        "tunnel_overlap_log10",
        "converged",
    ]
    cols = {"g": grid}
    for idx, name in enumerate(names):
        cols[name] = [row[idx] for row in out]
    meta = {
        "operation": "splitting_curve",
        "spec": spec.to_dict(),
        "params": {
            "g_grid": grid,
            "frame_policy": frame_policy,
            "k": k,
            "cutoff_start": cutoff_start,
            "levels": levels,
            "tol_abs": tol_abs,
            "tol_rel": tol_rel,
            "trunc_tol": trunc_tol,
        },
    }
    return SweepTable("g", grid, cols, meta)


def rerun(table: SweepTable, workers: int | None = None) -> SweepTable:
    """Recompute a table from the provenance recorded in its metadata."""
    meta = table.metadata
    op = meta.get("operation")
    p = meta.get("params", {})
    if op == "sweep_displacements":
        return sweep_displacements(ModelSpec.from_dict(meta["spec"]), p["g_grid"], p["tol"])
    if op == "lambda_scan":
        return lambda_scan(
            ScaledFamily(**meta["family"]), p["N_list"], p["lambda_grid"], p["ed_max_N"], p["tol"], workers, p["ed_cutoff"]
        )
    if op == "first_order_crossing":
        return first_order_crossing(ScaledFamily(**meta["family"]), p["chi_grid"], p["bisect_tol"], workers)[0]
    if op == "splitting_curve":
        return splitting_curve(
            ModelSpec.from_dict(meta["spec"]),
            p["g_grid"],
            p["frame_policy"],
            p["k"],
            p["cutoff_start"],
            p["levels"],
            p["tol_abs"],
            p["tol_rel"],
            p["trunc_tol"],
            workers,
        )
    raise ValueError(f"table metadata does not describe a known sweep ({op!r})")

"""One function per subcommand. Each returns (table, summary lines)."""
from __future__ import annotations

import numpy as np

from .. import bogoliubov, displacement, eigensolve, phase
from ..errors import InstabilityError
from ..models import quadratic_expansion
from ..phase import SweepTable
from .config import JobSpec


def _tol_abs(n: dict):
    tol = n["tol_degeneracy_abs"]
    return None if tol == "auto" else float(tol)


def _fmt(x) -> str:
    return f"{x:.12g}"


def _solve(job: JobSpec, spec):
    n = job.numerics
    policy = n["seed_policy"]
    if policy == "asymptotic+halton":
        return displacement.solve_displacements(spec, tol=n["newton_tol"])
    if policy == "asymptotic":
        return displacement.solve_displacements(spec, tol=n["newton_tol"], extra=False)
    return displacement.solve_displacements(spec, seeds=[], tol=n["newton_tol"], extra=False)


def _stable_frame(job: JobSpec, spec):
    best = displacement.lowest_stable(_solve(job, spec))
    if best is None or not best.branch_id.strip("0"):
        raise InstabilityError("no stable displaced solution to use as frame")
    return best.alphas


def run_spectrum(job: JobSpec, workers=None):
    spec = job.model()
    n = job.numerics
    k, c, levels = n["k_lowest"], n["cutoff"], n["ladder_levels"]
    tol_abs, tol_rel = _tol_abs(n), n["tol_degeneracy_rel"]
    frame_policy = n["frame"]
    frame = None
    if frame_policy != "lab":
        if spec.n_spins or not spec.n_modes:
            raise ValueError("displaced frames need a bosonic model")
        if frame_policy == "auto_displaced":
            try:
                frame = _stable_frame(job, spec)
            except InstabilityError:
                frame = None
        else:
            frame = _stable_frame(job, spec)

    def ladder(mirror):
        if not spec.n_modes:
            return eigensolve.solve_frame(spec, [], k, None, tol_abs, tol_rel).replace(truncation_error=0.0)
        if levels < 2:
            return eigensolve.solve_frame(spec, [c] * spec.n_modes, k, frame, tol_abs, tol_rel)
        return eigensolve.convergence_ladder(spec, frame, k, c, levels, mirror, tol_abs, tol_rel)

    used = "lab" if frame is None else ("displaced" if frame_policy == "displaced" else "mirror")
    if used == "mirror":
        try:
            rep = ladder(True)
        except ValueError:
            if frame_policy == "mirror":
                raise
            frame, used = None, "lab"
            rep = ladder(False)
    else:
        rep = ladder(False)

    E = rep.eigenvalues
    cluster_id = np.zeros(E.size)
    cluster_size = np.zeros(E.size)
    parity = np.full(E.size, np.nan)
    for ci, cl in enumerate(rep.clusters):
        for pos, idx in enumerate(cl.indices):
            cluster_id[idx] = ci
            cluster_size[idx] = len(cl.indices)
            if rep.parity_diag:
                parity[idx] = rep.parity_diag[ci][pos]
    cols = {"level": np.arange(E.size, dtype=float), "energy": E, "cluster": cluster_id, "cluster_size": cluster_size, "parity": parity}
    for i in range(spec.n_modes):
        for key in (f"n_{i + 1}", f"x_{i + 1}"):
            cols[key] = [p.get(key, np.nan) for p in rep.order_params] if rep.order_params else [np.nan] * E.size
    table = SweepTable(
        "level",
        np.arange(E.size, dtype=float),
        cols,
        {"operation": "spectrum", "frame_used": used, "frame": frame, "truncation_error": rep.truncation_error},
    )
    lines = [f"frame = {used}", f"levels = {E.size}", f"clusters = {len(rep.clusters)}", f"doublets = {len(rep.doublets())}"]
    for ci, cl in enumerate(rep.clusters):
        if cl.is_doublet:
            p = ", ".join(f"{x:+.6f}" for x in rep.parity_diag[ci]) if rep.parity_diag else "n/a"
            lines.append(
                f"doublet {ci}: E = {_fmt(E[cl.indices[0]])}, splitting = {cl.max_internal_splitting:.3e}, parity = {{{p}}}"
            )
    if "splitting" in rep.extras:
        lines.append(f"sector_splitting = {rep.extras['splitting']:.3e} (floor {rep.extras['splitting_floor']:.3e})")
    lines.append(f"truncation_error = {rep.truncation_error:.3e}")
    return table, lines


def run_displace(job: JobSpec, workers=None):
    spec = job.model()
    if spec.n_spins:
        raise ValueError("displace needs a bosonic model")
    sols = _solve(job, spec)
    nm = spec.n_modes
    cols = {"solution": np.arange(len(sols), dtype=float)}
    for i in range(nm):
        cols[f"alpha_{i + 1}"] = [s.alphas[i] for s in sols]
    cols.update(
        energy=[s.energy for s in sols],
        residual_norm=[s.residual_norm for s in sols],
        stability_margin=[s.margin for s in sols],
        stable=[s.stable for s in sols],
        branch_id=[s.branch_id for s in sols],
    )
    table = SweepTable("solution", np.arange(len(sols), dtype=float), cols, {"operation": "displace"})
    lines = []
    if nm == 3:
        lines.append(f"k_root = {displacement.solve_k():.12f}")
    best = displacement.lowest_stable(sols)
    lines.append(f"solutions = {len(sols)}")
    lines.append("lowest_stable = " + ("none" if best is None else best.branch_id))
    lines.append("branch  energy  residual  margin  alphas")
    for s in sols:
        a = " ".join(f"{x:+.8g}" for x in s.alphas)
        flag = "stable" if s.stable else "unstable"
        lines.append(f"{s.branch_id}  {_fmt(s.energy)}  {s.residual_norm:.2e}  {s.margin:.6g} ({flag})  {a}")
    return table, lines


def run_bogoliubov(job: JobSpec, workers=None):
    spec = job.model()
    if spec.n_spins:
        raise ValueError("bogoliubov needs a bosonic model")
    sols = _solve(job, spec)
    best = displacement.lowest_stable(sols)
    if best is None:
        margin = min((s.margin for s in sols), default=float("nan"))
        raise InstabilityError("no dynamically stable expansion point", margin)
    res = bogoliubov.diagonalize(quadratic_expansion(spec, best.alphas))
    idx = np.arange(res.frequencies.size, dtype=float)
    table = SweepTable(
        "mode",
        idx,
        {"mode": idx, "frequency": res.frequencies},
        {"operation": "bogoliubov", "alphas": best.alphas, "ground_energy": res.ground_energy},
    )
    lines = [
        f"branch = {best.branch_id}",
        f"ground_energy = {_fmt(res.ground_energy)}",
        f"gap = {_fmt(res.gap())}",
        f"stability_margin = {_fmt(best.margin)}",
        "frequencies = " + " ".join(_fmt(x) for x in res.frequencies),
    ]
    return table, lines


def run_sweep(job: JobSpec, workers=None):
    spec = job.model()
    table = phase.sweep_displacements(spec, job.config["sweep"]["g_grid"], job.numerics["newton_tol"])
    flagged = int(np.sum(~table["stable"]))
    switches = [float(g) for g, f in zip(table.grid, table["branch_switch"]) if f]
    last = " ".join(_fmt(table[f"alpha_{i + 1}"][-1]) for i in range(spec.n_modes))
    lines = [
        f"points = {len(table)}",
        f"rows_without_stable_branch = {flagged}",
        "branch_switch_at = " + (", ".join(_fmt(g) for g in switches) if switches else "none"),
        f"final_branch = {table['branch_id'][-1]}",
        f"final_abs_alphas = {last}",
        f"max_residual = {np.nanmax(table['residual_norm']):.3e}",
    ]
    return table, lines


def run_lambda_scan(job: JobSpec, workers=None):
    n = job.numerics
    sw = job.config["sweep"]
    table = phase.lambda_scan(
        job.family(), sw["N_list"], sw["lambda_grid"], n["ed_max_N"], n["newton_tol"], workers, n["ed_cutoff"]
    )
    Nmax = max(sw["N_list"])
    lines = [f"rows = {len(table)}", f"largest N = {_fmt(Nmax)}"]
    for i in range(len(table)):
        if table["N"][i] == Nmax:
            lines.append(
                f"lambda = {_fmt(table['lambda'][i])}: alpha^2/N = {_fmt(table['alpha_sq_over_N'][i])}, "
                f"sqrtN beta/alpha = {_fmt(table['sqrtN_beta_over_alpha'][i])}, gap = {_fmt(table['gap'][i])}"
            )
    return table, lines


def run_crossing(job: JobSpec, workers=None):
    table, cr = phase.first_order_crossing(
        job.family(), job.config["sweep"]["chi_grid"], job.numerics["bisect_tol"], workers
    )
    lines = [
        f"chi_c_analytic = {cr.analytic:.12g}",
        f"chi_c_ed = {cr.ed:.12g}",
        f"photon_jump = {cr.jump:.12g}",
    ]
    return table, lines


def run_splitting(job: JobSpec, workers=None):
    n = job.numerics
    policy = n["frame"]
    if policy not in ("auto_displaced", "lab"):
        raise ValueError("splitting supports frame = \"auto_displaced\" or \"lab\"")
    table = phase.splitting_curve(
        job.model(),
        job.config["sweep"]["g_grid"],
        policy,
        n["k_lowest"],
        n["cutoff"],
        n["ladder_levels"],
        _tol_abs(n),
        n["tol_degeneracy_rel"],
        n["truncation_tol"],
        workers,
    )
    lines = []
    for i in range(len(table)):
        lines.append(
            f"g = {_fmt(table.grid[i])}: splitting = {table['splitting'][i]:.6e} "
            f"(floor {table['splitting_floor'][i]:.2e}), doublet = {'yes' if table['is_doublet'][i] else 'no'}, "
            f"parity = {{{table['parity_minus'][i]:+.6f}, {table['parity_plus'][i]:+.6f}}}, frame = {table['frame_used'][i]}"
        )
    s = table["splitting"]
    if len(table) >= 2 and s[-1] > 0:
        lines.append(f"splitting_ratio_first_last = {s[0] / s[-1]:.6g}")
    return table, lines


RUNNERS = {
    "spectrum": run_spectrum,
    "displace": run_displace,
    "bogoliubov": run_bogoliubov,
    "sweep": run_sweep,
    "lambda-scan": run_lambda_scan,
    "crossing": run_crossing,
    "splitting": run_splitting,
}

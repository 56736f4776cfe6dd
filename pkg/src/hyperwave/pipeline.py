"""Orchestration: wave evolution, heat ladders, caloric gauge and diagnostics.

``run_pipeline`` returns a plain dict (the run report) that depends only on
the config: wall-clock times are returned separately so that two runs with
the same config serialise to identical bytes whatever the worker count.
"""
from __future__ import annotations

import csv
import json
import math
import platform
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import RunConfig, config_dict
from .gauge import extract_fields, gauge_transform, random_rotation, transport_frame
from .grid import write_mapfield
from .heat import build_ladders
from .identities import (curvature_norm, curvature_residual, evolution_residuals,
                         s_torsion_residual, tension_residuals, torsion_residual)
from .reconstruct import reconstruct_A, reconstruct_map, reconstruct_psi
from .stress import (MollifiedScaling, TimeTranslation, divergence_residual, energy_identity,
                     selfsimilar_functional, stokes_check, stress_series, tl0_decomposition)
from .wave import evolve, make_initial_data

SCHEMA = "hyperwave.run/1"

# identity tested by each residual family, as named in the report
IDENTITY = {
    "torsion": "zero_torsion",
    "curvature": "curvature_identity",
    "commutator": "abelian_commutator",
    "heat_tension": "heat_tension_field",
    "wave_tension": "wave_map_equation_at_s0",
    "psi_t": "covariant_heat_equation_psi",
    "psi_x1": "covariant_heat_equation_psi",
    "psi_x2": "covariant_heat_equation_psi",
    "psi_s": "covariant_heat_equation_psi_s",
    "u_heat": "wave_tension_heat_equation",
    "psi_s_wave": "heat_tension_wave_equation",
}


@contextmanager
def _stage(name, timings):
    t0 = time.perf_counter()
    try:
        yield
    except Exception as exc:
        if not hasattr(exc, "stage"):
            exc.stage = name
        raise
    finally:
        timings[name] = timings.get(name, 0.0) + time.perf_counter() - t0


def _f(x):
    return float(x)


def _entries(residuals, grid, level, extra=None):
    out = []
    for name, r in residuals.items():
        family = name.split("_")[0] if name.split("_")[0] in ("torsion", "curvature", "commutator") else name
        for norm in ("sup", "l2"):
            out.append({"identity": IDENTITY.get(family, family), "name": name, "norm": norm,
                        "value": _f(getattr(r, norm)), "n": grid.n, "h": grid.h, "level": level,
                        **(extra or {})})
    return out


def _wave_section(cfg: RunConfig, traj):
    e = traj.step_energies
    dev = float(np.max(np.abs(e - e[0])) / e[0]) if e[0] else 0.0
    pts, tgs = zip(*(s.invariant_residuals() for s in traj.states))
    return {
        "dt": traj.dt,
        "n_steps": len(traj.step_times) - 1,
        "times": traj.step_times.tolist(),
        "energies": e.tolist(),
        "relative_drift": traj.relative_drift(),
        "max_relative_deviation": dev,
        "point_constraint": max(pts),
        "tangency": max(tgs),
    }


def _ladder_section(step, ladder):
    sg, de = ladder.sup_grad, ladder.dirichlet
    man = ladder.manifest()
    man.pop("phi_infinity")
    return {
        "step": step,
        "t": ladder.base_t,
        "K": ladder.K,
        "manifest": man,
        "max_sup_gradient_increase": _f(np.max(np.diff(sg))) if len(sg) > 1 else 0.0,
        "max_dirichlet_increase": _f(np.max(np.diff(de))) if len(de) > 1 else 0.0,
    }


def _boundary_values(fs, eps_stop):
    """Fields at the top level.  The t-components are also given with their spatial mean
    removed: on the torus the limit point of the flow moves with t, which adds an
    x-independent part to psi_t and A_t."""
    K = fs.K
    psi, A = fs.psi[K], fs.A[K]
    out = {"eps_stop": eps_stop, "bound": 10.0 * eps_stop}
    for a, nm in enumerate(("t", "x1", "x2")):
        out[f"psi_{nm}"] = _f(np.max(np.abs(psi[a])))
        out[f"A_{nm}"] = _f(np.max(np.abs(A[a])))
    out["psi_t_centred"] = _f(np.max(np.abs(psi[0] - psi[0].mean(axis=(0, 1)))))
    out["A_t_centred"] = _f(np.max(np.abs(A[0] - A[0].mean(axis=(0, 1)))))
    return out


def _gauge_invariance(frames3, fs, dt, rng):
    U = random_rotation(fs.m, rng)
    fm, fr, fp = frames3
    fs2, _ = gauge_transform(fr, U, fm, fp, dt) if fs.has_time else gauge_transform(fr, U)
    psi_gap = float(np.max(np.abs(fs.norms() - fs2.norms())))
    F1, F2 = curvature_norm(fs), curvature_norm(fs2)
    F_gap = max(float(np.max(np.abs(F1[k] - F2[k]))) for k in F1)
    F_rel = max(float(np.max(np.abs(F1[k] - F2[k])) / max(np.max(F1[k]), 1e-300)) for k in F1)
    return {"psi_norm_change": psi_gap, "curvature_norm_change": F_gap,
            "psi_norm_change_relative": psi_gap / max(float(np.max(fs.norms())), 1e-300),
            "curvature_norm_change_relative": F_rel}


def _gauge_section(cfg, step, ladders, dt, rng, wave_energy):
    minus, mid, plus = ladders if len(ladders) == 3 else (None, ladders[0], None)
    grid = mid.grid
    frames = [transport_frame(lad) for lad in ladders]
    if len(frames) == 3:
        fs = extract_fields(frames[1], frames[0], frames[2], dt)
        trio = frames
    else:
        fs = extract_fields(frames[0])
        trio = (None, frames[0], None)
    fr = trio[1]
    out = {"step": step, "t": mid.base_t, "has_time": fs.has_time}
    res = {}
    res.update(torsion_residual(fs))
    res.update(curvature_residual(fs))
    res.update(tension_residuals(fs))
    entries = _entries(res, grid, 0)
    evo = evolution_residuals(fs)
    evo["torsion_s"] = s_torsion_residual(fs)
    entries += _entries(evo, grid, -1, {"over": "interior levels"})
    out["residuals"] = entries
    out["transport"] = {
        "orthonormality_defect": fr.orthonormality_defect(),
        "constant": fr.transport_constant(),
        "max_residual": _f(np.max(fr.transport_residual)) if fs.K else 0.0,
        "within_curvature_bound": bool(np.all(fr.transport_residual <= fr.transport_bound() + 1e-12)),
    }
    out["skew_defect"] = _f(np.max(np.abs(fs.A + np.swapaxes(fs.A, -1, -2))))
    out["boundary"] = _boundary_values(fs, mid.eps_stop)
    if fs.has_time:
        energy = 0.5 * float(np.sum(fs.psi[0] ** 2)) * grid.h ** 2
        out["energy_from_psi_gap"] = abs(energy - wave_energy)
    if cfg.diagnostics.gauge_checks:
        out["gauge_invariance"] = _gauge_invariance(trio, fs, dt, rng)
    tol = cfg.diagnostics.tail_tol
    rA, rP = reconstruct_A(fs, tol), reconstruct_psi(fs, tol)
    out["reconstruction"] = [rA.summary(), rP.summary()]
    if cfg.diagnostics.reconstruct_map:
        _, _, rep = reconstruct_map((fs.psi[0], fs.A[0]), mid.target, grid.h,
                                    mid.phi[0][0, 0], fr.e[0][0, 0], mid.phi[0])
        out["map_reconstruction"] = rep
    return out


def _stress_section(cfg, traj, fields):
    energies = np.array([f.energy() for f in fields])
    out = {"energy_gap": _f(np.max(np.abs(energies - traj.energies)))}
    if len(fields) >= 3:
        div = divergence_residual(fields)
        out["divergence"] = {"sup": _f(np.max(np.abs(div))),
                             "l2": _f(np.sqrt(np.max(np.sum(div ** 2, axis=(1, 2, 3))) * traj.grid.h ** 2))}
    cones = []
    for cc in cfg.diagnostics.cones:
        cone = cc.build()
        ei = energy_identity(fields, cone)
        idx = [k for k, f in enumerate(fields) if cone.t2 - 1e-12 <= cone.tau(f.t) <= cone.t1 + 1e-12]
        tl = [tl0_decomposition(fields[k], cone) for k in idx]
        s_dt = stokes_check(fields, TimeTranslation(), cone)
        s_x = stokes_check(fields, MollifiedScaling(), cone)
        ss = selfsimilar_functional(fields, cone, cone.t2, cone.t1)
        cones.append({
            "apex_t": cone.apex_t, "apex_x": list(cone.apex_x), "t1": cone.t1, "t2": cone.t2,
            "lam": cone.lam, "eps": cone.eps,
            "E_0": ei.E_t2, "energy_identity": ei.as_dict(),
            "tl0_min": min(_f(np.min(x)) for x, _ in tl),
            "tl0_defect": max(d for _, d in tl),
            "stokes": [s_dt.as_dict(), s_x.as_dict()],
            "selfsimilar": ss.as_dict(),
        })
    out["cones"] = cones
    return out


def run_pipeline(cfg: RunConfig, threads=1, stages=("simulate", "ladder", "gauge", "diagnose")):
    """Run the requested stages; returns (report, timings)."""
    timings = {}
    H, grid = cfg.target.build(), cfg.grid.build()
    rng = np.random.default_rng(cfg.seed)
    report = {
        "schema": SCHEMA,
        "config": config_dict(cfg),
        "versions": {"hyperwave": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
        "grid": {"n": grid.n, "h": grid.h, "L": grid.L},
    }
    with _stage("simulate", timings):
        state = make_initial_data(grid, H, cfg.wave.data.build(), T=cfg.wave.T)
        dt = cfg.wave.step(grid)
        traj = evolve(state, cfg.wave.T, dt, 1)
        report["wave"] = _wave_section(cfg, traj)
    results = {"trajectory": traj}
    if "ladder" in stages or "gauge" in stages:
        report["ladders"], report["gauge"] = [], []
        for step in cfg.ladder_steps():
            with _stage("ladder", timings):
                picks = [traj.states[step]] if len(traj.states) < 3 else traj.states[step - 1:step + 2]
                ladders = build_ladders(picks, cfg.heat.build(), workers=threads)
                report["ladders"].append(_ladder_section(step, ladders[len(ladders) // 2]))
                results.setdefault("ladders", []).append(ladders)
            if "gauge" in stages:
                with _stage("gauge", timings):
                    report["gauge"].append(_gauge_section(cfg, step, ladders, dt, rng,
                                                         float(traj.step_energies[step])))
    if "diagnose" in stages:
        with _stage("diagnose", timings):
            fields = stress_series(traj)
            report["stress"] = _stress_section(cfg, traj, fields)
    return report, timings, results


# --- output ------------------------------------------------------------------

def _strict(obj):
    """Non-finite floats become the strings "inf", "-inf" and "nan" (strict JSON)."""
    if isinstance(obj, dict):
        return {k: _strict(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_strict(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def dumps_report(report) -> str:
    return json.dumps(_strict(report), indent=1, sort_keys=True, allow_nan=False)


def write_outputs(cfg: RunConfig, report, timings, results, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fmts = cfg.output.formats
    if "json" in fmts:
        (out / "report.json").write_text(dumps_report(report))
    (out / "timing.json").write_text(json.dumps(timings, indent=1, sort_keys=True))
    if "csv" in fmts:
        emit_plotdata(report, out / "plotdata")
    if "snapshot" in fmts and cfg.output.snapshot_every:
        snap = out / "snapshots"
        snap.mkdir(exist_ok=True)
        for i, st in enumerate(results["trajectory"].states):
            if i % cfg.output.snapshot_every == 0:
                write_mapfield(snap / f"state_{i:05d}.cwm", st)
    if cfg.output.ladder_dump_every:
        for step, ladders in zip(cfg.ladder_steps(), results.get("ladders", [])):
            ladders[len(ladders) // 2].dump(out / f"ladder_step{step:05d}", cfg.output.ladder_dump_every)
    return out


def _write_table(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])


def emit_plotdata(report, out_dir):
    """Columnar CSVs: energy vs t, sup-gradient vs s, residuals vs h, scaled decay per block."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    wave = report.get("wave", {})
    _write_table(out / "energy.csv", ["t", "energy"],
                 zip(wave.get("times", []), wave.get("energies", [])))
    lad_rows = []
    for lad in report.get("ladders", []):
        m = lad["manifest"]
        lad_rows += [(lad["step"], s, g, d) for s, g, d in
                     zip(m["s_levels"], m["sup_gradient"], m["dirichlet_energy"])]
    _write_table(out / "sup_gradient.csv", ["step", "s", "sup_gradient", "dirichlet_energy"], lad_rows)
    res_rows = []
    for g in report.get("gauge", []):
        res_rows += [(r["name"], r["norm"], r["h"], r["value"]) for r in g["residuals"]]
    for row in report.get("study", {}).get("rows", []):
        res_rows += [(row["quantity"], "study", h, v) for h, v in zip(row["h"], row["values"])]
    _write_table(out / "residuals.csv", ["name", "norm", "h", "value"], res_rows)
    block_rows = []
    for i, c in enumerate(report.get("stress", {}).get("cones", [])):
        block_rows += [(i, a, b, v) for a, b, v in c["selfsimilar"]["blocks"]]
    _write_table(out / "scaled_decay.csv", ["cone", "tau_a", "tau_b", "integral"], block_rows)
    return out


def read_table(path):
    """Read one of the plot-data CSVs back as a header and a list of rows."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


# --- convergence study -------------------------------------------------------

def _metrics(report):
    """Flat scalar quantities followed across a refinement study."""
    m = {"energy_relative_drift": report["wave"]["relative_drift"]}
    for g in report.get("gauge", []):
        for r in g["residuals"]:
            if r["norm"] == "sup":
                m[f"step{g['step']}:{r['name']}"] = r["value"]
        for rec in g["reconstruction"]:
            m[f"step{g['step']}:{rec['name']}_residual"] = rec["residual_sup"]
        if "map_reconstruction" in g:
            m[f"step{g['step']}:map_discrepancy"] = g["map_reconstruction"]["discrepancy"]
    st = report.get("stress", {})
    if "divergence" in st:
        m["stress_divergence"] = st["divergence"]["sup"]
    for i, c in enumerate(st.get("cones", [])):
        m[f"cone{i}:energy_identity_defect"] = abs(c["energy_identity"]["defect"])
        m[f"cone{i}:stokes_mollified_defect"] = abs(c["stokes"][1]["defect"])
        m[f"cone{i}:tl0_defect"] = c["tl0_defect"]
    return m


def _rates(values):
    out = []
    for a, b in zip(values[:-1], values[1:]):
        out.append(math.log2(a / b) if a > 0 and b > 0 else float("nan"))
    return out


def convergence_study(cfg: RunConfig, levels=2, threads=1,
                      stages=("simulate", "ladder", "gauge", "diagnose")):
    """Run at h, h/2, ..., h/2^levels (dt and ds0 following) and fit log2-ratio rates."""
    if levels < 1:
        raise ValueError("a study needs at least one refinement")
    runs = [run_pipeline(cfg.refined(i), threads, stages)[0] for i in range(levels + 1)]
    metrics = [_metrics(r) for r in runs]
    rows = []
    for key in metrics[0]:
        base = key.split(":", 1)
        vals = []
        for i, m in enumerate(metrics):
            k = key
            if base[0].startswith("step") and len(base) == 2:
                k = f"step{int(base[0][4:]) * 2 ** i}:{base[1]}"
            vals.append(m.get(k, float("nan")))
        rows.append({"quantity": key, "h": [r["grid"]["h"] for r in runs], "values": vals,
                     "rates": _rates(vals)})
    return {"grids": [r["grid"]["n"] for r in runs], "rows": rows}

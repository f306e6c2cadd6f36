"""Command-line interface: convergence / ldg / check / solve / refine.

Runs are driven by INI-style config files (``key = value`` lines under
bracketed sections); unknown keys are rejected.  Exit codes: 0 success,
1 check failure, 2 configuration error, 3 numerical failure.
"""

import argparse
import configparser
import math
import os
import sys

import numpy as np

from . import shapes
from .errors import TanFemError, ConfigError
from .experiments import (build_qtensor_case, build_vector_case,
                          detect_defects, run_convergence)
from .fem import OperatorVariant
from .fields import TensorField, QProxyField
from .geometry import analytic_geometry, check_identities, discrete_geometry
from .ldg import LdGParams, ensemble, ldg_relax
from .mesh import RefinementSpec, refine
from .meshio import export_vtk, load_mesh, write_off
from .solver import SolveConfig
from .surfaces import ellipsoid, sphere

_SCHEMA = {
    "mesh": {"path", "format", "generate", "subdivisions", "refine_levels"},
    "surface": {"kind", "radius", "axes"},
    "problem": {"kind", "omega_t", "variant", "geometry"},
    "solver": {"method", "l", "preconditioner", "rel_tol", "max_iter"},
    "study": {"levels", "omega_t_sweep", "export_vtk"},
    "ldg": {"omega", "omega_t", "tau", "t_end", "seed", "n_runs", "steady_tol"},
    "check": {"levels", "tolerance"},
    "output": {"directory"},
}

_VARIANTS = {"exact": OperatorVariant.EXACT,
             "approx_ip": OperatorVariant.APPROX_INNER_PRODUCT,
             "approx_deriv": OperatorVariant.APPROX_DERIVATIVE}


def read_config(path):
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    cfg = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        cfg[section] = {}
        for key, value in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key '{key}' in section [{section}]")
            cfg[section][key] = value
    return cfg


def _surface_from(cfg):
    s = cfg.get("surface", {})
    kind = s.get("kind", "sphere")
    if kind == "sphere":
        return sphere(float(s.get("radius", 1.0)))
    if kind == "ellipsoid":
        axes = s.get("axes", "1.0 0.5 1.5").split()
        if len(axes) != 3:
            raise ConfigError("surface axes need three values")
        return ellipsoid(*(float(a) for a in axes))
    raise ConfigError(f"unknown surface kind '{kind}'")


def _mesh_from(cfg, surface=None):
    m = cfg.get("mesh", {})
    if "path" in m:
        mesh = load_mesh(m["path"], m.get("format"))
    elif "generate" in m:
        gen = m["generate"]
        sub = int(m.get("subdivisions", 3))
        if gen == "icosphere":
            mesh = shapes.icosphere(sub, surface=surface)
        elif gen == "octahedron":
            mesh = shapes.octahedron()
        elif gen == "blob":
            mesh = shapes.blob_mesh(sub)
        else:
            raise ConfigError(f"unknown mesh generator '{gen}'")
    else:
        raise ConfigError("section [mesh] needs 'path' or 'generate'")
    levels = int(m.get("refine_levels", 0))
    if levels:
        mesh = refine(mesh, RefinementSpec(levels, projection=surface))
    return mesh


def _solve_config(cfg):
    s = cfg.get("solver", {})
    return SolveConfig(
        method=s.get("method", "bicgstab_l"),
        l=int(s.get("l", 2)),
        preconditioner=s.get("preconditioner", "jacobi"),
        rel_tol=float(s.get("rel_tol", 1e-10)),
        max_iter=int(s.get("max_iter", 20000)),
    )


def _out_dir(cfg):
    out = cfg.get("output", {}).get("directory", "out")
    os.makedirs(out, exist_ok=True)
    return out


def cmd_convergence(cfg, threads=1):
    surface = _surface_from(cfg)
    prob = cfg.get("problem", {})
    kind = prob.get("kind", "vector")
    if kind == "vector":
        case = build_vector_case(surface)
    elif kind == "qtensor":
        case = build_qtensor_case(surface)
    else:
        raise ConfigError(f"unknown problem kind '{kind}'")
    variant = _VARIANTS.get(prob.get("variant", "exact"))
    if variant is None:
        raise ConfigError(f"unknown variant '{prob.get('variant')}'")
    geometry_source = prob.get("geometry", "analytic")
    if geometry_source not in ("analytic", "discrete"):
        raise ConfigError(f"unknown geometry source '{geometry_source}'")
    study = cfg.get("study", {})
    levels = int(study.get("levels", 3))
    sweep = [float(w) for w in study.get("omega_t_sweep", "").split()] or None
    mesh0 = _mesh_from(cfg, surface)
    out = _out_dir(cfg)

    report = run_convergence(
        case, mesh0, levels, omega_t=float(prob.get("omega_t", 1000.0)),
        geometry_source=geometry_source, variant=variant,
        solve_cfg=_solve_config(cfg), omega_t_sweep=sweep, out_dir=out,
        export_fields=study.get("export_vtk", "no") in ("yes", "true", "1"))
    report.to_csv(os.path.join(out, "convergence.csv"))
    if report.sweep:
        report.sweep_to_csv(os.path.join(out, "penalty_sweep.csv"))
    for row in report.rows:
        print(f"level {row.level}: DOFs={row.dofs} e_l2={row.error_l2:.6e} "
              f"eoc={'' if math.isnan(row.eoc) else f'{row.eoc:.3f}'}")
    print(f"fitted EOC {report.eoc_fitted:.4f} (R^2 {report.r_squared:.4f}) "
          f"clean={report.clean}")
    return 0 if report.clean else 3


def cmd_ldg(cfg, threads=1):
    surface = _surface_from(cfg) if "surface" in cfg else None
    mesh = _mesh_from(cfg, surface)
    if not mesh.is_closed:
        raise ConfigError("closed mesh required")
    g = (analytic_geometry(surface, mesh) if surface is not None
         else discrete_geometry(mesh))
    ldg_cfg = cfg.get("ldg", {})
    params = LdGParams(
        omega=float(ldg_cfg.get("omega", 100.0)),
        omega_t=float(ldg_cfg.get("omega_t", 1000.0)),
        tau=float(ldg_cfg.get("tau", 0.05)),
        t_end=float(ldg_cfg.get("t_end", 50.0)),
        seed=int(ldg_cfg.get("seed", 0)),
        steady_tol=float(ldg_cfg.get("steady_tol", 1e-6)),
    )
    n_runs = int(ldg_cfg.get("n_runs", 1))
    out = _out_dir(cfg)
    histogram, runs, best = ensemble(mesh, g, params, n_runs, threads=threads)

    lines = ["seed,converged,steps,energy,n_positive,n_negative,total_charge"]
    for rec in runs:
        lines.append(
            f"{rec['seed']},{int(rec['converged'])},{rec['steps']},"
            f"{rec['energy']:.12e},{rec.get('n_positive', '')},"
            f"{rec.get('n_negative', '')},{rec.get('total_charge', '')}")
    with open(os.path.join(out, "ldg_runs.csv"), "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")
    lines = ["n_positive,n_negative,count"]
    for (pos, neg), count in sorted(histogram.items()):
        lines.append(f"{pos},{neg},{count}")
    with open(os.path.join(out, "ldg_histogram.csv"), "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")
    if best is not None:
        qf, trace = best
        export_vtk(mesh, {"q": qf}, os.path.join(out, "ldg_best.vtk"))
        tl = ["time,energy"]
        tl += [f"{t:.12e},{e:.12e}" for t, e in zip(trace.times, trace.energies)]
        with open(os.path.join(out, "ldg_best_energy.csv"), "w",
                  encoding="ascii") as fh:
            fh.write("\n".join(tl) + "\n")
    n_ok = sum(1 for rec in runs if rec["converged"])
    print(f"{n_ok}/{n_runs} runs reached steady state; "
          f"histogram {dict(sorted(histogram.items()))}")
    return 0 if n_ok == n_runs else 3


def cmd_check(cfg, threads=1):
    surface = _surface_from(cfg)
    chk = cfg.get("check", {})
    mesh = _mesh_from(cfg, surface) if "mesh" in cfg else shapes.icosphere(
        3, surface=surface)
    tol_analytic = float(chk.get("tolerance", 1e-10))

    failures = []
    g = analytic_geometry(surface, mesh)
    rep = check_identities(g, tol_analytic)
    print(f"analytic identities: max residual {rep.max_residual():.3e} "
          f"(tol {tol_analytic:.1e})")
    if not rep.passed:
        failures.append("analytic identities")

    gd = discrete_geometry(mesh)
    tol_disc = 10.0 * mesh.mean_edge_length
    repd = check_identities(gd, tol_disc)
    print(f"discrete identities: max residual {repd.max_residual():.3e} "
          f"(tol {tol_disc:.1e})")
    if not repd.passed:
        failures.append("discrete identities")

    from .diffops import cov_grad, rot_scalar, divergence, with_normal_part
    case = build_vector_case(surface)
    grad = cov_grad(case.t_star, g)
    tang = np.abs(np.einsum("vi,vij->vj", g.vertex_normals, grad.values)).max()
    print(f"covariant gradient tangentiality: {tang:.3e}")
    if tang > 1e-11:
        failures.append("tangentiality")

    shifted = with_normal_part(case.t_star, lambda x, y, z: x * y - z, surface)
    diff = np.abs(cov_grad(shifted, g).values - grad.values).max()
    print(f"extension invariance: {diff:.3e}")
    if diff > 1e-11:
        failures.append("extension invariance")

    rot = rot_scalar(lambda x, y, z: x * y * z, surface)
    div = divergence(rot, g)
    dmax = np.abs(div.values).max()
    print(f"div(Rot s) residual: {dmax:.3e}")
    if dmax > 1e-10:
        failures.append("div o Rot")

    if failures:
        print("FAILED: " + ", ".join(failures))
        return 1
    print("all checks passed")
    return 0


def cmd_solve(cfg, threads=1):
    surface = _surface_from(cfg)
    prob = cfg.get("problem", {})
    kind = prob.get("kind", "vector")
    case = build_vector_case(surface) if kind == "vector" else \
        build_qtensor_case(surface)
    mesh = _mesh_from(cfg, surface)
    g = (analytic_geometry(surface, mesh)
         if prob.get("geometry", "analytic") == "analytic"
         else discrete_geometry(mesh))
    if g.surface is None:
        g.surface = surface
        g.vertex_points = surface.project(mesh.vertices)
    variant = _VARIANTS.get(prob.get("variant", "exact"))
    from .experiments import _solve_case, error_l2
    sol, stats = _solve_case(case, mesh, g, float(prob.get("omega_t", 1000.0)),
                             variant, _solve_config(cfg))
    err = error_l2(sol, case.exact(g), mesh)
    out = _out_dir(cfg)
    export_vtk(mesh, {"solution": sol}, os.path.join(out, "solution.vtk"))
    print(f"solved: DOFs={(3 if kind == 'vector' else 5) * mesh.n_vertices} "
          f"iterations={stats.iterations} residual={stats.residual:.3e} "
          f"error_l2={err:.6e}")
    return 0 if stats.converged else 3


def cmd_refine(cfg, threads=1):
    surface = _surface_from(cfg) if "surface" in cfg else None
    mesh = _mesh_from(cfg, surface)
    out = _out_dir(cfg)
    path = os.path.join(out, "refined.off")
    write_off(mesh, path)
    print(f"wrote {path}: V={mesh.n_vertices} F={mesh.n_triangles} "
          f"chi={mesh.euler_characteristic()}")
    return 0


_COMMANDS = {"convergence": cmd_convergence, "ldg": cmd_ldg,
             "check": cmd_check, "solve": cmd_solve, "refine": cmd_refine}


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="tanfem",
        description="Componentwise surface FEM for tangential tensor PDEs")
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("config", help="INI-style run configuration")
    parser.add_argument("--threads", type=int,
                        default=int(os.environ.get("TANFEM_THREADS", "1")),
                        help="worker cap for ensemble runs (TANFEM_THREADS)")
    args = parser.parse_args(argv)
    try:
        cfg = read_config(args.config)
        return _COMMANDS[args.command](cfg, threads=max(1, args.threads))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except TanFemError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

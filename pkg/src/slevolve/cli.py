"""Command-line front end: evolve trajectories, tabulate monodromy angles,
search for periodic families, emit meshes and verify them.

Configuration comes from flags or a JSON file (flags win); every JSON
output embeds the resolved configuration and the library version.  Exit
codes: 0 success, 2 invalid input, 3 numerical failure.  Long scans report
progress on stderr only.  The SLEVOLVE_OUTDIR environment variable prefixes
relative output paths.
"""

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from . import affine as affine_mod
from . import centred, evodata, evolver, meshverify, threefold
from .errors import NumericalError, ValidationError


def _outpath(path: str) -> str:
    if path is None or os.path.isabs(path):
        return path
    base = os.environ.get("SLEVOLVE_OUTDIR", "")
    return os.path.join(base, path) if base else path


def _write_json(path: str, payload: dict, config: dict) -> None:
    doc = dict(payload)
    doc["config"] = config
    doc["version"] = __version__
    with open(_outpath(path), "w", newline="\n") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _parse_floats(text: str) -> tuple:
    return tuple(float(x) for x in text.split(","))


def _parse_complexes(text: str) -> np.ndarray:
    return np.asarray([complex(x) for x in text.split(",")])


def _progress(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


def _merge_config(ns: argparse.Namespace) -> dict:
    """Apply the JSON config file under the flags, then freeze the result."""
    if getattr(ns, "config", None):
        with open(ns.config) as fh:
            file_cfg = json.load(fh)
        for key, val in file_cfg.items():
            if getattr(ns, key, None) is None:
                setattr(ns, key, val)
    cfg = {k: v for k, v in vars(ns).items()
           if k not in ("func", "config") and v is not None}
    return cfg


def _alphas_for(ns) -> tuple:
    if getattr(ns, "family", None) == "sym":
        return centred.symmetric_alphas(ns.m, ns.a)
    if ns.alphas is None:
        raise ValidationError("--alphas is required (or --family sym)")
    return _parse_floats(ns.alphas)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_evolve(ns) -> int:
    cfg = _merge_config(ns)
    if ns.data:
        with open(ns.data) as fh:
            data = evodata.evolution_data_from_dict(json.load(fh))
        ns.m = data.m
    else:
        data = evodata.example_quadric(ns.m, ns.a, ns.c)
    if ns.w0:
        w0 = _parse_complexes(ns.w0)
    else:
        rng = np.random.default_rng(ns.seed)
        w0 = rng.normal(size=ns.m) + 1j * rng.normal(size=ns.m)
    phi0 = evolver.EvolMap.diagonal(w0)
    diag = evolver.membership_cp(phi0, data, seed=ns.seed)
    traj = evolver.integrate(phi0, data, ns.t_end, rtol=ns.rtol,
                             atol=ns.atol, seed=ns.seed)
    if ns.out:
        evolver.trajectory_to_csv(traj, _outpath(ns.out))
    if ns.summary:
        _write_json(ns.summary, {
            "initial_membership": {
                "max_omega_residual": diag.max_omega_residual,
                "min_singular_ratio": diag.min_singular_ratio},
            "escaped": traj.escaped,
            "escape_time": traj.escape_time,
            "flagged_checkpoints": traj.flagged,
            "max_omega_residual": float(np.max(traj.omega_residuals)),
            "t_final": float(traj.times[-1]),
        }, cfg)
    _progress(f"evolved to t={traj.times[-1]:.6g}"
              + (" (escaped)" if traj.escaped else ""))
    return 0


def cmd_betas(ns) -> int:
    cfg = _merge_config(ns)
    alphas = _alphas_for(ns)
    params = centred.CentredParams(ns.m, ns.a, alphas, ns.A, c=ns.c)
    result = centred.betas(params, tol=ns.quad_tol)
    payload = result.to_dict()
    payload["case"] = centred.classify_case(params)
    if ns.out:
        _write_json(ns.out, payload, cfg)
    else:
        print(json.dumps(payload, indent=1, sort_keys=True))
    return 0


def cmd_limits(ns) -> int:
    cfg = _merge_config(ns)
    alphas = _alphas_for(ns)
    lim = centred.beta_limits(alphas, ns.a)
    payload = {
        "k": lim.k, "l": lim.l,
        "small_A_limit": list(lim.small_A),
        "large_A_limit": list(lim.large_A),
        "sum_squares_large_A": float(np.sum(np.asarray(lim.large_A) ** 2)),
    }
    if ns.out:
        _write_json(ns.out, payload, cfg)
    else:
        print(json.dumps(payload, indent=1, sort_keys=True))
    return 0


def cmd_search(ns) -> int:
    cfg = _merge_config(ns)
    alphas = _alphas_for(ns)
    _progress(f"searching alphas={alphas} with b_max={ns.bmax}")
    sols = centred.periodic_search(alphas, ns.a, ns.bmax, tol=ns.tol,
                                   n_grid=ns.grid, c=ns.c)
    out_sols = []
    for sol in sols:
        entry = sol.to_dict()
        if ns.verify:
            check = centred.verify_periodic(sol)
            entry["verification"] = {
                "max_defect": check["max_defect"],
                "period_T": check["period_T"]}
        out_sols.append(entry)
        _progress(f"found a={entry['int_angles']} b={entry['denom']} "
                  f"A={entry['A']:.9g}")
    if ns.scan_csv:
        _write_scan_csv(ns, alphas, cfg)
    payload = {"solutions": out_sols, "count": len(out_sols)}
    if ns.out:
        _write_json(ns.out, payload, cfg)
    else:
        print(json.dumps(payload, indent=1, sort_keys=True))
    return 0


def _write_scan_csv(ns, alphas, cfg) -> None:
    params0 = centred.CentredParams(ns.m, ns.a, alphas, 0.5, c=ns.c)
    A_grid = np.linspace(0.02, 0.98, ns.grid) * params0.A_max

    def one(A):
        res = centred.betas(centred.CentredParams(ns.m, ns.a, alphas,
                                                  float(A), c=ns.c))
        return res

    with ThreadPoolExecutor(max_workers=max(1, ns.jobs)) as ex:
        rows = list(ex.map(one, A_grid))
    cols = ([f"alpha{j + 1}" for j in range(ns.m)] + ["A"]
            + [f"beta{j + 1}" for j in range(ns.m)] + ["T", "quad_error"])
    lines = [",".join(cols)]
    for A, res in zip(A_grid, rows):
        vals = list(alphas) + [A] + list(res.betas) + [res.period_T,
                                                       res.quadrature_error]
        lines.append(",".join(f"{v:.17g}" for v in vals))
    with open(_outpath(ns.scan_csv), "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def cmd_mesh(ns) -> int:
    cfg = _merge_config(ns)
    nt, nq = (int(x) for x in ns.resolution.split("x"))
    if ns.kind == "centred":
        alphas = _alphas_for(ns)
        params = centred.CentredParams(ns.m, ns.a, alphas, ns.A, c=ns.c)
        mesh = meshverify.mesh_centred(params, ns.c, (0.0, ns.t_end),
                                       resolution=(nt, nq))
    elif ns.kind == "affine":
        alphas = _alphas_for(ns)
        params = affine_mod.AffineParams(ns.m, ns.a, alphas, ns.A)
        mesh = meshverify.mesh_affine(params, (0.0, ns.t_end),
                                      resolution=(nt, nq))
    elif ns.kind == "link":
        alphas = _alphas_for(ns)
        mesh = meshverify.mesh_link(alphas, ns.A, resolution=(nt, nq))
    else:
        raise ValidationError(f"unknown mesh kind {ns.kind!r}")
    if ns.with_residuals:
        mesh = meshverify.attach_residuals(mesh, jobs=max(1, ns.jobs))
    projection = None
    if ns.projection:
        projection = ("pca" if ns.projection == "pca"
                      else tuple(int(i) for i in ns.projection.split(",")))
    meshverify.export(mesh, ns.format, _outpath(ns.out), projection=projection)
    _progress(f"wrote {ns.out} ({len(mesh.vertices)} vertices)")
    return 0


def cmd_verify(ns) -> int:
    cfg = _merge_config(ns)
    mesh = meshverify.import_json(_outpath(ns.mesh))
    meshverify.rebuild_family(mesh)
    report = meshverify.mesh_residual_report(mesh)
    payload = report.to_dict()
    print(f"max residual {report.max_residual():.3e} over "
          f"{report.sample_count} samples ({report.skipped} skipped)")
    if ns.out:
        _write_json(ns.out, payload, cfg)
    if ns.threshold is not None and report.max_residual() > ns.threshold:
        print(f"FAIL: residual exceeds threshold {ns.threshold:.3e}",
              file=sys.stderr)
        return 3
    return 0


def cmd_crosssection(ns) -> int:
    cfg = _merge_config(ns)
    alphas = _alphas_for(ns)
    section = threefold.cross_section(alphas)
    s = np.linspace(0.0, section.period, ns.n)
    X = section.x(s)
    r1, r2 = section.constraint_residuals(s)
    if ns.out:
        lines = ["s,x1,x2,x3"]
        for i in range(ns.n):
            lines.append(",".join(f"{v:.17g}" for v in
                                  (s[i], X[i, 0], X[i, 1], X[i, 2])))
        with open(_outpath(ns.out), "w", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
    payload = {"mu": section.mu, "nu": section.nu,
               "swapped": section.swapped, "period": section.period,
               "max_constraint_residuals": [r1, r2]}
    if ns.summary:
        _write_json(ns.summary, payload, cfg)
    else:
        print(json.dumps(payload, indent=1, sort_keys=True))
    return 0


def cmd_affine(ns) -> int:
    cfg = _merge_config(ns)
    alphas = _alphas_for(ns) if (ns.alphas or ns.family) else None
    if alphas is None:
        raise ValidationError("--alphas required")
    params = affine_mod.AffineParams(ns.m, ns.a, alphas, ns.A)
    w0, beta0 = affine_mod.affine_initial(params)
    path = affine_mod.integrate_affine(w0, beta0, ns.a, ns.t_end)
    t_grid = np.linspace(0.0, path.t_span[1], ns.n)
    W = path.w(t_grid)
    B = path.beta(t_grid)
    u_t = np.abs(W[:, 0]) ** 2 - alphas[0]
    closed = np.array([affine_mod.beta_closed(u_t[i], 0.0, t_grid[i],
                                              params.A, beta0)
                       for i in range(t_grid.size)])
    defect = float(np.abs(B - closed).max())
    if ns.out:
        cols = (["t"] + [f"Rew{j + 1},Imw{j + 1}" for j in range(ns.m - 1)]
                + ["Rebeta", "Imbeta"])
        lines = [",".join(",".join(cols).split(","))]
        for i, t in enumerate(t_grid):
            vals = [t]
            for j in range(ns.m - 1):
                vals += [W[i, j].real, W[i, j].imag]
            vals += [B[i].real, B[i].imag]
            lines.append(",".join(f"{v:.17g}" for v in vals))
        with open(_outpath(ns.out), "w", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
    payload = {"case": affine_mod.classify_affine_case(params),
               "note": affine_mod.case_span_note(params),
               "escaped": path.escaped,
               "escape_time": path.escape_time,
               "beta_closed_form_defect": defect}
    if ns.summary:
        _write_json(ns.summary, payload, cfg)
    else:
        print(json.dumps(payload, indent=1, sort_keys=True))
    return 0


def cmd_report(ns) -> int:
    cfg = _merge_config(ns)
    alphas = _alphas_for(ns)
    params = centred.CentredParams(ns.m, ns.a, alphas, ns.A, c=ns.c)
    case = centred.classify_case(params)
    payload = {"case": case, "A_max": params.A_max,
               "normalization_residual": params.normalization_residual()}
    if case == "d":
        res = centred.betas(params)
        payload["betas"] = res.to_dict()
        lim = centred.beta_limits(alphas, ns.a)
        payload["limits"] = {"k": lim.k, "l": lim.l,
                             "small_A": list(lim.small_A),
                             "large_A": list(lim.large_A)}
        # conservation over several periods via direct integration
        T = res.period_T
        w0 = centred.w_initial(params)
        path = centred.integrate_w(w0, ns.a, 5 * T)
        grid = np.linspace(0.0, 5 * T, 2000)
        W = path.w(grid)
        al = params.alpha_array
        u = params.signs * (np.abs(W) ** 2 - al)
        theta = np.unwrap(np.angle(W), axis=0).sum(axis=1)
        drift = np.abs(np.sqrt(np.maximum(params.Q(u.mean(axis=1)), 0.0))
                       * np.sin(theta) - params.A)
        payload["conservation_drift"] = float(drift.max())
    if ns.out:
        _write_json(ns.out, payload, cfg)
    else:
        print(json.dumps(payload, indent=1, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="slevolve",
        description="construct, search and verify evolved-quadric "
                    "special Lagrangian families")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, m_default=None):
        sp.add_argument("--config", help="JSON config file (flags override)")
        sp.add_argument("--m", type=int, default=m_default)
        sp.add_argument("--a", type=int, default=1)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--jobs", type=int, default=1)

    sp = sub.add_parser("evolve", help="integrate a diagonal start under the "
                        "general engine on quadric data")
    common(sp, 3)
    sp.add_argument("--c", type=float, default=1.0)
    sp.add_argument("--data", help="evolution-data JSON (sl-evodata-1)")
    sp.add_argument("--w0", help="comma-separated complex initial diagonal")
    sp.add_argument("--t-end", dest="t_end", type=float, default=5.0)
    sp.add_argument("--rtol", type=float, default=1e-10)
    sp.add_argument("--atol", type=float, default=1e-12)
    sp.add_argument("--out", help="trajectory CSV path")
    sp.add_argument("--summary", help="summary JSON path")
    sp.set_defaults(func=cmd_evolve)

    sp = sub.add_parser("betas", help="monodromy angles by quadrature")
    common(sp, 3)
    sp.add_argument("--alphas")
    sp.add_argument("--family", choices=["sym"])
    sp.add_argument("--A", type=float, required=True)
    sp.add_argument("--c", type=float, default=0.0)
    sp.add_argument("--quad-tol", dest="quad_tol", type=float, default=3e-12)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_betas)

    sp = sub.add_parser("limits", help="endpoint limits of the monodromy angles")
    common(sp, 3)
    sp.add_argument("--alphas")
    sp.add_argument("--family", choices=["sym"])
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_limits)

    sp = sub.add_parser("search", help="scan for closed (periodic) families")
    common(sp, 3)
    sp.add_argument("--alphas")
    sp.add_argument("--family", choices=["sym"])
    sp.add_argument("--bmax", type=int, default=8)
    sp.add_argument("--tol", type=float, default=1e-8)
    sp.add_argument("--grid", type=int, default=96)
    sp.add_argument("--c", type=float, default=0.0)
    sp.add_argument("--verify", action="store_true", default=None)
    sp.add_argument("--scan-csv", dest="scan_csv")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_search)

    sp = sub.add_parser("mesh", help="emit a mesh of a constructed family")
    common(sp, 3)
    sp.add_argument("--kind", choices=["centred", "affine", "link"],
                    default="centred")
    sp.add_argument("--alphas")
    sp.add_argument("--family", choices=["sym"])
    sp.add_argument("--A", type=float, default=1.0)
    sp.add_argument("--c", type=float, default=0.0)
    sp.add_argument("--t-end", dest="t_end", type=float, default=2.0)
    sp.add_argument("--resolution", default="33x64")
    sp.add_argument("--format", choices=["obj", "ply", "csv", "json"],
                    default="json")
    sp.add_argument("--projection",
                    help="'pca' or three comma-separated coordinate indices")
    sp.add_argument("--with-residuals", dest="with_residuals",
                    action="store_true", default=None)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_mesh)

    sp = sub.add_parser("verify", help="verify the conditions on a mesh JSON")
    common(sp)
    sp.add_argument("--mesh", required=True)
    sp.add_argument("--threshold", type=float)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("crosssection", help="cone link circle in closed form")
    common(sp, 3)
    sp.add_argument("--alphas")
    sp.add_argument("--family", choices=["sym"])
    sp.add_argument("--n", type=int, default=257)
    sp.add_argument("--out", help="CSV path")
    sp.add_argument("--summary", help="JSON path")
    sp.set_defaults(func=cmd_crosssection)

    sp = sub.add_parser("affine", help="integrate the translated family")
    common(sp, 3)
    sp.add_argument("--alphas")
    sp.add_argument("--family", choices=["sym"])
    sp.add_argument("--A", type=float, required=True)
    sp.add_argument("--t-end", dest="t_end", type=float, default=6.0)
    sp.add_argument("--n", type=int, default=257)
    sp.add_argument("--out", help="CSV path")
    sp.add_argument("--summary", help="JSON path")
    sp.set_defaults(func=cmd_affine)

    sp = sub.add_parser("report", help="bundle of diagnostics for one "
                        "parameter point")
    common(sp, 3)
    sp.add_argument("--alphas")
    sp.add_argument("--family", choices=["sym"])
    sp.add_argument("--A", type=float, required=True)
    sp.add_argument("--c", type=float, default=0.0)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_report)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        return ns.func(ns)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

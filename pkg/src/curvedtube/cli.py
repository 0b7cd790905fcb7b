"""Command line: ``curvedtube run <config>`` and ``curvedtube list-examples``.

Exit status: 0 when every requested task completed (scientific negatives
such as "not-certified" are results, not failures), 2 for configuration
errors, 3 when the tube violates ``a ||kappa_1||_inf < 1``, 4 when the
eigensolver fails.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import os
import sys

import numpy as np

from . import certificate as certmod
from . import operator as opmod
from . import spectra
from . import tube as tubemod
from .config import ConfigError, list_examples, load_config
from .errors import AssumptionViolation, SolverError

SCHEMA_VERSION = "1.0"
EXIT_OK, EXIT_CONFIG, EXIT_ASSUMPTION, EXIT_SOLVER = 0, 2, 3, 4


class Checks:
    """Collects machine-readable ``PASS``/``FAIL`` lines."""

    def __init__(self):
        self.items = []

    def add(self, name, ok, detail=""):
        self.items.append({"name": name, "status": "PASS" if ok else "FAIL", "detail": detail})

    def lines(self):
        return [f"{c['status']} {c['name']}" + (f": {c['detail']}" if c["detail"] else "")
                for c in self.items]


def _clean(obj):
    """Make numpy scalars/arrays JSON-serializable."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_clean(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def build_geometry(cfg):
    """Profile, section and tube for a config; raises AssumptionViolation before any assembly."""
    profile, curve = cfg.build_profile()
    section = cfg.build_section()
    tubemod.validity_bounds(section.radius, profile.sup_norm)
    L = cfg.grid.get("L")
    span = float(L) if L is not None else 20.0
    tube = tubemod.tube_from_profile(profile, section, (-span, span),
                                     initial=cfg.initial_rotation(), s0=cfg.frame.get("s0", 0.0),
                                     curve=curve)
    return tube


def _spectrum_task(cfg, tube, L, spacings, out, args, checks, report):
    k, tol, seed = cfg.solver["k"], cfg.solver["tol"], cfg.solver["seed"]
    ratio = cfg.grid["du"] / cfg.grid["ds"] if "du" in cfg.grid else None
    if len(spacings) > 1:
        study = spectra.refinement_study(tube, L, spacings, k, "form", seed, tol, du_ratio=ratio)
        rep = study.finest
        report["refinement"] = study.to_dict()
    else:
        rep, _ = spectra.solve_tube(tube, L, spacings[0], k, "form", seed, tol,
                                    None if ratio is None else ratio * spacings[0])
    du = None if ratio is None else ratio * spacings[-1]
    grid = opmod.make_grid(tube.section, L, spacings[-1], du)
    op = spectra.assemble(tube, grid, "form")
    report["spectrum"] = rep.to_dict()
    report["spectrum"]["discrete_threshold"] = spectra.discrete_threshold(grid)
    loc = [spectra.mass_outside(rep, grid, op.M, 0.5, i) for i in range(rep.k)]
    report["spectrum"]["mass_outside_half"] = loc
    ortho = spectra.orthogonality_defect(rep, op.M)
    report["spectrum"]["orthogonality_defect"] = ortho
    with open(os.path.join(out, "eigenvalues.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "lambda", "residual", "below_threshold"])
        for i, (lam, r, b) in enumerate(zip(rep.eigenvalues, rep.residuals, rep.below_threshold), 1):
            w.writerow([i, f"{lam:.17g}", f"{r:.6e}", int(b)])
    checks.add("spectrum.sorted", bool(np.all(np.diff(rep.eigenvalues) >= 0)))
    checks.add("spectrum.residuals", not rep.solver.get("partial", False),
               f"max residual {rep.residuals.max():.2e}")
    checks.add("spectrum.orthogonality", ortho <= 1e-8, f"{ortho:.2e}")
    checks.add("spectrum.positivity", bool(rep.eigenvalues[0] >= -1e-10 * abs(rep.eigenvalues[-1])))
    for i in np.nonzero(rep.below_threshold)[0]:
        checks.add(f"spectrum.localization[{i + 1}]", loc[i] <= 1e-3,
                   f"mass fraction in |s| > L/2 = {loc[i]:.2e}")
    if args.emit_slices:
        for i in range(rep.k):
            line, plane = spectra.eigenvector_slices(rep, grid, i)
            m = plane.shape[1] - 1
            np.savetxt(os.path.join(out, f"slice_line_{i + 1}.csv"), line, delimiter=",",
                       header="s,psi", comments="", fmt="%.12g")
            np.savetxt(os.path.join(out, f"slice_plane_{i + 1}.csv"), plane, delimiter=",",
                       header=",".join([f"u{j + 1}" for j in range(m)] + ["psi"]), comments="", fmt="%.12g")
    if args.emit_matrix:
        op.write_matrix_market(os.path.join(out, "operator"))
    return rep


def _scan_task(cfg, tube, L, spacings, checks, report):
    Ls = cfg.scan.get("L", [L / 2, L])
    scan = spectra.threshold_scan(tube, Ls, spacings if len(spacings) > 1 else spacings[0],
                                  cfg.solver["k"], "form", cfg.solver["seed"], cfg.solver["tol"])
    report["threshold_scan"] = scan.to_dict()
    checks.add("threshold-scan.completed", True, scan.verdict)


def _certificate_task(cfg, tube, out, checks, report):
    schedule = cfg.certificate.get("schedule", list(certmod.DEFAULT_SCHEDULE))
    res = certmod.certify(tube, schedule)
    d = res.to_dict()
    d["schedule"] = list(schedule)
    report["certificate"] = d
    _write_json(os.path.join(out, "certificate.json"), d)
    print(res.table())
    checks.add("certificate.vanishing-term", abs(res.vanishing_term) <= 1e-10 * max(abs(res.q0), 1e-300),
               f"{res.vanishing_term:.2e}")
    checks.add("certificate.q0-bound", all(r["q0"] <= 2.0 / (r["n"] + 1) / tube.c_minus for r in res.trace))
    return res


def _compare_task(cfg, tube, L, spacings, checks, report):
    k, tol, seed = cfg.solver["k"], cfg.solver["tol"], cfg.solver["seed"]
    if len(spacings) < 2:
        spacings = [spacings[0], spacings[0] / 2]
    a = spectra.refinement_study(tube, L, spacings, k, "form", seed, tol)
    b = spectra.refinement_study(tube, L, spacings, k, "schroedinger", seed, tol)
    diff = np.abs(a.extrapolated - b.extrapolated)
    bound = a.error + b.error
    report["schroedinger_compare"] = {"form": a.to_dict(), "schroedinger": b.to_dict(),
                                      "difference": diff, "error_bound": bound,
                                      "agree": bool(np.all(diff <= bound))}
    checks.add("schroedinger-compare.agreement", bool(np.all(diff <= bound)),
               f"max |diff| {diff.max():.2e} vs bound {bound.min():.2e}")


def run(cfg, out=None, seed=None, refine=None, emit_matrix=False, emit_slices=False, stream=None):
    """Execute a parsed config; returns ``(exit_status, report_dict)``."""
    stream = stream or sys.stdout
    args = argparse.Namespace(emit_matrix=emit_matrix, emit_slices=emit_slices)
    if seed is not None:
        cfg.solver["seed"] = int(seed)
    out = out or cfg.output
    os.makedirs(out, exist_ok=True)
    checks = Checks()
    report = {"schema_version": SCHEMA_VERSION, "name": cfg.name, "config": cfg.to_dict(),
              "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")}
    try:
        tube = build_geometry(cfg)
    except AssumptionViolation as exc:
        print(f"assumption violated: a*||kappa_1||_inf = {exc.product:g} >= 1 "
              f"(a = {exc.a:g}, ||kappa_1||_inf = {exc.kappa_sup:g})", file=sys.stderr)
        return EXIT_ASSUMPTION, None
    report["geometry"] = {"profile": tube.profile.summary(), "section": tube.section.summary(),
                          "tube": tube.summary()}
    if "L" in cfg.grid:
        L = float(cfg.grid["L"])
        report["geometry"]["truncation"] = {"rule": "config", "L": L}
    else:
        L, info = spectra.default_truncation(tube)
        report["geometry"]["truncation"] = info
    tube = spectra.ensure_frame(tube, L)
    if tube.curve is not None:
        report["geometry"]["overlap"] = tubemod.overlap_check(tube, (-L, L), 0.25 * tube.a)
    spacings = cfg.spacings(refine)
    rep = res = None
    try:
        for task in [t for t in ("spectrum", "threshold-scan", "certificate", "schroedinger-compare")
                     if t in cfg.tasks]:
            if task == "spectrum":
                rep = _spectrum_task(cfg, tube, L, spacings, out, args, checks, report)
            elif task == "threshold-scan":
                _scan_task(cfg, tube, L, spacings, checks, report)
            elif task == "certificate":
                res = _certificate_task(cfg, tube, out, checks, report)
            elif task == "schroedinger-compare":
                _compare_task(cfg, tube, L, spacings, checks, report)
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER, None
    if rep is not None and res is not None:
        agree = (res.verdict != "certified") or rep.below_count >= 1
        report["cross_reference"] = {"certificate_verdict": res.verdict,
                                     "below_threshold_count": rep.below_count, "consistent": agree}
        checks.add("cross-reference.certificate-vs-spectrum", agree,
                   f"{res.verdict}, {rep.below_count} eigenvalue(s) below threshold")
    report["checks"] = checks.items
    _write_json(os.path.join(out, "report.json"), report)
    for line in checks.lines():
        print(line, file=stream)
    return EXIT_OK, report


def _parser():
    p = argparse.ArgumentParser(prog="curvedtube",
                                description="Bound states of the Dirichlet Laplacian in curved tubes.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a TOML config")
    r.add_argument("config")
    r.add_argument("--out", default=None, help="output directory (default from config)")
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--refine", type=int, default=None, metavar="LEVELS",
                   help="number of grid levels (each halves the spacing)")
    r.add_argument("--emit-matrix", action="store_true", help="Matrix Market dump of A and M")
    r.add_argument("--emit-slices", action="store_true", help="eigenvector slice CSVs")
    sub.add_parser("list-examples", help="list shipped example configs")
    return p


def main(argv=None):
    args = _parser().parse_args(argv)
    if args.command == "list-examples":
        for name, desc, ref, path in list_examples():
            print(f"{name:24s} {desc}" + (f" [reference: {ref}]" if ref else ""))
        return EXIT_OK
    try:
        cfg = load_config(args.config)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        status, _ = run(cfg, args.out, args.seed, args.refine, args.emit_matrix, args.emit_slices)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return status


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

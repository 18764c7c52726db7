"""Command-line front end: ``ftdcascade {synth,extract,evaluate,regions,compare}``.

Settings resolve as command-line flags, then the ``--config`` JSON file, then
built-in defaults. Exit codes: 0 ok, 1 usage, 2 data error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import reporting
from .dataset import LABELS, generate_synthetic, load_cohort, load_synthetic_spec, save_cohort
from .errors import DataError, NumericalError
from .evaluation import (STEP_MODES, EvalConfig, cascade_regions, backproject_regions,
                         evaluate_cascade, evaluate_flat, make_folds)
from .hierarchy import CascadeModel, PcaPolicy, load_hierarchy, train_cascade
from .pipeline import (CONNECTIVITY_PREFIX, FEATURE_SETS, ORDERS, REGION_PREFIX, SMOOTHERS,
                       SPECTRAL_PREFIX, ExtractOptions, extract_cohort, write_mesh_cohort)
from .surface import build_basis, coordinate_atlas, icosphere, read_atlas, read_mesh

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

DEFAULTS = {
    "synth": {"spec": None, "out": None, "seed": None, "meshes": None, "subdivisions": 3,
              "radius": 50.0, "vertex_noise": 0.05},
    "extract": {"mesh_dir": None, "atlas": None, "out": None, "smoother": "susan", "fwhm": 15.0,
                "susan_t": None, "features": "concatenated", "components": 50,
                "thickness": "nearest", "order": "smooth-first", "bandwidth": None},
    "evaluate": {"cohort": None, "out": None, "method": "svm", "hierarchy": "default",
                 "model": "both", "k": 10, "reps": 1000, "seed": None, "tune": False, "jobs": 1,
                 "pca_variance": 0.95, "pca_components": None, "no_pca": False,
                 "global_pca": False, "C": 1.0, "tol": 1e-3, "features": "concatenated",
                 "with_demographics": False, "step_mode": "oracle_routed", "save_model": False,
                 "compare": None},
    "regions": {"cohort": None, "model": None, "out": None, "top": 10, "mesh": None,
                "atlas": None},
}
# evaluate --compare susan-vs-heat also reads the extract settings.
DEFAULTS["evaluate"] = {**{k: v for k, v in DEFAULTS["extract"].items() if k != "out"}, **DEFAULTS["evaluate"]}
DEFAULTS["compare"] = {**DEFAULTS["evaluate"], "mode": None}
del DEFAULTS["compare"]["compare"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


class _StageError(Exception):
    def __init__(self, stage, exc):
        super().__init__(f"[{stage}] {exc}")
        self.exc = exc


class _stage:
    """Tags library errors with the pipeline stage that raised them."""

    def __init__(self, name):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, kind, exc, tb):
        if exc is not None and isinstance(exc, (DataError, NumericalError, ValueError, OSError)):
            raise _StageError(self.name, exc) from exc
        return False


def _d(cmd, key):
    v = DEFAULTS[cmd][key]
    return f" (default: {v})" if v not in (None, False) else ""


def _add_eval_flags(p, cmd):
    p.add_argument("--cohort", help="cohort CSV (id,label,age,sex,mmse,education,features...)")
    p.add_argument("--method", choices=("svm", "lda", "nb"), type=str.lower,
                   help="binary learner at every step" + _d(cmd, "method"))
    p.add_argument("--hierarchy", help="default, alt1, alt2 or a hierarchy JSON file" + _d(cmd, "hierarchy"))
    p.add_argument("--model", choices=("cascade", "flat", "both"),
                   help="which approach to evaluate" + _d(cmd, "model"))
    p.add_argument("--k", type=int, help="number of folds (at least 3)" + _d(cmd, "k"))
    p.add_argument("--reps", type=int, help="cross-validation repetitions" + _d(cmd, "reps"))
    p.add_argument("--seed", type=int, help="random seed for fold assignment (required)")
    p.add_argument("--tune", action="store_true",
                   help="choose SVM C per step on the validation folds; otherwise validation "
                        "folds join the test set")
    p.add_argument("--jobs", type=int, help="worker processes for repetitions" + _d(cmd, "jobs"))
    p.add_argument("--pca-variance", type=float, dest="pca_variance",
                   help="retained variance fraction for per-step PCA" + _d(cmd, "pca_variance"))
    p.add_argument("--pca-components", type=int, dest="pca_components",
                   help="fixed PCA component count (overrides --pca-variance)")
    p.add_argument("--no-pca", action="store_true", dest="no_pca", help="train on raw features")
    p.add_argument("--global-pca", action="store_true", dest="global_pca",
                   help="one PCA for all steps instead of one per step")
    p.add_argument("--C", type=float, dest="C", help="SVM soft-margin penalty" + _d(cmd, "C"))
    p.add_argument("--tol", type=float, help="SMO KKT tolerance" + _d(cmd, "tol"))
    p.add_argument("--with-demographics", action="store_true", dest="with_demographics",
                   help="append age, sex, MMSE and education to the features")
    p.add_argument("--step-mode", choices=STEP_MODES, dest="step_mode",
                   help="population for per-step table rows" + _d(cmd, "step_mode"))
    p.add_argument("--save-model", action="store_true", dest="save_model",
                   help="also fit the cascade on the whole cohort and write model.json")


def _add_extract_flags(p, cmd):
    p.add_argument("--mesh-dir", dest="mesh_dir",
                   help="directory with subjects.csv and <id>.inner.mesh / <id>.outer.mesh")
    p.add_argument("--atlas", help="atlas CSV (vertex_id,region_id,region_name)")
    p.add_argument("--smoother", choices=SMOOTHERS, help="thickness smoother" + _d(cmd, "smoother"))
    p.add_argument("--fwhm", type=float, help="smoothing FWHM in mm" + _d(cmd, "fwhm"))
    p.add_argument("--susan-t", type=float, dest="susan_t",
                   help="SUSAN brightness threshold in mm (default: 0.1 x map range)")
    p.add_argument("--components", type=int,
                   help="spectral coefficients kept" + _d(cmd, "components"))
    p.add_argument("--thickness", choices=("nearest", "linked"),
                   help="thickness definition" + _d(cmd, "thickness"))
    p.add_argument("--order", choices=ORDERS,
                   help="smooth-first: features from the smoothed map; transform-first: spectral "
                        "coefficients from the raw map and region means from the smoothed "
                        "low-pass reconstruction" + _d(cmd, "order"))
    p.add_argument("--bandwidth", type=float,
                   help="connectivity kernel width (default: median region-mean distance)")


def build_parser():
    parser = _Parser(prog="ftdcascade", description="Hierarchical dementia-subtype classification from cortical thickness.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    def subparser(name, help_):
        p = sub.add_parser(name, help=help_, description=help_, argument_default=argparse.SUPPRESS)
        p.add_argument("--config", help="JSON file of settings; flags override it")
        return p

    p = subparser("synth", "draw a synthetic cohort CSV (optionally with surfaces)")
    p.add_argument("--spec", help="synthetic spec JSON (counts, templates or template_rules, std, "
                                  "regions, seed)")
    p.add_argument("--out", help="output cohort CSV")
    p.add_argument("--seed", type=int, help="override the spec seed")
    p.add_argument("--meshes", help="also write a surface directory usable by extract")
    p.add_argument("--subdivisions", type=int, help="icosphere subdivisions" + _d("synth", "subdivisions"))
    p.add_argument("--radius", type=float, help="icosphere radius in mm" + _d("synth", "radius"))
    p.add_argument("--vertex-noise", type=float, dest="vertex_noise",
                   help="per-vertex thickness noise in mm" + _d("synth", "vertex_noise"))

    p = subparser("extract", "surfaces to feature cohort: thickness, smoothing, features")
    _add_extract_flags(p, "extract")
    p.add_argument("--features", choices=FEATURE_SETS, help="feature set" + _d("extract", "features"))
    p.add_argument("--out", help="output cohort CSV")

    p = subparser("evaluate", "repeated cross-validation of cascade and flat models")
    _add_eval_flags(p, "evaluate")
    p.add_argument("--features", choices=FEATURE_SETS,
                   help="columns to use: rm_* region means, sc_* spectral, connectivity (cx_* "
                        "columns, else per-fold from region means), concatenated = all"
                        + _d("evaluate", "features"))
    p.add_argument("--compare", choices=("hier-vs-flat", "susan-vs-heat"),
                   help="run a paired comparison instead (see the compare command)")
    p.add_argument("--out", help="output directory")
    _add_extract_flags(p.add_argument_group("susan-vs-heat inputs"), "evaluate")

    p = subparser("regions", "rank features by discriminative-region magnitude |R| per step")
    p.add_argument("--cohort", help="cohort CSV the model was trained on")
    p.add_argument("--model", help="model.json written by evaluate --save-model")
    p.add_argument("--out", help="output directory")
    p.add_argument("--top", type=int, help="rows in the ranking" + _d("regions", "top"))
    p.add_argument("--mesh", help="mesh for back-projecting spectral importances to regions")
    p.add_argument("--atlas", help="atlas for the back-projection")

    p = subparser("compare", "paired comparisons: hier-vs-flat or susan-vs-heat")
    p.add_argument("mode", choices=("hier-vs-flat", "susan-vs-heat"))
    _add_eval_flags(p, "compare")
    _add_extract_flags(p, "compare")
    p.add_argument("--features", choices=FEATURE_SETS, help="feature set" + _d("compare", "features"))
    p.add_argument("--out", help="output directory")
    return parser


def resolve(command, flags):
    """Merge defaults, the config file and explicit flags (in increasing priority)."""
    settings = dict(DEFAULTS[command])
    path = flags.pop("config", None)
    if path:
        try:
            doc = json.loads(Path(path).read_text())
        except OSError as exc:
            raise DataError(f"cannot read config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise DataError(f"config {path} is not valid JSON: {exc}") from None
        if not isinstance(doc, dict):
            raise DataError(f"config {path} must hold a JSON object")
        unknown = sorted(set(doc) - set(settings))
        if unknown:
            raise UsageError(f"unknown config keys for {command}: {', '.join(unknown)}")
        settings.update(doc)
    settings.update(flags)
    return settings


def _require(settings, *keys):
    missing = [k for k in keys if settings.get(k) is None]
    if missing:
        raise UsageError("missing required setting(s): " + ", ".join("--" + k.replace("_", "-")
                                                                     for k in missing))


def _existing(path, what):
    p = Path(path)
    if not p.exists():
        raise DataError(f"{what} not found: {p}")
    return p


def _out_dir(settings):
    out = Path(settings["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path, doc):
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")


# --- synth -------------------------------------------------------------------

def cmd_synth(s):
    _require(s, "spec", "out")
    spec = load_synthetic_spec(_existing(s["spec"], "spec file"))
    if s.get("seed") is not None:
        spec = type(spec)(spec.counts, spec.templates, spec.std, spec.regions, int(s["seed"]))
    with _stage("synth"):
        cohort = generate_synthetic(spec)
        save_cohort(cohort, s["out"])
    counts = cohort.counts()
    print(" ".join(f"{lab.value}={counts[lab]}" for lab in LABELS) + f" total={len(cohort)}")
    if s.get("meshes"):
        with _stage("surfaces"):
            mesh = icosphere(int(s["subdivisions"]), float(s["radius"]))
            atlas = coordinate_atlas(mesh, spec.regions)
            write_mesh_cohort(cohort, mesh, atlas, s["meshes"], float(s["vertex_noise"]), spec.seed)
        print(f"surfaces written to {s['meshes']}")
    return EXIT_OK


# --- extract -----------------------------------------------------------------

def _extract_options(s, smoother=None):
    return ExtractOptions(smoother or s["smoother"], float(s["fwhm"]),
                          None if s["susan_t"] is None else float(s["susan_t"]), s["features"],
                          int(s["components"]), s["thickness"], s["order"],
                          None if s["bandwidth"] is None else float(s["bandwidth"]))


def _extract(s, smoother=None):
    _require(s, "mesh_dir", "atlas")
    mesh_dir = _existing(s["mesh_dir"], "mesh directory")
    opts = _extract_options(s, smoother)
    with _stage("atlas"):
        atlas = read_atlas(_existing(s["atlas"], "atlas"))
    with _stage("extract"):
        return extract_cohort(mesh_dir, atlas, opts)


def cmd_extract(s):
    _require(s, "out")
    cohort = _extract(s)
    save_cohort(cohort, s["out"])
    print(f"{len(cohort)} subjects x {len(cohort.feature_names)} features -> {s['out']}")
    return EXIT_OK


# --- evaluate / compare ------------------------------------------------------

def select_features(cohort, feature_set, with_demographics):
    """Feature matrix, column names and per-fold transform for a feature set."""
    names = list(cohort.feature_names)
    x = np.asarray(cohort.features)

    def cols(prefix):
        return [i for i, n in enumerate(names) if n.startswith(prefix)]
    rm = cols(REGION_PREFIX)
    if not rm and not cols(SPECTRAL_PREFIX) and not cols(CONNECTIVITY_PREFIX):
        rm = list(range(len(names)))
    transform = "raw"
    if feature_set == "concatenated":
        idx = list(range(len(names)))
    elif feature_set == "region_means":
        idx = rm
    elif feature_set == "spectral":
        idx = cols(SPECTRAL_PREFIX)
    elif feature_set == "connectivity":
        idx = cols(CONNECTIVITY_PREFIX)
        if not idx:
            idx, transform = rm, "connectivity"
    else:
        raise UsageError(f"unknown feature set {feature_set!r}")
    if not idx:
        raise DataError(f"cohort has no columns for feature set {feature_set!r}")
    x = x[:, idx]
    chosen = [names[i] for i in idx]
    if with_demographics:
        if transform != "raw":
            raise UsageError("--with-demographics cannot be combined with per-fold connectivity")
        demo = cohort.demographics()
        if not np.all(np.isfinite(demo)):
            raise DataError("demographics are missing for some subjects")
        x = np.hstack([x, demo])
        chosen += ["age", "male", "mmse", "education"]
    return x, chosen, transform


def _eval_config(s, transform):
    if s["no_pca"]:
        pca = None
    else:
        pca = PcaPolicy(float(s["pca_variance"]),
                        None if s["pca_components"] is None else int(s["pca_components"]))
    return EvalConfig(s["method"].upper(), pca, float(s["C"]), float(s["tol"]), bool(s["tune"]),
                      transform, bool(s["global_pca"]))


def _check_eval_settings(s):
    _require(s, "seed", "out")
    if int(s["jobs"]) < 1:
        raise UsageError("--jobs must be at least 1")
    if int(s["reps"]) < 1:
        raise UsageError("--reps must be at least 1")


def _run_models(cohort, s, which):
    x, names, transform = select_features(cohort, s["features"], s["with_demographics"])
    cfg = _eval_config(s, transform)
    with _stage("hierarchy"):
        spec = load_hierarchy(s["hierarchy"])
    with _stage("folds"):
        plan = make_folds(cohort, int(s["k"]), int(s["reps"]), int(s["seed"]))
    reports = {}
    jobs = int(s["jobs"])
    if which in ("cascade", "both"):
        with _stage("evaluate cascade"):
            reports["cascade"] = evaluate_cascade(cohort, spec, cfg.method, plan, s["step_mode"],
                                                  cfg, x=x, jobs=jobs)
    if which in ("flat", "both"):
        with _stage("evaluate flat"):
            reports["flat"] = evaluate_flat(cohort, cfg.method, plan, cfg, x=x, jobs=jobs)
    return reports, (x, names, spec, cfg)


def _write_reports(out, reports, prefix=""):
    for kind, rep in reports.items():
        (out / f"{prefix}{kind}_report.json").write_text(rep.to_json() + "\n")
        reporting.write_misclassified(out / f"{prefix}misclassified_{kind}.csv", rep)
        for name, step in rep.to_dict()["steps"].items():
            if step["roc"]["points"]:
                reporting.write_roc_csv(out / f"{prefix}roc_{name}.csv", step["roc"]["points"],
                                        step["roc"]["auc"])
                reporting.write_text(out / f"{prefix}roc_{name}.svg",
                                     reporting.roc_svg(step["roc"]["points"], step["roc"]["auc"],
                                                       step["title"]))
    reporting.write_performance_table(out / f"{prefix}performance.csv", list(reports.values()))


def _save_model(out, cohort, s, context):
    x, names, spec, cfg = context
    if cfg.features != "raw":
        raise UsageError("--save-model needs precomputed feature columns (not per-fold connectivity)")
    with _stage("train full model"):
        model = train_cascade(x, cohort.labels, spec, cfg.method, cfg.pca, C=cfg.C, tol=cfg.tol,
                              global_pca=cfg.global_pca)
    _write_json(out / "model.json", {"feature_names": names,
                                     "with_demographics": bool(s["with_demographics"]),
                                     "model": model.to_dict()})


def _summary_line(kind, rep):
    acc = rep.accuracy
    sd = acc["sd"] if acc["sd"] is not None else math.nan
    return f"{kind}: accuracy {acc['mean']:.4f} +/- {sd:.4f} over {len(rep.per_rep_accuracy)} repetitions"


def cmd_evaluate(s):
    if s.get("compare"):
        mode = s["compare"]
        s = {k: v for k, v in s.items() if k != "compare"}
        return cmd_compare({**s, "mode": mode})
    _check_eval_settings(s)
    _require(s, "cohort")
    with _stage("load cohort"):
        cohort = load_cohort(_existing(s["cohort"], "cohort"))
    out = _out_dir(s)
    reports, context = _run_models(cohort, s, s["model"])
    _write_reports(out, reports)
    _write_json(out / "config.json", {k: v for k, v in s.items()})
    if s["save_model"]:
        _save_model(out, cohort, s, context)
    for kind, rep in reports.items():
        print(_summary_line(kind, rep))
    return EXIT_OK


def cmd_compare(s):
    _check_eval_settings(s)
    out = _out_dir(s)
    mode = s["mode"]
    if mode == "hier-vs-flat":
        _require(s, "cohort")
        with _stage("load cohort"):
            cohort = load_cohort(_existing(s["cohort"], "cohort"))
        reports, _ = _run_models(cohort, s, "both")
        _write_reports(out, reports)
        reporting.write_performance_table(out / "hier_vs_flat.csv", [reports["cascade"], reports["flat"]])
        for kind, rep in reports.items():
            print(_summary_line(kind, rep))
    else:
        results = {}
        for smoother in ("susan", "heat"):
            cohort = _extract(s, smoother)
            reports, _ = _run_models(cohort, s, "both")
            _write_reports(out, reports, prefix=f"{smoother}_")
            results[smoother] = {"hierarchical": reports["cascade"], "non-hierarchical": reports["flat"]}
            for kind, rep in reports.items():
                print(f"{smoother} " + _summary_line(kind, rep))
        reporting.write_smoother_table(out / "susan_vs_heat.csv", results)
    _write_json(out / "config.json", {k: v for k, v in s.items()})
    return EXIT_OK


# --- regions -----------------------------------------------------------------

def cmd_regions(s):
    _require(s, "cohort", "model", "out")
    try:
        doc = json.loads(_existing(s["model"], "model file").read_text())
        model = CascadeModel.from_dict(doc["model"])
        names = list(doc["feature_names"])
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise DataError(f"malformed model file {s['model']}: {exc}") from None
    with _stage("load cohort"):
        cohort = load_cohort(_existing(s["cohort"], "cohort"))
    demo = bool(doc.get("with_demographics"))
    base_names = names[:-4] if demo else names
    missing = [n for n in base_names if n not in cohort.feature_names]
    if missing:
        raise DataError(f"cohort lacks model features: {', '.join(missing[:5])}")
    x = np.asarray(cohort.features)[:, [cohort.feature_names.index(n) for n in base_names]]
    if demo:
        x = np.hstack([x, cohort.demographics()])
    for nm in model.nodes.values():
        if not nm.scorer.is_linear:
            raise UsageError(f"model method {nm.scorer.method} has no linear weights; "
                             "regions needs svm or lda")
    with _stage("regions"):
        maps = cascade_regions(model, x, cohort.labels)
    out = _out_dir(s)
    top = int(s["top"])
    basis = atlas = None
    spectral = [i for i, n in enumerate(names) if n.startswith(SPECTRAL_PREFIX)]
    if s.get("mesh") and s.get("atlas") and spectral:
        with _stage("back-projection"):
            mesh = read_mesh(_existing(s["mesh"], "mesh"))
            atlas = read_atlas(_existing(s["atlas"], "atlas"), mesh.n_vertices)
            basis = build_basis(mesh, len(spectral))
    for node in model.spec.steps():
        rmap = maps[node.name]
        ranked, values = reporting.write_region_ranking(out / f"regions_{node.name}.csv", names,
                                                        rmap.magnitude, top)
        reporting.write_text(out / f"regions_{node.name}.svg",
                             reporting.bar_svg(ranked, values, f"{node.title}: |R|"))
        print(f"{node.title}: " + ", ".join(ranked[:5]))
        if basis is not None:
            r = np.asarray(rmap.R)[spectral]
            back = backproject_regions(r if r.ndim == 1 else r.sum(axis=1), basis, atlas)
            reporting.write_region_ranking(out / f"regions_{node.name}_backprojected.csv",
                                           atlas.region_names, back, top)
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "extract": cmd_extract, "evaluate": cmd_evaluate,
            "regions": cmd_regions, "compare": cmd_compare}


def main(argv=None):
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
        flags = vars(ns)
        command = flags.pop("command")
        settings = resolve(command, flags)
        return COMMANDS[command](settings)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _StageError as exc:
        code = EXIT_NUMERIC if isinstance(exc.exc, NumericalError) else \
            EXIT_DATA if isinstance(exc.exc, (DataError, OSError)) else EXIT_USAGE
        print(f"error {exc}", file=sys.stderr)
        return code
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

import csv
import hashlib
import json
import subprocess
import sys

import numpy as np
import pytest

from ftdcascade import cli
from ftdcascade.dataset import LABELS, load_cohort
from ftdcascade.pipeline import ExtractOptions, extract_matrix
from ftdcascade.reporting import performance_rows, roc_svg, write_region_ranking
from ftdcascade.surface import (RegionAtlas, SurfacePair, TriMesh, coordinate_atlas, plane_grid,
                                write_atlas, write_mesh)

COUNTS = {"CN": 8, "AD": 8, "bvFTD": 8, "nfvPPA": 8, "svPPA": 8}


def block_spec(path, std=0.05, regions=20, counts=COUNTS, seed=0):
    templates = {}
    for i, lab in enumerate(LABELS):
        t = [2.5] * regions
        if i:
            for j in range((i - 1) * regions // 5, i * regions // 5):
                t[j] -= 0.8
        templates[lab.value] = t
    path.write_text(json.dumps({"counts": counts, "templates": templates, "std": std,
                                "regions": regions, "seed": seed}))
    return path


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture(scope="module")
def separable(tmp_path_factory):
    d = tmp_path_factory.mktemp("sep")
    assert run("synth", "--spec", block_spec(d / "spec.json"), "--out", d / "c.csv") == 0
    return d / "c.csv"


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_synth_reference_counts(tmp_path, capsys):
    spec = tmp_path / "s.json"
    spec.write_text(json.dumps({"counts": {"CN": 84, "AD": 24, "bvFTD": 30, "nfvPPA": 25,
                                           "svPPA": 41}, "std": 0.15, "regions": 68, "seed": 3}))
    out = tmp_path / "c.csv"
    assert run("synth", "--spec", spec, "--out", out) == 0
    assert "total=204" in capsys.readouterr().out
    assert len(rows(out)) == 204
    first = hashlib.sha256(out.read_bytes()).hexdigest()
    assert run("synth", "--spec", spec, "--out", out) == 0
    assert hashlib.sha256(out.read_bytes()).hexdigest() == first
    assert run("synth", "--spec", spec, "--out", out, "--seed", 4) == 0
    assert hashlib.sha256(out.read_bytes()).hexdigest() != first


def test_synth_zero_counts_is_data_error(tmp_path):
    spec = tmp_path / "s.json"
    spec.write_text(json.dumps({"counts": {k: 0 for k in COUNTS}, "regions": 10}))
    assert run("synth", "--spec", spec, "--out", tmp_path / "c.csv") == 2


def mesh_dir(tmp_path, offsets, ids=None):
    """Plane-grid surface directory with the outer plane lifted by each offset."""
    grid = plane_grid(8, 8, 2.0)
    atlas = coordinate_atlas(grid, 4)
    ids = ids or [f"s{i}" for i in range(len(offsets))]
    with (tmp_path / "subjects.csv").open("w") as fh:
        fh.write("id,label,age,sex,mmse,education\n")
        for i, sid in enumerate(ids):
            fh.write(f"{sid},{LABELS[i % 5].value},70,F,27,12\n")
    for sid, dz in zip(ids, offsets):
        write_mesh(grid, tmp_path / f"{sid}.inner.mesh")
        write_mesh(TriMesh(grid.vertices + [0, 0, dz], grid.triangles), tmp_path / f"{sid}.outer.mesh")
    write_atlas(atlas, tmp_path / "atlas.csv")
    return tmp_path


def test_extract_parallel_planes(tmp_path):
    d = mesh_dir(tmp_path, [2.5, 2.5, 2.5])
    out = tmp_path / "f.csv"
    code = run("extract", "--mesh-dir", d, "--atlas", d / "atlas.csv", "--out", out,
               "--features", "region_means")
    assert code == 0
    c = load_cohort(out)
    assert c.feature_names[0].startswith("rm_")
    np.testing.assert_allclose(c.features, 2.5, atol=1e-9)


def test_extract_identical_surfaces(tmp_path):
    d = mesh_dir(tmp_path, [0.0, 0.0])
    out = tmp_path / "f.csv"
    assert run("extract", "--mesh-dir", d, "--atlas", d / "atlas.csv", "--out", out) == 0
    c = load_cohort(out)
    np.testing.assert_allclose(c.features, 0.0, atol=1e-9)
    assert any(n.startswith("sc_") for n in c.feature_names)


def test_smoothers_agree_on_constant_map():
    grid = plane_grid(8, 8, 2.0)
    atlas = coordinate_atlas(grid, 4)
    pair = SurfacePair(grid, TriMesh(grid.vertices + [0, 0, 3.0], grid.triangles))
    got = {s: extract_matrix([pair], atlas, ExtractOptions(smoother=s, features="region_means"))[0]
           for s in ("none", "susan", "heat")}
    np.testing.assert_allclose(got["susan"], got["none"], atol=1e-9)
    np.testing.assert_allclose(got["heat"], got["none"], atol=1e-9)


def test_extract_errors(tmp_path):
    d = mesh_dir(tmp_path, [1.0, 1.0])
    (d / "s1.outer.mesh").unlink()
    assert run("extract", "--mesh-dir", d, "--atlas", d / "atlas.csv", "--out", tmp_path / "f.csv") == 2
    assert run("extract", "--mesh-dir", tmp_path / "nope", "--atlas", d / "atlas.csv",
               "--out", tmp_path / "f.csv") == 2
    bad = RegionAtlas(np.zeros(5, int), {0: "a"})
    with pytest.raises(Exception):
        extract_matrix([SurfacePair(plane_grid(3, 3, 1.0), plane_grid(3, 3, 1.0))], bad, ExtractOptions())


def test_synth_meshes_round_trip(tmp_path):
    spec = block_spec(tmp_path / "s.json", counts={k: 2 for k in COUNTS}, regions=8)
    meshes = tmp_path / "m"
    assert run("synth", "--spec", spec, "--out", tmp_path / "c.csv", "--meshes", meshes,
               "--subdivisions", 2, "--vertex-noise", 0.0) == 0
    out = tmp_path / "f.csv"
    assert run("extract", "--mesh-dir", meshes, "--atlas", meshes / "atlas.csv", "--out", out,
               "--smoother", "none", "--features", "region_means") == 0
    truth = load_cohort(tmp_path / "c.csv")
    got = load_cohort(out)
    assert got.ids == truth.ids
    # a mesh offset is not exactly the nearest-point thickness; stays within a few percent
    np.testing.assert_allclose(got.features, truth.features, rtol=0.05)


def test_evaluate_separable(tmp_path, separable, capsys):
    out = tmp_path / "ev"
    code = run("evaluate", "--cohort", separable, "--out", out, "--seed", 1, "--reps", 2, "--k", 4,
               "--save-model")
    assert code == 0
    for kind in ("cascade", "flat"):
        rep = json.loads((out / f"{kind}_report.json").read_text())
        assert rep["accuracy"]["mean"] == 1.0
    assert (out / "model.json").exists() and (out / "roc_Step1.csv").exists()
    table = rows(out / "performance.csv")
    assert table[0]["row"] == "overall"
    assert {r["approach"] for r in table} == {"Hierarchical cascade", "Flat multi-class"}
    assert "cascade: accuracy 1.0000" in capsys.readouterr().out


def test_evaluate_deterministic(tmp_path, separable):
    for d in ("a", "b"):
        assert run("evaluate", "--cohort", separable, "--out", tmp_path / d, "--seed", 5, "--reps", 2,
                   "--k", 4, "--model", "cascade") == 0
    assert (tmp_path / "a/cascade_report.json").read_bytes() == (tmp_path / "b/cascade_report.json").read_bytes()


def test_compare_hier_vs_flat(tmp_path, separable):
    out = tmp_path / "cmp"
    assert run("compare", "hier-vs-flat", "--cohort", separable, "--out", out, "--seed", 0,
               "--reps", 2, "--k", 4, "--method", "lda") == 0
    table = rows(out / "hier_vs_flat.csv")
    assert len(table) > 2
    assert run("evaluate", "--cohort", separable, "--out", tmp_path / "e", "--seed", 0, "--reps", 1,
               "--k", 4, "--compare", "hier-vs-flat") == 0
    assert (tmp_path / "e/hier_vs_flat.csv").exists()


def test_compare_susan_vs_heat(tmp_path):
    spec = block_spec(tmp_path / "s.json", counts={k: 4 for k in COUNTS}, regions=8)
    meshes = tmp_path / "m"
    assert run("synth", "--spec", spec, "--out", tmp_path / "c.csv", "--meshes", meshes,
               "--subdivisions", 2) == 0
    out = tmp_path / "cmp"
    assert run("compare", "susan-vs-heat", "--mesh-dir", meshes, "--atlas", meshes / "atlas.csv",
               "--out", out, "--seed", 0, "--reps", 1, "--k", 4, "--features", "region_means",
               "--fwhm", 10) == 0
    table = rows(out / "susan_vs_heat.csv")
    assert {r["smoother"] for r in table} == {"susan", "heat"}
    assert len(table) == 4


def test_regions(tmp_path, separable, capsys):
    ev = tmp_path / "ev"
    assert run("evaluate", "--cohort", separable, "--out", ev, "--seed", 0, "--reps", 1, "--k", 4,
               "--model", "cascade", "--save-model") == 0
    out = tmp_path / "r"
    assert run("regions", "--cohort", separable, "--model", ev / "model.json", "--out", out, "--top", 5) == 0
    ranked = rows(out / "regions_Step1.csv")
    assert len(ranked) == 5
    mags = [float(r["abs_R"]) for r in ranked]
    assert mags == sorted(mags, reverse=True)
    assert (out / "regions_Step4.svg").read_text().startswith("<svg")
    nb = tmp_path / "nb"
    assert run("evaluate", "--cohort", separable, "--out", nb, "--seed", 0, "--reps", 1, "--k", 4,
               "--model", "cascade", "--method", "nb", "--save-model") == 0
    assert run("regions", "--cohort", separable, "--model", nb / "model.json", "--out", out) == 1
    assert "linear" in capsys.readouterr().err


def test_exit_codes(tmp_path, separable):
    assert run("evaluate", "--cohort", separable, "--out", tmp_path) == 1
    assert run("evaluate", "--cohort", tmp_path / "missing.csv", "--out", tmp_path, "--seed", 0) == 2
    assert run("evaluate", "--bogus") == 1
    assert run("evaluate", "--cohort", separable, "--out", tmp_path, "--seed", 0, "--k", 2) == 1
    assert run("frobnicate") == 1
    bad = tmp_path / "bad.csv"
    bad.write_text("id,label,age,sex,mmse,education,f\na,CN,70,F,28,12,x\n")
    assert run("evaluate", "--cohort", bad, "--out", tmp_path, "--seed", 0) == 2


def test_config_precedence(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"reps": 7, "k": 5, "method": "lda"}))
    s = cli.resolve("evaluate", {"config": str(cfg), "k": 4})
    assert (s["reps"], s["k"], s["method"], s["C"]) == (7, 4, "lda", 1.0)
    assert cli.resolve("evaluate", {})["reps"] == 1000
    cfg.write_text(json.dumps({"nonsense": 1}))
    with pytest.raises(cli.UsageError):
        cli.resolve("evaluate", {"config": str(cfg)})
    cfg.write_text("[1, 2]")
    assert run("evaluate", "--config", cfg, "--seed", 0) == 2


@pytest.mark.parametrize("command", ["synth", "extract", "evaluate", "regions", "compare"])
def test_help(command):
    res = subprocess.run([sys.executable, "-m", "ftdcascade.cli", command, "--help"],
                         capture_output=True, text=True)
    assert res.returncode == 0
    assert "usage" in res.stdout


def test_reporting_helpers(tmp_path):
    ranked, values = write_region_ranking(tmp_path / "r.csv", ["a", "b", "c"], np.array([1.0, 3.0, 2.0]), 2)
    assert ranked == ["b", "c"] and list(values) == [3.0, 2.0]
    svg = roc_svg([(0.0, 0.0), (0.5, 1.0), (1.0, 1.0)], 0.75, "x")
    assert svg.startswith("<svg") and "0.75" in svg


def test_performance_rows_shape(separable):
    from ftdcascade.evaluation import evaluate_cascade, make_folds
    from ftdcascade.hierarchy import default_hierarchy
    c = load_cohort(separable)
    rep = evaluate_cascade(c, default_hierarchy(), plan=make_folds(c, k=4, reps=1, seed=0))
    out = performance_rows(rep)
    assert [r[1] for r in out] == ["overall", "Step1 (CN vs Dementia)", "Step2 (FTD vs Non-FTD)",
                                       "Step3 (bvFTD vs PPA)", "Step4 (nfvPPA vs svPPA)"]

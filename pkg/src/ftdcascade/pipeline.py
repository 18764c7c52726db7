"""Surface directory to feature cohort: thickness, smoothing, region means, spectra.

A mesh directory holds ``subjects.csv`` (``id,label,age,sex,mmse,education``)
and, per subject, ``<id>.inner.mesh`` and ``<id>.outer.mesh`` sharing one
triangle topology.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import DEMOGRAPHIC_COLUMNS, Cohort, Subject, parse_label
from .errors import DataError
from .features import connectivity_features, default_bandwidth
from .smoothing import HeatParams, SusanParams, geodesic_neighborhoods, heat_smooth, susan_smooth
from .surface import (SurfacePair, build_basis, compute_thickness, from_frequency, offset_surface,
                      read_mesh, region_means, to_frequency, write_atlas, write_mesh)

SMOOTHERS = ("susan", "heat", "none")
FEATURE_SETS = ("region_means", "spectral", "connectivity", "concatenated")
ORDERS = ("smooth-first", "transform-first")
REGION_PREFIX, SPECTRAL_PREFIX, CONNECTIVITY_PREFIX = "rm_", "sc_", "cx_"
# Heat smoothing with a truncated basis is also a low-pass filter; keep it wide.
HEAT_BASIS_MIN = 300


@dataclass(frozen=True)
class ExtractOptions:
    smoother: str = "susan"
    fwhm: float = 15.0
    susan_t: float | None = None
    features: str = "concatenated"
    components: int = 50
    thickness: str = "nearest"
    order: str = "smooth-first"
    bandwidth: float | None = None

    def __post_init__(self):
        for name, value, allowed in (("smoother", self.smoother, SMOOTHERS),
                                     ("features", self.features, FEATURE_SETS),
                                     ("order", self.order, ORDERS),
                                     ("thickness", self.thickness, ("nearest", "linked"))):
            if value not in allowed:
                raise ValueError(f"{name} must be one of {', '.join(allowed)}, got {value!r}")
        if self.components < 1:
            raise ValueError("components must be at least 1")


def read_subject_table(mesh_dir):
    path = Path(mesh_dir) / "subjects.csv"
    try:
        with path.open(newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    if not rows:
        raise DataError(f"{path} has no subjects")
    out = []
    for row in rows:
        sid = (row.get("id") or "").strip()
        if not sid:
            raise DataError(f"{path}: row without id")

        def num(key):
            cell = (row.get(key) or "").strip()
            try:
                return float(cell) if cell else math.nan
            except ValueError:
                raise DataError(f"{path}: subject {sid}: non-numeric {key} {cell!r}") from None
        out.append(dict(id=sid, label=parse_label(row.get("label", "")), age=num("age"),
                        sex=(row.get("sex") or "").strip().upper(), mmse=num("mmse"),
                        education=num("education")))
    return out


def load_pairs(mesh_dir, ids):
    mesh_dir = Path(mesh_dir)
    pairs = []
    for sid in ids:
        inner, outer = mesh_dir / f"{sid}.inner.mesh", mesh_dir / f"{sid}.outer.mesh"
        if not inner.exists() or not outer.exists():
            raise DataError(f"missing surface pair for subject {sid!r} in {mesh_dir}")
        pairs.append(SurfacePair(read_mesh(inner), read_mesh(outer)))
    first = pairs[0].inner
    for sid, p in zip(ids, pairs):
        if not p.inner.same_topology(first):
            raise DataError(f"subject {sid!r} does not share the cohort mesh topology")
    return pairs


def _smoother(opts, basis):
    """Returns ``smooth(values, mesh)``; neighborhoods are cached per geometry."""
    if opts.smoother == "none":
        return lambda values, mesh: values
    if opts.smoother == "heat":
        params = HeatParams(opts.fwhm)
        return lambda values, mesh: heat_smooth(values, basis, params)
    params = SusanParams(opts.fwhm, opts.susan_t)
    cache = {}

    def smooth(values, mesh):
        key = mesh.vertices.tobytes()
        if key not in cache:
            cache.clear()
            cache[key] = geodesic_neighborhoods(mesh, params.radius)
        return susan_smooth(values, mesh, params, cache[key])
    return smooth


def extract_matrix(pairs, atlas, opts):
    """Feature matrix and column names for a list of surface pairs."""
    n = pairs[0].inner.n_vertices
    if atlas.n_vertices != n:
        raise DataError(f"atlas covers {atlas.n_vertices} vertices, meshes have {n}")
    want_spec = opts.features in ("spectral", "concatenated")
    k = min(n, opts.components)
    basis_k = k if want_spec else 1
    if opts.smoother == "heat" or opts.order == "transform-first":
        basis_k = min(n, max(basis_k, HEAT_BASIS_MIN))
    basis = build_basis(pairs[0].inner, basis_k)
    smooth = _smoother(opts, basis)
    rm_rows, sc_rows = [], []
    for p in pairs:
        thick = compute_thickness(p, opts.thickness)
        if opts.order == "smooth-first":
            mapped = smooth(thick, p.inner)
            coeffs = to_frequency(mapped, basis)[:k]
        else:
            coeffs = to_frequency(thick, basis)[:k]
            mapped = smooth(from_frequency(to_frequency(thick, basis), basis), p.inner)
        rm_rows.append(region_means(mapped, atlas))
        sc_rows.append(coeffs)
    rm = np.vstack(rm_rows)
    sc = np.vstack(sc_rows)
    rm_names = [REGION_PREFIX + name for name in atlas.region_names]
    sc_names = [f"{SPECTRAL_PREFIX}{i}" for i in range(k)]
    if opts.features == "region_means":
        return rm, rm_names
    if opts.features == "spectral":
        return sc, sc_names
    if opts.features == "connectivity":
        bw = opts.bandwidth if opts.bandwidth is not None else default_bandwidth(rm)
        r = rm.shape[1]
        names = [f"{CONNECTIVITY_PREFIX}{i + 1}_{j + 1}" for i in range(r) for j in range(i + 1, r)]
        return connectivity_features(rm, bw), names
    return np.hstack([rm, sc]), rm_names + sc_names


def extract_cohort(mesh_dir, atlas, opts):
    table = read_subject_table(mesh_dir)
    pairs = load_pairs(mesh_dir, [t["id"] for t in table])
    x, names = extract_matrix(pairs, atlas, opts)
    subjects = [Subject(t["id"], t["label"], row, t["age"], t["sex"], t["mmse"], t["education"])
                for t, row in zip(table, x)]
    return Cohort(subjects, names, {"kind": "extracted", "path": str(mesh_dir)})


def write_mesh_cohort(cohort, mesh, atlas, out_dir, vertex_noise=0.05, seed=0):
    """Write one surface pair per subject whose regional thickness follows its features.

    The inner surface is ``mesh``; the outer surface is offset along vertex
    normals by the subject's region value plus vertex noise (floored at 0.1 mm).
    """
    if len(cohort.feature_names) != len(atlas.region_ids):
        raise DataError(f"cohort has {len(cohort.feature_names)} features, atlas has "
                        f"{len(atlas.region_ids)} regions")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng([int(seed), 1])
    pos = np.searchsorted(atlas.region_ids, atlas.vertex_region)
    with (out_dir / "subjects.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("id", "label") + DEMOGRAPHIC_COLUMNS)
        for s in cohort.subjects:
            w.writerow([s.id, s.label.value, format(s.age, ".9g"), s.sex, format(s.mmse, ".9g"),
                        format(s.education, ".9g")])
    for s in cohort.subjects:
        thick = np.maximum(s.features[pos] + vertex_noise * rng.standard_normal(mesh.n_vertices), 0.1)
        write_mesh(mesh, out_dir / f"{s.id}.inner.mesh")
        write_mesh(offset_surface(mesh, thick), out_dir / f"{s.id}.outer.mesh")
    write_atlas(atlas, out_dir / "atlas.csv")
    return out_dir

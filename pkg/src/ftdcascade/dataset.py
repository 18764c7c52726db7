"""Diagnostic labels, subject records, cohort CSV ingestion and synthetic cohorts."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import DataError

DEMOGRAPHIC_COLUMNS = ("age", "sex", "mmse", "education")
HEADER_PREFIX = ("id", "label") + DEMOGRAPHIC_COLUMNS


class DiagnosticLabel(str, Enum):
    """Leaf diagnoses, declared in canonical order."""

    CN = "CN"
    AD = "AD"
    bvFTD = "bvFTD"
    nfvPPA = "nfvPPA"
    svPPA = "svPPA"

    def __str__(self):
        return self.value


LABELS = tuple(DiagnosticLabel)
_BY_LOWER = {lab.value.lower(): lab for lab in LABELS}

GROUPS = {
    "Dementia": frozenset({DiagnosticLabel.AD, DiagnosticLabel.bvFTD,
                           DiagnosticLabel.nfvPPA, DiagnosticLabel.svPPA}),
    "FTD": frozenset({DiagnosticLabel.bvFTD, DiagnosticLabel.nfvPPA,
                      DiagnosticLabel.svPPA}),
    "NonFTD": frozenset({DiagnosticLabel.AD}),
    "PPA": frozenset({DiagnosticLabel.nfvPPA, DiagnosticLabel.svPPA}),
}

# Class sizes of the reference cohort.
REFERENCE_COUNTS = {
    DiagnosticLabel.CN: 84,
    DiagnosticLabel.AD: 24,
    DiagnosticLabel.bvFTD: 30,
    DiagnosticLabel.nfvPPA: 25,
    DiagnosticLabel.svPPA: 41,
}

# (mean, sd) of age, MMSE and years of education per diagnostic family.
_DEMOGRAPHICS = {
    "CN": ((68.3, 5.51), (28.8, 1.21), (13.9, 3.10)),
    "FTD": ((68.5, 6.0), (23.2, 6.7), (13.4, 2.96)),
    "AD": ((72.1, 5.0), (24.0, 6.0), (13.0, 3.1)),
}
_MALE_FRACTION = 99 / 204


def parse_label(text):
    """Case-insensitive leaf-label lookup."""
    try:
        return _BY_LOWER[str(text).strip().lower()]
    except KeyError:
        raise DataError(f"unknown label {text!r}") from None


def group_members(name):
    """Leaf labels of a group name or of a single leaf name."""
    if name in GROUPS:
        return GROUPS[name]
    return frozenset({parse_label(name)})


@dataclass(frozen=True)
class Subject:
    id: str
    label: DiagnosticLabel
    features: np.ndarray
    age: float = math.nan
    sex: str = ""
    mmse: float = math.nan
    education: float = math.nan

    def __post_init__(self):
        feats = np.array(self.features, dtype=float)
        feats.setflags(write=False)
        object.__setattr__(self, "features", feats)


@dataclass(frozen=True)
class Cohort:
    subjects: tuple
    feature_names: tuple
    provenance: dict = field(default_factory=lambda: {"kind": "ingested"})

    def __post_init__(self):
        object.__setattr__(self, "subjects", tuple(self.subjects))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        if not self.subjects:
            raise DataError("cohort is empty")
        seen = set()
        width = len(self.feature_names)
        for s in self.subjects:
            if s.id in seen:
                raise DataError(f"duplicate subject id {s.id!r}")
            seen.add(s.id)
            if s.features.shape != (width,):
                raise DataError(f"subject {s.id!r} has {s.features.size} features, expected {width}")
            if not np.all(np.isfinite(s.features)):
                raise DataError(f"subject {s.id!r} has non-finite features")

    def __len__(self):
        return len(self.subjects)

    @cached_property
    def features(self):
        x = np.vstack([s.features for s in self.subjects])
        x.setflags(write=False)
        return x

    @cached_property
    def labels(self):
        return tuple(s.label for s in self.subjects)

    @cached_property
    def label_index(self):
        """Labels as integer positions in canonical order."""
        return np.array([LABELS.index(lab) for lab in self.labels])

    @property
    def ids(self):
        return tuple(s.id for s in self.subjects)

    def counts(self):
        out = {lab: 0 for lab in LABELS}
        for lab in self.labels:
            out[lab] += 1
        return out

    def demographics(self):
        """Numeric demographic block (age, male indicator, MMSE, education)."""
        return np.array([[s.age, 1.0 if s.sex == "M" else 0.0, s.mmse, s.education]
                         for s in self.subjects])

    def subset(self, indices):
        return Cohort([self.subjects[i] for i in indices], self.feature_names, self.provenance)

    def with_features(self, matrix, names):
        """Same subjects and demographics with a replacement feature block."""
        matrix = np.asarray(matrix, dtype=float)
        subjects = [Subject(s.id, s.label, row, s.age, s.sex, s.mmse, s.education)
                    for s, row in zip(self.subjects, matrix)]
        return Cohort(subjects, names, self.provenance)


def _number(cell, what, row_no, allow_empty=False):
    cell = cell.strip()
    if allow_empty and cell == "":
        return math.nan
    try:
        return float(cell)
    except ValueError:
        raise DataError(f"row {row_no}: non-numeric {what} {cell!r}") from None


def load_cohort(path, n_features=None):
    """Read a cohort CSV with header ``id,label,age,sex,mmse,education,<features...>``."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"cohort file not found: {path}")
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError("missing header row")
    header = [h.strip() for h in rows[0]]
    if tuple(h.lower() for h in header[:len(HEADER_PREFIX)]) != HEADER_PREFIX:
        raise DataError(f"header must start with {','.join(HEADER_PREFIX)}")
    names = header[len(HEADER_PREFIX):]
    if not names:
        raise DataError("no feature columns in header")
    if n_features is not None and len(names) != n_features:
        raise DataError(f"expected {n_features} feature columns, found {len(names)}")
    data = [r for r in rows[1:] if any(c.strip() for c in r)]
    if not data:
        raise DataError("empty data section")

    subjects = []
    seen = set()
    for row_no, row in enumerate(data, start=2):
        if len(row) != len(header):
            raise DataError(f"row {row_no}: inconsistent row width {len(row)} != {len(header)}")
        sid = row[0].strip()
        if not sid:
            raise DataError(f"row {row_no}: missing id")
        if sid in seen:
            raise DataError(f"row {row_no}: duplicate id {sid!r}")
        seen.add(sid)
        label = parse_label(row[1])
        sex = row[3].strip().upper()
        if sex not in ("M", "F", ""):
            raise DataError(f"row {row_no}: sex must be M or F, got {row[3]!r}")
        feats = [_number(c, "feature", row_no) for c in row[len(HEADER_PREFIX):]]
        if not all(math.isfinite(f) for f in feats):
            raise DataError(f"row {row_no}: non-finite feature value")
        subjects.append(Subject(
            sid, label, feats,
            age=_number(row[2], "age", row_no, True),
            sex=sex,
            mmse=_number(row[4], "mmse", row_no, True),
            education=_number(row[5], "education", row_no, True),
        ))
    return Cohort(subjects, names, {"kind": "ingested", "path": str(path)})


def _fmt(x):
    return "" if isinstance(x, float) and math.isnan(x) else format(x, ".9g")


def save_cohort(cohort, path):
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(HEADER_PREFIX) + list(cohort.feature_names))
        for s in cohort.subjects:
            w.writerow([s.id, s.label.value, _fmt(s.age), s.sex, _fmt(s.mmse),
                        _fmt(s.education)] + [_fmt(float(v)) for v in s.features])
    return path


# Region blocks as fractions of the region count, and per-label thinning in mm.
# Atrophy is graded and nested: every dementia shares diffuse thinning ("other"),
# AD milder and temporoparietal-led, the FTD variants stronger with frontal
# involvement, the PPA variants split by insular vs anterior-temporal loss.
DEFAULT_TEMPLATE_RULES = {
    "base": 2.5,
    "blocks": {
        "frontal": [0.0, 0.2],
        "insular": [0.2, 0.3],
        "anterior_temporal": [0.3, 0.45],
        "temporoparietal": [0.45, 0.65],
        "other": [0.65, 1.0],
    },
    "offsets": {
        "CN": {},
        "AD": {"other": -0.3, "temporoparietal": -0.45, "frontal": -0.1},
        "bvFTD": {"other": -0.6, "temporoparietal": -0.3, "frontal": -0.6, "insular": -0.3},
        "nfvPPA": {"other": -0.6, "temporoparietal": -0.3, "frontal": -0.3, "insular": -0.5,
                   "anterior_temporal": -0.15},
        "svPPA": {"other": -0.6, "temporoparietal": -0.3, "frontal": -0.3, "anterior_temporal": -0.5,
                  "insular": -0.15},
    },
}


def block_slices(rules, regions):
    """Map block name to the region index range it covers."""
    out = {}
    for name, (lo, hi) in rules["blocks"].items():
        out[name] = slice(int(round(lo * regions)), int(round(hi * regions)))
    return out


def templates_from_rules(rules, regions):
    blocks = block_slices(rules, regions)
    templates = {}
    for lab in LABELS:
        t = np.full(regions, float(rules.get("base", 2.5)))
        for block, delta in rules["offsets"].get(lab.value, {}).items():
            if block not in blocks:
                raise DataError(f"template rule references unknown block {block!r}")
            t[blocks[block]] += delta
        templates[lab] = t
    return templates


@dataclass(frozen=True)
class SyntheticSpec:
    counts: dict
    templates: dict
    std: float
    regions: int
    seed: int

    def __post_init__(self):
        counts = {parse_label(k) if not isinstance(k, DiagnosticLabel) else k: int(v)
                  for k, v in self.counts.items()}
        if any(v < 0 for v in counts.values()):
            raise DataError("class counts must be non-negative")
        if self.std < 0:
            raise DataError("negative std")
        templates = {}
        for k, v in self.templates.items():
            lab = parse_label(k) if not isinstance(k, DiagnosticLabel) else k
            arr = np.asarray(v, dtype=float)
            if arr.shape != (self.regions,):
                raise DataError(f"template for {lab} has length {arr.size}, expected {self.regions}")
            templates[lab] = arr
        missing = [lab for lab, c in counts.items() if c > 0 and lab not in templates]
        if missing:
            raise DataError(f"no template for {', '.join(map(str, missing))}")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "templates", templates)

    @classmethod
    def from_dict(cls, doc):
        try:
            regions = int(doc["regions"])
            counts = doc["counts"]
            if "templates" in doc:
                templates = doc["templates"]
            else:
                templates = templates_from_rules(doc.get("template_rules", DEFAULT_TEMPLATE_RULES), regions)
            return cls(counts, templates, float(doc["std"]), regions, int(doc["seed"]))
        except (KeyError, TypeError) as exc:
            raise DataError(f"bad synthetic spec: {exc}") from None

    @classmethod
    def reference_default(cls, std=0.15, regions=68, seed=0, rules=None):
        return cls(dict(REFERENCE_COUNTS), templates_from_rules(rules or DEFAULT_TEMPLATE_RULES, regions),
                   std, regions, seed)


def load_synthetic_spec(path):
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"bad spec JSON {path}: {exc}") from None
    return SyntheticSpec.from_dict(doc)


def _family(label):
    if label is DiagnosticLabel.CN:
        return "CN"
    if label is DiagnosticLabel.AD:
        return "AD"
    return "FTD"


def generate_synthetic(spec):
    """Draw a cohort: class template plus isotropic Gaussian noise, with demographics."""
    if sum(spec.counts.values()) == 0:
        raise DataError("all class counts are zero")
    if sum(1 for c in spec.counts.values() if c >= 2) < 2:
        raise DataError("need at least two labels with two or more subjects")
    rng = np.random.default_rng(spec.seed)
    subjects = []
    idx = 0
    for lab in LABELS:
        (age_m, age_s), (mmse_m, mmse_s), (edu_m, edu_s) = _DEMOGRAPHICS[_family(lab)]
        for _ in range(spec.counts.get(lab, 0)):
            idx += 1
            feats = spec.templates[lab] + spec.std * rng.standard_normal(spec.regions)
            age = age_m + age_s * rng.standard_normal()
            mmse = float(np.clip(mmse_m + mmse_s * rng.standard_normal(), 0.0, 30.0))
            edu = max(0.0, edu_m + edu_s * rng.standard_normal())
            sex = "M" if rng.random() < _MALE_FRACTION else "F"
            subjects.append(Subject(f"SYN{idx:04d}", lab, feats, age=age, sex=sex,
                                    mmse=mmse, education=edu))
    names = [f"f_{i + 1}" for i in range(spec.regions)]
    return Cohort(subjects, names, {"kind": "synthetic", "seed": spec.seed,
                                    "std": spec.std, "regions": spec.regions})

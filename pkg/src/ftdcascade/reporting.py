"""CSV tables and dependency-free SVG figures for evaluation reports."""
from __future__ import annotations

import csv
import math
from pathlib import Path
from xml.sax.saxutils import escape

TABLE_COLUMNS = ("approach", "row", "accuracy_mean", "accuracy_sd", "sensitivity_mean",
                 "sensitivity_sd", "specificity_mean", "specificity_sd")


def _fmt(v):
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return format(float(v), ".6f")


def _stats(summary):
    return _fmt(summary.get("mean")), _fmt(summary.get("sd"))


def performance_rows(report, approach=None, step_mode=None):
    """Overall row plus one row per step (cascade) for a report dict."""
    doc = report if isinstance(report, dict) else report.to_dict()
    if doc["kind"] == "cascade":
        name = approach or "Hierarchical cascade"
    else:
        name = approach or "Flat multi-class"
    rows = [(name, "overall", *_stats(doc["accuracy"]), *_stats(doc["sensitivity"]),
             *_stats(doc["specificity"]))]
    mode = step_mode or doc.get("step_mode") or "oracle_routed"
    for step in doc.get("steps", {}).values():
        m = step[mode]
        rows.append((name, step["title"], *_stats(m["accuracy"]), *_stats(m["sensitivity"]),
                     *_stats(m["specificity"])))
    return rows


def write_rows(path, rows, columns=TABLE_COLUMNS):
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        w.writerows(rows)
    return path


def write_performance_table(path, reports):
    """Paired layout: each report's overall row, then its step rows."""
    rows = []
    for rep in reports:
        rows.extend(performance_rows(rep))
    return write_rows(path, rows)


def write_smoother_table(path, results):
    """``results`` maps smoother name to ``{"hierarchical": report, "flat": report}``.

    One row per smoother and approach with the overall accuracy.
    """
    rows = []
    for smoother, by_kind in results.items():
        for kind, rep in by_kind.items():
            doc = rep if isinstance(rep, dict) else rep.to_dict()
            rows.append((smoother, kind, *_stats(doc["accuracy"])))
    return write_rows(path, rows, ("smoother", "approach", "accuracy_mean", "accuracy_sd"))


def write_roc_csv(path, points, auc):
    rows = [(format(f, ".9g"), format(t, ".9g")) for f, t in points]
    rows.append(("auc", _fmt(auc)))
    return write_rows(path, rows, ("fpr", "tpr"))


def _svg(width, height, body):
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">\n'
            f'<rect width="{width}" height="{height}" fill="white"/>\n{body}</svg>\n')


def roc_svg(points, auc, title=""):
    size, pad = 360, 48
    span = size - 2 * pad

    def xy(f, t):
        return pad + f * span, size - pad - t * span
    coords = " ".join("{:.2f},{:.2f}".format(*xy(f, t)) for f, t in points)
    auc_text = "n/a" if auc is None or (isinstance(auc, float) and math.isnan(auc)) else f"{auc:.3f}"
    body = [
        f'<rect x="{pad}" y="{pad}" width="{span}" height="{span}" fill="none" stroke="black"/>',
        '<line x1="{:.2f}" y1="{:.2f}" x2="{:.2f}" y2="{:.2f}" stroke="#aaa" '
        'stroke-dasharray="4 3"/>'.format(*xy(0, 0), *xy(1, 1)),
        f'<polyline points="{coords}" fill="none" stroke="#1f5fa8" stroke-width="2"/>',
        f'<text x="{size / 2}" y="{size - 12}" text-anchor="middle">False positive rate</text>',
        f'<text x="14" y="{size / 2}" text-anchor="middle" '
        f'transform="rotate(-90 14 {size / 2})">True positive rate</text>',
        f'<text x="{size / 2}" y="24" text-anchor="middle">{escape(title)} (AUC {auc_text})</text>',
    ]
    return _svg(size, size, "\n".join(body) + "\n")


def bar_svg(names, values, title=""):
    """Horizontal bars, one per entry, in the order given."""
    bar_h, pad_l, pad_t, width = 18, 150, 36, 520
    height = pad_t + bar_h * len(values) + 20
    top = max([abs(float(v)) for v in values] + [1e-300])
    body = [f'<text x="{width / 2}" y="22" text-anchor="middle">{escape(title)}</text>']
    for i, (name, v) in enumerate(zip(names, values)):
        y = pad_t + i * bar_h
        w = (width - pad_l - 60) * abs(float(v)) / top
        body.append(f'<text x="{pad_l - 6}" y="{y + 13}" text-anchor="end">{escape(str(name))}</text>')
        body.append(f'<rect x="{pad_l}" y="{y + 2}" width="{w:.2f}" height="{bar_h - 4}" fill="#c0504d"/>')
        body.append(f'<text x="{pad_l + w + 4:.2f}" y="{y + 13}">{float(v):.3g}</text>')
    return _svg(width, height, "\n".join(body) + "\n")


def write_text(path, text):
    path = Path(path)
    path.write_text(text)
    return path


def write_misclassified(path, report):
    doc = report if isinstance(report, dict) else report.to_dict()
    rows = [(m["rep"], m["id"], m["true"], m["predicted"], m["failing_step"] or "",
             ";".join(f"{name}:{score:.6g}" for name, score in m["path"]))
            for m in doc["misclassified"]]
    return write_rows(path, rows, ("rep", "id", "true", "predicted", "failing_step", "path"))


def write_region_ranking(path, names, magnitude, top=None):
    order = sorted(range(len(magnitude)), key=lambda i: (-abs(float(magnitude[i])), i))
    if top is not None:
        order = order[:top]
    rows = [(rank + 1, names[i], format(abs(float(magnitude[i])), ".9g")) for rank, i in enumerate(order)]
    write_rows(path, rows, ("rank", "feature", "abs_R"))
    return [names[i] for i in order], [abs(float(magnitude[i])) for i in order]

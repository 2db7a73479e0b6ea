"""Figures and text summaries rendered from result CSV files.

All output is self-contained SVG assembled from fixed-precision coordinates,
so rendering the same table twice yields byte-identical documents.  Nothing
here reads clocks or the environment, and every plotted number comes straight
from the input rows.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from xml.sax.saxutils import escape

from .errors import ConfigError, FormatError, RenderError
from .evaluation import distribution_stats, load_roc_csv

PLOT_KINDS = ("bar", "line-triple", "multi-line", "boxplot", "roc",
              "paired-bar")

# series arity each kind accepts; None = one or more
_SERIES_ARITY = {"bar": 1, "line-triple": 3, "multi-line": None,
                 "boxplot": 1, "roc": 2, "paired-bar": 2}

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")

_W, _H = 640.0, 400.0
_ML, _MR, _MT, _MB = 64.0, 24.0, 44.0, 56.0


@dataclass(frozen=True)
class Table:
    columns: tuple
    rows: tuple  # of dicts, column name -> cell string


def read_table(path) -> Table:
    with open(path, encoding="ascii", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise FormatError(f"{path}: empty file, expected a CSV header")
        rows = [dict(r) for r in reader]
    return Table(columns=tuple(reader.fieldnames), rows=tuple(rows))


@dataclass(frozen=True)
class PlotSpec:
    kind: str
    title: str
    series: tuple  # numeric column names
    x: str | None = None  # category or x-value column
    y_range: tuple | None = None
    x_range: tuple | None = None

    def validate(self) -> None:
        if self.kind not in PLOT_KINDS:
            raise ConfigError(f"unknown plot kind {self.kind!r}")
        arity = _SERIES_ARITY[self.kind]
        if not self.series or not all(isinstance(s, str) for s in self.series):
            raise ConfigError("series must name at least one column")
        if arity is not None and len(self.series) != arity:
            raise ConfigError(
                f"{self.kind} takes exactly {arity} series, "
                f"got {len(self.series)}")
        if self.kind in ("bar", "paired-bar", "line-triple", "multi-line") \
                and not self.x:
            raise ConfigError(f"{self.kind} needs an x column")
        for name, rng in (("y_range", self.y_range),
                          ("x_range", self.x_range)):
            if rng is None:
                continue
            lo, hi = rng
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise ConfigError(f"{name} must be finite with lo < hi")


def _f(v) -> str:
    return f"{float(v):.2f}"


class _Svg:
    """Append-only SVG document with fixed two-decimal geometry."""

    def __init__(self, title: str):
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" '
            f'viewBox="0 0 {_f(_W)} {_f(_H)}" '
            f'font-family="sans-serif">',
            f'<rect x="0" y="0" width="{_f(_W)}" height="{_f(_H)}" '
            f'fill="#ffffff"/>',
        ]
        self.text(_W / 2, 24, title, size=14, anchor="middle")

    def line(self, x1, y1, x2, y2, stroke="#333333", width=1.0, dash=None):
        d = f' stroke-dasharray="{dash}"' if dash else ""
        self.parts.append(
            f'<line x1="{_f(x1)}" y1="{_f(y1)}" x2="{_f(x2)}" y2="{_f(y2)}" '
            f'stroke="{stroke}" stroke-width="{_f(width)}"{d}/>')

    def rect(self, x, y, w, h, fill, stroke=None):
        s = f' stroke="{stroke}"' if stroke else ""
        self.parts.append(
            f'<rect x="{_f(x)}" y="{_f(y)}" width="{_f(w)}" '
            f'height="{_f(h)}" fill="{fill}"{s}/>')

    def circle(self, cx, cy, r, fill):
        self.parts.append(
            f'<circle cx="{_f(cx)}" cy="{_f(cy)}" r="{_f(r)}" '
            f'fill="{fill}"/>')

    def polyline(self, points, stroke, width=1.5):
        coords = " ".join(f"{_f(x)},{_f(y)}" for x, y in points)
        self.parts.append(
            f'<polyline points="{coords}" fill="none" stroke="{stroke}" '
            f'stroke-width="{_f(width)}"/>')

    def text(self, x, y, s, size=11, anchor="middle", fill="#222222"):
        self.parts.append(
            f'<text x="{_f(x)}" y="{_f(y)}" font-size="{int(size)}" '
            f'text-anchor="{anchor}" fill="{fill}">{escape(str(s))}</text>')

    def finish(self) -> str:
        return "\n".join(self.parts) + "\n</svg>\n"


def _require_columns(table: Table, names) -> None:
    for name in names:
        if name and name not in table.columns:
            raise RenderError(
                f"column {name!r} missing from table "
                f"(columns: {', '.join(table.columns)})")


def _series_points(table: Table, x: str, y: str) -> list:
    """(x, y) float pairs; rows with an empty cell in either column drop out."""
    pts = []
    for row in table.rows:
        if row[x] == "" or row[y] == "":
            continue
        pts.append((float(row[x]), float(row[y])))
    return pts


def _span(values, requested):
    if requested is not None:
        return float(requested[0]), float(requested[1])
    lo, hi = min(values), max(values)
    if lo == hi:
        return lo - 0.5, hi + 0.5
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def _scales(xlo, xhi, ylo, yhi):
    def sx(v):
        return _ML + (v - xlo) / (xhi - xlo) * (_W - _ML - _MR)

    def sy(v):
        return _H - _MB - (v - ylo) / (yhi - ylo) * (_H - _MT - _MB)

    return sx, sy


def _num_label(v: float) -> str:
    return str(int(v)) if float(v) == int(v) else f"{v:.2f}"


def _draw_frame(svg, sx, sy, xlo, xhi, ylo, yhi, x_ticks=None):
    svg.line(_ML, _H - _MB, _W - _MR, _H - _MB)
    svg.line(_ML, _MT, _ML, _H - _MB)
    for i in range(5):
        v = ylo + (yhi - ylo) * i / 4
        y = sy(v)
        svg.line(_ML - 4, y, _ML, y)
        svg.line(_ML, y, _W - _MR, y, stroke="#dddddd", width=0.5)
        svg.text(_ML - 8, y + 4, f"{v:.2f}", size=10, anchor="end")
    if x_ticks is None:
        x_ticks = [xlo + (xhi - xlo) * i / 4 for i in range(5)]
    for v in x_ticks:
        x = sx(v)
        svg.line(x, _H - _MB, x, _H - _MB + 4)
        svg.text(x, _H - _MB + 18, _num_label(v), size=10)


def _draw_legend(svg, names):
    x0 = _W - _MR - 150
    for i, name in enumerate(names):
        y = _MT + 14 + 16 * i
        color = _PALETTE[i % len(_PALETTE)]
        svg.line(x0, y - 4, x0 + 22, y - 4, stroke=color, width=2.0)
        svg.text(x0 + 28, y, name, size=10, anchor="start")


def _render_lines(spec: PlotSpec, table: Table) -> str:
    per_series = [_series_points(table, spec.x, s) for s in spec.series]
    all_pts = [p for pts in per_series for p in pts]
    if not all_pts:
        raise RenderError("no data rows to plot")
    xlo, xhi = _span([p[0] for p in all_pts], spec.x_range)
    ylo, yhi = _span([p[1] for p in all_pts], spec.y_range)
    sx, sy = _scales(xlo, xhi, ylo, yhi)
    svg = _Svg(spec.title)
    xs = sorted({p[0] for p in all_pts})
    _draw_frame(svg, sx, sy, xlo, xhi, ylo, yhi,
                x_ticks=xs if len(xs) <= 12 else None)
    for i, pts in enumerate(per_series):
        color = _PALETTE[i % len(_PALETTE)]
        pts = sorted(pts)
        if pts:
            svg.polyline([(sx(x), sy(y)) for x, y in pts], stroke=color)
        for x, y in pts:
            svg.circle(sx(x), sy(y), 2.5, fill=color)
    _draw_legend(svg, spec.series)
    return svg.finish()


def _category_rows(spec: PlotSpec, table: Table) -> list:
    out = []
    for row in table.rows:
        if any(row[s] == "" for s in spec.series):
            continue
        out.append((row[spec.x], [float(row[s]) for s in spec.series]))
    if not out:
        raise RenderError("no data rows to plot")
    return out


def _render_bars(spec: PlotSpec, table: Table) -> str:
    cats = _category_rows(spec, table)
    values = [v for _, vs in cats for v in vs]
    ylo, yhi = _span(values + [0.0], spec.y_range)
    sx, sy = _scales(0.0, float(len(cats)), ylo, yhi)
    svg = _Svg(spec.title)
    _draw_frame(svg, sx, sy, 0.0, float(len(cats)), ylo, yhi, x_ticks=[])
    n_series = len(spec.series)
    for i, (label, vals) in enumerate(cats):
        slot = sx(i + 1) - sx(i)
        width = slot * 0.7 / n_series
        for j, v in enumerate(vals):
            x = sx(i) + slot * 0.15 + j * width
            y0, y1 = sy(max(0.0, ylo)), sy(v)
            svg.rect(x, min(y0, y1), width, abs(y0 - y1),
                     fill=_PALETTE[j % len(_PALETTE)])
        svg.text(sx(i) + slot / 2, _H - _MB + 18, label, size=10)
    if n_series > 1:
        _draw_legend(svg, spec.series)
    return svg.finish()


def _render_boxplot(spec: PlotSpec, table: Table) -> str:
    value_col = spec.series[0]
    groups: dict[str, list] = {}
    order = []
    for row in table.rows:
        if row[value_col] == "":
            continue
        key = row[spec.x] if spec.x else value_col
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(float(row[value_col]))
    if not order:
        raise RenderError("no data rows to plot")
    values = [v for vs in groups.values() for v in vs]
    ylo, yhi = _span(values, spec.y_range)
    sx, sy = _scales(0.0, float(len(order)), ylo, yhi)
    svg = _Svg(spec.title)
    _draw_frame(svg, sx, sy, 0.0, float(len(order)), ylo, yhi, x_ticks=[])
    for i, key in enumerate(order):
        st = distribution_stats(groups[key])
        cx = sx(i + 0.5)
        half = (sx(1) - sx(0)) * 0.28
        svg.line(cx, sy(st["min"]), cx, sy(st["max"]), stroke="#555555")
        svg.line(cx - half / 2, sy(st["min"]), cx + half / 2, sy(st["min"]),
                 stroke="#555555")
        svg.line(cx - half / 2, sy(st["max"]), cx + half / 2, sy(st["max"]),
                 stroke="#555555")
        svg.rect(cx - half, sy(st["q3"]), 2 * half,
                 sy(st["q1"]) - sy(st["q3"]), fill="#9ecae1",
                 stroke="#1f77b4")
        svg.line(cx - half, sy(st["median"]), cx + half, sy(st["median"]),
                 stroke="#d62728", width=1.5)
        svg.text(cx, _H - _MB + 18, key, size=10)
    return svg.finish()


def _render_roc(spec: PlotSpec, table: Table) -> str:
    fpr_col, tpr_col = spec.series
    pts = [(float(r[fpr_col]), float(r[tpr_col])) for r in table.rows
           if r[fpr_col] != "" and r[tpr_col] != ""]
    if not pts:
        raise RenderError("no data rows to plot")
    sx, sy = _scales(0.0, 1.0, 0.0, 1.0)
    svg = _Svg(spec.title)
    _draw_frame(svg, sx, sy, 0.0, 1.0, 0.0, 1.0)
    svg.line(sx(0), sy(0), sx(1), sy(1), stroke="#999999", dash="4 3")
    svg.polyline([(sx(x), sy(y)) for x, y in pts], stroke=_PALETTE[0])
    return svg.finish()


def render(spec: PlotSpec, table: Table) -> str:
    """Standalone SVG text for the given plot over the given table."""
    spec.validate()
    _require_columns(table, (spec.x, *spec.series))
    if spec.kind in ("line-triple", "multi-line"):
        return _render_lines(spec, table)
    if spec.kind in ("bar", "paired-bar"):
        return _render_bars(spec, table)
    if spec.kind == "boxplot":
        return _render_boxplot(spec, table)
    return _render_roc(spec, table)


def render_to_file(spec: PlotSpec, table: Table, path) -> None:
    Path(path).write_text(render(spec, table), encoding="ascii",
                          errors="strict")


# --- text summary -----------------------------------------------------------

def _text_table(headers, rows) -> str:
    cells = [list(headers)] + [[str(c) for c in row] for row in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(headers))]
    lines = []
    for idx, row in enumerate(cells):
        padded = [row[0].ljust(widths[0])]
        padded += [row[i].rjust(widths[i]) for i in range(1, len(row))]
        lines.append("  ".join(padded).rstrip())
        if idx == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)


def _fmt(value) -> str:
    return "-" if value is None else f"{value:.4f}"


def _load_summary(results_dir: Path) -> list:
    path = results_dir / "summary.csv"
    if not path.is_file():
        raise ConfigError(f"no summary.csv under {results_dir}")
    rows = []
    for row in read_table(path).rows:
        rows.append({
            "level": int(row["level"]),
            "learner": row["learner"],
            "high": float(row["high"]) if row["high"] else None,
            "avg": float(row["avg"]) if row["avg"] else None,
            "low": float(row["low"]) if row["low"] else None,
            "count": int(row["count"]),
        })
    return rows


def _level_one_accuracies(results_dir: Path) -> dict:
    """(family, learner) -> pooled balanced accuracy, or {} if absent."""
    detail = results_dir / "level_01.csv"
    combos = results_dir / "level_01_combos.csv"
    if not (detail.is_file() and combos.is_file()):
        return {}
    family_of = {row["combo_id"]: row["families"]
                 for row in read_table(combos).rows if row["error"] == ""}
    out = {}
    for row in read_table(detail).rows:
        if row["fold"] != "pooled" or row["combo_id"] not in family_of:
            continue
        out[(family_of[row["combo_id"]], row["learner"])] = \
            float(row["bal_acc"])
    return out


def summarize(results_dir) -> str:
    """Plain-text tables over a run directory's CSV files."""
    results_dir = Path(results_dir)
    summary = _load_summary(results_dir)
    learners = list(dict.fromkeys(r["learner"] for r in summary))
    sections = []

    sections.append("Balanced accuracy by level\n" + _text_table(
        ["level", "learner", "high", "avg", "low", "models"],
        [[r["level"], r["learner"], _fmt(r["high"]), _fmt(r["avg"]),
          _fmt(r["low"]), r["count"]] for r in summary]))

    level1 = _level_one_accuracies(results_dir)
    if level1:
        families = sorted({fam for fam, _ in level1})
        rows = [[fam] + [_fmt(level1.get((fam, lrn))) for lrn in learners]
                for fam in families]
        ranges = []
        for lrn in learners:
            vals = [level1[(fam, lrn)] for fam in families
                    if (fam, lrn) in level1]
            ranges.append(_fmt(max(vals) - min(vals)) if vals else "-")
        rows.append(["range"] + ranges)
        sections.append(
            "Single-family models (level 1), pooled balanced accuracy\n"
            + _text_table(["family"] + learners, rows))

    top = max((r["level"] for r in summary if r["count"] > 0), default=None)
    if top is not None:
        rows = []
        for lrn in learners:
            a1 = next((r["avg"] for r in summary
                       if r["level"] == 1 and r["learner"] == lrn), None)
            af = next((r["avg"] for r in summary
                       if r["level"] == top and r["learner"] == lrn), None)
            delta = None if a1 is None or af is None else a1 - af
            rows.append([lrn, _fmt(a1), _fmt(af), _fmt(delta)])
        sections.append(
            f"Average balanced accuracy, level 1 vs level {top}\n"
            + _text_table(["learner", "level 1", f"level {top}", "delta"],
                          rows))

    return "\n\n".join(sections) + "\n"


# --- standard figure set ----------------------------------------------------

FIGURE_GROUPS = ("levels", "learners", "families", "box", "delta", "roc")


def _summary_table_for(summary, learner) -> Table:
    rows = []
    for r in summary:
        if r["learner"] != learner or r["count"] == 0:
            continue
        rows.append({"level": str(r["level"]), "high": repr(r["high"]),
                     "avg": repr(r["avg"]), "low": repr(r["low"])})
    return Table(columns=("level", "high", "avg", "low"), rows=tuple(rows))


def build_figures(results_dir, groups=None) -> list:
    """(filename, svg text) pairs for the standard figure set.

    groups selects a subset of FIGURE_GROUPS; None means all of them.
    Figures whose source files are missing from the run directory are
    skipped, but an unknown group name is a configuration error.
    """
    results_dir = Path(results_dir)
    if groups is None:
        groups = FIGURE_GROUPS
    unknown = [g for g in groups if g not in FIGURE_GROUPS]
    if unknown:
        raise ConfigError(
            f"unknown figure groups {unknown!r}, "
            f"choose from {', '.join(FIGURE_GROUPS)}")
    summary = _load_summary(results_dir)
    learners = list(dict.fromkeys(r["learner"] for r in summary))
    figures = []

    if "levels" in groups:
        for lrn in learners:
            table = _summary_table_for(summary, lrn)
            if not table.rows:
                continue
            spec = PlotSpec(kind="line-triple",
                            title=f"{lrn}: balanced accuracy by level",
                            series=("high", "avg", "low"), x="level")
            figures.append((f"levels_{lrn}.svg", render(spec, table)))

    if "learners" in groups:
        levels = sorted({r["level"] for r in summary if r["count"] > 0})
        rows = []
        for level in levels:
            row = {"level": str(level)}
            for lrn in learners:
                avg = next((r["avg"] for r in summary
                            if r["level"] == level and r["learner"] == lrn
                            and r["count"] > 0), None)
                row[lrn] = "" if avg is None else repr(avg)
            rows.append(row)
        if rows:
            table = Table(columns=("level", *learners), rows=tuple(rows))
            spec = PlotSpec(kind="multi-line",
                            title="average balanced accuracy by level",
                            series=tuple(learners), x="level")
            figures.append(("learners_avg.svg", render(spec, table)))

    if "families" in groups or "box" in groups:
        level1 = _level_one_accuracies(results_dir)
        for lrn in learners:
            pairs = sorted((fam, acc) for (fam, who), acc in level1.items()
                           if who == lrn)
            if not pairs:
                continue
            table = Table(
                columns=("family", "bal_acc"),
                rows=tuple({"family": fam, "bal_acc": repr(acc)}
                           for fam, acc in pairs))
            if "families" in groups:
                spec = PlotSpec(kind="bar",
                                title=f"{lrn}: single-family balanced "
                                      "accuracy",
                                series=("bal_acc",), x="family",
                                y_range=(0.0, 1.0))
                figures.append((f"families_{lrn}.svg", render(spec, table)))
            if "box" in groups:
                spec = PlotSpec(kind="boxplot",
                                title=f"{lrn}: spread of single-family "
                                      "balanced accuracy",
                                series=("bal_acc",))
                figures.append((f"box_{lrn}.svg", render(spec, table)))

    if "delta" in groups:
        top = max((r["level"] for r in summary if r["count"] > 0),
                  default=None)
        rows = []
        if top is not None and top != 1:
            for lrn in learners:
                a1 = next((r["avg"] for r in summary
                           if r["level"] == 1 and r["learner"] == lrn
                           and r["count"] > 0), None)
                af = next((r["avg"] for r in summary
                           if r["level"] == top and r["learner"] == lrn
                           and r["count"] > 0), None)
                if a1 is None or af is None:
                    continue
                rows.append({"learner": lrn, "level_1": repr(a1),
                             f"level_{top}": repr(af)})
        if rows:
            table = Table(columns=("learner", "level_1", f"level_{top}"),
                          rows=tuple(rows))
            spec = PlotSpec(kind="paired-bar",
                            title=f"average balanced accuracy: level 1 vs "
                                  f"level {top}",
                            series=("level_1", f"level_{top}"), x="learner",
                            y_range=(0.0, 1.0))
            figures.append(("delta.svg", render(spec, table)))

    if "roc" in groups:
        for path in sorted(results_dir.glob("roc_*.csv")):
            curve = load_roc_csv(path)
            table = Table(
                columns=("fpr", "tpr"),
                rows=tuple({"fpr": repr(x), "tpr": repr(y)}
                           for x, y in curve.points))
            spec = PlotSpec(kind="roc",
                            title=f"{path.stem} (AUC {curve.auc:.4f})",
                            series=("fpr", "tpr"))
            figures.append((f"{path.stem}.svg", render(spec, table)))

    return figures

"""Figure rendering: line charts with error bands written as standalone SVG.

SVG output is deterministic: a fixed hash salt replaces the default uuid
identifiers and the date metadata is suppressed.
"""
from __future__ import annotations

import io
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .errors import DomainError  # noqa: E402

matplotlib.rcParams["svg.hashsalt"] = "innodpc"
_SVG_META = {"Date": None, "Creator": "innodpc"}


def _series(table: list[dict], spec: dict):
    """Split rows into per-series (x, y, band) arrays, filtered and sorted."""
    xcol = spec.get("x", "sweep")
    ycol = spec["y"]
    series_col = spec.get("series", "method")
    band_col = spec.get("band")
    filt = spec.get("filter", {})
    rows = [r for r in table
            if all(str(r.get(k)) == str(v) for k, v in filt.items())
            and r.get(ycol) not in (None, "")]
    names = sorted({r[series_col] for r in rows})
    out = []
    for name in names:
        pts = [(float(r[xcol]), float(r[ycol]),
                float(r[band_col]) if band_col and r.get(band_col)
                not in (None, "") else 0.0)
               for r in rows if r[series_col] == name]
        pts.sort()
        out.append((name, pts))
    return out


def emit_plot(table: list[dict], spec: dict, path=None) -> str:
    """Render a line chart with one series per method and error bands.

    ``table`` is a list of dict rows (e.g. parsed summary.csv); ``spec``
    selects columns: ``x``, ``y``, ``series``, optional ``band`` (half-width
    column), ``filter`` (column: value), ``logy``, labels.  Returns the SVG
    document; writes it to ``path`` when given.
    """
    if not table:
        raise DomainError("plot table is empty")
    groups = _series(table, spec)
    if not any(pts for _, pts in groups):
        raise DomainError(f"no rows with values in column {spec['y']!r}")
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    try:
        for name, pts in groups:
            if not pts:
                continue
            xs = [p[0] for p in pts]
            ys = [p[1] for p in pts]
            hw = [p[2] for p in pts]
            ax.plot(xs, ys, marker="o", markersize=3, label=str(name))
            if any(hw):
                lo = [y - h for y, h in zip(ys, hw)]
                hi = [y + h for y, h in zip(ys, hw)]
                ax.fill_between(xs, lo, hi, alpha=0.2, linewidth=0)
        if spec.get("logy"):
            ax.set_yscale("log")
        ax.set_xlabel(spec.get("xlabel", spec.get("x", "sweep")))
        ax.set_ylabel(spec.get("ylabel", spec["y"]))
        if spec.get("title"):
            ax.set_title(spec["title"])
        ax.legend(frameon=False, fontsize=8)
        ax.grid(True, alpha=0.3)
        fig.tight_layout()
        buf = io.StringIO()
        fig.savefig(buf, format="svg", metadata=_SVG_META)
    finally:
        plt.close(fig)
    svg = buf.getvalue()
    if path is not None:
        Path(path).write_text(svg)
    return svg


def render_summary(summary_rows: list[dict], sweep_variable: str,
                   path) -> None:
    """Multi-panel figure for an experiment run's summary table."""
    if not summary_rows:
        raise DomainError("summary table is empty")
    if sweep_variable == "rho":
        panels = [
            ({"y": "mean_j", "band": "se_j", "xlabel": "ARX order",
              "ylabel": "total control cost",
              "filter": {}}, lambda r: r["mean_j"] is not None),
            ({"y": "mean_angle", "band": "se_angle", "xlabel": "ARX order",
              "ylabel": "largest principal angle (rad)",
              "filter": {}}, lambda r: r["mean_angle"] is not None),
        ]
    else:
        panels = [
            ({"y": "mean_angle", "band": "se_angle",
              "xlabel": "training length",
              "ylabel": "largest principal angle (rad)",
              "filter": {"loop_mode": mode}, "title": f"{mode}-loop data"},
             lambda r, m=mode: r["loop_mode"] == m)
            for mode in sorted({r["loop_mode"] for r in summary_rows})
        ]
    fig, axes = plt.subplots(1, len(panels), figsize=(5.5 * len(panels), 4.0))
    if len(panels) == 1:
        axes = [axes]
    try:
        for ax, (spec, keep) in zip(axes, panels):
            rows = [r for r in summary_rows
                    if keep(r) and r.get(spec["y"]) is not None]
            for name in sorted({r["method"] for r in rows}):
                pts = sorted((float(r["sweep"]), r[spec["y"]],
                              r.get(spec["band"]) or 0.0)
                             for r in rows if r["method"] == name)
                if not pts:
                    continue
                xs, ys, hw = zip(*pts)
                ax.plot(xs, ys, marker="o", markersize=3, label=name)
                if any(hw):
                    ax.fill_between(xs, [y - h for y, h in zip(ys, hw)],
                                    [y + h for y, h in zip(ys, hw)],
                                    alpha=0.2, linewidth=0)
            ax.set_xlabel(spec["xlabel"])
            ax.set_ylabel(spec["ylabel"])
            if spec.get("title"):
                ax.set_title(spec["title"])
            ax.legend(frameon=False, fontsize=8)
            ax.grid(True, alpha=0.3)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata=_SVG_META)
    finally:
        plt.close(fig)

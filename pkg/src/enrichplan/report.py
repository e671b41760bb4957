"""Self-contained HTML report of a design-and-performance run.

Embeds the boundary plots and performance curves as base64 PNG images and the
exported tables as plain HTML tables, so the single file can be archived or
printed without any external assets.
"""

from __future__ import annotations

import base64
import html
import io
from typing import Dict, Mapping, Optional

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .boundaries import BoundaryTable
from .configio import export_design_table, export_performance_table, parse_table
from .model import DesignKind, EnrollmentSchedule
from .simulate import PerformanceGrid

_DESIGN_TITLES = {
    DesignKind.ADAPTIVE: "Adaptive design (AD)",
    DesignKind.STANDARD_COMBINED: "Standard combined-population design (SC)",
    DesignKind.STANDARD_SUBPOP1: "Standard subpopulation-1 design (SS)",
}

_PNG_METADATA = {"Software": "enrichplan"}


def _png_data_uri(fig) -> str:
    buf = io.BytesIO()
    fig.savefig(buf, format="png", dpi=110, metadata=_PNG_METADATA)
    plt.close(fig)
    return "data:image/png;base64," + base64.b64encode(buf.getvalue()).decode("ascii")


def _boundary_figure(table: BoundaryTable, sched: EnrollmentSchedule):
    fig, ax = plt.subplots(figsize=(6.2, 3.6))
    stages = range(1, sched.stages + 1)
    series = [
        ("efficacy_subpop1", "efficacy Z1", "C0", "-"),
        ("efficacy_combined", "efficacy ZC", "C1", "-"),
        ("futility_subpop1", "futility Z1", "C0", "--"),
        ("futility_subpop2", "futility Z2", "C2", "--"),
        ("futility_combined", "futility ZC", "C1", "--"),
    ]
    for attr, label, color, style in series:
        values = getattr(table, attr)
        if values is None:
            continue
        xs = [k for k, v in zip(stages, values) if v == v and abs(v) != float("inf")]
        ys = [v for v in values if v == v and abs(v) != float("inf")]
        ax.plot(xs, ys, style, color=color, marker="o", label=label)
    ax.set_xlabel("stage")
    ax.set_ylabel("z-statistic boundary")
    ax.set_xticks(list(stages))
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    return fig


def _performance_figures(grid: PerformanceGrid) -> Dict[str, str]:
    figures = {}
    x = grid.effects
    panels = (
        ("Power", (("AD reject H0C", DesignKind.ADAPTIVE, "reject_h0c"),
                   ("AD reject H01", DesignKind.ADAPTIVE, "reject_h01"),
                   ("AD reject any", DesignKind.ADAPTIVE, "reject_any"),
                   ("SC reject H0C", DesignKind.STANDARD_COMBINED, "reject_h0c"),
                   ("SS reject H01", DesignKind.STANDARD_SUBPOP1, "reject_h01"))),
        ("Expected sample size", (("AD", DesignKind.ADAPTIVE, "expected_total"),
                                  ("SC", DesignKind.STANDARD_COMBINED, "expected_total"),
                                  ("SS", DesignKind.STANDARD_SUBPOP1, "expected_total"))),
        ("Expected duration (years)", (("AD", DesignKind.ADAPTIVE, "expected_duration"),
                                       ("SC", DesignKind.STANDARD_COMBINED, "expected_duration"),
                                       ("SS", DesignKind.STANDARD_SUBPOP1, "expected_duration"))),
    )
    for title, series in panels:
        fig, ax = plt.subplots(figsize=(6.2, 3.6))
        for label, kind, attr in series:
            ax.plot(x, getattr(grid.designs[kind], attr), marker="o", label=label)
        ax.set_xlabel("treatment effect in subpopulation 2")
        ax.set_ylabel(title)
        ax.grid(alpha=0.3)
        ax.legend(fontsize=8)
        fig.tight_layout()
        figures[title] = _png_data_uri(fig)
    return figures


def _csv_to_html_table(csv_text: str) -> str:
    rows = parse_table(csv_text)
    parts = ["<table>"]
    for i, row in enumerate(rows):
        tag = "th" if i == 0 else "td"
        cells = "".join(f"<{tag}>{html.escape(cell)}</{tag}>" for cell in row)
        parts.append(f"<tr>{cells}</tr>")
    parts.append("</table>")
    return "".join(parts)


def render_report(tables: Mapping[DesignKind, BoundaryTable],
                  schedules: Mapping[DesignKind, EnrollmentSchedule],
                  grid: Optional[PerformanceGrid] = None,
                  parameters: Optional[Mapping[str, object]] = None) -> str:
    """Render a single-page HTML report of designs and (optionally) performance."""
    sections = []
    if parameters:
        rows = "".join(f"<tr><td>{html.escape(str(k))}</td><td>{html.escape(str(v))}</td></tr>"
                       for k, v in parameters.items())
        sections.append(f"<h2>Parameters</h2><table><tr><th>parameter</th>"
                        f"<th>value</th></tr>{rows}</table>")
    for kind in DesignKind:
        table, sched = tables[kind], schedules[kind]
        uri = _png_data_uri(_boundary_figure(table, sched))
        sections.append(
            f"<h2>{html.escape(_DESIGN_TITLES[kind])}</h2>"
            f'<img alt="boundaries" src="{uri}"/>'
            + _csv_to_html_table(export_design_table(table, sched)))
    if grid is not None:
        sections.append("<h2>Performance</h2>")
        for title, uri in _performance_figures(grid).items():
            sections.append(f"<h3>{html.escape(title)}</h3>"
                            f'<img alt="{html.escape(title)}" src="{uri}"/>')
        sections.append(_csv_to_html_table(export_performance_table(grid)))
    body = "\n".join(sections)
    return (
        "<!DOCTYPE html><html><head><meta charset=\"utf-8\"/>"
        "<title>Trial design comparison</title>"
        "<style>body{font-family:sans-serif;max-width:60rem;margin:2rem auto;}"
        "table{border-collapse:collapse;margin:1rem 0;}"
        "td,th{border:1px solid #999;padding:0.2rem 0.5rem;text-align:right;}"
        "th{background:#eee;}img{max-width:100%;}</style></head><body>"
        "<h1>Trial design comparison</h1>"
        f"{body}</body></html>"
    )

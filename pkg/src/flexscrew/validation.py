"""Force-displacement curves, experiment post-processing and error metrics."""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass
from xml.sax.saxutils import escape

import numpy as np

CSV_HEADER = ("displacement_mm", "force_n")


class CurveError(ValueError):
    """Base class for data problems in force-displacement curves."""


class CurveParseError(CurveError):
    pass


class CurveIntegrityError(CurveError):
    pass


class GridError(CurveError):
    pass


class RangeError(CurveError):
    pass


@dataclass(frozen=True, eq=False)
class FDCurve:
    """Ordered (tip displacement mm, force N) samples."""

    displacement: np.ndarray
    force: np.ndarray
    label: str = ""

    def __post_init__(self):
        d = np.array(self.displacement, dtype=float).ravel()
        f = np.array(self.force, dtype=float).ravel()
        if d.shape != f.shape:
            raise CurveIntegrityError(f"{len(d)} displacements but {len(f)} forces")
        if len(d) == 0:
            raise CurveIntegrityError("curve has no samples")
        if not (np.all(np.isfinite(d)) and np.all(np.isfinite(f))):
            raise CurveIntegrityError("curve contains non-finite values")
        if d[0] < 0:
            raise CurveIntegrityError(f"first displacement {d[0]} is negative")
        steps = np.diff(d)
        if np.any(steps <= 0):
            k = int(np.argmax(steps <= 0)) + 1
            raise CurveIntegrityError(f"displacement not strictly increasing at sample {k}")
        d.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "displacement", d)
        object.__setattr__(self, "force", f)

    def __len__(self):
        return len(self.displacement)

    def __eq__(self, other):
        if not isinstance(other, FDCurve):
            return NotImplemented
        return (
            self.label == other.label
            and np.array_equal(self.displacement, other.displacement)
            and np.array_equal(self.force, other.force)
        )

    @property
    def samples(self) -> list[tuple[float, float]]:
        return list(zip(self.displacement.tolist(), self.force.tolist()))

    def relabel(self, label: str) -> "FDCurve":
        return FDCurve(self.displacement, self.force, label)


@dataclass(frozen=True)
class MetricsReport:
    """One comparison row: absolute force differences between model and experiment (N)."""

    mae: float
    rmse: float
    max_diff: float
    min_diff: float
    std_diff: float
    n: int
    label: str = ""

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("metrics need at least two samples")
        tol = 1e-12 * max(1.0, self.max_diff)
        if not (0 <= self.min_diff <= self.mae + tol <= self.rmse + 2 * tol <= self.max_diff + 3 * tol):
            raise ValueError(f"inconsistent metrics: {self}")


def _label_from_path(path) -> str:
    stem = os.path.splitext(os.path.basename(os.fspath(path)))[0]
    return stem.replace("_", "/")


def load_curve_csv(source, label: str | None = None) -> FDCurve:
    """Read a ``displacement_mm,force_n`` CSV from a path or text stream.

    Raises CurveParseError (with the line number) for malformed rows and
    CurveIntegrityError for empty or non-increasing data.
    """
    if hasattr(source, "read"):
        text = source.read()
        name = getattr(source, "name", "<stream>")
    else:
        name = os.fspath(source)
        with open(name, encoding="utf-8", newline="") as fh:
            text = fh.read()
        if label is None:
            label = _label_from_path(name)
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    text = text.lstrip("﻿")

    rows = list(csv.reader(io.StringIO(text, newline="")))
    if not rows or tuple(c.strip() for c in rows[0]) != CSV_HEADER:
        raise CurveParseError(f"{name}:1: expected header {','.join(CSV_HEADER)}")
    disp, force = [], []
    prev = None
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            raise CurveParseError(f"{name}:{lineno}: expected 2 fields, got {len(row)}")
        try:
            d, f = float(row[0]), float(row[1])
        except ValueError:
            raise CurveParseError(f"{name}:{lineno}: non-numeric value in {row!r}") from None
        if not (math.isfinite(d) and math.isfinite(f)):
            raise CurveParseError(f"{name}:{lineno}: non-finite value in {row!r}")
        if prev is not None and d <= prev:
            raise CurveIntegrityError(
                f"{name}:{lineno}: displacement {d} does not increase (previous {prev})"
            )
        prev = d
        disp.append(d)
        force.append(f)
    if not disp:
        raise CurveIntegrityError(f"{name}: no data rows")
    return FDCurve(disp, force, label or "")


def curve_csv_text(curve: FDCurve) -> str:
    lines = [",".join(CSV_HEADER)]
    lines += [f"{d!r},{f!r}" for d, f in curve.samples]
    return "\n".join(lines) + "\n"


def write_curve_csv(curve: FDCurve, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(curve_csv_text(curve))


def zero_offset(curve: FDCurve) -> FDCurve:
    """Subtract the first force reading from every sample (gauge zeroing)."""
    return FDCurve(curve.displacement, curve.force - curve.force[0], curve.label)


def _first_grid_mismatch(a: np.ndarray, b: np.ndarray) -> str:
    if len(a) != len(b):
        return f"lengths differ ({len(a)} vs {len(b)})"
    k = int(np.argmax(a != b))
    return f"sample {k}: {a[k]!r} vs {b[k]!r}"


def average_runs(runs: list[FDCurve], label: str | None = None) -> FDCurve:
    """Pointwise mean force of repeated runs sharing one displacement grid."""
    if not runs:
        raise ValueError("no runs to average")
    grid = runs[0].displacement
    for k, run in enumerate(runs[1:], start=1):
        if len(run) != len(grid) or not np.array_equal(run.displacement, grid):
            raise GridError(f"run {k} grid differs from run 0 at {_first_grid_mismatch(grid, run.displacement)}")
    mean = np.mean(np.stack([r.force for r in runs]), axis=0)
    return FDCurve(grid, mean, runs[0].label if label is None else label)


def resample(curve: FDCurve, grid) -> FDCurve:
    """Piecewise-linear interpolation onto ``grid`` (no extrapolation)."""
    grid = np.asarray(grid, dtype=float).ravel()
    lo, hi = curve.displacement[0], curve.displacement[-1]
    outside = (grid < lo) | (grid > hi)
    if np.any(outside):
        bad = grid[outside][0]
        raise RangeError(f"grid point {bad} outside curve range [{lo}, {hi}]")
    return FDCurve(grid, np.interp(grid, curve.displacement, curve.force), curve.label)


def compute_metrics(fe: FDCurve, exp: FDCurve, label: str | None = None) -> MetricsReport:
    """Error statistics of |fe - exp| over the shared grid, skipping displacement 0."""
    if len(fe) != len(exp) or not np.array_equal(fe.displacement, exp.displacement):
        raise GridError(f"grids differ at {_first_grid_mismatch(fe.displacement, exp.displacement)}")
    keep = fe.displacement != 0.0
    d = np.abs(fe.force[keep] - exp.force[keep])
    if len(d) < 2:
        raise ValueError(f"need at least 2 nonzero-displacement samples, got {len(d)}")
    # scale by the largest difference so squaring cannot underflow or overflow
    peak = float(np.max(d))
    rms = peak * float(np.sqrt(np.mean((d / peak) ** 2))) if peak > 0 else 0.0
    return MetricsReport(
        mae=float(np.mean(d)),
        rmse=rms,
        max_diff=float(np.max(d)),
        min_diff=float(np.min(d)),
        std_diff=float(np.std(d, ddof=1)),
        n=len(d),
        label=fe.label if label is None else label,
    )


def experimental_average(runs: list[FDCurve], label: str = "experiment") -> FDCurve:
    """Zero each run, bring them onto the first run's grid, and average."""
    if not runs:
        raise ValueError("no experimental runs")
    zeroed = [zero_offset(r) for r in runs]
    grid = zeroed[0].displacement
    aligned = [zeroed[0]] + [
        r if np.array_equal(r.displacement, grid) else resample(r, grid) for r in zeroed[1:]
    ]
    return average_runs(aligned, label=label)


def validate_curves(fe_curves: list[FDCurve], exp_runs: list[FDCurve]) -> list[MetricsReport]:
    """Full comparison pipeline: one report per model curve, in input order."""
    exp = experimental_average(exp_runs)
    return [compute_metrics(resample(fe, exp.displacement), exp, fe.label) for fe in fe_curves]


REPORT_COLUMNS = ("MAE", "RMSE", "Max", "Min", "Std")


def render_report(reports: list[MetricsReport]) -> str:
    """Fixed-column text table, one row per material, two decimals in N."""
    if not reports:
        raise ValueError("no reports to render")
    label_w = max(7, *(len(r.label) for r in reports))
    cells = [
        [f"{x:.2f}" for x in (r.mae, r.rmse, r.max_diff, r.min_diff, r.std_diff)] for r in reports
    ]
    widths = [max(len(h), *(len(row[k]) for row in cells)) for k, h in enumerate(REPORT_COLUMNS)]
    lines = [
        "Young's modulus (XY)/(Z) in GPa; MAE, RMSE, Maximum Difference, "
        "Minimum Difference, Standard Deviation in N",
        "  ".join(["XY/Z".ljust(label_w)] + [h.rjust(w) for h, w in zip(REPORT_COLUMNS, widths)]),
    ]
    for r, row in zip(reports, cells):
        lines.append("  ".join([r.label.ljust(label_w)] + [c.rjust(w) for c, w in zip(row, widths)]))
    return "\n".join(lines) + "\n"


def metrics_csv_text(reports: list[MetricsReport]) -> str:
    out = ["label,mae_n,rmse_n,max_diff_n,min_diff_n,std_diff_n,n"]
    for r in reports:
        out.append(
            f"{r.label},{r.mae!r},{r.rmse!r},{r.max_diff!r},{r.min_diff!r},{r.std_diff!r},{r.n}"
        )
    return "\n".join(out) + "\n"


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")


def _ticks(lo, hi, target=6):
    span = hi - lo
    raw = span / target
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=10 * mag)
    first = math.ceil(lo / step - 1e-9) * step
    n = int(math.floor((hi - first) / step + 1e-9)) + 1
    return [first + k * step for k in range(n)]


def _fmt_tick(x):
    return f"{x:.6g}" if abs(x) > 1e-12 else "0"


def overlay_svg(curves: list[FDCurve], width: int = 640, height: int = 440) -> str:
    """Standalone SVG overlay of force-displacement curves with a legend."""
    if not curves:
        raise ValueError("no curves to plot")
    xs = np.concatenate([c.displacement for c in curves])
    ys = np.concatenate([c.force for c in curves])
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys.min()), float(ys.max())
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    mx, my = 0.05 * (x1 - x0), 0.05 * (y1 - y0)
    x0, x1, y0, y1 = x0 - mx, x1 + mx, y0 - my, y1 + my

    left, right, top, bottom = 70, 20, 20, 60
    pw, ph = width - left - right, height - top - bottom

    def px(x):
        return left + (x - x0) / (x1 - x0) * pw

    def py(y):
        return top + (y1 - y) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="white" stroke="black"/>',
    ]
    for t in _ticks(x0, x1):
        X = px(t)
        out.append(f'<line x1="{X:.2f}" y1="{top + ph}" x2="{X:.2f}" y2="{top + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{X:.2f}" y="{top + ph + 18}" text-anchor="middle">{_fmt_tick(t)}</text>')
    for t in _ticks(y0, y1):
        Y = py(t)
        out.append(f'<line x1="{left - 5}" y1="{Y:.2f}" x2="{left}" y2="{Y:.2f}" stroke="black"/>')
        out.append(f'<text x="{left - 8}" y="{Y + 4:.2f}" text-anchor="end">{_fmt_tick(t)}</text>')
    out.append(
        f'<text x="{left + pw / 2:.1f}" y="{height - 15}" text-anchor="middle">Tip displacement (mm)</text>'
    )
    out.append(
        f'<text x="18" y="{top + ph / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 18 {top + ph / 2:.1f})">Force (N)</text>'
    )
    for k, c in enumerate(curves):
        color = _PALETTE[k % len(_PALETTE)]
        pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in c.samples)
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
    for k, c in enumerate(curves):
        color = _PALETTE[k % len(_PALETTE)]
        ly = top + 14 + 16 * k
        out.append(
            f'<line x1="{left + 10}" y1="{ly}" x2="{left + 30}" y2="{ly}" stroke="{color}" stroke-width="2"/>'
        )
        out.append(f'<text x="{left + 36}" y="{ly + 4}">{escape(c.label or f"curve {k + 1}")}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_overlay_svg(curves: list[FDCurve], destination=None) -> bytes:
    """Render the overlay and write it to a path or binary stream if given."""
    data = overlay_svg(curves).encode("utf-8")
    if destination is None:
        return data
    if hasattr(destination, "write"):
        destination.write(data)
        return data
    try:
        with open(destination, "wb") as fh:
            fh.write(data)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write SVG to {os.fspath(destination)}: {exc.strerror}") from exc
    return data

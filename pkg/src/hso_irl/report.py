"""CSV and SVG output for simulation runs."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .basis import extract_solution, sym_unvec
from .errors import ExtractionError
from .simulation import SimulationLog, SimulationResult

FLOAT_FMT = "%.9g"


def _fmt(v: float) -> str:
    return FLOAT_FMT % v


def write_timeseries(log: SimulationLog, path) -> Path:
    """Write the metric log with a header row, 9 significant digits per value."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        fh.write(",".join(log.columns) + "\n")
        for row in log.rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    return path


def read_timeseries(path) -> tuple[list[str], np.ndarray]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    return header, np.array([[float(v) for v in r] for r in body], dtype=float).reshape(-1, len(header))


def write_final_solution(result: SimulationResult, path) -> Path:
    """Long-format CSV ``quantity,row,col,value`` of the final estimate and the expert gain."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mats = {}
    try:
        est = extract_solution(result.weights(), result.scenario.sys.B)
        mats.update(S_hat=est.S, Q_hat=est.Q, R_hat=est.R, K_hat=est.K)
    except ExtractionError:
        wv = result.weights()
        n, m = result.scenario.sys.n, result.scenario.sys.m
        mats.update(S_hat=sym_unvec(wv.w_S, n), Q_hat=sym_unvec(wv.w_Q, n),
                    R_hat=sym_unvec(np.concatenate([[wv.r1], wv.w_R_minus]), m))
    mats["K_expert"] = result.expert.K
    with path.open("w", newline="") as fh:
        fh.write("quantity,row,col,value\n")
        for name, M in mats.items():
            M = np.atleast_2d(M)
            for i, j in np.ndindex(M.shape):
                fh.write(f"{name},{i},{j},{_fmt(M[i, j])}\n")
    return path


@dataclass(frozen=True)
class RunSummary:
    final_delta: float
    gain_error: float
    gain_error_rel: float
    equivalent: bool
    wall_clock: float
    swap_count: int
    fi_ok: bool

    def line(self) -> str:
        return (f"summary: delta={self.final_delta:.6g} gain_error={self.gain_error:.6g} "
                f"(rel {self.gain_error_rel:.4g}) equivalent={str(self.equivalent).lower()} "
                f"swaps={self.swap_count} fi={str(self.fi_ok).lower()} wall={self.wall_clock:.2f}s")


# -- SVG -------------------------------------------------------------------

_W, _H = 640, 360
_ML, _MR, _MT, _MB = 70, 20, 30, 40
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
           "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#393b79", "#637939")


def _ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    return [lo + (hi - lo) * k / (count - 1) for k in range(count)]


def line_chart(t, series: dict[str, np.ndarray], title: str, ylabel: str = "", log_y: bool = False) -> str:
    """Render series against ``t`` as a standalone SVG document.

    Non-finite points (and non-positive ones on a log axis) break the line.
    """
    t = np.asarray(t, dtype=float)
    data = {}
    for name, y in series.items():
        y = np.asarray(y, dtype=float)
        ok = np.isfinite(y) & np.isfinite(t)
        if log_y:
            ok &= y > 0
            y = np.where(ok, np.log10(np.where(ok, y, 1.0)), np.nan)
        data[name] = np.where(ok, y, np.nan)
    finite = np.concatenate([v[np.isfinite(v)] for v in data.values()] + [np.empty(0)])
    ylo, yhi = (float(finite.min()), float(finite.max())) if finite.size else (0.0, 1.0)
    if yhi - ylo < 1e-12 * max(1.0, abs(yhi)):
        ylo, yhi = ylo - 0.5, yhi + 0.5
    tlo, thi = (float(t.min()), float(t.max())) if t.size else (0.0, 1.0)
    if thi <= tlo:
        thi = tlo + 1.0
    pw, ph = _W - _ML - _MR, _H - _MT - _MB

    def px(tv):
        return _ML + pw * (tv - tlo) / (thi - tlo)

    def py(yv):
        return _MT + ph * (1.0 - (yv - ylo) / (yhi - ylo))

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" viewBox="0 0 {_W} {_H}">',
           f'<rect width="{_W}" height="{_H}" fill="white"/>',
           f'<text x="{_W / 2:.1f}" y="18" text-anchor="middle" font-size="14">{escape(title)}</text>',
           f'<rect x="{_ML}" y="{_MT}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for tv in _ticks(tlo, thi):
        out.append(f'<text x="{px(tv):.1f}" y="{_H - _MB + 15}" text-anchor="middle" font-size="10">{tv:.3g}</text>')
    for yv in _ticks(ylo, yhi):
        label = f"1e{yv:.2g}" if log_y else f"{yv:.3g}"
        out.append(f'<text x="{_ML - 5}" y="{py(yv) + 3:.1f}" text-anchor="end" font-size="10">{label}</text>')
    out.append(f'<text x="{_ML + pw / 2:.1f}" y="{_H - 5}" text-anchor="middle" font-size="11">t [s]</text>')
    if ylabel:
        out.append(f'<text x="12" y="{_MT + ph / 2:.1f}" font-size="11" text-anchor="middle" '
                   f'transform="rotate(-90 12 {_MT + ph / 2:.1f})">{escape(ylabel)}</text>')
    for k, (name, y) in enumerate(data.items()):
        color = _COLORS[k % len(_COLORS)]
        runs, cur = [], []
        for tv, yv in zip(t, y):
            if math.isfinite(yv):
                cur.append(f"{px(tv):.2f},{py(yv):.2f}")
            elif cur:
                runs.append(cur)
                cur = []
        if cur:
            runs.append(cur)
        for pts in runs:
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{" ".join(pts)}"/>')
        out.append(f'<text x="{_ML + pw - 5}" y="{_MT + 14 + 13 * k}" text-anchor="end" font-size="10" '
                   f'fill="{color}">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_svgs(log: SimulationLog, out_dir) -> list[Path]:
    """One chart per metric: delta norm, gain error, Q-hat diagonal, R-hat diagonal."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    t = log.column("t")
    charts = {
        "delta_norm.svg": line_chart(t, {"||Delta||": log.column("delta_norm")}, "Residual norm", "log10 ||Delta||",
                                     log_y=True),
        "gain_error.svg": line_chart(t, {"||K_hat - K||_F": log.column("gain_error_fro")}, "Gain error",
                                     "||K_hat - K||_F"),
        "qhat_diag.svg": line_chart(t, {f"q_hat_{i}": log.column(f"q_hat_{i}") for i in range(log.n)},
                                    "Q-hat diagonal", "value"),
        "rhat_diag.svg": line_chart(t, {f"r_hat_{j}": log.column(f"r_hat_{j}") for j in range(log.m)},
                                    "R-hat diagonal", "value"),
    }
    paths = []
    for name, doc in charts.items():
        p = out_dir / name
        p.write_text(doc)
        paths.append(p)
    return paths

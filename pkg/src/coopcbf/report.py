"""Run summaries, acceptance thresholds and plot-ready trajectory data."""
from __future__ import annotations

import csv
import io
import json
import math

import numpy as np

from .scenario import ScenarioConfig
from .sim import FLAG_MPC_FAIL, FLAG_PLANNER, RunLog

KIN_BARRIER_TOL = 1e-3
FULL_BARRIER_TOL = 5e-3
NOISY_EXCURSION = 5e-3      # times psi
TRACK_RMS_MAX = 0.05        # m/s, after TRACK_AFTER_S
TRACK_AFTER_S = 2.0
DRIFT_MAX = 1e-3            # m
SEP_ABS_SLACK = 1e-6
BAR_INTERVAL_S = 0.5


def _cols(log: RunLog, prefix: str):
    return [i for i, c in enumerate(log.columns) if c.startswith(prefix)]


def separation_excursion(sep_sq, psi: float, eps: float) -> float:
    """Largest distance of ``sep^2`` outside ``[(1-eps) psi, (1+eps) psi]``."""
    sep_sq = np.asarray(sep_sq, dtype=float)
    lo, hi = (1.0 - eps) * psi, (1.0 + eps) * psi
    out = np.maximum(lo - sep_sq, sep_sq - hi)
    return float(max(0.0, out.max())) if out.size else 0.0


def tracking_rms(log: RunLog, after_s: float = TRACK_AFTER_S) -> float | None:
    """RMS per-agent planar error between the safe velocity commanded at one
    tick and the COM velocity realized at the next."""
    A = log.array()
    if len(A) < 2:
        return None
    c = log.columns
    ps = A[:-1, c.index("phi_s_0"):c.index("phi_s_0") + 4]
    v = A[1:, [c.index(k) for k in ("a1_vx", "a1_vy", "a2_vx", "a2_vy")]]
    keep = A[1:, 0] >= after_s
    if not keep.any():
        return None
    err = (v - ps)[keep].reshape(-1, 2, 2)
    return float(np.sqrt(np.mean(np.sum(err ** 2, axis=2))))


def _stats_us(values):
    values = np.asarray(values, dtype=float)
    if values.size == 0 or not values.any():
        return None, None
    return float(np.median(values)), float(values.max())


def summarize(log: RunLog, cfg: ScenarioConfig) -> dict:
    """Metrics of one run; plain types only so the dict serializes as JSON."""
    A = log.array()
    H = A[:, _cols(log, "h_")]
    sep = A[:, log.columns.index("separation_m")]
    flags = A[:, log.columns.index("flags")].astype(int)
    timing = np.asarray(log.timing, dtype=float).reshape(-1, 3)
    psi = cfg.psi_m2
    out = dict(log.meta)
    out.update({
        "ticks": int(len(A)),
        "sim_time_s": float(A[-1, 0]) if len(A) else 0.0,
        "min_barrier": float(H.min()) if H.size else None,
        "min_barrier_label": log.columns[_cols(log, "h_")[int(np.argmin(H.min(axis=0)))]] if H.size else None,
        "max_abs_sep_error_m": float(np.abs(sep - math.sqrt(psi)).max()),
        "max_abs_sep_sq_error": float(np.abs(sep ** 2 - psi).max()),
        "sep_sq_excursion": separation_excursion(sep ** 2, psi, cfg.eps),
        "planner_failures": int(np.count_nonzero(flags & FLAG_PLANNER)),
        "mpc_failures": int(np.count_nonzero(flags & FLAG_MPC_FAIL)),
        "events": list(log.events),
    })
    out["planner_solve_us_median"], out["planner_solve_us_max"] = _stats_us(timing[:, 1])
    out["mpc_solve_us_median"], out["mpc_solve_us_max"] = _stats_us(timing[:, 2])
    out["tracking_rms_mps"] = tracking_rms(log) if cfg.mode == "full" else None
    out["checks"] = checks(out, cfg)
    out["passed"] = all(out["checks"].values())
    return out


def checks(summary: dict, cfg: ScenarioConfig) -> dict:
    """Named pass/fail flags for the thresholds that apply to this run."""
    psi, eps = cfg.psi_m2, cfg.eps
    noisy = summary.get("noise_db") is not None
    c = {}
    if cfg.mode == "kinematic":
        c["barriers"] = summary["min_barrier"] is None or summary["min_barrier"] >= -KIN_BARRIER_TOL
        c["goal_reached"] = summary["terminated"] == "goal"
        if noisy:
            c["separation"] = summary["sep_sq_excursion"] <= NOISY_EXCURSION * psi
        else:
            c["separation"] = summary["max_abs_sep_sq_error"] <= eps * psi + SEP_ABS_SLACK
    else:
        c["barriers"] = summary["min_barrier"] is None or summary["min_barrier"] >= -FULL_BARRIER_TOL
        c["completed"] = summary["terminated"] != "abort"
        c["drift"] = summary["max_abs_sep_error_m"] <= DRIFT_MAX
        if noisy:
            c["separation"] = summary["sep_sq_excursion"] <= NOISY_EXCURSION * psi
        rms = summary["tracking_rms_mps"]
        c["tracking"] = rms is not None and rms <= TRACK_RMS_MAX
        c["mpc_solved"] = summary["mpc_failures"] == 0
    c["planner_solved"] = summary["planner_failures"] == 0
    return c


def summary_json(summary: dict) -> str:
    return json.dumps(summary, indent=2, sort_keys=True) + "\n"


def path_csv_text(log: RunLog) -> str:
    """Attachment-point paths, one row per tick."""
    A = log.array()
    j = log.columns.index("phi_0")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["time_s", "p1_x", "p1_y", "p2_x", "p2_y"])
    for row in A:
        w.writerow([repr(float(row[0]))] + [repr(float(v)) for v in row[j:j + 4]])
    return buf.getvalue()


def bar_segments(log: RunLog, interval_s: float = BAR_INTERVAL_S) -> np.ndarray:
    """Rows ``(t, p1x, p1y, p2x, p2y)`` sampled every ``interval_s``."""
    A = log.array()
    if len(A) == 0:
        return np.zeros((0, 5))
    j = log.columns.index("phi_0")
    t = A[:, 0]
    dt = log.meta.get("tick_s") or (t[1] - t[0] if len(t) > 1 else interval_s)
    step = max(1, int(round(interval_s / dt)))
    idx = np.arange(0, len(A), step)
    return np.column_stack([t[idx], A[idx, j:j + 4]])


def bars_csv_text(log: RunLog, interval_s: float = BAR_INTERVAL_S) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["time_s", "p1_x", "p1_y", "p2_x", "p2_y"])
    for row in bar_segments(log, interval_s):
        w.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def svg_text(log: RunLog, cfg: ScenarioConfig, scale: float = 120.0, margin: float = 0.5) -> str:
    """Static top view: obstacles, goals, both paths and the bar every 0.5 s."""
    A = log.array()
    j = log.columns.index("phi_0")
    pts = [A[:, j:j + 2], A[:, j + 2:j + 4], np.asarray(cfg.goals_m), np.asarray(cfg.starts_m)]
    for ob in cfg.obstacles:
        c = np.asarray(ob.center)
        pts.append(np.array([c - ob.radius, c + ob.radius]))
    allp = np.vstack(pts)
    lo = allp.min(axis=0) - margin
    hi = allp.max(axis=0) + margin
    W, H = (hi - lo) * scale

    def xy(p):
        return (p[0] - lo[0]) * scale, (hi[1] - p[1]) * scale

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W:.0f}" height="{H:.0f}" '
           f'viewBox="0 0 {W:.1f} {H:.1f}">',
           f'<rect width="{W:.1f}" height="{H:.1f}" fill="white"/>']
    for ob in cfg.obstacles:
        cx, cy = xy(ob.center)
        out.append(f'<circle cx="{cx:.1f}" cy="{cy:.1f}" r="{ob.radius * scale:.1f}" fill="#bbb"/>')
    for row in bar_segments(log):
        (x1, y1), (x2, y2) = xy(row[1:3]), xy(row[3:5])
        out.append(f'<line x1="{x1:.1f}" y1="{y1:.1f}" x2="{x2:.1f}" y2="{y2:.1f}" '
                   'stroke="black" stroke-width="1"/>')
    for k, color in ((0, "#1f77b4"), (2, "#d62728")):
        poly = " ".join("{:.1f},{:.1f}".format(*xy(p)) for p in A[:, j + k:j + k + 2])
        out.append(f'<polyline points="{poly}" fill="none" stroke="{color}" stroke-width="2"/>')
    for g in cfg.goals_m:
        gx, gy = xy(g)
        out.append(f'<circle cx="{gx:.1f}" cy="{gy:.1f}" r="{cfg.goal_tol_m * scale:.1f}" '
                   'fill="none" stroke="green" stroke-dasharray="4 3"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"

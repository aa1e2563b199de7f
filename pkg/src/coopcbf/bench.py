"""Timing suite: compiled kernels against the numpy fallbacks.

Each workload is timed under both backends when the extensions are
built; otherwise only the fallback column is filled.
"""
from __future__ import annotations

import contextlib
import time

import numpy as np

from . import planner as _planner
from . import srb as _srb
from .mpc import build_reference, solve_mpc
from .qp import kernel as _kernel
from .scenario import load_scenario
from .sim import GaitSchedule, contact_and_feet, initial_state, mpc_config_for, pair_for


def compiled_available() -> dict:
    return {"qp": _kernel.compiled_dual_active_set is not None,
            "barrier": _planner._stack_rows_ext is not None,
            "plant": _srb._rk4_ext is not None}


@contextlib.contextmanager
def backend(name: str):
    """Temporarily route all three kernels to ``"cython"`` or ``"python"``."""
    if name not in ("cython", "python"):
        raise ValueError("backend must be 'cython' or 'python'")
    if name == "cython" and not all(compiled_available().values()):
        raise RuntimeError("compiled extensions are not built")
    saved = (_kernel.dual_active_set, _planner._stack_rows, _srb._USE_EXT)
    try:
        if name == "cython":
            _kernel.dual_active_set = _kernel.compiled_dual_active_set
            _planner._stack_rows = _planner._stack_rows_ext
            _srb._USE_EXT = True
        else:
            _kernel.dual_active_set = _kernel.python_dual_active_set
            _planner._stack_rows = _planner._stack_rows_py
            _srb._USE_EXT = False
        yield
    finally:
        _kernel.dual_active_set, _planner._stack_rows, _srb._USE_EXT = saved


def _median_us(fn, repeat: int) -> float:
    fn()
    samples = np.empty(repeat)
    for k in range(repeat):
        t0 = time.perf_counter()
        fn()
        samples[k] = time.perf_counter() - t0
    return float(np.median(samples) * 1e6)


def _workloads(scenario: str):
    cfg = load_scenario(scenario)
    bset = cfg.barrier_set()
    plan = _planner.Planner(bset, np.diag(cfg.planner.p_s_diag), cfg.goal, cfg.planner.k_gain)
    phi = cfg.phi0 + np.array([0.8, 0.05, 0.8, 0.05])
    pair = pair_for(cfg)
    mcfg = mpc_config_for(cfg)
    state = initial_state(cfg, pair)
    cmd = plan.plan(cfg.phi0).safe_velocity
    contacts = contact_and_feet(0.05, state, GaitSchedule(cfg.gait.period_s, cfg.gait.duty), cmd, pair.agents)
    f0 = pair.static_forces(contacts)
    ref = build_reference(cmd, state, mcfg, pair)
    return {
        "barrier_stack": lambda: _planner.stack_barriers(phi, bset),
        "planner_qp": lambda: plan.plan(phi),
        "plant_step_1ms": lambda: pair.integrate(state, contacts, f0, 1e-3),
        "mpc_solve": lambda: solve_mpc(state, contacts, ref, mcfg, pair, f0, 0.0),
    }


def run_bench(scenario: str = "two_obstacles", repeat: int = 200) -> list[dict]:
    """Median microseconds per call for every workload and backend."""
    loads = _workloads(scenario)
    have_ext = all(compiled_available().values())
    rows = []
    for name, fn in loads.items():
        n = max(10, repeat // 10) if name == "mpc_solve" else repeat
        row = {"workload": name, "python_us": None, "cython_us": None}
        with backend("python"):
            row["python_us"] = _median_us(fn, n)
        if have_ext:
            with backend("cython"):
                row["cython_us"] = _median_us(fn, n)
        rows.append(row)
    return rows


def format_table(rows) -> str:
    lines = [f"{'workload':<16}{'python_us':>12}{'cython_us':>12}{'speedup':>10}"]
    for r in rows:
        cy = r["cython_us"]
        sp = f"{r['python_us'] / cy:9.1f}x" if cy else f"{'-':>10}"
        cys = f"{cy:12.1f}" if cy else f"{'-':>12}"
        lines.append(f"{r['workload']:<16}{r['python_us']:12.1f}{cys}{sp}")
    return "\n".join(lines)

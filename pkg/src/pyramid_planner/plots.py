"""PNG figures for a finished run, drawn from the CSV logs it wrote.

Figures are built on bare ``matplotlib.figure.Figure`` objects, so no GUI
backend is touched and plotting works in headless jobs.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from matplotlib.figure import Figure
from matplotlib.patches import Circle

FIGURES = ("trajectory.png", "velocity.png", "planner.png")


def _table(path: Path) -> np.ndarray:
    data = np.genfromtxt(path, delimiter=",", names=True)
    return np.atleast_1d(data)


def plot_trajectory(run_dir: Path, out: Path) -> None:
    """Top view of the flown path, the tracked reference and the trees."""
    traj = _table(run_dir / "trajectory.csv")
    fig = Figure(figsize=(8, 5), layout="constrained")
    ax = fig.add_subplot()
    world_file = run_dir / "world.json"
    if world_file.exists():
        for tree in json.loads(world_file.read_text())["cylinders"]:
            ax.add_patch(Circle((tree["x"], tree["y"]), tree["radius"], color="0.35", zorder=1))
    ax.plot(traj["ref_x"], traj["ref_y"], "--", color="tab:orange", lw=1.0, label="reference")
    ax.plot(traj["x"], traj["y"], color="tab:blue", lw=1.5, label="vehicle")
    if len(traj):
        ax.plot(traj["x"][0], traj["y"][0], "o", color="tab:green", label="start")
        ax.plot(traj["x"][-1], traj["y"][-1], "s", color="tab:red", label="end")
    summary_file = run_dir / "summary.json"
    if summary_file.exists():
        s = json.loads(summary_file.read_text())
        ax.set_title(f"seed {s.get('seed')}: {s.get('outcome')}")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_aspect("equal", adjustable="datalim")
    ax.legend(loc="upper left", fontsize="small")
    ax.grid(alpha=0.3)
    fig.savefig(out, dpi=120)


def plot_velocity(run_dir: Path, out: Path) -> None:
    """Per-axis velocity and speed against the velocity limit."""
    vel = _table(run_dir / "velocity.csv")
    fig = Figure(figsize=(8, 4), layout="constrained")
    ax = fig.add_subplot()
    for name, color in (("vx", "tab:blue"), ("vy", "tab:orange"), ("vz", "tab:green")):
        ax.plot(vel["t"], vel[name], color=color, lw=1.0, label=name)
    ax.plot(vel["t"], vel["speed"], color="k", lw=1.0, alpha=0.6, label="|v|")
    if len(vel):
        v_max = float(vel["v_max"][0])
        ax.axhline(v_max, color="tab:red", ls="--", lw=1.0, label="v_max")
        ax.axhline(-v_max, color="tab:red", ls="--", lw=1.0)
    ax.set_xlabel("t [s]")
    ax.set_ylabel("velocity [m/s]")
    ax.legend(loc="lower right", fontsize="small", ncol=5)
    ax.grid(alpha=0.3)
    fig.savefig(out, dpi=120)


def plot_planner(run_dir: Path, out: Path) -> None:
    """Candidates sampled and better than the current reference in every planning cycle."""
    cyc = _table(run_dir / "planner.csv")
    fig = Figure(figsize=(8, 4), layout="constrained")
    ax = fig.add_subplot()
    ax.plot(cyc["t"], cyc["sampled"], color="tab:blue", lw=1.0, label="sampled")
    ax.plot(cyc["t"], cyc["better"], color="tab:orange", lw=1.0, label="better than current")
    ax.plot(cyc["t"], cyc["collision_free"], color="tab:green", lw=1.0, label="collision free")
    ax.set_xlabel("t [s]")
    ax.set_ylabel("candidates per cycle")
    ax.legend(loc="upper right", fontsize="small")
    ax.grid(alpha=0.3)
    fig.savefig(out, dpi=120)


def render_run(run_dir) -> list[Path]:
    """Write every figure next to the CSVs in ``run_dir``; returns the written paths."""
    run_dir = Path(run_dir)
    written = []
    for name, draw in zip(FIGURES, (plot_trajectory, plot_velocity, plot_planner)):
        path = run_dir / name
        draw(run_dir, path)
        written.append(path)
    return written

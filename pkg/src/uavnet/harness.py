"""Experiment plumbing: baselines, greedy evaluation and artifact I/O.

Artifacts written to an output directory:

``metrics.csv``
    One row per episode, columns :data:`METRICS_COLUMNS`. Wall-clock time is
    kept out of this file so reruns with the same seed are byte-identical.
``timings.csv``
    ``episode,wall_clock`` in seconds.
``manifest.json``
    Command, seed, config digest, the full config, package versions and
    artifact schema tags.
``trajectory.json``
    Per-slot UAV records for evaluated episodes (``eval`` only).
``diagnostics.jsonl``
    One JSON object per slot with rates, satisfaction and reward components
    (``eval`` only).
``checkpoint.npz``
    Trained agent (``train`` only).
"""
from __future__ import annotations

import csv
import json
import os
import platform
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, fields
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import __version__
from .config import ExperimentConfig
from .environment import HybridAction, UavNetworkEnv, diagnostics_record
from .learner.checkpoint import load_checkpoint, save_checkpoint
from .learner.ppo import EpisodeStats, episode_seed, run_episode, train
from .service import distance_scores

METRICS_SCHEMA = "uavnet.metrics/1"
TRAJECTORY_SCHEMA = "uavnet.trajectory/1"
DIAGNOSTICS_SCHEMA = "uavnet.diagnostics/1"
MANIFEST_SCHEMA = "uavnet.manifest/1"
METRICS_COLUMNS = ("episode", "mean_reward", "mean_s_total", "obstacle_violation_slots",
                   "boundary_violation_slots", "uav_failures", "slots")
BASELINE_KINDS = ("fixed-uav", "equal-beam", "random-policy")
WORKERS_ENV = "UAVNET_WORKERS"


def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    return max(n, 1)


# -- deployments and simple policies ---------------------------------------------

def fixed_deployment(cfg: ExperimentConfig) -> np.ndarray:
    """Cell centres of a near-square grid over the area at mid-altitude, (N, 3)."""
    ws, n = cfg.workspace(), cfg.uav.count
    cols = int(np.ceil(np.sqrt(n)))
    rows = int(np.ceil(n / cols))
    z = 0.5 * (ws.h_min + ws.h_max)
    cells = [((i + 0.5) * ws.x_max / cols, (j + 0.5) * ws.y_max / rows, z)
             for j in range(rows) for i in range(cols)]
    return np.array(cells[:n])


def static_policy(env: UavNetworkEnv) -> Callable:
    """Zero acceleration; every user asks for its nearest UAV."""
    def select(obs):
        scores = distance_scores(env.states, env.user_pos)
        return HybridAction(np.zeros((env.n_uav, 3)), scores.argmax(axis=1))
    return select


def random_policy(env: UavNetworkEnv, rng: np.random.Generator) -> Callable:
    """Uniform accelerations in the a_max box and uniform association picks."""
    def select(obs):
        return HybridAction(rng.uniform(-1.0, 1.0, (env.n_uav, 3)),
                            rng.integers(0, env.n_uav, env.n_user))
    return select


def greedy_policy(agent) -> Callable:
    def select(obs):
        a_cont, a_disc, _, _ = agent.act(obs, greedy=True)
        return agent.to_action(a_cont, a_disc)
    return select


# -- episode runners ---------------------------------------------------------------

def _baseline_episode(args):
    cfg, kind, seed, episode = args
    ep_seed = episode_seed(seed, episode)
    if kind == "random-policy":
        env = UavNetworkEnv(cfg)
        rng = np.random.default_rng(np.random.SeedSequence([ep_seed, 0x5A1D]))
        return run_episode(env, random_policy(env, rng), ep_seed, episode)
    beam = "equal" if kind == "equal-beam" else "water-filling"
    env = UavNetworkEnv(cfg, beamforming=beam)
    return run_episode(env, static_policy(env), ep_seed, episode,
                       initial_positions=fixed_deployment(cfg))


def _map(fn, jobs, workers):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def run_baseline(kind: str, cfg: ExperimentConfig, episodes: int, seed: int,
                 workers: int = 1) -> list:
    """Per-episode stats of a baseline scheme on seeds ``episode_seed(seed, e)``.

    ``fixed-uav`` and ``equal-beam`` share the grid deployment and the static
    nearest-UAV association; they differ only in the precoder.
    """
    if kind not in BASELINE_KINDS:
        raise ValueError(f"unknown baseline kind {kind!r}; expected one of {BASELINE_KINDS}")
    jobs = [(cfg, kind, seed, e) for e in range(episodes)]
    return _map(_baseline_episode, jobs, workers)


def evaluate(agent, cfg: ExperimentConfig, episodes: int, seed: int, beamforming=None,
             eq23_literal=None, initial_positions=None, record: bool = True):
    """Greedy roll-outs of ``agent``.

    Returns ``(stats, trajectories, diagnostics)``; each trajectory is padded
    to the full horizon with frozen records once every UAV has failed.
    """
    env = UavNetworkEnv(cfg, beamforming=beamforming, eq23_literal=eq23_literal)
    if agent.policy.obs_dim != env.obs_dim:
        raise ValueError(f"checkpoint expects observations of size {agent.policy.obs_dim}, "
                         f"environment gives {env.obs_dim}")
    select = greedy_policy(agent)
    stats, trajectories, diagnostics = [], [], []
    for e in range(episodes):
        ep_seed = episode_seed(seed, e)
        slots, diags = [], []

        def on_slot(diag):
            if record:
                slots.append(_trajectory_slot(diag))
                diags.append(dict(diagnostics_record(diag), episode=e))

        stats.append(run_episode(env, select, ep_seed, e, on_slot=on_slot,
                                 initial_positions=initial_positions))
        if record:
            trajectories.append({"episode": e, "seed": ep_seed,
                                 "records": _pad_records(slots, env.horizon)})
            diagnostics.extend(diags)
    return stats, trajectories, diagnostics


def _trajectory_slot(diag) -> list:
    out = []
    for n, pos in enumerate(diag["positions"]):
        out.append({"slot": int(diag["slot"]), "uav": n,
                    "x": float(pos[0]), "y": float(pos[1]), "z": float(pos[2]),
                    "energy": float(diag["energy"][n]), "alive": bool(diag["alive"][n]),
                    "serving": np.flatnonzero(diag["alpha"][n]).tolist()})
    return out


def _pad_records(slots: list, horizon: int) -> list:
    records = [r for slot in slots for r in slot]
    if slots:
        last = slots[-1]
        for t in range(len(slots), horizon):
            records.extend(dict(r, slot=t, alive=False, serving=[]) for r in last)
    return records


# -- artifact writers and loaders -------------------------------------------------

def write_metrics(rows, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRICS_COLUMNS)
        for s in rows:
            w.writerow([s.episode, repr(float(s.mean_reward)), repr(float(s.mean_s_total)),
                        s.obstacle_violation_slots, s.boundary_violation_slots,
                        s.uav_failures, s.slots])
    return path


def load_metrics(path) -> list:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != METRICS_COLUMNS:
            raise ValueError(f"{path}: unexpected metrics columns {reader.fieldnames}")
        out = []
        for row in reader:
            out.append(EpisodeStats(int(row["episode"]), float(row["mean_reward"]),
                                    float(row["mean_s_total"]),
                                    int(row["obstacle_violation_slots"]),
                                    int(row["boundary_violation_slots"]),
                                    int(row["uav_failures"]), int(row["slots"])))
    return out


def write_timings(rows, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("episode", "wall_clock"))
        for s in rows:
            w.writerow([s.episode, f"{s.wall_clock:.6f}"])
    return path


def load_timings(path) -> dict:
    with open(path, newline="") as fh:
        return {int(r["episode"]): float(r["wall_clock"]) for r in csv.DictReader(fh)}


def write_manifest(path, cfg: ExperimentConfig, seed: int, command: str, extra=None) -> Path:
    path = Path(path)
    manifest = {
        "schema": MANIFEST_SCHEMA,
        "command": command,
        "seed": int(seed),
        "config_sha256": cfg.digest(),
        "config": cfg.to_dict(),
        "versions": {"uavnet": __version__, "numpy": np.__version__,
                     "python": platform.python_version()},
        "schemas": {"metrics": METRICS_SCHEMA, "trajectory": TRAJECTORY_SCHEMA,
                    "diagnostics": DIAGNOSTICS_SCHEMA},
        "metrics_columns": list(METRICS_COLUMNS),
    }
    if extra:
        manifest.update(extra)
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def load_manifest(path) -> dict:
    data = json.loads(Path(path).read_text())
    if data.get("schema") != MANIFEST_SCHEMA:
        raise ValueError(f"{path}: not a {MANIFEST_SCHEMA} manifest")
    return data


def write_trajectory(path, trajectories, n_uav: int, horizon: int) -> Path:
    path = Path(path)
    doc = {"schema": TRAJECTORY_SCHEMA, "n_uav": n_uav, "horizon": horizon,
           "episodes": trajectories}
    path.write_text(json.dumps(doc) + "\n")
    return path


def load_trajectory(path) -> dict:
    doc = json.loads(Path(path).read_text())
    if doc.get("schema") != TRAJECTORY_SCHEMA:
        raise ValueError(f"{path}: not a {TRAJECTORY_SCHEMA} document")
    return doc


def write_diagnostics(path, records) -> Path:
    path = Path(path)
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(r) + "\n")
    return path


def load_diagnostics(path) -> list:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def summarize(rows) -> dict:
    s = np.array([r.mean_s_total for r in rows], dtype=float)
    return {"episodes": len(rows), "mean_s_total": float(s.mean()) if len(s) else float("nan"),
            "std_s_total": float(s.std()) if len(s) else float("nan")}


# -- commands ------------------------------------------------------------------------

def cmd_train(cfg: ExperimentConfig, seed: int, out, episodes: Optional[int] = None,
              eq23_literal=None, progress=None) -> dict:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    factory = lambda: UavNetworkEnv(cfg, eq23_literal=eq23_literal)  # noqa: E731
    result = train(factory, cfg.ppo, seed, episodes=episodes, progress=progress)
    write_metrics(result.log, out / "metrics.csv")
    write_timings(result.log, out / "timings.csv")
    save_checkpoint(result.agent, out / "checkpoint.npz",
                    extra={"config_sha256": cfg.digest(), "seed": int(seed)})
    summary = summarize(result.log)
    write_manifest(out / "manifest.json", cfg, seed, "train",
                   {"summary": summary, "updates": len(result.updates),
                    "incidents": result.agent.incidents})
    return summary


def cmd_eval(cfg: ExperimentConfig, checkpoint, seed: int, out, episodes: int = 1,
             eq23_literal=None, start: str = "random") -> dict:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    env = UavNetworkEnv(cfg)
    agent = load_checkpoint(checkpoint, obs_dim=env.obs_dim)
    init = fixed_deployment(cfg) if start == "fixed" else None
    stats, traj, diags = evaluate(agent, cfg, episodes, seed, eq23_literal=eq23_literal,
                                  initial_positions=init)
    write_metrics(stats, out / "metrics.csv")
    write_timings(stats, out / "timings.csv")
    write_trajectory(out / "trajectory.json", traj, env.n_uav, env.horizon)
    write_diagnostics(out / "diagnostics.jsonl", diags)
    summary = summarize(stats)
    write_manifest(out / "manifest.json", cfg, seed, "eval",
                   {"summary": summary, "checkpoint": str(checkpoint), "start": start})
    return summary


def cmd_baseline(cfg: ExperimentConfig, kind: str, seed: int, out, episodes: int = 20,
                 workers: Optional[int] = None) -> dict:
    if kind not in BASELINE_KINDS:
        raise ValueError(f"unknown baseline kind {kind!r}; expected one of {BASELINE_KINDS}")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    stats = run_baseline(kind, cfg, episodes, seed, worker_count() if workers is None else workers)
    write_metrics(stats, out / "metrics.csv")
    write_timings(stats, out / "timings.csv")
    summary = summarize(stats)
    write_manifest(out / "manifest.json", cfg, seed, f"baseline:{kind}", {"summary": summary})
    return summary

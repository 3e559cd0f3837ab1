"""Run orchestration: single runs, sweeps, reports and plot data."""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import subprocess
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .agents.baselines import GreedyAgent, RandomAgent, StaticAgent
from .agents.ddpg import DdpgAgent
from .agents.npg import NpgAgent
from .config import ExperimentConfig, from_dict, provenance
from .env import EnvConfig, NomaEnv
from .gold_codes import build_codebook
from .metrics import COMPONENTS, run_episode
from .rng import stream
from .stats import cohens_d, convergence_episode, episode_reaching_fraction, paired_t_test, summarize

log = logging.getLogger(__name__)

OUTPUT_ENV = "IOT_NOMA_OUTPUT"
METRIC_COLUMNS = (
    "mean_throughput_mbps",
    "energy_efficiency_bpj",
    "energy_component",
    "critical_reliability",
    "fairness",
    "interference",
)
EPISODE_COLUMNS = ("episode", "reward", *COMPONENTS, *METRIC_COLUMNS)
TRACE_COLUMNS = ("episode", "step", "reward", *COMPONENTS, "mean_sinr_db", "active_devices")
REPORT_METRICS = ("combined_reward", "mean_throughput_mbps", "energy_efficiency_bpj",
                  "critical_reliability", "fairness", "interference")
LEARNING_AGENTS = ("npg", "ddpg")
SUMMARY_TAIL = 100


class RunError(RuntimeError):
    pass


def output_root(cfg: ExperimentConfig, override=None) -> Path:
    if override:
        return Path(override)
    return Path(os.environ.get(OUTPUT_ENV) or cfg.output_dir)


def run_dir_name(cfg: ExperimentConfig, seed: int) -> str:
    return f"{cfg.scenario.kind}-{cfg.agent.kind}-seed{seed}"


def code_version() -> str:
    try:
        out = subprocess.run(["git", "rev-parse", "--short", "HEAD"], capture_output=True, text=True,
                             cwd=Path(__file__).parent, timeout=5)
        if out.returncode == 0:
            return f"{__version__}+{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def build_env(cfg: ExperimentConfig, seed: int):
    cb = cfg.codebook
    codebook = build_codebook(cb.degree, cb.size, cb.strategy, cb.max_misalignment)
    sc = cfg.scenario
    env_cfg = EnvConfig(
        scenario=sc.kind,
        num_devices=sc.num_devices,
        class_shares=tuple(sc.class_shares),
        spawn_kwargs={
            "tx_power_range_dbm": tuple(sc.tx_power_range_dbm),
            "battery_range_j": tuple(sc.battery_range_j),
            "buffer_capacity": sc.buffer_capacity,
        },
        channel=cfg.channel,
        reward=cfg.reward,
        steps_per_episode=cfg.steps_per_episode,
        step_duration_s=cfg.step_duration_s,
        packet_bits=sc.packet_bits,
    )
    return NomaEnv(env_cfg, codebook, seed), codebook


def build_agent(cfg: ExperimentConfig, env: NomaEnv, codebook, seed: int):
    kind = cfg.agent.kind
    n, c = env.population.size, codebook.size
    if kind == "static":
        return StaticAgent(n, c)
    if kind == "random":
        return RandomAgent(n, c, stream(seed, "policy"))
    if kind == "greedy":
        return GreedyAgent(codebook.rho, env.beta)
    if kind == "npg":
        return NpgAgent(codebook, env.population.classes, cfg.agent.npg, stream(seed, "policy"), stream(seed, "init"))
    if kind == "ddpg":
        return DdpgAgent(codebook, n, cfg.agent.ddpg, stream(seed, "exploration"), stream(seed, "init"),
                         stream(seed, "replay"))
    raise RunError(f"unknown agent {kind!r}")


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return "%.17g" % float(v)


def _write_rows(path: Path, columns, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    path.write_text(buf.getvalue())


def read_episodes(run_dir) -> dict:
    """Columns of a run's episodes.csv as float arrays."""
    with open(Path(run_dir) / "episodes.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    head, body = rows[0], rows[1:]
    data = np.array(body, dtype=float).reshape(len(body), len(head))
    return {h: data[:, k] for k, h in enumerate(head)}


def _save_checkpoint(path: Path, agent) -> None:
    state = agent.checkpoint()
    arrays = {}
    for k, v in state.items():
        arrays[k] = np.frombuffer(v, dtype=np.uint8) if isinstance(v, bytes) else np.asarray(v)
    with open(path, "wb") as fh:
        np.savez(fh, kind=np.array(agent.kind), **arrays)


def run(cfg: ExperimentConfig, seed: int, root=None) -> dict:
    """Train/evaluate one agent for ``cfg.episodes`` episodes and persist everything.

    Artifacts in the run directory: manifest.json, episodes.csv,
    checkpoint.npz, summary.json and, when ``cfg.trace`` is set, trace.csv.
    """
    out = output_root(cfg, root) / cfg.name / run_dir_name(cfg, seed)
    started = time.time()
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "PARTIAL").write_text("run in progress or aborted\n")
        manifest = {
            "config": cfg.to_dict(),
            "seed": seed,
            "code_version": code_version(),
            "started_unix": started,
            "parameters": provenance(cfg),
        }
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")

        env, codebook = build_env(cfg, seed)
        agent = build_agent(cfg, env, codebook, seed)
        trace = [] if cfg.trace else None
        rows, diags = [], []
        for ep in range(cfg.episodes):
            m, comp, diag = run_episode(env, agent, trace=trace, episode=ep)
            rows.append((ep, m.combined_reward, *(comp[k] for k in COMPONENTS),
                         *(getattr(m, k) for k in METRIC_COLUMNS)))
            diags.append(diag)
        _write_rows(out / "episodes.csv", EPISODE_COLUMNS, rows)
        if trace is not None:
            _write_rows(out / "trace.csv", TRACE_COLUMNS, trace)
        _save_checkpoint(out / "checkpoint.npz", agent)

        series = read_episodes(out)
        summary = summarize_run(series)
        summary.update({
            "scenario": cfg.scenario.kind,
            "agent": cfg.agent.kind,
            "seed": seed,
            "episodes": cfg.episodes,
            "degenerate": bool(getattr(agent, "degenerate", False)),
            "cg_fallbacks": int(sum(d.get("cg_fallbacks", 0) for d in diags)),
        })
        (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
        manifest["finished_unix"] = time.time()
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        (out / "PARTIAL").unlink()
    except OSError as exc:
        raise RunError(f"I/O failure in {out}: {exc}") from exc
    summary["run_dir"] = str(out)
    return summary


def summarize_run(series: dict, tail: int = SUMMARY_TAIL) -> dict:
    reward = series["reward"]
    metrics = {}
    for k in ("reward", *METRIC_COLUMNS):
        key = "combined_reward" if k == "reward" else k
        metrics[key] = summarize(series[k][-tail:]).as_dict()
    return {
        "tail_episodes": int(min(tail, reward.size)),
        "metrics": metrics,
        "convergence_episode": convergence_episode(reward),
        "episode_90pct": episode_reaching_fraction(reward, 0.9, tail),
    }


def _run_cell(args):
    cfg_dict, seed, root = args
    return run(from_dict(cfg_dict), seed, root)


def sweep(configs, seeds=None, parallel: int = 1, root=None) -> list[dict]:
    """Run every (config, seed) cell; results come back sorted, whatever the execution order."""
    cells = []
    for cfg in configs:
        for s in (seeds if seeds is not None else cfg.seeds):
            cells.append((cfg.to_dict(), int(s), None if root is None else str(root)))
    if parallel > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            results = list(pool.map(_run_cell, cells))
    else:
        results = [_run_cell(c) for c in cells]
    return sorted(results, key=lambda r: (r["scenario"], r["agent"], r["seed"]))


def with_agent(cfg: ExperimentConfig, kind: str) -> ExperimentConfig:
    return replace(cfg, agent=replace(cfg.agent, kind=kind))


def load_summaries(run_dirs) -> list[dict]:
    out = []
    for d in run_dirs:
        p = Path(d) / "summary.json"
        if not p.exists():
            raise RunError(f"{d}: no summary.json (incomplete run?)")
        s = json.loads(p.read_text())
        s["run_dir"] = str(d)
        out.append(s)
    return out


def expand_run_dirs(paths) -> list[Path]:
    """Accept run directories or parents containing them."""
    found = []
    for p in map(Path, paths):
        if (p / "summary.json").exists():
            found.append(p)
        else:
            found.extend(sorted(q.parent for q in p.rglob("summary.json")))
    if not found:
        raise RunError(f"no finished runs under {', '.join(map(str, paths))}")
    return sorted(set(found))


def tail_means(run_dirs, tail: int = 50) -> dict:
    """(scenario, agent) -> {seed: mean combined reward over the last ``tail`` episodes}."""
    out: dict = {}
    for d, s in zip(run_dirs, load_summaries(run_dirs)):
        r = read_episodes(d)["reward"]
        out.setdefault((s["scenario"], s["agent"]), {})[s["seed"]] = float(r[-tail:].mean())
    return out


def report(run_dirs, tail: int = SUMMARY_TAIL) -> dict:
    """Aggregate per scenario and agent over seeds, with deltas and tests against static."""
    run_dirs = expand_run_dirs(run_dirs)
    summaries = load_summaries(run_dirs)
    per_seed: dict = {}
    for d, s in zip(run_dirs, summaries):
        ser = read_episodes(d)
        vals = {m: float(ser["reward" if m == "combined_reward" else m][-tail:].mean()) for m in REPORT_METRICS}
        per_seed.setdefault(s["scenario"], {}).setdefault(s["agent"], {})[s["seed"]] = vals

    result = {"tail_episodes": tail, "scenarios": {}}
    for scen in sorted(per_seed):
        agents = per_seed[scen]
        table = {}
        for ag in sorted(agents):
            seeds = sorted(agents[ag])
            row = {"seeds": seeds}
            for m in REPORT_METRICS:
                row[m] = summarize([agents[ag][s][m] for s in seeds]).as_dict()
            table[ag] = row
        if "static" in table:
            for ag, row in table.items():
                for m in REPORT_METRICS:
                    base = table["static"][m]["mean"]
                    row[m]["delta_pct_vs_static"] = 100.0 * (row[m]["mean"] - base) / abs(base) if base else 0.0
        tests = {}
        if "static" in agents:
            for ag in sorted(agents):
                if ag == "static":
                    continue
                common = sorted(set(agents[ag]) & set(agents["static"]))
                if len(common) < 2:
                    continue
                a = [agents[ag][s]["combined_reward"] for s in common]
                b = [agents["static"][s]["combined_reward"] for s in common]
                t = paired_t_test(a, b)
                tests[ag] = {"t": t.t, "p": t.p, "df": t.df, "degenerate": t.degenerate,
                             "cohens_d": cohens_d(a, b), "seeds": common}
        result["scenarios"][scen] = {"agents": table, "vs_static": tests}
    return result


def format_report(rep: dict) -> str:
    cols = REPORT_METRICS
    lines = [f"means over seeds of the last {rep['tail_episodes']} episodes; delta is % vs static"]
    for scen, block in rep["scenarios"].items():
        lines.append("")
        lines.append(f"[{scen}]")
        head = f"{'agent':<8}" + "".join(f"{c:>26}" for c in cols)
        lines.append(head)
        for ag, row in block["agents"].items():
            cells = []
            for c in cols:
                v = row[c]
                d = v.get("delta_pct_vs_static")
                txt = f"{v['mean']:.4g}±{v['ci95']:.2g}" + (f" ({d:+.1f}%)" if d is not None else "")
                cells.append(f"{txt:>26}")
            lines.append(f"{ag:<8}" + "".join(cells))
        for ag, t in block["vs_static"].items():
            flag = " (degenerate)" if t["degenerate"] else ""
            lines.append(f"  {ag} vs static: t={t['t']:.3f} p={t['p']:.4g} d={t['cohens_d']:.3f}{flag}")
    lines.append("")
    lines.append("p-values are uncorrected for multiple comparisons")
    return "\n".join(lines) + "\n"


def emit_plot_data(run_dirs, out_dir, tail: int = 50) -> list[Path]:
    """Convergence curves with 95% CI bands per scenario/agent, plus variance ratios."""
    run_dirs = expand_run_dirs(run_dirs)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    groups: dict = {}
    for d, s in zip(run_dirs, load_summaries(run_dirs)):
        groups.setdefault((s["scenario"], s["agent"]), []).append((s["seed"], read_episodes(d)["reward"]))
    written = []
    for (scen, ag), runs in sorted(groups.items()):
        runs.sort(key=lambda x: x[0])
        length = min(r.size for _, r in runs)
        mat = np.stack([r[:length] for _, r in runs])
        rows = []
        for e in range(length):
            s = summarize(mat[:, e])
            rows.append((e, s.mean, s.ci95, s.mean - s.ci95, s.mean + s.ci95))
        path = out_dir / f"convergence_{scen}_{ag}.csv"
        _write_rows(path, ("episode", "mean_reward", "ci95", "lower", "upper"), rows)
        written.append(path)

    ratio_rows = []
    for scen in sorted({k[0] for k in groups}):
        var = {}
        for ag in ("npg", "ddpg"):
            if (scen, ag) in groups:
                tails = [float(r[-tail:].mean()) for _, r in groups[(scen, ag)]]
                var[ag] = float(np.var(tails, ddof=1)) if len(tails) > 1 else 0.0
        if len(var) == 2:
            ratio = variance_ratio(var["ddpg"], var["npg"])
            ratio_rows.append((scen, var["ddpg"], var["npg"], ratio))
    if ratio_rows:
        path = out_dir / "variance_ratio.csv"
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("scenario", "ddpg_variance", "npg_variance", "ratio_ddpg_over_npg"))
        for scen, a, b, r in ratio_rows:
            w.writerow((scen, _fmt(a), _fmt(b), _fmt(r)))
        path.write_text(buf.getvalue())
        written.append(path)
    return written


def variance_ratio(var_a: float, var_b: float) -> float:
    """var_a / var_b, with 1.0 for two zero variances."""
    if var_b == 0.0:
        return 1.0 if var_a == 0.0 else float("inf")
    return var_a / var_b

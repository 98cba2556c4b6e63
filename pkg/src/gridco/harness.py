"""Training runs: co-optimisation, two-stage benchmark, clear-only evaluation.

Every run writes ``metrics.jsonl`` (header line, then step and episode
records), ``summary.csv``, ``design.out`` and ``checkpoints/`` under its
output directory.  Randomness comes from named streams split off the config
seed, so identical configs give byte-identical metrics.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import config_to_dict
from .dcopf import ClearingInput, clear_market
from .design import BaselineState, BernoulliDesignPolicy, DesignUpdater, GaussianDesignPolicy, expansion_cost
from .grid_model import capacities, load_case
from .lp import LpError
from .maddpg import Maddpg
from .market import MarketEnv, annualization_factor, episode_return, total_return
from .planning import stage1_expansion_lp

log = logging.getLogger(__name__)

SIG_DIGITS = 15


class RunError(RuntimeError):
    """Training aborted; ``episode`` and ``step`` locate the failure."""

    def __init__(self, msg, episode=None, step=None):
        super().__init__(f"{msg} (episode {episode}, step {step})" if episode is not None else msg)
        self.episode = episode
        self.step = step


def rng_stream(seed, name):
    """Independent generator for a named purpose, derived from one seed."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), zlib.crc32(name.encode())]))


def _clean(x):
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return float(f"{x:.{SIG_DIGITS}g}") if math.isfinite(x) else None
    return x


class MetricsWriter:
    def __init__(self, path):
        self.path = Path(path)
        self._fh = open(self.path, "w")

    def write(self, record):
        self._fh.write(json.dumps(_clean(record), separators=(",", ":")) + "\n")

    def close(self):
        self._fh.close()


def read_metrics(path):
    """Return (header, step records, episode records) from a metrics stream."""
    header, steps, episodes = None, [], []
    with open(path) as fh:
        for line in fh:
            rec = json.loads(line)
            kind = rec.get("type")
            if kind == "header":
                header = rec
            elif kind == "step":
                steps.append(rec)
            elif kind == "episode":
                episodes.append(rec)
    return header, steps, episodes


@dataclass
class RunArtifacts:
    output_dir: Path
    metrics_path: Path
    summary: dict
    final_design: np.ndarray | None = None
    checkpoints: list = field(default_factory=list)
    plan: object = None


@dataclass
class RunContext:
    cfg: object
    case: object
    horizon: int
    w_anu: float
    env_mode: str


def prepare(cfg):
    case = load_case(cfg.case)
    if cfg.candidates is not None:
        case = case.with_candidates(cfg.candidates)
    T = cfg.horizon or case.horizon
    if T > case.horizon:
        raise ValueError(f"horizon {T} exceeds the case profile length {case.horizon}")
    w = cfg.w_anu if cfg.w_anu is not None else annualization_factor(T)
    env_mode = "discrete" if cfg.mode == "co-opt-discrete" else "continuous"
    return RunContext(cfg, case, T, w, env_mode)


def scenario_bids(case, scenario):
    """Per-generator bids: scenario values for strategic units, cost otherwise."""
    names = {case.generators[i].name for i in case.strategic}
    missing = names - set(scenario)
    extra = set(scenario) - names
    if missing or extra:
        raise ValueError(f"scenario must give a bid for exactly the strategic generators {sorted(names)}")
    return np.array([scenario[g.name] if g.strategic else g.marginal_cost for g in case.generators])


def _design_policy(ctx):
    d = ctx.cfg.design
    n = len(ctx.case.candidates)
    if ctx.env_mode == "discrete":
        return BernoulliDesignPolicy.initial(n, 0.5 if d.mu_init is None else d.mu_init, d.mu_floor)
    return GaussianDesignPolicy.initial(n, d.sigma, 0.0 if d.mu_init is None else d.mu_init)


def _checkpoint(out, learner, updater, episode):
    path = out / "checkpoints" / f"episode_{episode:06d}.npz"
    meta = {"episode": episode}
    if updater is not None:
        meta["design_mu"] = updater.policy.mu
        if updater.baseline.value is not None:
            meta["design_baseline"] = updater.baseline.value
    if learner is not None:
        learner.save(path, **meta)
    else:
        np.savez(path, **meta)
    return path


def _train(ctx, out, writer, design_fn, updater=None, learner=None, truthful=False):
    """Shared episode loop.

    ``design_fn(episode)`` returns the (raw, used) design for the episode.
    With ``truthful`` every agent plays a = 0 and nothing is learned.
    """
    cfg, case, T = ctx.cfg, ctx.case, ctx.horizon
    env = MarketEnv(
        case,
        ctx.env_mode,
        cfg.design.fixed_increment,
        cfg.shed_penalty,
        cfg.design.reference_capacity,
        horizon=T,
    )
    window_start = cfg.episodes - summary_window(cfg.episodes, cfg.summary_fraction)
    checkpoints = []
    agents = env.agents
    progress_every = cfg.progress_every or max(1, cfg.episodes // 20)
    for ep in range(cfg.episodes):
        raw, used = design_fn(ep)
        obs = env.reset(used)
        bids = np.zeros((T, env.n_agents))
        rewards = np.zeros((T, env.n_agents))
        revenue = np.zeros(env.n_agents)
        c_oper = np.zeros(T)
        shed = 0.0
        log_steps = cfg.log_steps == "all" or (cfg.log_steps == "window" and ep >= window_start)
        for t in range(T):
            actions = np.zeros(env.n_agents) if truthful else learner.act(obs, explore=True)
            try:
                out_t = env.step(actions)
            except (RuntimeError, LpError) as exc:
                raise RunError(f"market clearing failed: {exc}", ep, t) from exc
            if out_t.infeasible:
                raise RunError("market clearing infeasible with load shedding disabled", ep, t)
            res = out_t.clearing
            bids[t] = out_t.applied_bids[agents]
            rewards[t] = out_t.rewards
            revenue += res.gen_price[agents] * res.dispatch[agents]
            c_oper[t] = res.operational_cost
            shed += res.shed_total
            if learner is not None:
                learner.observe(obs, actions, out_t.rewards, out_t.observations, out_t.done)
                learner.learn()
                learner.end_of_step(out_t.done)
            if log_steps:
                writer.write(
                    {
                        "type": "step",
                        "episode": ep,
                        "t": t,
                        "bids": out_t.applied_bids,
                        "dispatch": res.dispatch,
                        "lmp": res.lmp,
                        "rewards": out_t.rewards,
                        "c_oper": res.operational_cost,
                        "shed": res.shed_total,
                    }
                )
            obs = out_t.observations
        c_exp = expansion_cost(used, case, ctx.env_mode, cfg.design.fixed_increment)
        g_total = total_return(c_oper, ctx.w_anu, c_exp)
        rec = {
            "type": "episode",
            "episode": ep,
            "design": used,
            "design_raw": raw,
            "bids": bids.T,
            "rewards": rewards.sum(axis=0),
            "revenue": revenue,
            "returns": [episode_return(rewards[:, k], cfg.gamma) for k in range(env.n_agents)],
            "c_oper": float(c_oper.sum()),
            "c_exp": c_exp,
            "g_total": g_total,
            "shed": shed,
        }
        if updater is not None:
            rec["baseline"] = updater.baseline.value
            updater.record_and_maybe_update(raw, g_total)
            rec["mu"] = updater.policy.mu
        if learner is not None:
            rec["sigma"] = learner.agents[0].sigma if learner.agents else None
        writer.write(rec)
        if (ep + 1) % progress_every == 0:
            mu = "" if updater is None else f" mu={np.round(updater.policy.mu, 3).tolist()} baseline={updater.baseline.value:.6g}"
            log.info("episode %d mean reward %s%s", ep + 1, np.round(rewards.mean(axis=0), 2).tolist(), mu)
        if (learner is not None or updater is not None) and ((ep + 1) % cfg.checkpoint_every == 0 or ep + 1 == cfg.episodes):
            checkpoints.append(_checkpoint(out, learner, updater, ep + 1))
    return checkpoints


def summary_window(n_episodes, fraction):
    return max(1, math.ceil(round(fraction * n_episodes, 9)))


def _begin(cfg):
    out = Path(cfg.output_dir)
    (out / "checkpoints").mkdir(parents=True, exist_ok=True)
    writer = MetricsWriter(out / "metrics.jsonl")
    writer.write({"type": "header", "version": __version__, "seed": cfg.seed, "config": config_to_dict(cfg)})
    return out, writer


def _learner(ctx):
    seed = ctx.cfg.seed
    n = len(ctx.case.strategic)
    obs_dim = 2 + len(ctx.case.candidates)
    return Maddpg(n, obs_dim, ctx.cfg.maddpg, rng_stream(seed, "agents"), rng_stream(seed, "replay"), rng_stream(seed, "noise"))


def _finish(ctx, out, writer, checkpoints, final_design=None, policy=None, plan=None):
    writer.close()
    summary = summarize(out / "metrics.jsonl", ctx=ctx)
    if plan is not None:
        summary.update(
            planned_operational_cost=plan.operational_cost,
            planned_expansion_cost=plan.expansion_cost,
            planned_total_cost=plan.total_cost,
        )
        for k, inc in zip(plan.candidates, plan.increments):
            summary[f"dL_{ctx.case.lines[k].name}"] = inc
    if final_design is not None:
        summary["final_expansion_cost"] = expansion_cost(final_design, ctx.case, ctx.env_mode, ctx.cfg.design.fixed_increment)
    write_summary_csv(out / "summary.csv", summary)
    write_design_doc(out / "design.out", ctx, final_design, policy)
    return RunArtifacts(out, out / "metrics.jsonl", summary, final_design, checkpoints, plan)


def run_co_optimization(cfg):
    """Joint design-policy and MADDPG training."""
    if not cfg.mode.startswith("co-opt"):
        raise ValueError(f"run_co_optimization needs a co-opt mode, got {cfg.mode!r}")
    ctx = prepare(cfg)
    if not ctx.case.candidates:
        raise ValueError("co-optimisation needs at least one candidate line")
    policy = _design_policy(ctx)
    d = cfg.design
    updater = DesignUpdater(policy, d.learning_rate(cfg.mode), d.n_up, d.normalize, BaselineState(d.baseline_decay))
    design_rng = rng_stream(cfg.seed, "design")
    learner = _learner(ctx)
    out, writer = _begin(cfg)

    def design_fn(ep):
        s = policy.sample(design_rng)
        return s.raw, s.used

    try:
        checkpoints = _train(ctx, out, writer, design_fn, updater, learner)
    except Exception:
        writer.close()
        raise
    final = policy.finalize()
    return _finish(ctx, out, writer, checkpoints, final, policy)


def train_fixed_network(cfg, design, ctx=None, plan=None):
    """MADDPG market training on a fixed design (no design learning)."""
    ctx = ctx or prepare(cfg)
    design = np.asarray(design, dtype=float)
    learner = _learner(ctx)
    out, writer = _begin(cfg)
    try:
        checkpoints = _train(ctx, out, writer, lambda ep: (design, design), None, learner)
    except Exception:
        writer.close()
        raise
    return _finish(ctx, out, writer, checkpoints, design, None, plan)


def run_two_stage(cfg):
    """Stage 1: expansion LP at fixed bids; stage 2: market training on the result."""
    if not cfg.scenario:
        raise ValueError("two-stage benchmark needs a fixed-bid scenario")
    ctx = prepare(cfg)
    ctx.env_mode = "continuous"
    bids = scenario_bids(ctx.case, cfg.scenario)
    plan = stage1_expansion_lp(ctx.case, bids, ctx.w_anu, ctx.horizon)
    return train_fixed_network(cfg, plan.increments, ctx, plan)


def run_clear_only(cfg):
    """Truthful bids on a fixed design; no learning."""
    ctx = prepare(cfg)
    n = len(ctx.case.candidates)
    design = np.zeros(n) if cfg.fixed_design is None else np.asarray(cfg.fixed_design, dtype=float)
    if design.shape != (n,):
        raise ValueError(f"fixed_design needs {n} entries")
    out, writer = _begin(cfg)
    try:
        checkpoints = _train(ctx, out, writer, lambda ep: (design, design), truthful=True)
    except Exception:
        writer.close()
        raise
    return _finish(ctx, out, writer, checkpoints, design)


def run(cfg):
    if cfg.mode.startswith("co-opt"):
        return run_co_optimization(cfg)
    if cfg.mode == "two-stage":
        return run_two_stage(cfg)
    return run_clear_only(cfg)


def evaluate_design(case, design, w_anu, mode="continuous", fixed_increment=0.0, bids=None, horizon=None, shed_penalty=10_000.0):
    """Total annual cost J of a design under fixed bids (truthful by default)."""
    T = horizon or case.horizon
    bids = np.array([g.marginal_cost for g in case.generators]) if bids is None else np.asarray(bids, dtype=float)
    caps = capacities(case, design, mode, fixed_increment)
    op = sum(clear_market(case, ClearingInput(bids, case.demand(t), caps, shed_penalty)).operational_cost for t in range(T))
    c_exp = expansion_cost(design, case, mode, fixed_increment)
    return {"operational_cost": w_anu * op, "expansion_cost": c_exp, "total_cost": w_anu * op + c_exp}


def summarize(metrics_path, last_k=None, ctx=None):
    """Table-style averages over the last ``last_k`` episodes.

    Profits and operational cost are annualised with the run's W_anu, so the
    identity total = operational + expansion holds row by row.
    """
    header, _, episodes = read_metrics(metrics_path)
    if not episodes:
        raise ValueError(f"{metrics_path}: no episode records")
    cfg = header["config"]
    if last_k is None:
        last_k = summary_window(cfg["episodes"], cfg["summary_fraction"])
    if last_k > len(episodes):
        raise ValueError(f"requested last {last_k} episodes but only {len(episodes)} are available")
    if ctx is None:
        from .config import config_from_dict

        ctx = prepare(config_from_dict(cfg))
    window = episodes[-last_k:]
    w = ctx.w_anu
    names = [ctx.case.generators[i].name for i in ctx.case.strategic]
    summary = {"mode": cfg["mode"], "episodes": len(episodes), "window": last_k, "w_anu": w}
    for k, name in enumerate(names):
        summary[f"bid_{name}"] = float(np.mean([np.mean(e["bids"][k]) for e in window]))
        summary[f"profit_{name}"] = float(np.mean([w * e["rewards"][k] for e in window]))
    op = float(np.mean([w * e["c_oper"] for e in window]))
    exp = float(np.mean([e["c_exp"] for e in window]))
    summary["operational_cost"] = op
    summary["expansion_cost"] = exp
    summary["total_cost"] = op + exp
    summary["shed_mwh"] = float(sum(e["shed"] for e in window))
    summary["converged"] = summary["shed_mwh"] <= 1e-6
    return summary


def write_summary_csv(path, summary):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(list(summary))
        wr.writerow([_fmt(v) for v in summary.values()])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.{SIG_DIGITS}g}"
    return str(v)


def read_summary_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return dict(zip(rows[0], rows[1]))


def write_design_doc(path, ctx, final_design, policy):
    """Per-line final design: line, mode, mu, sigma, omega*, annual cost."""
    case, cfg = ctx.case, ctx.cfg
    rows = []
    for j, k in enumerate(case.candidates):
        line = case.lines[k]
        mu = "-" if policy is None else _fmt(float(policy.mu[j]))
        sigma = _fmt(float(policy.sigma[j])) if isinstance(policy, GaussianDesignPolicy) else "-"
        value = 0.0 if final_design is None else float(final_design[j])
        mw = value * cfg.design.fixed_increment if ctx.env_mode == "discrete" else value
        rows.append([line.name, ctx.env_mode, mu, sigma, _fmt(value), _fmt(line.expansion_cost * mw)])
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["line", "mode", "mu", "sigma", "omega", "annual_cost"])
        wr.writerows(rows)

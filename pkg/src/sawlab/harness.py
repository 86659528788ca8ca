"""Experiment orchestration: configs, training runs, evaluation, reports.

Runs are deterministic in their seeds, write one metrics CSV per seed, and a
report aggregates final scores as mean and standard deviation over seeds.
Offline-to-online fine-tuning mixes offline and fresh transitions with an
offline fraction that decays from 1 to 1/2 over the online phase.
"""

import csv
import json
import os
from dataclasses import dataclass, field, fields, asdict
from pathlib import Path

import numpy as np

from . import data, envs
from .baselines import BcAgent, D3gAgent
from .data import BatchSampler, Batch, OfflineDataset, normalized_score
from .saw import SawAgent, SawHyper

METRICS_FIELDS = ("run", "seed", "step", "loss_v", "loss_q", "loss_actor",
                  "loss_fwd", "loss_pred", "mean_q", "max_q", "eval_return",
                  "norm_score")

AGENT_KINDS = ("saw", "d3g", "bc")

# Final score of a run: mean normalized score over this many last evaluations.
FINAL_EVALS = 10


@dataclass
class RunConfig:
    env: str = "pointmass2d"
    kind: str = "medium"
    dataset_path: str = ""
    dataset_size: int = 50_000
    dataset_seed: int = 0
    agent: str = "saw"
    total_steps: int = 50_000
    online_steps: int = 10_000
    eval_every: int = 1000
    eval_episodes: int = 10
    seeds: list = field(default_factory=lambda: [0, 1, 2, 3, 4])
    hidden_dims: list = field(default_factory=lambda: [256, 256])
    learning_rate: float = 3e-4
    batch_size: int = 256
    out_dir: str = "runs/out"
    run_id: str = ""
    p_slip: float = -1.0  # gridmaze slip override; negative keeps the default
    beta: float = 5.0
    tau_expectile: float = 0.7
    gamma: float = 0.99
    rho_polyak: float = 0.005
    use_alpha_normalization: bool = True
    alpha_fixed: float = 1.0
    weight_clip: float = 100.0
    critic_loss: str = "mse"

    def __post_init__(self):
        if self.agent not in AGENT_KINDS:
            raise ValueError(f"agent must be one of {AGENT_KINDS}")
        if self.total_steps < 0 or self.online_steps < 0:
            raise ValueError("step counts must be non-negative")
        if not self.seeds:
            raise ValueError("seeds must be non-empty")
        if not self.run_id:
            self.run_id = f"{self.agent}-{self.env}-{self.kind}"

    def hyper(self):
        return SawHyper(beta=self.beta, tau_expectile=self.tau_expectile,
                        gamma=self.gamma, rho_polyak=self.rho_polyak,
                        use_alpha_normalization=self.use_alpha_normalization,
                        alpha_fixed=self.alpha_fixed,
                        weight_clip=self.weight_clip,
                        critic_loss=self.critic_loss)


_CONFIG_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _parse_value(name, raw):
    raw = raw.strip()
    if name in ("seeds", "hidden_dims"):
        if raw.startswith("["):
            return [int(v) for v in json.loads(raw)]
        return [int(v) for v in raw.split(",") if v.strip()]
    kind = _CONFIG_TYPES.get(name)
    if kind is bool or kind == "bool":
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"cannot parse boolean {name}={raw!r}")
    if kind is int or kind == "int":
        return int(raw)
    if kind is float or kind == "float":
        return float(raw)
    return raw


def load_config(path=None, overrides=None):
    """Read a `key = value` config file, then apply override pairs.

    Lines starting with '#' (and blank lines) are ignored; overrides are
    (key, value) string pairs from the command line and win over the file.
    The SAWLAB_SEED environment variable, when set, replaces the seed list.
    """
    values = {}
    if path:
        for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, raw = line.split("=", 1)
            key = key.strip()
            if key not in _CONFIG_TYPES:
                raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
            values[key] = _parse_value(key, raw)
    for key, raw in (overrides or []):
        if key not in _CONFIG_TYPES:
            raise ValueError(f"unknown config key {key!r}")
        values[key] = _parse_value(key, raw)
    env_seeds = os.environ.get("SAWLAB_SEED")
    if env_seeds:
        values["seeds"] = [int(v) for v in env_seeds.split(",") if v.strip()]
    return RunConfig(**values)


def make_env(config):
    if config.env == "gridmaze8x8" and config.p_slip >= 0.0:
        return envs.make_env(config.env, p_slip=config.p_slip)
    return envs.make_env(config.env)


def make_agent(config, env, seed):
    spec = env.spec
    if config.agent == "saw":
        return SawAgent(spec.obs_dim, spec.act_dim, spec.action_bound,
                        hyper=config.hyper(), hidden_dims=config.hidden_dims,
                        learning_rate=config.learning_rate, seed=seed)
    if config.agent == "d3g":
        return D3gAgent(spec.obs_dim, spec.act_dim, spec.action_bound,
                        gamma=config.gamma, rho_polyak=config.rho_polyak,
                        hidden_dims=config.hidden_dims,
                        learning_rate=config.learning_rate, seed=seed)
    return BcAgent(spec.obs_dim, spec.act_dim, spec.action_bound,
                   hidden_dims=config.hidden_dims,
                   learning_rate=config.learning_rate, seed=seed)


def get_dataset(config, env):
    if config.dataset_path:
        return data.load(config.dataset_path)
    return envs.generate_dataset(env, config.kind, config.dataset_size,
                                 config.dataset_seed)


def evaluate(agent, env, n_episodes, seed):
    """Mean return and normalized score over fixed-seed evaluation episodes.

    Episode seeds derive from a stream disjoint from any training stream.
    """
    if n_episodes < 1:
        raise ValueError("n_episodes must be at least 1")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xE7A1]))
    total = 0.0
    for _ in range(n_episodes):
        state = env.reset(int(rng.integers(2 ** 62)))
        while not state.done:
            state, reward, _ = env.step(state, agent.act(state.obs))
            total += reward
    mean_return = total / n_episodes
    j_r, j_e = envs.ensure_reference_scores(env)
    return mean_return, normalized_score(mean_return, j_r, j_e)


class MetricsWriter:
    """Streams metrics rows for one (run, seed) to CSV."""

    def __init__(self, path, run_id, seed):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.run_id = run_id
        self.seed = seed
        self._fh = open(self.path, "w", newline="")
        self._writer = csv.DictWriter(self._fh, fieldnames=METRICS_FIELDS)
        self._writer.writeheader()

    def write(self, step, stats=None, eval_return=None, norm_score=None):
        row = {k: "" for k in METRICS_FIELDS}
        row["run"] = self.run_id
        row["seed"] = self.seed
        row["step"] = step
        for key in ("loss_v", "loss_q", "loss_actor", "loss_fwd", "loss_pred",
                    "mean_q", "max_q"):
            if stats and key in stats:
                row[key] = repr(stats[key])
        if eval_return is not None:
            row["eval_return"] = repr(eval_return)
            row["norm_score"] = repr(norm_score)
        self._writer.writerow(row)

    def close(self):
        self._fh.close()


def _seed_run(config, env, dataset, seed):
    """Train one seed offline; returns (agent, eval scores, failure message)."""
    agent = make_agent(config, env, seed)
    sampler = BatchSampler(seed=np.random.SeedSequence([seed, 11]),
                           batch_size=config.batch_size)
    out = Path(config.out_dir) / config.run_id
    writer = MetricsWriter(out / f"seed{seed}.csv", config.run_id, seed)
    scores = []
    failed = False
    try:
        ret, score = evaluate(agent, env, config.eval_episodes, seed)
        writer.write(0, eval_return=ret, norm_score=score)
        scores.append(score)
        for t in range(1, config.total_steps + 1):
            batch = sampler.sample(dataset)
            stats = agent.train_step(batch)
            if config.eval_every and t % config.eval_every == 0:
                ret, score = evaluate(agent, env, config.eval_episodes, seed)
                scores.append(score)
                writer.write(t, stats, eval_return=ret, norm_score=score)
            else:
                writer.write(t, stats)
    except (ValueError, FloatingPointError) as exc:
        failed = str(exc)
    finally:
        writer.close()
    return agent, scores, failed


def _aggregate(per_seed_scores, seeds, failed):
    per_final = {}
    for seed in seeds:
        if failed.get(seed):
            continue
        scores = per_seed_scores[seed]
        per_final[str(seed)] = float(np.mean(scores[-FINAL_EVALS:]))
    result = {"per_seed_final": per_final,
              "failed": {str(s): failed[s] for s in seeds if failed.get(s)}}
    if per_final:
        finals = list(per_final.values())
        result["mean"] = float(np.mean(finals))
        result["std"] = float(np.std(finals))
    return result


def run_offline(config):
    """Train the configured agent offline for every seed; write report files."""
    env = make_env(config)
    dataset = get_dataset(config, env)
    per_seed = {}
    failed = {}
    checkpoints = {}
    out = Path(config.out_dir) / config.run_id
    out.mkdir(parents=True, exist_ok=True)
    for seed in config.seeds:
        agent, scores, fail = _seed_run(config, env, dataset, seed)
        per_seed[seed] = scores
        failed[seed] = fail
        if not fail:
            ckpt = out / f"seed{seed}.ckpt"
            agent.save(ckpt, step=config.total_steps)
            checkpoints[seed] = str(ckpt)
    report = {"run": config.run_id, "config": asdict(config),
              "checkpoints": checkpoints}
    report.update(_aggregate(per_seed, config.seeds, failed))
    _write_report(out, report)
    return report


def offline_fraction(t, total):
    """Offline share of each training batch at online step t of total."""
    return 1.0 - t / (2.0 * total)


class OnlineBuffer:
    """Append-only transition store filled during online interaction."""

    def __init__(self, obs_dim, act_dim, seed):
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.rng = np.random.default_rng(seed)
        self._s, self._a, self._r, self._s2, self._d = [], [], [], [], []

    def __len__(self):
        return len(self._s)

    def add(self, s, a, r, s_next, done):
        self._s.append(np.asarray(s, dtype=np.float64))
        self._a.append(np.asarray(a, dtype=np.float64))
        self._r.append(float(r))
        self._s2.append(np.asarray(s_next, dtype=np.float64))
        self._d.append(bool(done))

    def sample(self, n):
        idx = self.rng.integers(0, len(self._s), size=n)
        return Batch(np.array(self._s)[idx], np.array(self._a)[idx],
                     np.array(self._r)[idx], np.array(self._s2)[idx],
                     np.array(self._d, dtype=float)[idx])


def run_offline_to_online(config, checkpoint_path):
    """Fine-tune an offline-trained agent with live interaction.

    Each online step acts once in the environment, then trains on a batch
    that mixes round(eta * M) offline samples with fresh ones, where eta
    decays from 1 toward 1/2. Until the online buffer can cover its share,
    the shortfall comes from the offline dataset.
    """
    env = make_env(config)
    dataset = get_dataset(config, env)
    out = Path(config.out_dir) / config.run_id
    out.mkdir(parents=True, exist_ok=True)
    per_seed = {}
    failed = {}
    checkpoints = {}
    for seed in config.seeds:
        agent, _ = _load_agent(checkpoint_path)
        sampler = BatchSampler(seed=np.random.SeedSequence([seed, 13]),
                               batch_size=config.batch_size)
        buffer = OnlineBuffer(env.spec.obs_dim, env.spec.act_dim,
                              np.random.SeedSequence([seed, 17]))
        episode_rng = np.random.default_rng(np.random.SeedSequence([seed, 19]))
        writer = MetricsWriter(out / f"seed{seed}.csv", config.run_id, seed)
        scores = []
        fail = False
        state = None
        try:
            ret, score = evaluate(agent, env, config.eval_episodes, seed)
            writer.write(0, eval_return=ret, norm_score=score)
            scores.append(score)
            total = config.online_steps
            for t in range(total):
                if state is None or state.done:
                    state = env.reset(int(episode_rng.integers(2 ** 62)))
                action = agent.act(state.obs)
                nxt, reward, done = env.step(state, action)
                buffer.add(state.obs, action, reward, nxt.obs, done)
                state = nxt
                m = config.batch_size
                n_off = int(round(offline_fraction(t, total) * m))
                n_on = min(m - n_off, len(buffer))
                n_off = m - n_on
                parts = [sampler.sample(dataset, n_off)]
                if n_on:
                    parts.append(buffer.sample(n_on))
                stats = agent.train_step(Batch.concatenate(parts))
                if config.eval_every and (t + 1) % config.eval_every == 0:
                    ret, score = evaluate(agent, env, config.eval_episodes, seed)
                    scores.append(score)
                    writer.write(t + 1, stats, eval_return=ret, norm_score=score)
                else:
                    writer.write(t + 1, stats)
        except (ValueError, FloatingPointError) as exc:
            fail = str(exc)
        finally:
            writer.close()
        per_seed[seed] = scores
        failed[seed] = fail
        if not fail:
            ckpt = out / f"seed{seed}.ckpt"
            agent.save(ckpt, step=config.online_steps)
            checkpoints[seed] = str(ckpt)
    report = {"run": config.run_id, "config": asdict(config),
              "checkpoints": checkpoints, "from_checkpoint": str(checkpoint_path)}
    report.update(_aggregate(per_seed, config.seeds, failed))
    _write_report(out, report)
    return report


def _load_agent(path):
    """Load any agent checkpoint by inspecting its header."""
    from . import nn
    header, _ = nn.load_checkpoint(path)
    kind = header["architecture"].get("agent")
    loader = {"saw": SawAgent, "d3g": D3gAgent, "bc": BcAgent}.get(kind)
    if loader is None:
        raise ValueError(f"unknown agent kind {kind!r} in checkpoint")
    return loader.load(path)


def _write_report(out_dir, report):
    out_dir = Path(out_dir)
    (out_dir / "report.json").write_text(json.dumps(report, indent=2,
                                                    sort_keys=True) + "\n")
    (out_dir / "report.txt").write_text(format_report_table([report]))


def format_report_table(reports):
    """Aligned text table of final scores, one row per run."""
    rows = [("run", "seeds", "final score")]
    for rep in reports:
        n_ok = len(rep.get("per_seed_final", {}))
        if "mean" in rep:
            score = f"{rep['mean']:.1f}±{rep['std']:.1f}"
        else:
            score = "failed"
        rows.append((rep["run"], str(n_ok), score))
    widths = [max(len(r[i]) for r in rows) for i in range(3)]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip()
             for row in rows]
    return "\n".join(lines) + "\n"


def collect_report(metrics_dir):
    """Aggregate final scores from the metrics CSVs under a directory.

    A pure function of the CSV files: per seed, the final score is the mean
    normalized score over the last evaluations; runs aggregate as mean and
    standard deviation over their seeds.
    """
    metrics_dir = Path(metrics_dir)
    runs = {}
    for csv_path in sorted(metrics_dir.rglob("seed*.csv")):
        with open(csv_path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            continue
        run_id = rows[0]["run"]
        seed = int(rows[0]["seed"])
        scores = [float(r["norm_score"]) for r in rows if r["norm_score"] != ""]
        if scores:
            runs.setdefault(run_id, {})[seed] = float(
                np.mean(scores[-FINAL_EVALS:]))
    reports = []
    for run_id in sorted(runs):
        finals = [runs[run_id][s] for s in sorted(runs[run_id])]
        reports.append({"run": run_id,
                        "per_seed_final": {str(s): runs[run_id][s]
                                           for s in sorted(runs[run_id])},
                        "mean": float(np.mean(finals)),
                        "std": float(np.std(finals))})
    return reports

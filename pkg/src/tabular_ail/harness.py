"""Experiment sweeps over (algorithm, seed, budget) cells.

Config files are INI documents read with :mod:`configparser`::

    [experiment]
    env = reset-cliff          ; reset-cliff | random | file
    states = 20
    actions = 5
    horizon = 20
    m = 100                    ; expert trajectories (also sets Reset Cliff rho)
    seeds = 0-19               ; list "0,1,5" or inclusive range "0-19"
    budgets = 500, 1000, 2000, 5000
    algorithms = mbtail, oal
    master_seed = 0
    rfe_fraction = 0.8
    ; mdp_file = env.json      ; for env = file
    ; env_seed = 7             ; for env = random
    ; duplicate = 2            ; copy every state k times (bisimilar fixture)
    ; abstraction = abs.json   ; for mbtail-abs when not using duplicate
    ; output_dir = results

    [mbtail]
    epsilon = 0.1
    bonus_scale = 0.1

Per-algorithm sections pass their keys as keyword arguments. Numbers are
parsed as int or float, ``none`` as None; ``iterations`` and
``step_size`` of MB-TAIL sections build the optimizer config.
"""

from __future__ import annotations

import configparser
import csv
import io
import math
import os
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .abstraction import StateAbstraction, check_bisimulation, k_duplicate
from .ail_opt import OptimizerConfig
from .algorithms import ALGORITHMS, ImitationBudget
from .envs import ResetCliffSpec, build_random_mdp, build_reset_cliff, reset_cliff_expert
from .mdp import ConfigurationError, Policy, SamplingEnv, TabularMdp, value_iteration

SCHEMA = "# tabular-ail results v1"
RESULT_COLUMNS = ["algorithm", "seed", "budget", "interactions", "m", "imitation_gap",
                  "exploration_episodes", "rollout_episodes", "rfe_stopped_early", "error"]
SUMMARY_COLUMNS = ["algorithm", "budget", "runs", "mean_gap", "stderr_gap"]
DEFAULT_BUDGETS = (500, 1000, 2000, 5000, 10000)


def _parse_value(text: str):
    text = text.strip()
    if text.lower() == "none":
        return None
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def parse_int_list(text: str) -> list[int]:
    out = []
    for part in text.replace(" ", "").split(","):
        if not part:
            continue
        if "-" in part:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return out


@dataclass
class ExperimentConfig:
    mdp: TabularMdp
    expert: Policy
    algorithms: list[str]
    seeds: list[int]
    budgets: list[int]
    m: int
    master_seed: int = 0
    rfe_fraction: float = 0.8
    params: dict = field(default_factory=dict)
    abstraction: StateAbstraction | None = None
    output_dir: str = "results"

    def __post_init__(self):
        if not self.seeds:
            raise ConfigurationError("seed list is empty")
        if not self.budgets:
            raise ConfigurationError("budget grid is empty")
        if any(b < 0 for b in self.budgets):
            raise ConfigurationError("budgets must be nonnegative")
        unknown = [a for a in self.algorithms if a not in ALGORITHMS]
        if unknown or not self.algorithms:
            raise ConfigurationError(f"unknown algorithms {unknown} (known: {sorted(ALGORITHMS)})")
        if "mbtail-abs" in self.algorithms:
            if self.abstraction is None:
                raise ConfigurationError("mbtail-abs needs an abstraction (set duplicate or abstraction)")
            report = check_bisimulation(self.mdp, self.expert, self.abstraction)
            if not report:
                raise ConfigurationError(f"abstraction is not a bisimulation: {report.violation}")


def _expert_for(mdp: TabularMdp) -> Policy:
    if mdp.rewards is None:
        raise ConfigurationError("environment has no rewards, so no expert can be derived")
    return value_iteration(mdp)[0]


def load_config(path) -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    with open(path) as fh:
        text = fh.read()
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigurationError(str(exc)) from exc
    if "experiment" not in parser:
        raise ConfigurationError("config has no [experiment] section")
    base = Path(path).parent
    return config_from_parser(parser, base)


def config_from_parser(parser: configparser.ConfigParser, base: Path = Path(".")) -> ExperimentConfig:
    ex = parser["experiment"]
    try:
        kind = ex.get("env", "reset-cliff")
        m = ex.getint("m", 100)
        if kind == "reset-cliff":
            spec = ResetCliffSpec(ex.getint("states", 20), ex.getint("actions", 5), ex.getint("horizon", 20), m)
            mdp, expert = build_reset_cliff(spec), reset_cliff_expert(spec)
        elif kind == "random":
            mdp = build_random_mdp(ex.getint("states"), ex.getint("actions"), ex.getint("horizon"),
                                   ex.getint("env_seed", 0))
            expert = _expert_for(mdp)
        elif kind == "file":
            mdp = TabularMdp.load(base / ex["mdp_file"])
            expert = _expert_for(mdp)
        else:
            raise ConfigurationError(f"unknown env {kind!r}")

        abstraction = None
        k = ex.getint("duplicate", 1)
        if k > 1:
            mdp, abstraction, expert = k_duplicate(mdp, k, expert)
        elif "abstraction" in ex:
            abstraction = StateAbstraction.load(base / ex["abstraction"])

        algorithms = [a.strip() for a in ex.get("algorithms", "mbtail").split(",") if a.strip()]
        params = {}
        for name in algorithms:
            if name in parser:
                params[name] = {key: _parse_value(val) for key, val in parser[name].items()
                                if key not in parser.defaults()}
        seeds = parse_int_list(ex.get("seeds", "0-19"))
        budgets = parse_int_list(ex.get("budgets", ",".join(map(str, DEFAULT_BUDGETS))))
        return ExperimentConfig(mdp, expert, algorithms, seeds, budgets, m,
                                master_seed=ex.getint("master_seed", 0),
                                rfe_fraction=ex.getfloat("rfe_fraction", 0.8),
                                params=params, abstraction=abstraction,
                                output_dir=ex.get("output_dir", "results"))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigurationError):
            raise
        raise ConfigurationError(f"bad config value: {exc}") from exc


def _fmt(x: float) -> str:
    """12 significant digits: stable across worker processes, whose last-ulp sums may differ."""
    return f"{float(x):.12g}"


def _name_key(name: str) -> int:
    return zlib.crc32(name.encode())


def expert_seed(master: int, seed: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([master, seed, 0])


def algorithm_seed(master: int, seed: int, algorithm: str) -> np.random.SeedSequence:
    return np.random.SeedSequence([master, seed, 1, _name_key(algorithm)])


def _algorithm_kwargs(name: str, params: dict, cfg: ExperimentConfig) -> dict:
    kwargs = dict(params)
    if name in ("mbtail", "mbtail-abs"):
        opt = {}
        for key in ("iterations", "step_size", "step_scale"):
            if key in kwargs:
                opt[key] = kwargs.pop(key)
        if opt:
            kwargs["opt_cfg"] = OptimizerConfig(**opt)
    if name == "mbtail-abs":
        kwargs["abstraction"] = cfg.abstraction
        kwargs["true_mdp"] = cfg.mdp
    return kwargs


def run_cell(cfg: ExperimentConfig, algorithm: str, seed: int, budget: int) -> tuple[dict, float]:
    """Run one cell; failures become rows with the ``error`` column set."""
    row = {"algorithm": algorithm, "seed": seed, "budget": budget, "interactions": "", "m": cfg.m,
           "imitation_gap": "", "exploration_episodes": "", "rollout_episodes": "",
           "rfe_stopped_early": "", "error": ""}
    start = time.perf_counter()
    try:
        env = SamplingEnv(cfg.mdp)
        demos = env.demonstrations(cfg.expert, cfg.m, np.random.default_rng(expert_seed(cfg.master_seed, seed)))
        budget_obj = ImitationBudget(cfg.m, budget, cfg.rfe_fraction)
        kwargs = _algorithm_kwargs(algorithm, cfg.params.get(algorithm, {}), cfg)
        result = ALGORITHMS[algorithm](env, cfg.expert, budget_obj,
                                       seed=algorithm_seed(cfg.master_seed, seed, algorithm),
                                       demonstrations=demos, **kwargs)
        if result.interactions_used != env.episodes:
            raise RuntimeError(f"reported {result.interactions_used} interactions but sampled {env.episodes}")
        if env.episodes > budget:
            raise RuntimeError(f"sampled {env.episodes} episodes over a budget of {budget}")
        if not math.isfinite(result.imitation_gap):
            raise RuntimeError("non-finite imitation gap")
        diag = result.diagnostics
        row.update(interactions=env.episodes, imitation_gap=_fmt(result.imitation_gap),
                   exploration_episodes=diag.get("exploration_episodes", 0),
                   rollout_episodes=diag.get("rollout_episodes", 0),
                   rfe_stopped_early=int(bool(diag.get("rfe_stopped_early", False))))
    except Exception as exc:  # recorded, the sweep goes on
        row["error"] = f"{type(exc).__name__}: {exc}".replace("\n", " ")
    return row, (time.perf_counter() - start) * 1000.0


def cells(cfg: ExperimentConfig) -> list[tuple[str, int, int]]:
    return [(a, s, b) for a in cfg.algorithms for s in cfg.seeds for b in cfg.budgets]


def _run_cell_star(args):
    return run_cell(*args)


def resolve_jobs(jobs: int | None) -> int:
    env = os.environ.get("TABULAR_AIL_JOBS")
    if env:
        try:
            jobs = int(env)
        except ValueError as exc:
            raise ConfigurationError(f"TABULAR_AIL_JOBS must be an integer, got {env!r}") from exc
    jobs = 1 if jobs is None else jobs
    if jobs < 1:
        raise ConfigurationError("jobs must be >= 1")
    return jobs


def run_experiment(cfg: ExperimentConfig, jobs: int = 1) -> tuple[list[dict], list[float]]:
    """All cells in (algorithm, seed, budget) order, whatever the completion order."""
    todo = cells(cfg)
    if jobs <= 1:
        out = [run_cell(cfg, *c) for c in todo]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            out = list(pool.map(_run_cell_star, [(cfg, *c) for c in todo], chunksize=1))
    return [r for r, _ in out], [t for _, t in out]


def summarize(rows: list[dict]) -> list[dict]:
    groups: dict[tuple[str, int], list[float]] = {}
    order = []
    for row in rows:
        key = (row["algorithm"], int(row["budget"]))
        if key not in groups:
            groups[key] = []
            order.append(key)
        if not row.get("error") and row.get("imitation_gap", "") != "":
            groups[key].append(float(row["imitation_gap"]))
    out = []
    for alg, budget in order:
        gaps = np.array(groups[(alg, budget)])
        n = len(gaps)
        mean = float(gaps.mean()) if n else math.nan
        se = float(gaps.std(ddof=1) / math.sqrt(n)) if n > 1 else (0.0 if n == 1 else math.nan)
        out.append({"algorithm": alg, "budget": budget, "runs": n, "mean_gap": _fmt(mean), "stderr_gap": _fmt(se)})
    return out


def _csv_text(columns, rows) -> str:
    buf = io.StringIO()
    buf.write(SCHEMA + "\n")
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def results_csv(rows) -> str:
    return _csv_text(RESULT_COLUMNS, rows)


def summary_csv(summary) -> str:
    return _csv_text(SUMMARY_COLUMNS, summary)


def write_outputs(out_dir, rows, timings, todo) -> dict[str, Path]:
    """Results and summary are deterministic; wall-clock times go to their own file."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"results": out / "results.csv", "summary": out / "summary.csv", "timings": out / "timings.csv"}
    paths["results"].write_text(results_csv(rows))
    paths["summary"].write_text(summary_csv(summarize(rows)))
    with open(paths["timings"], "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["algorithm", "seed", "budget", "wall_time_ms"])
        for (alg, seed, budget), ms in zip(todo, timings):
            writer.writerow([alg, seed, budget, f"{ms:.1f}"])
    return paths


class PlotDataError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


def read_results(text: str) -> list[dict]:
    """Parse a results CSV, skipping ``#`` comment lines; errors carry 1-based line numbers."""
    lines = text.splitlines()
    rows = []
    header = None
    for lineno, line in enumerate(lines, start=1):
        if not line.strip() or line.startswith("#"):
            continue
        fields = next(csv.reader([line]))
        if header is None:
            header = fields
            missing = {"algorithm", "budget", "imitation_gap"} - set(header)
            if missing:
                raise PlotDataError(lineno, f"header lacks columns {sorted(missing)}")
            continue
        if len(fields) != len(header):
            raise PlotDataError(lineno, f"expected {len(header)} fields, found {len(fields)}")
        row = dict(zip(header, fields))
        try:
            row["budget"] = int(row["budget"])
            if row["imitation_gap"] != "":
                float(row["imitation_gap"])
        except ValueError as exc:
            raise PlotDataError(lineno, str(exc)) from exc
        rows.append(row)
    return rows


def plot_data(text: str) -> str:
    """Whitespace table: one line per budget, (mean, stderr) column pair per algorithm."""
    rows = read_results(text)
    summary = summarize(rows)
    algorithms = list(dict.fromkeys(s["algorithm"] for s in summary))
    budgets = sorted({s["budget"] for s in summary})
    header = ["#budget"] + [f"{a}_{c}" for a in algorithms for c in ("mean", "stderr")]
    lookup = {(s["algorithm"], s["budget"]): s for s in summary}
    out = [" ".join(header)]
    for b in budgets:
        fields = [str(b)]
        for a in algorithms:
            s = lookup.get((a, b))
            if s is None:
                fields += ["nan", "nan"]
            else:
                fields += [f"{float(s['mean_gap']):.6g}", f"{float(s['stderr_gap']):.6g}"]
        out.append(" ".join(fields))
    return "\n".join(out) + "\n"

"""Environment stepping, Copeland regret accounting and the Monte Carlo harness."""
from __future__ import annotations

import csv
import json
import logging
import os
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .model import (
    PreferenceMatrix,
    ScoreVector,
    copeland_scores,
    generate_random_instance,
    save_matrix_csv,
    unique_winner,
)
from .pairs import n_pairs
from .policies import DuelPolicy, SupKLUCB, default_constants, make_policy

log = logging.getLogger(__name__)

DEFAULT_CHECKPOINTS = 200
THREADS_ENV = "DUELBENCH_THREADS"


class Environment:
    """Stationary dueling environment over a preference matrix."""

    def __init__(self, pm: PreferenceMatrix, seed=None):
        self.pm = pm
        self.true_scores = copeland_scores(pm)
        winner = unique_winner(self.true_scores)
        if winner is None:
            raise ValueError("environment needs a unique Copeland winner")
        self.winner = winner
        self.rng = np.random.default_rng(seed)

    @property
    def k(self) -> int:
        return self.pm.k

    def duel(self, i: int, j: int) -> int:
        """1 if arm ``i`` is preferred over arm ``j`` in this comparison, else 0."""
        if not 0 <= i <= j < self.k:
            raise ValueError(f"invalid duel ({i}, {j}) for k={self.k}")
        return 1 if self.rng.random() < self.pm.p[i, j] else 0


def copeland_regret(true_scores: Union[ScoreVector, np.ndarray], winner: int, i: int, j: int) -> float:
    z = true_scores.values if isinstance(true_scores, ScoreVector) else true_scores
    return (2.0 * z[winner] - z[i] - z[j]) / 2.0


def mean_pair_regret(true_scores: ScoreVector, winner: int) -> float:
    """Average per-round regret of a uniformly random canonical pair."""
    z = true_scores.values
    first, second = np.triu_indices(len(z))
    return float(np.mean((2.0 * z[winner] - z[first] - z[second]) / 2.0))


class RegretLedger:
    """Per-round Copeland regret with running sums (optional full trace)."""

    def __init__(self, keep_trace: bool = False):
        self.total = 0.0
        self.per_round: Optional[list[float]] = [] if keep_trace else None
        self.cumulative: Optional[list[float]] = [] if keep_trace else None

    def record(self, regret: float) -> float:
        self.total += regret
        if self.per_round is not None:
            self.per_round.append(regret)
            self.cumulative.append(self.total)
        return self.total


def log_checkpoints(horizon: int, count: int = DEFAULT_CHECKPOINTS) -> np.ndarray:
    """Up to ``count`` distinct log-spaced rounds in ``[1, horizon]``, ending at ``horizon``."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if count >= horizon:
        return np.arange(1, horizon + 1, dtype=np.int64)
    count = max(1, count)
    rounds = np.unique(np.round(np.geomspace(1, horizon, count)).astype(np.int64))
    rounds[-1] = horizon
    return rounds


@dataclass
class RunResult:
    policy: str
    game: int
    iteration: int
    rounds: np.ndarray
    cum_regret: np.ndarray
    recommended: int
    winner: int
    wall_time: float = field(default=0.0, compare=False)
    trace: Optional[list[float]] = field(default=None, repr=False, compare=False)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RunResult):
            return NotImplemented
        return (
            (self.policy, self.game, self.iteration, self.recommended, self.winner)
            == (other.policy, other.game, other.iteration, other.recommended, other.winner)
            and np.array_equal(self.rounds, other.rounds)
            and np.array_equal(self.cum_regret, other.cum_regret)
        )

    @property
    def final_regret(self) -> float:
        return float(self.cum_regret[-1])


def run_single(
    env: Environment,
    policy: DuelPolicy,
    horizon: int,
    checkpoints: Optional[Sequence[int]] = None,
    *,
    fused: bool = True,
    keep_trace: bool = False,
    policy_name: Optional[str] = None,
    game: int = 0,
    iteration: int = 0,
) -> RunResult:
    """Play ``horizon`` rounds of ``policy`` against ``env``.

    With ``fused=True`` policies that provide a compiled loop run inside it;
    the object-level propose/duel/observe loop gives identical results and is
    used for other policies, or when a full per-round trace is requested.
    """
    if isinstance(policy, SupKLUCB) and horizon < policy.pairs.kbar:
        raise ValueError(
            f"horizon {horizon} is shorter than the {policy.pairs.kbar} initialisation rounds"
        )
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    rounds = log_checkpoints(horizon) if checkpoints is None else np.asarray(checkpoints, dtype=np.int64)
    if len(rounds) == 0 or np.any(np.diff(rounds) <= 0) or rounds[0] < 1 or rounds[-1] > horizon:
        raise ValueError("checkpoints must be strictly increasing rounds within [1, horizon]")

    t0 = time.perf_counter()
    cum = None
    trace = None
    if fused and not keep_trace:
        cum = policy.run_fused(env.pm.p, env.rng, env.true_scores.values, env.winner,
                               1, horizon, rounds)
    if cum is None:
        ledger = RegretLedger(keep_trace)
        cum = np.empty(len(rounds))
        ci = 0
        z = env.true_scores.values
        for n in range(1, horizon + 1):
            i, j = policy.propose(n)
            w = env.duel(i, j)
            policy.observe(w)
            total = ledger.record(copeland_regret(z, env.winner, i, j))
            if ci < len(rounds) and rounds[ci] == n:
                cum[ci] = total
                ci += 1
        trace = ledger.per_round
    return RunResult(
        policy=policy_name or policy.name,
        game=game,
        iteration=iteration,
        rounds=rounds,
        cum_regret=np.asarray(cum, dtype=float),
        recommended=policy.recommend(),
        winner=env.winner,
        wall_time=time.perf_counter() - t0,
        trace=trace,
    )


# ---------------------------------------------------------------------------
# experiment harness


@dataclass(frozen=True)
class PolicySpec:
    name: str
    params: dict = field(default_factory=dict)

    @property
    def label(self) -> str:
        return self.name


@dataclass
class ExperimentConfig:
    arms: int
    horizon: int
    games: int = 1
    iterations: int = 1
    policies: list[PolicySpec] = field(default_factory=lambda: [PolicySpec("sup-klucb")])
    seed: int = 0
    min_gap: float = 0.0
    checkpoints: int = DEFAULT_CHECKPOINTS

    def validate(self) -> None:
        if self.arms < 2:
            raise ValueError(f"need at least 2 arms, got {self.arms}")
        if self.games < 1 or self.iterations < 1:
            raise ValueError("games and iterations must both be >= 1")
        if self.horizon < n_pairs(self.arms):
            raise ValueError(
                f"horizon {self.horizon} is below K(K+1)/2 = {n_pairs(self.arms)} for K={self.arms}"
            )
        if self.checkpoints < 1:
            raise ValueError("checkpoints must be >= 1")
        if not self.policies:
            raise ValueError("no policies selected")
        labels = [p.label for p in self.policies]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate policies: {labels}")
        for spec in self.policies:
            if spec.name == SupKLUCB.name and "c1" not in spec.params:
                default_constants(self.arms)
            # construction checks the parameter set and values
            make_policy(spec.name, self.arms, seed=0, **spec.params)


def policy_code(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def derive_seed(*parts: int) -> int:
    """Stable 64-bit seed for a tuple of nonnegative integers."""
    return int(np.random.SeedSequence(list(parts)).generate_state(1, np.uint64)[0])


def instance_seed(master: int, game: int) -> int:
    return derive_seed(master, game)


def env_seed(master: int, game: int, iteration: int) -> int:
    return derive_seed(master, game, iteration)


def policy_seed(master: int, game: int, iteration: int, name: str) -> int:
    return derive_seed(master, game, iteration, policy_code(name))


def make_instances(cfg: ExperimentConfig) -> list[PreferenceMatrix]:
    return [
        generate_random_instance(cfg.arms, instance_seed(cfg.seed, g), cfg.min_gap)
        for g in range(cfg.games)
    ]


def _run_task(args) -> RunResult:
    pm, cfg_seed, game, iteration, spec, horizon, rounds = args
    env = Environment(pm, env_seed(cfg_seed, game, iteration))
    policy = make_policy(spec.name, pm.k, seed=policy_seed(cfg_seed, game, iteration, spec.label),
                         **spec.params)
    return run_single(env, policy, horizon, rounds, policy_name=spec.label,
                      game=game, iteration=iteration)


def worker_count(serial: bool = False) -> int:
    if serial:
        return 1
    cap = os.environ.get(THREADS_ENV)
    n = os.cpu_count() or 1
    if cap:
        n = min(n, max(1, int(cap)))
    return n


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    instances: list[PreferenceMatrix]
    runs: list[RunResult]

    def summary(self) -> dict:
        return summarize(self.runs)


def run_experiment(
    cfg: ExperimentConfig,
    *,
    serial: bool = False,
    workers: Optional[int] = None,
    instances: Optional[list[PreferenceMatrix]] = None,
) -> ExperimentResult:
    """Run every (game, iteration, policy) combination.

    Seeds depend only on the run's position, so serial and parallel execution
    produce the same results; runs are returned sorted by position.
    """
    cfg.validate()
    if instances is None:
        instances = make_instances(cfg)
    rounds = log_checkpoints(cfg.horizon, cfg.checkpoints)
    tasks = [
        (instances[g], cfg.seed, g, r, spec, cfg.horizon, rounds)
        for g in range(cfg.games)
        for r in range(cfg.iterations)
        for spec in cfg.policies
    ]
    n_workers = workers if workers is not None else worker_count(serial)
    if serial or n_workers <= 1:
        runs = [_run_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            runs = list(pool.map(_run_task, tasks))
    order = {spec.label: n for n, spec in enumerate(cfg.policies)}
    runs.sort(key=lambda r: (r.game, r.iteration, order[r.policy]))
    return ExperimentResult(cfg, instances, runs)


def summarize(runs: Sequence[RunResult]) -> dict:
    """Per-policy mean trajectory, 25-75% band and winner accuracy."""
    out: dict = {}
    for name in dict.fromkeys(r.policy for r in runs):
        mine = [r for r in runs if r.policy == name]
        rounds = mine[0].rounds
        if any(not np.array_equal(r.rounds, rounds) for r in mine):
            raise ValueError(f"runs of {name!r} use different checkpoints")
        curves = np.vstack([r.cum_regret for r in mine])
        p25, p75 = np.percentile(curves, [25, 75], axis=0)
        out[name] = {
            "rounds": [int(x) for x in rounds],
            "mean": [float(x) for x in curves.mean(axis=0)],
            "p25": [float(x) for x in p25],
            "p75": [float(x) for x in p75],
            "final_winner_accuracy": float(np.mean([r.recommended == r.winner for r in mine])),
        }
    return out


# ---------------------------------------------------------------------------
# output files

RESULTS_HEADER = ["policy", "game", "iteration", "round", "cum_regret"]


def write_results_csv(runs: Iterable[RunResult], path: Union[str, Path]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RESULTS_HEADER)
        for r in runs:
            for rnd, value in zip(r.rounds, r.cum_regret):
                writer.writerow([r.policy, r.game, r.iteration, int(rnd), f"{value:.10g}"])


def read_results_csv(path: Union[str, Path]) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != RESULTS_HEADER:
            raise ValueError(f"unexpected results header {reader.fieldnames}")
        return [
            {
                "policy": row["policy"],
                "game": int(row["game"]),
                "iteration": int(row["iteration"]),
                "round": int(row["round"]),
                "cum_regret": float(row["cum_regret"]),
            }
            for row in reader
        ]


def write_summary_json(summary: dict, path: Union[str, Path]) -> None:
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=False)
        fh.write("\n")


def write_instances(instances: Sequence[PreferenceMatrix], directory: Union[str, Path]) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for g, pm in enumerate(instances):
        path = directory / f"game_{g:04d}.csv"
        save_matrix_csv(pm, path)
        paths.append(path)
    return paths


def config_to_dict(cfg: ExperimentConfig) -> dict:
    d = asdict(cfg)
    d["policies"] = [{"name": p.name, **p.params} for p in cfg.policies]
    return d

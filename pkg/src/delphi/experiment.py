"""Experiment configuration, per-seed execution and report writing."""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import cubegame as cg
from .algorithm import (
    HyperParams,
    compute_hyperparameters,
    exact_measurement_params,
    freeze_policy,
    inaccuracy_regime,
    run_delphi,
    run_delphi_q,
    tolerated_inaccuracy,
    trace_q_policy,
)
from .environments import HypercubeMDP, InaccurateEnv, TabularMDP, hypercube_from_config, random_tabular
from .errors import BudgetExceeded, DelphiError, InvalidConfig
from .exact import exact_optimal, exact_q, exact_value, linear_value_param
from .expert import ExpertOracle
from .mdp import ActionFeatureMap, Simulator

MODES = ("v", "q", "cubegame")
DELPHI_COLUMNS = ["seed", "status", "error", "oracle_calls", "expert_calls", "exploratory_samples",
                  "rollout_samples", "iterations", "termination", "final_optimistic_value",
                  "policy_value", "expert_value", "success"]
CUBE_COLUMNS = ["seed", "status", "error", "success", "reward", "target_reward", "queries", "samples",
                "interactions", "wrong_bits"]


@dataclass
class ExperimentConfig:
    """Serializable experiment description.

    ``seeds`` lists the run seeds; when ``repeat`` is set the list is
    replaced by ``seeds[0], seeds[0] + 1, ..., seeds[0] + repeat - 1``.
    """

    mode: str = "v"
    env: dict = field(default_factory=dict)
    eps_target: float = 0.1
    delta: float = 0.1
    B: float | str = "auto"
    overrides: dict = field(default_factory=dict)
    threshold_rule: str = "proof"
    seeds: list = field(default_factory=lambda: [0])
    repeat: int | None = None
    exact_measurement: bool = False
    misspecification: dict | None = None
    expert: str = "auto"
    oracle_budget: int | None = None
    budgets: list | None = None
    cubegame: dict = field(default_factory=dict)
    out: str | None = None

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        if not isinstance(doc, dict):
            raise InvalidConfig("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        extra = set(doc) - known
        if extra:
            raise InvalidConfig(f"unknown config key(s): {sorted(extra)}")
        cfg = cls(**doc)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)

    def validate(self) -> None:
        if self.mode not in MODES:
            raise InvalidConfig(f"mode must be one of {MODES}")
        if not isinstance(self.seeds, list) or not self.seeds or \
                not all(isinstance(s, int) for s in self.seeds):
            raise InvalidConfig("seeds must be a non-empty list of integers")
        if self.repeat is not None and (not isinstance(self.repeat, int) or self.repeat < 1):
            raise InvalidConfig("repeat must be a positive integer")
        if self.mode != "cubegame" and not self.env:
            raise InvalidConfig("env config required")
        if self.budgets is not None and not self.budgets:
            raise InvalidConfig("budget grid must be non-empty")
        if self.B != "auto" and not (isinstance(self.B, (int, float)) and self.B > 0):
            raise InvalidConfig("B must be positive or 'auto'")
        if not isinstance(self.overrides, dict):
            raise InvalidConfig("overrides must be an object")

    def seed_list(self) -> list:
        if self.repeat is None:
            return sorted(set(self.seeds))
        return [self.seeds[0] + i for i in range(self.repeat)]


def load_config(path) -> ExperimentConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidConfig(f"cannot read config {path}: {exc}") from exc
    return ExperimentConfig.from_dict(doc)


def apply_override(doc: dict, item: str) -> None:
    """Set a dotted key from ``key=value``; the value is parsed as JSON when possible."""
    if "=" not in item:
        raise InvalidConfig(f"override {item!r} is not key=value")
    key, raw = item.split("=", 1)
    try:
        val = json.loads(raw)
    except json.JSONDecodeError:
        val = raw
    parts = key.split(".")
    node = doc
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise InvalidConfig(f"cannot descend into {part!r} of {key!r}")
    node[parts[-1]] = val


# -- problem construction -----------------------------------------------------

@dataclass
class Problem:
    env: object
    expert_rule: object
    expert_value: float
    theta_star: np.ndarray | None
    B: float
    qfeat: ActionFeatureMap | None = None


def build_env(conf: dict):
    """Returns ``(env, expert table or None)``."""
    kind = conf.get("kind")
    if kind == "random_tabular":
        try:
            mdp, expert = random_tabular(int(conf.get("seed", 0)), conf["layers"], int(conf["num_actions"]),
                                         deterministic=bool(conf.get("deterministic", False)),
                                         bernoulli=bool(conf.get("bernoulli", True)),
                                         gap=float(conf.get("gap", 0.0)),
                                         min_prob=float(conf.get("min_prob", 0.0)))
        except KeyError as exc:
            raise InvalidConfig(f"random_tabular needs {exc}") from exc
        return mdp, expert
    if kind == "tabular":
        if "path" in conf:
            mdp = TabularMDP.load(conf["path"])
        elif "model" in conf:
            mdp = TabularMDP.from_dict(conf["model"])
        else:
            raise InvalidConfig("tabular env needs 'path' or 'model'")
        expert = conf.get("expert")
        return mdp, None if expert is None else np.asarray(expert, dtype=int)
    if kind == "hypercube":
        return hypercube_from_config(conf), None
    raise InvalidConfig(f"unknown env kind {kind!r}")


def _tabular_q_features(mdp: TabularMDP) -> ActionFeatureMap:
    S, A = len(mdp.states()), mdp.num_actions
    eye = np.eye(S * A)
    return ActionFeatureMap(S * A, lambda s, a: eye[s.key * A + a])


def build_problem(cfg: ExperimentConfig) -> Problem:
    env, table = build_env(cfg.env)
    if isinstance(env, HypercubeMDP):
        if cfg.mode == "q":
            raise InvalidConfig("the action-value variant needs a tabular environment")
        rule = env.expert_action
        theta = env.value_param()
    else:
        if cfg.expert == "optimal" or (cfg.expert == "auto" and table is None):
            pi, _ = exact_optimal(env)
            rule = lambda s: pi[s]  # noqa: E731
        elif cfg.expert in ("auto", "provided"):
            if table is None:
                raise InvalidConfig("expert 'provided' needs an expert table in the env config")
            rule = lambda s, t=table: int(t[s.key])  # noqa: E731
        else:
            raise InvalidConfig(f"unknown expert {cfg.expert!r}")
        theta = None
    vo = exact_value(env, env.expert_policy if isinstance(env, HypercubeMDP) else rule)
    qfeat = None
    if cfg.mode == "q":
        qfeat = _tabular_q_features(env)
        q = exact_q(env, vo)
        theta = np.concatenate([q[s] for s in env.states()])
    elif theta is None:
        theta = linear_value_param(env, vo)
    B = float(math.ceil(np.linalg.norm(theta))) if cfg.B == "auto" else float(cfg.B)
    B = max(B, 1.0)
    return Problem(env, rule, vo.start_value(), theta, B, qfeat)


def build_params(cfg: ExperimentConfig, prob: Problem) -> HyperParams:
    d = prob.qfeat.dim if prob.qfeat is not None else prob.env.feature_map.dim
    H, A = prob.env.horizon, prob.env.num_actions
    if cfg.exact_measurement:
        return exact_measurement_params(d, H, A, prob.B, cfg.eps_target, cfg.delta, **cfg.overrides)
    return compute_hyperparameters(d, H, A, prob.B, cfg.eps_target, cfg.delta, cfg.overrides,
                                   threshold_rule=cfg.threshold_rule)


# -- per-seed runs ----------------------------------------------------------

def _fmt(x):
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return repr(x)
    return "" if x is None else str(x)


def run_seed(cfg_doc: dict, seed: int, budget=None) -> dict:
    """Run one seed; errors are captured in the returned row."""
    cfg = ExperimentConfig.from_dict(cfg_doc)
    if cfg.mode == "cubegame":
        return _run_cube_seed(cfg, seed, budget)
    row = {c: None for c in DELPHI_COLUMNS}
    row.update(seed=seed, status="ok", error="")
    art: dict = {}
    try:
        prob = build_problem(cfg)
        params = build_params(cfg, prob)
        env = prob.env
        if cfg.misspecification:
            lam = cfg.misspecification.get("lambda", "auto")
            lam = tolerated_inaccuracy(params) if lam == "auto" else float(lam)
            env = InaccurateEnv(prob.env, lam, cfg.misspecification.get("offset_rule", "random"), seed)
            if cfg.misspecification.get("quadruple", True):
                params = inaccuracy_regime(params)
            art["lambda"] = lam
        oracle = ExpertOracle(prob.expert_rule, env.num_actions,
                              budget=cfg.oracle_budget if budget is None else budget,
                              state_id=env.state_id)
        sim = Simulator(env, seed)
        row["expert_value"] = float(prob.expert_value)
        art["hyperparams"] = params.to_dict()
        try:
            if cfg.mode == "q":
                theta, pol, stats = run_delphi_q(sim, oracle, prob.qfeat, params,
                                                 exact_measurement=cfg.exact_measurement)
                table = trace_q_policy(pol, env, prob.qfeat, params.n_eval, seed,
                                       exact=cfg.exact_measurement)
                full = {s: table.get(s, 0) for s in prob.env.states()}
            else:
                theta, pol, stats = run_delphi(sim, oracle, None, params,
                                               exact_measurement=cfg.exact_measurement)
                full = freeze_policy(pol, env, _eval_states(prob.env), seed)
        except BudgetExceeded as exc:
            row.update(status="budget", error=str(exc), oracle_calls=oracle.call_count,
                       expert_calls=oracle.call_count, success=False)
            art["oracle_log"] = oracle.log
            return {"row": row, "artifacts": art}
        value = exact_value(prob.env, full).start_value()
        row.update(oracle_calls=stats.oracle_calls, expert_calls=oracle.call_count,
                   exploratory_samples=stats.exploratory_samples, rollout_samples=stats.rollout_samples,
                   iterations=stats.iterations, termination=stats.termination,
                   final_optimistic_value=float(stats.optimistic_values[-1]),
                   policy_value=float(value),
                   success=bool(value >= prob.expert_value - cfg.eps_target))
        art.update(
            constraints=[c.to_dict() for c in stats.constraints],
            thetas=[[float(x) for x in t] for t in stats.thetas],
            optimistic_values=[float(v) for v in stats.optimistic_values],
            rows=[asdict(r) for r in stats.rows],
            policy={env.state_id(s): int(a) for s, a in sorted(full.items(), key=lambda kv: env.state_id(kv[0]))},
            theta=[float(x) for x in theta],
            oracle_log=oracle.log,
        )
    except DelphiError as exc:
        row.update(status="error", error=f"{type(exc).__name__}: {exc}")
    return {"row": row, "artifacts": art}


def _eval_states(env):
    from .mdp import reachable_states

    return env.states() if hasattr(env, "states") else reachable_states(env)


def _run_cube_seed(cfg: ExperimentConfig, seed: int, budget=None) -> dict:
    conf = cfg.cubegame
    row = {c: None for c in CUBE_COLUMNS}
    row.update(seed=seed, status="ok", error="")
    art: dict = {}
    try:
        p, K = int(conf.get("p", 4)), int(conf.get("K", 2))
        game = cg.CubeGame(p, K, goal=conf.get("goal"), seed=seed, mode=conf.get("game_mode", "standard"))
        planner = conf.get("planner", "greedy")
        b = conf.get("budget") if budget is None else budget
        if planner == "greedy":
            game.budget = b
            res = cg.greedy_planner(game)
        elif planner == "budgeted":
            res = cg.budgeted_planner(game, int(b or 0), int(conf.get("sample_cap", 0)), seed=seed)
        else:
            raise InvalidConfig(f"unknown planner {planner!r}")
        row.update(success=res.success, reward=float(res.reward), target_reward=float(game.target_reward()),
                   queries=res.queries, samples=res.samples, interactions=res.interactions,
                   wrong_bits=int(np.count_nonzero(game.goal != 1)))
        art["transcript"] = game.transcript
    except BudgetExceeded as exc:
        row.update(status="budget", error=str(exc), success=False)
    except (DelphiError, ValueError) as exc:
        row.update(status="error", error=f"{type(exc).__name__}: {exc}")
    return {"row": row, "artifacts": art}


def _map(fn, jobs, workers):
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, *zip(*jobs)))
    return [fn(*j) for j in jobs]


def csv_text(rows: list, columns: list) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in columns])
    return buf.getvalue()


def aggregate(rows: list, mode: str) -> dict:
    done = [r for r in rows if r["status"] == "ok"]
    out = {"n_seeds": len(rows), "completed": len(done), "failed": len(rows) - len(done),
           "success_rate": float(np.mean([bool(r["success"]) for r in rows])) if rows else 0.0}
    if mode == "cubegame":
        out["mean_queries"] = float(np.mean([r["queries"] for r in done])) if done else None
        out["mean_samples"] = float(np.mean([r["samples"] for r in done])) if done else None
    else:
        calls = [r["oracle_calls"] for r in done]
        out["mean_oracle_calls"] = float(np.mean(calls)) if calls else None
        out["max_oracle_calls"] = int(max(calls)) if calls else None
        out["mean_exploratory_samples"] = float(np.mean([r["exploratory_samples"] for r in done])) \
            if done else None
    return out


def run_experiment(cfg: ExperimentConfig, out_dir, workers: int = 1) -> dict:
    """Run every seed and write ``config.json``, ``runs.csv``, ``aggregate.json`` and per-seed dumps.

    Returns the aggregate dictionary (plus ``budgets`` rows when a grid is set).
    """
    out = Path(out_dir)
    doc = cfg.to_dict()
    seeds = cfg.seed_list()
    results = _map(run_seed, [(doc, s) for s in seeds], workers)
    rows = [r["row"] for r in results]
    columns = CUBE_COLUMNS if cfg.mode == "cubegame" else DELPHI_COLUMNS
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    (out / "runs.csv").write_text(csv_text(rows, columns))
    for s, res in zip(seeds, results):
        _write_artifacts(out / f"seed-{s}", res["artifacts"])
    agg = aggregate(rows, cfg.mode)
    if cfg.budgets:
        curve = compare_oracle_budgets(cfg, workers)
        (out / "budgets.csv").write_text(csv_text(curve, ["budget", "success_rate", "mean_samples"]))
        agg["budgets"] = curve
    (out / "aggregate.json").write_text(json.dumps(agg, indent=2, sort_keys=True) + "\n")
    return agg


def _write_artifacts(path: Path, art: dict) -> None:
    path.mkdir(parents=True, exist_ok=True)
    log = art.pop("oracle_log", None)
    if log is not None:
        (path / "oracle.jsonl").write_text("".join(json.dumps(r) + "\n" for r in log))
    transcript = art.pop("transcript", None)
    if transcript is not None:
        (path / "transcript.jsonl").write_text("".join(json.dumps(r) + "\n" for r in transcript))
    if "constraints" in art:
        (path / "constraints.json").write_text(json.dumps(art.pop("constraints"), indent=1) + "\n")
    (path / "run.json").write_text(json.dumps(art, indent=1, sort_keys=True) + "\n")


def compare_oracle_budgets(cfg: ExperimentConfig, workers: int = 1) -> list:
    """Rows ``{budget, success_rate, mean_samples}`` over the seed list for every budget in the grid."""
    if not cfg.budgets:
        raise InvalidConfig("budget grid must be non-empty")
    doc = cfg.to_dict()
    seeds = cfg.seed_list()
    rows = []
    for b in cfg.budgets:
        res = [r["row"] for r in _map(run_seed, [(doc, s, int(b)) for s in seeds], workers)]
        key = "samples" if cfg.mode == "cubegame" else "exploratory_samples"
        samples = [r[key] or 0 for r in res]
        rows.append({"budget": int(b), "success_rate": float(np.mean([bool(r["success"]) for r in res])),
                     "mean_samples": float(np.mean(samples))})
    return rows


# -- verification -------------------------------------------------------------

def verify_run(run_dir) -> list:
    """Re-check a written run with exact computations.

    Per seed: constraint count against the oracle log, exact value of the
    stored policy against the CSV, retention of the reference parameter in
    every slab, and (exact-measurement runs) the Eluder conditions. Returns
    ``(seed, check, passed, detail)`` tuples.
    """
    from .exact import verify_eluder_sequence

    run_dir = Path(run_dir)
    cfg = load_config(run_dir / "config.json")
    rows = list(csv.DictReader((run_dir / "runs.csv").open()))
    out = []
    if cfg.mode == "cubegame":
        for r in rows:
            ok = r["status"] != "ok" or (r["success"] == "true") == (float(r["reward"]) >= float(r["target_reward"]) - 0.01)
            out.append((int(r["seed"]), "success-flag", ok, r["reward"]))
        return out
    prob = build_problem(cfg)
    env = prob.env
    ids = {env.state_id(s): s for s in _eval_states(env)}
    for r in rows:
        seed = int(r["seed"])
        if r["status"] != "ok":
            continue
        sd = run_dir / f"seed-{seed}"
        cons = json.loads((sd / "constraints.json").read_text())
        art = json.loads((sd / "run.json").read_text())
        log = [ln for ln in (sd / "oracle.jsonl").read_text().splitlines() if ln]
        out.append((seed, "oracle-count", len(log) == int(r["expert_calls"]), f"{len(log)} log lines"))
        value = exact_value(env, {ids[k]: a for k, a in art["policy"].items()}).start_value()
        out.append((seed, "policy-value", abs(value - float(r["policy_value"])) <= 1e-9, repr(value)))
        if not cfg.misspecification:
            worst = max((abs(c["values"][0] + np.dot(c["values"][1:], prob.theta_star)) - c["tau"]
                         for c in cons), default=-1.0)
            out.append((seed, "reference-retained", bool(worst <= 1e-9), repr(float(worst))))
        if cfg.exact_measurement and not cfg.misspecification:
            ok, idx = verify_eluder_sequence([c["values"] for c in cons],
                                             [art["thetas"][c["iteration"] - 1] for c in cons],
                                             prob.theta_star, art["hyperparams"]["eps_bar"])
            out.append((seed, "eluder", ok, "" if ok else f"first violation at {idx}"))
    return out

"""Experiment configs, validation, and the pipelines behind each CLI subcommand."""

from __future__ import annotations

import copy
import csv
import io
import math
import platform
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any, Callable

import numpy as np

from . import __version__, bitcore, optimize, quantum, strategies
from .errors import CapExceededError, ConfigError
from .games import Game, chsh_game, hm_nl_game, kv_game

SCHEMA_VERSION = 1
SUBCOMMANDS = ("value", "brute", "bounds", "violate", "sweep")
METHODS = ("exact", "mc", "fwht", "closed-form")
METHOD_LABELS = {"exact": "exact-enum", "fwht": "fwht", "closed-form": "closed-form", "mc": "monte-carlo"}
GAMES = ("chsh", "hm_nl", "kv", "hm")

# strategy name -> (game, supported evaluator methods)
STRATEGIES: dict[str, tuple[str, tuple[str, ...]]] = {
    "optimal-classical": ("*", ("exact", "mc")),
    "chsh-quantum": ("chsh", ("exact", "mc")),
    "hmnl-argmax": ("hm_nl", ("exact", "mc")),
    "hmnl-halfspace": ("hm_nl", ("closed-form", "mc")),
    "hmnl-quantum": ("hm_nl", ("exact", "mc")),
    "kv-maxweight": ("kv", ("exact", "fwht", "mc")),
    "kv-quantum": ("kv", ("exact", "closed-form", "mc")),
    "hm-protocol": ("hm", ("mc",)),
    "hm-quantum": ("hm", ("exact", "mc")),
    "hm-reduction": ("hm", ("exact", "mc")),
}


@dataclass
class ExperimentConfig:
    game: dict
    strategies: list[dict] = field(default_factory=list)
    evaluator: dict = field(default_factory=lambda: {"method": "exact"})
    seed: int | None = None
    mode: str = "ratio"
    sweep: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        errors = validate(doc)
        if errors:
            raise ConfigError(errors)
        doc = copy.deepcopy(doc)
        doc["strategies"] = [_strategy_entry(s) for s in doc.get("strategies", [])]
        return cls(**{k: v for k, v in doc.items() if k in cls.__dataclass_fields__})

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "game": self.game,
            "strategies": self.strategies,
            "evaluator": self.evaluator,
            "seed": self.seed,
            "mode": self.mode,
            "sweep": self.sweep,
        }


def _strategy_entry(s) -> dict:
    return {"name": s} if isinstance(s, str) else dict(s)


def _check_game(game: dict, errors: list[str], prefix: str = "game") -> None:
    name = game.get("name")
    if name not in GAMES:
        errors.append(f"{prefix}.name must be one of {', '.join(GAMES)}")
        return
    if name == "chsh":
        return
    n = game.get("n")
    if not isinstance(n, int) or isinstance(n, bool) or not bitcore.is_power_of_two(n) or n < 2:
        errors.append("n must be a power of two")
        return
    if name == "kv":
        eta = game.get("eta")
        if not isinstance(eta, (int, float)) or not 0.0 <= eta <= 0.5:
            errors.append("eta must be a number in [0, 1/2]")
    if name in ("hm_nl", "hm") and game.get("family", "full") not in ("full", "reduced"):
        errors.append("family must be 'full' or 'reduced'")
    if name == "hm" and "c" in game:
        c = game["c"]
        root = math.isqrt(n)
        if root * root != n:
            errors.append("hm protocol needs n with an integer square root")
        elif not isinstance(c, int) or c % 2 or not 4 <= c <= root:
            errors.append("c must be even with 4 <= c <= sqrt(n)")


def _dimensions(game: dict) -> tuple[int, int, int, int] | None:
    name, n = game["name"], game.get("n")
    if name == "chsh":
        return 2, 2, 2, 2
    if name == "kv":
        return (1 << n) // n, (1 << n) // n, n, n
    if name == "hm_nl":
        n_y = n // 2 if game.get("family", "full") == "reduced" else bitcore.double_factorial(n - 1)
        return 1 << n, n_y, n, n
    return None


def needs_local_search(game: dict) -> bool:
    """Whether the exact classical optimum is past the brute-force cap."""
    dims = _dimensions(game)
    if dims is None:
        return False
    return not _within_cap(*dims)


def _within_cap(n_x: int, n_y: int, k_a: int, k_b: int) -> bool:
    """min(k_a^n_x, k_b^n_y) <= BRUTE_FORCE_CAP, compared in log space."""
    log_cap = math.log(optimize.BRUTE_FORCE_CAP) + 1e-9
    return min(n_x * math.log(k_a), n_y * math.log(k_b)) <= log_cap


def validate(doc: Any, subcommand: str | None = None) -> list[str]:
    """Static validation; returns a list of error messages (empty when valid)."""
    errors: list[str] = []
    if not isinstance(doc, dict):
        return ["config must be a JSON object"]
    if doc.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
        errors.append(f"unsupported schema_version (expected {SCHEMA_VERSION})")
    known = {"schema_version", "game", "strategies", "evaluator", "seed", "mode", "sweep", "output"}
    for key in doc:
        if key not in known:
            errors.append(f"unknown key {key!r}")
    game = doc.get("game")
    if not isinstance(game, dict):
        errors.append("game must be an object with a name")
        return errors
    _check_game(game, errors)
    seed = doc.get("seed")
    if seed is not None and (not isinstance(seed, int) or isinstance(seed, bool) or seed < 0):
        errors.append("seed must be a non-negative integer")
    evaluator = doc.get("evaluator", {"method": "exact"})
    method = evaluator.get("method", "exact") if isinstance(evaluator, dict) else None
    if method not in METHODS:
        errors.append(f"evaluator.method must be one of {', '.join(METHODS)}")
    stochastic = method == "mc"
    if method == "mc":
        trials = evaluator.get("trials")
        if not isinstance(trials, int) or trials < 1:
            errors.append("evaluator.trials must be a positive integer for mc")
    strategies_ = doc.get("strategies", [])
    if not isinstance(strategies_, list):
        errors.append("strategies must be a list")
        strategies_ = []
    for k, s in enumerate(strategies_):
        entry = _strategy_entry(s) if isinstance(s, (str, dict)) else {}
        name = entry.get("name")
        if name not in STRATEGIES:
            errors.append(f"strategies[{k}]: unknown strategy {name!r}")
            continue
        target, methods = STRATEGIES[name]
        if target != "*" and target != game.get("name"):
            errors.append(f"strategies[{k}]: {name} does not play {game.get('name')}")
        m = entry.get("evaluator", method)
        if m not in methods:
            errors.append(f"strategies[{k}]: {name} does not support evaluator {m!r}")
        stochastic |= m == "mc" or name == "hm-protocol"
    if not errors and (subcommand == "brute" or any(
            _strategy_entry(s).get("name") == "optimal-classical" for s in strategies_)):
        stochastic |= needs_local_search(game)
    if stochastic and seed is None:
        errors.append("seed is required for stochastic evaluators")
    if doc.get("mode", "ratio") not in ("ratio", "deviation"):
        errors.append("mode must be 'ratio' or 'deviation'")
    sweep = doc.get("sweep", {})
    if not isinstance(sweep, dict):
        errors.append("sweep must be an object")
    else:
        for key, values in sweep.items():
            if key not in ("n", "eta", "c") or not isinstance(values, list) or not values:
                errors.append(f"sweep.{key} must be a non-empty list over n, eta or c")
                continue
            for v in values:
                _check_game({**game, key: v}, errors, prefix=f"sweep.{key}")
    output = doc.get("output", {})
    if isinstance(output, dict) and output.get("format", "json") not in ("json", "csv"):
        errors.append("output.format must be 'json' or 'csv'")
    return errors


# -- building blocks ------------------------------------------------------------


def build_game(spec: dict) -> Game:
    name = spec["name"]
    if name == "chsh":
        return chsh_game()
    if name == "kv":
        return kv_game(spec["n"], float(spec["eta"]))
    family = spec.get("family", "full")
    if name in ("hm_nl", "hm"):
        if family == "full" and spec["n"] > bitcore.FULL_MATCHING_CAP:
            return hm_nl_game(spec["n"], "full", cap=spec["n"])  # sampling only
        return hm_nl_game(spec["n"], family)
    raise ConfigError(f"unknown game {name!r}")


def _mc(fn: Callable[[], strategies.MCResult]) -> dict:
    res = fn()
    return {"value": res.estimate, "stderr": res.stderr, "seed": res.seed, "trials": res.trials}


def evaluate_strategy(cfg: ExperimentConfig, entry: dict, game_spec: dict) -> dict:
    name = entry["name"]
    method = entry.get("evaluator", cfg.evaluator.get("method", "exact"))
    trials = entry.get("trials", cfg.evaluator.get("trials"))
    seed = cfg.seed
    gname = game_spec["name"]
    n = game_spec.get("n")
    out: dict[str, Any] = {"strategy": name, "method": METHOD_LABELS[method]}

    if gname == "hm":
        family = game_spec.get("family", "full")
        if name == "hm-protocol":
            c = entry.get("c", game_spec.get("c", 4))
            P = strategies.hm_comm_protocol(n, c, entry.get("beta"))
            out.update(_mc(lambda: strategies.eval_protocol_monte_carlo(P, n, trials, seed, family)))
        elif name == "hm-reduction":
            P = strategies.hmnl_to_hm_reduction(strategies.hmnl_argmax_strategy(n), n)
            if method == "exact":
                out["value"] = strategies.eval_protocol_exact(P, n, family)
            else:
                out.update(_mc(lambda: strategies.eval_protocol_monte_carlo(P, n, trials, seed, family)))
        elif name == "hm-quantum":
            if method == "exact":
                out["value"] = _hm_quantum_exact(n, family)
            else:
                out.update(_mc(lambda: _hm_quantum_mc(n, trials, seed, family)))
        return out

    game = build_game(game_spec)
    if method == "mc":
        S = _unwrap(_strategy_object(name, game, cfg), out)
        out.update(_mc(lambda: strategies.eval_monte_carlo(game, S, trials, seed)))
        return out
    if name == "kv-quantum" and method == "closed-form":
        out["value"] = quantum.kv_quantum_value(n, game.eta)
    elif name == "hmnl-halfspace":
        out["value"] = strategies.halfspace_value(n)
    elif name == "kv-maxweight" and method == "fwht":
        out["value"] = strategies.kv_eval_fwht(*strategies.kv_maxweight_selectors(n), game.eta)
    elif name == "hmnl-argmax" and not _enumerable(game):
        out["value"] = strategies.hmnl_argmax_value(n, game_spec.get("family", "full"))
    else:
        S = _unwrap(_strategy_object(name, game, cfg), out)
        if isinstance(S, quantum.ProjectiveStrategy):
            out["value"] = quantum.quantum_value_exact(game, S)
        else:
            out["value"] = strategies.eval_exact(game, S)
    return out


def _hm_quantum_exact(n: int, family: str) -> float:
    game = hm_nl_game(n, family)
    X = game.alice_inputs()
    wins = 0.0
    for partner in game.bob_inputs():
        Y = np.broadcast_to(partner, (len(X), n))
        P = quantum.hm_quantum_distribution(X, Y)
        _, pairs = quantum._pair_basis(Y)
        rows = np.arange(len(X))[:, None]
        truth = X[rows, pairs[..., 0]] ^ X[rows, pairs[..., 1]]  # (N, n/2)
        correct = np.stack([truth == 0, truth == 1], axis=-1).reshape(len(X), n)
        wins += float(np.sum(P * correct))
    return wins / (len(X) * game.n_y)


def _hm_quantum_mc(n, trials, seed, family):
    def count(rng, size):
        x = rng.integers(0, 2, (size, n), dtype=np.int64)
        if family == "full":
            partner = bitcore.random_partners(rng, n, size)
        else:
            table = np.stack([mt.partner() for mt in bitcore.reduced_matchings(n)])
            partner = table[rng.integers(0, n // 2, size)]
        out = quantum.hm_quantum_outcomes(x, partner, rng)
        return int(np.count_nonzero(strategies.hm_wins(x, partner, out)))

    return strategies.run_chunks(count, trials, seed)


def _unwrap(S, out: dict):
    """Brute-force results carry their witness; note how it was found."""
    if isinstance(S, optimize.BruteForceResult):
        out["witness_method"] = S.method
        out["witness_exact"] = S.exact
        return S.witness
    return S


def _strategy_object(name: str, game: Game, cfg: ExperimentConfig):
    n = getattr(game, "n", None)
    if name == "optimal-classical":
        return _brute(game, cfg)
    if name == "chsh-quantum":
        return quantum.chsh_quantum_strategy()
    if name == "hmnl-argmax":
        return strategies.hmnl_argmax_strategy(n)
    if name == "hmnl-halfspace":
        return strategies.hmnl_halfspace_strategy(n)
    if name == "hmnl-quantum":
        return quantum.hmnl_quantum_strategy(n)
    if name == "kv-maxweight":
        return strategies.kv_maxweight_strategy(n)
    if name == "kv-quantum":
        return quantum.kv_quantum_strategy(n)
    raise ConfigError(f"strategy {name!r} cannot be built for {game.name}")


def _enumerable(game: Game) -> bool:
    """Whether exact enumeration is practical (HM_nl tensors are capped at n=8)."""
    if game.name == "hm_nl":
        return game.n <= bitcore.FULL_MATCHING_CAP
    return game.has_enumerator


# -- bounds and reports ----------------------------------------------------------


def formula_bounds(game_spec: dict) -> dict:
    name = game_spec["name"]
    n = game_spec.get("n")
    if name == "chsh":
        return {
            "classical_value": {"value": 0.75, "method": "bound-formula"},
            "quantum_value": {"value": math.cos(math.pi / 8) ** 2, "method": "closed-form"},
        }
    if name == "kv":
        eta = float(game_spec["eta"])
        return {
            "classical_upper_bound": {"value": optimize.kv_classical_bound(n, eta), "method": "bound-formula"},
            "quantum_lower_bound": {"value": (1 - 2 * eta) ** 2, "method": "bound-formula"},
            "quantum_value": {"value": quantum.kv_quantum_value(n, eta), "method": "closed-form"},
        }
    out = {
        "quantum_value": {"value": 1.0, "method": "closed-form"},
        "halfspace_value": {"value": strategies.halfspace_value(n), "method": "closed-form"},
    }
    if n <= 20:
        out["argmax_value"] = {
            "value": strategies.hmnl_argmax_value(n, game_spec.get("family", "full")),
            "method": "exact-enum",
        }
    if n <= bitcore.FULL_MATCHING_CAP:
        P = strategies.hmnl_to_hm_reduction(strategies.hmnl_argmax_strategy(n), n)
        labels = P.encode(bitcore.ints_to_bits(np.arange(1 << n), n), None)
        diag = optimize.kkl_diagnostic(labels, n, P, game_spec.get("family", "full"))
        out["kkl_diagnostic"] = diag.to_dict()
    return out


def _quantum_for(game_spec: dict, game: Game) -> tuple[float, str]:
    name = game_spec["name"]
    if name == "chsh":
        return quantum.quantum_value_exact(game, quantum.chsh_quantum_strategy()), "exact-enum"
    if name == "kv":
        return quantum.kv_quantum_value(game.n, game.eta), "closed-form"
    if game.n <= bitcore.FULL_MATCHING_CAP:
        return quantum.quantum_value_exact(game, quantum.hmnl_quantum_strategy(game.n)), "exact-enum"
    return 1.0, "closed-form"


def _timestamp() -> str:
    return datetime.now(timezone.utc).isoformat()


class Report:
    """Assembles a report document; timings and host info go under ``meta``."""

    def __init__(self, cfg: ExperimentConfig, subcommand: str):
        self.doc: dict[str, Any] = {
            "schema_version": SCHEMA_VERSION,
            "tool_version": __version__,
            "subcommand": subcommand,
            "config": cfg.to_dict(),
        }
        self.meta: dict[str, Any] = {"started": _timestamp(), "host": platform.node(), "wall_clock": {}}

    def step(self, label: str, fn: Callable[[], Any]) -> Any:
        t0 = time.perf_counter()
        result = fn()
        self.meta["wall_clock"][label] = time.perf_counter() - t0
        return result

    def finish(self) -> dict:
        self.meta["finished"] = _timestamp()
        return {**self.doc, "meta": self.meta}


def _game_spec(cfg: ExperimentConfig) -> dict:
    return dict(cfg.game)


def run(cfg: ExperimentConfig | dict, subcommand: str = "value") -> dict:
    if isinstance(cfg, dict):
        cfg = ExperimentConfig.from_dict(cfg)
    if subcommand not in SUBCOMMANDS:
        raise ConfigError(f"unknown subcommand {subcommand!r}")
    report = Report(cfg, subcommand)
    spec = _game_spec(cfg)
    if subcommand == "value":
        report.doc["results"] = [
            report.step(f"strategy:{k}:{s['name']}", lambda s=s: evaluate_strategy(cfg, s, spec))
            for k, s in enumerate(cfg.strategies)
        ]
    elif subcommand == "brute":
        game = build_game(spec)
        res = report.step("brute-force", lambda: _brute(game, cfg))
        report.doc["results"] = [res.to_dict()]
    elif subcommand == "bounds":
        report.doc["bounds"] = report.step("bounds", lambda: formula_bounds(spec))
    elif subcommand == "violate":
        report.doc["violation"] = report.step("violate", lambda: _violate(cfg, spec))
    elif subcommand == "sweep":
        report.doc["rows"] = report.step("sweep", lambda: sweep_rows(cfg))
    return report.finish()


def _brute(game: Game, cfg: ExperimentConfig) -> optimize.BruteForceResult:
    if not _enumerable(game):
        raise CapExceededError(f"{game.name} {game.params()} is too large for exact enumeration")
    if needs_local_search(cfg.game) and cfg.seed is None:
        raise ConfigError("seed is required when brute force falls back to local search")
    return optimize.brute_force_classical_value(game, seed=cfg.seed or 0)


def _violate(cfg: ExperimentConfig, spec: dict) -> dict:
    if spec["name"] == "kv" and not _within_cap(*_dimensions(spec)):
        # closed forms only: large KV games are never materialized
        n, eta = spec["n"], float(spec["eta"])
        bound = optimize.kv_classical_bound(n, eta)
        report = optimize.violation_report({"name": "kv", "params": {"n": n, "eta": eta},
                                            "proven_upper_bound": bound}, bound,
                                           quantum.kv_quantum_value(n, eta), cfg.mode, "closed-form")
        return report.to_dict()
    game = build_game(spec)
    q, q_method = _quantum_for(spec, game)
    if not (_enumerable(game) and _within_cap(game.n_x, game.n_y, game.k_a, game.k_b)):
        raise CapExceededError("no exact classical value or proven bound available at this size")
    classical = optimize.brute_force_classical_value(game)
    return optimize.violation_report(game, classical, q, cfg.mode, q_method).to_dict()


def _grid(cfg: ExperimentConfig) -> list[dict]:
    spec = _game_spec(cfg)
    keys = [k for k in ("n", "eta", "c") if k in cfg.sweep]
    points = [dict(spec)]
    for key in keys:
        points = [{**p, key: v} for p in points for v in cfg.sweep[key]]
    return points


def _sweep_row(cfg: ExperimentConfig, spec: dict) -> dict:
    name = spec["name"]
    n = spec.get("n")
    row: dict[str, Any] = {"game": name, "n": n}
    if name == "kv":
        eta = float(spec["eta"])
        row.update(eta=eta, quantum_value=quantum.kv_quantum_value(n, eta),
                   classical_bound=optimize.kv_classical_bound(n, eta))
        row["brute_force_value"] = (
            optimize.brute_force_classical_value(kv_game(n, eta)).value
            if _within_cap(*_dimensions(spec)) else None
        )
        row["ratio_lower"] = row["quantum_value"] / row["classical_bound"]
    elif name == "hm_nl":
        family = spec.get("family", "full")
        row.update(family=family, quantum_value=1.0, halfspace_value=strategies.halfspace_value(n),
                   argmax_value=strategies.hmnl_argmax_value(n, family) if n <= 20 else None)
    elif name == "hm":
        c = spec.get("c", 4)
        P = strategies.hm_comm_protocol(n, c)
        res = strategies.eval_protocol_monte_carlo(P, n, cfg.evaluator.get("trials", 10**5),
                                                   cfg.seed or 0, spec.get("family", "full"))
        row.update(c=c, protocol_value=res.estimate, stderr=res.stderr, seed=res.seed, trials=res.trials)
    else:
        row.update(classical_value=0.75, quantum_value=math.cos(math.pi / 8) ** 2)
    return row


def sweep_rows(cfg: ExperimentConfig) -> list[dict]:
    """Rows in grid order; independent points may run concurrently."""
    points = _grid(cfg)
    workers = strategies.default_workers()
    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(lambda p: _sweep_row(cfg, p), points))
    return [_sweep_row(cfg, p) for p in points]


def rows_to_csv(rows: list[dict]) -> str:
    columns: list[str] = []
    for r in rows:
        columns += [k for k in r if k not in columns]
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({k: ("" if r.get(k) is None else r.get(k)) for k in columns})
    return buf.getvalue()

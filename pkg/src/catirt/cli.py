"""Command-line entry points.

Subcommands: ``calibrate``, ``simulate {grid,batch,slip-sweep,term-sweep,
replay}``, ``exercise {ingest,fit,grid}``, ``synth {bank,responses,
exercises}``, and ``rerun`` (re-execute a recorded manifest). Every command
writes a run manifest holding the fully resolved config, the master seed,
and input digests; re-running a manifest reproduces the outputs
byte-for-byte, regardless of the worker count.

Exit codes: 0 success, 2 usage, 3 input parse error, 4 validation /
insufficient data, 5 calibration did not converge.
"""

from __future__ import annotations

import argparse
import json
import os
import secrets
import sys
from typing import Callable, Optional

from . import dataio
from .calibration import CalibrationConfig, calibrate_bank
from .engine import (
    EarlyStop,
    ExplorationConfig,
    FixedLength,
    SelectionPolicy,
    SemThreshold,
    TerminationCriterion,
)
from .errors import CatIrtError, ParseError, ValidationError
from .exercises import (
    FilterConfig,
    accumulate_performance,
    build_construct_responses,
    calibrate_constructs,
    run_filter_grid,
)
from .irt import ItemBank
from .simulate import (
    BatchMetrics,
    SimulatedOutcome,
    SlipSchedule,
    batch_configs,
    run_artificial_grid,
    run_many,
    run_real_replay,
    run_slip_exploration_sweep,
    run_termination_sweep,
)
from .synth import (
    cefr_labels_from_thetas,
    synth_bank,
    synth_exercise_cohort,
    synth_response_records,
)

EXIT_OK = 0
EXIT_PARSE = 3
EXIT_VALIDATION = 4
EXIT_NONCONVERGENCE = 5


def _merge_defaults(given: dict, defaults: dict, context: str) -> dict:
    """Fill defaults and reject unknown keys (no silent typo fallbacks)."""
    unknown = sorted(set(given) - set(defaults))
    if unknown:
        raise ValidationError(f"unknown {context} config keys: {unknown}")
    merged = dict(defaults)
    merged.update(given)
    return merged


def _criterion_from_config(cfg: dict) -> TerminationCriterion:
    cfg = _merge_defaults(
        cfg,
        {
            "kind": "earlystop",
            "length": 50,
            "threshold": 0.3,
            "window": 10,
            "delta": 0.05,
            "min_steps": 25,
            "max_steps": 100,
        },
        "criterion",
    )
    common = dict(min_steps=int(cfg["min_steps"]), max_steps=int(cfg["max_steps"]))
    if cfg["kind"] == "fixed":
        return FixedLength(int(cfg["length"]), **common)
    if cfg["kind"] == "sem":
        return SemThreshold(float(cfg["threshold"]), **common)
    if cfg["kind"] == "earlystop":
        return EarlyStop(int(cfg["window"]), float(cfg["delta"]), **common)
    raise ValidationError(f"unknown criterion kind: {cfg['kind']!r}")


def _slip_from_config(cfg: dict) -> SlipSchedule:
    cfg = _merge_defaults(
        cfg, {"base_rate": 0.0, "early_rate": None, "early_window": 0}, "slip"
    )
    return SlipSchedule(
        base_rate=float(cfg["base_rate"]),
        early_rate=None if cfg["early_rate"] is None else float(cfg["early_rate"]),
        early_window=int(cfg["early_window"]),
    )


def _exploration_from_config(cfg: dict) -> ExplorationConfig:
    cfg = _merge_defaults(
        cfg,
        {
            "epsilon": 0.0,
            "alpha": 0.5,
            "trend_window": 5,
            "start_step": 10,
            "stop_step": 60,
            "flat_threshold": 0.01,
        },
        "exploration",
    )
    return ExplorationConfig(
        epsilon=float(cfg["epsilon"]),
        alpha=float(cfg["alpha"]),
        trend_window=int(cfg["trend_window"]),
        start_step=int(cfg["start_step"]),
        stop_step=int(cfg["stop_step"]),
        flat_threshold=float(cfg["flat_threshold"]),
    )


def _policy_from_config(cfg: dict) -> SelectionPolicy:
    cfg = _merge_defaults(
        cfg,
        {"top_k": 5, "epsilon_coldstart": 0.1, "coldstart_enabled": False},
        "policy",
    )
    return SelectionPolicy(
        top_k=int(cfg["top_k"]),
        epsilon_coldstart=float(cfg["epsilon_coldstart"]),
        coldstart_enabled=bool(cfg["coldstart_enabled"]),
    )


def _bank_from_config(cfg: dict) -> ItemBank:
    if "path" in cfg and "synthetic" in cfg:
        raise ValidationError("bank config must have either 'path' or 'synthetic', not both")
    if "path" in cfg:
        extra = sorted(set(cfg) - {"path"})
        if extra:
            raise ValidationError(f"unknown bank config keys: {extra}")
        return dataio.read_bank(cfg["path"])
    if "synthetic" in cfg:
        extra = sorted(set(cfg) - {"synthetic"})
        if extra:
            raise ValidationError(f"unknown bank config keys: {extra}")
        syn = _merge_defaults(
            cfg["synthetic"],
            {"n_items": 3000, "seed": 0, "log_a_sd": 0.3, "b_sd": 1.5, "c": 0.25},
            "synthetic bank",
        )
        return synth_bank(
            n_items=int(syn["n_items"]),
            seed=int(syn["seed"]),
            log_a_sd=float(syn["log_a_sd"]),
            b_sd=float(syn["b_sd"]),
            c=float(syn["c"]),
        )
    raise ValidationError("bank config needs a 'path' or a 'synthetic' section")


def _calibration_config(cfg: dict) -> CalibrationConfig:
    cfg = _merge_defaults(
        cfg,
        {
            "max_outer_iterations": 200,
            "convergence_tol": 1e-4,
            "estimate_c": False,
            "fixed_c": 0.25,
            "prior_log_a_sd": 0.5,
            "prior_b_sd": 2.0,
            "prior_c_alpha": 5.0,
            "prior_c_beta": 17.0,
        },
        "calibration",
    )
    return CalibrationConfig(
        max_outer_iterations=int(cfg["max_outer_iterations"]),
        convergence_tol=float(cfg["convergence_tol"]),
        estimate_c=bool(cfg["estimate_c"]),
        fixed_c=float(cfg["fixed_c"]),
        prior_log_a_sd=float(cfg["prior_log_a_sd"]),
        prior_b_sd=float(cfg["prior_b_sd"]),
        prior_c_alpha=float(cfg["prior_c_alpha"]),
        prior_c_beta=float(cfg["prior_c_beta"]),
    )


def _load_config(path: Optional[str]) -> dict:
    if path is None:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        try:
            config = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(path, exc.lineno, f"invalid JSON: {exc.msg}") from None
    if not isinstance(config, dict):
        raise ValidationError(f"{path}: config root must be a JSON object")
    return config


def _resolve_seed(flag_seed: Optional[int], config_seed) -> int:
    if flag_seed is not None:
        return int(flag_seed)
    if config_seed is not None:
        return int(config_seed)
    return secrets.randbits(63)


def _write_session_summaries(outcomes: list[SimulatedOutcome], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("session,theta_true,seed,theta_hat,standard_error,n_steps,converged_step,reason\n")
        for i, o in enumerate(outcomes):
            conv = "" if o.result.converged_step is None else str(o.result.converged_step)
            fh.write(
                f"{i},{dataio.fmt(o.theta_true)},{o.config.seed},{dataio.fmt(o.result.ability.theta)},"
                f"{dataio.fmt(o.result.ability.standard_error)},{o.result.n_steps},{conv},"
                f"{o.result.termination_reason}\n"
            )


# --------------------------------------------------------------------------
# Executors: pure functions of (resolved config, out, workers) -> outputs
# --------------------------------------------------------------------------


def _exec_calibrate(config: dict, out_dir: str, workers: int) -> tuple[list[str], int]:
    records = dataio.read_records(config["responses"])
    result = calibrate_bank(records, _calibration_config(config["calibration"]))
    os.makedirs(out_dir, exist_ok=True)
    bank_path = os.path.join(out_dir, "bank.csv")
    abilities_path = os.path.join(out_dir, "abilities.csv")
    dataio.write_bank(result.bank, bank_path)
    dataio.write_abilities(result.abilities, abilities_path)
    print(
        f"calibration {'converged' if result.converged else 'DID NOT converge'} "
        f"after {result.n_iterations} iterations; "
        f"{len(result.bank)} items, {len(result.abilities)} learners, "
        f"{len(result.degenerate_items)} degenerate items"
    )
    status = EXIT_OK if result.converged else EXIT_NONCONVERGENCE
    return ["bank.csv", "abilities.csv"], status


def _exec_simulate_grid(config: dict, out_dir: str, workers: int) -> tuple[list[str], int]:
    bank = _bank_from_config(config["bank"])
    outcomes = run_artificial_grid(
        bank,
        levels=tuple(float(x) for x in config["levels"]),
        per_level=int(config["per_level"]),
        master_seed=int(config["seed"]),
        slip=_slip_from_config(config["slip"]),
        exploration=_exploration_from_config(config["exploration"]),
        warmup_length=int(config["warmup_length"]),
        criterion=_criterion_from_config(config["criterion"]),
        policy=_policy_from_config(config["policy"]),
        continue_after_convergence=int(config["overrun"]),
        workers=workers,
    )
    os.makedirs(out_dir, exist_ok=True)
    outputs = ["summary.csv"]
    _write_session_summaries(outcomes, os.path.join(out_dir, "summary.csv"))
    for i, o in enumerate(outcomes):
        name = f"trace_{i:03d}.csv"
        dataio.write_trace(o.result, bank, os.path.join(out_dir, name))
        outputs.append(name)
    return outputs, EXIT_OK


def _exec_simulate_batch(config: dict, out_dir: str, workers: int) -> tuple[list[str], int]:
    bank = _bank_from_config(config["bank"])
    configs = batch_configs(
        n_sessions=int(config["n_sessions"]),
        master_seed=int(config["seed"]),
        theta_range=tuple(float(x) for x in config["theta_range"]),
        slip=_slip_from_config(config["slip"]),
        exploration=_exploration_from_config(config["exploration"]),
        warmup_length=int(config["warmup_length"]),
        criterion=_criterion_from_config(config["criterion"]),
        policy=_policy_from_config(config["policy"]),
    )
    outcomes = run_many(bank, configs, workers=workers)
    os.makedirs(out_dir, exist_ok=True)
    rows = [("batch", BatchMetrics.from_outcomes(outcomes))] if outcomes else []
    dataio.write_metrics(rows, os.path.join(out_dir, "metrics.csv"))
    _write_session_summaries(outcomes, os.path.join(out_dir, "sessions.csv"))
    return ["metrics.csv", "sessions.csv"], EXIT_OK


def _exec_simulate_slip_sweep(config: dict, out_dir: str, workers: int) -> tuple[list[str], int]:
    bank = _bank_from_config(config["bank"])
    rows = run_slip_exploration_sweep(
        bank,
        master_seed=int(config["seed"]),
        n_sessions=int(config["n_sessions"]),
        slip=_slip_from_config(config["slip"]),
        epsilon=float(config["epsilon"]),
        alphas=tuple(float(a) for a in config["alphas"]),
        exploration_stops=tuple(int(n) for n in config["exploration_stops"]),
        criterion=_criterion_from_config(config["criterion"]),
        workers=workers,
    )
    os.makedirs(out_dir, exist_ok=True)
    dataio.write_metrics(rows, os.path.join(out_dir, "metrics.csv"))
    return ["metrics.csv"], EXIT_OK


def _exec_simulate_term_sweep(config: dict, out_dir: str, workers: int) -> tuple[list[str], int]:
    bank = _bank_from_config(config["bank"])
    rows = run_termination_sweep(
        bank,
        kind=config["kind"],
        master_seed=int(config["seed"]),
        n_sessions=int(config["n_sessions"]),
        slip=_slip_from_config(config["slip"]),
        exploration=_exploration_from_config(config["exploration"]),
        workers=workers,
    )
    os.makedirs(out_dir, exist_ok=True)
    dataio.write_metrics(rows, os.path.join(out_dir, "metrics.csv"))
    return ["metrics.csv"], EXIT_OK


def _exec_simulate_replay(config: dict, out_dir: str, workers: int) -> tuple[list[str], int]:
    bank = _bank_from_config(config["bank"])
    logs = dataio.read_records(config["logs"])
    labels = dataio.read_labels(config["item_labels"]) if config["item_labels"] else None
    outcomes = run_real_replay(
        logs,
        bank,
        mode=config["mode"],
        cefr_item_labels=labels,
        criterion=_criterion_from_config(config["criterion"]),
        master_seed=int(config["seed"]),
    )
    os.makedirs(out_dir, exist_ok=True)
    dataio.write_abilities({o.learner_id: o.ability for o in outcomes}, os.path.join(out_dir, "abilities.csv"))
    with open(os.path.join(out_dir, "replay_summary.csv"), "w", encoding="utf-8") as fh:
        fh.write("learner_id,theta,standard_error,n_steps,reason\n")
        for o in outcomes:
            fh.write(
                f"{o.learner_id},{dataio.fmt(o.ability.theta)},{dataio.fmt(o.ability.standard_error)},"
                f"{o.n_steps},{o.termination_reason}\n"
            )
    return ["abilities.csv", "replay_summary.csv"], EXIT_OK


def _exec_exercise_ingest(config: dict, out_dir: str, workers: int) -> tuple[list[str], int]:
    events = dataio.read_events(config["events"])
    if not events:
        raise ValidationError(f"insufficient data: no events in {config['events']}")
    table = accumulate_performance(events)
    os.makedirs(out_dir, exist_ok=True)
    dataio.write_performance(table, os.path.join(out_dir, "performance.csv"))
    return ["performance.csv"], EXIT_OK


def _exec_exercise_fit(config: dict, out_dir: str, workers: int) -> tuple[list[str], int]:
    events = dataio.read_events(config["events"])
    if not events:
        raise ValidationError(f"insufficient data: no events in {config['events']}")
    filt = FilterConfig(min_exer=int(config["min_exer"]), min_constr=int(config["min_constr"]))
    perf = accumulate_performance(events)
    responses = build_construct_responses(perf, events, filt)
    fit = calibrate_constructs(
        responses,
        config=_calibration_config(config["calibration"]),
        fix_a=bool(config["fix_a"]),
    )
    os.makedirs(out_dir, exist_ok=True)
    dataio.write_bank(fit.bank, os.path.join(out_dir, "constructs.csv"))
    dataio.write_abilities(fit.abilities, os.path.join(out_dir, "abilities.csv"))
    print(
        f"construct fit {'converged' if fit.converged else 'DID NOT converge'} "
        f"after {fit.n_iterations} iterations; {len(fit.bank)} constructs, "
        f"{len(fit.abilities)} students"
    )
    status = EXIT_OK if fit.converged else EXIT_NONCONVERGENCE
    return ["constructs.csv", "abilities.csv"], status


def _exec_exercise_grid(config: dict, out_dir: str, workers: int) -> tuple[list[str], int]:
    events = dataio.read_events(config["events"])
    if not events:
        raise ValidationError(f"insufficient data: no events in {config['events']}")
    labels = dataio.read_labels(config["labels"])
    rows = run_filter_grid(
        events,
        labels,
        grid_cells=[(int(a), int(b)) for a, b in config["cells"]],
        config=_calibration_config(config["calibration"]),
        fix_a=bool(config["fix_a"]),
    )
    os.makedirs(out_dir, exist_ok=True)
    dataio.write_grid_report(rows, os.path.join(out_dir, "report.csv"))
    return ["report.csv"], EXIT_OK


def _exec_synth_bank(config: dict, out_dir: str, workers: int) -> tuple[list[str], int]:
    bank = synth_bank(
        n_items=int(config["n_items"]),
        seed=int(config["seed"]),
        log_a_sd=float(config["log_a_sd"]),
        b_sd=float(config["b_sd"]),
        c=float(config["c"]),
    )
    os.makedirs(out_dir, exist_ok=True)
    comment = (
        f"synthetic bank: n_items={config['n_items']} seed={config['seed']} "
        f"log_a_sd={config['log_a_sd']} b_sd={config['b_sd']} c={config['c']}"
    )
    dataio.write_bank(bank, os.path.join(out_dir, "bank.csv"), header_comments=[comment])
    return ["bank.csv"], EXIT_OK


def _exec_synth_responses(config: dict, out_dir: str, workers: int) -> tuple[list[str], int]:
    bank = _bank_from_config(config["bank"])
    records, thetas = synth_response_records(
        bank,
        n_learners=int(config["n_learners"]),
        responses_per_learner=int(config["responses_per_learner"]),
        seed=int(config["seed"]),
        theta_sd=float(config["theta_sd"]),
    )
    os.makedirs(out_dir, exist_ok=True)
    comment = (
        f"synthetic responses: n_learners={config['n_learners']} "
        f"responses_per_learner={config['responses_per_learner']} seed={config['seed']}"
    )
    dataio.write_records(records, os.path.join(out_dir, "responses.csv"), header_comments=[comment])
    with open(os.path.join(out_dir, "true_thetas.csv"), "w", encoding="utf-8") as fh:
        for lid in sorted(thetas):
            fh.write(f"{lid},{dataio.fmt(thetas[lid])}\n")
    return ["responses.csv", "true_thetas.csv"], EXIT_OK


def _exec_synth_exercises(config: dict, out_dir: str, workers: int) -> tuple[list[str], int]:
    cohort = synth_exercise_cohort(
        n_students=int(config["n_students"]),
        n_constructs=int(config["n_constructs"]),
        seed=int(config["seed"]),
        exercises_per_student=tuple(int(x) for x in config["exercises_per_student"]),
        p_multiple_choice=float(config["p_multiple_choice"]),
    )
    os.makedirs(out_dir, exist_ok=True)
    comment = (
        f"synthetic exercises: n_students={config['n_students']} "
        f"n_constructs={config['n_constructs']} seed={config['seed']}"
    )
    dataio.write_events(cohort.events, os.path.join(out_dir, "events.csv"), header_comments=[comment])
    lo, hi = (float(x) for x in config["labels_range"])
    dataio.write_labels(
        cefr_labels_from_thetas(cohort.true_thetas, lo=lo, hi=hi),
        os.path.join(out_dir, "labels.csv"),
    )
    with open(os.path.join(out_dir, "true_thetas.csv"), "w", encoding="utf-8") as fh:
        for sid in sorted(cohort.true_thetas):
            fh.write(f"{sid},{dataio.fmt(cohort.true_thetas[sid])}\n")
    return ["events.csv", "labels.csv", "true_thetas.csv"], EXIT_OK


_EXECUTORS: dict[str, Callable[[dict, str, int], tuple[list[str], int]]] = {
    "calibrate": _exec_calibrate,
    "simulate grid": _exec_simulate_grid,
    "simulate batch": _exec_simulate_batch,
    "simulate slip-sweep": _exec_simulate_slip_sweep,
    "simulate term-sweep": _exec_simulate_term_sweep,
    "simulate replay": _exec_simulate_replay,
    "exercise ingest": _exec_exercise_ingest,
    "exercise fit": _exec_exercise_fit,
    "exercise grid": _exec_exercise_grid,
    "synth bank": _exec_synth_bank,
    "synth responses": _exec_synth_responses,
    "synth exercises": _exec_synth_exercises,
}


def _execute_and_record(
    command: str, config: dict, out_dir: str, workers: int, input_paths: list[str]
) -> int:
    executor = _EXECUTORS[command]
    outputs, status = executor(config, out_dir, workers)
    dataio.write_manifest(
        os.path.join(out_dir, "manifest.json"),
        command=command,
        config=config,
        master_seed=config.get("seed"),
        inputs=dataio.digest_inputs(input_paths),
        outputs=outputs,
    )
    for name in outputs:
        print(f"wrote {os.path.join(out_dir, name)}")
    return status


# --------------------------------------------------------------------------
# Command resolution (CLI args + config file -> fully resolved config)
# --------------------------------------------------------------------------


def _resolve_calibrate(args) -> tuple[str, dict, list[str]]:
    raw = _load_config(args.config)
    _calibration_config(raw)  # reject unknown keys before touching data
    config = {"responses": os.path.abspath(args.responses), "calibration": raw}
    return "calibrate", config, [config["responses"]]


_SIM_DEFAULTS_COMMON = {
    "bank": None,
    "criterion": {},
    "slip": {},
    "exploration": {},
    "policy": {},
    "warmup_length": 0,
    "seed": None,
}


def _resolve_simulate(args) -> tuple[str, dict, list[str]]:
    raw = _load_config(args.config)
    sub = args.subcommand
    if sub == "grid":
        defaults = dict(_SIM_DEFAULTS_COMMON, levels=[-2.0, -1.0, 0.0, 1.0, 2.0], per_level=3, overrun=10)
    elif sub == "batch":
        defaults = dict(_SIM_DEFAULTS_COMMON, n_sessions=500, theta_range=[-3.5, 3.5])
    elif sub == "slip-sweep":
        defaults = dict(
            _SIM_DEFAULTS_COMMON,
            n_sessions=500,
            epsilon=0.2,
            alphas=[0.25, 0.5, 0.75],
            exploration_stops=[30, 60, 90],
        )
        defaults["slip"] = {"base_rate": 0.05}
        defaults.pop("exploration")
        defaults.pop("warmup_length")
    elif sub == "term-sweep":
        defaults = dict(_SIM_DEFAULTS_COMMON, kind="overall", n_sessions=500)
        defaults["slip"] = {"base_rate": 0.05}
        defaults["exploration"] = {"epsilon": 0.2, "alpha": 0.5, "stop_step": 60}
        defaults.pop("criterion")
        defaults.pop("warmup_length")
    elif sub == "replay":
        defaults = {
            "bank": None,
            "logs": None,
            "mode": "adaptive-replay",
            "item_labels": None,
            "criterion": {},
            "seed": None,
        }
    else:  # pragma: no cover - argparse restricts choices
        raise ValidationError(f"unknown simulate subcommand: {sub!r}")

    config = _merge_defaults(raw, defaults, f"simulate {sub}")
    if config["bank"] is None:
        raise ValidationError("simulate config needs a 'bank' section")
    config["seed"] = _resolve_seed(args.seed, config["seed"])

    inputs = []
    if "path" in config["bank"]:
        config["bank"]["path"] = os.path.abspath(config["bank"]["path"])
        inputs.append(config["bank"]["path"])
    if sub == "replay":
        if config["logs"] is None:
            raise ValidationError("replay config needs a 'logs' path")
        config["logs"] = os.path.abspath(config["logs"])
        inputs.append(config["logs"])
        if config["item_labels"]:
            config["item_labels"] = os.path.abspath(config["item_labels"])
            inputs.append(config["item_labels"])
    return f"simulate {sub}", config, inputs


def _resolve_exercise(args) -> tuple[str, dict, list[str]]:
    raw = _load_config(args.config)
    sub = args.subcommand
    if sub != "grid" and args.labels is not None:
        raise ValidationError(f"exercise {sub} takes no labels file")
    events_path = os.path.abspath(args.events)
    inputs = [events_path]
    if sub == "ingest":
        config = _merge_defaults(raw, {}, "exercise ingest")
        config["events"] = events_path
    elif sub == "fit":
        config = _merge_defaults(
            raw,
            {"min_exer": 50, "min_constr": 1, "fix_a": False, "calibration": {}},
            "exercise fit",
        )
        config["events"] = events_path
    elif sub == "grid":
        if args.labels is None:
            raise ValidationError("exercise grid requires a labels file argument")
        config = _merge_defaults(
            raw,
            {
                "cells": [[50, 1], [100, 1], [50, 4], [100, 4], [50, 7], [100, 7]],
                "fix_a": False,
                "calibration": {},
            },
            "exercise grid",
        )
        config["events"] = events_path
        config["labels"] = os.path.abspath(args.labels)
        inputs.append(config["labels"])
    else:  # pragma: no cover
        raise ValidationError(f"unknown exercise subcommand: {sub!r}")
    return f"exercise {sub}", config, inputs


def _resolve_synth(args) -> tuple[str, dict, list[str]]:
    raw = _load_config(args.config)
    kind = args.kind
    if kind == "bank":
        defaults = {"n_items": 3000, "log_a_sd": 0.3, "b_sd": 1.5, "c": 0.25, "seed": None}
    elif kind == "responses":
        defaults = {
            "bank": None,
            "n_learners": 1000,
            "responses_per_learner": 150,
            "theta_sd": 1.0,
            "seed": None,
        }
    elif kind == "exercises":
        defaults = {
            "n_students": 300,
            "n_constructs": 60,
            "exercises_per_student": [30, 250],
            "p_multiple_choice": 0.3,
            "labels_range": [-3.0, 3.0],
            "seed": None,
        }
    else:  # pragma: no cover
        raise ValidationError(f"unknown synth kind: {kind!r}")
    config = _merge_defaults(raw, defaults, f"synth {kind}")
    config["seed"] = _resolve_seed(args.seed, config["seed"])
    inputs = []
    if kind == "responses":
        if config["bank"] is None:
            raise ValidationError("synth responses config needs a 'bank' section")
        if "path" in config["bank"]:
            config["bank"]["path"] = os.path.abspath(config["bank"]["path"])
            inputs.append(config["bank"]["path"])
    return f"synth {kind}", config, inputs


def cmd_rerun(args) -> int:
    manifest = dataio.read_manifest(args.manifest)
    command = manifest["command"]
    if command not in _EXECUTORS:
        raise ValidationError(f"manifest names unknown command: {command!r}")
    for path, digest in manifest["inputs"].items():
        if not os.path.exists(path):
            raise ValidationError(f"manifest input missing: {path}")
        if dataio.sha256_file(path) != digest:
            raise ValidationError(f"manifest input changed since the recorded run: {path}")
    return _execute_and_record(
        command, manifest["config"], args.out, args.workers, list(manifest["inputs"])
    )


# --------------------------------------------------------------------------
# Argument parsing
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="catirt",
        description="Adaptive testing on the 3PL model: calibration, simulation, exercise analytics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="fit item parameters from a response file")
    p.add_argument("responses", help="response records file (learner_id,item_id,correct[,timestamp])")
    p.add_argument("--config", help="JSON calibration config")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("simulate", help="run simulation experiments")
    p.add_argument("subcommand", choices=["grid", "batch", "slip-sweep", "term-sweep", "replay"])
    p.add_argument("--config", required=True, help="JSON experiment config")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, help="master seed (overrides config)")
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("exercise", help="exercise-log analytics")
    p.add_argument("subcommand", choices=["ingest", "fit", "grid"])
    p.add_argument("events", help="exercise events file")
    p.add_argument("labels", nargs="?", help="CEFR labels file (grid only)")
    p.add_argument("--config", help="JSON config")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("synth", help="generate synthetic datasets")
    p.add_argument("kind", choices=["bank", "responses", "exercises"])
    p.add_argument("--config", help="JSON generator parameters")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, help="generator seed (overrides config)")
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("rerun", help="re-execute a recorded run manifest")
    p.add_argument("manifest", help="manifest.json from a previous run")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--workers", type=int, default=1)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "rerun":
            return cmd_rerun(args)
        if args.command == "calibrate":
            command, config, inputs = _resolve_calibrate(args)
        elif args.command == "simulate":
            command, config, inputs = _resolve_simulate(args)
        elif args.command == "exercise":
            command, config, inputs = _resolve_exercise(args)
        elif args.command == "synth":
            command, config, inputs = _resolve_synth(args)
        else:  # pragma: no cover
            raise ValidationError(f"unknown command: {args.command!r}")
        return _execute_and_record(command, config, args.out, args.workers, inputs)
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except CatIrtError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    raise SystemExit(main())

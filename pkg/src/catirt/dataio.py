"""Line-oriented file formats and run manifests.

Floats are written with ``repr`` (shortest round-trip form), so banks,
traces, and metrics round-trip losslessly and repeated runs diff
byte-identically. Lines starting with ``#`` are comments (generators embed
their parameters there).
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from typing import Iterable, Mapping, Optional, Sequence

from . import __version__
from .calibration import ResponseRecord
from .engine import SessionResult
from .errors import ParseError, ValidationError
from .exercises import ConstructPerformance, ExerciseEvent, GridRow
from .irt import Ability, ItemBank, ItemParams, test_information
from .simulate import BatchMetrics

BANK_HEADER = "item_id,a,b,c,construct_id,response_count"
TRACE_HEADER = "step,item_id,a,b,c,correct,counted,theta,sem,phase"
METRICS_HEADER = "setting,mean_iterations,sd_iterations,mae,sd_error"
ABILITIES_HEADER = "learner_id,theta,standard_error,n_responses"
PERFORMANCE_HEADER = "student_id,construct_id,credits,penalties,rate"
REPORT_HEADER = (
    "min_exer,min_constr,n_train,n_eval,rho,level,n,min,q1,median,q3,max,note"
)


def fmt(x: float) -> str:
    return repr(float(x))


def _data_lines(path: str) -> Iterable[tuple[int, str]]:
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            yield line_no, line


def _parse_bool(path: str, line_no: int, token: str) -> bool:
    if token == "1":
        return True
    if token == "0":
        return False
    raise ParseError(path, line_no, f"expected 0 or 1, got {token!r}")


def _parse_float(path: str, line_no: int, token: str, what: str) -> float:
    try:
        return float(token)
    except ValueError:
        raise ParseError(path, line_no, f"bad {what}: {token!r}") from None


# --------------------------------------------------------------------------
# Item banks
# --------------------------------------------------------------------------


def write_bank(bank: ItemBank, path: str, header_comments: Sequence[str] = ()) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for comment in header_comments:
            fh.write(f"# {comment}\n")
        fh.write(BANK_HEADER + "\n")
        for it in bank:
            construct = it.construct_id if it.construct_id is not None else ""
            fh.write(
                f"{it.item_id},{fmt(it.a)},{fmt(it.b)},{fmt(it.c)},{construct},{it.response_count}\n"
            )


def read_bank(path: str) -> ItemBank:
    items = []
    for line_no, line in _data_lines(path):
        if line == BANK_HEADER:
            continue
        parts = line.split(",")
        if len(parts) != 6:
            raise ParseError(path, line_no, f"expected 6 fields, got {len(parts)}")
        item_id, a, b, c, construct, count = parts
        try:
            items.append(
                ItemParams(
                    item_id=item_id,
                    a=_parse_float(path, line_no, a, "discrimination"),
                    b=_parse_float(path, line_no, b, "difficulty"),
                    c=_parse_float(path, line_no, c, "guessing"),
                    construct_id=construct or None,
                    response_count=int(count),
                )
            )
        except (ValidationError, ValueError) as exc:
            raise ParseError(path, line_no, str(exc)) from None
    return ItemBank(items)


# --------------------------------------------------------------------------
# Response records
# --------------------------------------------------------------------------


def write_records(records: Sequence[ResponseRecord], path: str, header_comments: Sequence[str] = ()) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for comment in header_comments:
            fh.write(f"# {comment}\n")
        for r in records:
            ts = "" if r.timestamp is None else str(r.timestamp)
            fh.write(f"{r.learner_id},{r.item_id},{1 if r.correct else 0},{ts}\n")


def read_records(path: str) -> list[ResponseRecord]:
    records = []
    for line_no, line in _data_lines(path):
        parts = line.split(",")
        if len(parts) not in (3, 4):
            raise ParseError(path, line_no, f"expected 3 or 4 fields, got {len(parts)}")
        learner_id, item_id, correct = parts[0], parts[1], parts[2]
        timestamp: Optional[int] = None
        if len(parts) == 4 and parts[3] != "":
            try:
                timestamp = int(parts[3])
            except ValueError:
                raise ParseError(path, line_no, f"bad timestamp: {parts[3]!r}") from None
        records.append(
            ResponseRecord(
                learner_id=learner_id,
                item_id=item_id,
                correct=_parse_bool(path, line_no, correct),
                timestamp=timestamp,
            )
        )
    return records


# --------------------------------------------------------------------------
# Session traces
# --------------------------------------------------------------------------


def write_trace(result: SessionResult, bank: ItemBank, path: str) -> None:
    """One row per administered item; SEM is over counted items so far."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(TRACE_HEADER + "\n")
        counted_so_far: list[ItemParams] = []
        for i, resp in enumerate(result.responses):
            item = bank.by_id(resp.item_id)
            if resp.counted:
                counted_so_far.append(item)
            theta = result.trajectory[i + 1].theta
            total_info = test_information(theta, counted_so_far)
            sem_val = math.sqrt(1.0 / total_info) if total_info > 0 else math.inf
            phase = "warmup" if i < result.warmup_length else "main"
            fh.write(
                ",".join(
                    [
                        str(i),
                        item.item_id,
                        fmt(item.a),
                        fmt(item.b),
                        fmt(item.c),
                        "1" if resp.correct else "0",
                        "1" if resp.counted else "0",
                        fmt(theta),
                        fmt(sem_val) if math.isfinite(sem_val) else "inf",
                        phase,
                    ]
                )
                + "\n"
            )


# --------------------------------------------------------------------------
# Metrics tables, ability tables, performance tables, grid reports
# --------------------------------------------------------------------------


def write_metrics(rows: Sequence[tuple[str, BatchMetrics]], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(METRICS_HEADER + "\n")
        for label, m in rows:
            fh.write(
                f"{label},{fmt(m.mean_iterations)},{fmt(m.sd_iterations)},{fmt(m.mae)},{fmt(m.sd_error)}\n"
            )


def read_metrics(path: str) -> list[tuple[str, BatchMetrics]]:
    rows = []
    for line_no, line in _data_lines(path):
        if line == METRICS_HEADER:
            continue
        parts = line.split(",")
        if len(parts) != 5:
            raise ParseError(path, line_no, f"expected 5 fields, got {len(parts)}")
        rows.append(
            (
                parts[0],
                BatchMetrics(
                    mean_iterations=_parse_float(path, line_no, parts[1], "mean_iterations"),
                    sd_iterations=_parse_float(path, line_no, parts[2], "sd_iterations"),
                    mae=_parse_float(path, line_no, parts[3], "mae"),
                    sd_error=_parse_float(path, line_no, parts[4], "sd_error"),
                ),
            )
        )
    return rows


def write_abilities(abilities: Mapping[str, Ability], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(ABILITIES_HEADER + "\n")
        for learner_id in sorted(abilities):
            ab = abilities[learner_id]
            se = fmt(ab.standard_error) if math.isfinite(ab.standard_error) else "inf"
            fh.write(f"{learner_id},{fmt(ab.theta)},{se},{ab.n_responses}\n")


def read_abilities(path: str) -> dict[str, Ability]:
    out: dict[str, Ability] = {}
    for line_no, line in _data_lines(path):
        if line == ABILITIES_HEADER:
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise ParseError(path, line_no, f"expected 4 fields, got {len(parts)}")
        out[parts[0]] = Ability(
            theta=_parse_float(path, line_no, parts[1], "theta"),
            standard_error=float("inf") if parts[2] == "inf" else _parse_float(path, line_no, parts[2], "standard_error"),
            n_responses=int(parts[3]),
        )
    return out


def write_performance(
    table: Mapping[tuple[str, str], ConstructPerformance], path: str
) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(PERFORMANCE_HEADER + "\n")
        for key in sorted(table):
            p = table[key]
            rate = fmt(p.rate) if p.trials else ""
            fh.write(f"{p.student_id},{p.construct_id},{p.credits},{p.penalties},{rate}\n")


def write_grid_report(rows: Sequence[GridRow], path: str) -> None:
    """Flattened filter-grid report: one line per (cell, level)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(REPORT_HEADER + "\n")
        for row in rows:
            prefix = f"{row.min_exer},{row.min_constr},{row.n_train},{row.n_eval}"
            rho = fmt(row.rho) if row.rho is not None and not math.isnan(row.rho) else ""
            if row.error is not None:
                fh.write(f"{prefix},{rho},,,,,,,,{row.error}\n")
                continue
            if not row.level_summaries:
                fh.write(f"{prefix},{rho},,,,,,,,\n")
                continue
            for s in row.level_summaries:
                fh.write(
                    f"{prefix},{rho},{s.level},{s.n},{fmt(s.minimum)},{fmt(s.q1)},"
                    f"{fmt(s.median)},{fmt(s.q3)},{fmt(s.maximum)},\n"
                )


# --------------------------------------------------------------------------
# Exercise events
# --------------------------------------------------------------------------


def write_events(events: Sequence[ExerciseEvent], path: str, header_comments: Sequence[str] = ()) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for comment in header_comments:
            fh.write(f"# {comment}\n")
        for e in events:
            outcomes = ";".join(
                f"{cid}:{1 if ok else 0}" for cid, ok in sorted(e.construct_outcomes.items())
            )
            hints = ";".join(sorted(e.hinted_constructs))
            ts = "" if e.timestamp is None else str(e.timestamp)
            fh.write(f"{e.student_id},{e.exercise_id},{e.exercise_type},{outcomes},{hints},{ts}\n")


def read_events(path: str) -> list[ExerciseEvent]:
    events = []
    for line_no, line in _data_lines(path):
        parts = line.split(",")
        if len(parts) != 6:
            raise ParseError(path, line_no, f"expected 6 fields, got {len(parts)}")
        student_id, exercise_id, ex_type, outcomes_s, hints_s, ts = parts
        outcomes = {}
        for token in outcomes_s.split(";"):
            if not token:
                continue
            if ":" not in token:
                raise ParseError(path, line_no, f"bad outcome token: {token!r}")
            cid, val = token.rsplit(":", 1)
            outcomes[cid] = _parse_bool(path, line_no, val)
        hinted = frozenset(t for t in hints_s.split(";") if t)
        timestamp = None
        if ts:
            try:
                timestamp = int(ts)
            except ValueError:
                raise ParseError(path, line_no, f"bad timestamp: {ts!r}") from None
        try:
            events.append(
                ExerciseEvent(
                    student_id=student_id,
                    exercise_id=exercise_id,
                    exercise_type=ex_type,
                    construct_outcomes=outcomes,
                    hinted_constructs=hinted,
                    timestamp=timestamp,
                )
            )
        except ValidationError as exc:
            raise ParseError(path, line_no, str(exc)) from None
    return events


def write_labels(labels: Mapping[str, int], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for sid in sorted(labels):
            fh.write(f"{sid},{int(labels[sid])}\n")


def read_labels(path: str) -> dict[str, int]:
    labels: dict[str, int] = {}
    for line_no, line in _data_lines(path):
        parts = line.split(",")
        if len(parts) != 2:
            raise ParseError(path, line_no, f"expected 2 fields, got {len(parts)}")
        try:
            level = int(parts[1])
        except ValueError:
            raise ParseError(path, line_no, f"bad level: {parts[1]!r}") from None
        if not (0 <= level <= 5):
            raise ParseError(path, line_no, f"level out of range 0..5: {level}")
        labels[parts[0]] = level
    return labels


# --------------------------------------------------------------------------
# Run manifests
# --------------------------------------------------------------------------


def sha256_file(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(65536), b""):
            digest.update(block)
    return digest.hexdigest()


def write_manifest(
    path: str,
    command: str,
    config: dict,
    master_seed: Optional[int],
    inputs: Mapping[str, str],
    outputs: Sequence[str],
) -> None:
    """Record everything needed to byte-reproduce the run."""
    manifest = {
        "command": command,
        "config": config,
        "master_seed": master_seed,
        "inputs": dict(inputs),
        "outputs": sorted(outputs),
        "version": __version__,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_manifest(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def digest_inputs(paths: Sequence[str]) -> dict[str, str]:
    return {os.path.abspath(p): sha256_file(p) for p in paths}

"""Scenario orchestration and artifact formats.

Artifacts for one run:

* round log (JSONL): a header line with the scenario description, then one
  ``{"type": "round", ...}`` line per round;
* curve (CSV): running MSE, its standard error and the k-sigma null band;
* report (JSON): scenario description plus the certification result.

All three record the seed, and are byte-identical for identical (config, seed).
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .config import ScenarioConfig
from .metric import UNIT
from .verifier import (
    CertificationReport,
    RoundRecord,
    SessionAborted,
    certify,
    null_mean,
    null_variance,
    policy_from_description,
    report_document,
    run_session,
)

LOG_FORMAT = 1
SQ_ERR_TOL = 1e-12


class LogError(ValueError):
    pass


@dataclass
class ScenarioResult:
    records: list[RoundRecord]
    report: CertificationReport
    document: dict


def render_report(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def render_round_log(scenario: dict, records: Iterable[RoundRecord]) -> str:
    lines = [json.dumps({"type": "header", "format": LOG_FORMAT, "scenario": scenario}, sort_keys=True)]
    for r in records:
        lines.append(
            json.dumps(
                {"type": "round", "index": r.index, "theta": r.theta, "estimate": r.estimate, "sq_err": r.sq_err},
                sort_keys=True,
            )
        )
    return "\n".join(lines) + "\n"


def read_round_log(path: Path | str) -> tuple[dict, list[RoundRecord]]:
    """Parse a round log, re-scoring every round from its theta and estimate."""
    header = None
    records = []
    try:
        fh = open(path)
    except OSError as exc:
        raise LogError(f"cannot read round log: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise LogError(f"line {lineno}: {exc}") from exc
            if row.get("type") == "header":
                header = row
                continue
            if row.get("type") != "round":
                raise LogError(f"line {lineno}: unknown record type {row.get('type')!r}")
            try:
                rec = RoundRecord.score(row["index"], row["theta"], row["estimate"])
                logged = float(row["sq_err"])
            except (KeyError, TypeError, ValueError) as exc:
                raise LogError(f"line {lineno}: malformed round: {exc}") from exc
            if abs(rec.sq_err - logged) > SQ_ERR_TOL:
                raise LogError(f"line {lineno}: logged sq_err does not match theta and estimate")
            if rec.index != len(records):
                raise LogError(f"line {lineno}: expected round {len(records)}, found {rec.index}")
            records.append(rec)
    if header is None:
        raise LogError("round log has no header line")
    return header["scenario"], records


def rescore(path: Path | str) -> dict:
    """Recompute the report document from a round log."""
    scenario, records = read_round_log(path)
    if not records:
        raise LogError("round log has no rounds")
    prior = policy_from_description(scenario["policy"]).prior
    return report_document(scenario, certify(records, scenario["k_sigma"], prior))


def emit_curve(
    records: Sequence[RoundRecord],
    k_sigma: float = 5.0,
    null_var: float = 1 / 8,
    mean: float = 0.5,
) -> list[dict]:
    """One row per round: running MSE, its standard error, and the null band mean +- k sqrt(var/n)."""
    if not records:
        raise ValueError("curve needs at least one round")
    sq = np.array([r.sq_err for r in records])
    n = np.arange(1, sq.size + 1)
    running = np.cumsum(sq) / n
    second = np.cumsum(sq * sq) / n
    # population variance of the data so far; standard error of the running mean
    spread = np.sqrt(np.maximum(second - running**2, 0.0) / n)
    half = k_sigma * np.sqrt(null_var / n)
    return [
        {
            "n": int(k),
            "mse": float(m),
            "mse_sigma": float(s),
            "band_low": float(mean - h),
            "band_high": float(mean + h),
        }
        for k, m, s, h in zip(n, running, spread, half)
    ]


CURVE_COLUMNS = ("n", "mse", "mse_sigma", "band_low", "band_high")


def render_curve(rows: Sequence[dict], scenario: Optional[dict] = None) -> str:
    buf = io.StringIO()
    if scenario is not None:
        buf.write(f"# name={scenario['name']} seed={scenario['seed']} k_sigma={scenario['k_sigma']}\n")
    writer = csv.DictWriter(buf, fieldnames=CURVE_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    return buf.getvalue()


def curve_for(config: ScenarioConfig, records: Sequence[RoundRecord]) -> str:
    prior = config.policy.prior
    rows = emit_curve(records, config.k_sigma, null_variance(prior, UNIT), null_mean(UNIT))
    return render_curve(rows, config.describe())


def write_artifacts(config: ScenarioConfig, records: Sequence[RoundRecord], doc: dict, suffix: str = "") -> None:
    outputs = config.outputs
    scenario = config.describe()
    writers = {
        "rounds": lambda: render_round_log(scenario, records),
        "curve": lambda: curve_for(config, records),
        "report": lambda: render_report(doc),
    }
    for key, render in writers.items():
        path = outputs.get(key)
        if path is None:
            continue
        path = Path(path)
        if suffix:
            path = path.with_name(f"{path.stem}{suffix}{path.suffix}")
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(render())


def run_scenario(config: ScenarioConfig, write: bool = True) -> ScenarioResult:
    """Run a full session on the configured transport and write its artifacts."""
    if config.transport == "stream":
        from .wire import ProtocolViolation, run_over_stream

        try:
            session, doc = run_over_stream(config)
        except ProtocolViolation as exc:
            if write:
                write_artifacts_partial(config, getattr(exc, "records", []))
            raise
        records, report = session.records, session.report
    else:
        try:
            records, report = run_session(
                config.policy, config.strategy, config.rounds, config.seed, config.k_sigma
            )
        except SessionAborted as exc:
            if write:
                write_artifacts_partial(config, exc.records)
            raise
        doc = report_document(config.describe(), report)
    if write:
        write_artifacts(config, records, doc)
    return ScenarioResult(records, report, doc)


def write_artifacts_partial(config: ScenarioConfig, records: Sequence[RoundRecord]) -> None:
    path = config.outputs.get("rounds")
    if path is not None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(render_round_log(config.describe(), records))


def band_half_width(n: int, k_sigma: float = 5.0, null_var: float = 1 / 8) -> float:
    return k_sigma * math.sqrt(null_var / n)

"""Config parsing and result files.

Output layout for one scenario directory:

``summary.csv``
    one row per replication, columns ``SUMMARY_COLUMNS``.
``aggregate.json``
    trade-fraction and collapse statistics plus target checks.
``trace.jsonl``
    optional, one step event per line.

Floats are written with 17 significant digits and keys in a fixed order so
that a fixed seed and config give byte-identical files.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable

from .config import CONFIG_FIELDS, INTERVAL_FIELDS, ConfigError, ConfigIssue, Interval, SimConfig
from .experiments import ScenarioResult, ScenarioStats, get_scenario

SUMMARY_COLUMNS = (
    "replication_index",
    "seed",
    "total_actions",
    "trading_actions",
    "trade_fraction",
    "collapse_step",
    "final_population",
)
DOCUMENT_KEYS = ("scenario", "name", "description")


class OutputError(OSError):
    pass


def format_float(x: float) -> str:
    if not math.isfinite(x):
        raise ValueError(f"cannot serialize non-finite float {x!r}")
    return format(x, ".17g")


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON text with fixed-precision floats and insertion-ordered keys."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if obj is None or isinstance(obj, (bool, str)):
        return json.dumps(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return format_float(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(dumps(v) for v in obj) + "]"
        items = [pad + dumps(v, indent, _level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _compact(obj) -> str:
    """Single-line variant of :func:`dumps` for JSONL records."""
    if isinstance(obj, dict):
        return "{" + ",".join(f"{json.dumps(str(k))}:{_compact(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(_compact(v) for v in obj) + "]"
    return dumps(obj)


# --- configuration ----------------------------------------------------------


def parse_document(text: str) -> tuple[SimConfig, dict]:
    """Parse a JSON config document into a validated SimConfig.

    Besides the SimConfig fields the document may name a built-in
    ``scenario`` to start from, plus a ``name`` and ``description``. Returns
    the config and those extra entries. Raises ConfigError listing every
    problem found.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([ConfigIssue("", "syntax", f"invalid JSON: {exc}")]) from None
    if not isinstance(doc, dict):
        raise ConfigError([ConfigIssue("", "syntax", "top level must be a JSON object")])

    issues: list[ConfigIssue] = []
    extras = {k: doc[k] for k in DOCUMENT_KEYS if k in doc}
    for key in doc:
        if key not in CONFIG_FIELDS and key not in DOCUMENT_KEYS:
            issues.append(ConfigIssue(key, "unknown_key", "unknown key"))

    base = SimConfig()
    if "scenario" in extras:
        try:
            base = get_scenario(extras["scenario"]).config
        except (KeyError, TypeError):
            issues.append(ConfigIssue("scenario", "range", f"no built-in scenario named {extras['scenario']!r}"))

    values = {}
    for key in CONFIG_FIELDS:
        if key not in doc:
            continue
        value = doc[key]
        if key in INTERVAL_FIELDS:
            if not isinstance(value, list) or len(value) != 2:
                issues.append(ConfigIssue(key, "type", f"expected [lo, hi], got {value!r}"))
                continue
            value = Interval(*value)
        values[key] = value

    config = base.with_(**values)
    issues.extend(config.issues())
    if issues:
        raise ConfigError(issues)
    return config, extras


def parse_config(text: str) -> SimConfig:
    return parse_document(text)[0]


def serialize_config(config: SimConfig) -> str:
    return dumps(config.to_dict()) + "\n"


def load_config(path: str | Path) -> tuple[SimConfig, dict]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError([ConfigIssue(str(path), "missing", f"cannot read config: {exc.strerror}")]) from exc
    return parse_document(text)


# --- results ----------------------------------------------------------------


def summary_rows(result: ScenarioResult) -> list[list[str]]:
    rows = []
    for s in result.replication_summaries:
        rows.append(
            [
                str(s.replication_index),
                str(s.seed),
                str(s.total_actions),
                str(s.trading_actions),
                format_float(s.trade_fraction),
                "" if s.collapse_step is None else str(s.collapse_step),
                str(s.final_population),
            ]
        )
    return rows


def aggregate_document(result: ScenarioResult) -> dict:
    st = result.stats
    return {
        "scenario": result.spec_name,
        "replications": st.replications,
        "n_agents": result.n_agents,
        "trade_fraction": {
            "mean": st.mean,
            "median": st.median,
            "min": st.min,
            "max": st.max,
            "pooled": st.pooled,
        },
        "collapse": {
            "share": st.collapse_share,
            "median_step": st.median_collapse_step,
        },
        "failed_replications": [{"replication_index": i, "error": e} for i, e in result.failed_replications],
        "paper_target": result.paper_target.to_dict() if result.paper_target else None,
        "checks": dict(result.checks),
        "passed": result.passed,
    }


def _write(path: Path, text: str) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror}") from exc


def emit_results(result: ScenarioResult, out_dir: str | Path, trace: Iterable | None = None) -> list[Path]:
    """Write summary.csv, aggregate.json and, when ``trace`` is given, trace.jsonl.

    ``trace`` yields ``(replication_index, StepEvent)`` pairs.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create {out}: {exc.strerror}") from exc

    written = []
    summary = out / "summary.csv"
    try:
        with open(summary, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(SUMMARY_COLUMNS)
            writer.writerows(summary_rows(result))
    except OSError as exc:
        raise OutputError(f"cannot write {summary}: {exc.strerror}") from exc
    written.append(summary)

    aggregate = out / "aggregate.json"
    _write(aggregate, dumps(aggregate_document(result)) + "\n")
    written.append(aggregate)

    if trace is not None:
        path = out / "trace.jsonl"
        lines = []
        for replication, event in trace:
            record = {"replication_index": replication}
            record.update(event.to_dict())
            lines.append(_compact(record))
        _write(path, "".join(line + "\n" for line in lines))
        written.append(path)
    return written


def read_aggregate(path: str | Path) -> tuple[str, ScenarioStats]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise OutputError(f"cannot read aggregate {path}: {exc}") from exc
    tf = doc["trade_fraction"]
    stats = ScenarioStats(
        replications=doc["replications"],
        mean=float(tf["mean"]),
        median=float(tf["median"]),
        min=float(tf["min"]),
        max=float(tf["max"]),
        pooled=float(tf["pooled"]),
        median_collapse_step=doc["collapse"]["median_step"],
        collapse_share=float(doc["collapse"]["share"]),
    )
    return doc["scenario"], stats


def read_suite(directory: str | Path) -> dict[str, ScenarioStats]:
    """Collect every aggregate.json below ``directory`` keyed by scenario name."""
    found = {}
    for path in sorted(Path(directory).rglob("aggregate.json")):
        name, stats = read_aggregate(path)
        found[name] = stats
    return found

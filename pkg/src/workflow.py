# src/workflow.py
import json
import logging
import os
from contextlib import contextmanager
from typing import Optional

from typing_extensions import TypedDict

# LangGraph StateGraph primitives
from langgraph.graph import StateGraph, START, END

from src.errors import ConfigurationError
from src.nodes import PRESETS
from src.nodes.common import PresetContext
from src.schemas import PresetOutcome, RunConfig
from src.utils.csv_utils import write_diagnostics_csv, write_ledger_csv, write_verdicts_csv
from src.utils.snapshot_io import write_snapshot

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


# Shape of the graph state; every node returns a partial update
class PresetState(TypedDict, total=False):
    preset: str
    config: RunConfig
    pinned: set
    out_dir: str
    outcome: PresetOutcome
    failed: list
    artifacts: dict


# ---------------------------------------------------------
# Configuration resolution
# ---------------------------------------------------------
def _flatten(document: dict, prefix: str = "") -> set:
    keys = set()
    for key, value in document.items():
        dotted = f"{prefix}{key}"
        if isinstance(value, dict) and value:
            keys |= _flatten(value, dotted + ".")
        else:
            keys.add(dotted)
    return keys


def _merge(base: dict, overlay: dict) -> dict:
    merged = dict(base)
    for key, value in overlay.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def resolve_config(name: str, config: Optional[RunConfig] = None, overrides: Optional[dict] = None):
    """
    Preset defaults, then the keys set in `config`, then CLI overrides
    (n, alpha, dt, t_end, out). Returns the merged config and the set of
    dotted keys the user pinned.
    """
    if name not in PRESETS:
        raise ConfigurationError(f"unknown preset {name!r}; valid presets: {', '.join(PRESETS)}")
    overlay = config.model_dump(exclude_unset=True) if config is not None else {}
    overlay["preset"] = name

    mapping = {"n": ("grid", "points_per_axis"), "alpha": ("equation", "alpha"),
               "dt": (None, "dt"), "t_end": (None, "t_end"), "out": ("output", "directory")}
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        section, field = mapping[key]
        if section is None:
            overlay[field] = value
        else:
            overlay.setdefault(section, {})[field] = value

    pinned = _flatten({k: v for k, v in overlay.items() if k != "preset"})
    base = PRESETS[name].default_config().model_dump(exclude_unset=True)
    try:
        merged = RunConfig.model_validate(_merge(base, overlay))
    except ValueError as e:
        raise ConfigurationError(str(e)) from e
    if merged.molecule is not None:
        merged = merged.model_copy(
            update={"molecule": merged.molecule.validate_against(merged.equation.alpha, merged.grid.dim)}
        )
    return merged, pinned


# --- Nodes ---
def node_prepare(state: PresetState) -> dict:
    os.makedirs(state["out_dir"], exist_ok=True)
    path = os.path.join(state["out_dir"], "config.json")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(state["config"].model_dump_json(indent=2))
    logger.info(f"=== preset {state['preset']} -> {state['out_dir']} ===")
    return {"artifacts": {"config": path}}


def node_simulate(state: PresetState) -> dict:
    ctx = PresetContext(
        name=state["preset"],
        config=state["config"],
        out_dir=state["out_dir"],
        pinned=set(state.get("pinned", set())),
    )
    outcome = PRESETS[state["preset"]].run(ctx)
    logger.info(f"{state['preset']}: {len(outcome.records)} records, {len(outcome.criteria)} criteria")
    return {"outcome": outcome}


def node_judge(state: PresetState) -> dict:
    failed = [c.name for c in state["outcome"].criteria if not c.passed]
    for c in state["outcome"].criteria:
        level = logging.INFO if c.passed else logging.ERROR
        logger.log(level, f"{'PASS' if c.passed else 'FAIL'} {c.name}: value={c.value} threshold={c.threshold}")
    return {"failed": failed}


def node_persist(state: PresetState) -> dict:
    out_dir = state["out_dir"]
    outcome = state["outcome"]
    artifacts = dict(state.get("artifacts", {}))

    artifacts["diagnostics"] = write_diagnostics_csv(outcome.records, os.path.join(out_dir, "diagnostics.csv"))
    artifacts["verdicts"] = write_verdicts_csv(outcome.criteria, os.path.join(out_dir, "verdicts.csv"))
    if outcome.ledger_rows:
        artifacts["ledger"] = write_ledger_csv(outcome.ledger_rows, os.path.join(out_dir, "ledger.csv"))

    if outcome.snapshots:
        snapshot_dir = os.path.join(out_dir, "snapshots")
        os.makedirs(snapshot_dir, exist_ok=True)
        for name, field in sorted(outcome.snapshots.items()):
            write_snapshot(field, os.path.join(snapshot_dir, f"{name}.fdt"))
        artifacts["snapshots"] = snapshot_dir

    summary = {
        "preset": state["preset"],
        "passed": not state.get("failed"),
        "failed": state.get("failed", []),
        "criteria": [c.model_dump() for c in outcome.criteria],
        "details": outcome.summary,
    }
    path = os.path.join(out_dir, "summary.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, default=str)
    artifacts["summary"] = path
    return {"artifacts": artifacts}


builder = StateGraph(PresetState)

# --- Add nodes ---
builder.add_node("prepare", node_prepare)
builder.add_node("simulate", node_simulate)
builder.add_node("judge", node_judge)
builder.add_node("persist", node_persist)

# --- Define edges (linear flow) ---
builder.add_edge(START, "prepare")
builder.add_edge("prepare", "simulate")
builder.add_edge("simulate", "judge")
builder.add_edge("judge", "persist")
builder.add_edge("persist", END)

# Compile the graph into a runnable object
app_graph = builder.compile()


@contextmanager
def run_log(out_dir: str):
    """Mirror every log record of the run into out_dir/run.log."""
    os.makedirs(out_dir, exist_ok=True)
    handler = logging.FileHandler(os.path.join(out_dir, "run.log"), mode="w", encoding="utf-8")
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    root = logging.getLogger()
    root.addHandler(handler)
    try:
        yield handler
    finally:
        root.removeHandler(handler)
        handler.close()


def run_preset(name: str, config: Optional[RunConfig] = None, overrides: Optional[dict] = None) -> PresetState:
    """Resolve the configuration and run one preset through the graph."""
    resolved, pinned = resolve_config(name, config, overrides)
    out_dir = os.path.join(resolved.output.directory, name)
    if overrides and overrides.get("out"):
        out_dir = overrides["out"]
    with run_log(out_dir):
        return app_graph.invoke(
            {"preset": name, "config": resolved, "pinned": pinned, "out_dir": out_dir}
        )

# src/utils/csv_utils.py
import os
from typing import Iterable, List

import pandas as pd

from src.molecule_lab import LEDGER_COLUMNS
from src.schemas import Criterion, DiagnosticsRecord

DIAGNOSTIC_COLUMNS = ["time", "step", "energy_balance_residual"]
VERDICT_COLUMNS = ["criterion", "passed", "value", "threshold", "detail"]

# 17 significant digits round-trip every float64
FLOAT_FORMAT = "%.17g"


def _ordered_columns(base: List[str], rows: List[dict]) -> List[str]:
    columns = list(base)
    for row in rows:
        for key in row:
            if key not in columns:
                columns.append(key)
    return columns


def write_diagnostics_csv(records: Iterable[DiagnosticsRecord], path: str) -> str:
    rows = [r.model_dump() if isinstance(r, DiagnosticsRecord) else dict(r) for r in records]
    df = pd.DataFrame(rows, columns=_ordered_columns(DIAGNOSTIC_COLUMNS, rows))
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    return path


def write_ledger_csv(rows: List[dict], path: str) -> str:
    df = pd.DataFrame(rows, columns=_ordered_columns(LEDGER_COLUMNS, rows))
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    return path


def write_verdicts_csv(criteria: Iterable[Criterion], path: str) -> str:
    rows = [
        {
            "criterion": c.name,
            "passed": c.passed,
            "value": c.value,
            "threshold": c.threshold,
            "detail": c.detail,
        }
        for c in criteria
    ]
    df = pd.DataFrame(rows, columns=VERDICT_COLUMNS)
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    return path


def read_numeric_csv(path: str) -> pd.DataFrame:
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    return pd.read_csv(path, float_precision="round_trip")


def validate_ledger_csv(filepath: str):
    try:
        df = read_numeric_csv(filepath)
    except Exception as e:
        return False, f"Failed to read CSV: {e}"
    for col in LEDGER_COLUMNS:
        if col not in df.columns:
            return False, f"Missing required column: {col}"
    if df[["s_k", "sum_s"]].isnull().any().any():
        return False, "Some scheduled times are empty"
    groups = df.groupby("run", sort=False) if "run" in df.columns else [(None, df)]
    for run, group in groups:
        if (group["sum_s"].diff().dropna() <= 0).any():
            label = f" in run {run}" if run is not None else ""
            return False, f"sum_s must increase along the ledger{label}"
    return True, "Ledger CSV validated"

# src/schemas.py
import os
from typing import Any, Dict, List, Optional

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field as PydanticField

from src.evolution import EquationSpec
from src.molecule_lab import LedgerParams, MoleculeSpec
from src.spectral_core import Grid

load_dotenv()

ARTIFACTS_DIR = os.getenv("FRACDRIFT_ARTIFACTS_DIR", os.path.join(os.getcwd(), "artifacts"))
DEFAULT_SEED = int(os.getenv("FRACDRIFT_SEED", "20240607"))


class OutputSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    directory: str = ARTIFACTS_DIR
    csv_every: int = PydanticField(default=1, ge=1)
    # 0 writes only the initial and final snapshots
    snapshot_every: int = PydanticField(default=0, ge=0)


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    dt: float = PydanticField(default=1e-3, gt=0)
    t_end: float = PydanticField(default=1.0, gt=0)
    seed: int = DEFAULT_SEED
    preset: Optional[str] = None
    initial_condition: str = "random_smooth"
    grid: Grid = Grid()
    equation: EquationSpec = EquationSpec()
    molecule: Optional[MoleculeSpec] = None
    ledger: Optional[LedgerParams] = None
    output: OutputSpec = OutputSpec()


class DiagnosticsRecord(BaseModel):
    """One row of the diagnostics stream; monitor readings ride along as extra fields."""

    model_config = ConfigDict(extra="allow")

    time: float
    step: int
    energy_balance_residual: Optional[float] = None


class Criterion(BaseModel):
    name: str
    passed: bool
    value: Optional[float] = None
    threshold: Optional[float] = None
    detail: str = ""


class PresetOutcome(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    records: List[DiagnosticsRecord] = []
    ledger_rows: List[Dict[str, Any]] = []
    criteria: List[Criterion] = []
    # snapshot name -> Field
    snapshots: Dict[str, Any] = {}
    summary: Dict[str, Any] = {}

    def add(self, name: str, passed: bool, value=None, threshold=None, detail: str = "") -> Criterion:
        criterion = Criterion(
            name=name,
            passed=bool(passed),
            value=None if value is None else float(value),
            threshold=None if threshold is None else float(threshold),
            detail=detail,
        )
        self.criteria.append(criterion)
        return criterion

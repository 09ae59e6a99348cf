# src/nodes/power_lemma.py
import numpy as np

from src.analysis import check_distance_power_lemma
from src.schemas import DiagnosticsRecord, PresetOutcome, RunConfig

SAMPLE_COUNT = 100_000


def default_config() -> RunConfig:
    return RunConfig(preset="power_lemma")


def run(ctx) -> PresetOutcome:
    rng = ctx.rng(1)
    a = 10.0 ** rng.uniform(-6, 6, SAMPLE_COUNT)
    b = 10.0 ** rng.uniform(-6, 6, SAMPLE_COUNT)
    e = rng.uniform(1e-6, 1.0, SAMPLE_COUNT)
    samples = np.column_stack([a, b, e])
    # edge cases: equal arguments and eps = 1
    samples = np.vstack([samples, [[4.0, 1.0, 0.5], [2.5, 2.5, 0.3], [3.0, 7.0, 1.0]]])

    outcome = PresetOutcome()
    holds = check_distance_power_lemma(samples)
    lhs = np.abs(samples[:, 0] ** samples[:, 2] - samples[:, 1] ** samples[:, 2])
    rhs = np.abs(samples[:, 0] - samples[:, 1]) ** samples[:, 2]
    tightest = float(np.max(np.divide(lhs, rhs, out=np.zeros_like(lhs), where=rhs > 0)))
    outcome.records.append(DiagnosticsRecord(time=0.0, step=0, samples=len(samples), max_ratio=tightest))
    outcome.add("distance_power_lemma", holds, tightest, 1.0, f"{len(samples)} samples, largest lhs/rhs")
    return outcome

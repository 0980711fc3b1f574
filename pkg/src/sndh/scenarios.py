"""Demand scenarios drawn from a triangular distribution."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .network import Instance


def sample_triangular(u: float, lo: float, hi: float, mode: float) -> float:
    """Inverse CDF of Tri(lo, hi, mode) evaluated at ``u``."""
    if not (lo <= mode <= hi and lo < hi):
        raise ValueError(f"need lo <= mode <= hi and lo < hi, got ({lo}, {hi}, {mode})")
    if not 0.0 <= u <= 1.0:
        raise ValueError(f"u must lie in [0, 1], got {u}")
    width = hi - lo
    if u <= (mode - lo) / width:
        return lo + math.sqrt(u * width * (mode - lo))
    return hi - math.sqrt((1.0 - u) * width * (hi - mode))


def triangular_moments(lo: float, hi: float, mode: float) -> tuple[float, float]:
    mean = (lo + hi + mode) / 3.0
    var = (lo * lo + hi * hi + mode * mode - lo * hi - lo * mode - hi * mode) / 18.0
    return mean, var


@dataclass
class ScenarioSet:
    demands: np.ndarray  # (n, |K|)
    probabilities: np.ndarray  # (n,)
    seed: int = 0

    def __post_init__(self) -> None:
        self.demands = np.atleast_2d(np.asarray(self.demands, dtype=float))
        self.probabilities = np.asarray(self.probabilities, dtype=float)
        if self.probabilities.shape != (self.demands.shape[0],):
            raise ValueError("one probability per scenario required")
        if np.any(self.demands < 0):
            raise ValueError("demands must be non-negative")
        if np.any(self.probabilities < 0) or abs(self.probabilities.sum() - 1.0) > 1e-9:
            raise ValueError("probabilities must be non-negative and sum to 1")

    def __len__(self) -> int:
        return self.demands.shape[0]

    @property
    def num_commodities(self) -> int:
        return self.demands.shape[1]

    def subset(self, idx) -> "ScenarioSet":
        """Scenarios ``idx`` with probabilities renormalized to 1."""
        idx = list(idx)
        p = self.probabilities[idx]
        return ScenarioSet(self.demands[idx], p / p.sum(), self.seed)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "probabilities": self.probabilities.tolist(),
            "demands": self.demands.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioSet":
        return cls(np.array(data["demands"], dtype=float), np.array(data["probabilities"], dtype=float),
                   int(data.get("seed", 0)))


def generate_scenario_set(
    inst: Instance | int,
    n: int,
    lo: float = 5.0,
    hi: float = 11.0,
    mode: float = 8.0,
    seed: int = 0,
    moment_correct: bool = False,
) -> ScenarioSet:
    """Draw ``n`` equiprobable scenarios with i.i.d. triangular demands.

    ``inst`` may be an Instance or a plain commodity count. With
    ``moment_correct`` each commodity column is affinely mapped so its sample
    mean and (population, ddof=0) variance hit the analytic triangular
    moments; values are then clamped at zero.
    """
    if n < 1:
        raise ValueError(f"need at least one scenario, got {n}")
    num_k = inst if isinstance(inst, int) else inst.num_commodities
    rng = np.random.default_rng(seed)
    u = rng.random((n, num_k))
    demands = np.vectorize(sample_triangular, otypes=[float])(u, lo, hi, mode)
    if moment_correct:
        mean, var = triangular_moments(lo, hi, mode)
        col_mean = demands.mean(axis=0)
        col_std = demands.std(axis=0)
        scale = np.where(col_std > 0, math.sqrt(var) / np.where(col_std > 0, col_std, 1.0), 0.0)
        demands = (demands - col_mean) * scale + mean
        demands = np.maximum(demands, 0.0)
    return ScenarioSet(demands, np.full(n, 1.0 / n), seed)


def load_scenarios(path: str | Path) -> ScenarioSet:
    return ScenarioSet.from_dict(json.loads(Path(path).read_text()))


def dump_scenarios(scens: ScenarioSet) -> str:
    return json.dumps(scens.to_dict(), indent=2) + "\n"


def save_scenarios(scens: ScenarioSet, path: str | Path) -> None:
    Path(path).write_text(dump_scenarios(scens))

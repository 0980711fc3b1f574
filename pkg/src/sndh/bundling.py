"""Scenario bundling: fuzzy c-means with threshold assignment, and a k-means baseline.

Demand vectors are the clustering features. A bundle set may overlap; each
scenario's probability is split evenly across the bundles that contain it.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DegenerateInputError
from .scenarios import ScenarioSet

ZERO_DISTANCE = 1e-12
EMPTY_MASS = 1e-12


@dataclass
class FcmConfig:
    num_bundles: int
    exponent: float = 2.0
    max_iterations: int = 1000
    min_improvement: float = 1e-5
    score_threshold: float = 0.8
    interval_param: float = 0.95
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.exponent > 1.0:
            raise ValueError(f"fuzzy exponent must exceed 1, got {self.exponent}")
        if self.num_bundles < 1:
            raise ValueError("num_bundles must be positive")
        if not self.min_improvement > 0:
            raise ValueError("min_improvement must be positive")
        if not 0.0 < self.score_threshold < 1.0:
            raise ValueError("score_threshold must lie in (0, 1)")
        if not 0.0 <= self.interval_param <= 1.0:
            raise ValueError("interval_param must lie in [0, 1]")


@dataclass
class FuzzyPartition:
    membership: np.ndarray  # (|S|, g), rows sum to 1
    centers: np.ndarray  # (g, |K|)
    objective: float
    iterations_used: int
    history: list[float] = field(default_factory=list)


@dataclass
class BundleSet:
    bundles: list[list[int]]
    occurrence_count: np.ndarray | None = None
    reweighted_prob: np.ndarray | None = None
    bundle_prob: np.ndarray | None = None

    @property
    def num_bundles(self) -> int:
        return len(self.bundles)


def _sq_distances(X: np.ndarray, V: np.ndarray) -> np.ndarray:
    diff = X[:, None, :] - V[None, :, :]
    return np.einsum("sbk,sbk->sb", diff, diff)


def fcm_objective(partition: FuzzyPartition, scenarios: ScenarioSet | np.ndarray, m: float) -> float:
    """Sum of membership^m-weighted squared distances to the bundle centers."""
    X = scenarios.demands if isinstance(scenarios, ScenarioSet) else np.asarray(scenarios, float)
    d2 = _sq_distances(X, np.asarray(partition.centers, float))
    return float(np.sum(np.asarray(partition.membership) ** m * d2))


def update_centers(X: np.ndarray, U: np.ndarray, m: float) -> np.ndarray:
    W = U ** m
    mass = W.sum(axis=0)
    V = (W.T @ X) / np.where(mass > 0, mass, 1.0)[:, None]
    for b in np.flatnonzero(mass < EMPTY_MASS):
        # collapsed bundle: reseed at the scenario farthest from its nearest other center
        others = np.delete(V, b, axis=0)
        V[b] = X[int(np.argmax(_sq_distances(X, others).min(axis=1)))]
    return V


def update_memberships(X: np.ndarray, V: np.ndarray, m: float) -> np.ndarray:
    """Membership of every scenario given the centers.

    A scenario sitting on a center (distance below 1e-12) takes full
    membership in the nearest such center.
    """
    dist = np.sqrt(_sq_distances(X, V))
    nearest = dist.argmin(axis=1)
    dmin = dist[np.arange(dist.shape[0]), nearest]
    on_center = dmin < ZERO_DISTANCE
    safe = np.where(on_center[:, None], 1.0, dist)
    # (d_min / d_b)^(2/(m-1)) normalized equals [sum_l (d_b/d_l)^(2/(m-1))]^-1
    ratio = (np.where(on_center, 1.0, dmin)[:, None] / safe) ** (2.0 / (m - 1.0))
    U = ratio / ratio.sum(axis=1, keepdims=True)
    U[on_center] = 0.0
    U[on_center, nearest[on_center]] = 1.0
    return U


def fcm_fit(scenarios: ScenarioSet | np.ndarray, cfg: FcmConfig) -> FuzzyPartition:
    """Alternating optimization of the fuzzy partition.

    Memberships start as seeded uniforms normalized per scenario. Each pass
    recomputes the centers, then the memberships, then the objective; the
    loop stops after ``max_iterations`` passes or when the objective moves by
    at most ``min_improvement``.
    """
    X = scenarios.demands if isinstance(scenarios, ScenarioSet) else np.atleast_2d(np.asarray(scenarios, float))
    n, g = X.shape[0], cfg.num_bundles
    if g > n:
        raise ValueError(f"cannot form {g} bundles from {n} scenarios")
    if g < 2:
        raise ValueError("fuzzy clustering needs at least 2 bundles")
    if np.all(np.ptp(X, axis=0) == 0):
        raise DegenerateInputError("all scenarios are identical")
    m = cfg.exponent
    rng = np.random.default_rng(cfg.seed)
    U = rng.random((n, g))
    U /= U.sum(axis=1, keepdims=True)

    V = np.zeros((g, X.shape[1]))
    history: list[float] = []
    it = 0
    while it < cfg.max_iterations:
        V = update_centers(X, U, m)
        U = update_memberships(X, V, m)
        history.append(float(np.sum(U ** m * _sq_distances(X, V))))
        it += 1
        if len(history) > 1 and abs(history[-1] - history[-2]) <= cfg.min_improvement:
            break
    return FuzzyPartition(U, V, history[-1] if history else float('nan'), it, history)


def assign_bundles(partition: FuzzyPartition | np.ndarray, cfg: FcmConfig) -> BundleSet:
    """Place each scenario into one or more bundles from its membership scores.

    A scenario whose top score clears ``score_threshold`` joins every bundle
    above the threshold; otherwise it joins every bundle scoring within
    ``[interval_param * top, top]``.
    """
    U = partition.membership if isinstance(partition, FuzzyPartition) else np.asarray(partition, float)
    U = np.atleast_2d(U)
    gamma, eta = cfg.score_threshold, cfg.interval_param
    bundles: list[list[int]] = [[] for _ in range(U.shape[1])]
    for s, row in enumerate(U):
        h = row.max()
        if h > gamma:
            chosen = np.flatnonzero(row > gamma)
        else:
            chosen = np.flatnonzero((row >= eta * h) & (row <= h))
        for b in chosen:
            bundles[b].append(s)
    return BundleSet(bundles)


def bundle_probabilities(bundles: BundleSet | Sequence[Sequence[int]], scenarios: ScenarioSet | np.ndarray) -> BundleSet:
    """Occurrence counts, reweighted scenario probabilities and bundle probabilities."""
    members = bundles.bundles if isinstance(bundles, BundleSet) else [list(b) for b in bundles]
    p = scenarios.probabilities if isinstance(scenarios, ScenarioSet) else np.asarray(scenarios, float)
    counts = np.zeros(len(p), dtype=int)
    for b in members:
        for s in b:
            counts[s] += 1
    if np.any(counts == 0):
        missing = np.flatnonzero(counts == 0).tolist()
        raise RuntimeError(f"scenarios {missing} belong to no bundle")
    q = p / counts
    pb = np.array([q[b].sum() if len(b) else 0.0 for b in members])
    return BundleSet([list(map(int, b)) for b in members], counts, q, pb)


def exact_bundle_total(bundles: BundleSet, probabilities: Sequence[Fraction]) -> Fraction:
    """Sum of bundle probabilities in rational arithmetic."""
    counts = bundles.occurrence_count
    return sum((Fraction(probabilities[s]) / int(counts[s]) for b in bundles.bundles for s in b), Fraction(0))


def kmeans_plusplus(X: np.ndarray, g: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    centers = np.empty((g, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    closest = ((X - centers[0]) ** 2).sum(axis=1)
    for c in range(1, g):
        total = closest.sum()
        if total <= 0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=closest / total))
        centers[c] = X[idx]
        closest = np.minimum(closest, ((X - centers[c]) ** 2).sum(axis=1))
    return centers


def kmeans_fit(
    scenarios: ScenarioSet,
    g: int,
    seed: int = 0,
    max_iterations: int = 300,
    rel_tol: float = 1e-9,
) -> BundleSet:
    """Hard partition by Lloyd iterations from k-means++ seeds (squared Euclidean)."""
    X = scenarios.demands
    n = X.shape[0]
    if g > n:
        raise ValueError(f"cannot form {g} bundles from {n} scenarios")
    if g < 1:
        raise ValueError("need at least one bundle")
    rng = np.random.default_rng(seed)
    V = kmeans_plusplus(X, g, rng)
    labels = np.full(n, -1)
    inertia = np.inf
    for _ in range(max_iterations):
        d2 = _sq_distances(X, V)
        new_labels = d2.argmin(axis=1)
        new_inertia = float(d2[np.arange(n), new_labels].sum())
        stable = np.array_equal(new_labels, labels)
        small = np.isfinite(inertia) and inertia - new_inertia <= rel_tol * max(inertia, 1e-300)
        labels, inertia = new_labels, new_inertia
        for b in range(g):
            mask = labels == b
            if mask.any():
                V[b] = X[mask].mean(axis=0)
            else:
                # empty cluster: take the point worst served by its current center
                far = int(np.argmax(d2[np.arange(n), labels]))
                V[b] = X[far]
                labels[far] = b
                stable = small = False
        if stable or small:
            break
    bundles = [np.flatnonzero(labels == b).tolist() for b in range(g)]
    return bundle_probabilities(bundles, scenarios)


@dataclass
class OverlapStats:
    bundle_sizes: list[int]
    repeated_count: int
    occurrences: list[int]

    @property
    def total_size(self) -> int:
        return sum(self.bundle_sizes)


def overlap_stats(bundles: BundleSet, num_scenarios: int | None = None) -> OverlapStats:
    n = num_scenarios
    if n is None:
        n = len(bundles.occurrence_count) if bundles.occurrence_count is not None else \
            1 + max((s for b in bundles.bundles for s in b), default=-1)
    occ = np.zeros(n, dtype=int)
    for b in bundles.bundles:
        for s in b:
            occ[s] += 1
    return OverlapStats([len(b) for b in bundles.bundles], int(np.sum(occ >= 2)), occ.tolist())


def bundle_scenarios(
    scenarios: ScenarioSet,
    method: str,
    num_bundles: int,
    exponent: float = 2.0,
    score_threshold: float = 0.8,
    interval_param: float = 0.95,
    seed: int = 0,
    max_iterations: int = 1000,
    min_improvement: float = 1e-5,
) -> tuple[BundleSet, FuzzyPartition | None, FcmConfig | None]:
    """Run the full bundling pipeline for ``method`` in {"fcm", "kmeans"}."""
    if method == "kmeans":
        return kmeans_fit(scenarios, num_bundles, seed), None, None
    if method != "fcm":
        raise ValueError(f"unknown bundling method {method!r}")
    cfg = FcmConfig(num_bundles, exponent, max_iterations, min_improvement, score_threshold, interval_param, seed)
    part = fcm_fit(scenarios, cfg)
    return bundle_probabilities(assign_bundles(part, cfg), scenarios), part, cfg


def bundles_to_dict(
    bundles: BundleSet,
    method: str,
    config: dict | None = None,
    partition: FuzzyPartition | None = None,
) -> dict:
    data = {
        "method": method,
        "config": config or {},
        "bundles": [list(map(int, b)) for b in bundles.bundles],
        "bundle_prob": np.asarray(bundles.bundle_prob).tolist(),
        "scenario_q": np.asarray(bundles.reweighted_prob).tolist(),
    }
    if partition is not None:
        data["membership"] = partition.membership.tolist()
    return data


def dump_bundles(bundles: BundleSet, method: str, config: FcmConfig | dict | None = None,
                 partition: FuzzyPartition | None = None) -> str:
    cfg = asdict(config) if isinstance(config, FcmConfig) else config
    return json.dumps(bundles_to_dict(bundles, method, cfg, partition), indent=2) + "\n"


def load_bundles(path: str | Path, scenarios: ScenarioSet | None = None) -> tuple[BundleSet, dict]:
    """Read a bundle file; probabilities are recomputed when ``scenarios`` is given."""
    data = json.loads(Path(path).read_text())
    members = [list(map(int, b)) for b in data["bundles"]]
    if scenarios is not None:
        return bundle_probabilities(members, scenarios), data
    q = np.array(data["scenario_q"], dtype=float)
    counts = np.zeros(len(q), dtype=int)
    for b in members:
        for s in b:
            counts[s] += 1
    return BundleSet(members, counts, q, np.array(data["bundle_prob"], dtype=float)), data

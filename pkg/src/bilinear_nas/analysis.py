"""Rank metrics, the correlation transitivity bound and estimator insights."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import StructuralError, UndefinedCorrelationError
from .search_space import SearchSpaceSpec, sample_choices


def _pair(x, y) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if len(x) != len(y):
        raise ValueError(f"length mismatch: {len(x)} vs {len(y)}")
    if len(x) < 2:
        raise ValueError("need at least two pairs")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise UndefinedCorrelationError("rank correlation is undefined for constant input")
    return x, y


def _pair_counts(x: np.ndarray, y: np.ndarray, chunk: int = 2048) -> tuple[int, int, int, int]:
    """Integer (concordant - discordant, pairs, x-tied pairs, y-tied pairs) counts."""
    n = len(x)
    s = tx = ty = 0
    for lo in range(0, n, chunk):
        xi, yi = x[lo : lo + chunk, None], y[lo : lo + chunk, None]
        upper = np.arange(lo, min(lo + chunk, n))[:, None] < np.arange(n)[None, :]
        sx = np.sign(x[None, :] - xi).astype(np.int64)
        sy = np.sign(y[None, :] - yi).astype(np.int64)
        s += int(np.sum(sx * sy * upper))
        tx += int(np.sum((sx == 0) & upper))
        ty += int(np.sum((sy == 0) & upper))
    return s, n * (n - 1) // 2, tx, ty


def kendall_tau(x, y) -> float:
    """Kendall tau-b, ``(C - D) / sqrt((n0 - n1)(n0 - n2))`` from exact pair counts."""
    x, y = _pair(x, y)
    s, n0, n1, n2 = _pair_counts(x, y)
    return s / math.sqrt((n0 - n1) * (n0 - n2))


def spearman_rho(x, y) -> float:
    """Pearson correlation of mid-ranks, with correctly rounded sums."""
    x, y = _pair(x, y)
    rx, ry = stats.rankdata(x), stats.rankdata(y)
    n = len(rx)
    dx = rx - math.fsum(rx) / n
    dy = ry - math.fsum(ry) / n
    return math.fsum(dx * dy) / math.sqrt(math.fsum(dx * dx) * math.fsum(dy * dy))


def transitivity_lower_bound(rho_po: float, rho_os: float) -> float:
    """Smallest Cor(P, S) compatible with Cor(P, O) and Cor(O, S)."""
    for r in (rho_po, rho_os):
        if not -1.0 <= r <= 1.0:
            raise ValueError(f"correlation {r} outside [-1, 1]")
    return rho_po * rho_os - math.sqrt((1.0 - rho_po**2) * (1.0 - rho_os**2))


# -- predictor scoring ---------------------------------------------------------


@dataclass(frozen=True)
class RankReport:
    kendall_tau: float
    spearman_rho: float
    mse: float
    n: int

    def to_dict(self) -> dict:
        return {"kendall_tau": self.kendall_tau, "spearman_rho": self.spearman_rho, "mse": self.mse, "n": self.n}


def rank_report(pred, target) -> RankReport:
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    return RankReport(
        kendall_tau(pred, target),
        spearman_rho(pred, target),
        float(np.mean((pred - target) ** 2)),
        len(pred),
    )


def predict_choices(model, depth_idx, config_idx) -> np.ndarray:
    """Predictions of an estimator, a fitted predictor or an oracle (true accuracy)."""
    if hasattr(model, "predict_batch"):
        return np.asarray(model.predict_batch(depth_idx, config_idx))
    if hasattr(model, "true_accuracy_batch"):
        return np.asarray(model.true_accuracy_batch(depth_idx, config_idx))
    raise TypeError(f"cannot score {type(model).__name__}")


def rank_predictor(model, oracle, spec: SearchSpaceSpec, n_test: int, rng: np.random.Generator, noisy: bool = False) -> RankReport:
    """Score ``model`` against the oracle on ``n_test`` uniform architectures.

    With ``noisy`` the targets are single noisy oracle draws instead of the
    true accuracies.
    """
    if model.spec != spec or oracle.spec != spec:
        raise StructuralError("model, oracle and spec disagree")
    depth_idx, config_idx = sample_choices(spec, rng, n_test)
    if noisy:
        target = oracle.sample_accuracy_batch(depth_idx, config_idx, rng)
    else:
        target = oracle.true_accuracy_batch(depth_idx, config_idx)
    return rank_report(predict_choices(model, depth_idx, config_idx), target)


# -- insights --------------------------------------------------------------------


def config_subsets(spec: SearchSpaceSpec) -> dict[str, tuple[list[int], list[int]]]:
    """``name -> (treatment, reference)`` 0-based config index sets.

    S&E on vs off, and each step between consecutive kernel sizes and
    expansion ratios present in the table.
    """
    configs = spec.configs
    if any(c.expansion_ratio is None or c.kernel_size is None or c.squeeze_excite is None for c in configs):
        raise StructuralError("insights need er, k and se attributes on every config")
    out = {}
    on = [i for i, c in enumerate(configs) if c.squeeze_excite]
    off = [i for i, c in enumerate(configs) if not c.squeeze_excite]
    if on and off:
        out["se_on_vs_off"] = (on, off)
    for attr, label in (("kernel_size", "kernel"), ("expansion_ratio", "er")):
        values = sorted({getattr(c, attr) for c in configs})
        for lo, hi in zip(values, values[1:]):
            out[f"{label}_{hi}_vs_{lo}"] = (
                [i for i, c in enumerate(configs) if getattr(c, attr) == hi],
                [i for i, c in enumerate(configs) if getattr(c, attr) == lo],
            )
    return out


@dataclass(frozen=True)
class InsightReport:
    depth_increments: list  # [{"stage", "from_depth", "to_depth", "increment"}]
    per_stage_averages: dict  # name -> [S]
    per_block_averages: dict  # name -> [D]
    latency_cost_per_block: list  # [S]
    subsets: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "depth_increments": self.depth_increments,
            "per_stage_averages": self.per_stage_averages,
            "per_block_averages": self.per_block_averages,
            "latency_cost_per_block": self.latency_cost_per_block,
            "subsets": {k: {"treatment_ids": t, "reference_ids": r} for k, (t, r) in self.subsets.items()},
        }

    def rows(self) -> list[tuple]:
        """Long-format ``(section, name, stage, block, value)`` rows, 1-based indices."""
        rows = []
        for d in self.depth_increments:
            rows.append(("depth_increment", f"{d['from_depth']}_to_{d['to_depth']}", d["stage"], "", d["increment"]))
        for name, vals in self.per_stage_averages.items():
            rows.extend(("per_stage", name, s + 1, "", v) for s, v in enumerate(vals))
        for name, vals in self.per_block_averages.items():
            rows.extend(("per_block", name, "", b + 1, v) for b, v in enumerate(vals))
        rows.extend(("latency_cost", "mean_block_latency_ms", s + 1, "", v) for s, v in enumerate(self.latency_cost_per_block))
        return rows

    def write_csv(self, path, fmt=repr) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["section", "name", "stage", "block", "value"])
            for row in self.rows():
                w.writerow([*row[:4], fmt(row[4])])


def insights(est, lat) -> InsightReport:
    spec = est.spec
    if lat.spec != spec:
        raise StructuralError("estimator and latency model disagree on the search space")
    deltas = est.config_deltas  # (S, D, C)
    subsets = config_subsets(spec)
    per_stage, per_block = {}, {}
    for name, (treat, ref) in subsets.items():
        diff = deltas[:, :, treat].mean(axis=2) - deltas[:, :, ref].mean(axis=2)  # (S, D)
        per_stage[name] = [float(v) for v in diff.mean(axis=1)]
        per_block[name] = [float(v) for v in diff.mean(axis=0)]
    increments = []
    for s, choices in enumerate(spec.depth_choices):
        for j in range(1, len(choices)):
            increments.append({
                "stage": s + 1,
                "from_depth": choices[j - 1],
                "to_depth": choices[j],
                "increment": float(est.depth_deltas[s, j] - est.depth_deltas[s, j - 1]),
            })
    cost = [float(v) for v in lat.block_latency.mean(axis=(1, 2))]
    ids = {k: ([spec.configs[i].config_id for i in t], [spec.configs[i].config_id for i in r]) for k, (t, r) in subsets.items()}
    return InsightReport(increments, per_stage, per_block, cost, ids)

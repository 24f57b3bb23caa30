from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..estimator import BilinearEstimator, eval_acc, eval_lat
from ..oracle import LatencyModel
from ..search_space import ArchitectureRecord, ArchPoint

FEAS_TOL = 1e-9


def is_feasible(latency: float, target: float) -> bool:
    return latency <= target + FEAS_TOL * max(1.0, abs(target))


@dataclass
class SearchResult:
    arch: ArchPoint
    predicted_acc: float
    latency: float
    solver: str
    target: float
    trace: list = field(default_factory=list)  # (iter, obj, lat) triples
    seed: int | None = None
    wall_time: float = 0.0
    deviation: float = 0.0
    flagged: bool = False
    relaxed: ArchPoint | None = None

    @classmethod
    def from_arch(cls, est: BilinearEstimator, lat: LatencyModel, arch: ArchPoint, solver: str, target: float, **kw):
        latency = eval_lat(lat, arch)
        return cls(
            arch=arch,
            predicted_acc=eval_acc(est, arch),
            latency=latency,
            solver=solver,
            target=target,
            deviation=(latency - target) / target,
            **kw,
        )

    @property
    def feasible(self) -> bool:
        return is_feasible(self.latency, self.target)

    def record(self, spec) -> ArchitectureRecord:
        depth_idx, config_idx = self.arch.choices()
        return ArchitectureRecord.from_choices(spec, depth_idx, config_idx)

    def to_dict(self, spec) -> dict:
        """File form; wall time is left out so reruns are byte-identical."""
        return {
            "arch": self.record(spec).to_dict(),
            "predicted_acc": self.predicted_acc,
            "latency_ms": self.latency,
            "target_ms": self.target,
            "deviation": self.deviation,
            "flagged": self.flagged,
            "solver": self.solver,
            "seed": self.seed,
            "trace": [{"iter": int(i), "obj": float(o), "lat": float(l)} for i, o, l in self.trace],
        }


def arch_key(depth_idx, config_idx) -> tuple:
    """Lexicographic tie-break key: stage by stage, depth then running configs."""
    return tuple((int(j), tuple(int(c) for c in np.asarray(row))) for j, row in zip(depth_idx, config_idx))

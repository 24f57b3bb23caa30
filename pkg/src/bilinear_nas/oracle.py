"""Synthetic stand-in for a trained one-shot supernetwork, plus latency tables.

The ground-truth accuracy of an architecture is additive over its active
decisions (chosen depth of every stage, chosen config of every running
block) plus ``epsilon``-scaled pairwise interactions between active
decisions. With ``epsilon == 0`` accuracy is exactly separable.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import StructuralError
from .search_space import ArchPoint, SearchSpaceSpec, check_shape, encode


def _pad_depth_table(spec: SearchSpaceSpec, table) -> np.ndarray:
    out = np.zeros((spec.num_stages, spec.max_choices))
    if len(table) != spec.num_stages:
        raise StructuralError("depth table needs one row per stage")
    for s, row in enumerate(table):
        row = np.asarray(row, dtype=float)
        if row.shape != (spec.beta_sizes[s],):
            raise StructuralError(f"stage {s}: expected {spec.beta_sizes[s]} depth entries, got {row.shape}")
        out[s, : len(row)] = row
    return out


def _unpad_depth_table(spec: SearchSpaceSpec, padded: np.ndarray) -> list[list[float]]:
    return [padded[s, :n].tolist() for s, n in enumerate(spec.beta_sizes)]


def latency_rank(spec: SearchSpaceSpec) -> np.ndarray:
    """Rank of every config when ordered by (expansion ratio, kernel, S&E)."""
    keys = [(c.expansion_ratio, c.kernel_size, c.squeeze_excite, c.config_id) for c in spec.configs]
    if any(None in k for k in keys):
        keys = [(c.config_id,) for c in spec.configs]
    order = sorted(range(len(keys)), key=keys.__getitem__)
    rank = np.empty(len(keys), dtype=int)
    rank[order] = np.arange(len(keys))
    return rank


def active_encoding(spec: SearchSpaceSpec, depth_idx, config_idx) -> np.ndarray:
    """One-hot zeta rows with the alpha entries of non-running blocks zeroed."""
    depth_idx = np.atleast_2d(depth_idx)
    z = encode(spec, depth_idx, config_idx)
    depths = spec.depth_array()[np.arange(spec.num_stages), depth_idx]  # (n, S)
    active = np.arange(spec.max_depth) < depths[..., None]  # (n, S, D)
    mask = np.repeat(active.reshape(len(z), -1), spec.num_configs, axis=1)
    z[:, : spec.alpha_size] *= mask
    return z


@dataclass(frozen=True)
class SyntheticSupernet:
    spec: SearchSpaceSpec
    base_accuracy: float
    depth_effects: np.ndarray  # (S, max_choices), zero padded
    config_effects: np.ndarray  # (S, D, C)
    interaction_strength: float = 0.0
    noise_std: float = 0.0
    seed: int = 0

    def __post_init__(self):
        spec = self.spec
        de = np.asarray(self.depth_effects, dtype=float)
        if de.shape != (spec.num_stages, spec.max_choices):
            de = _pad_depth_table(spec, self.depth_effects)
        object.__setattr__(self, "depth_effects", de)
        ce = np.asarray(self.config_effects, dtype=float)
        if ce.shape != spec.alpha_shape:
            raise StructuralError(f"config effects have shape {ce.shape}, expected {spec.alpha_shape}")
        object.__setattr__(self, "config_effects", ce)
        if self.interaction_strength < 0 or self.noise_std < 0:
            raise ValueError("epsilon and noise_std must be non-negative")

    @classmethod
    def generate(
        cls,
        spec: SearchSpaceSpec,
        rng: np.random.Generator,
        *,
        base: float = 75.0,
        depth_scale: float = 0.5,
        config_scale: float = 0.15,
        epsilon: float = 0.0,
        noise_std: float = 0.0,
        sorted_effects: bool = True,
        seed: int | None = None,
    ) -> "SyntheticSupernet":
        """Draw zero-mean Gaussian effects.

        With ``sorted_effects`` deeper stages and higher-latency configs get
        the larger draws, so accuracy trades off against latency.
        """
        depth = rng.normal(0.0, depth_scale, size=(spec.num_stages, spec.max_choices))
        config = rng.normal(0.0, config_scale, size=spec.alpha_shape)
        if sorted_effects:
            for s, n in enumerate(spec.beta_sizes):
                depth[s, :n] = np.sort(depth[s, :n])
            config = np.sort(config, axis=2)[:, :, latency_rank(spec)]
        for s, n in enumerate(spec.beta_sizes):
            depth[s, n:] = 0.0
        if seed is None:
            seed = int(rng.integers(0, 2**31 - 1))
        return cls(spec, base, depth, config, epsilon, noise_std, seed)

    # -- ground truth ------------------------------------------------------

    @cached_property
    def interaction_draws(self) -> np.ndarray:
        """Strictly upper-triangular Uniform(-1, 1) draws frozen by ``seed``."""
        n = self.spec.size
        u = np.random.default_rng(self.seed).uniform(-1.0, 1.0, size=(n, n))
        return np.triu(u, k=1)

    @cached_property
    def interaction_matrix(self) -> np.ndarray:
        if self.interaction_strength == 0.0:
            return np.zeros((self.spec.size, self.spec.size))
        scale = self.interaction_strength * self.base_accuracy / self.spec.size
        return scale * self.interaction_draws

    @cached_property
    def linear_effects(self) -> np.ndarray:
        """Effect of every zeta entry, laid out like the flat zeta vector."""
        spec = self.spec
        beta = np.concatenate([self.depth_effects[s, :n] for s, n in enumerate(spec.beta_sizes)])
        return np.concatenate([self.config_effects.ravel(), beta])

    def true_accuracy_batch(self, depth_idx, config_idx) -> np.ndarray:
        z = active_encoding(self.spec, depth_idx, config_idx)
        acc = self.base_accuracy + z @ self.linear_effects
        if self.interaction_strength:
            acc = acc + np.sum((z @ self.interaction_matrix) * z, axis=1)
        return acc

    def true_accuracy(self, arch: ArchPoint) -> float:
        check_shape(arch, self.spec)
        depth_idx, config_idx = arch.choices()
        return float(self.true_accuracy_batch(depth_idx[None], config_idx[None])[0])

    def sample_accuracy_batch(self, depth_idx, config_idx, rng: np.random.Generator) -> np.ndarray:
        acc = self.true_accuracy_batch(depth_idx, config_idx)
        return acc + rng.normal(0.0, self.noise_std, size=acc.shape)

    def sample_accuracy(self, arch: ArchPoint, rng: np.random.Generator) -> float:
        return self.true_accuracy(arch) + float(rng.normal(0.0, self.noise_std))

    # -- exact conditional expectations -------------------------------------

    def moments(self, depth_pins=None, config_pins=None) -> tuple[np.ndarray, np.ndarray]:
        """First and second moments of the active encoding under pinned-uniform sampling.

        ``depth_pins`` maps stage -> depth choice index; ``config_pins`` maps
        (stage, block) -> config index. Unpinned groups are uniform and
        independent.
        """
        spec = self.spec
        depth_pins = depth_pins or {}
        config_pins = config_pins or {}
        n_cfg, n_blk = spec.num_configs, spec.max_depth
        mean = np.zeros(spec.size)
        blocks = []
        active = spec.active_blocks()
        for s in range(spec.num_stages):
            n_choice = spec.beta_sizes[s]
            p_depth = np.full(n_choice, 1.0 / n_choice)
            if s in depth_pins:
                p_depth = np.zeros(n_choice)
                p_depth[depth_pins[s]] = 1.0
            q = np.full((n_blk, n_cfg), 1.0 / n_cfg)
            for (ps, b), c in config_pins.items():
                if ps == s:
                    q[b] = 0.0
                    q[b, c] = 1.0
            local_size = n_blk * n_cfg + n_choice
            m1 = np.zeros(local_size)
            m2 = np.zeros((local_size, local_size))
            for j in range(n_choice):
                if p_depth[j] == 0.0:
                    continue
                m = np.zeros(local_size)
                m[: n_blk * n_cfg] = (q * active[s, j][:, None]).ravel()
                m[n_blk * n_cfg + j] = 1.0
                mm = np.outer(m, m)
                for b in range(n_blk):
                    if active[s, j, b]:
                        sl = slice(b * n_cfg, (b + 1) * n_cfg)
                        mm[sl, sl] = np.diag(q[b])
                m1 += p_depth[j] * m
                m2 += p_depth[j] * mm
            a0 = spec.alpha_index(s, 0, 0)
            idx = np.concatenate(
                [np.arange(a0, a0 + n_blk * n_cfg), spec.beta_offsets[s] + np.arange(n_choice)]
            )
            mean[idx] = m1
            blocks.append((idx, m2))
        second = np.outer(mean, mean)
        for idx, m2 in blocks:
            second[np.ix_(idx, idx)] = m2
        return mean, second

    def expected_accuracy(self, depth_pins=None, config_pins=None) -> float:
        """Exact expected true accuracy with the given pins, all else uniform."""
        mean, second = self.moments(depth_pins, config_pins)
        value = self.base_accuracy + float(mean @ self.linear_effects)
        if self.interaction_strength:
            value += float(np.sum(self.interaction_matrix * second))
        return value

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "base": self.base_accuracy,
            "depth_effects": _unpad_depth_table(self.spec, self.depth_effects),
            "config_effects": self.config_effects.tolist(),
            "epsilon": self.interaction_strength,
            "noise_std": self.noise_std,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, spec: SearchSpaceSpec, doc: dict) -> "SyntheticSupernet":
        try:
            return cls(
                spec,
                float(doc["base"]),
                _pad_depth_table(spec, doc["depth_effects"]),
                np.asarray(doc["config_effects"], dtype=float),
                float(doc.get("epsilon", 0.0)),
                float(doc.get("noise_std", 0.0)),
                int(doc.get("seed", 0)),
            )
        except KeyError as exc:
            raise StructuralError(f"oracle document lacks {exc}") from exc

    @classmethod
    def load(cls, spec: SearchSpaceSpec, path) -> "SyntheticSupernet":
        return cls.from_dict(spec, json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class LatencyModel:
    spec: SearchSpaceSpec
    block_latency: np.ndarray  # (S, D, C) milliseconds
    fixed_overhead: float = 0.0
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        t = np.asarray(self.block_latency, dtype=float)
        if t.shape != self.spec.alpha_shape:
            raise StructuralError(f"latency table has shape {t.shape}, expected {self.spec.alpha_shape}")
        if np.any(t <= 0):
            raise ValueError("block latencies must be strictly positive")
        if self.fixed_overhead < 0:
            raise ValueError("fixed overhead must be non-negative")
        object.__setattr__(self, "block_latency", t)

    def save(self, csv_path) -> None:
        """Write ``<name>.csv`` (one row per entry) and the ``<name>.json`` header."""
        csv_path = Path(csv_path)
        with csv_path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["stage", "block", "config_id", "latency_ms"])
            for (s, b, c), v in np.ndenumerate(self.block_latency):
                writer.writerow([s + 1, b + 1, self.spec.configs[c].config_id, f"{v:.12g}"])
        header = {**self.meta, "fixed_overhead_ms": float(f"{self.fixed_overhead:.12g}")}
        csv_path.with_suffix(".json").write_text(json.dumps(header, sort_keys=True, indent=2) + "\n")

    @classmethod
    def load(cls, spec: SearchSpaceSpec, csv_path) -> "LatencyModel":
        csv_path = Path(csv_path)
        t = np.full(spec.alpha_shape, np.nan)
        with csv_path.open() as fh:
            for row in csv.DictReader(fh):
                try:
                    s, b, c = int(row["stage"]) - 1, int(row["block"]) - 1, int(row["config_id"]) - 1
                    t[s, b, c] = float(row["latency_ms"])
                except (KeyError, ValueError, IndexError) as exc:
                    raise StructuralError(f"bad latency row {row}: {exc}") from exc
        if np.isnan(t).any():
            raise StructuralError("latency table is missing entries")
        header = csv_path.with_suffix(".json")
        meta = json.loads(header.read_text()) if header.exists() else {}
        overhead = meta.pop("fixed_overhead_ms", 0.0)
        return cls(spec, t, float(overhead), meta)


def gen_latency(
    spec: SearchSpaceSpec,
    rng: np.random.Generator,
    ranges: tuple[float, float] = (0.8, 3.0),
    fixed_overhead: float = 8.0,
) -> LatencyModel:
    """Log-uniform block latencies, sorted so bigger configs are never faster."""
    lo, hi = ranges
    if not (0 < lo <= hi) or not np.isfinite(hi):
        raise ValueError(f"invalid latency range {ranges}")
    draws = np.exp(rng.uniform(np.log(lo), np.log(hi), size=spec.alpha_shape))
    t = np.sort(draws, axis=2)[:, :, latency_rank(spec)]
    return LatencyModel(spec, t, fixed_overhead)

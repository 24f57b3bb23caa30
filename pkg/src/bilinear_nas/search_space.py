"""Stage/block/configuration search space and its (alpha, beta) encoding.

A point of the search space is a pair of simplex-constrained groups:

* ``alpha[s, b, :]`` selects the configuration of block ``b`` in stage ``s``;
* ``beta[s]`` selects one of the allowed depths of stage ``s``.

Internally stages, blocks, configurations and depth choices are 0-based.
Configuration ids exposed in files are the 1-based ``config_id`` values.
The flat vector layout is all alpha entries (stage-major, then block, then
config) followed by the beta entries of every stage in order.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import CapExceededError, StructuralError

SIMPLEX_TOL = 1e-9


@dataclass(frozen=True)
class ConfigDescriptor:
    config_id: int
    expansion_ratio: int | None = None
    kernel_size: int | None = None
    squeeze_excite: bool | None = None


def default_config_table() -> tuple[ConfigDescriptor, ...]:
    """The 12 block configurations, indexed by expected latency."""
    rows = []
    cid = 1
    for er in (2, 3, 6):
        for k in (3, 5):
            for se in (False, True):
                rows.append(ConfigDescriptor(cid, er, k, se))
                cid += 1
    return tuple(rows)


@dataclass(frozen=True)
class SearchSpaceSpec:
    depth_choices: tuple[tuple[int, ...], ...]
    max_depth: int
    configs: tuple[ConfigDescriptor, ...]

    def __post_init__(self):
        object.__setattr__(
            self, "depth_choices", tuple(tuple(int(d) for d in ch) for ch in self.depth_choices)
        )
        object.__setattr__(self, "configs", tuple(self.configs))
        if not self.depth_choices:
            raise StructuralError("search space needs at least one stage")
        if self.max_depth < 1:
            raise StructuralError("max_depth must be >= 1")
        for s, choices in enumerate(self.depth_choices):
            if not choices:
                raise StructuralError(f"stage {s}: empty depth choice list")
            if any(b <= a for a, b in zip(choices, choices[1:])):
                raise StructuralError(f"stage {s}: depth choices must be strictly increasing")
            if choices[0] < 1 or choices[-1] > self.max_depth:
                raise StructuralError(f"stage {s}: depth choices must lie in [1, {self.max_depth}]")
        if not self.configs:
            raise StructuralError("config table is empty")
        ids = [c.config_id for c in self.configs]
        if ids != list(range(1, len(ids) + 1)):
            raise StructuralError("config ids must be 1..|C| in table order")

    # -- sizes -------------------------------------------------------------

    @property
    def num_stages(self) -> int:
        return len(self.depth_choices)

    @property
    def num_configs(self) -> int:
        return len(self.configs)

    @property
    def alpha_shape(self) -> tuple[int, int, int]:
        return (self.num_stages, self.max_depth, self.num_configs)

    @property
    def alpha_size(self) -> int:
        return self.num_stages * self.max_depth * self.num_configs

    @property
    def beta_sizes(self) -> tuple[int, ...]:
        return tuple(len(ch) for ch in self.depth_choices)

    @property
    def beta_offsets(self) -> tuple[int, ...]:
        offsets = [self.alpha_size]
        for n in self.beta_sizes[:-1]:
            offsets.append(offsets[-1] + n)
        return tuple(offsets)

    @property
    def size(self) -> int:
        """Length N of the flat zeta vector."""
        return self.alpha_size + sum(self.beta_sizes)

    @property
    def max_choices(self) -> int:
        return max(self.beta_sizes)

    def alpha_index(self, s: int, b: int, c: int) -> int:
        return (s * self.max_depth + b) * self.num_configs + c

    def beta_index(self, s: int, j: int) -> int:
        return self.beta_offsets[s] + j

    def depth_array(self) -> np.ndarray:
        """Depth values padded to ``(S, max_choices)``; padding is 0."""
        out = np.zeros((self.num_stages, self.max_choices), dtype=int)
        for s, ch in enumerate(self.depth_choices):
            out[s, : len(ch)] = ch
        return out

    def active_blocks(self) -> np.ndarray:
        """Boolean ``(S, max_choices, D)``: block b runs when choice j is taken."""
        depths = self.depth_array()
        return np.arange(self.max_depth)[None, None, :] < depths[:, :, None]

    def pin_depth_index(self, s: int, b: int) -> int | None:
        """Index of the shallowest allowed depth of stage s that runs block b."""
        for j, d in enumerate(self.depth_choices[s]):
            if d > b:
                return j
        return None

    def count_architectures(self) -> int:
        """Number of distinct effective architectures (masked blocks ignored)."""
        c = self.num_configs
        return math.prod(sum(c**d for d in ch) for ch in self.depth_choices)

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "num_stages": self.num_stages,
            "max_depth": self.max_depth,
            "depth_choices": [list(ch) for ch in self.depth_choices],
            "configs": [
                {"id": c.config_id, "er": c.expansion_ratio, "k": c.kernel_size, "se": c.squeeze_excite}
                for c in self.configs
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SearchSpaceSpec":
        try:
            choices = doc["depth_choices"]
            if "num_stages" in doc and doc["num_stages"] != len(choices):
                raise StructuralError("num_stages disagrees with depth_choices")
            configs = tuple(
                ConfigDescriptor(
                    int(c["id"]),
                    None if c.get("er") is None else int(c["er"]),
                    None if c.get("k") is None else int(c["k"]),
                    None if c.get("se") is None else bool(c["se"]),
                )
                for c in doc["configs"]
            )
            return cls(tuple(tuple(ch) for ch in choices), int(doc["max_depth"]), configs)
        except (KeyError, TypeError) as exc:
            raise StructuralError(f"malformed search space document: {exc}") from exc

    @classmethod
    def load(cls, path) -> "SearchSpaceSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))

    # -- presets -----------------------------------------------------------

    @classmethod
    def paper(cls) -> "SearchSpaceSpec":
        """Five searchable stages of depth 2..4 over the 12-row config table."""
        text = resources.files("bilinear_nas.data").joinpath("paper_space.json").read_text()
        return cls.from_dict(json.loads(text))

    @classmethod
    def uniform(cls, num_stages: int, depth_choices: Sequence[int], num_configs: int) -> "SearchSpaceSpec":
        """Every stage gets the same depth choices; configs are synthetic rows."""
        choices = tuple(depth_choices)
        table = default_config_table()
        if num_configs <= len(table):
            configs = table[:num_configs]
        else:
            configs = tuple(ConfigDescriptor(i + 1, 1 + i, 3, False) for i in range(num_configs))
        return cls((choices,) * num_stages, max(choices), configs)


@dataclass(frozen=True)
class ArchPoint:
    """A point zeta = (alpha, beta); ``mode`` is ``"continuous"`` or ``"discrete"``."""

    alpha: np.ndarray
    beta: tuple[np.ndarray, ...]
    mode: str = "continuous"

    def __post_init__(self):
        object.__setattr__(self, "alpha", np.asarray(self.alpha, dtype=float))
        object.__setattr__(self, "beta", tuple(np.asarray(b, dtype=float) for b in self.beta))
        if self.mode not in ("continuous", "discrete"):
            raise ValueError(f"unknown mode {self.mode!r}")

    @classmethod
    def uniform(cls, spec: SearchSpaceSpec) -> "ArchPoint":
        alpha = np.full(spec.alpha_shape, 1.0 / spec.num_configs)
        beta = tuple(np.full(n, 1.0 / n) for n in spec.beta_sizes)
        return cls(alpha, beta, "continuous")

    @classmethod
    def from_choices(cls, spec: SearchSpaceSpec, depth_idx, config_idx) -> "ArchPoint":
        """One-hot point from depth choice indices ``(S,)`` and config indices ``(S, D)``."""
        config_idx = np.asarray(config_idx, dtype=int).reshape(spec.num_stages, spec.max_depth)
        alpha = np.zeros(spec.alpha_shape)
        s_idx, b_idx = np.indices(config_idx.shape)
        alpha[s_idx, b_idx, config_idx] = 1.0
        beta = []
        for s, n in enumerate(spec.beta_sizes):
            v = np.zeros(n)
            v[int(depth_idx[s])] = 1.0
            beta.append(v)
        return cls(alpha, tuple(beta), "discrete")

    @classmethod
    def from_vector(cls, spec: SearchSpaceSpec, zeta, mode: str = "continuous") -> "ArchPoint":
        zeta = np.asarray(zeta, dtype=float)
        if zeta.shape != (spec.size,):
            raise StructuralError(f"expected vector of length {spec.size}, got {zeta.shape}")
        alpha = zeta[: spec.alpha_size].reshape(spec.alpha_shape)
        beta = tuple(zeta[o : o + n] for o, n in zip(spec.beta_offsets, spec.beta_sizes))
        return cls(alpha, beta, mode)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.alpha.ravel(), *self.beta])

    def choices(self) -> tuple[np.ndarray, np.ndarray]:
        """``(depth_idx, config_idx)`` by per-group argmax (exact for one-hot points)."""
        depth_idx = np.array([int(np.argmax(b)) for b in self.beta])
        return depth_idx, np.argmax(self.alpha, axis=2)

    def with_beta(self, beta) -> "ArchPoint":
        return ArchPoint(self.alpha, tuple(beta), self.mode)


@dataclass(frozen=True)
class Violation:
    kind: str  # "negative", "simplex", "one_hot"
    group: tuple
    residual: float = 0.0


def check_shape(point: ArchPoint, spec: SearchSpaceSpec) -> None:
    if point.alpha.shape != spec.alpha_shape:
        raise StructuralError(f"alpha has shape {point.alpha.shape}, expected {spec.alpha_shape}")
    sizes = tuple(b.shape for b in point.beta)
    if sizes != tuple((n,) for n in spec.beta_sizes):
        raise StructuralError(f"beta groups have shapes {sizes}, expected sizes {spec.beta_sizes}")


def _group_violations(group, values: np.ndarray, discrete: bool, out: list) -> None:
    if np.any(values < -SIMPLEX_TOL):
        out.append(Violation("negative", group, float(values.min())))
    residual = 1.0 - float(values.sum())
    if abs(residual) > SIMPLEX_TOL:
        out.append(Violation("simplex", group, residual))
    if discrete:
        hot = np.abs(values - 1.0) <= SIMPLEX_TOL
        cold = np.abs(values) <= SIMPLEX_TOL
        if hot.sum() != 1 or not np.all(hot | cold):
            out.append(Violation("one_hot", group, float(np.count_nonzero(~cold))))


def validate(point: ArchPoint, spec: SearchSpaceSpec) -> list[Violation]:
    """Return every violated condition; an empty list means the point is valid.

    Groups are named ``("alpha", s, b)`` or ``("beta", s)``. A shape mismatch
    raises :class:`StructuralError` instead.
    """
    check_shape(point, spec)
    discrete = point.mode == "discrete"
    out: list[Violation] = []
    for s in range(spec.num_stages):
        for b in range(spec.max_depth):
            _group_violations(("alpha", s, b), point.alpha[s, b], discrete, out)
    for s, beta in enumerate(point.beta):
        _group_violations(("beta", s), beta, discrete, out)
    return out


def sample_choices(spec: SearchSpaceSpec, rng: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``n`` uniform architectures as ``(depth_idx (n, S), config_idx (n, S, D))``."""
    depth_idx = rng.integers(0, np.array(spec.beta_sizes), size=(n, spec.num_stages))
    config_idx = rng.integers(0, spec.num_configs, size=(n, spec.num_stages, spec.max_depth))
    return depth_idx, config_idx


def sample_uniform(spec: SearchSpaceSpec, rng: np.random.Generator) -> ArchPoint:
    depth_idx, config_idx = sample_choices(spec, rng, 1)
    return ArchPoint.from_choices(spec, depth_idx[0], config_idx[0])


def canonicalize(spec: SearchSpaceSpec, depth_idx: np.ndarray, config_idx: np.ndarray) -> np.ndarray:
    """Set configs of blocks beyond the chosen depth to config index 0."""
    depth_idx = np.asarray(depth_idx)
    depths = spec.depth_array()[np.arange(spec.num_stages), depth_idx]
    active = np.arange(spec.max_depth) < depths[..., None]
    return np.where(active, config_idx, 0)


def stage_options(spec: SearchSpaceSpec, s: int) -> list[tuple[int, tuple[int, ...]]]:
    """All ``(depth choice index, canonical config tuple)`` options of stage s."""
    opts = []
    pad = spec.max_depth
    for j, d in enumerate(spec.depth_choices[s]):
        for cfg in itertools.product(range(spec.num_configs), repeat=d):
            opts.append((j, cfg + (0,) * (pad - d)))
    return opts


def _check_cap(spec: SearchSpaceSpec, cap: int | None) -> int:
    count = spec.count_architectures()
    if cap is not None and count > cap:
        raise CapExceededError(f"search space has {count} architectures, cap is {cap}", count)
    return count


def enumerate_choices(spec: SearchSpaceSpec, cap: int | None = 10**6) -> tuple[np.ndarray, np.ndarray]:
    """Every effective architecture as batch arrays, in lexicographic stage order."""
    count = _check_cap(spec, cap)
    per_stage = [stage_options(spec, s) for s in range(spec.num_stages)]
    depth_idx = np.empty((count, spec.num_stages), dtype=int)
    config_idx = np.empty((count, spec.num_stages, spec.max_depth), dtype=int)
    for i, combo in enumerate(itertools.product(*per_stage)):
        for s, (j, cfg) in enumerate(combo):
            depth_idx[i, s] = j
            config_idx[i, s] = cfg
    return depth_idx, config_idx


def enumerate_architectures(spec: SearchSpaceSpec, cap: int | None = 10**6) -> Iterator[ArchPoint]:
    """Yield each distinct effective architecture once.

    Raises :class:`CapExceededError` (carrying the count) before yielding
    anything when the space is larger than ``cap``.
    """
    _check_cap(spec, cap)
    per_stage = [stage_options(spec, s) for s in range(spec.num_stages)]
    for combo in itertools.product(*per_stage):
        yield ArchPoint.from_choices(spec, [j for j, _ in combo], [cfg for _, cfg in combo])


def discretize(point: ArchPoint) -> ArchPoint:
    """Per-group argmax; ``np.argmax`` returns the lowest index on ties."""
    alpha = np.zeros_like(point.alpha)
    idx = np.argmax(point.alpha, axis=2)
    s_idx, b_idx = np.indices(idx.shape)
    alpha[s_idx, b_idx, idx] = 1.0
    beta = []
    for b in point.beta:
        v = np.zeros_like(b)
        v[int(np.argmax(b))] = 1.0
        beta.append(v)
    return ArchPoint(alpha, tuple(beta), "discrete")


def encode(spec: SearchSpaceSpec, depth_idx: np.ndarray, config_idx: np.ndarray) -> np.ndarray:
    """One-hot zeta matrix ``(n, N)`` for a batch of architectures."""
    depth_idx = np.atleast_2d(depth_idx)
    config_idx = np.asarray(config_idx).reshape(len(depth_idx), spec.num_stages, spec.max_depth)
    n = len(depth_idx)
    z = np.zeros((n, spec.size))
    s_idx, b_idx = np.meshgrid(np.arange(spec.num_stages), np.arange(spec.max_depth), indexing="ij")
    cols = (s_idx * spec.max_depth + b_idx)[None] * spec.num_configs + config_idx
    rows = np.arange(n)[:, None, None]
    z[np.broadcast_to(rows, cols.shape), cols] = 1.0
    offsets = np.array(spec.beta_offsets)
    z[np.arange(n)[:, None], offsets[None, :] + depth_idx] = 1.0
    return z


def decode(spec: SearchSpaceSpec, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of :func:`encode` for one-hot rows."""
    z = np.atleast_2d(z)
    alpha = z[:, : spec.alpha_size].reshape(len(z), *spec.alpha_shape)
    config_idx = np.argmax(alpha, axis=3)
    depth_idx = np.stack(
        [np.argmax(z[:, o : o + n], axis=1) for o, n in zip(spec.beta_offsets, spec.beta_sizes)], axis=1
    )
    return depth_idx, config_idx


@dataclass(frozen=True)
class ArchitectureRecord:
    """Human-readable discrete architecture used in result files."""

    depths: tuple[int, ...]
    configs: tuple[tuple[int, ...], ...] = field(default=())

    @classmethod
    def from_choices(cls, spec: SearchSpaceSpec, depth_idx, config_idx) -> "ArchitectureRecord":
        depths = tuple(spec.depth_choices[s][int(j)] for s, j in enumerate(depth_idx))
        cfg = np.asarray(config_idx)
        configs = tuple(
            tuple(spec.configs[int(c)].config_id for c in cfg[s, :d]) for s, d in enumerate(depths)
        )
        return cls(depths, configs)

    def to_choices(self, spec: SearchSpaceSpec) -> tuple[np.ndarray, np.ndarray]:
        depth_idx = np.array([spec.depth_choices[s].index(d) for s, d in enumerate(self.depths)])
        config_idx = np.zeros((spec.num_stages, spec.max_depth), dtype=int)
        for s, ids in enumerate(self.configs):
            config_idx[s, : len(ids)] = [i - 1 for i in ids]
        return depth_idx, config_idx

    def to_dict(self) -> dict:
        return {"depths": list(self.depths), "configs": [list(c) for c in self.configs]}

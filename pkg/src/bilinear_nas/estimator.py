"""Bilinear accuracy estimator built from individual accuracy contributions.

The estimator is ``ACC = base + sum_s beta_s . depth_delta_s
+ sum_{s,b,c} alpha[s,b,c] * config_delta[s,b,c] * run[s,b]`` where
``run[s,b]`` is the total beta mass on depths that execute block ``b``.
Latency has the same structure with block latencies in place of config
deltas and no depth term.

Probes draw architectures uniformly except for pinned entries. Passing
``n=None`` to a probe takes its infinite-sample limit, i.e. the exact
conditional expectation under the oracle.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import StructuralError
from .oracle import LatencyModel, _pad_depth_table, _unpad_depth_table
from .search_space import ArchPoint, SearchSpaceSpec, check_shape, sample_choices


@dataclass(frozen=True)
class BilinearEstimator:
    spec: SearchSpaceSpec
    base: float
    depth_deltas: np.ndarray  # (S, max_choices), zero padded
    config_deltas: np.ndarray  # (S, D, C)
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        spec = self.spec
        dd = np.asarray(self.depth_deltas, dtype=float)
        if dd.shape != (spec.num_stages, spec.max_choices):
            dd = _pad_depth_table(spec, self.depth_deltas)
        cd = np.asarray(self.config_deltas, dtype=float)
        if cd.shape != spec.alpha_shape:
            raise StructuralError(f"config deltas have shape {cd.shape}, expected {spec.alpha_shape}")
        object.__setattr__(self, "depth_deltas", dd)
        object.__setattr__(self, "config_deltas", cd)

    def predict_batch(self, depth_idx, config_idx) -> np.ndarray:
        return eval_acc_batch(self, depth_idx, config_idx)

    def to_dict(self) -> dict:
        return {
            "base": self.base,
            "depth_deltas": _unpad_depth_table(self.spec, self.depth_deltas),
            "config_deltas": self.config_deltas.tolist(),
            "meta": dict(self.meta),
        }

    @classmethod
    def from_dict(cls, spec: SearchSpaceSpec, doc: dict) -> "BilinearEstimator":
        try:
            return cls(
                spec,
                float(doc["base"]),
                _pad_depth_table(spec, doc["depth_deltas"]),
                np.asarray(doc["config_deltas"], dtype=float),
                dict(doc.get("meta", {})),
            )
        except KeyError as exc:
            raise StructuralError(f"estimator document lacks {exc}") from exc

    @classmethod
    def load(cls, spec: SearchSpaceSpec, path) -> "BilinearEstimator":
        return cls.from_dict(spec, json.loads(Path(path).read_text()))


# -- evaluation ----------------------------------------------------------------


def run_weights(spec: SearchSpaceSpec, beta) -> np.ndarray:
    """``(S, D)`` beta mass on depths that execute each block."""
    active = spec.active_blocks()
    w = np.zeros((spec.num_stages, spec.max_depth))
    for s, b in enumerate(beta):
        w[s] = np.asarray(b) @ active[s, : len(b)]
    return w


def eval_acc(est: BilinearEstimator, point: ArchPoint) -> float:
    check_shape(point, est.spec)
    w = run_weights(est.spec, point.beta)
    depth_term = sum(float(b @ est.depth_deltas[s, : len(b)]) for s, b in enumerate(point.beta))
    return est.base + depth_term + float(np.sum(point.alpha * est.config_deltas * w[:, :, None]))


def eval_lat(lat: LatencyModel, point: ArchPoint) -> float:
    check_shape(point, lat.spec)
    w = run_weights(lat.spec, point.beta)
    return lat.fixed_overhead + float(np.sum(point.alpha * lat.block_latency * w[:, :, None]))


def _chosen_block_sum(spec: SearchSpaceSpec, table: np.ndarray, depth_idx, config_idx) -> np.ndarray:
    depth_idx = np.atleast_2d(depth_idx)
    config_idx = np.asarray(config_idx).reshape(len(depth_idx), spec.num_stages, spec.max_depth)
    s_idx = np.arange(spec.num_stages)
    depths = spec.depth_array()[s_idx, depth_idx]  # (n, S)
    active = np.arange(spec.max_depth) < depths[..., None]
    picked = table[s_idx[:, None], np.arange(spec.max_depth)[None, :], config_idx]  # (n, S, D)
    return np.sum(picked * active, axis=(1, 2))


def eval_acc_batch(est: BilinearEstimator, depth_idx, config_idx) -> np.ndarray:
    depth_idx = np.atleast_2d(depth_idx)
    s_idx = np.arange(est.spec.num_stages)
    depth_term = est.depth_deltas[s_idx, depth_idx].sum(axis=1)
    return est.base + depth_term + _chosen_block_sum(est.spec, est.config_deltas, depth_idx, config_idx)


def eval_lat_batch(lat: LatencyModel, depth_idx, config_idx) -> np.ndarray:
    return lat.fixed_overhead + _chosen_block_sum(lat.spec, lat.block_latency, depth_idx, config_idx)


# -- probes --------------------------------------------------------------------


def _probe(oracle, n, rng, depth_pins=None, config_pins=None) -> float:
    """Mean sampled accuracy with pins fixed and every other group uniform."""
    depth_pins = depth_pins or {}
    config_pins = config_pins or {}
    if n is None:
        return oracle.expected_accuracy(depth_pins, config_pins)
    if n < 1:
        raise ValueError("a probe needs at least one sample")
    depth_idx, config_idx = sample_choices(oracle.spec, rng, n)
    for s, j in depth_pins.items():
        depth_idx[:, s] = j
    for (s, b), c in config_pins.items():
        config_idx[:, s, b] = c
    return float(np.mean(oracle.sample_accuracy_batch(depth_idx, config_idx, rng)))


def estimate_base(oracle, n: int | None, rng: np.random.Generator | None = None) -> float:
    return _probe(oracle, n, rng)


def _depth_choice_index(spec: SearchSpaceSpec, s: int, depth: int) -> int:
    if not 0 <= s < spec.num_stages or depth not in spec.depth_choices[s]:
        raise ValueError(f"depth {depth} is not an allowed choice of stage {s}")
    return spec.depth_choices[s].index(depth)


def estimate_depth_delta(oracle, s: int, depth: int, n: int | None, rng, base: float) -> float:
    """Gap between mean accuracy with stage ``s`` at ``depth`` and ``base``."""
    j = _depth_choice_index(oracle.spec, s, depth)
    return _probe(oracle, n, rng, depth_pins={s: j}) - base


def estimate_config_delta(oracle, s: int, b: int, c: int, n: int | None, rng, base: float) -> float:
    """Gap between mean accuracy with config ``c`` at block ``b`` (0-based) and ``base``.

    The stage depth is pinned to ``b + 1`` so the block runs; when that is not
    an allowed depth, the shallowest allowed depth that runs the block is used.
    """
    spec = oracle.spec
    if not (0 <= s < spec.num_stages and 0 <= b < spec.max_depth and 0 <= c < spec.num_configs):
        raise ValueError(f"invalid probe indices (s={s}, b={b}, c={c})")
    j = spec.pin_depth_index(s, b)
    if j is None:
        raise ValueError(f"no allowed depth of stage {s} runs block {b}")
    return _probe(oracle, n, rng, depth_pins={s: j}, config_pins={(s, b): c}) - base


def _repeat(fn, n_repeats, rng):
    return float(np.mean([fn(rng) for _ in range(n_repeats)]))


def build(
    oracle,
    spec: SearchSpaceSpec | None = None,
    n_per_probe: int | None = 1000,
    n_repeats: int = 10,
    seed: int = 0,
    *,
    net_of_depth: bool = True,
    workers: int = 1,
) -> BilinearEstimator:
    """Probe the oracle once per decision (plus once for the base) and assemble the tables.

    Every probe draws from its own stream ``SeedSequence(seed).spawn`` so the
    result does not depend on ``workers``. With ``net_of_depth`` each config
    delta has the gap of the depth it was pinned to subtracted, so the depth
    contribution is counted once, by the depth term; ``net_of_depth=False``
    keeps the raw gaps.
    """
    spec = spec or oracle.spec
    if spec != oracle.spec:
        raise StructuralError("oracle was built for a different search space")
    if n_repeats < 1:
        raise ValueError("n_repeats must be >= 1")
    depth_jobs = [(s, j) for s in range(spec.num_stages) for j in range(spec.beta_sizes[s])]
    config_jobs = [
        (s, b, c)
        for s in range(spec.num_stages)
        for b in range(spec.max_depth)
        if spec.pin_depth_index(s, b) is not None
        for c in range(spec.num_configs)
    ]
    streams = [np.random.default_rng(ss) for ss in np.random.SeedSequence(seed).spawn(1 + len(depth_jobs) + len(config_jobs))]

    base = _repeat(lambda r: estimate_base(oracle, n_per_probe, r), n_repeats, streams[0])

    def depth_task(i):
        s, j = depth_jobs[i]
        depth = spec.depth_choices[s][j]
        return _repeat(lambda r: estimate_depth_delta(oracle, s, depth, n_per_probe, r, base), n_repeats, streams[1 + i])

    def config_task(i):
        s, b, c = config_jobs[i]
        offset = 1 + len(depth_jobs)
        return _repeat(lambda r: estimate_config_delta(oracle, s, b, c, n_per_probe, r, base), n_repeats, streams[offset + i])

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            depth_vals = list(pool.map(depth_task, range(len(depth_jobs))))
            config_vals = list(pool.map(config_task, range(len(config_jobs))))
    else:
        depth_vals = [depth_task(i) for i in range(len(depth_jobs))]
        config_vals = [config_task(i) for i in range(len(config_jobs))]

    depth_deltas = np.zeros((spec.num_stages, spec.max_choices))
    for (s, j), v in zip(depth_jobs, depth_vals):
        depth_deltas[s, j] = v
    config_deltas = np.zeros(spec.alpha_shape)
    for (s, b, c), v in zip(config_jobs, config_vals):
        config_deltas[s, b, c] = v
        if net_of_depth:
            config_deltas[s, b, c] -= depth_deltas[s, spec.pin_depth_index(s, b)]

    meta = {
        "n_per_probe": n_per_probe,
        "n_repeats": n_repeats,
        "seed": seed,
        "n_probes": 1 + len(depth_jobs) + len(config_jobs),
        "n_depth_probes": len(depth_jobs),
        "n_config_probes": len(config_jobs),
        "net_of_depth": net_of_depth,
    }
    return BilinearEstimator(spec, base, depth_deltas, config_deltas, meta)


def ablate(est: BilinearEstimator, zero: str) -> BilinearEstimator:
    """Copy of ``est`` with the depth term or the config term set to zero."""
    if zero == "depth_deltas":
        return replace(est, depth_deltas=np.zeros_like(est.depth_deltas), meta={**est.meta, "ablated": zero})
    if zero == "config_deltas":
        return replace(est, config_deltas=np.zeros_like(est.config_deltas), meta={**est.meta, "ablated": zero})
    raise ValueError(f"can only zero 'depth_deltas' or 'config_deltas', not {zero!r}")

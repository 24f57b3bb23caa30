"""Learned bilinear and full-quadratic accuracy predictors.

Both families regress accuracy on the one-hot encoding ``zeta`` plus a set
of pairwise products ``zeta_i * zeta_j``. The fit is closed form: center,
truncate the SVD of the centered design to ``k`` components, solve in that
subspace, then recover the intercept.
"""

from __future__ import annotations

import csv
import functools
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .analysis import kendall_tau
from .errors import StructuralError, UndefinedCorrelationError
from .search_space import ArchPoint, SearchSpaceSpec, decode, encode, sample_choices

FAMILIES = ("bilinear", "full_quadratic")
SV_REL_TOL = 1e-12


# -- data ----------------------------------------------------------------------


@dataclass(frozen=True)
class RegressionDataset:
    spec: SearchSpaceSpec
    depth_idx: np.ndarray  # (n, S)
    config_idx: np.ndarray  # (n, S, D)
    targets: np.ndarray  # (n,)
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        n = len(self.targets)
        if len(self.depth_idx) != n or len(self.config_idx) != n:
            raise StructuralError("points and targets differ in length")
        parts = [np.asarray(p, dtype=int) for p in (self.train, self.val, self.test)]
        joined = np.concatenate(parts)
        if len(np.unique(joined)) != len(joined):
            raise StructuralError("train/val/test splits overlap")
        if joined.size and (joined.min() < 0 or joined.max() >= n):
            raise StructuralError("split index out of range")
        for name, p in zip(("train", "val", "test"), parts):
            object.__setattr__(self, name, p)

    def __len__(self) -> int:
        return len(self.targets)

    @property
    def points(self) -> list[ArchPoint]:
        return [ArchPoint.from_choices(self.spec, d, c) for d, c in zip(self.depth_idx, self.config_idx)]

    def zeta(self, idx=None) -> np.ndarray:
        idx = slice(None) if idx is None else idx
        return encode(self.spec, self.depth_idx[idx], self.config_idx[idx])

    def save(self, csv_path) -> None:
        """CSV of (space separated one-hot zeta indices, accuracy) plus a ``.json`` split manifest."""
        csv_path = Path(csv_path)
        z = self.zeta()
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["zeta_indices", "accuracy"])
            for row, y in zip(z, self.targets):
                w.writerow([" ".join(str(i) for i in np.flatnonzero(row)), repr(float(y))])
        manifest = {"n": len(self), "train": self.train.tolist(), "val": self.val.tolist(), "test": self.test.tolist()}
        csv_path.with_suffix(".json").write_text(json.dumps(manifest, sort_keys=True) + "\n")

    @classmethod
    def load(cls, spec: SearchSpaceSpec, csv_path) -> "RegressionDataset":
        csv_path = Path(csv_path)
        rows = []
        targets = []
        with open(csv_path, newline="") as fh:
            reader = csv.reader(fh)
            if next(reader, None) != ["zeta_indices", "accuracy"]:
                raise StructuralError(f"{csv_path}: unexpected header")
            for rec in reader:
                z = np.zeros(spec.size)
                z[[int(i) for i in rec[0].split()]] = 1.0
                rows.append(z)
                targets.append(float(rec[1]))
        manifest = json.loads(csv_path.with_suffix(".json").read_text())
        if not rows:
            raise StructuralError(f"{csv_path}: no data rows")
        depth_idx, config_idx = decode(spec, np.array(rows))
        return cls(spec, depth_idx, config_idx, np.array(targets), manifest["train"], manifest["val"], manifest["test"])


def collect_dataset(
    oracle,
    spec: SearchSpaceSpec,
    n: int,
    rng: np.random.Generator,
    n_test: int = 500,
    val_fraction: float = 0.2,
) -> RegressionDataset:
    """``n`` uniform architectures split train/val, plus ``n_test`` more for testing.

    Targets are single noisy oracle draws (the true accuracy when the oracle
    is noiseless).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if oracle.spec != spec:
        raise StructuralError("oracle was built for a different search space")
    depth_idx, config_idx = sample_choices(spec, rng, n + n_test)
    targets = oracle.sample_accuracy_batch(depth_idx, config_idx, rng)
    perm = rng.permutation(n)
    n_val = int(round(n * val_fraction))
    return RegressionDataset(
        spec, depth_idx, config_idx, targets,
        np.sort(perm[n_val:]), np.sort(perm[:n_val]), np.arange(n, n + n_test),
    )


# -- features ------------------------------------------------------------------


def _group_ids(spec: SearchSpaceSpec) -> np.ndarray:
    """Simplex group of every zeta index (alpha groups first, then beta)."""
    S, D, C = spec.alpha_shape
    alpha = np.repeat(np.arange(S * D), C)
    beta = np.concatenate([np.full(n, S * D + s) for s, n in enumerate(spec.beta_sizes)])
    return np.concatenate([alpha, beta])


@functools.lru_cache(maxsize=16)
def cross_terms(spec: SearchSpaceSpec, family: str) -> tuple[np.ndarray, np.ndarray]:
    """Index pairs ``(i, j)``, ``i < j``, of the products a family can use.

    ``bilinear``: alpha (s, b, c) with beta (s, j) whenever depth choice j
    runs block b. ``full_quadratic``: every pair from different groups.
    """
    if family == "bilinear":
        pairs = []
        for s in range(spec.num_stages):
            for b in range(spec.max_depth):
                for c in range(spec.num_configs):
                    for j, d in enumerate(spec.depth_choices[s]):
                        if d > b:
                            pairs.append((spec.alpha_index(s, b, c), spec.beta_index(s, j)))
        arr = np.array(pairs, dtype=int).reshape(-1, 2)
        return arr[:, 0], arr[:, 1]
    if family == "full_quadratic":
        i, j = np.triu_indices(spec.size, k=1)
        groups = _group_ids(spec)
        keep = groups[i] != groups[j]
        return i[keep], j[keep]
    raise ValueError(f"unknown family {family!r}; expected one of {FAMILIES}")


def features(spec: SearchSpaceSpec, family: str, zeta: np.ndarray) -> np.ndarray:
    """``[zeta, zeta_i * zeta_j for the family's pairs]``."""
    i, j = cross_terms(spec, family)
    zeta = np.atleast_2d(zeta)
    return np.hstack([zeta, zeta[:, i] * zeta[:, j]])


# -- predictor -----------------------------------------------------------------


@dataclass(frozen=True)
class QuadraticPredictor:
    spec: SearchSpaceSpec
    family: str
    intercept: float
    linear: np.ndarray  # (N,)
    quad: np.ndarray  # one value per cross_terms(spec, family) pair
    components_k: int
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        i, _ = cross_terms(self.spec, self.family)
        linear = np.asarray(self.linear, dtype=float)
        quad = np.asarray(self.quad, dtype=float)
        if linear.shape != (self.spec.size,) or quad.shape != i.shape:
            raise StructuralError("coefficient shapes do not match the family on this search space")
        object.__setattr__(self, "linear", linear)
        object.__setattr__(self, "quad", quad)

    @property
    def weights(self) -> np.ndarray:
        return np.concatenate([self.linear, self.quad])

    def predict_zeta(self, zeta) -> np.ndarray:
        return self.intercept + features(self.spec, self.family, zeta) @ self.weights

    def predict_batch(self, depth_idx, config_idx) -> np.ndarray:
        return self.predict_zeta(encode(self.spec, depth_idx, config_idx))

    def quad_matrix(self) -> np.ndarray:
        """Upper-triangular ``Q`` with ``zeta^T Q zeta`` equal to the cross-term sum."""
        i, j = cross_terms(self.spec, self.family)
        q = np.zeros((self.spec.size, self.spec.size))
        q[i, j] = self.quad
        return q

    def to_dict(self) -> dict:
        i, j = cross_terms(self.spec, self.family)
        return {
            "family": self.family,
            "intercept": self.intercept,
            "linear": self.linear.tolist(),
            "quad_entries": [{"i": int(a), "j": int(b), "v": float(v)} for a, b, v in zip(i, j, self.quad)],
            "k": self.components_k,
        }

    @classmethod
    def from_dict(cls, spec: SearchSpaceSpec, doc: dict) -> "QuadraticPredictor":
        try:
            family = doc["family"]
            i, j = cross_terms(spec, family)
            pos = {(int(a), int(b)): n for n, (a, b) in enumerate(zip(i, j))}
            quad = np.zeros(len(i))
            for e in doc["quad_entries"]:
                key = (int(e["i"]), int(e["j"]))
                if key not in pos:
                    raise StructuralError(f"pair {key} is not a {family} cross term")
                quad[pos[key]] = float(e["v"])
            return cls(spec, family, float(doc["intercept"]), doc["linear"], quad, int(doc["k"]))
        except (KeyError, TypeError) as exc:
            raise StructuralError(f"malformed predictor document: {exc}") from exc

    @classmethod
    def load(cls, spec: SearchSpaceSpec, path) -> "QuadraticPredictor":
        return cls.from_dict(spec, json.loads(Path(path).read_text()))


def predict(p: QuadraticPredictor, point: ArchPoint) -> float:
    if point.alpha.shape != p.spec.alpha_shape or len(point.beta) != p.spec.num_stages:
        raise StructuralError("point does not belong to the predictor's search space")
    return float(p.predict_zeta(point.to_vector()[None])[0])


# -- closed-form fit -----------------------------------------------------------


class _SvdFit:
    """Centered design and its SVD, reusable across truncation levels."""

    def __init__(self, x: np.ndarray, y: np.ndarray):
        self.x, self.y = x, y
        xc = x - x.mean(axis=0)
        yc = y - y.mean()
        u, s, vt = np.linalg.svd(xc, full_matrices=False)
        self.rank = int(np.sum(s > SV_REL_TOL * s[0])) if s.size and s[0] > 0 else 0
        self.s, self.vt = s[: self.rank], vt[: self.rank]
        self.uty = u[:, : self.rank].T @ yc

    def solve(self, k: int) -> tuple[float, np.ndarray]:
        if k < 1:
            raise ValueError("k must be >= 1")
        if k > self.rank:
            raise ValueError(f"k={k} exceeds the {self.rank} usable singular values")
        w = self.vt[:k].T @ (self.uty[:k] / self.s[:k])
        b = float(np.mean(self.y - self.x @ w))
        return b, w


def _design(data: RegressionDataset, family: str, idx) -> tuple[np.ndarray, np.ndarray]:
    idx = data.train if idx is None else np.asarray(idx, dtype=int)
    if len(idx) == 0:
        raise ValueError("no training rows")
    return features(data.spec, family, data.zeta(idx)), np.asarray(data.targets, dtype=float)[idx]


def _unpack(spec, family, b, w, k, meta=None) -> QuadraticPredictor:
    return QuadraticPredictor(spec, family, b, w[: spec.size], w[spec.size :], k, meta or {})


def fit_closed_form(data: RegressionDataset, family: str, k: int, idx=None) -> QuadraticPredictor:
    """Truncated-SVD least squares on the ``idx`` rows (default: the training split)."""
    x, y = _design(data, family, idx)
    b, w = _SvdFit(x, y).solve(k)
    return _unpack(data.spec, family, b, w, k)


def component_scores(data: RegressionDataset, family: str, k_grid) -> dict[int, float]:
    """Validation Kendall tau of the fit at every usable ``k`` of the grid."""
    fit = _SvdFit(*_design(data, family, None))
    zval = features(data.spec, family, data.zeta(data.val))
    yval = data.targets[data.val]
    scores = {}
    for k in sorted(set(int(k) for k in k_grid)):
        if not 1 <= k <= fit.rank:
            continue
        b, w = fit.solve(k)
        try:
            scores[k] = kendall_tau(b + zval @ w, yval)
        except UndefinedCorrelationError:
            scores[k] = float("-inf")
    return scores


def select_components(data: RegressionDataset, family: str, k_grid) -> int:
    """``k`` with the best validation Kendall tau; ties go to the smaller ``k``."""
    if len(list(k_grid)) == 0:
        raise ValueError("empty k grid")
    scores = component_scores(data, family, k_grid)
    if not scores:
        raise ValueError("no k in the grid is within the usable rank")
    best = max(scores.values())
    return min(k for k, v in scores.items() if v == best)

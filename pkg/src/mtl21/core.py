"""Domain types, validation, and serialization shared by all other modules.

The central object is :class:`MultiTaskDataset`: per-task design matrices and
responses, stored dense with contiguous columns because every screening pass
touches every column of every task. Construction is permissive (so that
invalid data can be held and then reported by :func:`validate_dataset`);
numerical code is expected to validate first.

All arrays are float64 and frozen (read-only) after construction; the types
are safe to share across concurrent readers.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DatasetFormatError,
    DimensionMismatch,
    EmptyDataset,
    LambdaOutOfRange,
    NonFinite,
)

__all__ = [
    "MultiTaskDataset",
    "WeightMatrix",
    "DualPoint",
    "LambdaGrid",
    "ScreeningMask",
    "validate_dataset",
    "stack_response",
    "load_dataset",
    "save_dataset",
    "format_float",
]


def format_float(v):
    """Shortest decimal string that parses back to the same float64."""
    return repr(float(v))


def _frozen(a):
    a = np.array(a, dtype=np.float64, order="F", copy=True)
    a.setflags(write=False)
    return a


class MultiTaskDataset:
    """Per-task design matrices ``X[t]`` (N_t x d) and responses ``y[t]``.

    Parameters
    ----------
    tasks : sequence of (array_like, array_like)
        One ``(X_t, y_t)`` pair per task. Each ``X_t`` must be 2-D and each
        ``y_t`` 1-D with one entry per row of ``X_t``; these structural shape
        requirements are enforced here. Cross-task consistency (equal column
        counts), finiteness, and non-emptiness are checked later by
        :func:`validate_dataset`, so a malformed dataset can be constructed
        and then diagnosed.
    """

    def __init__(self, tasks):
        xs = []
        ys = []
        for i, (X, y) in enumerate(tasks):
            X = np.array(X, dtype=np.float64, order="F", copy=True)
            y = np.array(y, dtype=np.float64, copy=True)
            if X.ndim != 2:
                raise DimensionMismatch(f"task {i}: design matrix must be 2-D, got {X.ndim}-D")
            if y.ndim != 1:
                raise DimensionMismatch(f"task {i}: response must be 1-D, got {y.ndim}-D")
            if y.shape[0] != X.shape[0]:
                raise DimensionMismatch(
                    f"task {i}: {X.shape[0]} rows but {y.shape[0]} responses"
                )
            X.setflags(write=False)
            y.setflags(write=False)
            xs.append(X)
            ys.append(y)
        self.X = tuple(xs)
        self.y = tuple(ys)
        self._cache = {}

    @property
    def T(self):
        return len(self.X)

    @property
    def d(self):
        return self.X[0].shape[1] if self.X else 0

    @property
    def n_per_task(self):
        return tuple(X.shape[0] for X in self.X)

    @property
    def N(self):
        return sum(self.n_per_task)

    @property
    def col_norms(self):
        """(d, T) array of per-task column norms, computed once and cached."""
        key = "col_norms"
        if key not in self._cache:
            cn = np.empty((self.d, self.T))
            for t, X in enumerate(self.X):
                cn[:, t] = np.sqrt(np.einsum("ij,ij->j", X, X))
            cn.setflags(write=False)
            self._cache[key] = cn
        return self._cache[key]

    def column(self, ell, t):
        return self.X[t][:, ell]

    def __eq__(self, other):
        if not isinstance(other, MultiTaskDataset):
            return NotImplemented
        return (
            self.T == other.T
            and all(np.array_equal(a, b) for a, b in zip(self.X, other.X))
            and all(np.array_equal(a, b) for a, b in zip(self.y, other.y))
        )

    def __repr__(self):
        return f"MultiTaskDataset(T={self.T}, d={self.d}, n={list(self.n_per_task)})"


def validate_dataset(ds):
    """Raise unless every dataset invariant holds.

    Errors
    ------
    EmptyDataset : no tasks, a task with zero rows, or zero features.
    DimensionMismatch : tasks disagree on the column count.
    NonFinite : some matrix or response entry is NaN or infinite.
    """
    if ds.T == 0:
        raise EmptyDataset("dataset has no tasks")
    d = ds.X[0].shape[1]
    for t, (X, y) in enumerate(zip(ds.X, ds.y)):
        if X.shape[0] == 0:
            raise EmptyDataset(f"task {t} has no samples")
        if X.shape[1] != d:
            raise DimensionMismatch(
                f"task {t} has {X.shape[1]} columns, task 0 has {d}"
            )
        if not np.isfinite(X).all():
            raise NonFinite(f"task {t}: design matrix has a non-finite entry")
        if not np.isfinite(y).all():
            raise NonFinite(f"task {t}: response has a non-finite entry")
    if d == 0:
        raise EmptyDataset("dataset has no features")


def stack_response(ds):
    """Concatenate the per-task responses into one length-N vector."""
    return np.concatenate(ds.y)


class WeightMatrix:
    """A d x T coefficient matrix; column t belongs to task t, rows are the
    unit of sparsity."""

    def __init__(self, values):
        v = np.array(values, dtype=np.float64, copy=True)
        if v.ndim != 2:
            raise DimensionMismatch(f"weights must be 2-D, got {v.ndim}-D")
        v.setflags(write=False)
        self.values = v

    @property
    def d(self):
        return self.values.shape[0]

    @property
    def T(self):
        return self.values.shape[1]

    def row_norms(self):
        return np.sqrt(np.einsum("ij,ij->i", self.values, self.values))

    def __eq__(self, other):
        if not isinstance(other, WeightMatrix):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    def __repr__(self):
        return f"WeightMatrix(d={self.d}, T={self.T})"

    def to_csv(self, path):
        with open(path, "w") as fh:
            for row in self.values:
                fh.write(",".join(format_float(v) for v in row) + "\n")

    @classmethod
    def from_csv(cls, path):
        rows = _parse_csv_floats(path)
        if not rows:
            raise DatasetFormatError(f"{path}: no rows")
        width = len(rows[0])
        for i, r in enumerate(rows):
            if len(r) != width:
                raise DatasetFormatError(f"{path} line {i + 1}: expected {width} fields, got {len(r)}")
        return cls(np.array(rows))


def as_weight_values(W, d=None, T=None):
    """Coerce a WeightMatrix or array to a (d, T) float64 ndarray."""
    v = W.values if isinstance(W, WeightMatrix) else np.asarray(W, dtype=np.float64)
    if v.ndim != 2:
        raise DimensionMismatch(f"weights must be 2-D, got {v.ndim}-D")
    if d is not None and v.shape != (d, T):
        raise DimensionMismatch(f"weights shape {v.shape}, expected {(d, T)}")
    return v


class DualPoint:
    """A length-N dual vector partitioned into per-task blocks."""

    def __init__(self, theta, block_sizes):
        theta = np.array(theta, dtype=np.float64, copy=True)
        if theta.ndim != 1:
            raise DimensionMismatch(f"dual vector must be 1-D, got {theta.ndim}-D")
        block_sizes = tuple(int(n) for n in block_sizes)
        if sum(block_sizes) != theta.shape[0]:
            raise DimensionMismatch(
                f"blocks sum to {sum(block_sizes)} but vector has length {theta.shape[0]}"
            )
        theta.setflags(write=False)
        self.theta = theta
        self.block_sizes = block_sizes
        ends = np.cumsum(block_sizes)
        self._offsets = tuple(zip(ends - np.array(block_sizes), ends))

    @classmethod
    def from_blocks(cls, blocks):
        blocks = [np.asarray(b, dtype=np.float64) for b in blocks]
        return cls(np.concatenate(blocks) if blocks else np.zeros(0), [len(b) for b in blocks])

    def block(self, t):
        lo, hi = self._offsets[t]
        return self.theta[lo:hi]

    def blocks(self):
        return [self.block(t) for t in range(len(self.block_sizes))]

    def __eq__(self, other):
        if not isinstance(other, DualPoint):
            return NotImplemented
        return self.block_sizes == other.block_sizes and np.array_equal(self.theta, other.theta)

    def __repr__(self):
        return f"DualPoint(N={self.theta.shape[0]}, blocks={list(self.block_sizes)})"

    def to_json(self):
        return json.dumps(
            {"blocks": [[float(v) for v in b] for b in self.blocks()]}
        )

    @classmethod
    def from_json(cls, text):
        obj = json.loads(text)
        return cls.from_blocks(obj["blocks"])


def as_dual_vector(theta, N=None):
    """Coerce a DualPoint or array to a length-N float64 vector."""
    v = theta.theta if isinstance(theta, DualPoint) else np.asarray(theta, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionMismatch(f"dual vector must be 1-D, got {v.ndim}-D")
    if N is not None and v.shape[0] != N:
        raise DimensionMismatch(f"dual vector length {v.shape[0]}, expected {N}")
    return v


class LambdaGrid:
    """A strictly decreasing sequence of positive regularization values whose
    head is the all-zero threshold of the attached dataset."""

    def __init__(self, values):
        v = np.array(values, dtype=np.float64, copy=True)
        if v.ndim != 1 or v.shape[0] == 0:
            raise LambdaOutOfRange("grid must be a non-empty 1-D sequence")
        if not np.isfinite(v).all():
            raise NonFinite("grid contains a non-finite value")
        if (v <= 0).any():
            raise LambdaOutOfRange("grid values must be positive")
        if v.shape[0] > 1 and not (np.diff(v) < 0).all():
            raise LambdaOutOfRange("grid must be strictly decreasing")
        v.setflags(write=False)
        self.values = v

    @classmethod
    def log_spaced(cls, lambda_max, n_points=100, min_ratio=0.01):
        """Log-equispaced ratios from 1.0 down to ``min_ratio`` inclusive.

        Endpoints are exact: the head is ``lambda_max`` itself and the tail is
        ``lambda_max * min_ratio``; consecutive ratios are constant.
        """
        if lambda_max <= 0:
            raise LambdaOutOfRange(f"lambda_max must be positive, got {lambda_max}")
        if n_points < 1:
            raise LambdaOutOfRange(f"need at least one grid point, got {n_points}")
        if not 0 < min_ratio <= 1:
            raise LambdaOutOfRange(f"min_ratio must be in (0, 1], got {min_ratio}")
        if n_points == 1:
            return cls([lambda_max])
        if min_ratio == 1.0:
            raise LambdaOutOfRange("min_ratio 1.0 needs n_points == 1")
        k = np.arange(n_points)
        ratios = min_ratio ** (k / (n_points - 1))
        ratios[0] = 1.0
        ratios[-1] = min_ratio
        return cls(lambda_max * ratios)

    def validate_head(self, lambda_max, rel_tol=1e-12):
        """Check the head equals the given threshold to relative tolerance."""
        head = self.values[0]
        if not math.isclose(head, lambda_max, rel_tol=rel_tol, abs_tol=0.0):
            raise LambdaOutOfRange(
                f"grid head {head!r} does not match the all-zero threshold {lambda_max!r}"
            )

    def __len__(self):
        return self.values.shape[0]

    def __iter__(self):
        return iter(self.values)

    def __eq__(self, other):
        if not isinstance(other, LambdaGrid):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    def __repr__(self):
        return f"LambdaGrid(K={len(self)}, head={self.values[0]!r}, tail={self.values[-1]!r})"

    def to_json(self):
        return json.dumps({"values": [float(v) for v in self.values]})

    @classmethod
    def from_json(cls, text):
        return cls(json.loads(text)["values"])


class ScreeningMask:
    """Per-feature certified-inactive flags at one regularization value.

    ``inactive[l]`` is derived from ``scores[l] < 1`` (strict), so the
    coupling between flags and scores can never drift.
    """

    def __init__(self, scores, lam):
        scores = np.array(scores, dtype=np.float64, copy=True)
        if scores.ndim != 1:
            raise DimensionMismatch(f"scores must be 1-D, got {scores.ndim}-D")
        if not np.isfinite(scores).all():
            raise NonFinite("scores contain a non-finite value")
        scores.setflags(write=False)
        self.scores = scores
        self.lam = float(lam)
        inactive = scores < 1.0
        inactive.setflags(write=False)
        self.inactive = inactive

    @property
    def d(self):
        return self.scores.shape[0]

    @property
    def n_inactive(self):
        return int(self.inactive.sum())

    def __eq__(self, other):
        if not isinstance(other, ScreeningMask):
            return NotImplemented
        return self.lam == other.lam and np.array_equal(self.scores, other.scores)

    def __repr__(self):
        return f"ScreeningMask(d={self.d}, n_inactive={self.n_inactive}, lam={self.lam!r})"

    def to_json(self):
        return json.dumps(
            {"lambda": float(self.lam), "scores": [float(v) for v in self.scores]}
        )

    @classmethod
    def from_json(cls, text):
        obj = json.loads(text)
        return cls(obj["scores"], obj["lambda"])


# ------------------------------ file format ------------------------------
#
# A dataset directory holds meta.json with {"T": int, "d": int,
# "n": [N_1, ..., N_T]} plus task_<t>.csv (0-based t), each row d feature
# values followed by the response as the last column. Extra meta keys are
# preserved on load under .extra_meta-style access by callers that need them.


def save_dataset(ds, out_dir, extra_meta=None):
    """Write the dataset directory format; floats round-trip bit-exactly."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    meta = {"T": ds.T, "d": ds.d, "n": list(ds.n_per_task)}
    if extra_meta:
        for k, v in extra_meta.items():
            meta.setdefault(k, v)
    with open(out / "meta.json", "w") as fh:
        json.dump(meta, fh, indent=2)
        fh.write("\n")
    for t, (X, y) in enumerate(zip(ds.X, ds.y)):
        with open(out / f"task_{t}.csv", "w") as fh:
            for i in range(X.shape[0]):
                fields = [format_float(v) for v in X[i]]
                fields.append(format_float(y[i]))
                fh.write(",".join(fields) + "\n")
    return out


def _parse_csv_floats(path):
    """Parse a CSV of floats; on malformed input, point at the bad cell."""
    path = Path(path)
    if not path.is_file():
        raise DatasetFormatError(f"{path}: file not found")
    rows = []
    with open(path) as fh:
        lines = [ln for ln in (line.strip() for line in fh) if ln]
    try:
        rows = [[float(f) for f in ln.split(",")] for ln in lines]
    except ValueError:
        for i, ln in enumerate(lines):
            for j, field in enumerate(ln.split(",")):
                try:
                    float(field)
                except ValueError:
                    raise DatasetFormatError(
                        f"{path} line {i + 1} field {j + 1}: not a number: {field!r}"
                    ) from None
        raise DatasetFormatError(f"{path}: unparseable numeric content")
    return rows


def load_dataset(in_dir):
    """Read a dataset directory; returns (dataset, meta dict)."""
    root = Path(in_dir)
    meta_path = root / "meta.json"
    if not meta_path.is_file():
        raise DatasetFormatError(f"{meta_path}: file not found")
    try:
        with open(meta_path) as fh:
            meta = json.load(fh)
    except json.JSONDecodeError as e:
        raise DatasetFormatError(f"{meta_path}: invalid JSON ({e})") from None
    for key in ("T", "d", "n"):
        if key not in meta:
            raise DatasetFormatError(f"{meta_path}: missing key {key!r}")
    T, d, n = meta["T"], meta["d"], meta["n"]
    if not isinstance(T, int) or not isinstance(d, int) or not isinstance(n, list):
        raise DatasetFormatError(f"{meta_path}: T and d must be ints, n a list")
    if len(n) != T:
        raise DatasetFormatError(f"{meta_path}: n has {len(n)} entries, T is {T}")
    tasks = []
    for t in range(T):
        rows = _parse_csv_floats(root / f"task_{t}.csv")
        if len(rows) != n[t]:
            raise DatasetFormatError(
                f"task_{t}.csv: {len(rows)} rows, meta says {n[t]}"
            )
        for i, r in enumerate(rows):
            if len(r) != d + 1:
                raise DatasetFormatError(
                    f"task_{t}.csv line {i + 1}: expected {d + 1} fields, got {len(r)}"
                )
        arr = np.array(rows, dtype=np.float64).reshape(len(rows), d + 1)
        tasks.append((arr[:, :d], arr[:, d]))
    return MultiTaskDataset(tasks), meta

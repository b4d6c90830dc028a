"""Marked empirical processes as step functions and L2(nu) quadrature.

A marked empirical process ``x -> sum_i 1{X_{i-1} <= x} m_i`` is stored
exactly as a right-continuous step function.  Integrals against a finite
measure ``nu`` are sums over the atoms of a discrete representation of
``nu``; all test statistics in the package reduce to such sums.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable

import numpy as np


class EmptySampleError(ValueError):
    pass


def _as_finite_1d(values, name):
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True)
class MarkedSample:
    """Anchor/mark pairs ``(X_{i-1}, m_i)``, ``i = 1..n``."""

    anchors: np.ndarray
    marks: np.ndarray

    def __post_init__(self):
        anchors = _as_finite_1d(self.anchors, "anchors")
        marks = _as_finite_1d(self.marks, "marks")
        if anchors.shape != marks.shape:
            raise ValueError("anchors and marks must have equal length")
        object.__setattr__(self, "anchors", anchors)
        object.__setattr__(self, "marks", marks)

    @property
    def n(self) -> int:
        return self.anchors.size


@dataclass(frozen=True)
class StepFunctionProcess:
    """Right-continuous step function, zero left of ``jump_points[0]``.

    ``cumulative_values[k]`` is the value on ``[jump_points[k], jump_points[k+1])``.
    """

    jump_points: np.ndarray
    cumulative_values: np.ndarray

    def __post_init__(self):
        jp = np.asarray(self.jump_points, dtype=float)
        cv = np.asarray(self.cumulative_values, dtype=float)
        if jp.shape != cv.shape or jp.ndim != 1:
            raise ValueError("jump_points and cumulative_values must be 1-d of equal length")
        if jp.size > 1 and not np.all(np.diff(jp) > 0):
            raise ValueError("jump_points must be strictly increasing")
        object.__setattr__(self, "jump_points", jp)
        object.__setattr__(self, "cumulative_values", cv)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.jump_points, x, side="right") - 1
        padded = np.concatenate(([0.0], self.cumulative_values))
        out = padded[idx + 1]
        return out if out.ndim else float(out)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x", "value"])
            for x, v in zip(self.jump_points, self.cumulative_values):
                writer.writerow([f"{x:.17g}", f"{v:.17g}"])

    @classmethod
    def from_csv(cls, path) -> "StepFunctionProcess":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        return cls(np.array([float(r["x"]) for r in rows]),
                   np.array([float(r["value"]) for r in rows]))


def _step_from_pairs(anchors, values):
    order = np.argsort(anchors, kind="stable")
    xs = anchors[order]
    vs = values[order]
    jump_points, start = np.unique(xs, return_index=True)
    summed = np.add.reduceat(vs, start) if xs.size else vs
    return StepFunctionProcess(jump_points, np.cumsum(summed))


def build_marked_process(sample: MarkedSample) -> StepFunctionProcess:
    """Step function ``x -> sum of marks whose anchors are <= x``.

    Tied anchors are merged into a single jump carrying the summed mark.
    """
    if sample.n == 0:
        raise EmptySampleError("empty sample")
    return _step_from_pairs(sample.anchors, sample.marks)


def evaluate_marked_sum(anchors, marks, grid):
    """Evaluate ``sum_i 1{anchors_i <= x} marks_i`` at every ``x`` in ``grid``.

    ``marks`` may be 2-d with one row per replication sharing no anchors; in
    that case ``anchors`` has the same shape and the result has one row per
    replication.
    """
    anchors = np.asarray(anchors, dtype=float)
    marks = np.asarray(marks, dtype=float)
    grid = np.asarray(grid, dtype=float)
    if anchors.ndim == 1:
        order = np.argsort(anchors, kind="stable")
        csum = np.concatenate(([0.0], np.cumsum(marks[order])))
        return csum[np.searchsorted(anchors[order], grid, side="right")]
    return np.stack([evaluate_marked_sum(a, m, grid) for a, m in zip(anchors, marks)])


@dataclass(frozen=True)
class WeightFunction:
    evaluator: Callable[[np.ndarray], np.ndarray]
    description: str = ""

    def __call__(self, x):
        return self.evaluator(x)


def apply_weight(process: StepFunctionProcess, w: WeightFunction, eval_grid) -> np.ndarray:
    """Tabulate ``w(x) * process(x)`` on ``eval_grid``."""
    grid = np.asarray(eval_grid, dtype=float)
    if grid.size > 1 and np.any(np.diff(grid) < 0):
        raise ValueError("eval_grid must be sorted")
    wx = np.asarray(w(grid), dtype=float) * np.ones_like(grid)
    if np.any(~(wx > 0)):
        raise ValueError("invalid weight: w must be positive on the evaluation grid")
    return wx * process(grid)


@dataclass(frozen=True)
class QuadratureMeasure:
    """Finite measure given by atoms and non-negative weights.

    ``kind`` is ``"discrete-atoms"`` for user-given atoms or
    ``"density-on-grid"`` when the atoms discretize a density.
    """

    atoms: np.ndarray
    weights: np.ndarray
    kind: str = "discrete-atoms"

    def __post_init__(self):
        atoms = _as_finite_1d(self.atoms, "atoms")
        weights = _as_finite_1d(self.weights, "weights")
        if atoms.shape != weights.shape:
            raise ValueError("atoms and weights must have equal length")
        if np.any(weights < 0):
            raise ValueError("weights must be non-negative")
        if self.kind not in ("discrete-atoms", "density-on-grid"):
            raise ValueError(f"unknown measure kind {self.kind!r}")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    @classmethod
    def from_density(cls, density, lo, hi, n_cells) -> "QuadratureMeasure":
        """Midpoint discretization of ``density`` on ``[lo, hi]``."""
        edges = np.linspace(lo, hi, n_cells + 1)
        mids = 0.5 * (edges[:-1] + edges[1:])
        return cls(mids, np.asarray(density(mids), dtype=float) * np.diff(edges), "density-on-grid")

    def normalized(self) -> "QuadratureMeasure":
        return QuadratureMeasure(self.atoms, self.weights / self.total_mass, self.kind)

    def tabulate(self, f) -> np.ndarray:
        """Values of a callable (e.g. a :class:`StepFunctionProcess`) on the atoms."""
        return np.asarray(f(self.atoms), dtype=float)


def l2_inner(f, g, nu: QuadratureMeasure) -> float:
    """``sum_k f(x_k) g(x_k) nu({x_k})`` for ``f``, ``g`` tabulated on the atoms."""
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    if f.shape[-1] != nu.atoms.size or g.shape[-1] != nu.atoms.size:
        raise ValueError("tabulation does not match the measure's atoms")
    return (f * g) @ nu.weights


def l2_norm(f, nu: QuadratureMeasure) -> float:
    return np.sqrt(l2_inner(f, f, nu))


def lyapunov_diagnostic(sample: MarkedSample, delta: float) -> float:
    """``sum_i |m_i|^(2+delta)``; should vanish as ``n`` grows."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    return float(np.sum(np.abs(sample.marks) ** (2.0 + delta)))


def variance_process_diagnostic(anchors, cond_variances) -> StepFunctionProcess:
    """Step function ``x -> sum_i 1{anchor_i <= x} cond_var_i``.

    Compare against the limiting variance profile to check that the
    cumulative conditional variances settle down.
    """
    anchors = _as_finite_1d(anchors, "anchors")
    v = _as_finite_1d(cond_variances, "cond_variances")
    if anchors.shape != v.shape:
        raise ValueError("anchors and cond_variances must have equal length")
    if np.any(v < 0):
        raise ValueError("negative conditional variance")
    if anchors.size == 0:
        raise EmptySampleError("empty sample")
    return _step_from_pairs(anchors, v)


def sup_distance(process: StepFunctionProcess, reference, grid=None) -> float:
    """Sup-distance between a step function and a continuous non-decreasing reference.

    For a step function against a continuous monotone function the supremum
    is attained at jump points, approached from either side.
    """
    jp = process.jump_points
    if grid is not None:
        jp = np.union1d(jp, np.asarray(grid, dtype=float))
    ref = np.asarray(reference(jp), dtype=float)
    right = process(jp)
    left = np.concatenate(([0.0], right[:-1]))
    return float(max(np.max(np.abs(right - ref)), np.max(np.abs(left - ref))))

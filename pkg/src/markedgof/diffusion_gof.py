"""Cramer-von Mises type test for the drift of an ergodic diffusion.

Given observations ``X_{t_0}, ..., X_{t_n}`` and a null drift ``S0`` (with the
diffusion coefficient known), the residual-marked process

    U_n(x) = t_n^{-1/2} sum_i 1{X_{t_{i-1}} <= x} (X_{t_i} - X_{t_{i-1}} - S0(X_{t_{i-1}}) dt_i)

is integrated in square against the normalized variance profile
``Psi(dx) / Psi(inf)``, ``Psi(x) = int_{-inf}^x sigma^2 dmu``.  Under the null
the statistic tends to ``int_0^1 B(u)^2 du``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .l2core import MarkedSample, QuadratureMeasure, StepFunctionProcess, build_marked_process, evaluate_marked_sum
from .limitlaws import LimitLawSample
from .results import TestResult, decide
from .sde import DiffusionModel, DiscreteSample, InvariantLaw, PsiFunction, invariant_law, psi_function

N_ATOMS = 2**12
QUANTILE_RANGE = (0.0005, 0.9995)


class HypothesisError(ValueError):
    pass


@dataclass(frozen=True)
class DiffusionHypothesis:
    model: DiffusionModel
    law: InvariantLaw
    psi: PsiFunction
    integration_measure: QuadratureMeasure

    @property
    def S0(self):
        return self.model.drift

    @property
    def sigma(self):
        return self.model.diffusion

    @property
    def psi_total(self) -> float:
        return self.psi.total


def psi_measure(psi: PsiFunction, law: InvariantLaw, n_atoms: int = N_ATOMS,
                quantile_range=QUANTILE_RANGE) -> QuadratureMeasure:
    """Discretize ``Psi(dx) / Psi(inf)`` into ``n_atoms`` atoms.

    Atoms sit at cell midpoints of a uniform grid between two quantiles of
    the invariant law; each carries the Psi-increment of its cell, and the
    two tail masses are lumped onto the extreme atoms so the total is 1.
    """
    lo, hi = (float(law.quantile(q)) for q in quantile_range)
    edges = np.linspace(lo, hi, n_atoms + 1)
    mids = 0.5 * (edges[:-1] + edges[1:])
    cum = psi(edges)
    w = np.diff(cum)
    w[0] += cum[0]
    w[-1] += psi.total - cum[-1]
    return QuadratureMeasure(mids, w / psi.total, "density-on-grid")


def diffusion_hypothesis(model0: DiffusionModel, law: InvariantLaw | None = None,
                         n_atoms: int = N_ATOMS) -> DiffusionHypothesis:
    """Null hypothesis ``S = model0.drift`` with ``model0.diffusion`` known."""
    law = law or invariant_law(model0)
    psi = psi_function(model0, law)
    if not psi.total > 0:
        raise HypothesisError("Psi(inf) must be positive")
    nu = psi_measure(psi, law, n_atoms)
    if abs(nu.total_mass - 1.0) > 1e-8:
        raise HypothesisError("integration measure is not normalized")
    return DiffusionHypothesis(model0, law, psi, nu)


def residual_marks(times, states, S0) -> MarkedSample:
    """Anchors ``X_{t_{i-1}}`` and marks ``(dX_i - S0(X_{t_{i-1}}) dt_i) / sqrt(t_n)``."""
    times = np.asarray(times, dtype=float)
    states = np.asarray(states, dtype=float)
    horizon = times[-1] - times[0]
    if not horizon > 0:
        raise ValueError("zero horizon")
    prev = states[:-1]
    marks = (np.diff(states) - np.asarray(S0(prev), dtype=float) * np.diff(times)) / np.sqrt(horizon)
    return MarkedSample(prev, marks)


def u_process(sample: DiscreteSample, S0) -> StepFunctionProcess:
    if sample.scheme.n < 1:
        raise ValueError("need at least one increment")
    return build_marked_process(residual_marks(sample.scheme.times, sample.states, S0))


def cvm_from_marks(anchors, marks, hyp: DiffusionHypothesis):
    """Statistic from anchors/marks; 2-d inputs give one value per row."""
    nu = hyp.integration_measure
    u = evaluate_marked_sum(anchors, marks, nu.atoms)
    return (u * u) @ nu.weights / hyp.psi_total


def cvm_statistic(sample: DiscreteSample, hyp: DiffusionHypothesis) -> float:
    """``int |U_n|^2 / Psi(inf) dPsi / Psi(inf)`` by atom quadrature."""
    if not hyp.psi_total > 0:
        raise HypothesisError("Psi(inf) must be positive")
    ms = residual_marks(sample.scheme.times, sample.states, hyp.S0)
    return float(cvm_from_marks(ms.anchors, ms.marks, hyp))


def weighted_norm_from_marks(anchors, marks, hyp: DiffusionHypothesis):
    """``int U_n^2 / Psi dPsi / Psi(inf)``, the standardized (AD-type) functional."""
    nu = hyp.integration_measure
    u = evaluate_marked_sum(anchors, marks, nu.atoms)
    psi_at = hyp.psi(nu.atoms)
    return (u * u / psi_at) @ nu.weights


def diffusion_test(sample: DiscreteSample, hyp: DiffusionHypothesis, alpha: float,
                   limit_sample: LimitLawSample, metadata=None) -> TestResult:
    if limit_sample.functional != "CVM":
        raise ValueError("wrong limit law: the diffusion test needs the CVM functional")
    stat = cvm_statistic(sample, hyp)
    meta = {"n": sample.scheme.n, "horizon": sample.scheme.horizon,
            "delta_max": sample.scheme.delta_max, "model": hyp.model.name,
            "null_params": hyp.model.params}
    meta.update(metadata or {})
    return decide(stat, alpha, limit_sample, meta)

"""Derivative identities in the interaction strengths and their verification.

At a constrained minimizer over k-atom measures, the derivative of the
functional in ``beta_p`` collapses to ``beta_p (1 - int q^p dm)``.  This
module computes that closed form, the matching finite difference at a frozen
measure, and a two-sided envelope probe: one-sided difference quotients of
the k-level minimum around ``beta_p``, with slack ``C*y + eps_k/y`` from the
bounded second derivative and the ladder gap, must bracket the closed form.
The bracketing step is ``y = max(sqrt(eps_k), y_min)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .functional import DEFAULT_QUAD, QuadratureConfig, value_from_arrays, _central
from .measure import DiscreteMeasure, moment
from .mixture import MixtureSpec
from .optimizer import LadderReport, OptimizerOptions, minimize_ladder

__all__ = [
    "SubdifferentialProbe",
    "dP_dbeta_analytic",
    "dP_dbeta_fd",
    "subdifferential_probe",
    "overlap_moment_limit",
    "envelope_values",
]

# covers optimizer convergence and quadrature noise in the envelope quotients
NUMERICAL_SLACK = 1e-6


@dataclass(frozen=True)
class SubdifferentialProbe:
    p: int
    beta_value: float
    analytic: float
    lower: float
    upper: float
    eps_k: float
    k: int
    y: float
    curvature_bound: float
    slack: float
    contained: bool
    analytic_alternates: tuple[float, ...] = ()


def dP_dbeta_analytic(spec: MixtureSpec, measure: DiscreteMeasure, p: int) -> float:
    """At-minimizer derivative formula ``beta_p (1 - int q^p dm)``.

    Proved only at constrained minimizers; evaluating elsewhere is allowed
    but the value has no variational meaning there.  A ``p`` absent from the
    model gives 0 and a warning.
    """
    beta = spec.beta(p)
    if p not in spec.orders:
        warnings.warn(
            f"order p={p} not present in the model; at-minimizer formula returns 0",
            stacklevel=2,
        )
    return beta * (1.0 - moment(measure, p))


def dP_dbeta_fd(
    spec: MixtureSpec,
    measure: DiscreteMeasure,
    p: int,
    step: float = 1e-3,
    quad: QuadratureConfig = DEFAULT_QUAD,
) -> float:
    """Richardson-refined central difference of the value in ``beta_p``.

    The measure is frozen; only the layer variances move with ``beta_p``.
    """
    if step <= 0:
        raise ValueError(f"step must be positive, got {step}")
    qs, ms = measure.q_array(), measure.m_array()

    def f(b: float) -> float:
        return value_from_arrays(spec.with_coeff(p, b, allow_degenerate=True), qs, ms, quad)

    return _central(f, spec.beta(p), step)


def _frozen_value(
    spec: MixtureSpec, measure: DiscreteMeasure, p: int, b: float, quad: QuadratureConfig
) -> float:
    return value_from_arrays(
        spec.with_coeff(p, b, allow_degenerate=True), measure.q_array(), measure.m_array(), quad
    )


def _curvature_bound(
    spec: MixtureSpec, measure: DiscreteMeasure, p: int, quad: QuadratureConfig, delta: float
) -> float:
    """Empirical bound on d^2/dbeta_p^2 of the frozen-measure value (5-point stencil)."""
    b0 = spec.beta(p)
    g = [_frozen_value(spec, measure, p, b0 + j * delta, quad) for j in (-2, -1, 0, 1, 2)]
    second = (-g[0] + 16.0 * g[1] - 30.0 * g[2] + 16.0 * g[3] - g[4]) / (12.0 * delta * delta)
    return 1.5 * abs(second) + 1e-6


def subdifferential_probe(
    spec: MixtureSpec,
    p: int,
    ladder: LadderReport,
    quad: QuadratureConfig = DEFAULT_QUAD,
    y_min: float = 1e-4,
) -> SubdifferentialProbe:
    """Bracket the envelope derivative in ``beta_p`` at the ladder's top level.

    Fresh ladders are minimized at ``beta_p +- y``; the one-sided quotients,
    widened by ``C*y + eps_k/y`` plus a fixed numerical slack, must contain
    the at-minimizer closed form.  In the smooth regime ``eps_k`` can be an
    exact 0, so the step is floored at ``y_min``.
    """
    if len(ladder.levels) < 2:
        raise ValueError("ladder must have k_max >= 2 for the probe")
    top = ladder.levels[-1]
    eps_k = float(ladder.eps[-1])
    y = max(math.sqrt(max(eps_k, 0.0)), y_min)
    beta0 = spec.beta(p)

    k_max = top.k
    opts = ladder.opts
    spec_plus = spec.with_coeff(p, beta0 + y, allow_degenerate=True)
    spec_minus = spec.with_coeff(p, beta0 - y, allow_degenerate=True)
    plus = minimize_ladder(spec_plus, k_max, replace(opts, seed=opts.seed + 1), quad)
    minus = minimize_ladder(spec_minus, k_max, replace(opts, seed=opts.seed + 2), quad)

    v0 = top.value
    upper = (plus.value - v0) / y
    lower = (v0 - minus.value) / y
    analytic = beta0 * (1.0 - moment(top.measure, p))
    alternates = tuple(
        beta0 * (1.0 - moment(m, p)) for m in top.alternates
    )

    curv = _curvature_bound(spec, top.measure, p, quad, delta=max(y, 1e-3))
    slack = curv * y + (eps_k / y if y > 0 else 0.0) + NUMERICAL_SLACK
    contained = (lower - slack <= analytic <= upper + slack) and all(
        lower - slack <= a <= upper + slack for a in alternates
    )
    return SubdifferentialProbe(
        p=p,
        beta_value=beta0,
        analytic=analytic,
        lower=lower,
        upper=upper,
        eps_k=eps_k,
        k=k_max,
        y=y,
        curvature_bound=curv,
        slack=slack,
        contained=contained,
        analytic_alternates=alternates,
    )


def overlap_moment_limit(spec: MixtureSpec, ladder: LadderReport, p: int) -> float:
    """Predicted limiting overlap moment: the p-th moment of the deepest minimizer.

    The identification with the Gibbs overlap is guaranteed only for orders
    actually present in the model; for others the number is still returned
    but flagged as a prediction outside that guarantee.
    """
    if spec.beta(p) == 0.0:
        warnings.warn(
            f"beta_{p} = 0: overlap-moment prediction is outside the guaranteed set",
            stacklevel=2,
        )
    return moment(ladder.levels[-1].measure, p)


def envelope_values(
    spec: MixtureSpec,
    p: int,
    betas: np.ndarray,
    k_max: int,
    opts: OptimizerOptions = OptimizerOptions(),
    quad: QuadratureConfig = DEFAULT_QUAD,
) -> np.ndarray:
    """Top ladder values along a grid in ``beta_p`` (for convexity/evenness checks)."""
    vals = []
    for i, b in enumerate(np.asarray(betas, dtype=float)):
        rep = minimize_ladder(
            spec.with_coeff(p, float(b), allow_degenerate=True),
            k_max,
            replace(opts, seed=opts.seed + 1000 + i),
            quad,
        )
        vals.append(rep.value)
    return np.asarray(vals)

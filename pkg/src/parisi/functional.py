"""Evaluation of the replica functional over discrete order-parameter measures.

The value assigned to a model and a k-atom measure is ``E X_0`` minus the
theta-correction, where ``X_k(s) = log cosh(s + h)`` and each layer applies

    X_(l-1)(s) = (1/m_l) log E exp(m_l X_l(s + z_l)),   z_l ~ N(0, v_l),

with layer variances ``v_l = xi'(q_(l+1)) - xi'(q_l)`` taken along
``0 -> q_1 -> ... -> q_k -> 1`` (the bottom increment starts at 0, so a linear
interaction term contributes its variance below the smallest atom).  Every
``X_l`` depends on the Gaussians only through the partial sum ``s``, so each
layer is a one-dimensional function tabulated on a uniform grid in ``s``.

Numerics per layer, on a grid of spacing ``dx``:

* layers the grid resolves (``sigma >= 3 dx``) are integrated by direct
  discrete Gaussian convolution of the tabulated values, which is exact to
  aliasing level ``exp(-pi^2 sigma^2 / dx^2)`` and needs no interpolation;
* narrow layers use Gauss-Hermite nodes with spline interpolation of the
  grid function (shifts are a few grid cells, where both are machine-exact).

Outside the grid every ``X_l`` is extended linearly with slope +-1, matching
the ``log cosh`` asymptote, which each layer preserves.  Log-sum-exp keeps
``exp(m_l X_l)`` stable throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
from scipy.interpolate import CubicSpline

from .measure import DiscreteMeasure
from .mixture import MixtureSpec, theta, xi, xi_prime

__all__ = [
    "QuadratureConfig",
    "FunctionalValue",
    "QuadratureResolutionError",
    "evaluate",
    "value_from_arrays",
    "rs_closed_form",
    "decomposition_f",
    "partial_q",
    "partial_m",
    "LOG2",
]

LOG2 = math.log(2.0)

# recursion exponents at or below this are replaced by the m -> 0 limit E X_l
MASS_FLOOR = 1e-10
# layer variances below this (times max(1, xi'(1))) act as identity layers
VAR_FLOOR = 1e-15
# layers with sigma >= CONV_SIGMA_CELLS * dx integrate by grid convolution
CONV_SIGMA_CELLS = 3.0
# Gaussian kernels and grids are truncated at this many standard deviations
KERNEL_CUTOFF_SIGMAS = 8.6
# below this exponent the convolution layer switches to the cumulant form:
# log E exp(mX) / m evaluated through exp/log loses ~1e-16/m absolutely, which
# turns tiny-mass layers into noise, while the third-order cumulant expansion
# is smooth with O(m^3) truncation
CONV_CUMULANT_MASS = 1e-4
# expm1/log1p centering in the node path is exact until exponents overflow
EXP_ARG_LIMIT = 600.0


class QuadratureResolutionError(RuntimeError):
    """Raised when the refinement error estimate exceeds a caller's ceiling."""


@dataclass(frozen=True)
class QuadratureConfig:
    """Resolution knobs for the layered evaluation.

    ``grid_points`` must be odd so that 0 is a node; ``grid_halfwidth_sigmas``
    scales the grid span ``+-c * sqrt(xi'(1))``.
    """

    hermite_nodes: int = 40
    grid_points: int = 2049
    grid_halfwidth_sigmas: float = 8.0
    interpolation_order: int = 3

    def __post_init__(self) -> None:
        if self.hermite_nodes < 8:
            raise ValueError(f"hermite_nodes must be >= 8, got {self.hermite_nodes}")
        if self.grid_points < 257:
            raise ValueError(f"grid_points must be >= 257, got {self.grid_points}")
        if self.grid_points % 2 == 0:
            raise ValueError(f"grid_points must be odd, got {self.grid_points}")
        if self.grid_halfwidth_sigmas < 6.0:
            raise ValueError(
                f"grid_halfwidth_sigmas must be >= 6, got {self.grid_halfwidth_sigmas}"
            )
        if self.interpolation_order not in (1, 3):
            raise ValueError(f"interpolation_order must be 1 or 3, got {self.interpolation_order}")

    def refined(self) -> "QuadratureConfig":
        """One refinement level: double the nodes, halve the grid spacing."""
        return replace(
            self,
            hermite_nodes=2 * self.hermite_nodes,
            grid_points=2 * self.grid_points - 1,
        )


DEFAULT_QUAD = QuadratureConfig()


@dataclass(frozen=True)
class FunctionalValue:
    """Functional value split into its two terms plus a resolution estimate.

    ``value == e_x0 - correction`` holds exactly by construction;
    ``quad_error_estimate`` is the difference against one refinement level.
    """

    value: float
    e_x0: float
    correction: float
    quad_error_estimate: float


@lru_cache(maxsize=16)
def _gauss_hermite_normal(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights for E f(z), z ~ N(0, 1), from Gauss-Hermite."""
    x, w = np.polynomial.hermite.hermgauss(n)
    return x * math.sqrt(2.0), w / math.sqrt(math.pi)


@lru_cache(maxsize=8)
def _normal_grid(n: int = 4001, span: float = 12.0) -> tuple[np.ndarray, np.ndarray]:
    """Uniform nodes and normalized weights for E f(z), z ~ N(0, 1).

    Trapezoid-type rule; spectrally accurate for the smooth integrands used
    here and stable at any scale, unlike high-order Gauss-Hermite.
    """
    t = np.linspace(-span, span, n)
    w = np.exp(-0.5 * t * t)
    w /= w.sum()
    return t, w


def _log_cosh(u: np.ndarray) -> np.ndarray:
    a = np.abs(u)
    return a + np.log1p(np.exp(-2.0 * a)) - LOG2


def _interp_with_linear_tails(
    s: np.ndarray, values: np.ndarray, queries: np.ndarray, order: int
) -> np.ndarray:
    """Evaluate the tabulated layer function, slope +-1 outside the grid."""
    lo, hi = s[0], s[-1]
    clipped = np.clip(queries, lo, hi)
    if order == 3:
        out = CubicSpline(s, values)(clipped)
    else:
        out = np.interp(clipped, s, values)
    return out + np.maximum(queries - hi, 0.0) + np.maximum(lo - queries, 0.0)


def _layer_variances(spec: MixtureSpec, qs: np.ndarray) -> np.ndarray:
    """Variances v_0..v_k of the layer Gaussians along 0 -> q_1 ... q_k -> 1."""
    ladder = np.concatenate((xi_prime(spec, qs), [xi_prime(spec, 1.0)]))
    return np.diff(np.concatenate(([0.0], ladder)))


def _convolve_layer(
    s: np.ndarray, values: np.ndarray, sigma: float, mass: float
) -> np.ndarray:
    dx = s[1] - s[0]
    radius = int(math.ceil(KERNEL_CUTOFF_SIGMAS * sigma / dx))
    offsets = np.arange(-radius, radius + 1) * dx
    kernel = np.exp(-0.5 * (offsets / sigma) ** 2)
    kernel /= kernel.sum()
    left = values[0] + np.arange(radius, 0, -1) * dx
    right = values[-1] + np.arange(1, radius + 1) * dx
    padded = np.concatenate((left, values, right))
    if mass <= MASS_FLOOR:
        return np.convolve(padded, kernel, mode="valid")
    if mass <= CONV_CUMULANT_MASS:
        # smooth small-exponent form: mean + (m/2) var + (m^2/6) third cumulant
        c1 = np.convolve(padded, kernel, mode="valid")
        c2 = np.convolve(padded * padded, kernel, mode="valid")
        c3 = np.convolve(padded * padded * padded, kernel, mode="valid")
        var = c2 - c1 * c1
        skew = c3 - 3.0 * c2 * c1 + 2.0 * c1**3
        return c1 + 0.5 * mass * var + (mass * mass / 6.0) * skew
    shift = mass * padded.max()
    weighted = np.exp(mass * padded - shift)
    return (shift + np.log(np.convolve(weighted, kernel, mode="valid"))) / mass


def _hermite_layer(
    s: np.ndarray,
    values: np.ndarray,
    sigma: float,
    mass: float,
    nodes: np.ndarray,
    weights: np.ndarray,
    order: int,
) -> np.ndarray:
    args = s[:, None] + sigma * nodes[None, :]
    vals = _interp_with_linear_tails(s, values, args.ravel(), order).reshape(args.shape)
    if mass <= MASS_FLOOR:
        return vals @ weights
    mean = vals @ weights
    centered = mass * (vals - mean[:, None])
    if centered.max() <= EXP_ARG_LIMIT:
        # mean-centered expm1/log1p keeps full precision at every exponent;
        # plain log-sum-exp would lose ~1e-16/mass absolutely for small mass
        return mean + np.log1p(np.expm1(centered) @ weights) / mass
    peak = centered.max(axis=1)
    return mean + (peak + np.log(np.exp(centered - peak[:, None]) @ weights)) / mass


def _expected_x0(
    spec: MixtureSpec, qs: np.ndarray, ms: np.ndarray, quad: QuadratureConfig
) -> float:
    k = len(qs)
    variances = _layer_variances(spec, qs)
    var_floor = VAR_FLOOR * max(1.0, xi_prime(spec, 1.0))
    halfwidth = quad.grid_halfwidth_sigmas * math.sqrt(max(xi_prime(spec, 1.0), 0.0))
    if halfwidth <= 0.0:
        return float(_log_cosh(np.asarray(spec.h)))
    s = np.linspace(-halfwidth, halfwidth, quad.grid_points)
    dx = s[1] - s[0]
    nodes, weights = _gauss_hermite_normal(quad.hermite_nodes)
    values = _log_cosh(s + spec.h)
    for l in range(k, 0, -1):
        v = variances[l]
        if v <= var_floor:
            continue
        sigma = math.sqrt(v)
        if sigma >= CONV_SIGMA_CELLS * dx:
            values = _convolve_layer(s, values, sigma, ms[l - 1])
        else:
            values = _hermite_layer(
                s, values, sigma, ms[l - 1], nodes, weights, quad.interpolation_order
            )
    v0 = variances[0]
    if v0 <= var_floor:
        return float(values[(quad.grid_points - 1) // 2])
    sigma0 = math.sqrt(v0)
    if sigma0 >= CONV_SIGMA_CELLS * dx:
        w = np.exp(-0.5 * (s / sigma0) ** 2)
        w /= w.sum()
        return float(w @ values)
    vals = _interp_with_linear_tails(s, values, sigma0 * nodes, quad.interpolation_order)
    return float(vals @ weights)


def _correction(spec: MixtureSpec, qs: np.ndarray, ms: np.ndarray) -> float:
    ladder = np.concatenate((theta(spec, qs), [theta(spec, 1.0)]))
    return 0.5 * float(np.sum(ms * np.diff(ladder)))


def value_from_arrays(
    spec: MixtureSpec,
    qs: np.ndarray,
    ms: np.ndarray,
    quad: QuadratureConfig = DEFAULT_QUAD,
) -> float:
    """Functional value from raw (nondecreasing) atom/mass arrays.

    Fast path without the refinement estimate; this is the objective used by
    the optimizer and by the finite-difference probes, which must evaluate
    perturbed sequences without canonical merging.
    """
    qs = np.asarray(qs, dtype=float)
    ms = np.asarray(ms, dtype=float)
    return _expected_x0(spec, qs, ms, quad) - _correction(spec, qs, ms)


def evaluate(
    spec: MixtureSpec,
    measure: DiscreteMeasure,
    quad: QuadratureConfig = DEFAULT_QUAD,
    with_entropy: bool = False,
    error_ceiling: float | None = None,
) -> FunctionalValue:
    """Evaluate the functional at ``(spec, measure)`` with an error estimate.

    ``with_entropy`` adds log 2 (the free-entropy constant of the finite
    model) to ``e_x0`` and hence to ``value``; the default follows the bare
    functional.  If ``error_ceiling`` is given and the refinement estimate
    exceeds it, :class:`QuadratureResolutionError` is raised.
    """
    qs, ms = measure.q_array(), measure.m_array()
    e_x0 = _expected_x0(spec, qs, ms, quad)
    corr = _correction(spec, qs, ms)
    fine = quad.refined()
    e_x0_fine = _expected_x0(spec, qs, ms, fine)
    estimate = abs((e_x0 - corr) - (e_x0_fine - corr))
    if error_ceiling is not None and estimate > error_ceiling:
        raise QuadratureResolutionError(
            f"refinement estimate {estimate:.3e} exceeds ceiling {error_ceiling:.3e}; "
            f"increase grid_points/hermite_nodes"
        )
    if with_entropy:
        e_x0 += LOG2
    return FunctionalValue(
        value=e_x0 - corr,
        e_x0=e_x0,
        correction=corr,
        quad_error_estimate=estimate,
    )


def rs_closed_form(
    spec: MixtureSpec, q: float, quad: QuadratureConfig = DEFAULT_QUAD
) -> float:
    """Value at the point mass ``delta_q``, by the one-atom reduction.

    Only a single one-dimensional Gaussian integral remains:

        (xi'(1) - xi'(q))/2 + E log cosh(z sqrt(xi'(q)) + h) - (theta(1) - theta(q))/2

    computed on a dense normal grid, independently of the layered recursion;
    this is the k = 1 oracle.
    """
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"atom location must lie in [0, 1], got {q!r}")
    spq = xi_prime(spec, q)
    sp1 = xi_prime(spec, 1.0)
    n = max(4001, 2 * quad.grid_points - 1)
    t, w = _normal_grid(n if n % 2 == 1 else n + 1)
    if spq > 0.0:
        mid = float(w @ _log_cosh(math.sqrt(spq) * t + spec.h))
    else:
        mid = float(_log_cosh(np.asarray(spec.h)))
    return 0.5 * (sp1 - spq) + mid - 0.5 * (theta(spec, 1.0) - theta(spec, q))


def decomposition_f(
    spec: MixtureSpec, measure: DiscreteMeasure, quad: QuadratureConfig = DEFAULT_QUAD
) -> tuple[float, float]:
    """Rearranged form of the functional and its residual against the direct form.

    Returns ``f = 2 E X_0 - xi'(1)`` together with the residual of

        xi(1)/2 + f/2 + (1/2) sum_l (m_l - m_(l-1)) theta(q_l)

    against ``E X_0 - correction``; the two differ by an exact summation by
    parts, so the residual is floating-point noise.
    """
    qs, ms = measure.q_array(), measure.m_array()
    e_x0 = _expected_x0(spec, qs, ms, quad)
    direct = e_x0 - _correction(spec, qs, ms)
    f = 2.0 * e_x0 - xi_prime(spec, 1.0)
    jumps = np.diff(np.concatenate(([0.0], ms)))
    rearranged = 0.5 * xi(spec, 1.0) + 0.5 * f + 0.5 * float(np.sum(jumps * theta(spec, qs)))
    return f, rearranged - direct


# ---------------------------------------------------------------------------
# finite-difference partials in the atom coordinates


def _central(f, x: float, step: float) -> float:
    d1 = (f(x + step) - f(x - step)) / (2.0 * step)
    d2 = (f(x + 0.5 * step) - f(x - 0.5 * step)) / step
    return (4.0 * d2 - d1) / 3.0


def _one_sided(f, x: float, step: float, sign: float) -> float:
    f0 = f(x)
    d1 = sign * (f(x + sign * step) - f0) / step
    d2 = sign * (f(x + sign * 0.5 * step) - f0) / (0.5 * step)
    return 2.0 * d2 - d1


def _partial(
    spec: MixtureSpec,
    measure: DiscreteMeasure,
    index: int,
    which: str,
    quad: QuadratureConfig,
    step: float,
) -> tuple[float, str]:
    """Partial derivative in one atom coordinate; returns (value, mode).

    mode is "central", "forward" or "backward"; one-sided differences are the
    flagged fallback when the perturbation would leave the admissible set on
    one side.
    """
    qs, ms = measure.q_array(), measure.m_array()
    k = len(qs)
    if not 0 <= index < k:
        raise IndexError(f"atom index {index} out of range for k={k}")
    if which == "q":
        x0 = qs[index]
        lo = qs[index - 1] if index > 0 else 0.0
        hi = qs[index + 1] if index < k - 1 else 1.0

        def f(x):
            pert = qs.copy()
            pert[index] = x
            return value_from_arrays(spec, pert, ms, quad)

    elif which == "m":
        if index == k - 1:
            raise ValueError("the final cumulative mass is pinned to 1; no admissible perturbation")
        x0 = ms[index]
        lo = ms[index - 1] if index > 0 else 0.0
        hi = ms[index + 1]

        def f(x):
            pert = ms.copy()
            pert[index] = x
            return value_from_arrays(spec, qs, pert, quad)

    else:
        raise ValueError(f"unknown coordinate kind {which!r}")

    room_lo = x0 - lo
    room_hi = hi - x0
    if room_lo >= step and room_hi >= step:
        return _central(f, x0, step), "central"
    both = min(room_lo, room_hi)
    if both > 1e-9:
        return _central(f, x0, both), "central"
    if room_hi > 1e-9:
        return _one_sided(f, x0, min(step, room_hi / 2.0), +1.0), "forward"
    if room_lo > 1e-9:
        return _one_sided(f, x0, min(step, room_lo / 2.0), -1.0), "backward"
    raise ValueError(
        f"no admissible perturbation of {which}[{index}] within ({lo}, {hi})"
    )


def partial_q(
    spec: MixtureSpec,
    measure: DiscreteMeasure,
    index: int,
    quad: QuadratureConfig = DEFAULT_QUAD,
    step: float = 1e-4,
) -> float:
    """Numerical partial derivative in the atom location ``q[index]`` (0-based).

    Central differences with Richardson refinement where the ordering permits,
    one-sided otherwise.
    """
    return _partial(spec, measure, index, "q", quad, step)[0]


def partial_m(
    spec: MixtureSpec,
    measure: DiscreteMeasure,
    index: int,
    quad: QuadratureConfig = DEFAULT_QUAD,
    step: float = 1e-4,
) -> float:
    """Numerical partial derivative in the cumulative mass ``m[index]`` (0-based).

    The final mass is pinned to 1 and has no admissible perturbation.
    """
    return _partial(spec, measure, index, "m", quad, step)[0]

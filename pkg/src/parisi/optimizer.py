"""Minimization of the functional over measures with at most k atoms.

The ordering constraints 0 <= q_1 <= ... <= q_k <= 1 and
0 <= m_1 <= ... <= m_k = 1 are removed by a smooth reparameterization:
locations are cumulative squared increments normalized by a squared slack to
1, masses are normalized cumulative squared increments (so m_k = 1 exactly).
Local search is derivative-free simplex descent (multistart), followed by a
bounded coordinatewise polish in the measure coordinates; a projected
finite-difference gradient descent is available as an alternative strategy.

The ladder runs k = 1..k_max, warm-starting each level from the previous
minimizer.  The previous minimizer is itself kept as a candidate, so the
reported values are nonincreasing in k exactly, and the gaps
``eps_k = value(k) - value(k_max)`` are a computable stand-in for the
distance to the unconstrained infimum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from .functional import (
    DEFAULT_QUAD,
    FunctionalValue,
    QuadratureConfig,
    evaluate,
    rs_closed_form,
    value_from_arrays,
    _partial,
)
from .measure import DiscreteMeasure, l1_distance, make_measure, mix
from .mixture import MixtureSpec

__all__ = [
    "OptimizerOptions",
    "MinimizeResult",
    "LadderLevel",
    "LadderReport",
    "StationarityRow",
    "StationarityReport",
    "minimize_k",
    "minimize_ladder",
    "stationarity_certificate",
    "convexity_probe",
]

# candidates within this of the best value count as ties and are reported
TIE_VALUE_TOL = 1e-9
TIE_L1_TOL = 1e-6


@dataclass(frozen=True)
class OptimizerOptions:
    restarts: int = 8
    max_iters: int = 350
    value_tol: float = 1e-10
    stationarity_tol: float = 1e-3
    seed: int = 0
    strategy: str = "nelder-mead"
    polish_rounds: int = 2

    def __post_init__(self) -> None:
        if self.restarts < 1:
            raise ValueError(f"restarts must be >= 1, got {self.restarts}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if not (self.value_tol > 0 and self.stationarity_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.strategy not in ("nelder-mead", "gradient"):
            raise ValueError(f"unknown strategy {self.strategy!r}")


@dataclass(frozen=True)
class StationarityRow:
    kind: str
    index: int
    position: float
    classification: str
    derivative: float
    residual: float


@dataclass(frozen=True)
class StationarityReport:
    rows: tuple[StationarityRow, ...]
    max_interior_residual: float
    max_boundary_violation: float
    tol: float
    passed: bool


@dataclass(frozen=True)
class MinimizeResult:
    measure: DiscreteMeasure
    value: FunctionalValue
    converged: bool
    evaluations: int
    stationarity: StationarityReport
    alternates: tuple[DiscreteMeasure, ...] = ()


@dataclass(frozen=True)
class LadderLevel:
    k: int
    measure: DiscreteMeasure
    value: float
    stationarity_max_residual: float
    converged: bool
    alternates: tuple[DiscreteMeasure, ...] = ()


@dataclass(frozen=True)
class LadderReport:
    spec: MixtureSpec
    levels: tuple[LadderLevel, ...]
    eps: tuple[float, ...]
    seed: int
    opts: OptimizerOptions

    @property
    def k_max(self) -> int:
        return self.levels[-1].k

    @property
    def value(self) -> float:
        return self.levels[-1].value


# ---------------------------------------------------------------------------
# parameterization


def _decode(params: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Map unconstrained parameters to feasible (locations, masses)."""
    a = params[: k + 1] ** 2
    asum = np.cumsum(a)
    qs = asum[:k] / asum[-1] if asum[-1] > 0.0 else np.zeros(k)
    b = params[k + 1 :] ** 2
    bsum = np.cumsum(b)
    ms = bsum / bsum[-1] if bsum[-1] > 0.0 else np.arange(1, k + 1) / k
    return qs, ms


def _encode(qs: np.ndarray, ms: np.ndarray) -> np.ndarray:
    qs = np.asarray(qs, dtype=float)
    ms = np.asarray(ms, dtype=float)
    a_sq = np.diff(np.concatenate(([0.0], qs, [1.0])))
    b_sq = np.diff(np.concatenate(([0.0], ms)))
    return np.concatenate((np.sqrt(np.clip(a_sq, 0.0, None)), np.sqrt(np.clip(b_sq, 0.0, None))))


def _embed_to_k(measure: DiscreteMeasure, k: int, spread: bool) -> tuple[np.ndarray, np.ndarray]:
    """Represent a measure with <= k atoms as a k-atom sequence.

    ``spread=False`` splits the largest jump in place (exactly value
    preserving); ``spread=True`` inserts zero-jump atoms at midpoints of the
    largest location gaps, which gives the local search room to move.
    """
    qs = list(measure.q)
    ms = list(measure.m)
    while len(qs) < k:
        if spread:
            gaps = np.diff(np.concatenate(([0.0], qs, [1.0])))
            j = int(np.argmax(gaps))
            edges = np.concatenate(([0.0], qs, [1.0]))
            q_new = 0.5 * (edges[j] + edges[j + 1])
            m_new = ms[j - 1] if j > 0 else 0.0
            qs.insert(j, q_new)
            ms.insert(j, m_new)
        else:
            jumps = np.diff(np.concatenate(([0.0], ms)))
            j = int(np.argmax(jumps))
            prev = ms[j - 1] if j > 0 else 0.0
            qs.insert(j, qs[j])
            ms.insert(j, prev + 0.5 * (ms[j] - prev))
    return np.asarray(qs), np.asarray(ms)


def _tidy(qs: np.ndarray, ms: np.ndarray) -> DiscreteMeasure:
    """Canonical measure with search debris removed.

    Atoms within 1e-8 in location are merged and jumps below 1e-10 dropped;
    locations within 1e-9 of the endpoints snap to them.  The value moves by
    at most the Lipschitz constant times the (tiny) l1 displacement, and the
    tidied measure only wins the candidate comparison on value.
    """
    qs = qs.copy()
    qs[qs < 1e-9] = 0.0
    qs[qs > 1.0 - 1e-9] = 1.0
    out_q: list[float] = []
    out_m: list[float] = []
    for ql, ml in zip(qs, ms):
        if out_q and ql - out_q[-1] <= 1e-8:
            out_m[-1] = ml
        else:
            out_q.append(float(ql))
            out_m.append(float(ml))
    keep_q: list[float] = []
    keep_m: list[float] = []
    prev = 0.0
    for ql, ml in zip(out_q, out_m):
        if ml - prev > 1e-10:
            keep_q.append(ql)
            keep_m.append(ml)
            prev = ml
    if not keep_q:
        keep_q, keep_m = [out_q[-1]], [1.0]
    keep_m[-1] = 1.0
    return make_measure(keep_q, keep_m)


def _dirac_start(q_best: float, k: int) -> tuple[np.ndarray, np.ndarray]:
    if k == 1:
        return np.array([q_best]), np.array([1.0])
    qs = np.clip(q_best + 0.05 * np.linspace(-1.0, 1.0, k), 0.0, 1.0)
    qs.sort()
    ms = np.arange(1, k + 1) / k
    return qs, ms


def _two_atom_scan(
    spec: MixtureSpec, q_dirac: float, quad: QuadratureConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Best coarse two-atom measure anchored at the Dirac optimum or at 0.

    Discontinuous one-step-RSB optima (sharp onset models) live in a corner
    of the (locations, mass) box that neither Dirac nor random starts reach
    reliably; a cheap grid scan finds the basin.
    """
    best = (math.inf, np.array([q_dirac]), np.array([1.0]))
    anchors = sorted({0.0, round(q_dirac, 12)})
    for lo in anchors:
        for hi in np.linspace(max(lo + 0.05, 0.1), 0.98, 19):
            for m1 in np.linspace(0.05, 0.95, 13):
                qs = np.array([lo, hi])
                ms = np.array([m1, 1.0])
                v = value_from_arrays(spec, qs, ms, quad)
                if v < best[0]:
                    best = (v, qs, ms)
    return best[1], best[2]


# ---------------------------------------------------------------------------
# local search


def _nelder_mead(objective, params0: np.ndarray, opts: OptimizerOptions):
    # the simplex only needs to land in the right basin; the coordinatewise
    # polish afterwards does the precision work
    return minimize(
        objective,
        params0,
        method="Nelder-Mead",
        options={
            "maxiter": opts.max_iters,
            "maxfev": 2 * opts.max_iters,
            "xatol": 1e-6,
            "fatol": opts.value_tol,
            "adaptive": True,
        },
    )


def _projected_gradient(objective, params0: np.ndarray, opts: OptimizerOptions):
    """Finite-difference gradient descent with backtracking, in parameter space."""
    x = params0.copy()
    fx = objective(x)
    nfev = 1
    fd = 1e-6
    for _ in range(opts.max_iters):
        grad = np.zeros_like(x)
        for i in range(len(x)):
            e = np.zeros_like(x)
            e[i] = fd
            grad[i] = (objective(x + e) - objective(x - e)) / (2.0 * fd)
            nfev += 2
        norm = float(np.linalg.norm(grad))
        if norm < 1e-12:
            break
        t = 1.0 / max(1.0, norm)
        improved = False
        while t > 1e-14:
            cand = x - t * grad
            fc = objective(cand)
            nfev += 1
            if fc < fx - 1e-15:
                x, fx, improved = cand, fc, True
                break
            t *= 0.5
        if not improved or abs(fx) * 0 + t * norm < opts.value_tol:
            break

    class _Res:
        pass

    res = _Res()
    res.x, res.fun, res.nfev, res.success = x, fx, nfev, True
    return res


def _polish(
    spec: MixtureSpec,
    qs: np.ndarray,
    ms: np.ndarray,
    quad: QuadratureConfig,
    rounds: int,
) -> tuple[np.ndarray, np.ndarray, float, int]:
    """Bounded coordinatewise refinement in the measure coordinates."""
    qs = qs.copy()
    ms = ms.copy()
    best = value_from_arrays(spec, qs, ms, quad)
    nfev = 1
    k = len(qs)
    for _ in range(max(rounds, 0)):
        improved = False
        for kind, i in [("q", i) for i in range(k)] + [("m", i) for i in range(k - 1)]:
            if kind == "q":
                lo = qs[i - 1] if i > 0 else 0.0
                hi = qs[i + 1] if i < k - 1 else 1.0
            else:
                lo = ms[i - 1] if i > 0 else 0.0
                hi = ms[i + 1]
            if hi - lo <= 1e-12:
                continue

            def f(x, kind=kind, i=i):
                if kind == "q":
                    t = qs.copy()
                    t[i] = x
                    return value_from_arrays(spec, t, ms, quad)
                t = ms.copy()
                t[i] = x
                return value_from_arrays(spec, qs, t, quad)

            res = minimize_scalar(f, bounds=(lo, hi), method="bounded", options={"xatol": 1e-9})
            nfev += int(res.nfev) + 2
            # bounded search is slow to commit to an endpoint; probe them directly
            trials = [(float(res.fun), float(res.x)), (f(lo), lo), (f(hi), hi)]
            trial_val, trial_x = min(trials)
            if trial_val < best - 1e-16:
                best = trial_val
                if kind == "q":
                    qs[i] = trial_x
                else:
                    ms[i] = trial_x
                improved = True
        if not improved:
            break
    return qs, ms, best, nfev


def minimize_k(
    spec: MixtureSpec,
    k: int,
    opts: OptimizerOptions = OptimizerOptions(),
    quad: QuadratureConfig = DEFAULT_QUAD,
    warm_start: DiscreteMeasure | None = None,
) -> MinimizeResult:
    """Best measure with at most ``k`` atoms found over multistart local search.

    Starts always include the best point mass from a coarse scan (so the
    result never loses to a Dirac measure) and, when given, the previous
    ladder level; remaining restarts are seeded random feasible draws.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    search = _nelder_mead if opts.strategy == "nelder-mead" else _projected_gradient

    def objective(params: np.ndarray) -> float:
        qs, ms = _decode(params, k)
        return value_from_arrays(spec, qs, ms, quad)

    grid = np.linspace(0.0, 1.0, 201)
    q_dirac = float(grid[int(np.argmin([rs_closed_form(spec, q, quad) for q in grid]))])
    starts: list[tuple[str, np.ndarray, np.ndarray]] = []
    starts.append(("dirac", *_dirac_start(q_dirac, k)))
    if k >= 2:
        pair_q, pair_m = _two_atom_scan(spec, q_dirac, quad)
        pair = make_measure(pair_q, pair_m)
        starts.append(("pair", *_embed_to_k(pair, k, spread=True)))
    if warm_start is not None and warm_start.k <= k:
        starts.append(("warm-split", *_embed_to_k(warm_start, k, spread=False)))
        if warm_start.k < k:
            starts.append(("warm-gap", *_embed_to_k(warm_start, k, spread=True)))
    ridx = 0
    while len(starts) < opts.restarts:
        rng = np.random.default_rng([opts.seed, k, ridx])
        qs = np.sort(rng.uniform(0.0, 1.0, k))
        ms = np.cumsum(rng.uniform(0.1, 1.0, k))
        ms /= ms[-1]
        starts.append((f"random-{ridx}", qs, ms))
        ridx += 1

    nfev = 0
    best_params = None
    best_val = math.inf
    exhausted = False
    stale = 0
    finals: list[tuple[float, np.ndarray, np.ndarray]] = []
    run_starts = starts[: max(opts.restarts, len(starts))]
    for idx, (_, qs0, ms0) in enumerate(run_starts):
        res = search(objective, _encode(qs0, ms0), opts)
        nfev += int(res.nfev)
        qs_f, ms_f = _decode(np.asarray(res.x, dtype=float), k)
        finals.append((float(res.fun), qs_f, ms_f))
        if res.fun < best_val - 1e-12:
            stale = 0
        else:
            stale += 1
        if res.fun < best_val:
            best_val = float(res.fun)
            best_params = (qs_f, ms_f)
            exhausted = not bool(getattr(res, "success", True))
        # remaining restarts add nothing once several in a row land on the
        # same value; the sequence of starts is fixed, so this stays
        # deterministic
        if idx + 1 >= max(3, len(run_starts) // 2) and stale >= 2:
            break

    # quasi-Newton finisher in parameter space: the squared increments make
    # every ordering boundary an interior stationary point, so smooth descent
    # drives the first-order residuals to quadrature noise
    qs_b, ms_b = best_params
    fin = minimize(
        objective,
        _encode(qs_b, ms_b),
        method="BFGS",
        options={"gtol": 1e-9, "maxiter": 120, "xrtol": 1e-12},
    )
    nfev += int(fin.nfev)
    if fin.fun <= best_val:
        best_val = float(fin.fun)
        qs_b, ms_b = _decode(np.asarray(fin.x, dtype=float), k)
    qs_b, ms_b, val_b, extra = _polish(spec, qs_b, ms_b, quad, opts.polish_rounds)
    nfev += extra

    # candidate set: polished winner (raw and tidied), the warm start itself,
    # the best Dirac; comparing the warm start directly makes the ladder
    # exactly monotone.  Values are binned at 1e-10 so equal-value ties break
    # toward fewer atoms, then the lexicographically smallest atom vector.
    candidates: list[DiscreteMeasure] = [make_measure(qs_b, ms_b)]
    candidates.append(_tidy(qs_b, ms_b))
    if warm_start is not None:
        candidates.append(warm_start)
    candidates.append(make_measure([q_dirac], [1.0]))

    scored = []
    for cand in candidates:
        v = value_from_arrays(spec, cand.q_array(), cand.m_array(), quad)
        scored.append((round(v, 10), cand.k, cand.q, cand.m, v, cand))
        nfev += 1
    scored.sort(key=lambda t: t[:4])
    win_val, winner = scored[0][4], scored[0][5]

    alternates = []
    for v, qf, mf in finals:
        if v <= win_val + TIE_VALUE_TOL:
            cand = make_measure(qf, mf)
            if l1_distance(cand, winner) > TIE_L1_TOL and all(
                l1_distance(cand, a) > TIE_L1_TOL for a in alternates
            ):
                alternates.append(cand)

    cert = stationarity_certificate(spec, winner, quad, opts.stationarity_tol)
    fv = evaluate(spec, winner, quad)
    converged = cert.passed or not exhausted
    return MinimizeResult(
        measure=winner,
        value=fv,
        converged=converged,
        evaluations=nfev,
        stationarity=cert,
        alternates=tuple(alternates),
    )


def minimize_ladder(
    spec: MixtureSpec,
    k_max: int,
    opts: OptimizerOptions = OptimizerOptions(),
    quad: QuadratureConfig = DEFAULT_QUAD,
) -> LadderReport:
    """Run :func:`minimize_k` for k = 1..k_max with warm starts.

    Values are nonincreasing in k by construction; ``eps`` holds the gaps
    against the deepest level.
    """
    if k_max < 1:
        raise ValueError(f"k_max must be >= 1, got {k_max}")
    levels: list[LadderLevel] = []
    warm = None
    for k in range(1, k_max + 1):
        res = minimize_k(spec, k, opts, quad, warm_start=warm)
        value = value_from_arrays(spec, res.measure.q_array(), res.measure.m_array(), quad)
        if levels and value > levels[-1].value:
            # the previous minimizer is admissible at level k; never report worse
            prev = levels[-1]
            level = replace(prev, k=k)
        else:
            resid = max(
                res.stationarity.max_interior_residual, res.stationarity.max_boundary_violation
            )
            level = LadderLevel(
                k=k,
                measure=res.measure,
                value=value,
                stationarity_max_residual=resid,
                converged=res.converged,
                alternates=res.alternates,
            )
        levels.append(level)
        warm = level.measure
    final = levels[-1].value
    eps = tuple(level.value - final for level in levels)
    return LadderReport(spec=spec, levels=tuple(levels), eps=eps, seed=opts.seed, opts=opts)


def stationarity_certificate(
    spec: MixtureSpec,
    measure: DiscreteMeasure,
    quad: QuadratureConfig = DEFAULT_QUAD,
    tol: float = 1e-3,
    step: float = 1e-4,
) -> StationarityReport:
    """First-order certificate at ``measure``.

    Interior coordinates must have |partial| <= tol.  Coordinates at a
    constraint boundary must not admit descent into the feasible set: the
    one-sided derivative must have the correct sign within tol, and a short
    geometric ladder of probe points must not find a strictly lower value
    (an unstable point mass is first-order stationary, so the derivative
    alone cannot see the descent).  The final cumulative mass is pinned
    at 1 and is not a free coordinate.
    """
    qs, ms = measure.q_array(), measure.m_array()
    k = len(qs)
    rows: list[StationarityRow] = []
    max_int = 0.0
    max_bnd = 0.0
    coords = [("q", i) for i in range(k)] + [("m", i) for i in range(k - 1)]
    for kind, i in coords:
        if kind == "q":
            x0 = qs[i]
            lo = qs[i - 1] if i > 0 else 0.0
            hi = qs[i + 1] if i < k - 1 else 1.0
        else:
            x0 = ms[i]
            lo = ms[i - 1] if i > 0 else 0.0
            hi = ms[i + 1]
        room_lo, room_hi = x0 - lo, hi - x0
        if room_lo + room_hi < 1e-9:
            # coordinate squeezed between equal bounds: nothing to probe
            rows.append(
                StationarityRow(
                    kind=kind,
                    index=i,
                    position=float(x0),
                    classification="pinned",
                    derivative=0.0,
                    residual=0.0,
                )
            )
            continue
        if room_lo >= step and room_hi >= step:
            classification = "interior"
        elif room_lo <= room_hi:
            classification = "lower"
        else:
            classification = "upper"
        deriv, _ = _partial(spec, measure, i, kind, quad, step)
        if classification == "interior":
            residual = abs(deriv)
            max_int = max(max_int, residual)
        else:
            sign = +1.0 if classification == "lower" else -1.0
            residual = max(0.0, -sign * deriv)
            residual = max(
                residual, _descent_rate(spec, qs, ms, kind, i, x0, sign, room_hi if sign > 0 else room_lo, step, quad)
            )
            max_bnd = max(max_bnd, residual)
        rows.append(
            StationarityRow(
                kind=kind,
                index=i,
                position=float(x0),
                classification=classification,
                derivative=float(deriv),
                residual=float(residual),
            )
        )
    passed = max_int <= tol and max_bnd <= tol
    return StationarityReport(
        rows=tuple(rows),
        max_interior_residual=max_int,
        max_boundary_violation=max_bnd,
        tol=tol,
        passed=passed,
    )


def _descent_rate(
    spec: MixtureSpec,
    qs: np.ndarray,
    ms: np.ndarray,
    kind: str,
    i: int,
    x0: float,
    sign: float,
    room: float,
    step: float,
    quad: QuadratureConfig,
) -> float:
    """Largest observed descent rate along admissible probes of growing length."""

    def f(x: float) -> float:
        if kind == "q":
            t = qs.copy()
            t[i] = x
            return value_from_arrays(spec, t, ms, quad)
        t = ms.copy()
        t[i] = x
        return value_from_arrays(spec, qs, t, quad)

    f0 = f(x0)
    rate = 0.0
    for factor in (1.0, 10.0, 100.0, 1000.0):
        t = min(step * factor, room)
        if t <= 0.0:
            break
        drop = f0 - f(x0 + sign * t)
        if drop > 1e-11:
            rate = max(rate, drop / t)
        if t >= room:
            break
    return rate


def convexity_probe(
    spec: MixtureSpec,
    m1: DiscreteMeasure,
    m2: DiscreteMeasure,
    quad: QuadratureConfig = DEFAULT_QUAD,
    n_lambdas: int = 9,
) -> dict:
    """Diagnostic midpoint-convexity scan along the segment from m1 to m2.

    Convexity of the functional in the measure is conjectural, so this only
    reports violations; nothing downstream asserts on it.
    """
    lams = np.linspace(0.0, 1.0, n_lambdas)
    vals = []
    for lam in lams:
        mm = mix(m1, m2, float(lam))
        vals.append(value_from_arrays(spec, mm.q_array(), mm.m_array(), quad))
    vals = np.asarray(vals)
    violations = []
    excesses = vals[1:-1] - 0.5 * (vals[:-2] + vals[2:])
    for lam, excess in zip(lams[1:-1], excesses):
        if excess > 1e-10:
            violations.append({"lambda": float(lam), "excess": float(excess)})
    return {
        "lambdas": lams.tolist(),
        "values": vals.tolist(),
        "violations": violations,
        "max_midpoint_excess": float(max(0.0, excesses.max())) if excesses.size else 0.0,
    }

"""Exact finite-size oracle by exhaustive enumeration of all 2^n configurations.

Disorder is a dense i.i.d. standard-Gaussian tensor per interaction order
(all ordered index tuples, diagonals included), drawn from counter-based
Philox streams keyed on (seed, n, p).  Keying on the shape and not on the
strengths lets derivative checks reuse identical disorder at perturbed
couplings (common random numbers).

Per-order energies are computed for every configuration by chunked tensor
contraction; Gibbs overlap moments use the factorization

    <R^p> = n^(-p) sum_(i_1..i_p) ( E_Gibbs[ s_(i_1) ... s_(i_p) ] )^2,

algebraically equal to the exact double sum over configuration pairs.  At
h = 0 with only even orders active the odd correlation tensors vanish by the
global spin flip (weights come out bitwise equal), so odd moments are exact
zeros rather than rounded sums.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .mixture import MixtureSpec

__all__ = [
    "ENUMERATION_LIMIT",
    "FiniteModelSample",
    "GibbsSummary",
    "ValueWithError",
    "DisorderAverage",
    "IbpCheck",
    "sample_disorder",
    "interaction_energies",
    "hamiltonian_values",
    "log_partition",
    "gibbs_summary",
    "disorder_average",
    "ibp_check",
]

ENUMERATION_LIMIT = 20
_CHUNK_BUDGET = 1 << 23  # floats in flight per contraction chunk


@dataclass(frozen=True, eq=False)
class FiniteModelSample:
    n: int
    spec: MixtureSpec
    seed: int
    disorder: dict[int, np.ndarray]


@dataclass(frozen=True)
class GibbsSummary:
    log_z_over_n: float
    overlap_moments: dict[int, float]
    overlap_mean: float


@dataclass(frozen=True)
class ValueWithError:
    mean: float
    stderr: float


@dataclass(frozen=True)
class DisorderAverage:
    n: int
    samples: int
    f_n: ValueWithError
    overlap_moments: dict[int, ValueWithError]
    overlap_mean: ValueWithError
    overlap_mean_variance: ValueWithError


@dataclass(frozen=True)
class IbpCheck:
    p: int
    n: int
    samples: int
    step: float
    fd: float
    identity: float
    diff: float
    stderr: float
    passed: bool


def _stream(seed: int, n: int, p: int) -> np.random.Generator:
    key = np.array(
        [np.uint64(seed & 0xFFFFFFFFFFFFFFFF), (np.uint64(n) << np.uint64(32)) | np.uint64(p)],
        dtype=np.uint64,
    )
    return np.random.Generator(np.random.Philox(key=key))


def sample_disorder(spec: MixtureSpec, n: int, seed: int) -> FiniteModelSample:
    """Draw the Gaussian disorder tensors for every order present in the model."""
    if not 1 <= n <= ENUMERATION_LIMIT:
        raise ValueError(f"n must be in [1, {ENUMERATION_LIMIT}] for exact enumeration, got {n}")
    disorder = {
        p: _stream(seed, n, p).standard_normal(size=(n,) * p) for p in spec.orders
    }
    return FiniteModelSample(n=n, spec=spec, seed=seed, disorder=disorder)


def _config_chunk(n: int, start: int, stop: int) -> np.ndarray:
    codes = np.arange(start, stop, dtype=np.int64)
    bits = (codes[:, None] >> np.arange(n)) & 1
    return 1.0 - 2.0 * bits.astype(np.float64)


def _contract(tensor: np.ndarray, spins: np.ndarray) -> np.ndarray:
    """sum over all index tuples of tensor * prod of spins, per configuration row."""
    p = tensor.ndim
    n = spins.shape[1]
    out = spins @ tensor.reshape(n, -1)
    for _ in range(p - 1):
        out = out.reshape(spins.shape[0], n, -1)
        out = np.einsum("cn,cnk->ck", spins, out)
    return out.reshape(-1)


def _chunk_size(n: int, p: int) -> int:
    return int(max(64, min(1 << n, _CHUNK_BUDGET // max(1, n ** max(p - 1, 1)))))


def interaction_energies(sample: FiniteModelSample) -> dict[int, np.ndarray]:
    """Per-order energies H_(n,p) for all 2^n configurations, in code order."""
    n = sample.n
    total = 1 << n
    out: dict[int, np.ndarray] = {}
    for p, g in sorted(sample.disorder.items()):
        scale = n ** (-(p - 1) / 2.0)
        vec = np.empty(total)
        chunk = _chunk_size(n, p)
        for start in range(0, total, chunk):
            spins = _config_chunk(n, start, min(start + chunk, total))
            vec[start : start + spins.shape[0]] = scale * _contract(g, spins)
        out[p] = vec
    return out


def hamiltonian_values(sample: FiniteModelSample, spins: np.ndarray) -> np.ndarray:
    """Interaction Hamiltonian (no field term) on explicit +-1 configuration rows."""
    spins = np.asarray(spins, dtype=np.float64)
    if spins.ndim == 1:
        spins = spins[None, :]
    if spins.shape[1] != sample.n:
        raise ValueError(f"configurations must have {sample.n} spins, got {spins.shape[1]}")
    out = np.zeros(spins.shape[0])
    for p, g in sample.disorder.items():
        scale = sample.n ** (-(p - 1) / 2.0)
        out += sample.spec.beta(p) * scale * _contract(g, spins)
    return out


def _total_energies(
    sample: FiniteModelSample,
    energies: dict[int, np.ndarray],
    spec: MixtureSpec,
) -> np.ndarray:
    n = sample.n
    total = 1 << n
    missing = [p for p in spec.orders if spec.beta(p) != 0.0 and p not in energies]
    if missing:
        raise ValueError(
            f"disorder was not sampled for orders {missing}; draw the sample from a "
            "model that declares them"
        )
    e = np.zeros(total)
    for p, vec in energies.items():
        beta = spec.beta(p)
        if beta != 0.0:
            e += beta * vec
    if spec.h != 0.0:
        mags = np.empty(total)
        chunk = _chunk_size(n, 2)
        for start in range(0, total, chunk):
            spins = _config_chunk(n, start, min(start + chunk, total))
            mags[start : start + spins.shape[0]] = spins.sum(axis=1)
        e += spec.h * mags
    return e


def _log_sum_exp(e: np.ndarray) -> float:
    peak = float(e.max())
    return peak + math.log(float(np.exp(e - peak).sum()))


def log_partition(
    sample: FiniteModelSample,
    spec: Optional[MixtureSpec] = None,
    energies: Optional[dict[int, np.ndarray]] = None,
) -> float:
    """log of the partition sum, with optional strength overrides on the same disorder."""
    spec = sample.spec if spec is None else spec
    if energies is None:
        energies = interaction_energies(sample)
    return _log_sum_exp(_total_energies(sample, energies, spec))


def _khatri_power(spins: np.ndarray, r: int) -> np.ndarray:
    out = spins
    for _ in range(r - 1):
        out = (out[:, :, None] * spins[:, None, :]).reshape(spins.shape[0], -1)
    return out


def _correlation_sq(n: int, weights: np.ndarray, p: int) -> float:
    """||T_p||^2 where T_p[i_1..i_p] = sum_c w_c s_(i_1) .. s_(i_p)."""
    a = (p + 1) // 2
    b = p - a
    tensor = np.zeros((n**a, max(n**b, 1)))
    total = weights.shape[0]
    chunk = _chunk_size(n, max(p, 2))
    for start in range(0, total, chunk):
        spins = _config_chunk(n, start, min(start + chunk, total))
        w = weights[start : start + spins.shape[0]]
        left = _khatri_power(spins, a)
        right = _khatri_power(spins, b) if b >= 1 else np.ones((spins.shape[0], 1))
        tensor += (left * w[:, None]).T @ right
    return float(np.sum(tensor * tensor))


def gibbs_summary(
    sample: FiniteModelSample,
    moment_ps: Sequence[int],
    spec: Optional[MixtureSpec] = None,
    energies: Optional[dict[int, np.ndarray]] = None,
) -> GibbsSummary:
    """Exact Gibbs log-partition and overlap moments for one disorder draw."""
    spec = sample.spec if spec is None else spec
    if energies is None:
        energies = interaction_energies(sample)
    for p in moment_ps:
        if p < 0 or int(p) != p:
            raise ValueError(f"moment orders must be nonnegative integers, got {p!r}")
    e = _total_energies(sample, energies, spec)
    log_z = _log_sum_exp(e)
    weights = np.exp(e - log_z)
    n = sample.n
    symmetric = spec.h == 0.0 and all(p % 2 == 0 for p, b in spec.coeffs if b != 0.0)
    moments: dict[int, float] = {}
    for p in moment_ps:
        p = int(p)
        if p == 0:
            moments[p] = 1.0
        elif symmetric and p % 2 == 1:
            moments[p] = 0.0
        else:
            moments[p] = _correlation_sq(n, weights, p) / float(n) ** p
    overlap_mean = 0.0 if symmetric else _correlation_sq(n, weights, 1) / n
    return GibbsSummary(
        log_z_over_n=log_z / n, overlap_moments=moments, overlap_mean=overlap_mean
    )


def _sample_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def _summary_task(args) -> GibbsSummary:
    spec, n, moment_ps, seed = args
    sample = sample_disorder(spec, n, seed)
    return gibbs_summary(sample, moment_ps)


def _mean_stderr(values: np.ndarray) -> ValueWithError:
    m = len(values)
    mean = float(np.mean(values))
    stderr = float(np.std(values, ddof=1) / math.sqrt(m)) if m > 1 else 0.0
    return ValueWithError(mean=mean, stderr=stderr)


def _variance_with_stderr(values: np.ndarray) -> ValueWithError:
    m = len(values)
    if m < 2:
        return ValueWithError(mean=0.0, stderr=0.0)
    v = float(np.var(values, ddof=1))
    centered = values - values.mean()
    m4 = float(np.mean(centered**4))
    var_of_var = max(m4 - (m - 3) / (m - 1) * v * v, 0.0) / m
    return ValueWithError(mean=v, stderr=math.sqrt(var_of_var))


def disorder_average(
    spec: MixtureSpec,
    n: int,
    moment_ps: Iterable[int],
    samples: int,
    seed: int,
    jobs: int = 1,
) -> DisorderAverage:
    """Mean and standard error of the free energy and overlap moments over disorder.

    Also reports the sample variance of the per-draw Gibbs mean overlap (the
    self-averaging statistic) with its own standard error.  Sample seeds are
    derived from (seed, index), so the result is independent of ``jobs``.
    """
    if samples < 2:
        raise ValueError(f"need at least 2 disorder samples, got {samples}")
    ps = sorted(set(int(p) for p in moment_ps))
    tasks = [(spec, n, ps, _sample_seed(seed, i)) for i in range(samples)]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_summary_task, tasks))
    else:
        results = [_summary_task(t) for t in tasks]
    f_vals = np.array([r.log_z_over_n for r in results])
    r_means = np.array([r.overlap_mean for r in results])
    return DisorderAverage(
        n=n,
        samples=samples,
        f_n=_mean_stderr(f_vals),
        overlap_moments={
            p: _mean_stderr(np.array([r.overlap_moments[p] for r in results])) for p in ps
        },
        overlap_mean=_mean_stderr(r_means),
        overlap_mean_variance=_variance_with_stderr(r_means),
    )


def _ibp_task(args) -> tuple[float, float]:
    spec, n, p, step, seed = args
    spec_s = spec if p in spec.orders else spec.with_coeff(p, 0.0)
    sample = sample_disorder(spec_s, n, seed)
    energies = interaction_energies(sample)
    beta = spec_s.beta(p)
    log_plus = log_partition(sample, spec_s.with_coeff(p, beta + step, allow_degenerate=True), energies)
    log_minus = log_partition(sample, spec_s.with_coeff(p, beta - step, allow_degenerate=True), energies)
    fd = (log_plus - log_minus) / (2.0 * step * n)
    summary = gibbs_summary(sample, [p], spec_s, energies)
    return fd, summary.overlap_moments[p]


def ibp_check(
    spec: MixtureSpec,
    n: int,
    p: int,
    samples: int = 400,
    step: float = 1e-3,
    seed: int = 0,
    jobs: int = 1,
) -> IbpCheck:
    """Gaussian integration by parts at finite n, on common disorder.

    Compares the central finite difference of the disorder-averaged free
    energy in ``beta_p`` against ``beta_p (1 - E<R^p>)``; both sides use the
    same disorder draws, so only Monte Carlo and finite-difference error
    remain in the gap.
    """
    if step <= 0:
        raise ValueError(f"step must be positive, got {step}")
    tasks = [(spec, n, int(p), float(step), _sample_seed(seed, i)) for i in range(samples)]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_ibp_task, tasks))
    else:
        results = [_ibp_task(t) for t in tasks]
    beta = spec.beta(p)
    fds = np.array([r[0] for r in results])
    moments = np.array([r[1] for r in results])
    fd_mean = float(np.mean(fds))
    identity = beta * (1.0 - float(np.mean(moments)))
    per_sample_diff = fds - beta * (1.0 - moments)
    m = len(per_sample_diff)
    stderr = float(np.std(per_sample_diff, ddof=1) / math.sqrt(m)) if m > 1 else 0.0
    diff = fd_mean - identity
    return IbpCheck(
        p=int(p),
        n=n,
        samples=samples,
        step=float(step),
        fd=fd_mean,
        identity=identity,
        diff=diff,
        stderr=stderr,
        passed=abs(diff) <= 3.0 * stderr + 1e-4,
    )

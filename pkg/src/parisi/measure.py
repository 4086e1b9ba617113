"""Discrete order-parameter measures: step c.d.f.s on [0, 1] with finitely many atoms.

A measure with k atoms is stored as atom locations ``q_1 <= ... <= q_k`` and
cumulative masses ``m_1 <= ... <= m_k = 1``; the c.d.f. is the
right-continuous step function jumping by ``m_l - m_(l-1)`` at ``q_l``.
Canonical measures (from :func:`make_measure`) have strictly increasing
locations and masses.  Light validation in the constructor still admits
duplicate locations and zero jumps, which optimizer iterates and
finite-difference probes pass through deliberately.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

__all__ = [
    "DiscreteMeasure",
    "make_measure",
    "dirac",
    "moment",
    "l1_distance",
    "cdf_eval",
    "mix",
]

MASS_TOL = 1e-12
MERGE_TOL = 1e-12


@dataclass(frozen=True)
class DiscreteMeasure:
    q: tuple[float, ...]
    m: tuple[float, ...]

    def __post_init__(self) -> None:
        q = tuple(float(v) for v in self.q)
        m = tuple(float(v) for v in self.m)
        if len(q) != len(m) or len(q) == 0:
            raise ValueError("q and m must be non-empty lists of equal length")
        qa, ma = np.asarray(q), np.asarray(m)
        if np.any(qa < 0.0) or np.any(qa > 1.0):
            raise ValueError(f"atom locations must lie in [0, 1], got {q}")
        if np.any(ma < 0.0) or np.any(ma > 1.0 + MASS_TOL):
            raise ValueError(f"cumulative masses must lie in [0, 1], got {m}")
        if np.any(np.diff(qa) < 0.0):
            raise ValueError(f"atom locations must be nondecreasing, got {q}")
        if np.any(np.diff(ma) < 0.0):
            raise ValueError(f"cumulative masses must be nondecreasing, got {m}")
        if abs(m[-1] - 1.0) > MASS_TOL:
            raise ValueError(f"final cumulative mass must be 1, got {m[-1]!r}")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "m", m[:-1] + (1.0,))

    @property
    def k(self) -> int:
        return len(self.q)

    def q_array(self) -> np.ndarray:
        return np.asarray(self.q, dtype=float)

    def m_array(self) -> np.ndarray:
        return np.asarray(self.m, dtype=float)

    def jumps(self) -> np.ndarray:
        """Jump masses ``m_l - m_(l-1)``, one per atom."""
        return np.diff(np.concatenate(([0.0], self.m_array())))

    def is_canonical(self) -> bool:
        q, m = self.q_array(), self.m_array()
        return bool(np.all(np.diff(q) > 0.0) and np.all(np.diff(np.concatenate(([0.0], m))) > 0.0))

    def canonicalize(self) -> "DiscreteMeasure":
        return make_measure(self.q, self.m)

    def to_config(self) -> dict:
        return {"q": list(self.q), "m": list(self.m)}

    @classmethod
    def from_config(cls, cfg: Mapping) -> "DiscreteMeasure":
        unknown = set(cfg) - {"q", "m"}
        if unknown:
            raise ValueError(f"unknown measure config keys: {sorted(unknown)}")
        if "q" not in cfg or "m" not in cfg:
            raise ValueError("measure config requires 'q' and 'm' lists")
        return make_measure(list(cfg["q"]), list(cfg["m"]))

    def to_csv(self) -> str:
        lines = ["q,m"]
        lines += [f"{q:.17g},{m:.17g}" for q, m in zip(self.q, self.m)]
        return "\n".join(lines) + "\n"


def make_measure(qs: Sequence[float], ms: Sequence[float]) -> DiscreteMeasure:
    """Validate and canonicalize a measure from locations and cumulative masses.

    Duplicate locations (within ``MERGE_TOL``) are merged keeping the
    rightmost cumulative mass, zero-mass atoms are dropped, and the final
    cumulative mass is forced to exactly 1.
    """
    raw = DiscreteMeasure(q=tuple(qs), m=tuple(ms))
    q, m = list(raw.q), list(raw.m)
    merged_q: list[float] = []
    merged_m: list[float] = []
    for ql, ml in zip(q, m):
        if merged_q and ql - merged_q[-1] <= MERGE_TOL:
            merged_m[-1] = ml
        else:
            merged_q.append(ql)
            merged_m.append(ml)
    out_q: list[float] = []
    out_m: list[float] = []
    prev = 0.0
    for ql, ml in zip(merged_q, merged_m):
        if ml - prev > 0.0:
            out_q.append(ql)
            out_m.append(ml)
            prev = ml
    if not out_q:
        # all mass collapsed onto one point
        out_q, out_m = [merged_q[-1]], [1.0]
    out_m[-1] = 1.0
    return DiscreteMeasure(q=tuple(out_q), m=tuple(out_m))


def dirac(x: float) -> DiscreteMeasure:
    """Point mass at ``x`` in [0, 1]."""
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"dirac location must lie in [0, 1], got {x!r}")
    return DiscreteMeasure(q=(float(x),), m=(1.0,))


def moment(measure: DiscreteMeasure, p: int) -> float:
    """p-th moment ``sum_l (m_l - m_(l-1)) q_l^p``."""
    if p < 1 or int(p) != p:
        raise ValueError(f"moment order must be a positive integer, got {p!r}")
    return float(np.sum(measure.jumps() * measure.q_array() ** int(p)))


def cdf_eval(measure: DiscreteMeasure, x) -> float | np.ndarray:
    """Right-continuous c.d.f. value m(x) for x in [0, 1]."""
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ValueError(f"cdf argument must lie in [0, 1], got {x!r}")
    vals = np.concatenate(([0.0], measure.m_array()))
    idx = np.searchsorted(measure.q_array(), arr, side="right")
    out = vals[idx]
    return float(out) if np.ndim(x) == 0 else out


def l1_distance(m1: DiscreteMeasure, m2: DiscreteMeasure) -> float:
    """Exact ``int_0^1 |m1(x) - m2(x)| dx`` by merging breakpoints."""
    pts = np.union1d(np.concatenate(([0.0], m1.q_array())), np.concatenate(([0.0], m2.q_array())))
    pts = pts[pts < 1.0]
    ends = np.append(pts[1:], 1.0)
    return float(np.sum(np.abs(cdf_eval(m1, pts) - cdf_eval(m2, pts)) * (ends - pts)))


def mix(m1: DiscreteMeasure, m2: DiscreteMeasure, lam: float) -> DiscreteMeasure:
    """Convex combination ``lam*m1 + (1-lam)*m2`` of the two c.d.f.s."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"mixing weight must lie in [0, 1], got {lam!r}")
    locs = np.union1d(m1.q_array(), m2.q_array())
    cum = lam * np.asarray(cdf_eval(m1, locs)) + (1.0 - lam) * np.asarray(cdf_eval(m2, locs))
    return make_measure(locs.tolist(), cum.tolist())

"""Mixed p-spin model specification and the covariance functions it induces.

A model is a finite set of interaction orders p >= 1 with signed strengths
beta_p, plus a deterministic external field h.  All downstream numerics
consume the model through

    xi(x)    = sum_p beta_p^2 x^p
    theta(x) = x xi'(x) - xi(x)

evaluated on [0, 1].  Only beta_p^2 enters xi, but the sign of beta_p is kept
because derivatives in beta_p are signed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Union

import numpy as np

__all__ = ["MixtureSpec", "make_spec", "xi", "xi_prime", "xi_second", "theta"]

ArrayLike = Union[float, np.ndarray]


@dataclass(frozen=True)
class MixtureSpec:
    """Interaction strengths ``(p, beta_p)`` sorted by ``p``, and field ``h``.

    By default construction rejects degenerate models in which every
    ``beta_p`` with p >= 2 vanishes; set ``allow_degenerate=True`` for
    free-spin test cases.
    """

    coeffs: tuple[tuple[int, float], ...]
    h: float = 0.0
    allow_degenerate: bool = False

    def __post_init__(self) -> None:
        if not self.coeffs:
            raise ValueError("coeffs must contain at least one (p, beta_p) pair")
        norm = []
        seen = set()
        for p, beta in self.coeffs:
            p = int(p)
            beta = float(beta)
            if p < 1:
                raise ValueError(f"interaction order must be >= 1, got {p}")
            if p in seen:
                raise ValueError(f"duplicate interaction order p={p}")
            if not math.isfinite(beta):
                raise ValueError(f"beta_{p} must be finite, got {beta!r}")
            seen.add(p)
            norm.append((p, beta))
        if not math.isfinite(self.h):
            raise ValueError(f"h must be finite, got {self.h!r}")
        norm.sort()
        object.__setattr__(self, "coeffs", tuple(norm))
        object.__setattr__(self, "h", float(self.h))
        if not self.allow_degenerate and not any(p >= 2 and b != 0.0 for p, b in self.coeffs):
            raise ValueError(
                "degenerate model: beta_p must be nonzero for some p >= 2 "
                "(pass allow_degenerate=True to permit it)"
            )

    @property
    def orders(self) -> tuple[int, ...]:
        """Interaction orders present in the model, ascending."""
        return tuple(p for p, _ in self.coeffs)

    def beta(self, p: int) -> float:
        """Strength of the order-p term, 0.0 if the order is absent."""
        for q, b in self.coeffs:
            if q == p:
                return b
        return 0.0

    def with_coeff(self, p: int, value: float, allow_degenerate: bool | None = None) -> "MixtureSpec":
        """Copy of the model with ``beta_p`` replaced (or added) by ``value``."""
        pairs = [(q, b) for q, b in self.coeffs if q != p]
        pairs.append((int(p), float(value)))
        flag = self.allow_degenerate if allow_degenerate is None else allow_degenerate
        return replace(self, coeffs=tuple(sorted(pairs)), allow_degenerate=flag)

    def to_config(self) -> dict:
        cfg: dict = {"coeffs": {str(p): b for p, b in self.coeffs}, "h": self.h}
        if self.allow_degenerate:
            cfg["allow_degenerate"] = True
        return cfg

    @classmethod
    def from_config(cls, cfg: Mapping) -> "MixtureSpec":
        unknown = set(cfg) - {"coeffs", "h", "allow_degenerate"}
        if unknown:
            raise ValueError(f"unknown model config keys: {sorted(unknown)}")
        if "coeffs" not in cfg:
            raise ValueError("model config requires a 'coeffs' mapping")
        coeffs = tuple((int(p), float(b)) for p, b in dict(cfg["coeffs"]).items())
        return cls(
            coeffs=coeffs,
            h=float(cfg.get("h", 0.0)),
            allow_degenerate=bool(cfg.get("allow_degenerate", False)),
        )


def make_spec(
    coeffs: Union[Mapping[int, float], Iterable[tuple[int, float]]],
    h: float = 0.0,
    allow_degenerate: bool = False,
) -> MixtureSpec:
    """Build a :class:`MixtureSpec` from ``{p: beta_p}`` or ``(p, beta_p)`` pairs."""
    if isinstance(coeffs, Mapping):
        pairs = tuple((int(p), float(b)) for p, b in coeffs.items())
    else:
        pairs = tuple((int(p), float(b)) for p, b in coeffs)
    return MixtureSpec(coeffs=pairs, h=float(h), allow_degenerate=allow_degenerate)


def _check_unit_interval(x: ArrayLike, name: str = "x") -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ValueError(f"{name} must lie in [0, 1], got {x!r}")
    return arr


def xi(spec: MixtureSpec, x: ArrayLike) -> ArrayLike:
    """Covariance function ``xi(x) = sum_p beta_p^2 x^p`` on [0, 1]."""
    arr = _check_unit_interval(x)
    out = np.zeros_like(arr)
    for p, b in spec.coeffs:
        out += (b * b) * arr**p
    return float(out) if np.isscalar(x) or np.ndim(x) == 0 else out


def xi_prime(spec: MixtureSpec, x: ArrayLike) -> ArrayLike:
    """First derivative ``xi'(x) = sum_p p beta_p^2 x^(p-1)``."""
    arr = _check_unit_interval(x)
    out = np.zeros_like(arr)
    for p, b in spec.coeffs:
        out += p * (b * b) * (arr ** (p - 1) if p > 1 else np.ones_like(arr))
    return float(out) if np.isscalar(x) or np.ndim(x) == 0 else out


def xi_second(spec: MixtureSpec, x: ArrayLike) -> ArrayLike:
    """Second derivative ``xi''(x) = sum_p p(p-1) beta_p^2 x^(p-2)``."""
    arr = _check_unit_interval(x)
    out = np.zeros_like(arr)
    for p, b in spec.coeffs:
        if p == 1:
            continue
        out += p * (p - 1) * (b * b) * (arr ** (p - 2) if p > 2 else np.ones_like(arr))
    return float(out) if np.isscalar(x) or np.ndim(x) == 0 else out


def theta(spec: MixtureSpec, x: ArrayLike) -> ArrayLike:
    """Correction integrand ``theta(x) = x xi'(x) - xi(x)``, nondecreasing on [0, 1]."""
    arr = _check_unit_interval(x)
    out = arr * xi_prime(spec, arr) - xi(spec, arr)
    return float(out) if np.isscalar(x) or np.ndim(x) == 0 else out

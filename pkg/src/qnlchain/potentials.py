"""Pair potentials with derivatives up to fourth order.

All potentials are used in dimensionless form: they are evaluated directly on
strain values (bond length divided by the reference lattice spacing), so the
lattice-spacing scaling never appears explicitly.

The default Lennard-Jones and Morse potentials are normalized so that the
well minimum sits at r = 1 with depth 1::

    lennard-jones:  phi(r) = r**-12 - 2 r**-6
    morse:          phi(r) = exp(-2a(r-1)) - 2 exp(-a(r-1)),  a = 2
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping

import numpy as np
from scipy.optimize import brentq

MAX_ORDER = 4


class PotentialDomainError(ValueError):
    """Raised when a potential is evaluated at a non-positive radius."""


class UnsupportedOrderError(ValueError):
    """Raised for derivative orders outside 0..4."""


class NoInflectionError(ValueError):
    """Raised when phi'' has no positive-to-negative sign change."""


@dataclass(frozen=True)
class PotentialSpec:
    """A smooth pair potential.

    ``kind`` is one of ``"lennard-jones"``, ``"morse"`` or ``"tabulated"``.
    Tabulated potentials carry a radius grid and explicit derivative tables of
    orders 0..4 (shape ``(5, n)``); between nodes they are evaluated by the
    Taylor polynomial about the nearest node, so the order-m table is exactly
    the derivative of the order-(m-1) evaluation inside each cell.
    """

    kind: str
    parameters: Mapping[str, float] = field(default_factory=dict)
    table_r: np.ndarray | None = field(default=None, repr=False, compare=False)
    table: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __call__(self, r, order=0):
        return evaluate(self, r, order)

    @cached_property
    def inflection_radius(self) -> float:
        return inflection_radius(self)

    @property
    def name(self) -> str:
        if not self.parameters:
            return self.kind
        args = ",".join(f"{k}={v:g}" for k, v in sorted(self.parameters.items()))
        return f"{self.kind}({args})"


def lennard_jones(r_min=1.0, depth=1.0) -> PotentialSpec:
    return PotentialSpec("lennard-jones", {"r_min": float(r_min), "depth": float(depth)})


def morse(a=2.0, r0=1.0, depth=1.0) -> PotentialSpec:
    return PotentialSpec("morse", {"a": float(a), "r0": float(r0), "depth": float(depth)})


def tabulated(r, derivatives) -> PotentialSpec:
    """Build a tabulated potential from a radius grid and derivative tables.

    ``derivatives[m]`` holds the m-th derivative at each node, m = 0..4.
    """
    r = np.asarray(r, dtype=float)
    table = np.asarray(derivatives, dtype=float)
    if r.ndim != 1 or r.size < 2:
        raise ValueError("tabulated potential needs a 1-D radius grid with at least 2 nodes")
    if np.any(r <= 0) or np.any(np.diff(r) <= 0):
        raise ValueError("radius grid must be positive and strictly increasing")
    if table.shape != (MAX_ORDER + 1, r.size):
        raise ValueError(f"derivative table must have shape (5, {r.size}), got {table.shape}")
    r.setflags(write=False)
    table.setflags(write=False)
    return PotentialSpec("tabulated", {}, table_r=r, table=table)


POTENTIALS = {
    "lennard-jones": lennard_jones,
    "morse": morse,
}


def from_name(name: str, **parameters) -> PotentialSpec:
    """Look up a closed-form potential by name (``lennard-jones`` or ``morse``)."""
    key = name.strip().lower().replace("_", "-")
    aliases = {"lj": "lennard-jones", "lennardjones": "lennard-jones"}
    key = aliases.get(key, key)
    try:
        factory = POTENTIALS[key]
    except KeyError:
        raise ValueError(f"unknown potential {name!r}; choose from {sorted(POTENTIALS)}") from None
    return factory(**parameters)


def _falling(n, m):
    # n (n+1) ... (n+m-1), the magnitude of d^m/dr^m r**-n
    out = 1.0
    for i in range(m):
        out *= n + i
    return out


def _lennard_jones(params, r, order):
    r_min = params.get("r_min", 1.0)
    depth = params.get("depth", 1.0)
    x = r / r_min
    sign = -1.0 if order % 2 else 1.0
    value = sign * (_falling(12, order) * x ** (-12 - order)
                    - 2.0 * _falling(6, order) * x ** (-6 - order))
    return depth * value / r_min**order


def _morse(params, r, order):
    a = params.get("a", 2.0)
    r0 = params.get("r0", 1.0)
    depth = params.get("depth", 1.0)
    e = np.exp(-a * (r - r0))
    return depth * ((-2.0 * a) ** order * e * e - 2.0 * (-a) ** order * e)


def _tabulated(p, r, order):
    grid, table = p.table_r, p.table
    if np.any(r < grid[0]) or np.any(r > grid[-1]):
        raise PotentialDomainError(
            f"radius outside tabulated range [{grid[0]:g}, {grid[-1]:g}]")
    idx = np.clip(np.searchsorted(grid, r), 1, grid.size - 1)
    left_closer = (r - grid[idx - 1]) <= (grid[idx] - r)
    node = np.where(left_closer, idx - 1, idx)
    h = r - grid[node]
    out = np.zeros_like(h)
    for n in range(MAX_ORDER - order, -1, -1):
        out = out * h / (n + 1) + table[order + n, node]
    return out


def evaluate(p: PotentialSpec, r, order=0):
    """Return the ``order``-th derivative of the potential at ``r``.

    ``r`` may be a scalar or an array; the result has the same shape.
    """
    if not isinstance(order, (int, np.integer)) or order < 0 or order > MAX_ORDER:
        raise UnsupportedOrderError(f"derivative order must be in 0..{MAX_ORDER}, got {order!r}")
    scalar = np.ndim(r) == 0
    r = np.asarray(r, dtype=float)
    if np.any(~(r > 0)):
        raise PotentialDomainError("potential evaluated at non-positive radius")
    if p.kind == "lennard-jones":
        out = _lennard_jones(p.parameters, r, order)
    elif p.kind == "morse":
        out = _morse(p.parameters, r, order)
    elif p.kind == "tabulated":
        out = _tabulated(p, np.atleast_1d(r), order).reshape(r.shape)
    else:
        raise ValueError(f"unknown potential kind {p.kind!r}")
    return float(out) if scalar else out


def cauchy_born_density(p: PotentialSpec, r, s: int, order=0):
    """Derivative of the Cauchy-Born density sum_{k=1}^s phi(k r).

    By the chain rule this is sum_k k**order * phi^(order)(k r).
    """
    if s < 1:
        raise ValueError("interaction range s must be >= 1")
    total = 0.0
    for k in range(1, s + 1):
        total = total + k**order * evaluate(p, k * np.asarray(r, dtype=float), order)
    return float(total) if np.ndim(r) == 0 else total


def inflection_radius(p: PotentialSpec, rtol=1e-12) -> float:
    """Radius r* where phi'' changes sign from positive to negative.

    The first sign change on a geometric grid over the search range is
    refined by bracketing root finding to relative tolerance ``rtol``.
    """
    if p.kind == "tabulated":
        lo, hi = p.table_r[0], min(p.table_r[-1], 100.0)
    else:
        lo, hi = 1e-2, 100.0
    grid = np.geomspace(lo, hi, 4001)
    curv = evaluate(p, grid, 2)
    change = np.nonzero((curv[:-1] >= 0) & (curv[1:] < 0))[0]
    if change.size == 0:
        raise NoInflectionError(f"phi'' of {p.name} has no sign change in ({lo:g}, {hi:g}]")
    i = change[0]
    a, b = grid[i], grid[i + 1]
    if evaluate(p, a, 2) == 0.0:
        return float(a)
    return float(brentq(lambda x: evaluate(p, x, 2), a, b, xtol=1e-300, rtol=rtol, maxiter=500))


def lennard_jones_inflection(r_min=1.0) -> float:
    """Closed-form inflection radius (13/7)**(1/6) r_min."""
    return (13.0 / 7.0) ** (1.0 / 6.0) * r_min


def morse_inflection(a=2.0, r0=1.0) -> float:
    """Closed-form inflection radius r0 + ln(2)/a."""
    return r0 + math.log(2.0) / a

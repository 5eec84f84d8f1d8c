"""Periodic chain bookkeeping: configuration, fields, differences and norms.

Atoms of one period are labelled by the representative cell
``ell = -N+1, ..., N``.  Arrays store them at positions ``i = ell + N - 1``
(so ``ell = -N+1`` is ``i = 0`` and ``ell = N`` is ``i = 2N-1``); any other
label is first wrapped into the cell with period 2N.  The same bijection is
used for strain fields, where entry ``ell`` holds ``(u_ell - u_{ell-1})/eps``.

A deformation is always carried as the pair (F, u) with ``u`` periodic: the
affine part ``F * eps * ell`` is not periodic and is never stored pointwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ChainConfig:
    """Periodic cell of 2N atoms with atomistic half-width K and range s."""

    N: int
    K: int
    s: int
    F: float = 1.0

    def __post_init__(self):
        if self.N < 4:
            raise ValueError(f"N must be >= 4, got {self.N}")
        if self.s < 1:
            raise ValueError(f"interaction range s must be >= 1, got {self.s}")
        if not 1 < self.K < self.N - self.s + 1:
            raise ValueError(
                f"need 1 < K < N - s + 1, got K={self.K}, N={self.N}, s={self.s}")
        if not self.F > 0:
            raise ValueError(f"deformation gradient F must be positive, got {self.F}")

    @property
    def eps(self) -> float:
        return 1.0 / self.N

    @property
    def size(self) -> int:
        return 2 * self.N

    def indices(self) -> np.ndarray:
        return cell_indices(self.N)

    def storage(self, ell) -> np.ndarray:
        return storage_index(ell, self.N)


def cell_indices(N: int) -> np.ndarray:
    """Labels -N+1 .. N of the representative cell, in storage order."""
    return np.arange(-N + 1, N + 1)


def storage_index(ell, N: int):
    """Array position of label ``ell`` after periodic wrap."""
    return (np.asarray(ell) + N - 1) % (2 * N)


class PeriodicField:
    """A 2N-periodic sequence of reals over the representative cell."""

    __slots__ = ("values", "zero_mean")

    def __init__(self, values, zero_mean=False):
        v = np.array(values, dtype=float)
        if v.ndim != 1 or v.size % 2:
            raise ValueError("a periodic field needs an even number 2N of values")
        if zero_mean:
            tol = v.size * 1e-14 * max(float(np.max(np.abs(v), initial=0.0)), 1e-300)
            if abs(v.sum()) > tol:
                raise ValueError(f"field tagged zero-mean has sum {v.sum():.3e}")
        v.setflags(write=False)
        self.values = v
        self.zero_mean = bool(zero_mean)

    @property
    def N(self) -> int:
        return self.values.size // 2

    @property
    def eps(self) -> float:
        return 2.0 / self.values.size

    def at(self, ell):
        """Value at label ``ell`` with periodic wrap."""
        return self.values[storage_index(ell, self.N)]

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def __len__(self):
        return self.values.size

    def __repr__(self):
        tag = ", zero_mean" if self.zero_mean else ""
        return f"PeriodicField(N={self.N}{tag})"


def center(v) -> np.ndarray:
    """v minus its mean, with a second pass to clear the cancellation residue."""
    v = np.asarray(v, dtype=float)
    v = v - v.mean()
    return v - v.mean()


def _as_array(u) -> np.ndarray:
    arr = np.asarray(u, dtype=float)
    if arr.ndim != 1 or arr.size % 2:
        raise ValueError("expected a periodic field with 2N values")
    return arr


def difference(u, order=1) -> PeriodicField:
    """Backward difference D^(order) u with periodic wrap, eps = 2/len(u).

    (Du)_ell = (u_ell - u_{ell-1}) / eps.  Differences of a periodic field
    always have zero mean, so the result is tagged zero-mean.
    """
    if order not in (1, 2, 3, 4):
        raise ValueError(f"difference order must be in 1..4, got {order!r}")
    v = _as_array(u)
    eps = 2.0 / v.size
    for _ in range(order):
        v = (v - np.roll(v, 1)) / eps
    return PeriodicField(center(v), zero_mean=True)


def forward_difference(u) -> PeriodicField:
    """(u_{ell+1} - u_ell) / eps; the negative adjoint of ``difference``."""
    v = _as_array(u)
    eps = 2.0 / v.size
    return PeriodicField((np.roll(v, -1) - v) / eps)


def integrate(v, zero_mean=True) -> PeriodicField:
    """Inverse of ``difference`` on zero-mean fields.

    Returns the displacement u with Du = v; requires sum(v) == 0 so that the
    cumulative sum closes periodically.
    """
    v = _as_array(v)
    if abs(v.sum()) > 1e-10 * max(1.0, np.abs(v).sum()):
        raise ValueError("strain field must have zero mean to integrate periodically")
    eps = 2.0 / v.size
    u = eps * np.cumsum(v - v.mean())
    if zero_mean:
        u = center(u)
    return PeriodicField(u, zero_mean=zero_mean)


def norm_l2_eps(v, subset=None) -> float:
    """Discrete norm (eps * sum v_ell**2)**0.5, optionally over labels ``subset``."""
    arr = _as_array(v)
    N = arr.size // 2
    eps = 1.0 / N
    if subset is not None:
        sub = np.asarray(subset)
        if sub.size and (sub.min() < -N + 1 or sub.max() > N):
            raise ValueError("subset labels must lie in the representative cell")
        arr = arr[storage_index(sub, N)]
    return float(np.sqrt(eps * np.dot(arr, arr)))


def norm_max(v, subset=None) -> float:
    arr = _as_array(v)
    if subset is not None:
        arr = arr[storage_index(np.asarray(subset), arr.size // 2)]
    return float(np.max(np.abs(arr), initial=0.0))


def inner_product(v, w) -> float:
    """eps * sum v_ell w_ell."""
    a, b = _as_array(v), _as_array(w)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.dot(a, b) * 2.0 / a.size)


def project_zero_mean(u) -> PeriodicField:
    arr = _as_array(u)
    return PeriodicField(center(arr), zero_mean=True)


class UniformDeformation:
    """The affine map ell -> F eps ell of the uniformly strained lattice."""

    def __init__(self, cfg: ChainConfig):
        self.F = cfg.F
        self.eps = cfg.eps
        self.N = cfg.N

    def __call__(self, ell):
        return self.F * self.eps * np.asarray(ell, dtype=float)

    def strain(self) -> np.ndarray:
        return np.full(2 * self.N, self.F)

    def positions(self, u) -> np.ndarray:
        """Positions y = y_F + u over the representative cell."""
        return self(cell_indices(self.N)) + _as_array(u)


def uniform_deformation(cfg: ChainConfig) -> UniformDeformation:
    return UniformDeformation(cfg)


def strains(cfg: ChainConfig, u) -> np.ndarray:
    """Strain field F + (Du)_ell of y = y_F + u."""
    arr = _as_array(u)
    if arr.size != cfg.size:
        raise ValueError(f"field has {arr.size} values, config expects {cfg.size}")
    return cfg.F + (arr - np.roll(arr, 1)) * cfg.N

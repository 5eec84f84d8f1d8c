"""Atomistic, local QC, QCE and quasi-nonlocal (QNL) energies of a periodic chain.

Atomistic, QCE and QNL share one representation.  With strains
``y'_ell = F + (Du)_ell`` and bond sums ``W_k[ell] = y'_ell + ... + y'_{ell+k-1}``
each energy reads::

    E(y) = eps * sum_k ( sum_ell a_k[ell] phi(W_k[ell]) + sum_m b_k[m] phi(k y'_m) )

where ``a_k[ell]`` weights the k-th neighbour bond that starts at strain
``ell`` (it joins atoms ell-1 and ell+k-1) and ``b_k[m]`` weights the
Cauchy-Born replacement ``phi(k y'_m)``.

* atomistic: a = 1, b = 0.
* QNL: a_1 = 1; for k >= 2, a_k = 1 on A_qnl(k) and every bond starting in
  C_qnl(k) is replaced by (1/k) sum_j phi(k y'_{ell+j}).
* QCE: each atom in {-K..K} keeps half of each of its bonds, each other atom
  takes half of the Cauchy-Born density of its two neighbouring strains.

The local QC model lives on a representative-atom grid instead and is
handled separately.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .chain import (ChainConfig, PeriodicField, cell_indices, center, storage_index,
                    strains)
from .potentials import PotentialSpec, cauchy_born_density, evaluate

ADMISSIBLE_STRAIN = 1e-8


class InadmissibleDeformationError(ValueError):
    """Raised when a deformation has (near) non-positive strains."""


class ModelKind(str, enum.Enum):
    ATOMISTIC = "atomistic"
    LOCAL_QC = "local-qc"
    QCE = "qce"
    QNL = "qnl"

    @classmethod
    def parse(cls, value) -> "ModelKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "-")
        aliases = {"a": "atomistic", "localqc": "local-qc", "qcl": "local-qc", "qc": "local-qc"}
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise ValueError(f"unknown model kind {value!r}") from None


# ---------------------------------------------------------------- index sets

@dataclass(frozen=True)
class QnlIndexSets:
    """Label sets of the QNL coupling for neighbour order k = 2..s."""

    N: int
    K: int

    def atomistic(self, k: int) -> np.ndarray:
        """A_qnl(k): bonds with at least one end-or-interior atom in {-K..K}."""
        return np.arange(-self.K - k + 1, self.K + 2)

    def continuum(self, k: int) -> np.ndarray:
        """C_qnl(k): bonds lying entirely in the continuum region."""
        return np.concatenate([np.arange(-self.N + 1, -self.K - k + 1),
                               np.arange(self.K + 2, self.N + 1)])

    def interface(self, k: int) -> np.ndarray:
        return np.concatenate([np.arange(-self.K - k + 1, -self.K),
                               np.arange(self.K + 2, self.K + k + 1)])

    def continuum_tilde(self, k: int) -> np.ndarray:
        return np.union1d(self.continuum(k), self.interface(k))


def qnl_index_sets(cfg: ChainConfig) -> QnlIndexSets:
    return QnlIndexSets(cfg.N, cfg.K)


def _wrap_label(ell, N):
    return (np.asarray(ell) + N - 1) % (2 * N) - N + 1


def interaction_weights(kind: ModelKind, cfg: ChainConfig):
    """Bond weights ``a`` and Cauchy-Born weights ``b``, both shape (s, 2N)."""
    kind = ModelKind.parse(kind)
    n, s = cfg.size, cfg.s
    a = np.zeros((s, n))
    b = np.zeros((s, n))
    if kind is ModelKind.ATOMISTIC:
        a[:] = 1.0
    elif kind is ModelKind.QNL:
        a[0] = 1.0
        sets = qnl_index_sets(cfg)
        for k in range(2, s + 1):
            a[k - 1, storage_index(sets.atomistic(k), cfg.N)] = 1.0
            start = np.zeros(n)
            start[storage_index(sets.continuum(k), cfg.N)] = 1.0
            for j in range(k):
                b[k - 1] += np.roll(start, j) / k
    elif kind is ModelKind.QCE:
        labels = cell_indices(cfg.N)

        def in_atomistic(ell):
            return (np.abs(_wrap_label(ell, cfg.N)) <= cfg.K).astype(float)

        for k in range(1, s + 1):
            # bond starting at strain ell joins atoms ell-1 and ell+k-1
            a[k - 1] = 0.5 * (in_atomistic(labels - 1) + in_atomistic(labels + k - 1))
            b[k - 1] = 0.5 * ((1.0 - in_atomistic(labels)) + (1.0 - in_atomistic(labels - 1)))
    else:
        raise ValueError(f"{kind.value} has no bond-weight representation; use a grid")
    return a, b


def _check_admissible(strain):
    bad = np.nonzero(~(strain > ADMISSIBLE_STRAIN))[0]
    if bad.size:
        raise InadmissibleDeformationError(
            f"{bad.size} strain(s) <= {ADMISSIBLE_STRAIN:g}, first at storage index {bad[0]}")


def bond_sums(strain, s):
    """W[k-1, ell] = strain[ell] + ... + strain[ell+k-1] (periodic)."""
    W = np.empty((s, strain.size))
    W[0] = strain
    for k in range(2, s + 1):
        W[k - 1] = W[k - 2] + np.roll(strain, -(k - 1))
    return W


def _bond_energy(cfg, p, weights, strain):
    a, b = weights
    W = bond_sums(strain, cfg.s)
    total = 0.0
    for k in range(1, cfg.s + 1):
        if a[k - 1].any():
            total += np.dot(a[k - 1], evaluate(p, W[k - 1]))
        if b[k - 1].any():
            total += np.dot(b[k - 1], evaluate(p, k * strain))
    return cfg.eps * total


def _bond_stress(cfg, p, weights, strain):
    # sigma_m with dE = eps * sum_m sigma_m d(y'_m)
    a, b = weights
    W = bond_sums(strain, cfg.s)
    sigma = np.zeros_like(strain)
    for k in range(1, cfg.s + 1):
        if a[k - 1].any():
            t = a[k - 1] * evaluate(p, W[k - 1], 1)
            for j in range(k):
                sigma += np.roll(t, j)
        if b[k - 1].any():
            sigma += k * b[k - 1] * evaluate(p, k * strain, 1)
    return sigma


def _bond_strain_hessian(cfg, p, weights, strain):
    # S with d^2E = eps * dv^T S dv, v the strain perturbation
    a, b = weights
    n = cfg.size
    W = bond_sums(strain, cfg.s)
    rows, cols, data = [], [], []
    start = np.arange(n)
    diag = np.zeros(n)
    for k in range(1, cfg.s + 1):
        if a[k - 1].any():
            c = a[k - 1] * evaluate(p, W[k - 1], 2)
            keep = np.nonzero(c)[0]
            for j1 in range(k):
                for j2 in range(k):
                    rows.append((start[keep] + j1) % n)
                    cols.append((start[keep] + j2) % n)
                    data.append(c[keep])
        if b[k - 1].any():
            diag += k * k * b[k - 1] * evaluate(p, k * strain, 2)
    rows.append(start)
    cols.append(start)
    data.append(diag)
    S = sp.coo_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n, n)).tocsr()
    S.sum_duplicates()
    return S


def difference_matrix(n: int, eps: float) -> sp.csr_matrix:
    """Sparse periodic backward difference, (Du)_i = (u_i - u_{i-1}) / eps."""
    eye = sp.identity(n, format="csr")
    shift = sp.csr_matrix((np.ones(n), (np.arange(n), (np.arange(n) - 1) % n)), shape=(n, n))
    return ((eye - shift) / eps).tocsr()


# ---------------------------------------------------------------- local QC grid

@dataclass(frozen=True)
class RepresentativeGrid:
    """Representative-atom labels ell_{-M} = -N < ... < ell_M = N."""

    rep_indices: tuple

    def __post_init__(self):
        idx = np.asarray(self.rep_indices)
        if idx.ndim != 1 or idx.size < 2:
            raise ValueError("need at least two representative atoms")
        if np.any(np.diff(idx) <= 0):
            raise ValueError("representative indices must be strictly increasing")
        if idx[0] != -idx[-1]:
            raise ValueError("representative grid must span one period, ell_-M = -N, ell_M = N")
        object.__setattr__(self, "rep_indices", tuple(int(i) for i in idx))

    @property
    def N(self) -> int:
        return self.rep_indices[-1]

    @property
    def segment_counts(self) -> np.ndarray:
        return np.diff(self.rep_indices)

    @property
    def n_segments(self) -> int:
        return len(self.rep_indices) - 1

    def nodes(self) -> np.ndarray:
        """Reference coordinates X_j = eps * ell_j."""
        return np.asarray(self.rep_indices, dtype=float) / self.N

    def validate(self, cfg: ChainConfig):
        if self.N != cfg.N:
            raise ValueError(f"grid spans N={self.N}, config has N={cfg.N}")
        if self.segment_counts.min() < cfg.s:
            raise ValueError(
                f"every segment must hold at least s={cfg.s} bonds, "
                f"smallest has {self.segment_counts.min()}")

    @classmethod
    def uniform(cls, N: int, segments: int) -> "RepresentativeGrid":
        """Grid of ``segments`` near-equal segments (sizes differ by at most 1)."""
        if not 1 <= segments <= 2 * N:
            raise ValueError("segment count must lie in 1..2N")
        edges = -N + np.round(np.linspace(0, 2 * N, segments + 1)).astype(int)
        return cls(tuple(edges))

    @classmethod
    def random(cls, N: int, s: int, rng, max_segments=None) -> "RepresentativeGrid":
        """Random grid whose segments all hold at least ``s`` bonds."""
        cap = (2 * N) // s
        if max_segments is not None:
            cap = min(cap, max_segments)
        m = int(rng.integers(1, cap + 1))
        # distribute the 2N - m*s spare bonds over m segments
        spare = 2 * N - m * s
        cuts = np.sort(rng.integers(0, spare + 1, size=m - 1))
        extra = np.diff(np.concatenate([[0], cuts, [spare]]))
        counts = s + extra
        return cls(tuple(-N + np.concatenate([[0], np.cumsum(counts)])))


def grid_positions(cfg: ChainConfig, grid: RepresentativeGrid, u) -> np.ndarray:
    """Representative positions Y_j = F eps ell_j + u_{ell_j}, j = -M..M."""
    u = np.asarray(u, dtype=float)
    ell = np.asarray(grid.rep_indices)
    return cfg.F * cfg.eps * ell + u[storage_index(ell, cfg.N)]


def segment_strains(cfg: ChainConfig, grid: RepresentativeGrid, positions) -> np.ndarray:
    """r_j = (Y_j - Y_{j-1}) / (eps * nu_j), the strain on each segment."""
    Y = np.asarray(positions, dtype=float)
    if Y.size != grid.n_segments + 1:
        raise ValueError(f"expected {grid.n_segments + 1} representative positions, got {Y.size}")
    if np.any(np.diff(Y) <= 0):
        raise InadmissibleDeformationError("representative positions must be strictly increasing")
    return np.diff(Y) / (cfg.eps * grid.segment_counts)


def interpolate(cfg: ChainConfig, grid: RepresentativeGrid, positions) -> PeriodicField:
    """Displacement of the chain obtained by linear interpolation of rep atoms.

    The positions must span one period of the configured strain, i.e.
    Y_M - Y_{-M} = 2F.  The result is shifted to zero mean.
    """
    grid.validate(cfg)
    Y = np.asarray(positions, dtype=float)
    if not np.isclose(Y[-1] - Y[0], 2.0 * cfg.F, rtol=1e-13, atol=1e-13):
        raise ValueError(f"positions span {Y[-1] - Y[0]!r}, expected 2F = {2 * cfg.F!r}")
    r = segment_strains(cfg, grid, Y)
    y = np.empty(cfg.size)
    for j, (lo, hi) in enumerate(zip(grid.rep_indices[:-1], grid.rep_indices[1:])):
        i = np.arange(1, hi - lo + 1)
        y[storage_index(lo + i, cfg.N)] = Y[j] + i * cfg.eps * r[j]
    u = y - cfg.F * cfg.eps * cell_indices(cfg.N)
    return PeriodicField(center(u), zero_mean=True)


def local_qc_energy(cfg: ChainConfig, p: PotentialSpec, grid: RepresentativeGrid, positions) -> float:
    """Coarse-grained energy sum_j nu_j phi_cb(r_j) with nu_j = eps * nu~_j."""
    r = segment_strains(cfg, grid, positions)
    return float(np.dot(cfg.eps * grid.segment_counts, cauchy_born_density(p, r, cfg.s)))


def interfacial_energies(cfg: ChainConfig, p: PotentialSpec, grid: RepresentativeGrid,
                         positions) -> np.ndarray:
    """Interface corrections P_j, j = -M+1..M, with E^a = E^qc + sum_j P_j.

    P_j collects the bonds that cross the representative atom Y_j, which is
    shared by segments j and j+1 (periodically, segment M+1 is -M+1)::

        P_j = eps sum_{k=2}^s sum_{p=1}^{k-1} [ phi(p r_j + (k-p) r_{j+1})
                  - (p/k) phi(k r_j) - ((k-p)/k) phi(k r_{j+1}) ]
    """
    grid.validate(cfg)
    r = segment_strains(cfg, grid, positions)
    r_next = np.roll(r, -1)
    P = np.zeros_like(r)
    for k in range(2, cfg.s + 1):
        for q in range(1, k):
            P += (evaluate(p, q * r + (k - q) * r_next)
                  - q / k * evaluate(p, k * r) - (k - q) / k * evaluate(p, k * r_next))
    return cfg.eps * P


def _local_qc_state(cfg, p, u, grid):
    if grid is None:
        raise TypeError("the local QC model needs a RepresentativeGrid")
    grid.validate(cfg)
    Y = grid_positions(cfg, grid, u)
    if np.any(np.diff(Y) <= ADMISSIBLE_STRAIN * cfg.eps):
        raise InadmissibleDeformationError("representative segments collapsed or inverted")
    return Y


# ---------------------------------------------------------------- public operations

def energy(kind, cfg: ChainConfig, p: PotentialSpec, u, grid: RepresentativeGrid | None = None) -> float:
    """Dimensionless energy per period of y = y_F + u."""
    kind = ModelKind.parse(kind)
    if kind is ModelKind.LOCAL_QC:
        return local_qc_energy(cfg, p, grid, _local_qc_state(cfg, p, u, grid))
    strain = strains(cfg, u)
    _check_admissible(strain)
    return float(_bond_energy(cfg, p, interaction_weights(kind, cfg), strain))


def energy_derivative(kind, cfg: ChainConfig, p: PotentialSpec, u, grid=None) -> np.ndarray:
    """Plain partial derivatives dE/du_ell (storage order)."""
    kind = ModelKind.parse(kind)
    if kind is ModelKind.LOCAL_QC:
        Y = _local_qc_state(cfg, p, u, grid)
        dphi = cauchy_born_density(p, segment_strains(cfg, grid, Y), cfg.s, 1)
        ell = np.asarray(grid.rep_indices)
        out = np.zeros(cfg.size)
        np.add.at(out, storage_index(ell[1:], cfg.N), dphi)
        np.add.at(out, storage_index(ell[:-1], cfg.N), -dphi)
        return out
    strain = strains(cfg, u)
    _check_admissible(strain)
    sigma = _bond_stress(cfg, p, interaction_weights(kind, cfg), strain)
    return sigma - np.roll(sigma, -1)


def gradient(kind, cfg: ChainConfig, p: PotentialSpec, u, grid=None) -> PeriodicField:
    """Representer g of the first variation: <g, w> = dE(u)[w] for zero-mean w.

    ``<., .>`` is the eps-weighted inner product, so g = dE/du / eps; g is the
    negative force field per unit reference length.
    """
    g = energy_derivative(kind, cfg, p, u, grid) / cfg.eps
    return PeriodicField(center(g), zero_mean=True)


def forces(kind, cfg: ChainConfig, p: PotentialSpec, u, grid=None) -> PeriodicField:
    """Atomic forces -dE/dy_ell.  These do not scale with N."""
    return PeriodicField(-energy_derivative(kind, cfg, p, u, grid))


@dataclass(frozen=True, eq=False)
class QuadraticForm:
    """Second variation as ``G^T W G`` with G a sparse difference-type map.

    ``matrix`` is the plain Hessian of E with respect to u, so that
    <d^2E u, w> = w @ matrix @ u; ``apply`` returns the eps-representer.
    """

    G: sp.csr_matrix
    W: sp.csr_matrix
    eps: float
    kind: ModelKind

    @property
    def dimension(self) -> int:
        return self.G.shape[1]

    @cached_property
    def matrix(self) -> sp.csr_matrix:
        M = (self.G.T @ self.W @ self.G).tocsr()
        return ((M + M.T) * 0.5).tocsr()

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def euclidean_apply(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        return self.G.T @ (self.W @ (self.G @ u))

    def apply(self, u) -> PeriodicField:
        return PeriodicField(self.euclidean_apply(u) / self.eps)

    def value(self, u, w=None) -> float:
        u = np.asarray(u, dtype=float)
        Gu = self.G @ u
        Gw = Gu if w is None else self.G @ np.asarray(w, dtype=float)
        return float(Gw @ (self.W @ Gu))

    def strain_matrix(self) -> sp.csr_matrix:
        """S with <d^2E u, u> = eps * (Du)^T S (Du); chain models only."""
        if self.kind is ModelKind.LOCAL_QC:
            raise ValueError("local QC form is not expressed in chain strains")
        return (self.W / self.eps).tocsr()

    def bandwidth(self) -> int:
        """Largest periodic distance |i - j| (mod 2N) of a nonzero entry."""
        M = self.matrix.tocoo()
        n = self.dimension
        d = np.abs(M.row - M.col)
        return int(np.max(np.minimum(d, n - d), initial=0))


def hessian(kind, cfg: ChainConfig, p: PotentialSpec, grid: RepresentativeGrid | None = None) -> QuadraticForm:
    """Second variation at the uniform deformation y_F."""
    kind = ModelKind.parse(kind)
    n = cfg.size
    if kind is ModelKind.LOCAL_QC:
        if grid is None:
            raise TypeError("the local QC model needs a RepresentativeGrid")
        grid.validate(cfg)
        nu = grid.segment_counts
        ell = np.asarray(grid.rep_indices)
        m = grid.n_segments
        rows = np.repeat(np.arange(m), 2)
        cols = np.column_stack([storage_index(ell[1:], cfg.N),
                                storage_index(ell[:-1], cfg.N)]).ravel()
        vals = np.column_stack([1.0 / (cfg.eps * nu), -1.0 / (cfg.eps * nu)]).ravel()
        G = sp.csr_matrix((vals, (rows, cols)), shape=(m, n))
        W = sp.diags(cfg.eps * nu * cauchy_born_density(p, cfg.F, cfg.s, 2)).tocsr()
        return QuadraticForm(G, W, cfg.eps, kind)
    strain = np.full(n, cfg.F)
    S = _bond_strain_hessian(cfg, p, interaction_weights(kind, cfg), strain)
    return QuadraticForm(difference_matrix(n, cfg.eps), (cfg.eps * S).tocsr(), cfg.eps, kind)

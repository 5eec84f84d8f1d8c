"""Linearized equilibria under dead loads and the QNL consistency error.

The linearized problem about y_F reads <d^2E(y_F) u, w> = <f, w> for all
zero-mean w.  The pinned operator (one displacement fixed to zero) is
symmetric positive definite exactly when y_F is stable; it is factored by
banded Cholesky after a folding permutation that turns the periodic band
into an ordinary band, and the solution is shifted back to zero mean.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
import scipy.sparse.linalg as spla

from .chain import (ChainConfig, PeriodicField, cell_indices, center, difference,
                    norm_l2_eps, norm_max, project_zero_mean, storage_index)
from .energy_models import (ModelKind, QuadraticForm, bond_sums, hessian,
                            qnl_index_sets)
from .potentials import PotentialSpec
from .stability import curvatures, fourier_lambda_min_atomistic, stability_coefficient

BANDED_MAX_SIZE = 8192
RESIDUAL_RTOL = 1e-10


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """The linearized operator is not positive definite on zero-mean fields."""


@dataclass(frozen=True)
class DeadLoad:
    """Zero-mean external force field f; its energy is -eps sum f_ell y_ell."""

    f: PeriodicField

    def __post_init__(self):
        f = self.f
        if not isinstance(f, PeriodicField):
            f = PeriodicField(f)
        v = f.values
        if abs(v.sum()) > v.size * 1e-14 * max(np.abs(v).max(initial=0.0), 1e-300):
            raise ValueError(f"dead load must have zero mean, sum is {v.sum():.3e}")
        object.__setattr__(self, "f", PeriodicField(center(v), zero_mean=True))

    @property
    def N(self) -> int:
        return self.f.N


def sin_load(N: int, amplitude=1.0) -> DeadLoad:
    """f_ell = amplitude * sin(pi x_ell), x_ell = eps ell on (-1, 1]."""
    x = cell_indices(N) / N
    return DeadLoad(project_zero_mean(amplitude * np.sin(np.pi * x)))


def cos_load(N: int, amplitude=1.0) -> DeadLoad:
    """f_ell = amplitude * cos(pi x_ell); even about the atomistic centre."""
    x = cell_indices(N) / N
    return DeadLoad(project_zero_mean(amplitude * np.cos(np.pi * x)))


LOADS = {"sin-pi-x": sin_load, "cos-pi-x": cos_load}


def make_load(name: str, N: int, amplitude=1.0) -> DeadLoad:
    try:
        return LOADS[name](N, amplitude)
    except KeyError:
        raise ValueError(f"unknown load {name!r}; choose from {sorted(LOADS)}") from None


@dataclass(frozen=True)
class LinearizedSolution:
    u: PeriodicField
    model: ModelKind
    residual_norm: float
    method: str = "banded"
    refinements: int = 0
    load_norm: float = 0.0

    @property
    def meets_contract(self) -> bool:
        """residual_norm <= RESIDUAL_RTOL * ||f||."""
        return self.residual_norm <= RESIDUAL_RTOL * self.load_norm


def fold_order(n: int, pin: int) -> np.ndarray:
    """Permutation pin, pin+1, pin-1, pin+2, pin-2, ... (mod n).

    Periodic neighbours at distance d end up at most 2d apart.
    """
    d = np.arange(1, n // 2 + 1)
    pairs = np.column_stack([pin + d, pin - d]).ravel()
    order = np.concatenate([[pin], pairs]) % n
    _, first = np.unique(order, return_index=True)
    return order[np.sort(first)]


class _BandedFactor:
    """Banded Cholesky of the pinned, folded operator."""

    def __init__(self, form: QuadraticForm):
        n = form.dimension
        self.n = n
        self.order = fold_order(n, n - 1)[1:]
        Mr = form.matrix[self.order][:, self.order].tocoo()
        upper = Mr.row <= Mr.col
        rows, cols, vals = Mr.row[upper], Mr.col[upper], Mr.data[upper]
        self.bandwidth = int(np.max(cols - rows, initial=0))
        ab = np.zeros((self.bandwidth + 1, n - 1))
        ab[self.bandwidth + rows - cols, cols] = vals
        try:
            self.cb = la.cholesky_banded(ab, lower=False)
        except la.LinAlgError as exc:
            raise NotPositiveDefiniteError(
                "linearized operator is not positive definite (unstable y_F)") from exc

    def solve(self, rhs):
        x = np.zeros(self.n)
        x[self.order] = la.cho_solve_banded((self.cb, False), rhs[self.order])
        return center(x)


def _laplacian_preconditioner(n, eps):
    # inverse of the periodic Gram matrix of ||Du||^2, applied by FFT
    theta = 2.0 * np.pi * np.arange(n) / n
    symbol = 4.0 * np.sin(theta / 2.0) ** 2 / eps
    symbol[0] = np.inf

    def apply(x):
        return np.real(np.fft.ifft(np.fft.fft(x) / symbol))

    return spla.LinearOperator((n, n), matvec=apply, dtype=float)


def check_stable(kind, cfg, p):
    """Raise NotPositiveDefiniteError when y_F is unstable for ``kind``."""
    kind = ModelKind.parse(kind)
    phi2 = curvatures(p, cfg.F, cfg.s)
    if kind is ModelKind.QNL:
        lam = stability_coefficient(phi2) if np.all(phi2[1:] <= 0) else None
    else:
        lam = fourier_lambda_min_atomistic(phi2, cfg.N)
    if lam is not None and lam <= 0:
        raise NotPositiveDefiniteError(
            f"y_F is unstable for {kind.value} at F={cfg.F:g} (lambda_min = {lam:.4g})")


def solve_linearized(kind, cfg: ChainConfig, p: PotentialSpec, load: DeadLoad,
                     method="auto", max_refinements=5) -> LinearizedSolution:
    """Zero-mean u with <d^2E(y_F) u, w> = <f, w> for all zero-mean w."""
    kind = ModelKind.parse(kind)
    if kind not in (ModelKind.ATOMISTIC, ModelKind.QNL):
        raise ValueError("linearized solves are provided for the atomistic and QNL models")
    if not isinstance(load, DeadLoad):
        load = DeadLoad(load)
    if load.N != cfg.N:
        raise ValueError(f"load has N={load.N}, config has N={cfg.N}")
    f = load.f.values
    n, eps = cfg.size, cfg.eps
    if method == "auto":
        method = "banded" if n <= BANDED_MAX_SIZE else "cg"
    check_stable(kind, cfg, p)
    form = hessian(kind, cfg, p)
    b = eps * f
    f_norm = norm_l2_eps(f)
    target = 0.1 * RESIDUAL_RTOL * f_norm

    def residual(u):
        r = b - form.euclidean_apply(u)
        return r - r.mean()

    if f_norm == 0.0:
        return LinearizedSolution(PeriodicField(np.zeros(n), zero_mean=True), kind, 0.0, method)

    refinements = 0
    if method == "banded":
        factor = _BandedFactor(form)
        u = factor.solve(b)
        res = norm_l2_eps(residual(u) / eps)
        while res > target and refinements < max_refinements:
            # refine against the factored G^T W G apply; stop once it stalls
            trial = u + factor.solve(residual(u))
            trial_res = norm_l2_eps(residual(trial) / eps)
            if trial_res >= res:
                break
            u, res = trial, trial_res
            refinements += 1
    elif method == "cg":
        def matvec(x):
            x = x - x.mean()
            y = form.euclidean_apply(x)
            return y - y.mean()

        op = spla.LinearOperator((n, n), matvec=matvec, dtype=float)
        pre = _laplacian_preconditioner(n, eps)
        u = np.zeros(n)
        for refinements in range(1, max_refinements + 1):
            r = residual(u)
            if norm_l2_eps(r / eps) <= target:
                refinements -= 1
                break
            du, info = spla.cg(op, r, rtol=1e-13, atol=0.0, maxiter=20 * n, M=pre)
            if info < 0:
                raise np.linalg.LinAlgError(f"conjugate gradient breakdown (info={info})")
            u = u + du - du.mean()
    else:
        raise ValueError(f"unknown solve method {method!r}")

    u = center(u)
    res = norm_l2_eps(residual(u) / eps)
    sol = LinearizedSolution(PeriodicField(u, zero_mean=True), kind, res, method,
                             refinements, f_norm)
    if not sol.meets_contract:
        # one-ulp changes of u already move the residual by O(N^2 * 1e-16)
        warnings.warn(f"residual {res / f_norm:.2e} * ||f|| is above the {RESIDUAL_RTOL:g} "
                      f"contract at N={cfg.N} (float64 round-off floor)", RuntimeWarning,
                      stacklevel=2)
    return sol


def consistency_stress(cfg: ChainConfig, p: PotentialSpec, u_a) -> np.ndarray:
    """tau with <T^qnl, w> = <tau, Dw>.

    tau_m = sum_k phi''_kF sum over bonds ell in C_qnl(k) containing strain m
    of (k Du_m - sum_t Du_{ell+t}).
    """
    u_a = np.asarray(u_a, dtype=float)
    if u_a.size != cfg.size:
        raise ValueError(f"field has {u_a.size} values, config expects {cfg.size}")
    v = difference(u_a).values
    phi2 = curvatures(p, cfg.F, cfg.s)
    W = bond_sums(v, cfg.s)
    sets = qnl_index_sets(cfg)
    tau = np.zeros(cfg.size)
    for k in range(2, cfg.s + 1):
        start = np.zeros(cfg.size)
        start[storage_index(sets.continuum(k), cfg.N)] = 1.0
        for j in range(k):
            # bond starting at ell contributes to strain ell + j
            tau += phi2[k - 1] * np.roll(start * (k * np.roll(v, -j) - W[k - 1]), j)
    return tau


def consistency_error(cfg: ChainConfig, p: PotentialSpec, u_a) -> PeriodicField:
    """eps-representer T of the linearized consistency error functional.

    <T, w> = eps sum_k sum_{ell in C_qnl(k)} phi''_kF
             sum_j (k Du_{ell+j} - sum_t Du_{ell+t}) Dw_{ell+j}.
    """
    tau = consistency_stress(cfg, p, u_a)
    T = (tau - np.roll(tau, -1)) / cfg.eps
    return PeriodicField(center(T), zero_mean=True)


def negative_norm(T) -> float:
    """sup over zero-mean w of <T, w> / ||Dw||, for a zero-mean representer T."""
    T = np.asarray(T, dtype=float)
    eps = 2.0 / T.size
    tau = -eps * np.concatenate([[0.0], np.cumsum(T)[:-1]])
    return norm_l2_eps(tau - tau.mean())


def strain_error(u_a, u_qnl) -> float:
    """||Du_a - Du_qnl|| in the discrete l2_eps norm."""
    diff = np.asarray(u_a, dtype=float) - np.asarray(u_qnl, dtype=float)
    return norm_l2_eps(difference(diff))


def consistency_bound_terms(cfg: ChainConfig, p: PotentialSpec, u_a):
    """(continuum, interface) parts of the negative-norm error bound.

    continuum = sum_k |phi''_kF| eps^2 ||D3 u||_{l2(C~_qnl(k))}
    interface = sum_k |phi''_kF| eps^{3/2} sqrt(2s) ||D3 u||_{linf(I_qnl(k))}
    """
    d3 = difference(u_a, 3)
    phi2 = np.abs(curvatures(p, cfg.F, cfg.s))
    sets = qnl_index_sets(cfg)
    cont = inter = 0.0
    for k in range(2, cfg.s + 1):
        cont += phi2[k - 1] * cfg.eps**2 * norm_l2_eps(d3, sets.continuum_tilde(k))
        inter += (phi2[k - 1] * cfg.eps**1.5 * np.sqrt(2 * cfg.s)
                  * norm_max(d3, sets.interface(k)))
    return cont, inter

"""Stability of the uniform deformation y_F for the atomistic and QNL models.

The stability eigenvalue used throughout is the smallest Rayleigh quotient

    lambda_min = min_{u zero-mean} <d^2E(y_F) u, u> / ||Du||^2,

so y_F is stable iff lambda_min > 0.  For QNL this equals the coefficient
A_F = sum_k k^2 phi''(kF); for the atomistic model it is
A_F - eps^2 mu_eps^2 B_F with B_F bracketed by sums of phi''(kF).
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
from scipy.optimize import bisect

from .chain import ChainConfig, integrate
from .energy_models import ModelKind, difference_matrix, hessian
from .potentials import PotentialSpec, evaluate

EIGEN_MAX_N = 512


class AssumptionViolatedError(ValueError):
    """phi''(kF) > 0 for some k >= 2, outside the theory's hypotheses."""

    def __init__(self, k, value, F):
        super().__init__(f"phi''({k}F) = {value:.6g} > 0 at F = {F:g}")
        self.k = k
        self.value = value
        self.F = F


class BracketError(ValueError):
    """The stability eigenvalue does not change sign over the bracket."""


class UndefinedEtaError(ValueError):
    """eta_F needs s = 3 and phi''(3F) != 0."""


def curvatures(p: PotentialSpec, F: float, s: int) -> np.ndarray:
    """phi''(kF) for k = 1..s."""
    return evaluate(p, F * np.arange(1, s + 1, dtype=float), 2)


def stability_coefficient(phi2) -> float:
    """A_F = sum_k k^2 phi''(kF) from the array (phi''_F, phi''_2F, ...)."""
    phi2 = np.asarray(phi2, dtype=float)
    k = np.arange(1, phi2.size + 1)
    return float(np.dot(k * k, phi2))


def mu_eps(N: int) -> float:
    """2 sin(pi eps / 2) / eps, the smallest ratio ||Psi''|| / ||Psi'||."""
    eps = 1.0 / N
    return 2.0 * math.sin(math.pi * eps / 2.0) / eps


def b_bracket(phi2):
    """(sum_k (k-1) phi''_kF, phi''_2F + sum_{k>=3} (k^4-k^2)/12 phi''_kF).

    With phi''_kF <= 0 for k >= 2 the first entry is the larger one.
    """
    phi2 = np.asarray(phi2, dtype=float)
    k = np.arange(1, phi2.size + 1, dtype=float)
    upper = float(np.dot(k[1:] - 1.0, phi2[1:]))
    lower = float(np.dot((k[1:] ** 4 - k[1:] ** 2) / 12.0, phi2[1:]))
    return upper, lower


def check_assumption(p: PotentialSpec, F: float, s: int):
    """Raise AssumptionViolatedError unless phi''(kF) <= 0 for k = 2..s."""
    phi2 = curvatures(p, F, s)
    for k in range(2, s + 1):
        if phi2[k - 1] > 0:
            raise AssumptionViolatedError(k, phi2[k - 1], F)
    return phi2


def _zero_mean_basis(n):
    # orthonormal basis of the complement of the constants (Helmert-type)
    return la.null_space(np.ones((1, n)))


def lambda_min(kind, cfg: ChainConfig, p: PotentialSpec, return_vector=False, method="strain"):
    """Smallest eigenvalue of d^2E(y_F) u = lambda L u on zero-mean u.

    L is the Gram matrix of ||Du||^2.  ``method="strain"`` (default) uses
    the basis u = D^-1 v with v orthonormal zero-mean strains, in which L is
    the identity and the pencil becomes the symmetric strain matrix S;
    ``method="generalized"`` solves the pencil directly in an orthonormal
    zero-mean displacement basis, whose L has condition number O(N^2).
    """
    kind = ModelKind.parse(kind)
    if kind not in (ModelKind.ATOMISTIC, ModelKind.QNL, ModelKind.QCE):
        raise ValueError(f"no stability eigenproblem for {kind.value}")
    if cfg.N > EIGEN_MAX_N:
        raise ValueError(f"dense eigen-solve capped at N={EIGEN_MAX_N}, got N={cfg.N}")
    n = cfg.size
    Q = _zero_mean_basis(n)
    form = hessian(kind, cfg, p)
    if method == "strain":
        S = form.strain_matrix().toarray()
        Sq = Q.T @ S @ Q
        vals, vecs = la.eigh((Sq + Sq.T) / 2, subset_by_index=[0, 0])
        vec = integrate(Q @ vecs[:, 0]).values if return_vector else None
    elif method == "generalized":
        H = form.dense()
        D = difference_matrix(n, cfg.eps).toarray()
        L = cfg.eps * (D.T @ D)
        Hq = Q.T @ H @ Q
        Lq = Q.T @ L @ Q
        vals, vecs = la.eigh((Hq + Hq.T) / 2, (Lq + Lq.T) / 2, subset_by_index=[0, 0])
        vec = Q @ vecs[:, 0] if return_vector else None
    else:
        raise ValueError(f"unknown eigen method {method!r}")
    if return_vector:
        return float(vals[0]), vec
    return float(vals[0])


def fourier_lambda_min_atomistic(phi2, N: int) -> float:
    """Atomistic lambda_min from the symbol of the constant-coefficient form.

    On the mode exp(i theta ell) the Rayleigh quotient is
    sum_k phi''_kF sin^2(k theta/2) / sin^2(theta/2), minimised over the
    admissible wave numbers theta = pi n / N, n = 1..N.
    """
    phi2 = np.asarray(phi2, dtype=float)
    theta = np.pi * np.arange(1, N + 1) / N
    k = np.arange(1, phi2.size + 1)[:, None]
    symbol = np.sin(k * theta / 2) ** 2 / np.sin(theta / 2) ** 2
    return float(np.min(phi2 @ symbol))


@dataclass(frozen=True)
class StabilityReport:
    F: float
    N: int
    s: int
    A_F: float
    mu_eps: float
    lambda_min: float
    lambda_min_qnl: float
    B_effective: float
    B_bracket: tuple

    @property
    def B_tolerance(self) -> float:
        # eigenvalue round-off is amplified by 1 / (eps^2 mu_eps^2)
        return 1e-12 * max(1.0, abs(self.A_F)) * self.N**2 / self.mu_eps**2

    @property
    def bracket_ok(self) -> bool:
        upper, lower = self.B_bracket
        return lower - self.B_tolerance <= self.B_effective <= upper + self.B_tolerance

    def as_row(self) -> dict:
        return {"F": self.F, "N": self.N, "s": self.s, "A_F": self.A_F,
                "mu_eps": self.mu_eps, "lambda_min_atomistic": self.lambda_min,
                "lambda_min_qnl": self.lambda_min_qnl, "B_effective": self.B_effective,
                "B_upper": self.B_bracket[0], "B_lower": self.B_bracket[1],
                "bracket_ok": self.bracket_ok}


def stability_constants(cfg: ChainConfig, p: PotentialSpec) -> StabilityReport:
    phi2 = check_assumption(p, cfg.F, cfg.s)
    A = stability_coefficient(phi2)
    mu = mu_eps(cfg.N)
    lam_a = lambda_min(ModelKind.ATOMISTIC, cfg, p)
    lam_q = lambda_min(ModelKind.QNL, cfg, p)
    B = (A - lam_a) / (cfg.eps**2 * mu**2)
    return StabilityReport(cfg.F, cfg.N, cfg.s, A, mu, lam_a, lam_q, B, b_bracket(phi2))


def critical_strain(kind, cfg: ChainConfig, p: PotentialSpec, bracket, xtol=1e-10) -> float:
    """F* in ``bracket`` where lambda_min(F*) = 0, located by bisection on F."""
    kind = ModelKind.parse(kind)
    if kind not in (ModelKind.ATOMISTIC, ModelKind.QNL):
        raise ValueError("critical strain is defined for the atomistic and QNL models")
    lo, hi = map(float, bracket)
    for F in (lo, hi):
        check_assumption(p, F, cfg.s)

    def lam(F):
        return lambda_min(kind, dataclasses.replace(cfg, F=F), p)

    f_lo, f_hi = lam(lo), lam(hi)
    if np.sign(f_lo) == np.sign(f_hi):
        raise BracketError(
            f"lambda_min has the same sign at F={lo:g} ({f_lo:.3g}) and F={hi:g} ({f_hi:.3g})")
    return float(bisect(lam, lo, hi, xtol=xtol, maxiter=200))


def eta_F(cfg: ChainConfig, p: PotentialSpec) -> float:
    """(B_effective - phi''_2F) / phi''_3F for third-neighbour interactions.

    The theory places this in [2, 6].
    """
    if cfg.s != 3:
        raise UndefinedEtaError(f"eta_F is defined for s = 3 only, got s = {cfg.s}")
    report = stability_constants(cfg, p)
    phi2 = curvatures(p, cfg.F, 3)
    if phi2[2] == 0.0:
        raise UndefinedEtaError("phi''(3F) = 0; the s = 2 theory applies")
    return float((report.B_effective - phi2[1]) / phi2[2])

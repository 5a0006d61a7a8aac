"""Covariance functions over sparse binary feature vectors and SPD utilities."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import NumericalError

LINEAR = "linear"
SE = "squared_exponential"
_ALIASES = {"linear": LINEAR, "se": SE, "squared_exponential": SE, "rbf": SE}

DEFAULT_RELATIVE_JITTER = 1e-6


@dataclass(frozen=True)
class KernelSpec:
    """Covariance family plus hyperparameters.

    ``jitter`` is an absolute diagonal stabilizer; left as ``None`` it becomes
    ``1e-6 * sigma_f2`` at construction time and then stays fixed.
    """

    family: str = LINEAR
    sigma_f2: float = 1.0
    kappa: float = 1.0
    jitter: float | None = None

    def __post_init__(self):
        fam = _ALIASES.get(self.family)
        if fam is None:
            raise ValueError(f"unknown kernel family {self.family!r}")
        object.__setattr__(self, "family", fam)
        if not self.sigma_f2 > 0:
            raise ValueError("sigma_f2 must be positive")
        if fam == SE and not self.kappa > 0:
            raise ValueError("kappa must be positive for the squared exponential kernel")
        if self.jitter is None:
            object.__setattr__(self, "jitter", DEFAULT_RELATIVE_JITTER * self.sigma_f2)
        if self.jitter < 0:
            raise ValueError("jitter must be non-negative")

    @property
    def n_params(self) -> int:
        return 1 if self.family == LINEAR else 2

    def log_params(self) -> np.ndarray:
        if self.family == LINEAR:
            return np.log([self.sigma_f2])
        return np.log([self.sigma_f2, self.kappa])

    def with_log_params(self, theta: Sequence[float]) -> "KernelSpec":
        theta = np.asarray(theta, dtype=float)
        kw = {"sigma_f2": float(np.exp(theta[0]))}
        if self.family == SE:
            kw["kappa"] = float(np.exp(theta[1]))
        return dataclasses.replace(self, **kw)

    def to_dict(self) -> dict:
        return {"family": self.family, "sigma_f2": self.sigma_f2,
                "kappa": self.kappa, "jitter": self.jitter}

    @classmethod
    def from_dict(cls, d: dict) -> "KernelSpec":
        return cls(d["family"], float(d["sigma_f2"]), float(d["kappa"]), float(d["jitter"]))


def kernel_eval(spec: KernelSpec, a: Sequence[int], b: Sequence[int]) -> float:
    """Covariance between two binary vectors given by their active ids."""
    sa, sb = set(a), set(b)
    shared = len(sa & sb)
    if spec.family == LINEAR:
        return spec.sigma_f2 * shared
    sqdist = len(sa) + len(sb) - 2 * shared
    return spec.sigma_f2 * float(np.exp(-0.5 * spec.kappa * sqdist))


def _as_csr(X) -> sp.csr_matrix:
    if sp.issparse(X):
        return sp.csr_matrix(X, dtype=np.float64)
    return sp.csr_matrix(np.atleast_2d(np.asarray(X, dtype=np.float64)))


def _shared_counts(XA: sp.csr_matrix, XB: sp.csr_matrix) -> np.ndarray:
    P = max(XA.shape[1], XB.shape[1])
    XA = _resize(XA, P)
    XB = _resize(XB, P)
    return np.asarray((XA @ XB.T).todense())


def _resize(X: sp.csr_matrix, P: int) -> sp.csr_matrix:
    if X.shape[1] == P:
        return X
    X = X.copy()
    X.resize((X.shape[0], P))
    return X


def sq_distances(XA, XB) -> np.ndarray:
    XA, XB = _as_csr(XA), _as_csr(XB)
    na = np.asarray(XA.multiply(XA).sum(axis=1)).ravel()
    nb = np.asarray(XB.multiply(XB).sum(axis=1)).ravel()
    d = na[:, None] + nb[None, :] - 2.0 * _shared_counts(XA, XB)
    return np.maximum(d, 0.0)


def cross_kernel(spec: KernelSpec, XA, XB) -> np.ndarray:
    """Dense covariance block between the rows of ``XA`` and ``XB`` (no jitter)."""
    XA, XB = _as_csr(XA), _as_csr(XB)
    if spec.family == LINEAR:
        return spec.sigma_f2 * _shared_counts(XA, XB)
    return spec.sigma_f2 * np.exp(-0.5 * spec.kappa * sq_distances(XA, XB))


def diag_kernel(spec: KernelSpec, X) -> np.ndarray:
    X = _as_csr(X)
    if spec.family == LINEAR:
        return spec.sigma_f2 * np.asarray(X.multiply(X).sum(axis=1)).ravel()
    return np.full(X.shape[0], spec.sigma_f2)


def kernel_log_param_grads(spec: KernelSpec, X, K_noiseless: np.ndarray | None = None) -> list[np.ndarray]:
    """Derivatives of the noiseless Gram matrix w.r.t. log sigma_f2 (and log kappa)."""
    if K_noiseless is None:
        K_noiseless = cross_kernel(spec, X, X)
    grads = [K_noiseless]
    if spec.family == SE:
        grads.append(-0.5 * spec.kappa * sq_distances(X, X) * K_noiseless)
    return grads


@dataclass(frozen=True, eq=False)
class GramMatrix:
    """Gram matrix with its lower Cholesky factor, computed once."""

    K: np.ndarray
    factor: np.ndarray
    logdet: float

    @property
    def n(self) -> int:
        return self.K.shape[0]

    def solve(self, B: np.ndarray) -> np.ndarray:
        return spd_solve(self, B)

    def inverse(self) -> np.ndarray:
        return spd_solve(self, np.eye(self.n))


def cholesky(A: np.ndarray, what: str = "matrix") -> np.ndarray:
    try:
        return sla.cholesky(A, lower=True, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalError(f"Cholesky factorization of {what} failed ({exc})") from exc


def factorize(K: np.ndarray) -> GramMatrix:
    K = np.asarray(K, dtype=np.float64)
    try:
        L = sla.cholesky(K, lower=True, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalError(
            "Gram matrix is not positive definite; increase the kernel jitter"
        ) from exc
    return GramMatrix(K, L, 2.0 * float(np.sum(np.log(np.diag(L)))))


def gram(spec: KernelSpec, X) -> GramMatrix:
    """Assemble and factorize ``K + jitter * I`` over the rows of ``X``."""
    K = cross_kernel(spec, X, X)
    K = 0.5 * (K + K.T)
    K[np.diag_indices_from(K)] += spec.jitter
    return factorize(K)


def spd_solve(g: GramMatrix, B: np.ndarray) -> np.ndarray:
    """``K^{-1} B`` by two triangular solves with the stored factor."""
    B = np.asarray(B, dtype=np.float64)
    if B.shape[0] != g.n:
        raise ValueError(f"dimension mismatch: K is {g.n}x{g.n}, right-hand side has {B.shape[0]} rows")
    return sla.cho_solve((g.factor, True), B, check_finite=False)

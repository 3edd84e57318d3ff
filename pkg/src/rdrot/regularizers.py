"""Sparsity-promoting penalties h(X) and their proximal maps.

Every penalty exposes the same four operations used by the splitting solver:

* ``value(X)``                      h(X), possibly ``inf``
* ``prox(V, rho)``                  argmin_Z h(Z) + ||Z - V||^2 / (2 rho)
* ``conjugate_gap_term(X, Xbar, rho)`` the finite conjugate contribution
  h*(rho^-1 [Xbar - X]_+) to the duality gap
* ``dual_residual(X, Xbar, rho)``   violation of the dual domain constraints

A penalty is sparsity promoting when zeroing entries never increases it; for
such penalties ``prox`` maps zeros to zeros and keeps non-negative inputs
non-negative.
"""
from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np

from .errors import NoConvergence
from .groups import GroupPartition


class Regularizer(ABC):
    #: True when h* is finite everywhere (smooth, strongly convex-ish penalties).
    finite_conjugate = False

    @abstractmethod
    def value(self, X: np.ndarray) -> float: ...

    @abstractmethod
    def prox(self, V: np.ndarray, rho: float) -> np.ndarray: ...

    def conjugate(self, U: np.ndarray) -> float:
        """h*(U) on non-negative U; ``inf`` outside the domain."""
        raise NotImplementedError

    def conjugate_gap_term(self, X: np.ndarray, Xbar: np.ndarray, rho: float) -> float:
        if not self.finite_conjugate:
            return 0.0
        return self.conjugate(np.maximum(Xbar - X, 0.0) / rho)

    def dual_residual(self, X: np.ndarray, Xbar: np.ndarray, rho: float) -> float:
        # For indicator conjugates this is the distance of [Xbar - X]_+ to the
        # scaled dual ball, i.e. the norm of its prox.
        if self.finite_conjugate:
            return 0.0
        return float(np.linalg.norm(self.prox(np.maximum(Xbar - X, 0.0), rho)))

    def flag(self) -> str:
        """Flag string understood by :func:`rdrot.io.build_regularizer`."""
        raise NotImplementedError


@dataclass(frozen=True)
class Zero(Regularizer):
    def value(self, X):
        return 0.0

    def prox(self, V, rho):
        return np.array(V, dtype=np.float64, copy=True)

    def flag(self):
        return "none"


@dataclass(frozen=True)
class Quadratic(Regularizer):
    """h(X) = alpha/2 ||X||_F^2."""

    alpha: float
    finite_conjugate = True

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")

    def value(self, X):
        return 0.5 * self.alpha * float(np.vdot(X, X))

    def prox(self, V, rho):
        return np.asarray(V, dtype=np.float64) * (1.0 / (1.0 + rho * self.alpha))

    def conjugate(self, U):
        return float(np.vdot(U, U)) / (2.0 * self.alpha)

    def flag(self):
        return f"quad:alpha={self.alpha!r}"


@dataclass(frozen=True)
class GroupLasso(Regularizer):
    """h(X) = lam * sum_g ||X_g||_F over disjoint groups.

    The prox threshold is ``rho * lam`` (block soft thresholding).
    """

    lam: float
    groups: GroupPartition = field(compare=False)

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lambda must be > 0, got {self.lam}")

    def value(self, X):
        return self.lam * float(self.groups.block_norms(X).sum())

    def prox(self, V, rho):
        V = np.asarray(V, dtype=np.float64)
        norms = self.groups.block_norms(V)
        thresh = rho * self.lam
        with np.errstate(divide="ignore", invalid="ignore"):
            scale = np.where(norms > thresh, 1.0 - thresh / norms, 0.0)
        # ungrouped entries map through unchanged
        scale = np.append(scale, 1.0)
        gid = self.groups.group_ids
        return V * scale[gid].reshape(V.shape)

    def flag(self):
        return f"gl:lambda={self.lam!r}"


@dataclass(frozen=True, eq=False)
class WeightedL1(Regularizer):
    """h(X) = sum_ij w_ij |X_ij| with non-negative weights."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and non-negative")
        object.__setattr__(self, "weights", w)

    def value(self, X):
        return float(np.vdot(np.broadcast_to(self.weights, X.shape), np.abs(X)))

    def prox(self, V, rho):
        V = np.asarray(V, dtype=np.float64)
        return np.sign(V) * np.maximum(np.abs(V) - rho * self.weights, 0.0)

    def flag(self):
        if self.weights.ndim == 0:
            return f"wl1:w={float(self.weights)!r}"
        raise NotImplementedError("matrix weights are passed via --weights")


@dataclass(frozen=True, eq=False)
class Forbidden(Regularizer):
    """Indicator forcing X_ij = 0 on the boolean ``mask``."""

    mask: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mask", np.asarray(self.mask, dtype=bool))

    def value(self, X):
        return float("inf") if np.any(X[self.mask] != 0) else 0.0

    def prox(self, V, rho):
        out = np.array(V, dtype=np.float64, copy=True)
        out[self.mask] = 0.0
        return out


@dataclass(frozen=True)
class Hypentropic(Regularizer):
    """h(X) = sum_ij X_ij asinh(X_ij / beta) - sqrt(X_ij^2 + beta^2)."""

    beta: float = 1.0
    tol: float = 1e-12
    max_iter: int = 100
    finite_conjugate = True

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError(f"beta must be > 0, got {self.beta}")

    def value(self, X):
        b = self.beta
        return float(np.sum(X * np.arcsinh(X / b) - np.hypot(X, b)))

    def conjugate(self, U):
        with np.errstate(over="ignore"):
            return float(self.beta * np.sum(np.cosh(U)))

    def prox(self, V, rho):
        # Solve rho*asinh(z/beta) + z = |v| per entry; the map is odd in v.
        V = np.asarray(V, dtype=np.float64)
        v = np.abs(V)
        b = self.beta
        lo = np.zeros_like(v)
        hi = v.copy()
        z = v / (1.0 + rho / b)
        for _ in range(self.max_iter):
            g = rho * np.arcsinh(z / b) + z - v
            lo = np.where(g <= 0, z, lo)
            hi = np.where(g >= 0, z, hi)
            step = g / (1.0 + rho / np.hypot(z, b))
            z_new = z - step
            outside = (z_new < lo) | (z_new > hi)
            z_new = np.where(outside, 0.5 * (lo + hi), z_new)
            done = np.abs(z_new - z) <= self.tol * np.maximum(1.0, v)
            z = z_new
            if np.all(done):
                return np.sign(V) * z
        raise NoConvergence(f"hypentropic prox did not converge in {self.max_iter} iterations")

    def flag(self):
        return f"hypent:beta={self.beta!r}"

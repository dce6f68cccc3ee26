"""Nonsmooth convex penalties: value, proximal map, min-norm subgradient."""

import numpy as np


class ZeroPenalty:
    """The trivial penalty h(x) = 0. Its prox is the identity."""

    kind = "zero"

    def value(self, x):
        return 0.0

    def prox(self, x, eta):
        if eta <= 0:
            raise ValueError("prox step eta must be positive")
        return np.asarray(x, dtype=np.float64).copy()

    def min_norm_subgradient(self, x, grad_f):
        x = np.asarray(x, dtype=np.float64)
        grad_f = np.asarray(grad_f, dtype=np.float64)
        if grad_f.shape != x.shape:
            raise ValueError("grad_f and x must have the same length")
        return np.zeros_like(x)


class L1Penalty:
    """Weighted L1 penalty h(x) = lam * sum_i |x_i|."""

    kind = "l1"

    def __init__(self, lam):
        if lam < 0:
            raise ValueError("l1 weight must be nonnegative")
        self.lam = float(lam)

    def value(self, x):
        x = np.asarray(x, dtype=np.float64)
        return self.lam * float(np.abs(x).sum())

    def prox(self, x, eta):
        """Soft-thresholding at level eta * lam.

        Minimizer of h(x') + (1/(2 eta)) ||x' - x||^2, componentwise
        sign(x_i) * max(|x_i| - eta*lam, 0).
        """
        if eta <= 0:
            raise ValueError("prox step eta must be positive")
        x = np.asarray(x, dtype=np.float64)
        return np.sign(x) * np.maximum(np.abs(x) - eta * self.lam, 0.0)

    def min_norm_subgradient(self, x, grad_f):
        """Subgradient g of h at x minimizing ||grad_f + g||.

        Where x_i != 0 the subdifferential is the point lam*sign(x_i);
        at x_i = 0 it is [-lam, lam] and the minimizer clamps -grad_f_i
        into that interval.
        """
        x = np.asarray(x, dtype=np.float64)
        grad_f = np.asarray(grad_f, dtype=np.float64)
        if grad_f.shape != x.shape:
            raise ValueError("grad_f and x must have the same length")
        g = self.lam * np.sign(x)
        at_zero = x == 0.0
        g[at_zero] = np.clip(-grad_f[at_zero], -self.lam, self.lam)
        return g


def make_regularizer(kind, lam=0.0):
    """Build a penalty from a (kind, weight) pair as found in config files."""
    if kind == "zero":
        return ZeroPenalty()
    if kind == "l1":
        return L1Penalty(lam)
    raise ValueError(f"unknown regularizer kind: {kind!r}")

"""Dense numeric primitives: validated arrays, seeded streams, derivative checks."""

import numpy as np

# Central differences at 64-bit precision: truncation ~h^2, rounding ~eps/h.
DEFAULT_FD_STEP = 1e-5


class RngStream:
    """Seeded random stream backed by the counter-based Philox engine.

    Philox is a named, documented bit generator whose output for a given
    seed is identical across platforms, so experiment traces replay
    bit-for-bit. A stream is single-owner: never share one across
    concurrent tasks.
    """

    def __init__(self, seed):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.Philox(self.seed))

    def integers(self, n, size=None):
        return self._gen.integers(0, n, size=size, dtype=np.int64)

    def normal(self, size=None):
        return self._gen.normal(size=size)

    def uniform(self, size=None):
        return self._gen.uniform(size=size)


def as_vector(x, name="x"):
    """Validate and return a finite 1-D float64 array."""
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} contains non-finite entries")
    return v


def as_matrix(a, name="a", rows=None, cols=None):
    """Validate and return a finite 2-D float64 array, optionally shape-checked."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {m.shape}")
    if rows is not None and m.shape[0] != rows:
        raise ValueError(f"{name} must have {rows} rows, got {m.shape[0]}")
    if cols is not None and m.shape[1] != cols:
        raise ValueError(f"{name} must have {cols} cols, got {m.shape[1]}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite entries")
    return m


def sample_with_replacement(rng, n, k):
    """Draw k indices uniformly and independently from [0, n).

    Advances the stream by exactly k draws.
    """
    if n < 1:
        raise ValueError("population size n must be >= 1")
    if k < 0:
        raise ValueError("sample size k must be >= 0")
    return rng.integers(n, size=int(k))


def l2_norm_sq(v):
    """Squared Euclidean norm, sum of squared entries."""
    v = np.asarray(v, dtype=np.float64)
    return float(np.dot(v.ravel(), v.ravel()))


def central_difference_gradient(f, x, h=DEFAULT_FD_STEP):
    """Componentwise central-difference gradient of a scalar function.

    Component i is (f(x + h e_i) - f(x - h e_i)) / (2 h).
    """
    if h <= 0:
        raise ValueError("step size h must be positive")
    x = np.asarray(x, dtype=np.float64)
    g = np.empty_like(x)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        fp = f(xp)
        fm = f(xm)
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise FloatingPointError(
                f"non-finite function value in finite difference at component {i}"
            )
        g[i] = (fp - fm) / (2.0 * h)
    return g

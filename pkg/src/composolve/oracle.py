"""Sampling-oracle query accounting.

The cost model charges one query per index evaluated, in three kinds:
an inner value G_j(x), an inner Jacobian of G_j at x, or an outer
gradient of F_i at y. Outer function values are diagnostics and are
never counted.
"""

import threading

from .problems import CompositionProblem, FiniteSumProblem


class QueryCounter:
    """Monotone tallies of the three sampling-oracle query kinds."""

    def __init__(self):
        self._lock = threading.Lock()
        self.inner_value_queries = 0
        self.inner_jacobian_queries = 0
        self.outer_gradient_queries = 0

    @property
    def total(self):
        return (
            self.inner_value_queries
            + self.inner_jacobian_queries
            + self.outer_gradient_queries
        )

    def add(self, inner_value=0, inner_jacobian=0, outer_gradient=0):
        with self._lock:
            self.inner_value_queries += inner_value
            self.inner_jacobian_queries += inner_jacobian
            self.outer_gradient_queries += outer_gradient

    def snapshot(self):
        """Immutable (inner_value, inner_jacobian, outer_gradient) triple."""
        with self._lock:
            return (
                self.inner_value_queries,
                self.inner_jacobian_queries,
                self.outer_gradient_queries,
            )

    def __repr__(self):
        return (
            f"QueryCounter(inner_value={self.inner_value_queries}, "
            f"inner_jacobian={self.inner_jacobian_queries}, "
            f"outer_gradient={self.outer_gradient_queries})"
        )


class CountedCompositionProblem(CompositionProblem):
    """Delegating wrapper that counts every per-index evaluator call.

    Numerical outputs are exactly those of the wrapped problem; full-batch
    operations inherit the generic loops so they are charged per index.
    """

    def __init__(self, problem):
        self._problem = problem
        self.counter = QueryCounter()
        self.n1 = problem.n1
        self.n2 = problem.n2
        self.dim_x = problem.dim_x
        self.dim_y = problem.dim_y

    def inner_value_batch(self, js, x):
        self.counter.add(inner_value=len(js))
        return self._problem.inner_value_batch(js, x)

    def inner_jacobian_batch(self, js, x):
        self.counter.add(inner_jacobian=len(js))
        return self._problem.inner_jacobian_batch(js, x)

    def outer_value_batch(self, is_, y):
        return self._problem.outer_value_batch(is_, y)

    def outer_gradient_batch(self, is_, y):
        self.counter.add(outer_gradient=len(is_))
        return self._problem.outer_gradient_batch(is_, y)


class CountedFiniteSumProblem(FiniteSumProblem):
    """Counting wrapper for plain finite-sum problems.

    Component-gradient queries are the only oracle cost and are tallied
    in the outer-gradient slot of the counter.
    """

    def __init__(self, problem):
        self._problem = problem
        self.counter = QueryCounter()
        self.n = problem.n
        self.dim_x = problem.dim_x

    def comp_value_batch(self, is_, x):
        return self._problem.comp_value_batch(is_, x)

    def comp_gradient_batch(self, is_, x):
        self.counter.add(outer_gradient=len(is_))
        return self._problem.comp_gradient_batch(is_, x)


def counted(problem):
    """Wrap a problem for query accounting; returns (problem, counter)."""
    if isinstance(problem, FiniteSumProblem):
        wrapped = CountedFiniteSumProblem(problem)
    else:
        wrapped = CountedCompositionProblem(problem)
    return wrapped, wrapped.counter


def full_gradient_cost(n1, n2):
    """Queries for one full composite gradient: n2 values, n2 Jacobians, n1 outer."""
    return n1 + 2 * n2


def vrsc_pg_cost(n1, n2, m, a, b, b1, s_epochs):
    """Total queries of the variance-reduced solver.

    Each epoch pays a full pass (n1 + 2 n2) plus m inner iterations at
    2A + 2B + 2 b1 queries each.
    """
    return s_epochs * (n1 + 2 * n2 + m * (2 * a + 2 * b + 2 * b1))


def scpg_cost(iters):
    """Queries of the two-timescale baseline: 3 per iteration, by kind (1,1,1)."""
    return 3 * iters


def prox_svrg_cost(n, m, s_epochs):
    """Gradient queries of proximal SVRG: n per epoch plus 2 per inner step."""
    return s_epochs * (n + 2 * m)


def prox_full_gradient_cost(n1, n2, iters):
    """Queries of the deterministic reference: one full gradient per step."""
    return iters * full_gradient_cost(n1, n2)

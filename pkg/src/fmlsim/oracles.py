"""Independent reference implementations for the closed-form solvers.

These deliberately avoid the solver code paths: the frequency oracle is a
refined grid search, the assignment oracle a bitmask dynamic program, the
matching/power/delay loop is checked only through its objective trace.
Used by both the test suite and the ``oracle`` CLI subcommand.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from . import rng
from .ural import f4_zero, ives, min_cost_assignment, solve_sp1
from .wireless import ComputeProfile, NetworkConfig, RadioProfile

def g1_grid_minimum(
    compute: dict[int, ComputeProfile],
    weights: tuple[float, float],
    points: int = 100_000,
    refinements: int = 4,
) -> float:
    """Refined grid search for the frequency-control objective.

    For any target worst-case completion time t, the energy term is
    minimized by the slowest feasible frequencies nu_i = work_i / t (valid
    whenever t is at least every device's fastest completion time), so the
    search space is exactly the 1-D interval of achievable worst-case
    times.  Every grid point is evaluated through the original objective.
    """
    eta1, eta2 = weights
    ids = sorted(compute)
    work = np.array([compute[i].c * compute[i].D for i in ids])
    ecoef = eta1 * 0.5 * np.array([compute[i].iota for i in ids]) * work
    nu_max = np.array([compute[i].nu_max for i in ids])

    def value(t: np.ndarray) -> np.ndarray:
        nus = work[None, :] / t[:, None]
        return (nus ** 2 @ ecoef) + eta2 * t

    t_floor = float((work / nu_max).max())     # every device at full speed
    lo, hi = t_floor, t_floor
    while value(np.array([2.0 * hi]))[0] < value(np.array([hi]))[0]:
        hi *= 2.0
    hi *= 2.0
    best = math.inf
    for _ in range(refinements):
        ts = np.linspace(lo, hi, points)
        vals = value(ts)
        idx = int(np.argmin(vals))
        best = min(best, float(vals[idx]))
        step = (hi - lo) / (points - 1)
        lo = max(t_floor, float(ts[idx]) - 2.0 * step)
        hi = float(ts[idx]) + 2.0 * step
    return best


def assignment_brute_force(weights: np.ndarray) -> float:
    """Optimal partial-matching total via DP over column bitmasks (n, M <= 7)."""
    w = np.asarray(weights, dtype=float)
    n, m = w.shape
    if n > 7 or m > 7:
        raise ValueError("brute-force oracle only supports n, M <= 7")
    full = 1 << m
    dp = np.zeros(full)
    for i in range(n):
        nxt = dp.copy()  # row i left unmatched
        for mask in range(full):
            base = dp[mask]
            for col in range(m):
                bit = 1 << col
                if mask & bit or not (np.isfinite(w[i, col]) and w[i, col] < 0):
                    continue
                cand = base + w[i, col]
                if cand < nxt[mask | bit]:
                    nxt[mask | bit] = cand
        dp = nxt
    return float(dp.min())


# ---------------------------------------------------------------------------
# random-instance suites


_KEY_ORACLE = 7101


def _random_compute(g: np.random.Generator, n: int) -> dict[int, ComputeProfile]:
    return {
        i: ComputeProfile(
            c=g.uniform(0.5, 1.5),
            iota=g.uniform(1.0, 3.0),
            D=int(g.integers(1, 10)),
            nu_max=g.uniform(0.2, 2.0),
        )
        for i in range(n)
    }


def _random_radio_env(
    g: np.random.Generator, n: int, m: int
) -> tuple[dict[int, RadioProfile], NetworkConfig]:
    radios = {
        i: RadioProfile(h=g.uniform(0.1, 1.0), p_max=g.uniform(0.05, 1.0))
        for i in range(n)
    }
    net = NetworkConfig(
        M=m, B=1.0, N0=0.1,
        interference=tuple(g.uniform(0.0, 0.8) for _ in range(m)),
        S=1.0,
        eta1=g.uniform(0.5, 2.0),
        eta2=g.uniform(0.5, 2.0),
    )
    return radios, net


@dataclass
class SuiteResult:
    name: str
    instances: int
    failures: int
    max_deviation: float

    @property
    def ok(self) -> bool:
        return self.failures == 0


def sp1_suite(instances: int = 50, seed: int = 0, tol: float = 1e-6) -> SuiteResult:
    """Closed-form frequency solution versus refined grid search."""
    worst = 0.0
    failures = 0
    for r in range(instances):
        g = rng.stream(seed, _KEY_ORACLE, 1, r)
        n = int(g.integers(1, 4))
        compute = _random_compute(g, n)
        weights = (g.uniform(0.5, 2.0), g.uniform(0.5, 2.0))
        closed = solve_sp1(compute, weights).objective
        grid = g1_grid_minimum(compute, weights)
        dev = abs(closed - grid)
        worst = max(worst, dev)
        # the closed form must match the grid optimum and never exceed it
        if dev > tol or closed > grid + tol:
            failures += 1
    return SuiteResult("sp1", instances, failures, worst)


def assignment_suite(instances: int = 500, seed: int = 0, tol: float = 1e-9) -> SuiteResult:
    """Hungarian-based partial matching versus the bitmask DP optimum."""
    worst = 0.0
    failures = 0
    for r in range(instances):
        g = rng.stream(seed, _KEY_ORACLE, 2, r)
        n = int(g.integers(1, 8))
        m = int(g.integers(1, 8))
        w = g.uniform(-5.0, 5.0, size=(n, m))
        w[g.uniform(size=(n, m)) < 0.3] = np.inf  # forbidden edges
        got = sum(w[i, j] for i, j in min_cost_assignment(w))
        want = assignment_brute_force(w)
        dev = abs(got - want)
        worst = max(worst, dev)
        if dev > tol:
            failures += 1
    return SuiteResult("assignment", instances, failures, worst)


def bisection_suite(instances: int = 1000, seed: int = 0, tol: float = 1e-8) -> SuiteResult:
    """f4 root residual and bracket membership on random coefficients."""
    worst = 0.0
    failures = 0
    for r in range(instances):
        g = rng.stream(seed, _KEY_ORACLE, 3, r)
        b1 = float(g.uniform(0.01, 100.0))
        eta2 = float(g.uniform(0.01, 100.0))
        root = f4_zero(b1, eta2)
        resid = abs(b1 * ((1.0 + root) * math.log1p(root) - root) - eta2)
        b2 = 2.0 ** ((1.0 + math.sqrt(max(eta2 / b1, 1.0) - 1.0)) / math.log(2.0))
        worst = max(worst, resid)
        if resid > tol or not 0.0 < root <= b2 * (1 + 1e-12):
            failures += 1
    return SuiteResult("bisection", instances, failures, worst)


def ives_monotone_suite(
    instances: int = 100, seed: int = 0, tol: float = 1e-9
) -> tuple[SuiteResult, list[int]]:
    """Objective-trace monotonicity and iteration counts on random environments."""
    failures = 0
    worst = 0.0
    iteration_counts: list[int] = []
    for r in range(instances):
        g = rng.stream(seed, _KEY_ORACLE, 4, r)
        n = int(g.integers(2, 15))
        m = int(g.integers(1, 21))
        radios, net = _random_radio_env(g, n, m)
        u = {i: float(g.uniform(0.1, 5.0)) for i in range(n)}
        sol = ives(u, radios, net)
        iteration_counts.append(len(sol.trace))
        drops = [
            sol.trace[t] - sol.trace[t + 1]
            for t in range(len(sol.trace) - 1)
            if sol.trace[t] - sol.trace[t + 1] > tol * max(1.0, abs(sol.trace[t]))
        ]
        worst = max(worst, max(drops, default=0.0))
        if drops or len(sol.trace) > 50:
            failures += 1
    return SuiteResult("ives-monotone", instances, failures, worst), iteration_counts


SUITES = ("sp1", "assignment", "bisection", "ives-monotone")


def run_suite(name: str, seed: int = 0) -> SuiteResult:
    if name == "sp1":
        return sp1_suite(seed=seed)
    if name == "assignment":
        return assignment_suite(seed=seed)
    if name == "bisection":
        return bisection_suite(seed=seed)
    if name == "ives-monotone":
        return ives_monotone_suite(seed=seed)[0]
    raise ValueError(f"unknown oracle suite {name!r}")

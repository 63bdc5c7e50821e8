"""Joint CPU-frequency, resource-block and power optimization.

The round objective U - eta1*E - eta2*T separates into a computation part
(frequency control, solved in closed form by straggler enumeration) and a
communication part (RB matching plus power control, solved by the
iterative matching/power/delay loop).  All solvers are deterministic;
ties are broken by ascending device id.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import InvalidInputError
from .wireless import ComputeProfile, NetworkConfig, RadioProfile

IVES_EPS = 1e-9
IVES_MAX_ITERS = 50
BISECT_TOL = 1e-10


@dataclass
class Sp1Solution:
    nu: dict[int, float]
    straggler: int
    objective: float


@dataclass
class Sp2Solution:
    z: dict[int, int]
    p: dict[int, float]
    delta: float
    objective: float
    iterations: int
    trace: list[float] = field(default_factory=list)


def g1_objective(
    compute: dict[int, ComputeProfile], weights: tuple[float, float], nu: dict[int, float]
) -> float:
    """eta1 * sum (iota/2) c D nu^2 + eta2 * max c D / nu."""
    eta1, eta2 = weights
    energy = 0.0
    worst_time = 0.0
    for i, cp in compute.items():
        f = nu[i]
        if f <= 0:
            return math.inf
        work = cp.c * cp.D
        energy += 0.5 * cp.iota * work * f * f
        worst_time = max(worst_time, work / f)
    return eta1 * energy + eta2 * worst_time


def sp1_fixed_straggler(
    j: int, compute: dict[int, ComputeProfile], weights: tuple[float, float]
) -> Sp1Solution:
    """Closed-form frequencies when device j is the computation straggler.

    All computation times are equalized to the straggler's; the straggler's
    frequency balances the quadratic energy term against the 1/nu time term,
    capped so every device stays within its own frequency limit.
    """
    eta1, eta2 = weights
    if eta1 <= 0 or eta2 <= 0:
        raise InvalidInputError("sp1 requires strictly positive weights")
    if j not in compute:
        raise InvalidInputError(f"unknown straggler candidate {j}")
    work = {i: cp.c * cp.D for i, cp in compute.items()}
    wj = work[j]
    a1 = eta1 * sum(cp.iota * work[i] ** 3 for i, cp in compute.items()) / (2.0 * wj * wj)
    a2 = eta2 * wj
    cap = min(wj * compute[i].nu_max / work[i] for i in compute)
    nu_j = min((a2 / (2.0 * a1)) ** (1.0 / 3.0), cap)
    nu = {i: work[i] * nu_j / wj for i in compute}
    return Sp1Solution(nu=nu, straggler=j, objective=g1_objective(compute, weights, nu))


def solve_sp1(
    compute: dict[int, ComputeProfile], weights: tuple[float, float]
) -> Sp1Solution:
    """Enumerate every straggler candidate and keep the best g1."""
    if not compute:
        raise InvalidInputError("sp1 needs at least one device")
    best: Sp1Solution | None = None
    for j in sorted(compute):
        sol = sp1_fixed_straggler(j, compute, weights)
        if best is None or sol.objective < best.objective:
            best = sol
    return best


def min_cost_assignment(weights: np.ndarray) -> list[tuple[int, int]]:
    """Minimum-weight partial matching using only negative-weight edges.

    ``weights`` is an n-by-M matrix; entries that are +inf (or NaN) are
    forbidden.  Rows and columns may stay unmatched: an edge is only worth
    taking if its weight is negative.
    """
    weights = np.asarray(weights, dtype=float)
    if weights.ndim != 2:
        raise InvalidInputError("weight matrix must be 2-D")
    usable = np.isfinite(weights) & (weights < 0)
    if not usable.any():
        return []
    # zero-padding: dropping a non-negative edge is free, so the optimal
    # assignment over clipped weights equals the optimal partial matching
    clipped = np.where(usable, weights, 0.0)
    rows, cols = linear_sum_assignment(clipped)
    return [(int(i), int(m)) for i, m in zip(rows, cols) if usable[i, m]]


def _mu(radio: RadioProfile, net: NetworkConfig, m: int, delta: float) -> float:
    """Power needed on RB m to finish the upload in exactly delta."""
    with np.errstate(over="ignore"):
        growth = float(np.exp2(net.S / (net.B * delta)) - 1.0)
    return (net.interference[m] + net.B * net.N0) * growth / radio.h


def rb_matching(
    u: dict[int, float],
    delta: float,
    radios: dict[int, RadioProfile],
    net: NetworkConfig,
) -> dict[int, int]:
    """Optimal RB assignment for a given transmission delay.

    Pairs whose required power exceeds the device cap are forbidden; among
    the rest, the matching maximizes sum of (u_i - eta1*delta*mu_{i,m}).
    """
    if delta <= 0:
        raise InvalidInputError("delta must be positive")
    ids = sorted(u)
    cost = np.full((len(ids), net.M), np.inf)
    for row, i in enumerate(ids):
        for m in range(net.M):
            mu = _mu(radios[i], net, m, delta)
            # the relative slack absorbs round-off when delta was realized by
            # a device transmitting exactly at its power cap
            if mu <= radios[i].p_max * (1.0 + 1e-9):
                mu = min(mu, radios[i].p_max)
                gain = u[i] - net.eta1 * delta * mu
                if gain > 0:
                    cost[row, m] = -gain
    return {ids[row]: m for row, m in min_cost_assignment(cost)}


def f4_zero(b1: float, eta2: float, tol: float = BISECT_TOL) -> float:
    """Unique zero of f4(p) = b1*((1+p)*ln(1+p) - p) - eta2 on (0, b2] by bisection."""
    if b1 <= 0 or eta2 <= 0 or tol <= 0:
        raise InvalidInputError("f4_zero requires positive b1, eta2 and tol")

    def f4(p: float) -> float:
        return b1 * ((1.0 + p) * math.log1p(p) - p) - eta2

    b2 = 2.0 ** ((1.0 + math.sqrt(max(eta2 / b1, 1.0) - 1.0)) / math.log(2.0))
    while f4(b2) < 0.0:  # float-safety; the analytic bracket already suffices
        b2 *= 2.0
    lo, hi = 0.0, b2
    f_tol = tol * max(1.0, b1, eta2)
    mid = 0.5 * (lo + hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = f4(mid)
        if fm == 0.0:
            return mid
        if fm < 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol and abs(fm) <= f_tol:
            break
    return mid


def _normalized_noise(radio: RadioProfile, net: NetworkConfig, m: int) -> float:
    return (net.interference[m] + net.B * net.N0) / radio.h


def sp2_power_fixed_straggler(
    j: int,
    z: dict[int, int],
    u: dict[int, float],
    radios: dict[int, RadioProfile],
    net: NetworkConfig,
) -> dict[int, float]:
    """Powers equalizing the normalized SNR across the selected set.

    Works in units p~ = h*p/(I_m + B*N0); the common p~ is the f4 zero
    capped by the tightest per-device power limit, then converted back to
    watts per device.
    """
    if j not in z:
        raise InvalidInputError(f"straggler candidate {j} has no RB assigned")
    noise = {i: _normalized_noise(radios[i], net, z[i]) for i in z}
    b1 = net.eta1 * sum(noise.values())
    p_tilde = min(
        f4_zero(b1, net.eta2),
        min(radios[i].p_max / noise[i] for i in z),
    )
    return {i: noise[i] * p_tilde for i in z}


def g2_objective(
    z: dict[int, int],
    p: dict[int, float],
    u: dict[int, float],
    radios: dict[int, RadioProfile],
    net: NetworkConfig,
) -> float:
    """sum u_i - eta1 * transmission energy - eta2 * max transmission time."""
    if not z:
        return 0.0
    total = 0.0
    worst_time = 0.0
    for i, m in z.items():
        rate = net.B * np.log2(
            1.0 + radios[i].h * p[i] / (net.interference[m] + net.B * net.N0)
        )
        if rate <= 0:
            return -math.inf
        t = net.S / rate
        total += u[i] - net.eta1 * t * p[i]
        worst_time = max(worst_time, t)
    return total - net.eta2 * worst_time


def solve_sp2_power(
    z: dict[int, int],
    u: dict[int, float],
    radios: dict[int, RadioProfile],
    net: NetworkConfig,
) -> dict[int, float]:
    """Enumerate straggler candidates and return the g2-maximizing powers."""
    if not z:
        return {}
    best_p: dict[int, float] | None = None
    best_g2 = -math.inf
    for j in sorted(z):
        p = sp2_power_fixed_straggler(j, z, u, radios, net)
        g2 = g2_objective(z, p, u, radios, net)
        if g2 > best_g2:
            best_g2 = g2
            best_p = p
    return best_p


def initial_delay(radios: dict[int, RadioProfile], net: NetworkConfig) -> float:
    """Most conservative start: the slowest full-power upload over all device/RB pairs."""
    worst = 0.0
    for i, radio in radios.items():
        for m in range(net.M):
            rate = net.B * np.log2(
                1.0 + radio.h * radio.p_max / (net.interference[m] + net.B * net.N0)
            )
            if rate <= 0:
                raise InvalidInputError(f"device {i} cannot transmit on RB {m}")
            worst = max(worst, net.S / rate)
    return worst


def ives(
    u: dict[int, float],
    radios: dict[int, RadioProfile],
    net: NetworkConfig,
    eps: float = IVES_EPS,
    max_iters: int = IVES_MAX_ITERS,
) -> Sp2Solution:
    """Alternate RB matching, power optimization and delay update until g2 settles."""
    if not u or net.M < 1:
        raise InvalidInputError("ives needs at least one device and one RB")
    if min(u.values()) <= 0:
        raise InvalidInputError("contribution scores must be shifted positive")
    delta = initial_delay(radios, net)
    best = Sp2Solution(z={}, p={}, delta=delta, objective=0.0, iterations=0)
    trace: list[float] = []
    prev_g2: float | None = None
    for it in range(1, max_iters + 1):
        z = rb_matching(u, delta, radios, net)
        if not z:
            trace.append(0.0)
            best.iterations = it
            best.trace = trace
            return best
        p = solve_sp2_power(z, u, radios, net)
        g2 = g2_objective(z, p, u, radios, net)
        trace.append(g2)
        delta_next = max(
            net.S / (net.B * np.log2(
                1.0 + radios[i].h * p[i] / (net.interference[m] + net.B * net.N0)
            ))
            for i, m in z.items()
        )
        if g2 > best.objective:
            best = Sp2Solution(z=z, p=p, delta=delta_next, objective=g2, iterations=it)
        if prev_g2 is not None and abs(g2 - prev_g2) <= eps * max(1.0, abs(g2)):
            best.iterations = it
            break
        prev_g2 = g2
        delta = delta_next
    best.iterations = max(best.iterations, len(trace))
    best.trace = trace
    return best


def ural(
    compute: dict[int, ComputeProfile],
    radios: dict[int, RadioProfile],
    net: NetworkConfig,
    u: dict[int, float],
) -> tuple[Sp1Solution, Sp2Solution]:
    """Solve the frequency sub-problem and the matching/power sub-problem."""
    sp1 = solve_sp1(compute, (net.eta1, net.eta2))
    sp2 = ives(u, radios, net)
    return sp1, sp2


def sp1_to_json(sol: Sp1Solution) -> str:
    return json.dumps(asdict(sol), indent=2, sort_keys=True)


def sp2_to_json(sol: Sp2Solution) -> str:
    return json.dumps(asdict(sol), indent=2, sort_keys=True)


def sp1_from_json(text: str) -> Sp1Solution:
    payload = json.loads(text)
    payload["nu"] = {int(k): v for k, v in payload["nu"].items()}
    return Sp1Solution(**payload)


def sp2_from_json(text: str) -> Sp2Solution:
    payload = json.loads(text)
    payload["z"] = {int(k): v for k, v in payload["z"].items()}
    payload["p"] = {int(k): v for k, v in payload["p"].items()}
    return Sp2Solution(**payload)

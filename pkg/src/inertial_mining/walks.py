"""Biased random-walk quantities and the sufficient-inertia calculator.

All walks here move up with probability ``alpha`` and down with probability
``1 - alpha``, with ``alpha < 1/2`` so the drift is downward.  ``epsilon``
is the probability of ever reaching an upper barrier; ``epsilon_star`` is
the survival probability of the walk started at 1 before it first hits 0.
These feed the four sufficiency inequalities checked by
``sufficient_inertia``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class InfeasibleError(ValueError):
    """No (J, I) pair can satisfy the sufficiency inequalities."""


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 0.5:
        raise InfeasibleError(f"alpha must be in (0, 1/2), got {alpha}")


def epsilon(k: int, inertia: int, alpha: float) -> float:
    """Probability that the biased walk started at k ever hits ``inertia``.

    Closed form (alpha/(1-alpha))**(inertia-k) for k below the barrier,
    and 1 once the walk starts at or above it.
    """
    _check_alpha(alpha)
    if inertia < 1:
        raise ValueError("inertia must be >= 1")
    if k < 0:
        raise ValueError("k must be >= 0")
    if k >= inertia:
        return 1.0
    r = alpha / (1.0 - alpha)
    return r ** (inertia - k)


def _survival_probs(k_max: int, alpha: float) -> np.ndarray:
    """P[T0 > k] for k = 0..k_max, walk started at 1, absorbing at 0.

    Exact dynamic programming over the position distribution; the support
    after k steps is finite so no truncation is needed.
    """
    out = np.empty(k_max + 1)
    out[0] = 1.0
    # dist[p] = probability of being alive at position p+1
    dist = np.zeros(k_max + 2)
    dist[0] = 1.0
    for k in range(1, k_max + 1):
        up = np.zeros_like(dist)
        up[1:] = alpha * dist[:-1]
        down = np.zeros_like(dist)
        down[:-1] = (1.0 - alpha) * dist[1:]
        # mass moving down from position 1 is absorbed at 0
        dist = up + down
        dist[-1] = 0.0  # guard; support never reaches here within k_max steps
        out[k] = dist.sum()
    return out


def epsilon_star(k: int, alpha: float, tol: float = 1e-15) -> float:
    """Probability the walk from 1 first hits 0 strictly after time k.

    Computed by exact dynamic programming over the position distribution;
    the result is within ``tol`` of the true value (the DP itself is exact
    up to float rounding, well inside any reasonable ``tol``).
    """
    _check_alpha(alpha)
    if tol <= 0:
        raise ValueError("tol must be positive")
    if k < 0:
        raise ValueError("k must be >= 0")
    if k == 0:
        return 1.0
    return float(_survival_probs(k, alpha)[k])


def epsilon_star_tail(j: int, alpha: float) -> float:
    """Sum of epsilon_star(k) for k >= j+1, computed exactly.

    Uses the identity sum_{k>=0} P[T0 > k] = E[T0] = 1/(1-2*alpha), so the
    infinite tail is the expectation minus a finite partial sum; no
    truncation estimate is involved.
    """
    _check_alpha(alpha)
    if j < 0:
        raise ValueError("j must be >= 0")
    expected_hit = 1.0 / (1.0 - 2.0 * alpha)
    partial = float(_survival_probs(j, alpha).sum())
    return max(expected_hit - partial, 0.0)


def selfish_threshold(gamma: float) -> float:
    """Mining-power share above which selfish mining beats honest mining."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must be in [0, 1], got {gamma}")
    return (1.0 - gamma) / (3.0 - 2.0 * gamma)


def selfish_states(cap: int) -> list[str]:
    """State labels of the selfish-mining lead chain: 0, race, 1, .., cap."""
    return ["0", "race"] + [str(k) for k in range(1, cap + 1)]


def selfish_transition_matrix(alpha: float, gamma: float, cap: int) -> np.ndarray:
    """Transition matrix of the selfish miner's lead chain.

    States are indexed per ``selfish_states``: 0 (no private lead), race
    (one-vs-one published tie), then leads 1..cap.  The up-move at the cap
    is folded into a self-loop, which is sound because the stationary mass
    out there is negligible for the caps used.
    """
    _check_alpha(alpha)
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must be in [0, 1], got {gamma}")
    n = cap + 2
    idx0, idxr = 0, 1

    def lead(k: int) -> int:
        return 1 + k

    p = np.zeros((n, n))
    p[idx0, lead(1)] = alpha
    p[idx0, idx0] = 1.0 - alpha
    p[idxr, idx0] = 1.0
    p[lead(1), lead(2)] = alpha
    p[lead(1), idxr] = 1.0 - alpha
    p[lead(2), lead(3)] = alpha
    p[lead(2), idx0] = 1.0 - alpha
    for k in range(3, cap):
        p[lead(k), lead(k + 1)] = alpha
        p[lead(k), lead(k - 1)] = 1.0 - alpha
    p[lead(cap), lead(cap)] = alpha
    p[lead(cap), lead(cap - 1)] = 1.0 - alpha
    return p


def _default_cap(alpha: float) -> int:
    """Lead cap leaving under 1e-16 stationary mass at the boundary."""
    r = alpha / (1.0 - alpha)
    return max(64, int(37.0 / -np.log(r)) + 8)


def selfish_stationary(alpha: float, gamma: float = 0.5, cap: int | None = None) -> dict[str, float]:
    """Stationary distribution of the lead chain, keyed by state label."""
    _check_alpha(alpha)
    if cap is None:
        cap = _default_cap(alpha)
    p = selfish_transition_matrix(alpha, gamma, cap)
    n = p.shape[0]
    a = np.vstack([p.T - np.eye(n), np.ones(n)])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(a, b, rcond=None)
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    return dict(zip(selfish_states(cap), pi))


def selfish_revenue(alpha: float, gamma: float, cap: int | None = None) -> float:
    """Long-run chain share of a selfish miner facing immediate-publish miners.

    Computed from the stationary distribution of the lead chain with block
    credits attached to each transition: honest blocks land on the chain
    only outside attack epochs or when they win a published tie; the
    attacker's withheld blocks are credited when an epoch resolves.
    """
    _check_alpha(alpha)
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must be in [0, 1], got {gamma}")
    pi = selfish_stationary(alpha, gamma, cap)
    a_rate = {
        "0": 0.0,
        "race": 2.0 * alpha + gamma * (1.0 - alpha),
        "1": 0.0,
        "2": 2.0 * (1.0 - alpha),
    }
    h_rate = {
        "0": 1.0 - alpha,
        "race": gamma * (1.0 - alpha) + 2.0 * (1.0 - gamma) * (1.0 - alpha),
        "1": 0.0,
        "2": 0.0,
    }
    attacker = honest = 0.0
    for state, mass in pi.items():
        if state in a_rate:
            attacker += mass * a_rate[state]
            honest += mass * h_rate[state]
        else:  # lead >= 3: the matched block eventually wins
            attacker += mass * (1.0 - alpha)
    return attacker / (attacker + honest)


@dataclass
class InertiaBound:
    """A sufficient (J, I) pair with the residual slack of each inequality.

    ``residuals`` maps inequality name (A-D) to right-hand side minus
    left-hand side; feasibility means every residual clears the requested
    margin.  The pair is sufficient, not claimed minimal.
    """

    alpha: float
    J: int
    I: int
    residuals: dict[str, float] = field(default_factory=dict)
    feasible: bool = False

    def to_json(self) -> dict:
        return {
            "alpha": self.alpha,
            "J": self.J,
            "I": self.I,
            "residuals": dict(self.residuals),
            "feasible": self.feasible,
        }


def _geom_eps_sum(alpha: float, inertia: int, j: int) -> float:
    """sum_{k>=0} alpha**k * epsilon(k + j) for barrier ``inertia``, exactly.

    The summand is geometric once k + j reaches the barrier, so the series
    splits into a finite part and a closed-form geometric remainder.
    """
    n = inertia - j
    if n <= 0:
        return 1.0 / (1.0 - alpha)
    r = alpha / (1.0 - alpha)
    # sum_{k=0}^{n-1} alpha^k r^(n-k) = r^n * (1 - (1-alpha)^n) / alpha
    head = r**n * (1.0 - (1.0 - alpha) ** n) / alpha
    tail = alpha**n / (1.0 - alpha)
    return head + tail


def inertia_residuals(alpha: float, j: int, inertia: int, star_tail: float | None = None) -> dict[str, float]:
    """Residuals (RHS - LHS) of the four sufficiency inequalities.

    A: the barrier-hitting bound for a block mined behind the public chain.
    B: the withhold-and-race sum for a block extending a withheld chain.
    C: the combined deep-kill plus race bound for a fresh withheld block.
    D: the kill-count analogue of C.
    """
    _check_alpha(alpha)
    if not 1 <= j <= inertia - 1:
        raise ValueError("need 1 <= J <= I - 1")
    if star_tail is None:
        star_tail = epsilon_star_tail(j, alpha)
    rhs = 1.0 - alpha
    race = (1.0 - alpha) * (0.5 + alpha)
    g_j = _geom_eps_sum(alpha, inertia, j)
    g_1 = _geom_eps_sum(alpha, inertia, 1)
    return {
        "A": rhs - epsilon(j, inertia, alpha),
        "B": rhs - (race + (1.0 - alpha) * g_j),
        "C": rhs - (alpha * star_tail + race + (1.0 - alpha) * g_1),
        "D": rhs - (star_tail + race + (1.0 - alpha) * g_1),
    }


def sufficient_inertia(alpha: float, margin: float = 0.0, max_j: int = 200_000) -> InertiaBound:
    """Lexicographically minimal (J, I) clearing all four inequalities.

    Every inequality's left-hand side decreases in I, so for each J the
    minimal I is found by direct scan; J is the smallest value for which
    the I -> infinity limit of the binding inequality still clears the
    margin.  Raises InfeasibleError for alpha >= 1/2 (the race term alone
    then exceeds the budget).
    """
    _check_alpha(alpha)
    if margin < 0:
        raise ValueError("margin must be >= 0")
    rhs = 1.0 - alpha
    race = (1.0 - alpha) * (0.5 + alpha)
    if rhs - race <= margin:
        raise InfeasibleError(
            f"no inertia suffices at alpha={alpha} with margin={margin}"
        )
    expected_hit = 1.0 / (1.0 - 2.0 * alpha)
    # Incremental survival DP shared across candidate J values; dist[p]
    # holds the probability of being alive at position p+1 after j steps.
    dist = np.array([1.0])
    partial = 1.0  # sum of P[T0 > k] for k = 0..j
    for j in range(1, max_j + 1):
        nxt = np.zeros(len(dist) + 1)
        nxt[1:] = alpha * dist
        nxt[:-2] += (1.0 - alpha) * dist[1:]
        dist = nxt
        partial += dist.sum()
        star_tail = max(expected_hit - partial, 0.0)
        # Best case over I: the geometric sums and epsilon_J vanish.
        if rhs - (star_tail + race) <= margin:
            continue
        inertia = j + 1
        while True:
            res = inertia_residuals(alpha, j, inertia, star_tail=star_tail)
            if min(res.values()) >= margin:
                return InertiaBound(alpha=alpha, J=j, I=inertia, residuals=res, feasible=True)
            inertia += 1
    raise InfeasibleError(f"search exhausted at alpha={alpha}, margin={margin}")

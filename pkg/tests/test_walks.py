import numpy as np
import pytest

from inertial_mining.walks import (
    InfeasibleError,
    epsilon,
    epsilon_star,
    epsilon_star_tail,
    inertia_residuals,
    selfish_revenue,
    selfish_stationary,
    selfish_threshold,
    selfish_transition_matrix,
    sufficient_inertia,
)

ALPHAS = (0.05, 0.15, 0.25, 0.35, 0.45)


def hitting_prob_dp(barrier, alpha, lower=400):
    """Absorbing-chain linear system for P[walk from k reaches barrier].

    Positions -lower..barrier, absorbing at both ends; the lower barrier is
    far enough that its effect is below 1e-14 for the alphas tested.
    Returns the solution for every start k in 0..barrier.
    """
    n = barrier + lower + 1
    a = np.zeros((n, n))
    b = np.zeros(n)
    for pos in range(-lower, barrier + 1):
        i = pos + lower
        if pos == barrier:
            a[i, i] = 1.0
            b[i] = 1.0
        elif pos == -lower:
            a[i, i] = 1.0
        else:
            a[i, i] = 1.0
            a[i, i + 1] = -alpha
            a[i, i - 1] = -(1.0 - alpha)
    sol = np.linalg.solve(a, b)
    return sol[lower : lower + barrier + 1]


def test_epsilon_matches_absorbing_chain_dp():
    for alpha in ALPHAS:
        for barrier in (1, 3, 10, 25, 40):
            sol = hitting_prob_dp(barrier, alpha)
            for k in range(0, barrier + 1):
                want = 1.0 if k >= barrier else sol[k]
                assert epsilon(k, barrier, alpha) == pytest.approx(want, abs=1e-12)


def test_epsilon_at_or_above_barrier_is_one():
    assert epsilon(5, 5, 0.3) == 1.0
    assert epsilon(9, 5, 0.3) == 1.0


def test_epsilon_rejects_bad_inputs():
    with pytest.raises(InfeasibleError):
        epsilon(1, 3, 0.5)
    with pytest.raises(ValueError):
        epsilon(-1, 3, 0.3)
    with pytest.raises(ValueError):
        epsilon(1, 0, 0.3)


def test_epsilon_star_exact_small_values():
    for alpha in ALPHAS:
        assert epsilon_star(0, alpha) == 1.0
        assert epsilon_star(1, alpha) == pytest.approx(alpha, abs=1e-15)
        assert epsilon_star(2, alpha) == pytest.approx(alpha, abs=1e-15)
        want3 = alpha - alpha * (1.0 - alpha) ** 2
        assert epsilon_star(3, alpha) == pytest.approx(want3, abs=1e-15)


def test_epsilon_star_parity_and_monotone():
    # the walk can only hit 0 after an odd number of steps from 1
    for m in range(1, 12):
        assert epsilon_star(2 * m, 0.3) == pytest.approx(epsilon_star(2 * m - 1, 0.3), rel=1e-13)
    values = [epsilon_star(k, 0.3) for k in range(0, 30)]
    assert all(a >= b - 1e-15 for a, b in zip(values, values[1:]))


def test_epsilon_star_path_enumeration():
    # exhaustive path sum for small k, no DP involved
    alpha = 0.35
    for k in (3, 5, 7):
        alive = 0.0
        for bits in range(1 << k):
            pos = 1
            prob = 1.0
            for step in range(k):
                up = (bits >> step) & 1
                prob *= alpha if up else 1.0 - alpha
                pos += 1 if up else -1
                if pos == 0:
                    prob = 0.0
                    break
            alive += prob
        assert epsilon_star(k, alpha) == pytest.approx(alive, abs=1e-14)


def test_epsilon_star_tail_matches_truncated_sum():
    from inertial_mining.walks import _survival_probs

    for alpha in (0.1, 0.3, 0.45):
        probs = _survival_probs(6000, alpha)
        for j in (0, 1, 5, 12):
            truncated = float(probs[j + 1 :].sum())
            assert epsilon_star_tail(j, alpha) == pytest.approx(truncated, abs=1e-9)


def test_threshold_values():
    assert selfish_threshold(0.0) == pytest.approx(1.0 / 3.0)
    assert selfish_threshold(0.5) == pytest.approx(0.25)
    assert selfish_threshold(1.0) == 0.0
    with pytest.raises(ValueError):
        selfish_threshold(1.5)


def withholding_revenue_closed_form(alpha, gamma):
    # closed-form stationary revenue of the withholding attacker
    num = alpha * (1 - alpha) ** 2 * (4 * alpha + gamma * (1 - 2 * alpha)) - alpha**3
    den = 1 - alpha * (1 + (2 - alpha) * alpha)
    return num / den


def test_selfish_revenue_matches_closed_form():
    for alpha in (0.1, 0.2, 0.25, 0.3, 0.4, 0.45):
        for gamma in (0.0, 0.5, 1.0):
            assert selfish_revenue(alpha, gamma) == pytest.approx(
                withholding_revenue_closed_form(alpha, gamma), abs=1e-9
            )


def test_selfish_revenue_equals_alpha_at_threshold():
    for gamma in (0.0, 0.25, 0.5, 0.9):
        alpha = selfish_threshold(gamma)
        if alpha == 0.0:
            continue
        assert selfish_revenue(alpha, gamma) == pytest.approx(alpha, abs=1e-9)


def test_stationary_distribution_is_proper():
    pi = selfish_stationary(0.3, 0.5)
    assert sum(pi.values()) == pytest.approx(1.0, abs=1e-12)
    assert all(v >= 0 for v in pi.values())
    rows = selfish_transition_matrix(0.3, 0.5, 64).sum(axis=1)
    assert np.allclose(rows, 1.0)


def test_revenue_insensitive_to_cap():
    assert selfish_revenue(0.45, 0.5) == pytest.approx(
        selfish_revenue(0.45, 0.5, cap=400), abs=1e-9
    )


def test_sufficient_inertia_residuals_clear():
    for alpha in ALPHAS:
        bound = sufficient_inertia(alpha)
        assert bound.feasible
        assert 1 <= bound.J < bound.I
        assert min(bound.residuals.values()) >= 0.0


def test_sufficient_inertia_smaller_inertia_violates():
    for alpha in (0.15, 0.3, 0.45):
        bound = sufficient_inertia(alpha)
        if bound.I - 1 <= bound.J:
            continue  # shrinking I breaks the J < I requirement outright
        res = inertia_residuals(alpha, bound.J, bound.I - 1)
        assert min(res.values()) < 0.0


def test_sufficient_inertia_margin_tightens():
    plain = sufficient_inertia(0.3)
    padded = sufficient_inertia(0.3, margin=0.05)
    assert padded.I >= plain.I
    assert min(padded.residuals.values()) >= 0.05


def test_sufficient_inertia_infeasible_at_half():
    with pytest.raises(InfeasibleError):
        sufficient_inertia(0.5)
    with pytest.raises(InfeasibleError):
        sufficient_inertia(0.0)

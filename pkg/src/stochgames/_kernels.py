"""JIT-compiled inner loops for the tabular learning recursions.

All randomness enters through pre-drawn uniform buffers so trajectories are
bit-reproducible and independent of the compilation backend.  Per step the
multi-player kernel consumes one draw per player (action) plus one draw
(transition); the single-player kernel always consumes three draws per step
(action, transition, cost noise).
"""

import numpy as np
from numba import njit


@njit(cache=True)
def next_state(cdf_row, draw):
    xn = 0
    last = cdf_row.shape[0] - 1
    while xn < last and draw >= cdf_row[xn]:
        xn += 1
    return xn


@njit(cache=True)
def run_phase(
    x0, T, draws,
    baseline, exp_policy,
    rho, nacts, strides,
    costs, cdf, betas, rexp,
    q, qhat, counts,
    two_tables, hat_self,
    collect, out_x, out_a,
):
    """Simulate T joint steps, updating each player's table(s) in place.

    baseline/exp_policy: (N, X) action tables; q/qhat/counts: (N, X, Umax);
    costs: (N, X, J) with J the flat joint-action code; cdf: (X, J, X).
    Visit counters give the n-th update of a cell the step size n**(-r).
    Returns the final state.
    """
    n_players = baseline.shape[0]
    acts = np.empty(n_players, dtype=np.int64)
    x = x0
    p = 0
    for t in range(T):
        j = 0
        for i in range(n_players):
            u = draws[p]
            p += 1
            if u < 1.0 - rho[i]:
                a = baseline[i, x]
            else:
                a = int((u - (1.0 - rho[i])) * nacts[i] / rho[i])
                if a >= nacts[i]:
                    a = nacts[i] - 1
            acts[i] = a
            j += a * strides[i]

        u = draws[p]
        p += 1
        xn = next_state(cdf[x, j], u)

        if collect:
            out_x[t] = x
            for i in range(n_players):
                out_a[t, i] = acts[i]

        for i in range(n_players):
            a = acts[i]
            c = costs[i, x, j]
            n = counts[i, x, a] + 1
            counts[i, x, a] = n
            alpha = n ** (-rexp[i])
            if two_tables:
                cont_b = q[i, xn, baseline[i, xn]]
                q[i, x, a] += alpha * (c + betas[i] * cont_b - q[i, x, a])
                if hat_self:
                    cont_h = qhat[i, xn, exp_policy[i, xn]]
                else:
                    cont_h = q[i, xn, exp_policy[i, xn]]
                qhat[i, x, a] += alpha * (c + betas[i] * cont_h - qhat[i, x, a])
            else:
                m = q[i, xn, 0]
                for v in range(1, nacts[i]):
                    if q[i, xn, v] < m:
                        m = q[i, xn, v]
                q[i, x, a] += alpha * (c + betas[i] * m - q[i, x, a])
        x = xn
    return x


@njit(cache=True)
def run_single(
    x0, T, draws,
    behavior_cdf, costs, cdf,
    beta, rexp,
    q, counts,
    eval_actions, policy_mode,
    noise_width,
):
    """Single-player recursion with a fixed behavior policy.

    Continuation is min over own actions, or the action of eval_actions when
    policy_mode is set.  Visit counters persist across the whole run.  The
    third draw per step feeds an optional uniform cost perturbation on
    (-noise_width, +noise_width).
    """
    n_actions = q.shape[1]
    x = x0
    p = 0
    for t in range(T):
        u = draws[p]
        p += 1
        a = next_state(behavior_cdf[x], u)

        u = draws[p]
        p += 1
        xn = next_state(cdf[x, a], u)

        u = draws[p]
        p += 1
        c = costs[x, a]
        if noise_width > 0.0:
            c += noise_width * (2.0 * u - 1.0)

        n = counts[x, a] + 1
        counts[x, a] = n
        alpha = n ** (-rexp)
        if policy_mode:
            cont = q[xn, eval_actions[xn]]
        else:
            cont = q[xn, 0]
            for v in range(1, n_actions):
                if q[xn, v] < cont:
                    cont = q[xn, v]
        q[x, a] += alpha * (c + beta * cont - q[x, a])
        x = xn
    return x

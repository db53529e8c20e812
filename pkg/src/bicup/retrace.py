"""Off-policy corrected value targets over replay snippets.

For window transitions j = 0..L-1 of one task, with target-network
quantities

    D_j = r_j + gamma * E_j - Q'(s_j, a_j)
    E_j = (1/M) sum_m Q'(s_{j+1}, a_m),  a_m ~ pi'(.|s_{j+1})   (0 if terminal)
    c_j = min(1, pi'(a_j|s_j) / b_j)

the target for step i sums importance-weighted corrections down the
window:

    target_i = sum_{j>=i} gamma^(j-i) * (prod_{k in K(i,j)} c_k) * D_j

Two trace conventions are supported. "paper_literal" starts the clipped
product at k = i, so even the j = i term is scaled by c_i.
"standard_first_step_one" (the default) uses K(i, j) = i+1..j, leaving
the first term unscaled; for a length-1 terminal window the target then
reduces to r - Q'(s, a).

The recursion form used by retrace_targets is

    G_L = 0,   G_j = c_j * (D_j + gamma * G_{j+1})

with target_i = G_i (paper_literal) or D_i + gamma * G_{i+1} (standard).
retrace_reference computes the same sums with an explicit double loop
and exists to cross-check the recursion; the CLI oracle-tests verb runs
both against each other.
"""

from dataclasses import dataclass

import numpy as np

from bicup.gated import log_prob, sample_action

TRACE_MODES = ("standard_first_step_one", "paper_literal")


@dataclass(frozen=True)
class RetraceConfig:
    gamma: float = 0.99
    trace_mode: str = "standard_first_step_one"
    expectation_samples: int = 1
    entropy_weight: float = 1e-3

    def validate(self) -> None:
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma {self.gamma} outside [0, 1)")
        if self.trace_mode not in TRACE_MODES:
            raise ValueError(f"trace_mode {self.trace_mode!r} not in {TRACE_MODES}")
        if self.expectation_samples < 1:
            raise ValueError("expectation_samples must be >= 1")
        if self.entropy_weight < 0.0:
            raise ValueError("entropy_weight must be >= 0")


def retrace_from_components(rewards, q_behavior, exp_q_next, trace, gamma,
                            trace_mode):
    """Vectorized targets from precomputed components, all (B, L)."""
    r = np.asarray(rewards, dtype=np.float64)
    d = r + gamma * np.asarray(exp_q_next, np.float64) \
        - np.asarray(q_behavior, np.float64)
    c = np.asarray(trace, dtype=np.float64)
    b, length = d.shape
    g = np.zeros((b, length + 1))
    for j in range(length - 1, -1, -1):
        g[:, j] = c[:, j] * (d[:, j] + gamma * g[:, j + 1])
    if trace_mode == "paper_literal":
        return g[:, :length].copy()
    if trace_mode == "standard_first_step_one":
        return d + gamma * g[:, 1:]
    raise ValueError(f"unknown trace_mode {trace_mode!r}")


def retrace_reference(rewards, q_behavior, exp_q_next, trace, gamma, trace_mode):
    """Same targets by explicit double-loop summation (oracle path)."""
    r = np.asarray(rewards, dtype=np.float64)
    d = r + gamma * np.asarray(exp_q_next, np.float64) \
        - np.asarray(q_behavior, np.float64)
    c = np.asarray(trace, dtype=np.float64)
    b, length = d.shape
    out = np.zeros((b, length))
    for bi in range(b):
        for i in range(length):
            total = 0.0
            for j in range(i, length):
                w = gamma ** (j - i)
                k0 = i if trace_mode == "paper_literal" else i + 1
                for k in range(k0, j + 1):
                    w *= c[bi, k]
                total += w * d[bi, j]
            out[bi, i] = total
    return out


def snippet_rows(batch_size: int, length: int):
    """Flat row indices into (B*(L+1), ...) arrays.

    sa_rows: observation rows carrying transitions (j = 0..L-1);
    next_rows: successor observation rows (j = 1..L).
    """
    base = np.arange(batch_size)[:, None] * (length + 1)
    sa_rows = (base + np.arange(length)[None, :]).ravel()
    next_rows = (base + np.arange(1, length + 1)[None, :]).ravel()
    return sa_rows, next_rows


def retrace_targets(engine, store, batch, tasks, cfg: RetraceConfig,
                    rng: np.random.Generator) -> dict:
    """Targets per task over a snippet batch, via the target networks.

    tasks must be the configured task list in reward-column order.
    Returns task_id -> (B, L) float64 targets.
    """
    cfg.validate()
    if not np.all(np.isfinite(batch.log_probs)):
        raise ValueError("snippet batch carries non-finite behavior log-probs")
    b, length = batch.batch, batch.length
    n_all = b * (length + 1)
    obs_flat = {g: np.reshape(a, (n_all,) + a.shape[2:])
                for g, a in batch.obs.items()}
    sa_rows, next_rows = snippet_rows(b, length)
    actions_flat = batch.actions.reshape(b * length, -1)
    logb = batch.log_probs.reshape(b * length)
    terminal = batch.terminal.reshape(b * length)

    policy_groups = sorted({g for t in tasks for g in t.policy_filter.enabled()})
    critic_groups = sorted({g for t in tasks for g in t.critic_filter.enabled()})
    emb_actor = engine.embed("actor", store.actor_target, obs_flat,
                             tuple(policy_groups))
    emb_critic = engine.embed("critic", store.critic_target, obs_flat,
                              tuple(critic_groups))
    emb_critic_sa = emb_critic.slice(sa_rows)
    emb_critic_next = emb_critic.slice(next_rows)

    # one shared trunk pass per distinct policy filter, heads per task
    policies = {}
    for group in engine.group_tasks(tasks, "policy"):
        pol, _ = engine.actor_apply_group(store.actor_target, emb_actor, group)
        policies.update(pol)

    # Q'(s_j, a_j): behavior actions are shared, so trunks are shared too
    q_behavior = {}
    for group in engine.group_tasks(tasks, "critic"):
        q, _ = engine.critic_apply_group(store.critic_target, emb_critic_sa,
                                         actions_flat, group)
        q_behavior.update(q)

    targets = {}
    for col, task in enumerate(tasks):
        tid = task.task_id
        pol = policies[tid]
        pol_sa = type(pol)(mean=pol.mean[sa_rows], std=pol.std[sa_rows])
        logpi = log_prob(pol_sa, actions_flat)
        trace = np.minimum(1.0, np.exp(logpi - logb))
        pol_next = type(pol)(mean=pol.mean[next_rows], std=pol.std[next_rows])
        exp_q = np.zeros(b * length)
        for _ in range(cfg.expectation_samples):
            noise = rng.standard_normal(pol_next.mean.shape).astype(
                pol_next.mean.dtype)
            a_next = sample_action(pol_next, noise)
            q_next, _ = engine.critic_apply_group(store.critic_target,
                                                  emb_critic_next, a_next, [task])
            exp_q += q_next[tid].astype(np.float64)
        exp_q /= cfg.expectation_samples
        exp_q[terminal] = 0.0
        targets[tid] = retrace_from_components(
            batch.rewards[:, :, col],
            q_behavior[tid].astype(np.float64).reshape(b, length),
            exp_q.reshape(b, length),
            trace.reshape(b, length),
            cfg.gamma, cfg.trace_mode)
    return targets

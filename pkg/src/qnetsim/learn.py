"""Stochastic policy, work-conserving masking, GAE, and the PPO trainer.

The policy maps a normalized observation to one categorical distribution
per server class over M queues plus an explicit idle option.  Pool members
sample independently from their class distribution.  All gradients are
computed by exact backpropagation through the network, the masking, and
the log-probabilities.
"""

from __future__ import annotations

import json
import logging
import math
import random
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .engine import Horizon, Observation, Simulator
from .network import NetworkSpec, TimeVarying
from .nnet import MLP, Adam, warmup_cosine_lr

log = logging.getLogger(__name__)

WC_EPS = 1e-8


class NonConvergence(RuntimeError):
    """Behavior cloning missed its cross-entropy threshold."""


# ---------------------------------------------------------------------------
# Masking and targets
# ---------------------------------------------------------------------------


def wc_mask(probs: np.ndarray, queue_lengths, eps: float = WC_EPS) -> np.ndarray:
    """Work-conserving renormalization over the queue entries.

    Returns a subdistribution over the M queues: mass on empty queues is
    removed and the remainder rescaled; the missing mass (1 - sum) is the
    implied idle probability.  With every queue empty the output is all
    zeros, i.e. idle-only.
    """
    probs = np.asarray(probs, dtype=float)
    alive = np.asarray(queue_lengths) > 0
    kept = probs * alive
    denom = max(kept.sum(), eps)
    return kept / denom


def bc_target(queue_lengths, compat: np.ndarray) -> np.ndarray:
    """Soft MaxWeight-style imitation target for one server class.

    Probability proportional to exp(Q_i) over compatible queues; the idle
    slot only receives weight when every compatible queue is empty.
    """
    q = np.asarray(queue_lengths, dtype=float)
    compat = np.asarray(compat, dtype=bool)
    m = q.shape[0]
    target = np.zeros(m + 1)
    if not compat.any():
        target[m] = 1.0
        return target
    qmax = q[compat].max()
    weights = np.where(compat, np.exp(q - qmax), 0.0)
    idle = math.exp(0.0 - qmax) if qmax == 0.0 else 0.0
    total = weights.sum() + idle
    target[:m] = weights / total
    target[m] = idle / total
    return target


# ---------------------------------------------------------------------------
# Stochastic policy
# ---------------------------------------------------------------------------

# Distribution modes, recorded per server class; they select the gradient form.
_PLAIN, _MASKED, _CLAMPED, _FORCED_IDLE = 0, 1, 2, 3


class StochasticPolicy:
    """Per-server softmax policy over queues + idle on a small MLP."""

    def __init__(
        self,
        spec: NetworkSpec,
        hidden: tuple[int, ...] = (64, 64),
        work_conserving: bool = True,
        eps: float = WC_EPS,
        seed: int = 0,
    ):
        self.spec = spec
        self.work_conserving = work_conserving
        self.eps = eps
        m, n = spec.num_queues, spec.num_servers
        self.net = MLP((m + 2, *hidden, n * (m + 1)), _init_rng(seed, 1))
        self.period = _cycle_period(spec)
        self._compat = spec.topology.astype(bool)

    @property
    def name(self) -> str:
        return "softmax-wc" if self.work_conserving else "softmax"

    def features(self, obs: Observation) -> np.ndarray:
        """Stateless normalization: Q/(1+Q) plus clock phase features."""
        q = np.asarray(obs.queue_lengths, dtype=float)
        feats = np.empty(q.shape[0] + 2)
        feats[:-2] = q / (1.0 + q)
        if self.period:
            phase = 2.0 * math.pi * obs.clock / self.period
            feats[-2] = math.sin(phase)
            feats[-1] = math.cos(phase)
        else:
            feats[-2] = 0.0
            feats[-1] = 0.0
        return feats

    def distributions(self, obs: Observation):
        """Effective per-server distributions for one observation.

        Returns (dists, cache): dists is (N, M+1) with rows summing to 1;
        cache carries what the gradient pass needs.
        """
        feats = self.features(obs)
        out, acts = self.net.forward(feats)
        logits = out.reshape(self.spec.num_servers, self.spec.num_queues + 1)
        dists, probs, modes = _effective_dists(
            logits, obs.queue_lengths, self.work_conserving, self.eps,
            self._compat,
        )
        return dists, (acts, probs, modes)

    def action(self, spec: NetworkSpec, obs: Observation, rng: random.Random):
        return sample_action(self, obs, rng).action


def _effective_dists(logits, queue_lengths, work_conserving, eps, compat=None):
    """Per-server effective distributions over M queues + idle.

    With work conservation on, each server's queue mass is restricted to its
    *compatible* nonempty queues (masking over all nonempty queues would let
    incompatible draws repair to idle and starve the server's own queues).
    A server with no compatible nonempty queue is forced to idle.
    """
    m = len(queue_lengths)
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    probs = e / e.sum(axis=1, keepdims=True)
    if not work_conserving:
        return probs, probs, [_PLAIN] * logits.shape[0]
    alive = np.asarray(queue_lengths) > 0
    dists = np.zeros_like(probs)
    modes = []
    for j in range(logits.shape[0]):
        alive_j = alive & compat[:, j] if compat is not None else alive
        if not alive_j.any():
            dists[j, m] = 1.0
            modes.append(_FORCED_IDLE)
            continue
        kept = probs[j, :m] * alive_j
        denom = kept.sum()
        if denom >= eps:
            dists[j, :m] = kept / denom
            modes.append(_MASKED)
        else:
            dists[j, :m] = kept / eps
            dists[j, m] = 1.0 - dists[j, :m].sum()
            modes.append(_CLAMPED)
    return dists, probs, modes


@dataclass
class ActionSample:
    action: list
    logp: float
    draws: tuple[tuple[int, ...], ...]  # per server class, one per pool member
    dists: np.ndarray
    cache: object = field(repr=False, default=None)


def sample_action(policy: StochasticPolicy, obs: Observation,
                  rng: random.Random) -> ActionSample:
    """Draw one queue-or-idle choice per server unit and build the action.

    Draws that violate the topology mask or exceed the number of waiting
    jobs are repaired to idle; the returned log-probability is that of the
    raw draws.
    """
    spec = policy.spec
    m, n = spec.num_queues, spec.num_servers
    dists, cache = policy.distributions(obs)
    pools = spec.pools_t
    logp = 0.0
    draws: list[tuple[int, ...]] = []
    counts = np.zeros((n, m + 1), dtype=np.int64)
    for j in range(n):
        row = dists[j]
        picks = []
        for _ in range(pools[j]):
            choice = _draw(row, rng)
            picks.append(choice)
            counts[j, choice] += 1
            logp += math.log(row[choice])
        draws.append(tuple(picks))
    action = _counts_to_action(counts, obs.queue_lengths, policy._compat, m, n)
    return ActionSample(action, logp, tuple(draws), dists, cache)


def _draw(row: np.ndarray, rng: random.Random) -> int:
    u = rng.random()
    acc = 0.0
    for i in range(row.shape[0]):
        acc += row[i]
        if u < acc:
            return i
    # Rounding leftover: fall back to the largest-index positive entry.
    for i in range(row.shape[0] - 1, -1, -1):
        if row[i] > 0.0:
            return i
    raise ValueError("cannot sample from an all-zero distribution")


def _counts_to_action(counts, queue_lengths, compat, m, n):
    action = [[0] * n for _ in range(m)]
    for i in range(m):
        budget = queue_lengths[i]
        if budget <= 0:
            continue
        for j in range(n):
            c = counts[j, i]
            if c and compat[i, j]:
                take = c if c <= budget else budget
                action[i][j] = int(take)
                budget -= take
                if budget == 0:
                    break
    return action


# ---------------------------------------------------------------------------
# Value function
# ---------------------------------------------------------------------------


class ValueFunction:
    """Scalar state-value estimate on the same normalized features."""

    def __init__(self, policy: StochasticPolicy, hidden: tuple[int, ...] = (64, 64),
                 seed: int = 0):
        self._policy = policy
        in_dim = policy.spec.num_queues + 2
        self.net = MLP((in_dim, *hidden, 1), _init_rng(seed, 2))

    def value(self, obs: Observation) -> float:
        out, _ = self.net.forward(self._policy.features(obs))
        return float(out[0])

    def values(self, feats: np.ndarray) -> np.ndarray:
        out, _ = self.net.forward(feats)
        return out[:, 0]


def _init_rng(seed: int, tag: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=(int(seed), 90, tag))
    return np.random.default_rng(ss)


def _cycle_period(spec: NetworkSpec) -> float:
    periods = [a.breaks[-1] for a in spec.arrival_specs if isinstance(a, TimeVarying)]
    return max(periods) if periods else 0.0


# ---------------------------------------------------------------------------
# Rollouts and GAE
# ---------------------------------------------------------------------------


@dataclass
class RolloutBuffer:
    features: np.ndarray          # (T+1, F) includes the terminal observation
    observations: list            # raw Observations, length T
    draws: list                   # per step: tuple of per-class draw tuples
    dists: list                   # per step: (N, M+1) rollout-time distributions
    logps: np.ndarray             # (T,)
    rewards: np.ndarray           # (T,) raw, unnormalized (-cost)
    elapsed: np.ndarray           # (T,)
    values: np.ndarray            # (T+1,) under the rollout-time value net
    empty_flags: np.ndarray       # (T,) all queues empty at the decision epoch

    def __len__(self):
        return len(self.draws)


def compute_gae(buffer: RolloutBuffer, gamma: float, lam: float,
                rewards: Optional[np.ndarray] = None) -> np.ndarray:
    """Advantages by backward recursion, reset at regeneration epochs.

    The exponentially weighted sum of TD errors is truncated at the first
    epoch at or after t where every queue is empty, keeping the estimate
    local to one regeneration cycle.
    """
    r = buffer.rewards if rewards is None else rewards
    v = buffer.values
    flags = buffer.empty_flags
    t_len = len(r)
    adv = np.zeros(t_len)
    carry = 0.0
    for t in range(t_len - 1, -1, -1):
        delta = r[t] + gamma * v[t + 1] - v[t]
        adv[t] = delta if flags[t] else delta + gamma * lam * carry
        carry = adv[t]
    return adv


def collect_rollout(
    policy: StochasticPolicy,
    value_fn: ValueFunction,
    spec: NetworkSpec,
    steps: int,
    seed: int,
    trajectory: int,
) -> RolloutBuffer:
    sim = Simulator(spec, seed, trajectory, Horizon(max_events=steps))
    obs = sim.reset()
    rng = sim.policy_rng
    feats, observations, draws, dists_all = [], [], [], []
    logps, rewards, elapsed, flags = [], [], [], []
    for _ in range(steps):
        feats.append(policy.features(obs))
        observations.append(obs)
        flags.append(all(q == 0 for q in obs.queue_lengths))
        sample = sample_action(policy, obs, rng)
        out = sim.step(sample.action)
        draws.append(sample.draws)
        dists_all.append(sample.dists)
        logps.append(sample.logp)
        rewards.append(out.reward)
        elapsed.append(out.elapsed)
        obs = out.observation
        if out.terminal:
            break
    feats.append(policy.features(obs))
    feats = np.asarray(feats)
    values = value_fn.values(feats)
    return RolloutBuffer(
        features=feats,
        observations=observations,
        draws=draws,
        dists=dists_all,
        logps=np.asarray(logps),
        rewards=np.asarray(rewards),
        elapsed=np.asarray(elapsed),
        values=values,
        empty_flags=np.asarray(flags, dtype=bool),
    )


class RunningMeanStd:
    """Streaming mean/variance (Welford); can be frozen for evaluation."""

    def __init__(self, eps: float = 1e-8):
        self.count = 0
        self.mean = 0.0
        self.m2 = 0.0
        self.eps = eps
        self.frozen = False

    @property
    def std(self) -> float:
        if self.count < 1:
            return 0.0
        return math.sqrt(self.m2 / self.count)

    def normalize_sequence(self, xs: np.ndarray) -> np.ndarray:
        """Update with each value in order, normalizing as it goes."""
        out = np.empty(len(xs), dtype=float)
        for k, x in enumerate(xs):
            if not self.frozen:
                self.count += 1
                d = x - self.mean
                self.mean += d / self.count
                self.m2 += d * (x - self.mean)
            out[k] = (x - self.mean) / (self.std + self.eps)
        return out


# ---------------------------------------------------------------------------
# PPO update
# ---------------------------------------------------------------------------


@dataclass
class PPOConfig:
    gamma: float = 0.998
    lam: float = 0.99
    clip: float = 0.2            # ratio clipping window
    kl_beta: float = 0.03        # KL(old||new) penalty weight
    policy_lr: float = 9e-4
    value_lr: float = 3e-4
    epochs: int = 3
    value_batch: int = 2500
    normalize_advantages: bool = True
    use_clip: bool = True
    use_kl: bool = True


def policy_logps(policy: StochasticPolicy, buffer: RolloutBuffer) -> tuple:
    """Log-probs of the buffer's draws under current parameters, with the
    per-step (dists, cache) pairs so a gradient pass can reuse them."""
    logps = np.empty(len(buffer))
    per_step = []
    for t, obs in enumerate(buffer.observations):
        dists, cache = policy.distributions(obs)
        per_step.append((dists, cache))
        lp = 0.0
        for j, picks in enumerate(buffer.draws[t]):
            row = dists[j]
            for choice in picks:
                p = row[choice]
                lp += math.log(p) if p > 0.0 else -math.inf
        logps[t] = lp
    return logps, per_step


def policy_gradient(
    policy: StochasticPolicy,
    buffer: RolloutBuffer,
    per_step: list,
    coef: np.ndarray,
    kl_beta: float = 0.0,
) -> tuple[np.ndarray, float]:
    """Gradient of sum_t coef_t*logp_t + kl_beta*mean_t KL(old_t||new_t).

    For softmax-derived distributions d(logp)/d(logits) per draw is
    onehot(draw) - dist, and the mask keeps that form with the masked
    distribution in place; the KL term contributes mass*new - old.
    """
    spec = policy.spec
    m, n = spec.num_queues, spec.num_servers
    pools = spec.pools_t
    t_len = len(buffer)
    grad = np.zeros(policy.net.num_params)
    total_kl = 0.0
    for t in range(t_len):
        dists, (acts, probs, modes) = per_step[t]
        dlogits = np.zeros_like(dists)
        c = coef[t]
        if c != 0.0:
            for j, picks in enumerate(buffer.draws[t]):
                if modes[j] == _FORCED_IDLE:
                    continue
                base = probs[j] if modes[j] == _CLAMPED else dists[j]
                row = np.zeros(m + 1)
                for choice in picks:
                    row[choice] += 1.0
                dlogits[j] = c * (row - pools[j] * base)
        if kl_beta > 0.0:
            q_old = buffer.dists[t]
            mask = q_old > 0.0
            safe_new = np.where(dists > 0.0, dists, 1e-300)
            total_kl += float(np.sum(np.where(
                mask, q_old * (np.log(np.where(mask, q_old, 1.0)) - np.log(safe_new)), 0.0
            )))
            for j in range(n):
                if modes[j] == _FORCED_IDLE:
                    continue
                base = probs[j] if modes[j] == _CLAMPED else dists[j]
                mass = q_old[j].sum()
                dlogits[j] += (kl_beta / t_len) * (mass * base - q_old[j])
        if dlogits.any():
            grad += policy.net.backward(acts, dlogits.reshape(-1))
    return grad, total_kl / t_len


def ppo_update(
    policy: StochasticPolicy,
    value_fn: ValueFunction,
    buffer: RolloutBuffer,
    advantages: np.ndarray,
    cfg: PPOConfig,
    policy_opt: Adam,
    value_opt: Adam,
    policy_lr: Optional[float] = None,
    value_lr: Optional[float] = None,
) -> dict:
    """Clipped-surrogate policy steps plus value regression steps.

    Runs ``cfg.epochs`` passes: the policy takes one full-batch gradient
    step per pass, the value net sweeps minibatches of ``cfg.value_batch``.
    Non-finite gradients abort the update with diagnostics.
    """
    t_len = len(buffer)
    adv = advantages.astype(float)
    if cfg.normalize_advantages:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    returns = advantages + buffer.values[:t_len]
    stats = {"aborted": False, "kl": 0.0, "clip_frac": 0.0}
    if not (np.isfinite(adv).all() and np.isfinite(returns).all()):
        stats["aborted"] = True
        stats["reason"] = "non-finite advantages or returns"
        log.warning("aborting update: non-finite advantages or returns")
        return stats
    for _ in range(cfg.epochs):
        logps, per_step = policy_logps(policy, buffer)
        ratios = np.exp(logps - buffer.logps)
        # Loss is -mean(min(r*A, clip(r)*A)) + beta*mean KL; the clipped
        # branch has zero gradient exactly when it is the active minimum.
        coef = -adv * ratios / t_len
        if cfg.use_clip:
            hi, lo = 1.0 + cfg.clip, 1.0 - cfg.clip
            inactive = ((adv > 0) & (ratios > hi)) | ((adv < 0) & (ratios < lo))
            coef = np.where(inactive, 0.0, coef)
            stats["clip_frac"] = float(inactive.mean())
        beta = cfg.kl_beta if cfg.use_kl else 0.0
        pol_grad, kl = policy_gradient(policy, buffer, per_step, coef, beta)
        stats["kl"] = kl
        if not np.isfinite(pol_grad).all():
            stats["aborted"] = True
            stats["reason"] = "non-finite policy gradient"
            log.warning("aborting update: non-finite policy gradient")
            return stats
        policy.net.set_params(
            policy_opt.step(policy.net.get_params(), pol_grad, policy_lr)
        )
        batch = max(1, min(cfg.value_batch, t_len))
        for start in range(0, t_len, batch):
            idx = slice(start, min(start + batch, t_len))
            feats = buffer.features[idx]
            out, acts = value_fn.net.forward(feats)
            err = out[:, 0] - returns[idx]
            d_out = (err / len(err))[:, None]
            v_grad = value_fn.net.backward(acts, d_out)
            if not np.isfinite(v_grad).all():
                stats["aborted"] = True
                stats["reason"] = "non-finite value gradient"
                log.warning("aborting update: non-finite value gradient")
                return stats
            value_fn.net.set_params(
                value_opt.step(value_fn.net.get_params(), v_grad, value_lr)
            )
    return stats


# ---------------------------------------------------------------------------
# Behavior cloning
# ---------------------------------------------------------------------------


def behavior_clone(
    policy: StochasticPolicy,
    spec: NetworkSpec,
    num_steps: int = 2000,
    seed: int = 0,
    lr: float = 1e-3,
    batch: int = 64,
    threshold: float = 0.25,
) -> dict:
    """Pretrain the raw softmax to imitate the exp(Q) assignment rule.

    Rolls the environment forward under the imitation target itself and
    minimizes cross-entropy on the visited states.  Non-convergence is
    reported, not fatal.
    """
    sim = Simulator(spec, seed, trajectory=0, horizon=Horizon(max_events=num_steps + 1))
    obs = sim.reset()
    rng = sim.policy_rng
    opt = Adam(policy.net.num_params, lr)
    compat = spec.topology.astype(bool)
    m, n = spec.num_queues, spec.num_servers
    feats_buf: list[np.ndarray] = []
    targets_buf: list[np.ndarray] = []
    curve: list[float] = []
    ema: Optional[float] = None
    for _ in range(num_steps):
        targets = np.stack(
            [bc_target(obs.queue_lengths, compat[:, j]) for j in range(n)]
        )
        feats_buf.append(policy.features(obs))
        targets_buf.append(targets)
        counts = np.zeros((n, m + 1), dtype=np.int64)
        for j in range(n):
            for _ in range(spec.pools_t[j]):
                counts[j, _draw(targets[j], rng)] += 1
        action = _counts_to_action(counts, obs.queue_lengths, compat, m, n)
        obs = sim.step(action).observation
        if len(feats_buf) >= batch:
            ce = _bc_step(policy, opt, np.asarray(feats_buf), np.stack(targets_buf))
            curve.append(ce)
            ema = ce if ema is None else 0.9 * ema + 0.1 * ce
            feats_buf.clear()
            targets_buf.clear()
    if feats_buf:
        ce = _bc_step(policy, opt, np.asarray(feats_buf), np.stack(targets_buf))
        curve.append(ce)
        ema = ce if ema is None else 0.9 * ema + 0.1 * ce
    converged = ema is not None and ema <= threshold
    if not converged:
        log.warning("behavior cloning did not reach CE %.3f (got %s)", threshold, ema)
    return {"converged": converged, "final_ce": ema, "curve": curve}


def _bc_step(policy: StochasticPolicy, opt: Adam, feats: np.ndarray,
             targets: np.ndarray) -> float:
    """One cross-entropy step on the raw softmax; returns the batch CE."""
    b, n, width = targets.shape
    out, acts = policy.net.forward(feats)
    logits = out.reshape(b, n, width)
    z = logits - logits.max(axis=2, keepdims=True)
    e = np.exp(z)
    probs = e / e.sum(axis=2, keepdims=True)
    ce = float(-(targets * np.log(np.maximum(probs, 1e-300))).sum() / (b * n))
    d_logits = (probs - targets) / (b * n)
    grad = policy.net.backward(acts, d_logits.reshape(b, -1))
    policy.net.set_params(opt.step(policy.net.get_params(), grad))
    return ce


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------

ALGORITHMS = ("ppo", "ppo-bc", "ppo-wc", "pg-wc")


@dataclass
class TrainResult:
    policy: StochasticPolicy
    value_fn: ValueFunction
    curve: list[tuple[int, float, float]]  # (episode, mean cost, std)
    bc_info: Optional[dict] = None


def train(
    spec: NetworkSpec,
    algorithm: str = "ppo-wc",
    episodes: int = 10,
    steps: int = 5000,
    seed: int = 0,
    actors: int = 1,
    hidden: tuple[int, ...] = (64, 64),
    cfg: Optional[PPOConfig] = None,
    use_lr_schedule: bool = True,
    bc_steps: int = 2000,
) -> TrainResult:
    """Rollout/update loop at desk scale; deterministic given the seed."""
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}; want one of {ALGORITHMS}")
    cfg = replace(cfg) if cfg is not None else PPOConfig()
    if algorithm == "pg-wc":
        cfg.use_clip = False
        cfg.use_kl = False
    work_conserving = algorithm in ("ppo-wc", "pg-wc")
    policy = StochasticPolicy(spec, hidden, work_conserving, seed=seed)
    value_fn = ValueFunction(policy, hidden, seed=seed)
    bc_info = None
    if algorithm == "ppo-bc":
        bc_info = behavior_clone(policy, spec, num_steps=bc_steps, seed=seed)
    policy_opt = Adam(policy.net.num_params, cfg.policy_lr)
    value_opt = Adam(value_fn.net.num_params, cfg.value_lr)
    reward_norm = RunningMeanStd()
    curve: list[tuple[int, float, float]] = []
    for ep in range(episodes):
        buffers = [
            collect_rollout(policy, value_fn, spec, steps, seed,
                            trajectory=(ep << 20) | a)
            for a in range(actors)
        ]
        costs = np.array([
            float(-b.rewards.sum() / max(b.elapsed.sum(), 1e-12)) for b in buffers
        ])
        curve.append((ep, float(costs.mean()), float(costs.std())))
        joined = _concat_buffers(buffers)
        norm_rewards = reward_norm.normalize_sequence(joined.rewards)
        advantages = _per_actor_gae(buffers, norm_rewards, cfg)
        plr = warmup_cosine_lr(ep, episodes, cfg.policy_lr) if use_lr_schedule else None
        vlr = warmup_cosine_lr(ep, episodes, cfg.value_lr) if use_lr_schedule else None
        ppo_update(policy, value_fn, joined, advantages, cfg,
                   policy_opt, value_opt, plr, vlr)
    return TrainResult(policy, value_fn, curve, bc_info)


def _concat_buffers(buffers: list[RolloutBuffer]) -> RolloutBuffer:
    if len(buffers) == 1:
        return buffers[0]
    return RolloutBuffer(
        features=np.concatenate([b.features[:-1] for b in buffers] +
                                [buffers[-1].features[-1:]]),
        observations=[o for b in buffers for o in b.observations],
        draws=[d for b in buffers for d in b.draws],
        dists=[d for b in buffers for d in b.dists],
        logps=np.concatenate([b.logps for b in buffers]),
        rewards=np.concatenate([b.rewards for b in buffers]),
        elapsed=np.concatenate([b.elapsed for b in buffers]),
        values=np.concatenate([b.values[:-1] for b in buffers] +
                              [buffers[-1].values[-1:]]),
        empty_flags=np.concatenate([b.empty_flags for b in buffers]),
    )


def _per_actor_gae(buffers, norm_rewards, cfg) -> np.ndarray:
    """GAE per actor on normalized rewards, concatenated in actor order."""
    out = []
    pos = 0
    for b in buffers:
        t_len = len(b)
        out.append(compute_gae(b, cfg.gamma, cfg.lam,
                               rewards=norm_rewards[pos : pos + t_len]))
        pos += t_len
    return np.concatenate(out)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

CHECKPOINT_FORMAT = "qnetsim-checkpoint"
CHECKPOINT_VERSION = 1


def save_checkpoint(path, policy: StochasticPolicy, value_fn: ValueFunction) -> None:
    record = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "work_conserving": policy.work_conserving,
        "eps": policy.eps,
        "num_queues": policy.spec.num_queues,
        "num_servers": policy.spec.num_servers,
        "policy_sizes": list(policy.net.sizes),
        "policy_params": policy.net.get_params().tolist(),
        "value_sizes": list(value_fn.net.sizes),
        "value_params": value_fn.net.get_params().tolist(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(record, fh)


def load_checkpoint(path, spec: NetworkSpec):
    with open(path, encoding="utf-8") as fh:
        record = json.load(fh)
    if record.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path} is not a {CHECKPOINT_FORMAT} file")
    if record.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {record.get('version')}")
    if record["num_queues"] != spec.num_queues or record["num_servers"] != spec.num_servers:
        raise ValueError("checkpoint network dimensions do not match the spec")
    hidden = tuple(record["policy_sizes"][1:-1])
    policy = StochasticPolicy(spec, hidden, record["work_conserving"],
                              eps=record["eps"])
    policy.net.set_params(np.asarray(record["policy_params"]))
    vhidden = tuple(record["value_sizes"][1:-1])
    value_fn = ValueFunction(policy, vhidden)
    value_fn.net.set_params(np.asarray(record["value_params"]))
    return policy, value_fn

"""From-scratch clipped PPO with GAE over rollouts from the vectorized env.

The actor is a 2-hidden-layer MLP with a tanh-squashed mean and a learned
state-independent log standard deviation; exploration draws a diagonal
Gaussian about the mean and the environment clamps to the [-1, 1] action box.
Log-probabilities are always evaluated at the pre-clamp draw, so first-epoch
importance ratios are exactly one.

All gradients are computed analytically (see nets.Mlp.backward) and applied
with Adam under a global gradient-norm clip.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .env import VecSwimEnv
from .nets import ActorCritic, Adam, clip_grad_norm
from .perf import tune_allocator

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class PpoConfig:
    gamma: float = 0.99
    lam: float = 0.95
    clip_ratio: float = 0.2
    learning_rate: float = 1e-3  # initial; see lr_schedule
    lr_schedule: str = "adaptive"  # "adaptive" (KL-targeted) or "fixed"
    desired_kl: float = 0.01
    epochs: int = 5
    minibatches: int = 4
    horizon: int = 24
    entropy_coef: float = 0.0
    value_coef: float = 1.0
    max_grad_norm: float = 1.0
    iterations: int = 600
    hidden: tuple = (128, 128)
    checkpoint_every: int = 0  # 0 = final checkpoint only

    def __post_init__(self):
        if not (0.0 < self.gamma <= 1.0 and 0.0 < self.lam <= 1.0):
            raise ValueError("gamma and lam must lie in (0, 1]")
        if not 0.0 < self.clip_ratio < 1.0:
            raise ValueError("clip_ratio must lie in (0, 1)")
        if self.horizon < 1 or self.epochs < 1 or self.minibatches < 1 or self.iterations < 1:
            raise ValueError("horizon, epochs, minibatches and iterations must be >= 1")
        if self.lr_schedule not in ("adaptive", "fixed"):
            raise ValueError("lr_schedule must be 'adaptive' or 'fixed'")
        if self.desired_kl <= 0.0:
            raise ValueError("desired_kl must be positive")


def policy_forward(ac: ActorCritic, obs):
    """Deterministic forward pass: (tanh-squashed action mean, value)."""
    obs = np.asarray(obs, dtype=ac.dtype)
    return ac.action_mean(obs), ac.value(obs)


def gaussian_log_prob(u, mean, log_std):
    """Diagonal Gaussian log density of draw(s) u, summed over action dims."""
    inv_var = np.exp(-2.0 * log_std)
    d = u - mean
    return -0.5 * np.sum(d * d * inv_var, axis=-1) - np.sum(log_std) - 0.5 * u.shape[-1] * LOG_2PI


def _sample_pre_clamp(mean, log_std, rng: np.random.Generator):
    noise = rng.standard_normal(mean.shape).astype(mean.dtype, copy=False)
    u = mean + np.exp(log_std) * noise
    return u, gaussian_log_prob(u, mean, log_std)


def sample_action(mean, log_std, rng: np.random.Generator):
    """Gaussian draw about the mean, clamped to [-1, 1]^d.

    Returns (action, log_prob); the log-probability is that of the pre-clamp
    draw.
    """
    mean = np.asarray(mean, dtype=float)
    u, logp = _sample_pre_clamp(mean, np.asarray(log_std, dtype=float), rng)
    return np.clip(u, -1.0, 1.0), logp


def compute_gae(rewards, values, dones, bootstrap_values, gamma: float, lam: float):
    """Generalized advantage estimation over (n_envs, horizon) arrays.

    delta_t = r_t + gamma V_{t+1} (1 - done_t) - V_t,
    A_t = delta_t + gamma lam (1 - done_t) A_{t+1}; done flags cut the
    bootstrap across episode boundaries. Returns (advantages, returns) with
    returns = advantages + values.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    not_done = 1.0 - np.asarray(dones, dtype=np.float64)
    horizon = rewards.shape[-1]
    adv = np.zeros_like(rewards)
    carry = np.zeros(rewards.shape[:-1])
    next_value = np.asarray(bootstrap_values, dtype=np.float64)
    for t in range(horizon - 1, -1, -1):
        delta = rewards[..., t] + gamma * next_value * not_done[..., t] - values[..., t]
        carry = delta + gamma * lam * not_done[..., t] * carry
        adv[..., t] = carry
        next_value = values[..., t]
    return adv, adv + values


class RolloutBuffer:
    """On-policy storage, (n_envs, horizon) per field, filled step by step."""

    def __init__(self, n_envs: int, horizon: int, obs_dim: int, act_dim: int, dtype=np.float32):
        self.n_envs = n_envs
        self.horizon = horizon
        self.obs = np.zeros((n_envs, horizon, obs_dim), dtype=dtype)
        self.actions = np.zeros((n_envs, horizon, act_dim), dtype=dtype)  # pre-clamp draws
        self.means = np.zeros((n_envs, horizon, act_dim), dtype=dtype)
        self.log_probs = np.zeros((n_envs, horizon), dtype=dtype)
        self.rewards = np.zeros((n_envs, horizon), dtype=dtype)
        self.values = np.zeros((n_envs, horizon), dtype=dtype)
        self.dones = np.zeros((n_envs, horizon), dtype=dtype)
        self.step = 0

    def add(self, obs, actions, means, log_probs, rewards, values, dones):
        t = self.step
        if t >= self.horizon:
            raise ValueError("rollout buffer is full")
        self.obs[:, t] = obs
        self.actions[:, t] = actions
        self.means[:, t] = means
        self.log_probs[:, t] = log_probs
        self.rewards[:, t] = rewards
        self.values[:, t] = values
        self.dones[:, t] = dones
        self.step = t + 1

    def flat(self):
        m = self.n_envs * self.horizon
        return (
            self.obs.reshape(m, -1),
            self.actions.reshape(m, -1),
            self.means.reshape(m, -1),
            self.log_probs.reshape(m),
        )


def ppo_loss_and_grads(
    ac: ActorCritic, obs, actions, old_log_probs, advantages, returns, cfg: PpoConfig,
    old_means=None, old_log_std=None,
):
    """Clipped-surrogate PPO loss and analytic gradients on one minibatch.

    Returns (stats, grads) with grads ordered like ac.named_parameters().
    Advantages are expected to be normalized already. When the rollout-time
    means and log-std are given, the stats include the mean analytic KL of
    the policy change (used by the adaptive learning-rate schedule).
    """
    m = obs.shape[0]
    eps = cfg.clip_ratio

    actor_cache: list = []
    z_out = ac.actor.forward(obs, actor_cache)
    mean = np.tanh(z_out)
    inv_var = np.exp(-2.0 * ac.log_std)
    diff = actions - mean
    log_probs = -0.5 * np.sum(diff * diff * inv_var, axis=-1) - np.sum(ac.log_std) - 0.5 * ac.act_dim * LOG_2PI

    ratio = np.exp(log_probs - old_log_probs)
    s1 = ratio * advantages
    s2 = np.clip(ratio, 1.0 - eps, 1.0 + eps) * advantages
    policy_loss = -float(np.mean(np.minimum(s1, s2)))

    entropy = float(np.sum(ac.log_std) + 0.5 * ac.act_dim * (1.0 + LOG_2PI))

    critic_cache: list = []
    v = ac.critic.forward(obs, critic_cache)[:, 0]
    v_err = v - returns
    value_loss = float(np.mean(v_err * v_err))

    total = policy_loss + cfg.value_coef * value_loss - cfg.entropy_coef * entropy

    # --- backward ---
    take_raw = (s1 <= s2).astype(obs.dtype)
    inside = ((ratio > 1.0 - eps) & (ratio < 1.0 + eps)).astype(obs.dtype)
    dratio = -(advantages * (take_raw + (1.0 - take_raw) * inside)) / m
    dlogp = dratio * ratio

    dmean = dlogp[:, None] * (diff * inv_var)
    dz_out = dmean * (1.0 - mean * mean)
    actor_dw, actor_db = ac.actor.backward(actor_cache, dz_out)

    dlog_std = np.sum(dlogp[:, None] * (diff * diff * inv_var - 1.0), axis=0)
    dlog_std -= cfg.entropy_coef  # entropy bonus gradient, per component

    dv = (cfg.value_coef * 2.0 / m) * v_err
    critic_dw, critic_db = ac.critic.backward(critic_cache, dv[:, None])

    grads = []
    for dw, db in zip(actor_dw, actor_db):
        grads.extend([dw, db])
    for dw, db in zip(critic_dw, critic_db):
        grads.extend([dw, db])
    grads.append(dlog_std.astype(ac.log_std.dtype, copy=False))

    stats = {
        "loss": total,
        "policy_loss": policy_loss,
        "value_loss": value_loss,
        "entropy": entropy,
        "clip_frac": float(np.mean(np.abs(ratio - 1.0) > eps)),
        "mean_ratio": float(np.mean(ratio)),
    }
    if old_means is not None and old_log_std is not None:
        # KL(old || new) of the diagonal Gaussians, per sample, mean over
        # batch; written with expm1 so small divergences survive float32
        d_ls = ac.log_std - old_log_std
        mu_term = (old_means - mean) ** 2 * inv_var
        kl = np.sum(d_ls + 0.5 * np.expm1(-2.0 * d_ls) + 0.5 * mu_term, axis=-1)
        stats["kl"] = float(np.mean(kl))
    return stats, grads


def ppo_update(ac: ActorCritic, optimizer: Adam, batch: dict, cfg: PpoConfig, rng: np.random.Generator):
    """Run the configured epochs of minibatch updates on one rollout.

    ``batch`` holds flat arrays obs, actions, means, log_probs, advantages,
    returns. Advantages are normalized here (zero mean, unit variance, sigma
    floor 1e-8). Under the adaptive schedule the learning rate is retuned per
    minibatch toward the desired KL, exactly like the reference on-policy
    framework. A non-finite loss aborts the update and reports it in the
    stats.
    """
    adv = np.asarray(batch["advantages"], dtype=np.float64)
    adv = (adv - adv.mean()) / max(float(adv.std()), 1e-8)
    adv = adv.astype(ac.dtype)
    obs = batch["obs"].astype(ac.dtype, copy=False)
    actions = batch["actions"].astype(ac.dtype, copy=False)
    old_logp = batch["log_probs"].astype(ac.dtype, copy=False)
    returns = np.asarray(batch["returns"]).astype(ac.dtype, copy=False)
    old_means = batch.get("means")
    if old_means is not None:
        old_means = old_means.astype(ac.dtype, copy=False)
    old_log_std = ac.log_std.copy()

    m = obs.shape[0]
    agg: dict = {}
    count = 0
    for _ in range(cfg.epochs):
        perm = rng.permutation(m)
        for chunk in np.array_split(perm, cfg.minibatches):
            stats, grads = ppo_loss_and_grads(
                ac, obs[chunk], actions[chunk], old_logp[chunk], adv[chunk], returns[chunk], cfg,
                None if old_means is None else old_means[chunk], old_log_std,
            )
            if not np.isfinite(stats["loss"]):
                out = {k: v / max(count, 1) for k, v in agg.items()}
                out["aborted"] = True
                out["abort_reason"] = "non-finite loss"
                return out
            if cfg.lr_schedule == "adaptive" and "kl" in stats:
                # KL-targeted retuning, capped at the configured initial rate:
                # raising it above that destabilizes the squashed-mean policy
                kl = stats["kl"]
                if kl > cfg.desired_kl * 2.0:
                    optimizer.lr = max(1e-5, optimizer.lr / 1.5)
                elif 0.0 < kl < cfg.desired_kl / 2.0:
                    optimizer.lr = min(cfg.learning_rate, optimizer.lr * 1.5)
            stats["lr"] = optimizer.lr
            stats["grad_norm"] = clip_grad_norm(grads, cfg.max_grad_norm)
            optimizer.step(grads)
            count += 1
            for k, v in stats.items():
                agg[k] = agg.get(k, 0.0) + v
    return {k: v / count for k, v in agg.items()}


@dataclass
class TrainResult:
    policy: ActorCritic
    log_rows: list = field(default_factory=list)
    diverged_total: int = 0


LOG_COLUMNS = [
    "iteration",
    "wall_s",
    "env_steps",
    "norm_mean_reward",
    "policy_loss",
    "value_loss",
    "entropy",
    "clip_frac",
]


def train(
    env: VecSwimEnv,
    cfg: PpoConfig,
    seed: int = 0,
    checkpoint_fn=None,
    progress_fn=None,
) -> TrainResult:
    """Collect-rollout / GAE / update loop; fully reproducible given the seed.

    ``checkpoint_fn(iteration, policy)`` is invoked at the configured cadence
    and once at the end; ``progress_fn(row)`` sees each log row. Environment
    divergences are counted as diagnostics, never raised.
    """
    tune_allocator()
    seeds = np.random.SeedSequence(seed).spawn(3)
    ac = ActorCritic(hidden=cfg.hidden, rng=np.random.Generator(np.random.PCG64(seeds[0])))
    noise_rng = np.random.Generator(np.random.PCG64(seeds[1]))
    shuffle_rng = np.random.Generator(np.random.PCG64(seeds[2]))
    optimizer = Adam(ac.parameters(), lr=cfg.learning_rate)

    n = env.n_envs
    buf = RolloutBuffer(n, cfg.horizon, env.observe_all().shape[1], ac.act_dim)
    result = TrainResult(policy=ac)

    obs = env.observe_all().astype(ac.dtype)
    norm_mean_reward = 0.0
    t0 = time.perf_counter()
    env_steps = 0

    for it in range(1, cfg.iterations + 1):
        buf.step = 0
        completed: list = []
        for _ in range(cfg.horizon):
            mean = ac.action_mean(obs)
            value = ac.value(obs)
            u, logp = _sample_pre_clamp(mean, ac.log_std, noise_rng)
            next_obs, rewards, dones, info = env.step(np.clip(u, -1.0, 1.0).astype(np.float64))
            buf.add(obs, u, mean, logp, rewards, value, dones)
            obs = next_obs.astype(ac.dtype)
            env_steps += n
            result.diverged_total += info["diverged"]
            if info["completed_norm_returns"].size:
                completed.append(info["completed_norm_returns"])

        bootstrap = ac.value(obs)
        adv, ret = compute_gae(buf.rewards, buf.values, buf.dones, bootstrap, cfg.gamma, cfg.lam)
        flat_obs, flat_actions, flat_means, flat_logp = buf.flat()
        stats = ppo_update(
            ac,
            optimizer,
            {
                "obs": flat_obs,
                "actions": flat_actions,
                "means": flat_means,
                "log_probs": flat_logp,
                "advantages": adv.reshape(-1),
                "returns": ret.reshape(-1),
            },
            cfg,
            shuffle_rng,
        )

        if completed:
            norm_mean_reward = float(np.mean(np.concatenate(completed)))
        row = {
            "iteration": it,
            "wall_s": time.perf_counter() - t0,
            "env_steps": env_steps,
            "norm_mean_reward": norm_mean_reward,
            "policy_loss": stats.get("policy_loss", float("nan")),
            "value_loss": stats.get("value_loss", float("nan")),
            "entropy": stats.get("entropy", float("nan")),
            "clip_frac": stats.get("clip_frac", float("nan")),
        }
        result.log_rows.append(row)
        if progress_fn is not None:
            progress_fn(row)
        if checkpoint_fn is not None and cfg.checkpoint_every and it % cfg.checkpoint_every == 0:
            checkpoint_fn(it, ac)

    if checkpoint_fn is not None:
        checkpoint_fn(cfg.iterations, ac)
    return result

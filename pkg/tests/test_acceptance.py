"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to watch progress. Criterion 1
trains the full default configuration for three seeds and is by far the
slowest part; criteria 2-4 evaluate the seed-0 policy on the shipped
scenarios. Wall-clock budgets stated for an 8-core desktop are scaled by
8/cpu_count() when fewer cores are available.
"""

import os
import time
from pathlib import Path

import numpy as np
import pytest
from dataclasses import replace

from auvpilot import so3
from auvpilot.bench import run_benchmark, trajectory_digest
from auvpilot.checkpoint import load_checkpoint, save_checkpoint
from auvpilot.config import load_scenario, parse_run_config
from auvpilot.dynamics import BatchParams, BodyState, batch_substep, coriolis_wrench, step_dynamics
from auvpilot.env import EnvConfig, RandomizationSpec, VecSwimEnv, randomize_params
from auvpilot.evaluate import run_scenario
from auvpilot.nets import ActorCritic
from auvpilot.ppo import PpoConfig, compute_gae, gaussian_log_prob, ppo_loss_and_grads, train

from test_ppo import gae_brute_force

REPO = Path(__file__).resolve().parents[1]
SCENARIOS = REPO / "scenarios"

REFERENCE_CORES = 8
TRAIN_BUDGET_S = 900.0


def wall_budget() -> float:
    cores = os.cpu_count() or 1
    return TRAIN_BUDGET_S * max(1.0, REFERENCE_CORES / cores)


def report(name: str, passed: bool, detail: str):
    print(f"\n[{'PASS' if passed else 'FAIL'}] {name}: {detail}", flush=True)
    assert passed, f"{name}: {detail}"


def moving_average(x, k):
    x = np.asarray(x, dtype=float)
    return np.convolve(x, np.ones(k) / k, mode="valid")


@pytest.fixture(scope="session")
def run_cfg():
    return parse_run_config({})


@pytest.fixture(scope="session")
def training_runs(run_cfg, tmp_path_factory):
    """Full default-config training for three seeds."""
    out = tmp_path_factory.mktemp("acceptance_train")
    runs = []
    for seed in (0, 1, 2):
        env = VecSwimEnv(run_cfg.vehicle, run_cfg.env, seed=seed, workers=run_cfg.workers)
        result = train(env, run_cfg.ppo, seed=seed)
        env.close()
        ckpt = out / f"policy_seed{seed}.ckpt"
        save_checkpoint(ckpt, result.policy)
        runs.append({"seed": seed, "rows": result.log_rows, "checkpoint": ckpt, "policy": result.policy})
    return runs


@pytest.fixture(scope="session")
def policy_seed0(training_runs):
    return training_runs[0]["policy"]


class TestCriterion1TrainingConvergence:
    def test_training_convergence_three_seeds(self, training_runs, run_cfg):
        budget = wall_budget()
        details = []
        ok = True
        for run in training_runs:
            rewards = np.array([r["norm_mean_reward"] for r in run["rows"]])
            walls = np.array([r["wall_s"] for r in run["rows"]])

            reached = np.where(rewards >= 0.85)[0]
            hit = reached.size > 0 and walls[reached[0]] <= budget

            plateau = float(np.mean(rewards[-50:]))
            outside = np.abs(rewards - plateau) > 0.05
            settle = int(np.max(np.where(outside)[0]) + 1) if outside.any() else 0
            stays = settle <= int(0.9 * len(rewards))

            half = len(rewards) // 2
            ma = moving_average(rewards[:half], 5)
            monotone = bool(np.all(np.diff(ma) >= -0.01))

            seed_ok = hit and stays and monotone
            ok = ok and seed_ok
            details.append(
                f"seed {run['seed']}: peak {rewards.max():.3f}, plateau {plateau:.3f}, "
                f"reach-0.85 at {'never' if not reached.size else f'{walls[reached[0]]:.0f}s'}, "
                f"budget {budget:.0f}s, within-plateau {stays}, monotone-first-half {monotone}"
            )
        report("criterion 1 (training convergence, 3 seeds)", ok, "; ".join(details))


class TestCriterion2VelocityTracking:
    def test_straight_line_nominal(self, policy_seed0, run_cfg):
        scenario = load_scenario(SCENARIOS / "straight_line.json")
        t0 = time.perf_counter()
        _, summary = run_scenario(
            policy_seed0, run_cfg.vehicle, scenario,
            dt_physics=run_cfg.env.dt_physics, decimation=run_cfg.env.decimation, z_max=run_cfg.env.z_max,
        )
        wall = time.perf_counter() - t0
        rms = summary["rms_ve_ms"]
        att = summary["mean_att_err_deg"]
        ok = all(v < 0.05 for v in rms) and att < 5.0 and wall < 10.0
        report(
            "criterion 2 (straight-line velocity tracking)", ok,
            f"rms v_e {[round(v, 4) for v in rms]} m/s (< 0.05), mean attitude error {att:.2f} deg (< 5), "
            f"eval wall {wall:.1f}s",
        )


class TestCriterion3BallastRobustness:
    def test_ballast_square_zero_shot(self, policy_seed0, run_cfg):
        scenario = load_scenario(SCENARIOS / "ballast.json")
        _, summary = run_scenario(
            policy_seed0, run_cfg.vehicle, scenario,
            dt_physics=run_cfg.env.dt_physics, decimation=run_cfg.env.decimation, z_max=run_cfg.env.z_max,
        )
        rms = summary["rms_ve_ms"]
        att = summary["mean_att_err_deg"]
        ok = all(v < 0.08 for v in rms) and att < 8.0
        report(
            "criterion 3 (ballast robustness, zero-shot)", ok,
            f"rms v_e {[round(v, 4) for v in rms]} m/s (< 0.08), mean attitude error {att:.2f} deg (< 8)",
        )


class TestCriterion4AgileAttitude:
    def test_random_orientation_square(self, policy_seed0, run_cfg):
        scenario = load_scenario(SCENARIOS / "random_orientation.json")
        _, summary = run_scenario(
            policy_seed0, run_cfg.vehicle, scenario,
            dt_physics=run_cfg.env.dt_physics, decimation=run_cfg.env.decimation, z_max=run_cfg.env.z_max,
        )
        att_at_switch = summary["att_err_at_switch_deg"]
        cross = summary["max_cross_track_m"]
        ok = (
            summary["completed"]
            and len(att_at_switch) >= 3
            and all(a < 10.0 for a in att_at_switch)
            and cross < 1.0
        )
        report(
            "criterion 4 (agile attitude on square path)", ok,
            f"attitude error at switches {[round(a, 1) for a in att_at_switch]} deg (< 10), "
            f"max cross-track {cross:.2f} m (< 1.0), completed={summary['completed']}",
        )


class TestCriterion5PhysicsProperties:
    def test_physics_property_suite(self, default_params):
        rng = np.random.default_rng(2027)

        worst_coriolis = 0.0
        for _ in range(1000):
            a = rng.normal(size=(6, 6))
            m = a @ a.T + 0.5 * np.eye(6)
            nu = rng.normal(size=6)
            worst_coriolis = max(worst_coriolis, abs(nu @ coriolis_wrench(m, nu)))

        n = 500
        params = []
        for _ in range(n):
            p = randomize_params(default_params, RandomizationSpec(), rng)
            params.append(replace(p, buoyancy=p.weight))
        bp = BatchParams.from_params(params)
        q = so3.random_unit_quat(rng, n)
        v = rng.normal(0, 0.5, (n, 3))
        w = rng.normal(0, 0.5, (n, 3))
        pos = np.zeros((n, 3))
        tau = np.zeros((n, 6))

        def energy():
            nu = np.concatenate([v, w], axis=1)
            kin = 0.5 * np.einsum("ni,nij,nj->n", nu, bp.m, nu)
            return kin + bp.buoyancy * so3.rotate_vector(q, bp.r_cb)[:, 2]

        e = energy()
        passive = True
        drift = 0.0
        for _ in range(500):
            batch_substep(bp, q, v, w, pos, tau, 0.01)
            e2 = energy()
            passive = passive and bool(np.all(e2 - e <= 1e-6 * np.maximum(np.abs(e), 1.0)))
            drift = max(drift, float(np.abs(np.linalg.norm(q, axis=1) - 1.0).max()))
            e = e2

        p_eq = replace(default_params, buoyancy=default_params.weight)
        a_cmd = np.array([0.5, 0.2, -0.3, 0.1, -0.05, 0.08])

        def rollout(dt):
            state = BodyState()
            for _ in range(int(round(5.0 / dt))):
                state = step_dynamics(state, a_cmd, p_eq, dt)
            return np.concatenate([state.q, state.nu, state.p])

        ref = rollout(0.04 / 64)
        e1 = np.linalg.norm(rollout(0.04) - ref)
        e2_ = np.linalg.norm(rollout(0.02) - ref)
        e3 = np.linalg.norm(rollout(0.01) - ref)
        first_order = 1.6 < e1 / e2_ < 2.6 and 1.6 < e2_ / e3 < 2.6

        ok = worst_coriolis <= 1e-10 and passive and drift <= 1e-9 and first_order
        report(
            "criterion 5 (physics property suite)", ok,
            f"coriolis worklessness {worst_coriolis:.2e} (<= 1e-10), passivity {passive} (500 draws, 5 s), "
            f"quat norm drift {drift:.2e} (<= 1e-9), dt-halving ratios {e1/e2_:.2f},{e2_/e3:.2f} (first order)",
        )


class TestCriterion6OptimizerOracles:
    def test_estimator_and_gradient_oracles(self, tmp_path):
        rng = np.random.default_rng(31)
        worst_gae = 0.0
        for _ in range(1000):
            n, horizon = 2, int(rng.integers(1, 17))
            r = rng.standard_normal((n, horizon))
            v = rng.standard_normal((n, horizon))
            d = (rng.random((n, horizon)) < 0.25).astype(float)
            boot = rng.standard_normal(n)
            adv, _ = compute_gae(r, v, d, boot, 0.99, 0.95)
            worst_gae = max(worst_gae, float(np.abs(adv - gae_brute_force(r, v, d, boot, 0.99, 0.95)).max()))

        worst_grad = 0.0
        cfg = PpoConfig()
        for seed in range(3):
            g_rng = np.random.default_rng(seed)
            ac = ActorCritic(obs_dim=4, act_dim=2, hidden=(1,), rng=g_rng, dtype=np.float64)
            ac.log_std[...] = g_rng.normal(0, 0.3, 2)
            m = 12
            obs = g_rng.standard_normal((m, 4))
            u = g_rng.standard_normal((m, 2)) * 0.5
            old_logp = gaussian_log_prob(u, ac.action_mean(obs), ac.log_std) + g_rng.normal(0, 0.2, m)
            adv = g_rng.standard_normal(m)
            ret = g_rng.standard_normal(m)

            def loss():
                s, _ = ppo_loss_and_grads(ac, obs, u, old_logp, adv, ret, cfg)
                return s["loss"]

            _, grads = ppo_loss_and_grads(ac, obs, u, old_logp, adv, ret, cfg)
            eps = 1e-6
            for p, g in zip(ac.parameters(), grads):
                it = np.nditer(p, flags=["multi_index"])
                for _ in it:
                    ix = it.multi_index
                    orig = p[ix]
                    p[ix] = orig + eps
                    up = loss()
                    p[ix] = orig - eps
                    down = loss()
                    p[ix] = orig
                    fd = (up - down) / (2 * eps)
                    worst_grad = max(worst_grad, abs(fd - g[ix]) / max(abs(fd), abs(float(g[ix])), 1e-8))

        ac = ActorCritic(rng=np.random.default_rng(5))
        path = tmp_path / "rt.ckpt"
        save_checkpoint(path, ac, "h")
        loaded, _ = load_checkpoint(path)
        bit_identical = all(
            np.array_equal(p1, p2)
            for (_, p1), (_, p2) in zip(ac.named_parameters(), loaded.named_parameters())
        )

        ok = worst_gae <= 1e-10 and worst_grad <= 1e-4 and bit_identical
        report(
            "criterion 6 (optimizer/estimator oracles)", ok,
            f"GAE vs brute force {worst_gae:.2e} (<= 1e-10, 1000 instances), "
            f"gradients vs finite differences {worst_grad:.2e} (<= 1e-4), "
            f"checkpoint round-trip bit-identical {bit_identical}",
        )


class TestCriterion7RandomizationDistributions:
    def test_distribution_checks(self, default_params):
        rng = np.random.default_rng(404)
        spec = RandomizationSpec()
        n = 100_000
        mass_f = np.empty(n)
        buoy_f = np.empty(n)
        offsets = np.empty((n, 3))
        for i in range(n):
            p = randomize_params(default_params, spec, rng)
            mass_f[i] = p.mass / default_params.mass
            buoy_f[i] = p.buoyancy / default_params.buoyancy
            offsets[i] = p.r_cb - default_params.r_cb

        def uniform_ok(x, lo, hi):
            mid_ok = abs(x.mean() - (lo + hi) / 2) < 0.01 * (lo + hi) / 2
            return x.min() >= lo and x.max() <= hi and mid_ok

        mass_ok = uniform_ok(mass_f, *spec.mass_factor)
        buoy_ok = uniform_ok(buoy_f, *spec.buoyancy_factor)

        r = np.sort(np.linalg.norm(offsets, axis=1)) / spec.cb_offset_radius
        empirical = np.arange(1, n + 1) / n
        ks = float(np.max(np.abs(empirical - r**3)))

        ok = mass_ok and buoy_ok and ks <= 0.01
        report(
            "criterion 7 (randomization distributions)", ok,
            f"mass uniform {mass_ok}, buoyancy uniform {buoy_ok}, CB-offset radial KS {ks:.4f} (<= 0.01)",
        )


class TestCriterion8Throughput:
    def test_throughput_and_worker_determinism(self, default_params):
        cfg = EnvConfig(n_envs=2048)
        result = run_benchmark(default_params, cfg, seed=0, workers=1, min_seconds=3.0)
        rate = result["env_steps_per_s"]

        digest_cfg = EnvConfig(n_envs=256)
        digests = {trajectory_digest(default_params, digest_cfg, seed=0, workers=w, steps=40) for w in (1, 4)}

        ok = rate >= 100_000 and len(digests) == 1
        report(
            "criterion 8 (throughput and determinism)", ok,
            f"{rate/1e3:.0f}k env-steps/s at 2048 envs (>= 100k), "
            f"worker-count bit-determinism {'ok' if len(digests) == 1 else 'BROKEN'}",
        )

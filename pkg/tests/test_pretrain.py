import numpy as np
import pytest

from fedabr.env import EnvConfig, StreamEnv
from fedabr.net import TrainHyper, forward, init_params, params_close
from fedabr.pretrain import (PretrainConfig, default_arch, fine_tune_step,
                             make_freeze_mask, offline_train)
from tests.conftest import constant_trace

LADDER4 = (300.0, 750.0, 1200.0, 1850.0)


class TestFreezeMask:
    def test_none_frozen(self):
        mask = make_freeze_mask(2, 0)
        assert mask.trainable == (True, True, True, True)

    def test_default_arch_one_frozen(self):
        mask = make_freeze_mask(2, 1)
        assert mask.trainable == (False, True, True, True)

    def test_cannot_freeze_everything(self):
        with pytest.raises(ValueError):
            make_freeze_mask(2, 4)
        with pytest.raises(ValueError):
            make_freeze_mask(2, 3)  # would freeze a head


class TestOfflineTrain:
    def test_zero_epochs_is_init(self, small_env_config):
        cfg = PretrainConfig(epochs=0, seed=4)
        params, rewards = offline_train([constant_trace()], cfg, small_env_config)
        expected = init_params(default_arch(small_env_config.state_dim),
                               len(small_env_config.ladder), seed=4)
        assert params_close(params, expected)
        assert rewards == []

    def test_deterministic(self):
        ec = EnvConfig(ladder=LADDER4, episode_len=20)
        cfg = PretrainConfig(epochs=3, episodes_per_epoch=2, seed=8)
        _, r1 = offline_train([constant_trace()], cfg, ec)
        _, r2 = offline_train([constant_trace()], cfg, ec)
        assert r1 == r2

    def test_empty_trace_set(self):
        with pytest.raises(ValueError):
            offline_train([], PretrainConfig(epochs=1))

    @pytest.mark.slow
    def test_learns_best_sustainable_rate(self):
        # Bitrate-favoring weights on a constant 1000 kbps link: the greedy
        # policy should settle on 750 kbps, the highest rung under capacity.
        ec = EnvConfig(ladder=LADDER4, episode_len=50)
        hyper = TrainHyper(lr=1e-3, entropy_coef=0.05, value_coef=0.1, clip_norm=10.0)
        cfg = PretrainConfig(epochs=150, episodes_per_epoch=2, hyper=hyper, seed=1)
        trace = constant_trace(1000.0)
        params, rewards = offline_train([trace], cfg, ec)

        env = StreamEnv(trace, ec)
        state = env.reset()
        best = []
        while not env.done:
            probs, _ = forward(params, state)
            action = int(np.argmax(probs))
            best.append(ec.ladder[action] == 750.0)
            state, _, _ = env.step(action)
        assert np.mean(best) >= 0.9
        # Reward non-degradation: last tenth of training beats the first tenth.
        tenth = max(1, len(rewards) // 10)
        assert np.mean(rewards[-tenth:]) >= np.mean(rewards[:tenth])


class TestFineTune:
    def _setup(self):
        ec = EnvConfig(ladder=LADDER4, episode_len=40)
        params = init_params(default_arch(ec.state_dim), len(ec.ladder), seed=2)
        env = StreamEnv(constant_trace(1000.0), ec)
        return ec, params, env

    def test_freeze_invariance_through_long_tuning(self):
        ec, params, env = self._setup()
        mask = make_freeze_mask(params.n_hidden, 1)
        hyper = TrainHyper(rollout_len=8)
        rng = np.random.default_rng(0)
        frozen_w = params.weights[0].copy()
        tuned = params
        state = env.reset()
        for step in range(100):
            if env.done:
                state = env.reset()
            tuned, state = fine_tune_step(tuned, env, mask, hyper, rng, state)
        assert np.array_equal(tuned.weights[0], frozen_w)
        assert not params_close(tuned, params)  # upper layers did move

    def test_all_trainable_equals_plain_step(self):
        from fedabr.net import all_trainable
        ec, params, env = self._setup()
        hyper = TrainHyper(rollout_len=8)
        mask = all_trainable(params)

        out1, _ = fine_tune_step(params, env, mask, hyper,
                                 np.random.default_rng(3), env.reset())
        env2 = StreamEnv(env.trace, ec)
        from fedabr.pretrain import collect_rollout
        from fedabr.net import a3c_gradients, apply_update
        state = env2.reset()
        traj, _ = collect_rollout(env2, params, state, hyper.rollout_len,
                                  np.random.default_rng(3))
        grads, _ = a3c_gradients(params, traj, hyper)
        out2 = apply_update(params, grads, hyper.lr, mask)
        assert params_close(out1, out2)

import numpy as np
import pytest

from dqnsched.agent import AgentConfig, compute_targets, make_agent, select_action
from dqnsched.mdp import LEFT, RIGHT, Transition, encode, make_env
from dqnsched.network import NetworkParams, OptimizerState, apply_update, batch_td_gradient, clone_params, forward
from dqnsched.schedules import ScheduleConfig, ScheduleState
from oracles import binomial_within


def hyper(gamma=0.9, alpha=0.1, eps=0.3):
    return ScheduleState(gamma, alpha, eps, config=ScheduleConfig(gamma0=gamma, gamma_cap=None, alpha0=alpha,
                                                                  eps_train0=eps))


TABULAR = AgentConfig(hidden_sizes=(), batch_size=1, target_sync=1, learn_every=1, warmup=1,
                      clip=None, optimizer="sgd")


class TestSelectAction:
    def test_greedy(self):
        assert select_action([0.1, 0.7], 0.0, np.random.default_rng(0)) == 1

    def test_tie_break(self):
        assert select_action([0.5, 0.5], 0.0, np.random.default_rng(0)) == 0

    def test_uniform_when_epsilon_one(self):
        rng = np.random.default_rng(42)
        draws = np.array([select_action([0.0, 5.0, 1.0], 1.0, rng) for _ in range(10_000)])
        for a in range(3):
            assert binomial_within(np.sum(draws == a), 10_000, 1 / 3)

    def test_epsilon_mixture(self):
        rng = np.random.default_rng(7)
        draws = np.array([select_action([0.0, 1.0], 0.3, rng) for _ in range(10_000)])
        # greedy action 1 is chosen with probability 0.7 + 0.3 / 2
        assert binomial_within(np.sum(draws == 1), 10_000, 0.85)

    def test_empty(self):
        with pytest.raises(ValueError):
            select_action([], 0.1, np.random.default_rng(0))


class TestComputeTargets:
    @pytest.fixture
    def net(self):
        rng = np.random.default_rng(0)
        return NetworkParams([rng.normal(size=(2, 4))], [rng.normal(size=2)])

    def test_terminal(self, net):
        assert compute_targets([Transition(0, 1, 1.0, 3, True)], net, 0.99)[0] == 1.0

    def test_gamma_zero(self, net):
        batch = [Transition(0, 1, 0.3, 2, False), Transition(1, 0, -0.2, 1, False)]
        np.testing.assert_array_equal(compute_targets(batch, net, 0.0), [0.3, -0.2])

    def test_zero_network(self):
        zero = NetworkParams([np.zeros((2, 4))], [np.zeros(2)])
        np.testing.assert_array_equal(compute_targets([Transition(0, 1, 0.5, 2, False)], zero, 0.9), [0.5])

    def test_bootstrap(self, net):
        q_next = forward(net, encode(2, 4))
        out = compute_targets([Transition(0, 1, 0.5, 2, False)], net, 0.9)
        assert out[0] == pytest.approx(0.5 + 0.9 * q_next.max())

    def test_array_batch_matches_list(self, net):
        batch = [Transition(0, 1, 0.5, 2, False), Transition(1, 0, 1.0, 3, True), Transition(2, 1, 0.0, 0, False)]
        cols = tuple(np.array(c) for c in zip(*batch))
        np.testing.assert_array_equal(compute_targets(cols, net, 0.7), compute_targets(batch, net, 0.7))

    def test_targets_frozen_between_syncs(self):
        env = make_env("DelayedChain", n=5)
        agent = make_agent(env, AgentConfig(batch_size=8, warmup=8, learn_every=1, target_sync=10_000),
                           hyper(alpha=0.01), seed=1)
        for _ in range(20):
            agent.train_step()
        batch = agent.memory.sample(8, np.random.default_rng(0))
        before = compute_targets(batch, agent.target_params, 0.9)
        online_before = clone_params(agent.params)
        for _ in range(30):
            agent.train_step()
        assert agent.params != online_before
        np.testing.assert_array_equal(compute_targets(batch, agent.target_params, 0.9), before)


class TestTrainStep:
    def test_sync_every_step(self):
        env = make_env("DelayedChain", n=5)
        cfg = AgentConfig(hidden_sizes=(8,), batch_size=4, warmup=4, learn_every=1, target_sync=1)
        agent = make_agent(env, cfg, hyper(), seed=0)
        for _ in range(50):
            agent.train_step()
            assert agent.target_params == agent.params

    def test_learning_disabled(self):
        env = make_env("DelayedChain", n=5)
        agent = make_agent(env, AgentConfig(learn_every=None, warmup=1, batch_size=1), hyper(), seed=0)
        before = clone_params(agent.params)
        logs = [agent.train_step() for _ in range(200)]
        assert agent.params == before
        assert agent.memory.fill == 200
        assert not any(log.learned for log in logs)

    def test_steps_counted_and_deterministic(self):
        env = make_env("SlipperyGrid", width=3, height=3, p_slip=0.2)

        def run():
            agent = make_agent(env, AgentConfig(hidden_sizes=(6,), warmup=16, batch_size=16), hyper(), seed=3)
            actions = [agent.train_step().action for _ in range(300)]
            return agent, actions

        a1, acts1 = run()
        a2, acts2 = run()
        assert a1.steps_done == 300
        assert acts1 == acts2 and a1.params == a2.params

    def test_tabular_update_touches_one_entry(self):
        env = make_env("DelayedChain", n=4)
        agent = make_agent(env, TABULAR, hyper(gamma=0.9, alpha=0.1, eps=0.0), seed=5)
        w = agent.params.weights[0]
        w[...] = np.random.default_rng(1).normal(size=w.shape)
        agent.sync_target()
        agent.invalidate_cache()
        s = agent.current_state
        q = forward(agent.params, encode(s, 4))
        a = int(np.argmax(q))
        o = env.transition[s][a][0]
        target = o.reward if o.terminal else o.reward + 0.9 * forward(agent.target_params, encode(o.next_state, 4)).max()
        delta = target - q[a]
        w_before, b_before = w.copy(), agent.params.biases[0].copy()
        log = agent.train_step()
        assert log.learned and (log.state, log.action) == (s, a)
        diff = agent.params.weights[0] - w_before
        expected = np.zeros_like(diff)
        expected[a, s] = 0.1 * delta
        np.testing.assert_allclose(diff, expected, rtol=1e-12, atol=1e-15)
        # the shared bias of the selected action moves by the same amount
        assert agent.params.biases[0][a] - b_before[a] == pytest.approx(0.1 * delta)

    def test_learn_applies_batch_mean(self):
        env = make_env("DelayedChain", n=6)
        cfg = AgentConfig(hidden_sizes=(5,), batch_size=8, warmup=8, learn_every=None, optimizer="sgd", clip=1.0)
        agent = make_agent(env, cfg, hyper(gamma=0.9, alpha=0.05), seed=2)
        for _ in range(40):
            agent.train_step()
        rng_state = agent.replay_rng.bit_generator.state
        expected = clone_params(agent.params)
        probe = np.random.default_rng()
        probe.bit_generator.state = rng_state
        s, a, r, s2, term = agent.memory.sample_arrays(8, probe)
        targets = compute_targets((s, a, r, s2, term), agent.target_params, 0.9)
        per_example = [batch_td_gradient(expected, encode(si, 6)[None, :], [ai], [ti], 1.0)[0]
                       for si, ai, ti in zip(s, a, targets)]
        mean = NetworkParams(
            [np.mean([g.weights[k] for g in per_example], axis=0) for k in range(2)],
            [np.mean([g.biases[k] for g in per_example], axis=0) for k in range(2)],
        )
        apply_update(expected, mean, 0.05, OptimizerState("sgd"))
        agent.learn()
        for x, y in zip(agent.params.arrays(), expected.arrays()):
            np.testing.assert_allclose(x, y, rtol=1e-12, atol=1e-15)

    def test_horizon_cap_is_not_terminal(self):
        env = make_env("DelayedChain", n=5)
        agent = make_agent(env, AgentConfig(learn_every=None), hyper(eps=0.0), seed=0, horizon=3)
        # force LEFT everywhere so only the cap ends episodes
        agent.params.biases[-1][...] = [1.0, 0.0]
        agent.invalidate_cache()
        logs = [agent.train_step() for _ in range(9)]
        assert [log.episode_done for log in logs] == [False, False, True] * 3
        assert all(log.action == LEFT and not log.terminal for log in logs)
        assert all(not t.terminal for t in agent.memory.contents())
        assert agent.current_state == env.start_state

    def test_episode_reset_on_terminal(self):
        env = make_env("DelayedChain", n=3)
        agent = make_agent(env, AgentConfig(learn_every=None), hyper(eps=0.0), seed=0)
        agent.params.biases[-1][...] = [0.0, 1.0]
        agent.invalidate_cache()
        logs = [agent.train_step() for _ in range(4)]
        assert [log.action for log in logs] == [RIGHT] * 4
        assert [log.episode_return for log in logs] == [None, 1.0, None, 1.0]
        assert agent.memory.contents()[1].terminal

"""Baselines sharing the same substrate: D3G-style QSS learning and behavior cloning.

The D3G agent bootstraps its state-pair critics through its own proposal
network, the mechanism that overestimates badly on purely offline data. Its
per-step Q monitor records that divergence instead of aborting on large
values, so the failure is observable in the metrics. Behavior cloning is
plain action regression and ignores rewards entirely.
"""

from dataclasses import asdict

import numpy as np

from . import nn
from .nn import AdamState, Mlp, adam_step, polyak_update

D3G_NET_ORDER = ("critic_1", "critic_2", "target_1", "target_2",
                 "prediction", "prediction_target", "actor", "forward_model")


def mse_regression_step(net, adam_state, inputs, targets):
    """One Adam step on the mean squared (summed per row) error."""
    n = inputs.shape[0]
    pred, cache = net.forward_cache(inputs)
    err = pred - targets
    loss = float(np.mean(np.sum(err * err, axis=1)))
    if not np.isfinite(loss):
        raise ValueError("non-finite regression loss")
    grad = net.backward_cached(cache, (2.0 / n) * err)
    adam_step(net, adam_state, grad)
    return loss


class D3gAgent:
    """QSS learner with proposal-driven bootstrapping (no value net, no weighting)."""

    def __init__(self, obs_dim, act_dim, action_bound, gamma=0.99,
                 rho_polyak=0.005, hidden_dims=(256, 256), learning_rate=3e-4,
                 seed=0):
        self.obs_dim = int(obs_dim)
        self.act_dim = int(act_dim)
        self.action_bound = float(action_bound)
        self.gamma = float(gamma)
        self.rho_polyak = float(rho_polyak)
        self.hidden_dims = tuple(int(h) for h in hidden_dims)
        self.learning_rate = float(learning_rate)
        self.seed = int(seed)
        rng = np.random.default_rng(seed)
        h = list(self.hidden_dims)
        self.critic_1 = Mlp([2 * obs_dim, *h, 1], rng=rng)
        self.critic_2 = Mlp([2 * obs_dim, *h, 1], rng=rng)
        self.target_1 = self.critic_1.copy()
        self.target_2 = self.critic_2.copy()
        self.prediction = Mlp([obs_dim, *h, obs_dim], rng=rng)
        self.prediction_target = self.prediction.copy()
        self.actor = Mlp([2 * obs_dim, *h, act_dim], output_activation="tanh",
                         output_scale=action_bound, rng=rng)
        self.forward_model = Mlp([obs_dim + act_dim, *h, obs_dim], rng=rng)
        self.adam = {name: AdamState(getattr(self, name), learning_rate)
                     for name in ("critic_1", "critic_2", "prediction",
                                  "actor", "forward_model")}

    def update_critic(self, batch):
        """Bootstrap both critics through the target proposal net, then Polyak.

        The Q monitor (mean_q / max_q) tracks the target-critic values the
        bootstrap consumes; it never aborts on large magnitudes.
        """
        n = len(batch)
        s_hat = self.prediction_target.forward(batch.s_next)
        pair_next = np.hstack([batch.s_next, s_hat])
        q1 = self.target_1.forward(pair_next)[:, 0]
        q2 = self.target_2.forward(pair_next)[:, 0]
        q_next = np.minimum(q1, q2)
        y = batch.r + self.gamma * (1.0 - batch.done) * q_next
        if not np.isfinite(y).all():
            raise ValueError("non-finite critic target")
        pair = np.hstack([batch.s, batch.s_next])
        losses = []
        for name in ("critic_1", "critic_2"):
            net = getattr(self, name)
            q, cache = net.forward_cache(pair)
            u = q[:, 0] - y
            losses.append(float(np.mean(u * u)))
            grad = net.backward_cached(cache, (2.0 / n) * u[:, None])
            adam_step(net, self.adam[name], grad)
        polyak_update(self.target_1, self.critic_1, self.rho_polyak)
        polyak_update(self.target_2, self.critic_2, self.rho_polyak)
        return {"loss_q": float(np.mean(losses)),
                "mean_q": float(q_next.mean()),
                "max_q": float(np.abs(q_next).max())}

    def update_actor(self, batch):
        """Unweighted imitation of dataset actions by the inverse model."""
        pair = np.hstack([batch.s, batch.s_next])
        loss = mse_regression_step(self.actor, self.adam["actor"], pair, batch.a)
        return {"loss_actor": loss}

    def update_forward(self, batch):
        inp = np.hstack([batch.s, batch.a])
        loss = mse_regression_step(self.forward_model, self.adam["forward_model"],
                                   inp, batch.s_next)
        return {"loss_fwd": loss}

    def update_prediction(self, batch):
        """Push proposals toward high-Q states under a reachability anchor.

        Loss: -Q1(s, s_f) + ||s_hat - s_f||^2 with s_hat = prediction(s) and
        s_f = forward(s, actor(s, s_hat)). Only the proposal net's parameters
        move; critic, actor and forward model pass gradients through.
        """
        n = len(batch)
        s_hat, m_cache = self.prediction.forward_cache(batch.s)
        a_prop, i_cache = self.actor.forward_cache(np.hstack([batch.s, s_hat]))
        s_f, f_cache = self.forward_model.forward_cache(
            np.hstack([batch.s, a_prop]))
        q, q_cache = self.critic_1.forward_cache(np.hstack([batch.s, s_f]))
        diff = s_hat - s_f
        loss = float(np.mean(-q[:, 0] + np.sum(diff * diff, axis=1)))
        if not np.isfinite(loss):
            raise ValueError("non-finite prediction loss")
        g_q_in = self.critic_1.input_backward_cached(
            q_cache, np.full((n, 1), -1.0 / n))
        g_sf = g_q_in[:, self.obs_dim:] + (-2.0 / n) * diff
        g_fwd_in = self.forward_model.input_backward_cached(f_cache, g_sf)
        g_act_in = self.actor.input_backward_cached(
            i_cache, g_fwd_in[:, self.obs_dim:])
        g_s_hat = g_act_in[:, self.obs_dim:] + (2.0 / n) * diff
        grad = self.prediction.backward_cached(m_cache, g_s_hat)
        adam_step(self.prediction, self.adam["prediction"], grad)
        polyak_update(self.prediction_target, self.prediction, self.rho_polyak)
        return {"loss_pred": loss}

    def act(self, obs):
        obs = np.asarray(obs, dtype=np.float64)
        s_hat = self.prediction.forward(obs[None, :])
        action = self.actor.forward(np.hstack([obs[None, :], s_hat]))
        return action[0]

    def train_step(self, batch):
        stats = {}
        stats.update(self.update_critic(batch))
        stats.update(self.update_actor(batch))
        stats.update(self.update_forward(batch))
        stats.update(self.update_prediction(batch))
        return stats

    def architecture(self):
        return {"agent": "d3g", "obs_dim": self.obs_dim, "act_dim": self.act_dim,
                "action_bound": self.action_bound, "gamma": self.gamma,
                "rho_polyak": self.rho_polyak,
                "hidden_dims": list(self.hidden_dims),
                "learning_rate": self.learning_rate,
                "networks": [getattr(self, name).describe()
                             for name in D3G_NET_ORDER]}

    def save(self, path, step=0):
        nets = [getattr(self, name) for name in D3G_NET_ORDER]
        nn.save_checkpoint(path, nets, self.architecture(), self.seed, step)

    @classmethod
    def load(cls, path):
        header, flat = nn.load_checkpoint(path)
        arch = header["architecture"]
        if arch.get("agent") != "d3g":
            raise ValueError(f"checkpoint holds a {arch.get('agent')!r} agent")
        agent = cls(arch["obs_dim"], arch["act_dim"], arch["action_bound"],
                    gamma=arch["gamma"], rho_polyak=arch["rho_polyak"],
                    hidden_dims=arch["hidden_dims"],
                    learning_rate=arch["learning_rate"], seed=header["seed"])
        i = 0
        for name in D3G_NET_ORDER:
            net = getattr(agent, name)
            net.set_flat(flat[i:i + net.n_params])
            i += net.n_params
        if i != flat.size:
            raise ValueError("checkpoint payload does not match architecture")
        return agent, header["step"]


class BcAgent:
    """Behavior cloning: direct state-to-action regression, reward-blind."""

    def __init__(self, obs_dim, act_dim, action_bound, hidden_dims=(256, 256),
                 learning_rate=3e-4, seed=0):
        self.obs_dim = int(obs_dim)
        self.act_dim = int(act_dim)
        self.action_bound = float(action_bound)
        self.hidden_dims = tuple(int(h) for h in hidden_dims)
        self.learning_rate = float(learning_rate)
        self.seed = int(seed)
        rng = np.random.default_rng(seed)
        self.policy = Mlp([obs_dim, *list(self.hidden_dims), act_dim],
                          output_activation="tanh", output_scale=action_bound,
                          rng=rng)
        self.adam = {"policy": AdamState(self.policy, learning_rate)}

    def update(self, batch):
        loss = mse_regression_step(self.policy, self.adam["policy"],
                                   batch.s, batch.a)
        return {"loss_actor": loss}

    def act(self, obs):
        return self.policy.forward(np.asarray(obs, dtype=np.float64))

    def train_step(self, batch):
        return self.update(batch)

    def architecture(self):
        return {"agent": "bc", "obs_dim": self.obs_dim, "act_dim": self.act_dim,
                "action_bound": self.action_bound,
                "hidden_dims": list(self.hidden_dims),
                "learning_rate": self.learning_rate,
                "networks": [self.policy.describe()]}

    def save(self, path, step=0):
        nn.save_checkpoint(path, [self.policy], self.architecture(),
                           self.seed, step)

    @classmethod
    def load(cls, path):
        header, flat = nn.load_checkpoint(path)
        arch = header["architecture"]
        if arch.get("agent") != "bc":
            raise ValueError(f"checkpoint holds a {arch.get('agent')!r} agent")
        agent = cls(arch["obs_dim"], arch["act_dim"], arch["action_bound"],
                    hidden_dims=arch["hidden_dims"],
                    learning_rate=arch["learning_rate"], seed=header["seed"])
        agent.policy.set_flat(flat)
        return agent, header["step"]

"""State-advantage-weighted QSS agent.

Values attach to state transitions rather than actions: double critics score
(s, s') pairs, a value net V(s) is fit by expectile regression against the
target critics, and acting decomposes into proposing a next state and
inverting it into an action. The proposal and the inverse-dynamics actor are
both trained by regression weighted with exp(beta * advantage), where the
advantage is Q(s, s') - V(s).

Gradient-flow boundaries: bootstrap targets, advantages and regression
weights are always computed without gradients. The proposal loss
backpropagates through the frozen actor, forward-model and value graphs into
the proposal net only.
"""

from dataclasses import dataclass, asdict

import numpy as np

from . import nn
from .nn import AdamState, Mlp, adam_step, polyak_update

# exp argument cap; exp(700) is finite in float64 so the weight clip below
# still applies exactly.
_EXP_ARG_MAX = 700.0

CHECKPOINT_NET_ORDER = ("value", "critic_1", "critic_2", "target_1", "target_2",
                        "forward_model", "prediction", "actor")


def expectile_loss(u, tau):
    """Asymmetric squared error |tau - 1(u < 0)| * u^2."""
    u = np.asarray(u, dtype=np.float64)
    return np.abs(tau - (u < 0.0)) * u * u


def expectile_weight(u, tau):
    return np.where(np.asarray(u) < 0.0, 1.0 - tau, tau)


@dataclass
class SawHyper:
    """Agent hyperparameters; defaults follow the standard configuration."""

    beta: float = 5.0
    tau_expectile: float = 0.7
    gamma: float = 0.99
    rho_polyak: float = 0.005
    use_alpha_normalization: bool = True
    alpha_fixed: float = 1.0
    weight_clip: float = 100.0
    critic_loss: str = "mse"  # "mse" (default) or "expectile", kept for study

    def __post_init__(self):
        if self.beta < 0.0:
            raise ValueError("beta must be non-negative")
        if not 0.0 < self.tau_expectile < 1.0:
            raise ValueError("tau_expectile must be in (0, 1)")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must be in (0, 1)")
        if not 0.0 < self.rho_polyak <= 1.0:
            raise ValueError("rho_polyak must be in (0, 1]")
        if self.weight_clip <= 0.0:
            raise ValueError("weight_clip must be positive")
        if self.critic_loss not in ("mse", "expectile"):
            raise ValueError("critic_loss must be 'mse' or 'expectile'")


class SawAgent:
    """All learned functions plus their optimizer states.

    Networks: value V(s), double critics Q(s, s') with Polyak targets,
    forward model F(s, a) -> s', proposal model M(s) -> s', and the
    inverse-dynamics actor I(s, s') -> a with a tanh-bounded head.
    """

    def __init__(self, obs_dim, act_dim, action_bound, hyper=None,
                 hidden_dims=(256, 256), learning_rate=3e-4, seed=0):
        self.obs_dim = int(obs_dim)
        self.act_dim = int(act_dim)
        self.action_bound = float(action_bound)
        self.hyper = hyper if hyper is not None else SawHyper()
        self.hidden_dims = tuple(int(h) for h in hidden_dims)
        self.learning_rate = float(learning_rate)
        self.seed = int(seed)
        rng = np.random.default_rng(seed)
        h = list(self.hidden_dims)
        self.value = Mlp([obs_dim, *h, 1], rng=rng)
        self.critic_1 = Mlp([2 * obs_dim, *h, 1], rng=rng)
        self.critic_2 = Mlp([2 * obs_dim, *h, 1], rng=rng)
        self.target_1 = self.critic_1.copy()
        self.target_2 = self.critic_2.copy()
        self.forward_model = Mlp([obs_dim + act_dim, *h, obs_dim], rng=rng)
        self.prediction = Mlp([obs_dim, *h, obs_dim], rng=rng)
        self.actor = Mlp([2 * obs_dim, *h, act_dim], output_activation="tanh",
                         output_scale=action_bound, rng=rng)
        self.adam = {name: AdamState(getattr(self, name), learning_rate)
                     for name in ("value", "critic_1", "critic_2", "forward_model",
                                  "prediction", "actor")}

    # -- helpers ----------------------------------------------------------

    def _pair(self, s, s_next):
        return np.hstack([s, s_next])

    def _target_q(self, pair):
        """Pessimistic target value: min over the two target critics."""
        q1 = self.target_1.forward(pair)[:, 0]
        q2 = self.target_2.forward(pair)[:, 0]
        return np.minimum(q1, q2)

    def state_advantage(self, s, s_next):
        """A(s, s') = min target Q(s, s') - V(s), no gradients."""
        s = np.asarray(s, dtype=np.float64)
        s_next = np.asarray(s_next, dtype=np.float64)
        single = s.ndim == 1
        s2d = np.atleast_2d(s)
        n2d = np.atleast_2d(s_next)
        adv = self._target_q(self._pair(s2d, n2d)) - self.value.forward(s2d)[:, 0]
        return float(adv[0]) if single else adv

    def _clipped_weights(self, adv):
        arg = np.minimum(self.hyper.beta * adv, _EXP_ARG_MAX)
        return np.minimum(np.exp(arg), self.hyper.weight_clip)

    # -- per-model updates -------------------------------------------------

    def update_value(self, batch):
        """Expectile regression of V(s) toward the target critics."""
        n = len(batch)
        q = self._target_q(self._pair(batch.s, batch.s_next))
        v, cache = self.value.forward_cache(batch.s)
        u = q - v[:, 0]
        w = expectile_weight(u, self.hyper.tau_expectile)
        loss = float(np.mean(w * u * u))
        if not np.isfinite(loss):
            raise ValueError("non-finite value loss")
        upstream = (-2.0 * w * u / n)[:, None]
        grad = self.value.backward_cached(cache, upstream)
        adam_step(self.value, self.adam["value"], grad)
        return {"loss_v": loss, "mean_q": float(q.mean()),
                "max_q": float(np.abs(q).max())}

    def update_critics(self, batch):
        """Regress both critics to r + gamma * (1 - d) * V(s'), then Polyak targets."""
        n = len(batch)
        v_next = self.value.forward(batch.s_next)[:, 0]
        y = batch.r + self.hyper.gamma * (1.0 - batch.done) * v_next
        if not np.isfinite(y).all():
            raise ValueError("non-finite critic target")
        pair = self._pair(batch.s, batch.s_next)
        losses = []
        for name in ("critic_1", "critic_2"):
            net = getattr(self, name)
            q, cache = net.forward_cache(pair)
            u = y - q[:, 0]
            if self.hyper.critic_loss == "expectile":
                w = expectile_weight(u, self.hyper.tau_expectile)
            else:
                w = 1.0
            losses.append(float(np.mean(w * u * u)))
            upstream = (-2.0 * w * u / n)[:, None]
            grad = net.backward_cached(cache, upstream)
            adam_step(net, self.adam[name], grad)
        polyak_update(self.target_1, self.critic_1, self.hyper.rho_polyak)
        polyak_update(self.target_2, self.critic_2, self.hyper.rho_polyak)
        return {"loss_q": float(np.mean(losses))}

    def update_actor(self, batch):
        """Advantage-weighted imitation of dataset actions by I(s, s')."""
        n = len(batch)
        adv = self.state_advantage(batch.s, batch.s_next)
        w = self._clipped_weights(adv)
        if not np.isfinite(w).all():
            raise ValueError("non-finite actor weights")
        pair = self._pair(batch.s, batch.s_next)
        pred, cache = self.actor.forward_cache(pair)
        err = pred - batch.a
        loss = float(np.mean(w * np.sum(err * err, axis=1)))
        upstream = (2.0 / n) * w[:, None] * err
        grad = self.actor.backward_cached(cache, upstream)
        adam_step(self.actor, self.adam["actor"], grad)
        return {"loss_actor": loss}

    def update_forward(self, batch):
        """Supervised next-state regression for the forward model."""
        n = len(batch)
        inp = np.hstack([batch.s, batch.a])
        pred, cache = self.forward_model.forward_cache(inp)
        err = pred - batch.s_next
        loss = float(np.mean(np.sum(err * err, axis=1)))
        if not np.isfinite(loss):
            raise ValueError("non-finite forward-model loss")
        grad = self.forward_model.backward_cached(cache, (2.0 / n) * err)
        adam_step(self.forward_model, self.adam["forward_model"], grad)
        return {"loss_fwd": loss}

    def update_prediction(self, batch):
        """Weighted consistency plus value-seeking update of the proposal net.

        Proposal s_hat = M(s) is pushed so F(s, I(s, s_hat)) both tracks the
        dataset next state (weighted by exp(beta * A)) and climbs V. Only M's
        parameters move; gradients pass through the actor, forward model and
        value net.
        """
        n = len(batch)
        pair = self._pair(batch.s, batch.s_next)
        q1 = self.target_1.forward(pair)[:, 0]
        q2 = self.target_2.forward(pair)[:, 0]
        adv = np.minimum(q1, q2) - self.value.forward(batch.s)[:, 0]
        w = self._clipped_weights(adv)
        if self.hyper.use_alpha_normalization:
            denom = float(np.abs(q1).sum())
            if denom == 0.0:
                raise ValueError("degenerate critic: cannot normalize alpha")
            alpha = n / denom
        else:
            alpha = self.hyper.alpha_fixed
        s_hat, m_cache = self.prediction.forward_cache(batch.s)
        a_prop, i_cache = self.actor.forward_cache(self._pair(batch.s, s_hat))
        s_f, f_cache = self.forward_model.forward_cache(np.hstack([batch.s, a_prop]))
        v_f, v_cache = self.value.forward_cache(s_f)
        err = batch.s_next - s_f
        loss = float(np.mean(w * np.sum(err * err, axis=1) - alpha * v_f[:, 0]))
        if not np.isfinite(loss):
            raise ValueError("non-finite prediction loss")
        g_sf = (-2.0 / n) * w[:, None] * err
        g_sf += self.value.input_backward_cached(
            v_cache, np.full((n, 1), -alpha / n))
        g_fwd_in = self.forward_model.input_backward_cached(f_cache, g_sf)
        g_a = g_fwd_in[:, self.obs_dim:]
        g_act_in = self.actor.input_backward_cached(i_cache, g_a)
        g_s_hat = g_act_in[:, self.obs_dim:]
        grad = self.prediction.backward_cached(m_cache, g_s_hat)
        adam_step(self.prediction, self.adam["prediction"], grad)
        return {"loss_pred": loss, "alpha": float(alpha)}

    # -- acting and the full step ------------------------------------------

    def act(self, obs):
        """Propose a next state, then invert it into a bounded action."""
        obs = np.asarray(obs, dtype=np.float64)
        s_hat = self.prediction.forward(obs[None, :])
        action = self.actor.forward(np.hstack([obs[None, :], s_hat]))
        return action[0]

    def train_step(self, batch):
        """One optimization step of every model, in the canonical order."""
        stats = {}
        stats.update(self.update_value(batch))
        stats.update(self.update_critics(batch))
        stats.update(self.update_actor(batch))
        stats.update(self.update_forward(batch))
        stats.update(self.update_prediction(batch))
        return stats

    # -- checkpointing -------------------------------------------------------

    def architecture(self):
        return {"agent": "saw", "obs_dim": self.obs_dim, "act_dim": self.act_dim,
                "action_bound": self.action_bound,
                "hidden_dims": list(self.hidden_dims),
                "learning_rate": self.learning_rate,
                "hyper": asdict(self.hyper),
                "networks": [getattr(self, name).describe()
                             for name in CHECKPOINT_NET_ORDER]}

    def save(self, path, step=0):
        nets = [getattr(self, name) for name in CHECKPOINT_NET_ORDER]
        nn.save_checkpoint(path, nets, self.architecture(), self.seed, step)

    @classmethod
    def load(cls, path):
        header, flat = nn.load_checkpoint(path)
        arch = header["architecture"]
        if arch.get("agent") != "saw":
            raise ValueError(f"checkpoint holds a {arch.get('agent')!r} agent")
        agent = cls(arch["obs_dim"], arch["act_dim"], arch["action_bound"],
                    hyper=SawHyper(**arch["hyper"]),
                    hidden_dims=arch["hidden_dims"],
                    learning_rate=arch["learning_rate"], seed=header["seed"])
        i = 0
        for name in CHECKPOINT_NET_ORDER:
            net = getattr(agent, name)
            net.set_flat(flat[i:i + net.n_params])
            i += net.n_params
        if i != flat.size:
            raise ValueError("checkpoint payload does not match architecture")
        return agent, header["step"]

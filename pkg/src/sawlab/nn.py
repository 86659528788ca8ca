"""Dense-network substrate: MLPs, hand-rolled backprop, Adam, Polyak averaging.

Everything is float64 and seed-deterministic. Networks are plain parameter
containers; gradients for the fixed loss graphs used by the agents are
assembled by the callers from ``backward_cached`` / ``input_backward_cached``,
and ``finite_difference_gradient`` provides the reference gradient the test
suite checks them against.
"""

import json

import numpy as np

OUTPUT_ACTIVATIONS = ("identity", "tanh")


class Gradient:
    """Per-layer parameter gradients, shape-matching an Mlp."""

    __slots__ = ("weights", "biases")

    def __init__(self, weights, biases):
        self.weights = weights
        self.biases = biases

    @classmethod
    def zeros_like(cls, net):
        return cls([np.zeros_like(w) for w in net.weights],
                   [np.zeros_like(b) for b in net.biases])

    def is_finite(self):
        # any inf/nan makes the running sum non-finite
        total = 0.0
        for w in self.weights:
            total += float(w.sum())
        for b in self.biases:
            total += float(b.sum())
        return bool(np.isfinite(total))

    def flat(self):
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts)


class Mlp:
    """Fully connected network with relu hidden layers.

    ``layer_dims`` is (input, hidden..., output); ``weights[k]`` has shape
    (layer_dims[k+1], layer_dims[k]). The output head is either raw
    ("identity") or ``output_scale * tanh(.)`` for bounded action heads.
    Weights are initialized uniformly in [-1/sqrt(fan_in), +1/sqrt(fan_in)].
    """

    def __init__(self, layer_dims, output_activation="identity",
                 output_scale=1.0, rng=None):
        layer_dims = [int(d) for d in layer_dims]
        if len(layer_dims) < 2 or any(d < 1 for d in layer_dims):
            raise ValueError(f"invalid layer dims {layer_dims}")
        if output_activation not in OUTPUT_ACTIVATIONS:
            raise ValueError(f"unknown output activation {output_activation!r}")
        rng = np.random.default_rng(rng)
        self.layer_dims = layer_dims
        self.output_activation = output_activation
        self.output_scale = float(output_scale)
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            self.weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
            self.biases.append(rng.uniform(-bound, bound, size=fan_out))

    @property
    def in_dim(self):
        return self.layer_dims[0]

    @property
    def out_dim(self):
        return self.layer_dims[-1]

    @property
    def n_params(self):
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def copy(self):
        dup = Mlp.__new__(Mlp)
        dup.layer_dims = list(self.layer_dims)
        dup.output_activation = self.output_activation
        dup.output_scale = self.output_scale
        dup.weights = [w.copy() for w in self.weights]
        dup.biases = [b.copy() for b in self.biases]
        return dup

    def same_architecture(self, other):
        return (self.layer_dims == other.layer_dims
                and self.output_activation == other.output_activation
                and self.output_scale == other.output_scale)

    def forward(self, x):
        """Evaluate the network; accepts a single vector or a (n, in_dim) batch."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            y, _ = self.forward_cache(x[None, :])
            return y[0]
        y, _ = self.forward_cache(x)
        return y

    def forward_cache(self, x):
        """Batched forward pass returning (output, cache) for later backprop."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ValueError(
                f"expected input of shape (n, {self.in_dim}), got {x.shape}")
        acts = [x]
        pres = []
        h = x
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w.T + b
            pres.append(z)
            if k < last:
                h = np.maximum(z, 0.0)
            elif self.output_activation == "tanh":
                h = self.output_scale * np.tanh(z)
            else:
                h = z
            acts.append(h)
        return acts[-1], (acts, pres)

    def backward(self, x, upstream):
        """Gradient of the summed batch loss w.r.t. all parameters.

        ``upstream`` is d(loss)/d(output), one row per batch row.
        """
        x = np.asarray(x, dtype=np.float64)
        upstream = np.asarray(upstream, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
            upstream = upstream[None, :] if upstream.ndim == 1 else upstream
        _, cache = self.forward_cache(x)
        return self.backward_cached(cache, upstream)

    def backward_cached(self, cache, upstream, need_input_grad=False):
        """Backprop from a forward_cache; optionally also return d(loss)/d(input)."""
        acts, pres = cache
        g = np.asarray(upstream, dtype=np.float64)
        if g.shape != acts[-1].shape:
            raise ValueError(
                f"upstream gradient shape {g.shape} does not match output "
                f"shape {acts[-1].shape}")
        if not np.isfinite(g).all():
            raise ValueError("non-finite upstream gradient")
        last = len(self.weights) - 1
        grad_w = [None] * len(self.weights)
        grad_b = [None] * len(self.biases)
        for k in range(last, -1, -1):
            gz = self._preactivation_grad(g, pres[k], k == last)
            grad_w[k] = gz.T @ acts[k]
            grad_b[k] = gz.sum(axis=0)
            if k > 0 or need_input_grad:
                g = gz @ self.weights[k]
        grad = Gradient(grad_w, grad_b)
        if need_input_grad:
            return grad, g
        return grad

    def input_backward_cached(self, cache, upstream):
        """d(loss)/d(input) only; used when this net's parameters are frozen."""
        acts, pres = cache
        g = np.asarray(upstream, dtype=np.float64)
        if g.shape != acts[-1].shape:
            raise ValueError(
                f"upstream gradient shape {g.shape} does not match output "
                f"shape {acts[-1].shape}")
        last = len(self.weights) - 1
        for k in range(last, -1, -1):
            gz = self._preactivation_grad(g, pres[k], k == last)
            g = gz @ self.weights[k]
        return g

    def _preactivation_grad(self, g, z, is_output):
        if not is_output:
            return g * (z > 0)
        if self.output_activation == "tanh":
            t = np.tanh(z)
            return g * self.output_scale * (1.0 - t * t)
        return g

    def get_flat(self):
        """All parameters as one vector: per layer, weights row-major then bias."""
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts)

    def set_flat(self, flat):
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != self.n_params:
            raise ValueError(
                f"expected {self.n_params} parameters, got {flat.size}")
        i = 0
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            self.weights[k] = flat[i:i + w.size].reshape(w.shape).copy()
            i += w.size
            self.biases[k] = flat[i:i + b.size].copy()
            i += b.size

    def describe(self):
        return {"layer_dims": list(self.layer_dims),
                "output_activation": self.output_activation,
                "output_scale": self.output_scale}

    @classmethod
    def from_description(cls, desc):
        net = cls(desc["layer_dims"], output_activation=desc["output_activation"],
                  output_scale=desc["output_scale"], rng=0)
        net.set_flat(np.zeros(net.n_params))
        return net


class AdamState:
    """Bias-corrected Adam moment buffers for one network."""

    def __init__(self, net, learning_rate=3e-4, beta1=0.9, beta2=0.999,
                 epsilon=1e-8):
        if learning_rate < 0.0:
            raise ValueError("learning rate must be non-negative")
        self.learning_rate = float(learning_rate)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.epsilon = float(epsilon)
        self.step_count = 0
        self.m_weights = [np.zeros_like(w) for w in net.weights]
        self.v_weights = [np.zeros_like(w) for w in net.weights]
        self.m_biases = [np.zeros_like(b) for b in net.biases]
        self.v_biases = [np.zeros_like(b) for b in net.biases]


def adam_step(net, state, grad):
    """One in-place Adam update of ``net``; increments ``state.step_count``."""
    if not grad.is_finite():
        raise ValueError("non-finite gradient")
    state.step_count += 1
    t = state.step_count
    lr = state.learning_rate
    b1, b2, eps = state.beta1, state.beta2, state.epsilon
    corr1 = 1.0 - b1 ** t
    corr2 = 1.0 - b2 ** t
    params = net.weights + net.biases
    grads = grad.weights + grad.biases
    ms = state.m_weights + state.m_biases
    vs = state.v_weights + state.v_biases
    for p, g, m, v in zip(params, grads, ms, vs):
        if g.shape != p.shape:
            raise ValueError(
                f"gradient shape {g.shape} does not match parameter shape {p.shape}")
        m[:] = b1 * m + (1.0 - b1) * g
        v[:] = b2 * v + (1.0 - b2) * (g * g)
        p -= lr * (m / corr1) / (np.sqrt(v / corr2) + eps)


def polyak_update(target, online, rate):
    """target <- rate * online + (1 - rate) * target, elementwise, in place."""
    if not target.same_architecture(online):
        raise ValueError("architecture mismatch between target and online nets")
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"rate must be in [0, 1], got {rate}")
    for tw, ow in zip(target.weights, online.weights):
        tw[:] = rate * ow + (1.0 - rate) * tw
    for tb, ob in zip(target.biases, online.biases):
        tb[:] = rate * ob + (1.0 - rate) * tb


def finite_difference_gradient(loss_fn, net, eps=1e-5):
    """Central-difference gradient of ``loss_fn()`` w.r.t. net's flat parameters.

    ``loss_fn`` takes no arguments and must read the current parameters of
    ``net``. This is the independent oracle the analytic gradients are
    verified against; it never shares code with backward passes.
    """
    base = net.get_flat()
    grad = np.zeros_like(base)
    probe = base.copy()
    for i in range(base.size):
        probe[i] = base[i] + eps
        net.set_flat(probe)
        hi = loss_fn()
        probe[i] = base[i] - eps
        net.set_flat(probe)
        lo = loss_fn()
        probe[i] = base[i]
        grad[i] = (hi - lo) / (2.0 * eps)
    net.set_flat(base)
    return grad


def save_checkpoint(path, nets, architecture, seed, step):
    """Write a one-line JSON header then all parameters as little-endian f64.

    Parameters are streamed per network in the given order; within each
    network, per layer, weights row-major then bias.
    """
    header = {"architecture": architecture, "seed": int(seed), "step": int(step)}
    payload = np.concatenate([net.get_flat() for net in nets]).astype("<f8")
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, separators=(",", ":")).encode("utf-8"))
        fh.write(b"\n")
        fh.write(payload.tobytes())


def load_checkpoint(path):
    """Read a checkpoint written by save_checkpoint; returns (header, flat params)."""
    with open(path, "rb") as fh:
        line = fh.readline()
        payload = fh.read()
    try:
        header = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ValueError(f"malformed checkpoint header: {exc}") from exc
    if len(payload) % 8 != 0:
        raise ValueError("checkpoint payload is not a whole number of f64 values")
    flat = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    return header, flat

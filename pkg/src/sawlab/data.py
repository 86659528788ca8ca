"""Transition storage, bit-exact serialization, batch sampling, score metric."""

import json
from dataclasses import dataclass

import numpy as np

FORMAT_VERSION = 1
_HEADER_KEYS = ("env_name", "obs_dim", "act_dim", "count", "seed", "kind", "version")


class DatasetFormatError(Exception):
    """Base class for dataset file problems."""


class HeaderError(DatasetFormatError):
    """First line is not a valid header."""


class TruncationError(DatasetFormatError):
    """Payload holds fewer records than the header declares."""


class DimensionError(DatasetFormatError):
    """Declared or actual dimensions are inconsistent."""


@dataclass
class Transition:
    """One environment step: (s, a, r, s_next, done)."""

    s: np.ndarray
    a: np.ndarray
    r: float
    s_next: np.ndarray
    done: bool

    def __eq__(self, other):
        if not isinstance(other, Transition):
            return NotImplemented
        return (np.array_equal(self.s, other.s)
                and np.array_equal(self.a, other.a)
                and self.r == other.r
                and np.array_equal(self.s_next, other.s_next)
                and self.done == other.done)


@dataclass
class Batch:
    """Stacked transitions; also behaves as a sequence of Transition."""

    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    s_next: np.ndarray
    done: np.ndarray

    def __len__(self):
        return self.s.shape[0]

    def __getitem__(self, i):
        return Transition(self.s[i], self.a[i], float(self.r[i]),
                          self.s_next[i], bool(self.done[i]))

    @classmethod
    def concatenate(cls, batches):
        return cls(*(np.concatenate([getattr(b, f) for b in batches])
                     for f in ("s", "a", "r", "s_next", "done")))


class OfflineDataset:
    """Ordered, immutable transition store with env metadata.

    Transitions are held as stacked float64 arrays; episode boundaries are
    marked by the done flag (the final episode may be truncated).
    """

    def __init__(self, env_name, obs_dim, act_dim, s, a, r, s_next, done,
                 seed=0, kind=""):
        obs_dim = int(obs_dim)
        act_dim = int(act_dim)
        if obs_dim < 1 or act_dim < 1:
            raise DimensionError(f"invalid dims obs={obs_dim} act={act_dim}")
        s = np.ascontiguousarray(s, dtype=np.float64)
        a = np.ascontiguousarray(a, dtype=np.float64)
        r = np.ascontiguousarray(r, dtype=np.float64)
        s_next = np.ascontiguousarray(s_next, dtype=np.float64)
        done = np.ascontiguousarray(done, dtype=bool)
        n = s.shape[0]
        if n < 1:
            raise ValueError("dataset must hold at least one transition")
        if s.shape != (n, obs_dim) or s_next.shape != (n, obs_dim):
            raise DimensionError("state arrays do not match obs_dim")
        if a.shape != (n, act_dim):
            raise DimensionError("action array does not match act_dim")
        if r.shape != (n,) or done.shape != (n,):
            raise DimensionError("reward/done arrays must be one per transition")
        for name, arr in (("s", s), ("a", a), ("r", r), ("s_next", s_next)):
            if not np.isfinite(arr).all():
                raise ValueError(f"non-finite values in field {name}")
        self.env_name = str(env_name)
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.seed = int(seed)
        self.kind = str(kind)
        self.s = s
        self.a = a
        self.r = r
        self.s_next = s_next
        self.done = done

    def __len__(self):
        return self.s.shape[0]

    def __getitem__(self, i):
        return Transition(self.s[i], self.a[i], float(self.r[i]),
                          self.s_next[i], bool(self.done[i]))

    def __eq__(self, other):
        if not isinstance(other, OfflineDataset):
            return NotImplemented
        return (self.env_name == other.env_name
                and self.obs_dim == other.obs_dim
                and self.act_dim == other.act_dim
                and self.seed == other.seed
                and self.kind == other.kind
                and np.array_equal(self.s, other.s)
                and np.array_equal(self.a, other.a)
                and np.array_equal(self.r, other.r)
                and np.array_equal(self.s_next, other.s_next)
                and np.array_equal(self.done, other.done))

    @classmethod
    def from_transitions(cls, env_name, obs_dim, act_dim, transitions,
                         seed=0, kind=""):
        return cls(env_name, obs_dim, act_dim,
                   np.array([t.s for t in transitions]),
                   np.array([t.a for t in transitions]),
                   np.array([t.r for t in transitions]),
                   np.array([t.s_next for t in transitions]),
                   np.array([t.done for t in transitions]),
                   seed=seed, kind=kind)

    def episode_slices(self):
        """(start, end) index pairs, split after each done flag."""
        slices = []
        start = 0
        for i, d in enumerate(self.done):
            if d:
                slices.append((start, i + 1))
                start = i + 1
        if start < len(self):
            slices.append((start, len(self)))
        return slices


def _record_dtype(obs_dim, act_dim):
    return np.dtype([("s", "<f8", (obs_dim,)),
                     ("a", "<f8", (act_dim,)),
                     ("r", "<f8"),
                     ("s_next", "<f8", (obs_dim,)),
                     ("done", "u1")])


def save(dataset, path):
    """Write the canonical binary format; equal datasets give byte-equal files."""
    header = {"env_name": dataset.env_name, "obs_dim": dataset.obs_dim,
              "act_dim": dataset.act_dim, "count": len(dataset),
              "seed": dataset.seed, "kind": dataset.kind,
              "version": FORMAT_VERSION}
    records = np.zeros(len(dataset), dtype=_record_dtype(dataset.obs_dim,
                                                         dataset.act_dim))
    records["s"] = dataset.s
    records["a"] = dataset.a
    records["r"] = dataset.r
    records["s_next"] = dataset.s_next
    records["done"] = dataset.done.astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, separators=(",", ":")).encode("utf-8"))
        fh.write(b"\n")
        fh.write(records.tobytes())


def load(path):
    """Read a dataset file; raises distinct errors for each corruption kind."""
    with open(path, "rb") as fh:
        line = fh.readline()
        payload = fh.read()
    try:
        header = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise HeaderError(f"malformed header line: {exc}") from exc
    if not isinstance(header, dict) or any(k not in header for k in _HEADER_KEYS):
        raise HeaderError(f"header missing keys; need {_HEADER_KEYS}")
    if header["version"] != FORMAT_VERSION:
        raise HeaderError(f"unsupported format version {header['version']}")
    obs_dim, act_dim, count = header["obs_dim"], header["act_dim"], header["count"]
    if not all(isinstance(v, int) for v in (obs_dim, act_dim, count)) \
            or obs_dim < 1 or act_dim < 1 or count < 1:
        raise DimensionError(
            f"invalid declared dims obs={obs_dim} act={act_dim} count={count}")
    dtype = _record_dtype(obs_dim, act_dim)
    expected = count * dtype.itemsize
    if len(payload) < expected:
        raise TruncationError(
            f"payload holds {len(payload)} bytes, header declares {expected}")
    if len(payload) > expected:
        raise DatasetFormatError(
            f"{len(payload) - expected} trailing bytes after declared records")
    records = np.frombuffer(payload, dtype=dtype)
    if not np.isin(records["done"], (0, 1)).all():
        raise DatasetFormatError("done flags must be 0 or 1")
    return OfflineDataset(header["env_name"], obs_dim, act_dim,
                          records["s"], records["a"], records["r"],
                          records["s_next"], records["done"].astype(bool),
                          seed=header["seed"], kind=header["kind"])


class BatchSampler:
    """Uniform with-replacement sampler, deterministic in its seed."""

    def __init__(self, seed, batch_size=256):
        if batch_size < 1:
            raise ValueError("batch_size must be positive")
        self.batch_size = int(batch_size)
        self.rng = np.random.default_rng(seed)

    def sample(self, dataset, n=None):
        return sample_batch(self, dataset, n)


def sample_batch(sampler, dataset, n=None):
    """Draw n transitions uniformly with replacement as a Batch."""
    if len(dataset) < 1:
        raise ValueError("cannot sample from an empty dataset")
    n = sampler.batch_size if n is None else int(n)
    if n < 1:
        raise ValueError("batch size must be at least 1")
    idx = sampler.rng.integers(0, len(dataset), size=n)
    return Batch(dataset.s[idx], dataset.a[idx], dataset.r[idx],
                 dataset.s_next[idx], dataset.done[idx])


def normalized_score(j_pi, j_r, j_e):
    """Affine rescaling: random policy -> 0, expert -> 100. Not clipped."""
    if not j_e > j_r:
        raise ValueError(f"reference max {j_e} must exceed reference min {j_r}")
    return (j_pi - j_r) / (j_e - j_r) * 100.0


def discounted_episode_returns(dataset, gamma):
    """Discounted return of each episode in dataset order."""
    returns = []
    for start, end in dataset.episode_slices():
        rewards = dataset.r[start:end]
        returns.append(float(rewards @ (gamma ** np.arange(end - start))))
    return np.array(returns)

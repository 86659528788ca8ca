import json

import numpy as np
import pytest

from sawlab import data
from sawlab.data import (BatchSampler, DatasetFormatError, DimensionError,
                         HeaderError, OfflineDataset, Transition,
                         TruncationError, normalized_score, sample_batch)


def make_dataset(n=1000, obs_dim=2, act_dim=2, seed=0, kind="medium"):
    rng = np.random.default_rng(seed)
    done = np.zeros(n, dtype=bool)
    done[rng.integers(0, n, size=max(n // 50, 1))] = True
    return OfflineDataset("toy", obs_dim, act_dim,
                          rng.normal(size=(n, obs_dim)),
                          rng.uniform(-1, 1, size=(n, act_dim)),
                          rng.normal(size=n),
                          rng.normal(size=(n, obs_dim)),
                          done, seed=seed, kind=kind)


class TestSaveLoad:
    def test_round_trip_field_by_field(self, tmp_path):
        ds = make_dataset(1000)
        path = tmp_path / "toy.ds"
        data.save(ds, path)
        loaded = data.load(path)
        assert loaded == ds
        for i in (0, 1, 499, 999):
            assert loaded[i] == ds[i]

    def test_two_saves_are_byte_identical(self, tmp_path):
        ds = make_dataset(200)
        p1, p2 = tmp_path / "a.ds", tmp_path / "b.ds"
        data.save(ds, p1)
        data.save(ds, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_truncated_payload_detected(self, tmp_path):
        ds = make_dataset(10)
        path = tmp_path / "t.ds"
        data.save(ds, path)
        blob = path.read_bytes()
        record_size = 8 * (2 + 2 + 1 + 2) + 1
        path.write_bytes(blob[:-record_size])  # drop the 10th record
        with pytest.raises(TruncationError):
            data.load(path)

    def test_malformed_header_detected(self, tmp_path):
        path = tmp_path / "m.ds"
        path.write_bytes(b"this is not json\n" + b"\x00" * 64)
        with pytest.raises(HeaderError):
            data.load(path)

    def test_missing_header_key_detected(self, tmp_path):
        path = tmp_path / "k.ds"
        path.write_bytes(json.dumps({"env_name": "x"}).encode() + b"\n")
        with pytest.raises(HeaderError):
            data.load(path)

    def test_bad_dimensions_detected(self, tmp_path):
        path = tmp_path / "d.ds"
        header = {"env_name": "x", "obs_dim": 0, "act_dim": 2, "count": 1,
                  "seed": 0, "kind": "random", "version": 1}
        path.write_bytes(json.dumps(header).encode() + b"\n" + b"\x00" * 41)
        with pytest.raises(DimensionError):
            data.load(path)

    def test_trailing_bytes_detected(self, tmp_path):
        ds = make_dataset(5)
        path = tmp_path / "x.ds"
        data.save(ds, path)
        path.write_bytes(path.read_bytes() + b"\x00")
        with pytest.raises(DatasetFormatError):
            data.load(path)

    def test_header_layout(self, tmp_path):
        ds = make_dataset(3)
        path = tmp_path / "h.ds"
        data.save(ds, path)
        with open(path, "rb") as fh:
            header = json.loads(fh.readline().decode("utf-8"))
            payload = fh.read()
        assert header == {"env_name": "toy", "obs_dim": 2, "act_dim": 2,
                          "count": 3, "seed": 0, "kind": "medium", "version": 1}
        assert len(payload) == 3 * (8 * 7 + 1)


class TestDatasetInvariants:
    def test_non_empty_required(self):
        with pytest.raises(ValueError):
            OfflineDataset("x", 2, 2, np.zeros((0, 2)), np.zeros((0, 2)),
                           np.zeros(0), np.zeros((0, 2)), np.zeros(0, dtype=bool))

    def test_shape_consistency_required(self):
        with pytest.raises(DimensionError):
            OfflineDataset("x", 2, 2, np.zeros((3, 2)), np.zeros((3, 1)),
                           np.zeros(3), np.zeros((3, 2)), np.zeros(3, dtype=bool))

    def test_finite_rewards_required(self):
        with pytest.raises(ValueError):
            OfflineDataset("x", 1, 1, np.zeros((2, 1)), np.zeros((2, 1)),
                           np.array([1.0, np.nan]), np.zeros((2, 1)),
                           np.zeros(2, dtype=bool))

    def test_episode_slices_cover_dataset(self):
        ds = make_dataset(500, seed=3)
        slices = ds.episode_slices()
        assert slices[0][0] == 0 and slices[-1][1] == len(ds)
        for (s1, e1), (s2, e2) in zip(slices, slices[1:]):
            assert e1 == s2

    def test_discounted_returns_match_hand_computation(self):
        ds = OfflineDataset("x", 1, 1, np.zeros((3, 1)), np.zeros((3, 1)),
                            np.array([1.0, 2.0, 3.0]), np.zeros((3, 1)),
                            np.array([False, True, False]))
        rets = data.discounted_episode_returns(ds, 0.5)
        assert rets == pytest.approx([1.0 + 0.5 * 2.0, 3.0])


class TestSampling:
    def test_single_transition_dataset_repeats(self):
        ds = make_dataset(1)
        sampler = BatchSampler(seed=0, batch_size=4)
        batch = sample_batch(sampler, ds, 4)
        assert len(batch) == 4
        for i in range(4):
            assert batch[i] == ds[0]

    def test_fixed_seed_reproducible(self):
        ds = make_dataset(100)
        b1 = sample_batch(BatchSampler(seed=5), ds, 64)
        b2 = sample_batch(BatchSampler(seed=5), ds, 64)
        assert np.array_equal(b1.s, b2.s) and np.array_equal(b1.a, b2.a)

    def test_uniformity_within_binomial_bounds(self):
        # 1e5 draws over 10 items: each count within 5 sigma of N*p
        ds = make_dataset(10)
        sampler = BatchSampler(seed=7)
        draws = 100_000
        batch = sample_batch(sampler, ds, draws)
        # recover indices by matching rewards (all distinct with prob 1)
        counts = np.array([(batch.r == r).sum() for r in ds.r])
        assert counts.sum() == draws
        p = 1.0 / len(ds)
        sigma = np.sqrt(draws * p * (1 - p))
        assert np.all(np.abs(counts - draws * p) < 5 * sigma)

    def test_empty_batch_rejected(self):
        ds = make_dataset(10)
        with pytest.raises(ValueError):
            sample_batch(BatchSampler(seed=0), ds, 0)


class TestNormalizedScore:
    def test_reference_anchors(self):
        assert normalized_score(-5.0, -5.0, 10.0) == 0.0
        assert normalized_score(10.0, -5.0, 10.0) == 100.0

    def test_published_reference_constants(self):
        # halfcheetah reference scores; midpoint of the range maps to 50
        j_r, j_e = -280.18, 12135.0
        j_pi = (j_r + j_e) / 2.0
        assert j_pi == pytest.approx(5927.41)
        assert normalized_score(j_pi, j_r, j_e) == pytest.approx(50.0)

    def test_strictly_increasing_and_unclipped(self):
        scores = [normalized_score(j, 0.0, 10.0) for j in (-5.0, 0.0, 5.0, 10.0, 15.0)]
        assert scores == sorted(scores)
        assert scores[0] == -50.0 and scores[-1] == 150.0

    def test_degenerate_references_rejected(self):
        with pytest.raises(ValueError):
            normalized_score(1.0, 5.0, 5.0)
        with pytest.raises(ValueError):
            normalized_score(1.0, 7.0, 5.0)


class TestTransition:
    def test_equality_is_field_wise(self):
        t1 = Transition(np.array([1.0]), np.array([2.0]), 0.5,
                        np.array([3.0]), False)
        t2 = Transition(np.array([1.0]), np.array([2.0]), 0.5,
                        np.array([3.0]), False)
        t3 = Transition(np.array([1.0]), np.array([2.0]), 0.5,
                        np.array([3.0]), True)
        assert t1 == t2 and t1 != t3

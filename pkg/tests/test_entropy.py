import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_tile
from tileuda.entropy import (
    MatchConfig,
    MatchError,
    candidate_order,
    image_entropy,
    match_with,
    select_reference,
    select_references,
    shannon_entropy,
    stable_hash,
)
from tileuda.raster import Histogram, Raster, RasterError
from tileuda.transforms import TransformSpec

HM = TransformSpec("hm")


def hist(counts):
    bins = np.zeros(256, dtype=np.int64)
    bins[: len(counts)] = counts
    return Histogram(bins)


def entropy_oracle(counts):
    total = sum(counts)
    return -sum(c / total * math.log2(c / total) for c in counts if c > 0)


def test_entropy_analytic():
    assert shannon_entropy(hist([7])) == 0.0
    assert shannon_entropy(hist([3, 3])) == 1.0
    assert shannon_entropy(hist([2, 1, 1])) == 1.5
    assert shannon_entropy(Histogram(np.ones(256, dtype=int))) == 8.0


def test_entropy_empty():
    with pytest.raises(RasterError):
        shannon_entropy(Histogram(np.zeros(256, dtype=int)))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 1000), min_size=256, max_size=256).filter(lambda c: sum(c) > 0),
       st.randoms(use_true_random=False))
def test_entropy_bounds_and_permutation(counts, rnd):
    h = shannon_entropy(Histogram(np.array(counts)))
    assert 0.0 <= h <= 8.0
    assert h == pytest.approx(entropy_oracle(counts), abs=1e-9)
    shuffled = list(counts)
    rnd.shuffle(shuffled)
    assert shannon_entropy(Histogram(np.array(shuffled))) == pytest.approx(h, abs=1e-12)


def test_image_entropy_constant():
    assert image_entropy(Raster(np.full((5, 5, 3), 0.7))) == 0.0


def test_image_entropy_is_channel_mean():
    # channel 0 constant (0 bits), channel 1 two levels (1 bit), channel 2 four levels (2 bits)
    v = np.zeros((4, 4, 3))
    v[:, :, 1] = np.array([0, 1] * 8).reshape(4, 4) / 255
    v[:, :, 2] = np.array([0, 1, 2, 3] * 4).reshape(4, 4) / 255
    assert image_entropy(Raster(v)) == pytest.approx(1.0, abs=1e-12)


def test_image_entropy_noise(rng):
    data = rng.integers(0, 256, (256, 256, 3))
    e = image_entropy(Raster(data / 255.0))
    tallies = [np.bincount(data[:, :, c].ravel(), minlength=256).tolist() for c in range(3)]
    assert e == pytest.approx(np.mean([entropy_oracle(t) for t in tallies]), abs=1e-9)
    assert e >= 7.9


# -- selection -------------------------------------------------------------------

def make_pool(rng, n, size=24):
    return [(f"s{i}", random_tile(rng, size, size)) for i in range(n)]


def test_config_validation():
    with pytest.raises(ValueError):
        MatchConfig(max_attempts=0)
    with pytest.raises(ValueError):
        MatchConfig(retention_threshold=1.5)
    with pytest.raises(ValueError):
        MatchConfig(seed=-1)


def test_self_match_accepted(rng):
    target = random_tile(rng, 24, 24)
    pool = [(f"c{i}", Raster(np.full((24, 24, 3), i / 10))) for i in range(5)] + [("self", target)]
    cfg = MatchConfig(max_attempts=len(pool), retention_threshold=1.0, seed=3)
    res, out = select_reference(target, pool, HM, cfg, target_id="t")
    assert res.reference_id == "self"
    assert res.accepted and res.retention == 1.0
    assert out == target
    order = candidate_order(len(pool), cfg, "t")
    assert res.attempts == list(order).index(len(pool) - 1) + 1


def test_threshold_zero_takes_first(rng):
    pool = make_pool(rng, 6)
    cfg = MatchConfig(retention_threshold=0.0, seed=11)
    res, _ = select_reference(random_tile(rng, 24, 24), pool, HM, cfg, target_id="x")
    assert res.attempts == 1 and res.accepted
    assert res.reference_id == pool[candidate_order(6, cfg, "x")[0]][0]


def test_constant_reference_falls_back(rng):
    target = random_tile(rng, 24, 24)
    pool = [("flat", Raster(np.full((24, 24, 3), 0.5)))]
    res, out = select_reference(target, pool, HM, MatchConfig(retention_threshold=0.5))
    assert image_entropy(out) == 0.0
    assert res.retention == 0.0
    assert not res.accepted
    assert res.attempts == 1


def test_constant_target_retention_is_one():
    target = Raster(np.full((8, 8, 3), 0.2))
    res, _ = select_reference(target, [("flat", Raster(np.full((8, 8, 3), 0.9)))], HM)
    assert res.retention == 1.0 and res.accepted


def test_fallback_is_best_examined(rng):
    target = random_tile(rng, 24, 24)
    pool = [(f"q{k}", Raster(rng.integers(0, k, (24, 24, 3)) / 255.0)) for k in (2, 4, 8, 16, 32)]
    cfg = MatchConfig(retention_threshold=1.0, seed=5)
    res, _ = select_reference(target, pool, HM, cfg)
    assert not res.accepted
    assert res.attempts == 5
    assert res.reference_id == "q32"


def test_empty_pool(rng):
    with pytest.raises(ValueError):
        select_reference(random_tile(rng), [], HM)


def test_transform_failure_names_candidate(rng):
    pool = [("wrong-size", random_tile(rng, 8, 8))]
    with pytest.raises(MatchError) as exc:
        select_reference(random_tile(rng, 16, 16), pool, TransformSpec("fda", beta=0.1))
    assert exc.value.candidate_id == "wrong-size"


def test_max_attempts_and_replacement(rng):
    order = candidate_order(10, MatchConfig(max_attempts=4), "a")
    assert len(order) == 4 and len(set(order.tolist())) == 4
    order = candidate_order(3, MatchConfig(max_attempts=25), "a")
    assert sorted(order.tolist()) == [0, 1, 2]
    with_rep = candidate_order(3, MatchConfig(max_attempts=25, sample_without_replacement=False), "a")
    assert len(with_rep) == 25


def test_stable_hash_is_fixed():
    assert stable_hash(0, "t") == stable_hash(0, "t")
    assert stable_hash(0, "t") != stable_hash(1, "t")
    assert stable_hash(0, "t") != stable_hash(0, "u")
    assert 0 <= stable_hash(2 ** 64 - 1, "x") < 2 ** 64


def test_determinism_across_threads(rng):
    pool = make_pool(rng, 12)
    targets = [(f"t{i}", random_tile(rng, 24, 24)) for i in range(10)]
    cfg = MatchConfig(retention_threshold=0.99, max_attempts=5, seed=99)
    one = select_references(targets, pool, HM, cfg, workers=1)
    many = select_references(targets, pool, HM, cfg, workers=8)
    assert [r for r, _ in one] == [r for r, _ in many]
    assert all(a.values.tobytes() == b.values.tobytes() for (_, a), (_, b) in zip(one, many))


def test_retention_sweep_monotone(rng):
    pool = make_pool(rng, 8) + [(f"flat{i}", Raster(np.full((24, 24, 3), i / 8))) for i in range(4)]
    target = random_tile(rng, 24, 24)
    cfg = MatchConfig(max_attempts=len(pool), retention_threshold=0.0, seed=1)
    retention = {}
    for cid, cand in pool:
        retention[cid] = match_with(target, cid, cand, HM, cfg)[0].retention
    previous = None
    for tau in np.linspace(0, 1, 11):
        acceptable = {c for c, r in retention.items() if r >= tau}
        if previous is not None:
            assert acceptable <= previous
        previous = acceptable
        res, _ = select_reference(target, pool, HM, MatchConfig(max_attempts=len(pool), retention_threshold=tau, seed=1))
        assert res.accepted == (res.retention >= tau)
        if res.accepted:
            assert res.reference_id in acceptable
        else:
            assert not acceptable
            assert res.retention == max(retention.values())

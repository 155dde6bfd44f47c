import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from hybrid_spkr.errors import InsufficientDataError, ValidationError
from hybrid_spkr.vq import (
    Codebook,
    DistortionCriterion,
    _assign,
    handle_empty_cell,
    lbg_train,
    quantize_distortion,
    vq_identify,
)

MSE, MAD = DistortionCriterion.MSE, DistortionCriterion.MAD


def brute_force_distortion(frames, centroids, crit):
    total = []
    for f in frames:
        best = math.inf
        for c in centroids:
            acc = 0.0
            for j in range(len(f)):
                diff = float(f[j]) - float(c[j])
                acc += diff * diff if crit is MSE else abs(diff)
            best = min(best, acc)
        total.append(best)
    return math.fsum(total)


def brute_force_two_level(points):
    """Best 2-cell partition by exhaustive enumeration."""
    best = (math.inf, None)
    n = len(points)
    for mask in range(1, 2 ** (n - 1)):
        a = points[[i for i in range(n) if mask >> i & 1]]
        b = points[[i for i in range(n) if not mask >> i & 1]]
        d = ((a - a.mean(0)) ** 2).sum() + ((b - b.mean(0)) ** 2).sum()
        if d < best[0]:
            best = (d, sorted([tuple(a.mean(0)), tuple(b.mean(0))]))
    return best


def test_four_point_example_is_global_optimum():
    pts = np.array([[0, 0], [0, 1], [10, 0], [10, 1]], dtype=float)
    d_opt, cents = brute_force_two_level(pts)
    assert cents == [(0.0, 0.5), (10.0, 0.5)]
    cb = lbg_train(pts, 1, seed=0)
    assert sorted(map(tuple, cb.centroids)) == cents
    assert cb.train_distortion == pytest.approx(d_opt / 4)


def test_single_cell_is_mean(rng):
    x = rng.standard_normal((50, 3))
    cb = lbg_train(x, 0)
    np.testing.assert_allclose(cb.centroids[0], x.mean(0), atol=1e-15)


def test_insufficient_data(rng):
    with pytest.raises(InsufficientDataError):
        lbg_train(rng.standard_normal((7, 2)), 3)


def test_bad_size_bits(rng):
    with pytest.raises(ValidationError):
        lbg_train(rng.standard_normal((7, 2)), -1)


def _within_level_monotone(cb):
    bounds = list(cb.level_starts) + [len(cb.trace)]
    for s, e in zip(bounds, bounds[1:]):
        seg = cb.trace[s:e]
        for prev, nxt in zip(seg, seg[1:]):
            if nxt > prev + 1e-12:
                return False
    return True


@pytest.mark.parametrize("seed", range(10))
def test_lloyd_monotone(seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((200, 4)) * rng.uniform(0.5, 3, 4)
    cb = lbg_train(x, 4, seed)
    assert _within_level_monotone(cb)


def test_level_distortions_nonincreasing(rng):
    x = rng.standard_normal((600, 5))
    levels = lbg_train(x, 6, 3).level_distortions()
    assert len(levels) == 7
    assert all(b <= a for a, b in zip(levels, levels[1:]))


def test_centroids_are_cell_means():
    rng = np.random.default_rng(4)
    centers = rng.uniform(-20, 20, (8, 3))
    x = np.concatenate([c + 0.1 * rng.standard_normal((40, 3)) for c in centers])
    cb = lbg_train(x, 3, seed=1)
    idx, _ = _assign(x, cb.centroids)
    for j in range(cb.size):
        np.testing.assert_allclose(cb.centroids[j], x[idx == j].mean(0), atol=1e-9)


def test_trained_centroids_distinct(rng):
    cb = lbg_train(rng.standard_normal((300, 12)), 5)
    assert len({c.tobytes() for c in cb.centroids}) == 32


def test_duplicate_heavy_data_fills_all_cells():
    # 3 distinct values, many duplicates: splitting yields empty cells that must be re-seeded
    x = np.repeat(np.array([[0.0], [1.0], [5.0], [9.0]]), [50, 1, 1, 1], axis=0)
    cb = lbg_train(x, 2)
    idx, _ = _assign(x, cb.centroids)
    assert len(np.unique(idx)) == 4


# --- empty cells ---


def test_empty_cell_reseeded_near_owner(rng):
    x = rng.standard_normal((100, 2))
    cents = np.array([[0.0, 0.0], [100.0, 100.0]])
    idx, _ = _assign(x, cents)
    assert np.all(idx == 0)
    new = handle_empty_cell(cents, x, idx, 1, rng)
    np.testing.assert_array_equal(new[0], cents[0])
    assert np.linalg.norm(new[1] - new[0]) < 1.0
    idx2, _ = _assign(x, new)
    assert len(np.unique(idx2)) == 2


def test_empty_cell_noop(rng):
    x = rng.standard_normal((100, 2))
    cents = np.array([[-1.0, 0.0], [1.0, 0.0]])
    idx, _ = _assign(x, cents)
    assert handle_empty_cell(cents, x, idx, 1, rng) is cents


def test_near_degenerate_points_terminate():
    # mostly identical points; training must still end with a full codebook
    x = np.zeros((8, 2))
    x[0] = 1.0
    cb = lbg_train(x, 1)
    assert cb.size == 2


# --- scoring ---


def test_zero_distortion_on_centroids(rng):
    c = rng.standard_normal((4, 3))
    cb = Codebook(c, 2, 0.0)
    assert quantize_distortion(c[[0, 2, 2, 3]], cb, MSE) == 0.0
    assert quantize_distortion(c[[1]], cb, MAD) == 0.0


@pytest.mark.parametrize("crit", [MSE, MAD])
def test_unit_offset_example(crit):
    p = 12
    f = np.zeros((1, p))
    f[0, 0] = 1.0
    cents = np.zeros((2, p))
    cents[1, 0] = 2.0
    assert quantize_distortion(f, Codebook(cents, 1, 0.0), crit) == 1.0


def test_empty_frames_rejected():
    with pytest.raises(ValidationError):
        quantize_distortion(np.zeros((0, 2)), Codebook(np.zeros((2, 2)) + [[0], [1]], 1, 0.0))


@st.composite
def scoring_instances(draw, max_frames=32, max_bits=4):
    p = draw(st.integers(1, 12))
    bits = draw(st.integers(0, max_bits))
    n = draw(st.integers(1, max_frames))
    elems = st.floats(-50, 50, allow_nan=False, width=64)
    frames = draw(hnp.arrays(np.float64, (n, p), elements=elems))
    cents = draw(hnp.arrays(np.float64, (2 ** bits, p), elements=elems))
    return frames, cents, bits


@given(scoring_instances(), st.sampled_from([MSE, MAD]))
@settings(max_examples=200, deadline=None)
def test_distortion_equals_brute_force_exactly(inst, crit):
    frames, cents, bits = inst
    assert quantize_distortion(frames, Codebook(cents, bits, 0.0), crit) == brute_force_distortion(frames, cents, crit)


def test_vq_identify_self_consistency(rng):
    centers = rng.uniform(-5, 5, (4, 6))
    data = [c + 0.3 * rng.standard_normal((200, 6)) for c in centers]
    books = [lbg_train(d, 3, i) for i, d in enumerate(data)]
    for i, d in enumerate(data):
        ranked = vq_identify(d[:20], books)
        assert ranked[0][0] == i
        assert sorted(r[0] for r in ranked) == list(range(4))
        assert [r[1] for r in ranked] == sorted(r[1] for r in ranked)


def test_vq_identify_singleton_and_ties(rng):
    cb = lbg_train(rng.standard_normal((20, 3)), 1)
    frames = rng.standard_normal((5, 3)) + 100
    assert vq_identify(frames, [cb])[0][0] == 0
    assert [r[0] for r in vq_identify(frames, [cb, cb, cb])] == [0, 1, 2]


def test_codebook_roundtrip_is_byte_exact(rng):
    cb = lbg_train(rng.standard_normal((100, 12)), 3, seed=9)
    text = json.dumps(cb.to_dict())
    again = Codebook.from_dict(json.loads(text))
    assert json.dumps(again.to_dict()) == text
    assert again.centroids.tobytes() == cb.centroids.tobytes()


def test_codebook_invariants():
    with pytest.raises(ValidationError):
        Codebook(np.zeros((3, 2)), 2, 0.0)
    with pytest.raises(ValidationError):
        Codebook(np.array([[np.nan, 0.0], [0.0, 0.0]]), 1, 0.0)


def test_criterion_parse():
    assert DistortionCriterion.parse("MAD") is MAD
    with pytest.raises(ValidationError):
        DistortionCriterion.parse("l3")


def test_brute_force_oracle_sanity():
    # guard the oracle itself on a hand-checkable case
    frames = np.array([[0.0, 0.0], [3.0, 4.0]])
    cents = np.array([[0.0, 0.0]])
    assert brute_force_distortion(frames, cents, MSE) == 25.0
    assert brute_force_distortion(frames, cents, MAD) == 7.0

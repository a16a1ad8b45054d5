import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import brute_force_fired, chi2_pvalue
from pnrlab.detector import (
    ArrayConfig,
    ClickPattern,
    GroupingPlan,
    detect_shot,
    detected_pmf,
    equal_group_sizes,
    expected_fired,
    group_counts,
    interleaved_grouping,
    make_grouping,
    occupancy_matrix,
    pixel_hits,
    run_statistics_experiment,
    shot_counts,
)
from pnrlab.parallel import BLOCK_SHOTS, block_rng, block_sizes, map_blocks
from pnrlab.stats import SourceSpec, pmf_negative_binomial


@pytest.mark.parametrize("k", range(1, 9))
def test_occupancy_matrix_matches_enumeration(k):
    occ = occupancy_matrix(k, 6)
    for n in range(7):
        exact = [float(f) for f in brute_force_fired(k, n)]
        np.testing.assert_allclose(occ[n, : len(exact)], exact, atol=1e-15)
        assert occ[n, len(exact):].sum() == 0


def test_occupancy_rows_normalise():
    occ = occupancy_matrix(100, 300)
    np.testing.assert_allclose(occ.sum(axis=1), 1.0, atol=1e-12)
    d = np.arange(occ.shape[1])
    np.testing.assert_allclose(occ @ d, [expected_fired(100, n) for n in range(301)], rtol=1e-12)


def test_expected_fired_value():
    # 100 (1 - 0.99^6)
    assert expected_fired(100, 6) == pytest.approx(5.85198506, rel=1e-9)
    assert expected_fired(1, 3) == 1.0
    assert expected_fired(1, 0) == 0.0


def test_detect_shot_distribution_small_array():
    cfg = ArrayConfig(pixel_count=4)
    rng = np.random.default_rng(3)
    got = np.bincount([detect_shot(5, cfg, rng).detected_n for _ in range(20_000)], minlength=5)
    exact = [float(f) for f in brute_force_fired(4, 5)]
    assert chi2_pvalue(got, exact) > 1e-3


def test_detect_shot_basics(rng):
    cfg = ArrayConfig(pixel_count=10)
    p = detect_shot(0, cfg, rng)
    assert p.detected_n == 0 and p.true_n == 0 and p.pixel_count == 10
    assert detect_shot(1, cfg, rng).detected_n == 1
    assert detect_shot(200, ArrayConfig(pixel_count=3), rng).detected_n == 3
    with pytest.raises(ValueError):
        detect_shot(-1, cfg, rng)


@given(st.integers(1, 30), st.integers(0, 60), st.integers(0, 2**32))
def test_detected_n_bounds(k, n, seed):
    p = detect_shot(n, ArrayConfig(pixel_count=k), np.random.default_rng(seed))
    assert 0 <= p.detected_n <= min(n, k)
    assert p.detected_n == int(p.fired.sum())
    if n > 0:
        assert p.detected_n >= 1


def test_loss_thins_binomially():
    cfg = ArrayConfig(pixel_count=1000, efficiency=0.3, ideal=True)
    n = np.full(50_000, 10)
    got = shot_counts(n, cfg, np.random.default_rng(1))[:, 0]
    assert got.mean() == pytest.approx(3.0, abs=0.03)
    assert got.var() == pytest.approx(2.1, rel=0.03)


def test_ideal_mode_counts_photons(rng):
    cfg = ArrayConfig(pixel_count=5, ideal=True)
    n = np.array([0, 3, 17, 100])
    np.testing.assert_array_equal(shot_counts(n, cfg, rng)[:, 0], n)


def test_pixel_hits_conserve_photons(rng):
    n = rng.integers(0, 40, size=500)
    hits = pixel_hits(n, ArrayConfig(pixel_count=7), rng)
    assert hits.shape == (500, 7)
    np.testing.assert_array_equal(hits.sum(axis=1), n)


def test_weighted_pixels(rng):
    cfg = ArrayConfig(pixel_count=3, weights=(1.0, 0.0, 3.0))
    hits = pixel_hits(np.full(20_000, 1), cfg, rng).sum(axis=0)
    assert hits[1] == 0
    assert hits[2] / hits.sum() == pytest.approx(0.75, abs=0.02)
    assert detected_pmf(pmf_negative_binomial(1.0, 1.0), cfg) is None


def test_grouping_plans():
    plan = make_grouping(10, [3, 3, 4])
    assert plan.group_sizes == [3, 3, 4]
    assert plan.indicator().sum(axis=0).tolist() == [3, 3, 4]
    with pytest.raises(ValueError):
        make_grouping(10, [3, 3])
    with pytest.raises(ValueError):
        make_grouping(10, [5, 0, 5])
    assert equal_group_sizes(100, 15) == [7] * 10 + [6] * 5
    assert equal_group_sizes(100, 4) == [25] * 4
    with pytest.raises(ValueError):
        equal_group_sizes(4, 5)
    inter = interleaved_grouping(6, 3)
    assert inter.assignment.tolist() == [0, 1, 2, 0, 1, 2]
    with pytest.raises(ValueError):
        GroupingPlan([0, 2], 3)


def test_group_counts_and_permutation():
    pattern = ClickPattern.from_bits("1101000011")
    plan = make_grouping(10, [4, 6])
    assert group_counts(pattern, plan) == [3, 2]
    perm = np.arange(10)[::-1]
    flipped = ClickPattern(pattern.fired[::-1], pattern.true_n)
    assert group_counts(flipped, plan.permuted(perm)) == [3, 2]
    with pytest.raises(ValueError):
        group_counts(pattern, make_grouping(5, [5]))
    with pytest.raises(ValueError):
        plan.permuted([0, 0, 1, 2, 3, 4, 5, 6, 7, 8])


@given(st.text(alphabet="01", min_size=1, max_size=200))
def test_click_pattern_bits_round_trip(bits):
    p = ClickPattern.from_bits(bits)
    assert p.to_bits() == bits
    assert p.detected_n == bits.count("1")


def test_click_pattern_rejects_garbage():
    for bad in ("", "012", "abc"):
        with pytest.raises(ValueError):
            ClickPattern.from_bits(bad)


@pytest.mark.parametrize("kw", [dict(pixel_count=0), dict(efficiency=0.0), dict(efficiency=1.5),
                                dict(pixel_count=2, weights=(1.0,)), dict(pixel_count=2, weights=(0.0, 0.0))])
def test_array_config_validation(kw):
    with pytest.raises(ValueError):
        ArrayConfig(**kw)


@pytest.mark.parametrize("ideal", [True, False])
def test_statistics_experiment_matches_theory(ideal):
    src = SourceSpec.thermal(6.0, 0.52)
    res = run_statistics_experiment(src, ArrayConfig(seed=4, ideal=ideal), 100_000)
    assert res.histogram.sum() == 100_000
    assert res.total_variation() < 0.02
    assert chi2_pvalue(res.histogram, res.theory) > 1e-3


def test_statistics_experiment_with_loss():
    src = SourceSpec.coherent(20.0)
    res = run_statistics_experiment(src, ArrayConfig(efficiency=0.5, seed=2), 50_000)
    assert res.photon_pmf.probs @ np.arange(res.photon_pmf.cutoff + 1) == pytest.approx(10.0, rel=1e-9)
    assert chi2_pvalue(res.histogram, res.theory) > 1e-3


def test_statistics_experiment_rejects_no_shots():
    with pytest.raises(ValueError):
        run_statistics_experiment(SourceSpec.coherent(1.0), ArrayConfig(), 0)


def _draw(payload, rng, size):
    return rng.integers(0, 1 << 30, size=size)


def test_blocks_are_worker_independent():
    shots = 2 * BLOCK_SHOTS + 17
    assert block_sizes(shots) == [BLOCK_SHOTS, BLOCK_SHOTS, 17]
    one = np.concatenate(map_blocks(_draw, None, 9, shots, workers=1))
    two = np.concatenate(map_blocks(_draw, None, 9, shots, workers=2))
    np.testing.assert_array_equal(one, two)
    other = np.concatenate(map_blocks(_draw, None, 10, shots, workers=1))
    assert not np.array_equal(one, other)


def test_block_streams_differ():
    a = block_rng(0, 0).random(4)
    b = block_rng(0, 1).random(4)
    assert not np.array_equal(a, b)
    np.testing.assert_array_equal(a, block_rng(0, 0).random(4))
    # negative seeds are folded into 64 bits rather than rejected
    block_rng(-1, 0).random()


def test_statistics_workers_identical():
    src = SourceSpec.thermal(6.0, 0.05)
    cfg = ArrayConfig(seed=11)
    a = run_statistics_experiment(src, cfg, BLOCK_SHOTS + 5, workers=1)
    b = run_statistics_experiment(src, cfg, BLOCK_SHOTS + 5, workers=3)
    np.testing.assert_array_equal(a.histogram, b.histogram)

"""Smoke tests for the python bindings."""

import numpy as np
import pytest

try:
    import flatnn
except ImportError:  # pragma: no cover - direct module fallback
    import _flatnn as flatnn


def make_line(p, q):
    return flatnn.Flat(np.column_stack([p, q]).astype(float))


def test_flat_and_distance():
    line = make_line(np.zeros(3), np.array([1.0, 0.0, 0.0]))
    assert line.k == 1
    assert flatnn.dist_point_flat(np.array([0.0, 3.0, 4.0]), line) == pytest.approx(5.0)


def test_degenerate_flat_raises():
    with pytest.raises(ValueError):
        flatnn.Flat(np.zeros((3, 2)))


def test_index_build_query_matches_oracle_factor():
    rng = np.random.default_rng(7)
    pts = rng.normal(size=(16, 256))
    params = flatnn.IndexParams()
    params.k = 1
    params.c = 2.0
    params.seed = 5
    idx = flatnn.build_index(pts, params)
    assert idx.n == 256
    assert idx.cluster_count >= 2

    for trial in range(20):
        gen = rng.normal(size=(16, 2))
        gen[:, 1] += gen[:, 0]
        flat = flatnn.Flat(gen)
        ans = idx.query(flat, seed=trial)
        oracle = flatnn.brute_force_nn(pts, flat)
        assert ans.distance <= 2.0 * oracle.distance + 1e-9
        assert ans.distance >= oracle.distance - 1e-12


def test_exact_hit():
    rng = np.random.default_rng(11)
    pts = rng.normal(size=(12, 128))
    params = flatnn.IndexParams()
    params.k = 1
    params.seed = 3
    idx = flatnn.build_index(pts, params)
    target = pts[:, 17]
    flat = make_line(target, target + rng.normal(size=12))
    ans = idx.query(flat, seed=1)
    assert ans.distance <= 1e-9


def test_save_load_roundtrip(tmp_path):
    rng = np.random.default_rng(13)
    pts = rng.normal(size=(8, 96))
    params = flatnn.IndexParams()
    params.k = 1
    params.seed = 21
    idx = flatnn.build_index(pts, params)
    path = str(tmp_path / "index.bin")
    idx.save(path)
    loaded = flatnn.load_index(path)
    for trial in range(10):
        gen = rng.normal(size=(8, 2))
        gen[:, 1] += gen[:, 0]
        flat = flatnn.Flat(gen)
        a = idx.query(flat, seed=trial)
        b = loaded.query(flat, seed=trial)
        assert a.index == b.index
        assert a.distance == b.distance


def test_search_structure_sandwich():
    rng = np.random.default_rng(17)
    pts = rng.normal(size=(3, 500))
    s = flatnn.build_search_structure(pts, k=1, r=16, seed=2)
    kappa = flatnn.lowdim_kappa(3, 1)
    flat = make_line(rng.normal(size=3), rng.normal(size=3))
    alpha = 0.3
    reported = set(s.query_near(flat, alpha))
    for i in range(500):
        dist = flatnn.dist_point_flat(pts[:, i].copy(), flat)
        if dist <= alpha:
            assert i in reported
        if dist > kappa * alpha + 1e-9:
            assert i not in reported


def test_gen_dataset_deterministic():
    a = flatnn.gen_dataset(64, 4, seed=9)
    b = flatnn.gen_dataset(64, 4, seed=9)
    assert np.array_equal(a, b)

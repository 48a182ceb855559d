import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import roadfuse as rf
from roadfuse.errors import NetworkError

import oracles
from conftest import chain_network, random_embedding, random_kernel


def segment_mix_network(n_segments=775, seed=775):
    """Synthetic network mixing highway / arterial / slip-road style features:
    (length m, lanes, speed limit, class code)."""
    rng = np.random.default_rng(seed)
    kinds = rng.choice(3, size=n_segments, p=[0.2, 0.6, 0.2])
    length = np.where(kinds == 0, rng.uniform(500, 2000, n_segments),
                      np.where(kinds == 1, rng.uniform(100, 600, n_segments),
                               rng.uniform(30, 150, n_segments)))
    lanes = np.where(kinds == 0, rng.integers(3, 6, n_segments),
                     np.where(kinds == 1, rng.integers(2, 4, n_segments), 1))
    speed = np.where(kinds == 0, 90.0, np.where(kinds == 1, 60.0, 40.0))
    segments = [
        (f"seg{i:04d}", [float(length[i]), float(lanes[i]), float(speed[i]), float(kinds[i])])
        for i in range(n_segments)
    ]
    edges = []
    for i in range(n_segments):
        targets = {(i + 1) % n_segments}
        while len(targets) < 2:
            t = int(rng.integers(0, n_segments))
            if t != i:
                targets.add(t)
        edges.extend((f"seg{i:04d}", f"seg{t:04d}") for t in sorted(targets))
    return rf.build_road_network(segments, edges)


# ---------------------------------------------------------------------------
# build_road_network


def test_minimal_two_segment_network(two_segment_network):
    net = two_segment_network
    assert net.n_segments == 2
    assert net.n_features == 2
    assert net.edges == ((0, 1),)
    assert net.has_edge(0, 1) and not net.has_edge(1, 0)


def test_775_segment_mixed_network_loads():
    net = segment_mix_network()
    assert net.n_segments == 775
    assert net.max_out_degree() == 2
    assert np.all(net.feature_ranges > 0)


def test_edge_with_unknown_id_rejected():
    with pytest.raises(NetworkError, match="unknown segment id"):
        rf.build_road_network([("a", [0.0]), ("b", [1.0])], [("a", "nope")])


def test_duplicate_id_rejected():
    with pytest.raises(NetworkError, match="duplicate segment ids"):
        rf.build_road_network([("a", [0.0]), ("a", [1.0])], [])


def test_duplicate_edge_rejected():
    with pytest.raises(NetworkError, match="duplicate edge"):
        rf.build_road_network(
            [("a", [0.0]), ("b", [1.0])], [("a", "b"), ("a", "b")]
        )


def test_zero_feature_range_rejected():
    with pytest.raises(NetworkError, match="strictly positive"):
        rf.build_road_network([("a", [0.0, 1.0]), ("b", [1.0, 1.0])], [("a", "b")])


def test_feature_ranges_computed_as_max_minus_min():
    net = rf.build_road_network(
        [("a", [0.0, -2.0]), ("b", [4.0, 6.0]), ("c", [1.0, 0.0])], [("a", "b")]
    )
    assert np.allclose(net.feature_ranges, [4.0, 8.0])


def test_inconsistent_feature_dimension_rejected():
    with pytest.raises(NetworkError, match="feature dimension"):
        rf.build_road_network([("a", [0.0]), ("b", [1.0, 2.0])], [])


# ---------------------------------------------------------------------------
# edge_weight


def test_edge_weight_zero_for_identical_features():
    net = rf.build_road_network(
        [("a", [3.0, 5.0]), ("b", [3.0, 5.0])], [("a", "b")], feature_ranges=[1.0, 1.0]
    )
    assert rf.edge_weight(net, 0, 1) == 0.0


def test_edge_weight_full_range_counts_one_per_feature():
    r1, r2 = 7.0, 11.0
    net = rf.build_road_network(
        [("a", [0.0, 0.0]), ("b", [r1, r2])], [("a", "b")]
    )
    assert rf.edge_weight(net, 0, 1) == pytest.approx(2.0)


def test_edge_weight_matches_componentwise_sum():
    rng = np.random.default_rng(42)
    f_a, f_b = rng.uniform(-5, 5, 5), rng.uniform(-5, 5, 5)
    ranges = rng.uniform(0.5, 3.0, 5)
    net = rf.build_road_network(
        [("a", f_a), ("b", f_b)], [("a", "b")], feature_ranges=ranges
    )
    expected = 0.0
    for i in range(5):
        expected += abs(f_a[i] - f_b[i]) / ranges[i]
    assert rf.edge_weight(net, 0, 1) == pytest.approx(expected, rel=1e-12)


def test_edge_weight_rejects_non_edge():
    net = rf.build_road_network([("a", [0.0]), ("b", [1.0])], [("a", "b")])
    with pytest.raises(NetworkError, match="not an edge"):
        rf.edge_weight(net, 1, 0)


# ---------------------------------------------------------------------------
# geodesic_distances


def test_single_vertex_geodesics():
    net = rf.build_road_network([("a", [0.0])], [], feature_ranges=[1.0])
    geo = rf.geodesic_distances(net)
    assert geo.d.shape == (1, 1)
    assert geo.d[0, 0] == 0.0
    assert geo.reachable[0, 0]


def test_chain_distances_sum_along_path():
    net = chain_network([1.0, 2.0])
    geo = rf.geodesic_distances(net)
    assert geo.d[0, 2] == pytest.approx(3.0)
    assert geo.d[0, 1] == pytest.approx(1.0)
    assert geo.d[1, 2] == pytest.approx(2.0)


def test_geodesics_match_dijkstra_oracle():
    net = rf.random_network(20, seed=11, out_degree=2)
    directed = oracles.dijkstra_all_pairs(net)
    expected = oracles.metric_closure(np.minimum(directed, directed.T))
    geo = rf.geodesic_distances(net)
    assert np.allclose(geo.d, expected, atol=1e-12)


def test_geodesic_invariants():
    for seed in (0, 1, 2):
        net = rf.random_network(15, seed=seed)
        geo = rf.geodesic_distances(net)
        assert np.array_equal(geo.d, geo.d.T)
        assert np.all(np.diag(geo.d) == 0.0)
        d = geo.d
        finite = np.isfinite(d)
        for k in range(15):
            lhs = d
            rhs = d[:, k, None] + d[None, k, :]
            mask = finite & np.isfinite(rhs)
            assert np.all(lhs[mask] <= rhs[mask] + 1e-9)


def test_unreachable_pairs_flagged_not_fatal():
    net = rf.build_road_network(
        [("a", [0.0]), ("b", [1.0]), ("c", [3.0])], [("a", "b")]
    )
    geo = rf.geodesic_distances(net)
    assert geo.reachable[0, 1]
    assert not geo.reachable[0, 2]
    imputed = geo.imputed()
    assert np.all(np.isfinite(imputed))
    assert imputed[0, 2] == pytest.approx(2.0 * geo.d[0, 1])


# ---------------------------------------------------------------------------
# mds_embed


def test_two_points_embed_at_plus_minus_one():
    d = np.array([[0.0, 2.0], [2.0, 0.0]])
    emb = rf.mds_embed(d, 1)
    assert sorted(emb.coords[:, 0]) == pytest.approx([-1.0, 1.0])
    assert emb.stress < 1e-18


def test_collinear_points_embed_exactly():
    d = np.array([[0.0, 1.0, 2.0], [1.0, 0.0, 1.0], [2.0, 1.0, 0.0]])
    emb = rf.mds_embed(d, 1)
    assert emb.stress < 1e-9
    assert abs(emb.coords[:, 0].mean()) < 1e-12


def test_equilateral_triangle_embeds_in_plane():
    d = np.ones((3, 3)) - np.eye(3)
    emb = rf.mds_embed(d, 2)
    dist = np.linalg.norm(emb.coords[:, None] - emb.coords[None, :], axis=-1)
    off = dist[~np.eye(3, dtype=bool)]
    assert np.all(np.abs(off - 1.0) < 1e-9)
    assert emb.stress < 1e-9


def test_stress_non_increasing_in_dimension():
    for seed in (3, 4):
        net = rf.random_network(12, seed=seed)
        geo = rf.geodesic_distances(net)
        stresses = [rf.mds_embed(geo, dim).stress for dim in range(1, 8)]
        for lo, hi in zip(stresses[1:], stresses[:-1]):
            assert lo <= hi + 1e-9


def test_refinement_sweeps_do_not_increase_stress():
    net = rf.random_network(12, seed=9)
    geo = rf.geodesic_distances(net)
    base = rf.mds_embed(geo, 2)
    refined = rf.mds_embed(geo, 2, refine_sweeps=5)
    assert refined.stress <= base.stress + 1e-12


def test_dimension_out_of_range_rejected():
    d = np.ones((3, 3)) - np.eye(3)
    with pytest.raises(ValueError, match="dimension"):
        rf.mds_embed(d, 0)
    with pytest.raises(ValueError, match="dimension"):
        rf.mds_embed(d, 3)


def test_choose_embedding_dim_full_mass_on_line():
    d = np.abs(np.subtract.outer(np.arange(5.0), np.arange(5.0)))
    assert rf.choose_embedding_dim(d) == 1


# ---------------------------------------------------------------------------
# kernel


def test_kernel_value_at_identical_segment():
    kernel = random_kernel(0, n=10, signal=2.5)
    assert kernel.kernel_value(3, 3) == pytest.approx(2.5)


def test_kernel_value_one_length_scale_apart():
    emb = rf.Embedding(coords=np.array([[0.0], [0.7]]), dim=1, stress=0.0)
    kernel = rf.make_kernel(emb, rf.KernelHyperparams(3.0, (0.7,), 0.0))
    assert kernel.kernel_value(0, 1) == pytest.approx(3.0 * math.exp(-0.5))


def test_kernel_value_matches_direct_formula():
    kernel = random_kernel(5, n=20, dim=3, length=1.3, signal=1.7)
    g = kernel.embedding.coords
    ell = np.asarray(kernel.hyper.length_scales)
    for s, t in [(0, 7), (3, 12), (19, 2)]:
        expected = 1.7 * math.exp(-0.5 * float(np.sum(((g[s] - g[t]) / ell) ** 2)))
        assert kernel.kernel_value(s, t) == pytest.approx(expected, rel=1e-12)


def test_kernel_value_exactly_symmetric():
    kernel = random_kernel(6, n=25)
    for s, t in [(0, 1), (5, 20), (13, 2)]:
        assert kernel.kernel_value(s, t) == kernel.kernel_value(t, s)


def test_prior_covariance_singleton_with_noise():
    kernel = random_kernel(1, n=5, signal=2.0, noise=0.3)
    cov = kernel.prior_covariance([2], [2], include_noise=True)
    assert cov[0, 0] == pytest.approx(2.3)


def test_prior_covariance_noise_free_diagonal():
    kernel = random_kernel(2, n=8, signal=1.5, noise=0.4)
    cov = kernel.prior_covariance(range(8), range(8))
    assert np.array_equal(cov, cov.T)
    assert np.allclose(np.diag(cov), 1.5)


def test_noise_adds_identity_on_diagonal():
    kernel = random_kernel(3, n=5, noise=0.25)
    idx = [0, 2, 3, 1, 4]
    with_noise = kernel.prior_covariance(idx, idx, include_noise=True)
    without = kernel.prior_covariance(idx, idx)
    assert np.allclose(with_noise - without, 0.25 * np.eye(5))


def test_noise_skipped_for_distinct_lists():
    kernel = random_kernel(3, n=5, noise=0.25)
    cross = kernel.prior_covariance([0, 1], [0, 2], include_noise=True)
    assert cross[0, 0] == pytest.approx(kernel.kernel_value(0, 0))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_prior_covariance_psd(seed):
    kernel = random_kernel(seed, n=30)
    rng = np.random.default_rng(seed)
    idx = rng.choice(30, size=12, replace=False)
    cov = kernel.prior_covariance(idx, idx)
    eigs = np.linalg.eigvalsh(cov)
    assert eigs.min() >= -1e-8 * kernel.hyper.signal_variance


# ---------------------------------------------------------------------------
# hyperparameter fitting


def test_single_observation_likelihood_is_gaussian_density():
    emb = random_embedding(0, n=6)
    hyper = rf.KernelHyperparams(1.4, (0.8, 0.8), 0.2)
    z, mean = 2.7, 1.1
    got = rf.log_marginal_likelihood(emb, hyper, [3], [z], prior_mean=mean)
    assert got == pytest.approx(oracles.gaussian_log_density(z, mean, 1.4 + 0.2), rel=1e-12)


def _fit_case(seed, n=200, true_length=0.9):
    emb = random_embedding(seed, n=n, dim=1, cell=0.4)
    truth = rf.KernelHyperparams(1.0, (true_length,), 0.05)
    kernel = rf.make_kernel(emb, truth, 0.0)
    idx = list(range(n))
    rng = np.random.default_rng(seed)
    z = rf.sample_gp(kernel, idx, seed=seed) + np.sqrt(0.05) * rng.standard_normal(n)
    return emb, truth, idx, z


@pytest.mark.slow
def test_length_scale_recovery_within_factor_two():
    ratios = []
    config = rf.FitConfig(restarts=2, sweeps=3, tol=1e-2)
    for seed in range(10):
        emb, truth, idx, z = _fit_case(seed)
        fitted = rf.fit_hyperparameters(emb, idx, z, config, prior_mean=0.0)
        ratios.append(fitted.length_scales[0] / truth.length_scales[0])
    median = float(np.median(ratios))
    assert 0.5 <= median <= 2.0


@pytest.mark.slow
def test_fitted_likelihood_not_worse_than_truth():
    config = rf.FitConfig(restarts=2, sweeps=6, tol=1e-3)
    for seed in range(5):
        emb, truth, idx, z = _fit_case(seed)
        fitted = rf.fit_hyperparameters(emb, idx, z, config, prior_mean=0.0)
        lml_fit = rf.log_marginal_likelihood(emb, fitted, idx, z, prior_mean=0.0)
        lml_true = rf.log_marginal_likelihood(emb, truth, idx, z, prior_mean=0.0)
        assert lml_fit >= lml_true - 1e-6 * abs(lml_true)


def test_fit_requires_two_observations():
    emb = random_embedding(0, n=6)
    with pytest.raises(ValueError, match="two observations"):
        rf.fit_hyperparameters(emb, [1], [0.5])


# ---------------------------------------------------------------------------
# file formats


def test_network_json_roundtrip(tmp_path):
    net = rf.random_network(12, seed=4)
    path = tmp_path / "net.json"
    rf.save_network(net, path)
    loaded = rf.load_network(path)
    assert loaded.ids == net.ids
    assert loaded.edges == net.edges
    assert np.allclose(loaded.features, net.features)
    assert np.allclose(loaded.feature_ranges, net.feature_ranges)


def test_network_bad_schema_version_rejected(tmp_path):
    path = tmp_path / "net.json"
    path.write_text('{"schema_version": 99, "segments": [], "edges": []}')
    with pytest.raises(NetworkError, match="schema version"):
        rf.load_network(path)


def test_embedding_file_roundtrip(tmp_path):
    net = rf.random_network(10, seed=2)
    emb = rf.mds_embed(rf.geodesic_distances(net), 2)
    path = tmp_path / "embedding.txt"
    rf.road_kernel.save_embedding(emb, path)
    header = path.read_text().splitlines()[0]
    assert header == "10 2"
    loaded = rf.road_kernel.load_embedding(path)
    assert np.allclose(loaded.coords, emb.coords)
    assert loaded.dim == 2

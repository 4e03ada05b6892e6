import math

import numpy as np
import pytest

import rangealign as ra
from rangealign.simulate import (
    MEAN_RANGE_REFERENCE,
    Scenario,
    load_scenario,
    save_scenario,
    sec5c_scenario,
    sigma_from_snr,
    ta_histogram,
    ta_measurement_counts,
)
from rangealign.two_node import objective


class TestNoiseCalibration:
    def test_snr20_sigma_value(self):
        assert sigma_from_snr(20.0) == pytest.approx(0.41712, abs=1e-12)
        assert Scenario(snr_db=20.0).sigma == pytest.approx(0.41712, abs=1e-12)

    def test_infinite_snr_is_noiseless(self):
        assert sigma_from_snr(math.inf) == 0.0

    def test_formula_inverts(self):
        for snr in (5.0, 20.0, 80.0):
            sigma = sigma_from_snr(snr)
            assert 10.0 * math.log10(MEAN_RANGE_REFERENCE ** 2 / sigma ** 2) == \
                pytest.approx(snr, abs=1e-9)

    def test_empirical_sigma_within_two_percent(self):
        # 1e5 generated noise draws match the SNR-derived sigma
        scenario = Scenario(dim=2, tbar=10, snr_db=20.0, seed=123)
        rng = scenario.rng()
        draws = []
        for _ in range(10_000):
            dataset, truth = ra.generate_two_node(scenario, rng=rng)
            est = dataset.p_local @ truth.pose(0).rotation.T + truth.pose(0).translation
            draws.append(dataset.ranges - np.linalg.norm(est - dataset.p_anchor,
                                                         axis=1))
        draws = np.concatenate(draws)
        assert len(draws) == 100_000
        assert abs(draws.std() - scenario.sigma) <= 0.02 * scenario.sigma


class TestScenarioValidation:
    def test_zero_snr_rejected(self):
        with pytest.raises(ValueError, match="snr_db"):
            Scenario(snr_db=0.0)

    def test_negative_snr_rejected(self):
        with pytest.raises(ValueError):
            Scenario(snr_db=-10.0)

    def test_bad_dim_rejected(self):
        with pytest.raises(ValueError):
            Scenario(dim=4)

    def test_anchor_default_needs_four_corner_layout(self):
        with pytest.raises(ValueError, match="anchor_positions"):
            Scenario(kind="network", n_targets=3, n_anchors=2).resolved_anchors()
        corners = Scenario(kind="network", n_targets=3,
                           n_anchors=4).resolved_anchors()
        assert corners.shape == (4, 2)


class TestTwoNodeGeneration:
    def test_noiseless_truth_objective_zero(self):
        scenario = Scenario(dim=2, tbar=20, snr_db=math.inf, seed=7)
        dataset, truth = ra.generate_two_node(scenario)
        assert objective(truth.pose(0), dataset) <= 1e-22

    def test_seed_determinism_byte_identical(self, tmp_path):
        scenario = Scenario(dim=2, tbar=9, snr_db=20.0, seed=42)
        a, _ = ra.generate_two_node(scenario)
        b, _ = ra.generate_two_node(scenario)
        p1, p2 = tmp_path / "a.txt", tmp_path / "b.txt"
        a.save(p1)
        b.save(p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_distinct_seeds_differ(self):
        a, _ = ra.generate_two_node(Scenario(seed=1))
        b, _ = ra.generate_two_node(Scenario(seed=2))
        assert not np.array_equal(a.ranges, b.ranges)

    def test_positions_inside_area(self):
        scenario = Scenario(dim=2, tbar=50, snr_db=20.0, seed=3)
        dataset, truth = ra.generate_two_node(scenario)
        lo, hi = scenario.area
        mapped = dataset.p_local @ truth.pose(0).rotation.T + truth.pose(0).translation
        assert np.all(mapped >= lo - 1e-9) and np.all(mapped <= hi + 1e-9)
        assert np.all(dataset.p_anchor >= lo) and np.all(dataset.p_anchor <= hi)

    def test_ground_truth_consistency(self):
        # mapping the local trajectory through the pose recovers the stored
        # global trajectory
        scenario = Scenario(dim=3, tbar=12, snr_db=40.0, seed=5)
        dataset, truth = ra.generate_two_node(scenario)
        mapped = dataset.p_local @ truth.pose(0).rotation.T + truth.pose(0).translation
        assert np.allclose(mapped, truth.target_global[0], atol=1e-12)

    def test_noiseless_ranges_regenerate(self):
        scenario = Scenario(dim=2, tbar=15, snr_db=math.inf, seed=9)
        dataset, truth = ra.generate_two_node(scenario)
        again = np.linalg.norm(truth.target_global[0] - dataset.p_anchor, axis=1)
        assert np.allclose(dataset.ranges, again, atol=1e-12)


class TestNetworkGeneration:
    def test_infinite_radius_complete_graph(self):
        scenario = Scenario(kind="network", dim=2, n_targets=5, n_anchors=4,
                            comm_radius=1e9, snr_db=40.0, tbar=3, seed=1)
        data, _ = ra.generate_network(scenario)
        for snap in data.snapshots:
            assert len(snap.tt_edges) == 5 * 4  # both directions of each pair
            assert len(snap.ta_edges) == 5 * 4

    def test_noiseless_truth_objective_zero(self):
        scenario = Scenario(kind="network", dim=2, n_targets=5, n_anchors=4,
                            comm_radius=4.0, snr_db=math.inf, tbar=3, seed=1)
        data, truth = ra.generate_network(scenario)
        poses = ra.PoseSet.from_poses(truth.poses)
        assert ra.multi_objective(poses, data) <= 1e-20

    def test_seed_determinism(self, tmp_path):
        scenario = sec5c_scenario(n_targets=15, tbar=4, seed=11)
        a, _ = ra.generate_network(scenario)
        b, _ = ra.generate_network(scenario)
        pa, pb = tmp_path / "a.txt", tmp_path / "b.txt"
        a.save(pa)
        b.save(pb)
        assert pa.read_bytes() == pb.read_bytes()

    def test_walk_stays_in_unit_box_and_area(self):
        scenario = Scenario(kind="network", dim=2, n_targets=8, n_anchors=4,
                            comm_radius=1.0, snr_db=40.0, tbar=30, seed=2)
        data, truth = ra.generate_network(scenario)
        paths = truth.target_global
        for i in range(8):
            start = paths[i, 0]
            assert np.all(np.abs(paths[i] - start) <= 0.5 + 1e-12)
        lo, hi = scenario.area
        assert paths.min() >= lo and paths.max() <= hi

    def test_fixed_graph_edges_constant(self):
        scenario = Scenario(kind="network", dim=2, n_targets=8, n_anchors=4,
                            comm_radius=2.0, snr_db=40.0, tbar=5, seed=4,
                            fixed_graph=True)
        data, _ = ra.generate_network(scenario)
        first_tt = set(map(tuple, data.snapshots[0].tt_edges))
        first_ta = set(map(tuple, data.snapshots[0].ta_edges))
        for snap in data.snapshots[1:]:
            assert set(map(tuple, snap.tt_edges)) == first_tt
            assert set(map(tuple, snap.ta_edges)) == first_ta

    def test_ground_truth_consistency(self):
        # mapping each target's local trajectory through its pose recovers
        # the stored global trajectory
        scenario = Scenario(kind="network", dim=2, n_targets=6, n_anchors=4,
                            comm_radius=2.0, snr_db=40.0, tbar=8, seed=13)
        data, truth = ra.generate_network(scenario)
        for i in range(6):
            local = np.stack([s.target_local[i] for s in data.snapshots])
            mapped = local @ truth.poses[i].rotation.T + truth.poses[i].translation
            assert np.allclose(mapped, truth.target_global[i], atol=1e-12)

    def test_directed_ranges_independent_noise(self):
        scenario = Scenario(kind="network", dim=2, n_targets=4, n_anchors=4,
                            comm_radius=1e9, snr_db=20.0, tbar=1, seed=6)
        data, _ = ra.generate_network(scenario)
        snap = data.snapshots[0]
        by_pair = {tuple(e): r for e, r in zip(snap.tt_edges, snap.tt_ranges)}
        asymmetric = [abs(by_pair[(i, j)] - by_pair[(j, i)])
                      for (i, j) in by_pair if i < j]
        assert max(asymmetric) > 0.0

    def test_ta_counts_and_histogram(self):
        data, _ = ra.generate_network(sec5c_scenario(tbar=10, seed=0))
        counts = ta_measurement_counts(data)
        hist = ta_histogram(counts)
        assert sum(hist.values()) == 110
        total_ta = sum(len(s.ta_edges) for s in data.snapshots)
        assert counts.sum() == total_ta


class TestConnectivity:
    def test_complete_graph_all_connected(self):
        scenario = Scenario(kind="network", dim=2, n_targets=5, n_anchors=4,
                            comm_radius=1e9, snr_db=40.0, tbar=2, seed=1)
        data, _ = ra.generate_network(scenario)
        assert ra.check_union_connectivity(data).all()

    def test_isolated_target_detected(self):
        snap = ra.NetworkSnapshot(
            t=1, target_local=np.array([[1.0, 0.0], [0.0, 1.0]]),
            anchor_global=np.array([[0.0, 0.0]]),
            tt_edges=np.zeros((0, 2), dtype=int), tt_ranges=np.zeros(0),
            ta_edges=np.array([[0, 0]]), ta_ranges=np.array([1.0]),
        )
        data = ra.NetworkDataset((snap,))
        assert list(ra.check_union_connectivity(data)) == [True, False]

    def test_default_dense_scenario_connected(self):
        data, _ = ra.generate_network(sec5c_scenario(tbar=25, seed=0))
        assert ra.check_union_connectivity(data).all()


class TestScenarioConfig:
    def test_round_trip(self, tmp_path):
        scenario = sec5c_scenario(tbar=7, seed=5, snr_db=35.0, fixed_graph=True,
                                  anchor_positions=((2.0, 2.0), (2.0, 8.0),
                                                    (8.0, 2.0), (8.0, 8.0)))
        path = tmp_path / "scenario.txt"
        save_scenario(scenario, path)
        assert load_scenario(path) == scenario

    def test_parse_errors(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("bogus 1\n")
        with pytest.raises(ValueError, match="unknown scenario key"):
            load_scenario(path)

    def test_comments_ignored(self, tmp_path):
        path = tmp_path / "sc.txt"
        path.write_text("# two-node run\nkind two-node\ndim 2\ntbar 4\n"
                        "snr_db 20\nseed 3\n")
        scenario = load_scenario(path)
        assert scenario.tbar == 4 and scenario.seed == 3

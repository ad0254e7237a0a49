import numpy as np
import pytest

from usguide import guidance as gd
from usguide import phantom, quat
from usguide.errors import (
    EmptyDatasetError,
    GuidanceInfeasibleError,
    InvalidStateError,
)


@pytest.fixture(scope="module")
def experience(small_dataset):
    return gd.harvest(small_dataset, "positives_only")


@pytest.fixture(scope="module")
def start(phantom_small):
    # mildly tilted, low force: label 0 but reachable from demonstrations
    pose = quat.from_axis_angle([1.0, 0.0, 0.0], 0.35)
    return phantom.ProbeState(pose, np.array([0, 0, 1.5, 0, 0, 0.0]))


@pytest.fixture(scope="module")
def start_frame(start, phantom_small):
    return phantom.render(start, phantom_small, 0)


class TestHarvest:
    def test_counts(self, small_dataset):
        all_exp = gd.harvest(small_dataset, "all")
        pos_exp = gd.harvest(small_dataset, "positives_only")
        assert len(all_exp) == len(small_dataset)
        assert len(pos_exp) == int(small_dataset.labels.sum())

    def test_poses_canonical_unit(self, experience):
        norms = np.linalg.norm(experience.poses, axis=1)
        assert np.allclose(norms, 1.0, atol=1e-9)
        assert (experience.poses[:, 0] >= 0).all()

    def test_bad_filter(self, small_dataset):
        with pytest.raises(InvalidStateError):
            gd.harvest(small_dataset, "negatives_only")

    def test_empty_after_filter(self, small_dataset):
        neg_idx = np.nonzero(small_dataset.labels == 0)[0]
        negatives = small_dataset.subset(neg_idx)
        with pytest.raises(EmptyDatasetError):
            gd.harvest(negatives, "positives_only")


class TestFeasible:
    cfg = gd.GuidanceConfig(pose_bound=0.2, force_bound=(2, 2, 2, 20, 20, 20))

    def test_identical_state(self, start):
        assert gd.feasible(start.pose, start.wrench, start.pose, start.wrench,
                           self.cfg)

    def test_negative_fz_rejected(self, start):
        w = start.wrench.copy()
        w[2] = -0.1
        assert not gd.feasible(start.pose, w, start.pose, start.wrench, self.cfg)

    def test_force_bound_is_closed(self, start):
        w = start.wrench.copy()
        w[2] += 2.0
        assert gd.feasible(start.pose, w, start.pose, start.wrench, self.cfg)
        w[2] += 1e-6
        assert not gd.feasible(start.pose, w, start.pose, start.wrench, self.cfg)

    def test_pose_bound(self, start):
        near = quat.canonicalize(quat.multiply(
            quat.from_axis_angle([0, 1, 0], 0.19), start.pose))
        far = quat.canonicalize(quat.multiply(
            quat.from_axis_angle([0, 1, 0], 0.3), start.pose))
        assert gd.feasible(near, start.wrench, start.pose, start.wrench, self.cfg)
        assert not gd.feasible(far, start.wrench, start.pose, start.wrench, self.cfg)


class TestSuggest:
    def test_matches_exhaustive_argmax(self, trained_small_model, experience,
                                       start, start_frame):
        cfg = gd.GuidanceConfig(n_samples=200, seed=7)
        sug = gd.suggest(trained_small_model, experience, start_frame, start, cfg)

        # independent oracle: replay the same draws, score every feasible
        # candidate, take the argmax with ties to the lowest index
        rng = np.random.default_rng(7)
        idx = rng.integers(0, len(experience), size=200)
        pixels = np.asarray(start_frame.pixels, np.float32)[None]
        img_feat = trained_small_model.image_net.forward(
            trained_small_model.store, pixels, keep_cache=False)
        best_q, best_k = None, None
        n_feas = 0
        for k in range(200):
            pose = experience.poses[idx[k]]
            wrench = experience.wrenches[idx[k]]
            if not gd.feasible(pose, wrench, start.pose, start.wrench, cfg):
                continue
            n_feas += 1
            q = gd._score(trained_small_model, img_feat, pose, wrench)
            if best_q is None or q > best_q:
                best_q, best_k = q, k
        assert n_feas == sug.n_feasible
        assert best_k == sug.candidate_index
        assert best_q == sug.q_best  # bitwise, same arithmetic path
        assert np.array_equal(experience.poses[idx[best_k]], sug.pose)

    def test_deterministic(self, trained_small_model, experience, start,
                           start_frame):
        cfg = gd.GuidanceConfig(n_samples=150, seed=3)
        a = gd.suggest(trained_small_model, experience, start_frame, start, cfg)
        b = gd.suggest(trained_small_model, experience, start_frame, start, cfg)
        assert np.array_equal(a.pose, b.pose)
        assert np.array_equal(a.wrench, b.wrench)
        assert a.q_best == b.q_best and a.candidate_index == b.candidate_index

    def test_suggestion_is_feasible(self, trained_small_model, experience,
                                    start, start_frame):
        cfg = gd.GuidanceConfig(n_samples=300, seed=1)
        sug = gd.suggest(trained_small_model, experience, start_frame, start, cfg)
        assert gd.feasible(sug.pose, sug.wrench, start.pose, start.wrench, cfg)
        assert sug.wrench[2] >= 0
        assert 0.0 <= sug.q_best <= 1.0
        assert sug.n_feasible <= sug.n_evaluated <= 300

    def test_single_entry_experience(self, trained_small_model, start,
                                     start_frame, experience):
        one = gd.Experience(experience.poses[:1], experience.wrenches[:1])
        cfg = gd.GuidanceConfig(n_samples=10, seed=0,
                                pose_bound=np.pi, force_bound=(99,) * 6)
        sug = gd.suggest(trained_small_model, one, start_frame, start, cfg)
        assert np.array_equal(sug.pose, one.poses[0])

    def test_infeasible_reports_diagnostics(self, trained_small_model,
                                            experience, phantom_small):
        # start too far from all demonstrated states to reach in one step
        far = phantom.ProbeState(quat.from_axis_angle([0, 1, 0], 1.5),
                                 np.array([0, 0, 40.0, 0, 0, 0]))
        frame = phantom.render(far, phantom_small, 0)
        cfg = gd.GuidanceConfig(n_samples=50, seed=0)
        with pytest.raises(GuidanceInfeasibleError) as exc:
            gd.suggest(trained_small_model, experience, frame, far, cfg)
        diag = exc.value.diagnostics
        assert {"nearest_pose_distance", "nearest_force_distance",
                "nearest_index"} <= set(diag)
        assert diag["nearest_force_distance"] > 2.0

    def test_early_exit_stops_at_threshold(self, trained_small_model,
                                           experience, start, start_frame):
        cfg = gd.GuidanceConfig(n_samples=500, seed=2, early_exit=True,
                                accept_threshold=0.05)
        sug = gd.suggest(trained_small_model, experience, start_frame, start, cfg)
        assert sug.q_best >= 0.05
        full = gd.GuidanceConfig(n_samples=500, seed=2)
        ref = gd.suggest(trained_small_model, experience, start_frame, start, full)
        assert sug.n_evaluated <= ref.n_evaluated


class TestRollout:
    def test_improves_and_stays_feasible(self, trained_small_model, experience,
                                         start, phantom_small):
        cfg = gd.GuidanceConfig(n_samples=300, seed=5)
        res = gd.rollout(trained_small_model, phantom_small, experience, start,
                         steps=6, cfg=cfg)
        log = res["log"]
        assert log[0]["step"] == 0
        first = log[0]["oracle_score"]
        last = phantom.oracle_quality(res["final_state"], phantom_small)["score"]
        assert last > first
        # every visited state obeys the hard constraint
        for row in log:
            assert row["state"].fz >= 0

    def test_deterministic(self, trained_small_model, experience, start,
                           phantom_small):
        cfg = gd.GuidanceConfig(n_samples=100, seed=9)
        a = gd.rollout(trained_small_model, phantom_small, experience, start,
                       steps=3, cfg=cfg)
        b = gd.rollout(trained_small_model, phantom_small, experience, start,
                       steps=3, cfg=cfg)
        assert np.array_equal(a["final_state"].pose, b["final_state"].pose)
        assert np.array_equal(a["final_state"].wrench, b["final_state"].wrench)

    def test_truncates_when_stuck(self, trained_small_model, experience,
                                  phantom_small):
        far = phantom.ProbeState(quat.from_axis_angle([0, 1, 0], 1.5),
                                 np.array([0, 0, 40.0, 0, 0, 0]))
        cfg = gd.GuidanceConfig(n_samples=30, seed=0)
        res = gd.rollout(trained_small_model, phantom_small, experience, far,
                         steps=5, cfg=cfg)
        assert res["truncated"]
        assert len(res["log"]) == 1

    def test_csv_layout(self, trained_small_model, experience, start,
                        phantom_small):
        cfg = gd.GuidanceConfig(n_samples=50, seed=1)
        res = gd.rollout(trained_small_model, phantom_small, experience, start,
                         steps=2, cfg=cfg)
        csv = gd.rollout_csv(res)
        lines = csv.strip().split("\n")
        assert lines[0].startswith("step,pose_w")
        assert len(lines) == 1 + len(res["log"])
        assert all(len(l.split(",")) == len(lines[0].split(",")) for l in lines)

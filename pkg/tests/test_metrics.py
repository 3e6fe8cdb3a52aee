"""Relative-pose metric tests, including exact gauge invariance."""

import numpy as np
import pytest

from proba.errors import MissingGroundTruth
from proba.geometry import Pose, rotation_matrix, rotation_vector
from proba.metrics import (PairError, accuracy_at, fov_error,
                           relative_pose_errors, summarize)


def random_poses(rng, n):
    return [Pose(rng.normal(0, 0.6, 3), rng.normal(0, 1.0, 3)) for _ in range(n)]


def gauge_transform(poses, R_g, t_g, scale):
    """Apply a global rigid transform + uniform scale to a pose set."""
    out = []
    for p in poses:
        R = rotation_matrix(p.rotation)
        R_new = R @ R_g.T
        t_new = scale * p.translation - R_new @ t_g
        out.append(Pose(rotation_vector(R_new), t_new))
    return out


class TestRelativePoseErrors:
    def test_exact_estimate_gives_zero(self):
        # arccos amplifies float rounding near zero angle to ~1e-6 degrees
        rng = np.random.default_rng(41)
        gt = random_poses(rng, 4)
        for e in relative_pose_errors(gt, gt):
            assert e.rot_err == pytest.approx(0.0, abs=1e-5)
            assert e.trans_err == pytest.approx(0.0, abs=1e-5)

    def test_constructed_ten_degree_rotation_offset(self):
        gt = [Pose.identity(), Pose(np.zeros(3), np.array([1.0, 0.0, 0.0]))]
        est = [Pose.identity(),
               Pose(np.array([0.0, 0.0, np.radians(10.0)]),
                    np.array([1.0, 0.0, 0.0]))]
        errs = relative_pose_errors(est, gt)
        assert errs[0].rot_err == pytest.approx(10.0, abs=1e-9)

    def test_pure_rotation_pair_convention(self):
        # zero ground-truth relative translation: trans_err 0 by convention
        gt = [Pose.identity(), Pose(np.array([0.1, 0.0, 0.0]), np.zeros(3))]
        est = [Pose.identity(), Pose(np.array([0.1, 0.0, 0.0]),
                                     np.array([0.0, 0.5, 0.0]))]
        errs = relative_pose_errors(est, gt)
        assert errs[0].trans_err == 0.0

    def test_requires_ground_truth(self):
        rng = np.random.default_rng(42)
        poses = random_poses(rng, 3)
        with pytest.raises(MissingGroundTruth):
            relative_pose_errors(poses, [poses[0], None, poses[2]])
        with pytest.raises(MissingGroundTruth):
            relative_pose_errors(poses[:1], poses[:1])

    def test_gauge_invariance_of_percentages(self):
        rng = np.random.default_rng(43)
        gt = random_poses(rng, 5)
        est = [Pose(p.rotation + rng.normal(0, 0.02, 3),
                    p.translation + rng.normal(0, 0.05, 3)) for p in gt]
        base = relative_pose_errors(est, gt)
        R_g = rotation_matrix(rng.normal(0, 1, 3))
        moved = gauge_transform(est, R_g, rng.normal(0, 3, 3), 2.7)
        shifted = relative_pose_errors(moved, gt)
        for tau in (5, 10, 15):
            assert accuracy_at(base, tau) == accuracy_at(shifted, tau)
        # raw angles agree to numerical precision as well
        for a, b in zip(base, shifted):
            assert b.rot_err == pytest.approx(a.rot_err, abs=1e-6)
            assert b.trans_err == pytest.approx(a.trans_err, abs=1e-6)


class TestAccuracyAt:
    def test_all_exact_pairs(self):
        errs = [PairError((0, 1), 0.0, 0.0), PairError((0, 2), 0.0, 0.0)]
        assert accuracy_at(errs, 5) == (100.0, 100.0, 100.0)

    def test_one_rotation_failure_definition(self):
        errs = [PairError((0, 1), 7.0, 1.0), PairError((0, 2), 1.0, 1.0)]
        rra, rta, maa = accuracy_at(errs, 5)
        assert (rra, rta, maa) == (50.0, 100.0, 50.0)

    def test_joint_threshold_bound(self):
        rng = np.random.default_rng(44)
        for _ in range(1000):
            errs = [PairError((0, k), rng.uniform(0, 30), rng.uniform(0, 30))
                    for k in range(6)]
            for tau in (5.0, 10.0, 15.0):
                rra, rta, maa = accuracy_at(errs, tau)
                assert maa <= min(rra, rta)

    def test_monotone_in_threshold(self):
        rng = np.random.default_rng(45)
        errs = [PairError((0, k), rng.uniform(0, 20), rng.uniform(0, 20))
                for k in range(20)]
        prev = (0.0, 0.0, 0.0)
        for tau in (2.0, 5.0, 10.0, 15.0, 25.0):
            cur = accuracy_at(errs, tau)
            assert all(c >= p for c, p in zip(cur, prev))
            prev = cur

    def test_rejects_nonpositive_threshold(self):
        with pytest.raises(ValueError):
            accuracy_at([], 0.0)


class TestFovError:
    def test_examples(self):
        assert fov_error(60.0, 60.0) == 0.0
        assert fov_error(55.0, 60.0) == 5.0
        assert fov_error(60.0, 55.0) == 5.0


class TestSummarize:
    def test_fields_cover_all_thresholds(self):
        rng = np.random.default_rng(46)
        gt = random_poses(rng, 4)
        s = summarize(gt, gt, est_fov=58.0, gt_fov=60.0)
        assert s.maa5 == s.maa10 == s.maa15 == 100.0
        assert s.fov_error == pytest.approx(2.0)
        d = s.as_dict()
        assert set(d) == {"rra5", "rra10", "rra15", "rta5", "rta10", "rta15",
                          "maa5", "maa10", "maa15", "fov_error"}

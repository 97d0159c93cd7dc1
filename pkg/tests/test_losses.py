import numpy as np
import pytest

from pcdistill.errors import ConfigError, DataError, ParameterError, ShapeError
from pcdistill.losses import (
    C2FL,
    F2CL,
    LogitBatch,
    PcdConfig,
    build_schedule,
    cross_entropy,
    direction_loss,
    group_loss,
    group_weight,
    natural_ranks,
    pcd_loss,
    rank_logit_difference,
    stage_group_sizes,
    vanilla_kd_loss,
)
from pcdistill.oracle import oracle_ce, oracle_pcd_loss, oracle_vanilla_kd
from pcdistill.tensor import Tensor


def make_batch(t, s, labels, grad=True):
    return LogitBatch(Tensor(np.asarray(t, float)),
                      Tensor(np.asarray(s, float), requires_grad=grad),
                      np.asarray(labels))


def random_batch(rng, b, c):
    t = rng.normal(size=(b, c)) * 2
    s = rng.normal(size=(b, c)) * 2
    y = rng.integers(0, c, b)
    return t, s, y


class TestLogitBatch:
    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            make_batch(np.zeros((2, 3)), np.zeros((2, 4)), [0, 0])

    def test_label_out_of_range(self):
        with pytest.raises(DataError):
            make_batch(np.zeros((1, 3)), np.zeros((1, 3)), [3])

    def test_teacher_detached(self):
        batch = LogitBatch(Tensor(np.zeros((1, 2)), requires_grad=True),
                           Tensor(np.zeros((1, 2))), np.array([0]))
        assert not batch.teacher.requires_grad


class TestVanillaKd:
    def test_identical_logits_zero_kl(self):
        z = [[1.0, -2.0, 0.5]]
        batch = make_batch(z, z, [0])
        loss = vanilla_kd_loss(batch, tau=3.0, alpha_ce=0.0, beta=1.0)
        assert loss.item() == 0.0

    def test_hand_value(self):
        batch = make_batch([[1.0, 0.0]], [[0.0, 0.0]], [0])
        loss = vanilla_kd_loss(batch, tau=1.0, alpha_ce=0.0, beta=1.0)
        assert abs(loss.item() - 0.1109) < 1e-3

    def test_temperature_scaling_matches_oracle(self):
        rng = np.random.default_rng(1)
        t, s, y = random_batch(rng, 3, 6)
        for tau in (1.0, 2.0, 4.0):
            got = vanilla_kd_loss(make_batch(t, s, y), tau, 1.0, 1.0).item()
            want = oracle_vanilla_kd(t, s, y, tau, 1.0, 1.0).value
            assert abs(got - want) < 1e-9

    def test_bad_tau(self):
        with pytest.raises(ParameterError):
            vanilla_kd_loss(make_batch([[0.0, 1.0]], [[0.0, 1.0]], [0]), 0.0)


class TestRanking:
    def test_hand_example(self):
        batch = make_batch([[3.0, 1.0, 2.0]], [[1.0, 1.0, 1.5]], [0])
        assert rank_logit_difference(batch).tolist() == [[0, 2, 1]]

    def test_all_ties_stable(self):
        z = np.zeros((2, 5))
        batch = make_batch(z, z, [0, 1])
        assert rank_logit_difference(batch).tolist() == [list(range(5))] * 2

    def test_rows_are_gap_sorted_permutations(self):
        rng = np.random.default_rng(2)
        t, s, y = random_batch(rng, 4, 10)
        ranks = rank_logit_difference(make_batch(t, s, y))
        gaps = np.abs(t - s)
        for b in range(4):
            assert sorted(ranks[b].tolist()) == list(range(10))
            ordered = gaps[b][ranks[b]]
            assert (ordered[:-1] >= ordered[1:] - 1e-15).all()


class TestSchedules:
    def test_f2cl_sizes(self):
        assert stage_group_sizes(12, 3, F2CL) == [4, 6, 12]

    def test_c2fl_sizes(self):
        assert stage_group_sizes(12, 3, C2FL) == [12, 6, 4]

    def test_ceil_sizes(self):
        assert stage_group_sizes(10, 3, F2CL) == [4, 5, 10]

    def test_too_many_stages(self):
        with pytest.raises(ParameterError, match="stages"):
            stage_group_sizes(3, 4, F2CL)

    def test_identity_ranks_chunking(self):
        ranks = natural_ranks(1, 6)
        sched = build_schedule(ranks, 6, 3, F2CL)
        got = [[g[0].tolist() for g in stage.groups] for stage in sched.stages]
        assert got == [
            [[0, 1], [2, 3], [4, 5]],
            [[0, 1, 2], [3, 4, 5]],
            [[0, 1, 2, 3, 4, 5]],
        ]

    def test_final_chunk_smaller(self):
        sched = build_schedule(natural_ranks(2, 10), 10, 3, F2CL)
        widths = [g.shape[1] for g in sched.stages[0].groups]
        assert widths == [4, 4, 2]

    def test_partition_property(self):
        rng = np.random.default_rng(3)
        for _ in range(25):
            c = int(rng.integers(2, 13))
            s = int(rng.integers(1, min(c, 4) + 1))
            direction = F2CL if rng.random() < 0.5 else C2FL
            ranks = np.stack([rng.permutation(c) for _ in range(3)])
            sched = build_schedule(ranks, c, s, direction)
            sizes = [st.group_size for st in sched.stages]
            if direction == F2CL:
                assert sizes == sorted(sizes)
            else:
                assert sizes == sorted(sizes, reverse=True)
            for stage in sched.stages:
                for b in range(3):
                    union = np.concatenate([g[b] for g in stage.groups])
                    assert sorted(union.tolist()) == list(range(c))
                assert all(g.shape[1] >= 1 for g in stage.groups)


class TestGroupWeight:
    def test_identical_rows_zero(self):
        p = np.array([0.25, 0.25, 0.5])
        lam = group_weight(p, Tensor(p.copy()))
        assert abs(lam.item()) < 1e-12

    def test_orthogonal_rows_one(self):
        lam = group_weight(np.array([1.0, 0.0]), Tensor([0.0, 1.0]))
        assert abs(lam.item() - 1.0) < 1e-12

    def test_hand_value(self):
        lam = group_weight(np.array([0.5, 0.5]), Tensor([1.0, 0.0]))
        assert abs(lam.item() - 0.2929) < 1e-4

    def test_disabled_returns_one(self):
        assert group_weight(np.array([0.5, 0.5]), Tensor([1.0, 0.0]),
                            use_wdm=False) == 1.0

    def test_differentiable_in_student_side(self):
        p = np.array([0.3, 0.7])
        q = Tensor([0.6, 0.4], requires_grad=True)
        group_weight(p, q).backward()
        assert q.grad is not None and np.isfinite(q.grad).all()


class TestGroupLoss:
    def test_identical_zero(self):
        p = np.array([0.2, 0.8])
        lam = group_weight(p, Tensor(p.copy()))
        assert group_loss(p, Tensor(p.copy()), lam, tau=2.0).item() == 0.0

    def test_unit_weight_reduces_to_kl(self):
        p = np.array([0.3, 0.7])
        q = Tensor([0.5, 0.5])
        got = group_loss(p, q, 1.0, tau=1.0).item()
        want = 0.3 * np.log(0.3 / 0.5) + 0.7 * np.log(0.7 / 0.5)
        assert abs(got - want) < 1e-12

    def test_random_group_matches_scalar_formula(self):
        rng = np.random.default_rng(4)
        p = rng.dirichlet(np.ones(5))
        q_raw = rng.dirichlet(np.ones(5))
        lam = group_weight(p, Tensor(q_raw))
        got = group_loss(p, Tensor(q_raw), lam, tau=2.0).item()
        dot = float(p @ q_raw)
        lam_ref = max(0.0, 1.0 - dot / (np.linalg.norm(p) * np.linalg.norm(q_raw)))
        kl_ref = float(np.sum(p * (np.log(p) - np.log(q_raw))))
        assert abs(got - lam_ref * kl_ref * 4.0) < 1e-9


class TestDirectionLoss:
    def test_zero_when_identical(self):
        rng = np.random.default_rng(5)
        z = rng.normal(size=(2, 6))
        batch = make_batch(z, z, [0, 3])
        cfg = PcdConfig(tau=2.0, stages=3)
        sched = build_schedule(rank_logit_difference(batch), 6, 3, F2CL)
        assert direction_loss(batch, sched, cfg).item() == 0.0

    def test_single_stage_wdm_off_equals_vanilla_kl_term(self):
        rng = np.random.default_rng(6)
        t, s, y = random_batch(rng, 3, 6)
        batch = make_batch(t, s, y)
        cfg = PcdConfig(tau=3.0, stages=1, use_wdm=False)
        sched = build_schedule(rank_logit_difference(batch), 6, 1, F2CL)
        got = direction_loss(batch, sched, cfg).item()
        vanilla_kl = vanilla_kd_loss(batch, 3.0, alpha_ce=0.0, beta=1.0).item()
        assert abs(got - vanilla_kl) < 1e-12

    def test_matches_oracle(self):
        rng = np.random.default_rng(7)
        t, s, y = random_batch(rng, 2, 6)
        cfg = PcdConfig(tau=2.0, alpha=1.0, stages=3, use_f2cl=True,
                        use_c2fl=False)
        got = pcd_loss(make_batch(t, s, y), cfg).item()
        want = oracle_pcd_loss(t, s, y, cfg).value
        assert abs(got - want) < 1e-9


class TestPcdLoss:
    def test_alpha_zero_is_pure_ce(self):
        rng = np.random.default_rng(8)
        t, s, y = random_batch(rng, 3, 5)
        cfg = PcdConfig(alpha=0.0)
        got = pcd_loss(make_batch(t, s, y), cfg).item()
        assert abs(got - oracle_ce(s, y)) < 1e-12

    def test_identical_logits_ce_only(self):
        rng = np.random.default_rng(9)
        z = rng.normal(size=(3, 5))
        y = rng.integers(0, 5, 3)
        got = pcd_loss(make_batch(z, z, y), PcdConfig(tau=2.0)).item()
        assert abs(got - oracle_ce(z, y)) < 1e-12

    def test_both_directions_off_raises(self):
        batch = make_batch(np.zeros((1, 4)), np.zeros((1, 4)), [0])
        with pytest.raises(ConfigError):
            pcd_loss(batch, PcdConfig(use_f2cl=False, use_c2fl=False))

    def test_full_config_matches_oracle(self):
        rng = np.random.default_rng(10)
        t, s, y = random_batch(rng, 3, 7)
        cfg = PcdConfig(tau=1.5, alpha=0.7, stages=3)
        got = pcd_loss(make_batch(t, s, y), cfg).item()
        want = oracle_pcd_loss(t, s, y, cfg).value
        assert abs(got - want) < 1e-9

    def test_oracle_equivalence_over_ablation_cells(self):
        rng = np.random.default_rng(11)
        for use_ldr in (False, True):
            for use_wdm in (False, True):
                for f2cl, c2fl in ((True, False), (False, True), (True, True)):
                    for _ in range(5):
                        c = int(rng.integers(3, 9))
                        t, s, y = random_batch(rng, int(rng.integers(1, 4)), c)
                        cfg = PcdConfig(
                            tau=float(rng.uniform(0.5, 4.0)),
                            alpha=float(rng.uniform(0.2, 2.0)),
                            stages=int(rng.integers(1, min(c, 3) + 1)),
                            use_ldr=use_ldr, use_f2cl=f2cl, use_c2fl=c2fl,
                            use_wdm=use_wdm,
                        )
                        got = pcd_loss(make_batch(t, s, y), cfg).item()
                        want = oracle_pcd_loss(t, s, y, cfg).value
                        assert abs(got - want) < 1e-9

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(12)
        c = 6
        t, s, y = random_batch(rng, 3, c)
        # keep per-sample gap values distinct so ranking is unambiguous
        assert all(len(np.unique(np.abs(r))) == c for r in t - s)
        cfg = PcdConfig(tau=2.0, alpha=1.0, stages=3)
        base = pcd_loss(make_batch(t, s, y), cfg).item()
        perm = rng.permutation(c)
        inv = np.argsort(perm)
        permuted = pcd_loss(
            make_batch(t[:, perm], s[:, perm], inv[y]), cfg
        ).item()
        assert abs(base - permuted) < 1e-10

    def test_student_gradient_finite_and_matches_fd(self):
        from pcdistill.oracle import oracle_grad

        rng = np.random.default_rng(13)
        t, s, y = random_batch(rng, 2, 6)
        cfg = PcdConfig(tau=2.0, alpha=1.0, stages=3)
        batch = make_batch(t, s, y)
        pcd_loss(batch, cfg).backward()
        g = batch.student.grad
        assert np.isfinite(g).all()
        fd = oracle_grad(lambda v: oracle_pcd_loss(t, v, y, cfg).value, s)
        rel = np.abs(g - fd) / np.maximum(np.maximum(np.abs(g), np.abs(fd)), 1e-8)
        assert rel.max() < 1e-4

    def test_cross_entropy_matches_oracle(self):
        rng = np.random.default_rng(14)
        z = rng.normal(size=(4, 5)) * 3
        y = rng.integers(0, 5, 4)
        assert abs(cross_entropy(Tensor(z), y).item() - oracle_ce(z, y)) < 1e-12

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ltml.core import ShapeMismatch, make_rng
from ltml.llr import (
    LLA,
    LLM,
    OFF,
    LlrConfig,
    LlrSelection,
    SelectionOnPositive,
    apply_lla,
    apply_llm,
    k_schedule,
    select_large_losses,
)
from ltml.losses import ANR, LossConfig, LossReport, anr_bce, bce


def report_from_losses(losses):
    losses = np.asarray(losses, dtype=float)
    return LossReport(losses, np.ones_like(losses), float(losses.mean()))


class TestSchedule:
    cfg = LlrConfig(mode=LLA, rho_max=0.02, warmup_epochs=1, ramp_epochs=5)

    @pytest.mark.parametrize("epoch", [0, 1])
    def test_zero_during_warmup(self, epoch):
        assert k_schedule(epoch, 1000, self.cfg) == 0

    @pytest.mark.parametrize("epoch", [6, 7, 50])
    def test_saturates_at_rho_max(self, epoch):
        assert k_schedule(epoch, 1000, self.cfg) == 20

    def test_linear_ramp_rounds_up(self):
        # epoch 2 -> rho = 0.02 * 1/5 = 0.004 of 1000 negatives
        assert k_schedule(2, 1000, self.cfg) == 4
        assert k_schedule(2, 999, self.cfg) == math.ceil(0.004 * 999)

    def test_rho_zero_and_off(self):
        assert k_schedule(10, 1000, LlrConfig(mode=LLA, rho_max=0.0)) == 0
        assert k_schedule(10, 1000, LlrConfig(mode=OFF, rho_max=0.5)) == 0

    @given(st.integers(0, 2000), st.floats(0, 1), st.integers(0, 5), st.integers(1, 8))
    def test_non_decreasing_and_bounded(self, negatives, rho, warmup, ramp):
        cfg = LlrConfig(mode=LLA, rho_max=rho, warmup_epochs=warmup, ramp_epochs=ramp)
        ks = [k_schedule(e, negatives, cfg) for e in range(0, warmup + ramp + 3)]
        assert all(a <= b for a, b in zip(ks, ks[1:]))
        assert 0 <= ks[-1] <= negatives

    def test_invalid_config(self):
        with pytest.raises(ValueError):
            LlrConfig(rho_max=1.5)
        with pytest.raises(ValueError):
            LlrConfig(ramp_epochs=0)
        with pytest.raises(ValueError):
            LlrConfig(mode="Drop")


class TestSelection:
    def test_k_zero_selects_nothing(self):
        sel = select_large_losses(report_from_losses([[0.9, 0.1, 0.5]]), [[0, 0, 0]], 0)
        assert not sel.mask.any() and sel.k == 0

    def test_order_statistic(self):
        sel = select_large_losses(report_from_losses([[0.9, 0.1, 0.5]]), [[0, 0, 0]], 2)
        np.testing.assert_array_equal(sel.mask, [[True, False, True]])

    def test_clamps_to_available_negatives(self):
        sel = select_large_losses(report_from_losses([[0.9, 3.0, 0.5]]), [[0, 1, 0]], 10)
        np.testing.assert_array_equal(sel.mask, [[True, False, True]])
        assert sel.k == 2

    def test_positive_entries_never_selected_even_with_largest_loss(self):
        sel = select_large_losses(report_from_losses([[5.0, 0.2], [0.3, 9.0]]), [[1, 0], [0, 1]], 1)
        np.testing.assert_array_equal(sel.mask, [[False, False], [True, False]])

    def test_ties_broken_row_major(self):
        losses = np.full((3, 3), 0.7)
        sel = select_large_losses(report_from_losses(losses), np.zeros((3, 3), int), 4)
        np.testing.assert_array_equal(sel.mask.ravel(), [1, 1, 1, 1, 0, 0, 0, 0, 0])

    @given(st.integers(0, 10_000), st.integers(0, 60))
    def test_mask_invariants(self, seed, k):
        rng = make_rng(seed)
        losses = rng.random((6, 7))
        y = (rng.random((6, 7)) < 0.3).astype(np.int8)
        sel = select_large_losses(report_from_losses(losses), y, k)
        assert not (sel.mask & (y == 1)).any()
        assert sel.mask.sum() == sel.k == min(k, int((y == 0).sum()))
        if sel.k:
            chosen = losses[sel.mask].min()
            rest = losses[(y == 0) & ~sel.mask]
            assert rest.size == 0 or rest.max() <= chosen

    def test_negative_k_rejected(self):
        with pytest.raises(ValueError):
            select_large_losses(report_from_losses([[1.0]]), [[0]], -1)


def batch(seed=0, shape=(6, 5)):
    rng = make_rng(seed)
    return rng.uniform(-4, 4, shape), (rng.random(shape) < 0.3).astype(np.int8)


class TestAbandon:
    def test_empty_selection_is_identity(self):
        u, y = batch()
        r = anr_bce(u, y, LossConfig(kind=ANR))
        out = apply_lla(r, LlrSelection(np.zeros_like(y, bool), 0))
        np.testing.assert_array_equal(out.per_entry_loss, r.per_entry_loss)
        assert out.total == r.total

    def test_all_negatives_leaves_positive_term(self):
        u, y = batch(1)
        r = anr_bce(u, y, LossConfig(kind=ANR))
        out = apply_lla(r, select_large_losses(r, y, y.size))
        positive_only = (y * np.log1p(np.exp(-u))).mean()
        assert out.total == pytest.approx(positive_only, rel=1e-12)

    def test_selected_entries_contribute_nothing(self):
        u, y = batch(2)
        r = anr_bce(u, y, LossConfig(kind=ANR))
        sel = select_large_losses(r, y, 5)
        out = apply_lla(r, sel)
        assert (out.per_entry_loss[sel.mask] == 0).all()
        assert (out.grad_u[sel.mask] == 0).all()
        np.testing.assert_array_equal(out.grad_u[~sel.mask], r.grad_u[~sel.mask])
        assert out.total <= r.total

    def test_shape_mismatch(self):
        r = report_from_losses(np.zeros((2, 2)))
        with pytest.raises(ShapeMismatch):
            apply_lla(r, LlrSelection(np.zeros((2, 3), bool), 0))


class TestModify:
    def test_empty_selection_is_identity(self):
        u, y = batch(3)
        out = apply_llm(u, y, LlrSelection(np.zeros_like(y, bool), 0), bce)
        ref = bce(u, y)
        np.testing.assert_array_equal(out.per_entry_loss, ref.per_entry_loss)

    def test_flip_at_zero_logit(self):
        u = np.zeros((1, 2))
        y = np.array([[0, 0]])
        sel = LlrSelection(np.array([[True, False]]), 1)
        before = bce(u, y)
        after = apply_llm(u, y, sel, bce)
        assert before.per_entry_loss[0, 0] == pytest.approx(math.log(2))
        assert after.per_entry_loss[0, 0] == pytest.approx(math.log(2))
        assert before.grad_u[0, 0] == 0.5
        assert after.grad_u[0, 0] == -0.5
        np.testing.assert_array_equal(y, [[0, 0]])

    def test_all_negative_row_becomes_all_positive(self):
        u, _ = batch(4, shape=(1, 5))
        y = np.zeros((1, 5), dtype=np.int8)
        out = apply_llm(u, y, LlrSelection(np.ones((1, 5), bool), 5), bce)
        np.testing.assert_allclose(out.per_entry_loss, bce(u, np.ones_like(y)).per_entry_loss)

    def test_selection_on_positive_rejected(self):
        with pytest.raises(SelectionOnPositive):
            apply_llm(np.zeros((1, 2)), [[1, 0]], LlrSelection(np.array([[True, False]]), 1), bce)

import math

import numpy as np
import pytest

from omrf.ctc import (INFEASIBLE_LOSS, CtcInfeasibleError, batch_ctc_loss, collapse,
                      ctc_brute_force, ctc_greedy_decode, ctc_loss, forward_variables,
                      min_frames)
from omrf.gradcheck import numerical_grad, rel_error
from omrf.nn import log_softmax


def random_instance(rng, t_max=6, l_max=3, v_max=4):
    vocab = int(rng.integers(1, v_max + 1))
    t_len = int(rng.integers(1, t_max + 1))
    while True:
        target = rng.integers(0, vocab, int(rng.integers(0, l_max + 1))).tolist()
        if min_frames(target) <= t_len:
            break
    return log_softmax(rng.standard_normal((t_len, vocab + 1)) * 2), target


def test_single_frame_single_path():
    lp = np.log(np.array([[0.7, 0.3]]))
    loss, _ = ctc_loss(lp, [0])
    assert loss == pytest.approx(-math.log(0.7), abs=1e-15)


def test_two_frame_worked_example():
    lp = np.log(np.full((2, 2), 0.5))
    loss, _ = ctc_loss(lp, [0])
    assert round(loss, 6) == round(-math.log(0.75), 6) == 0.287682
    assert ctc_brute_force(lp, [0]) == pytest.approx(loss, abs=1e-15)


def test_empty_target_is_all_blank_path():
    lp = log_softmax(np.random.default_rng(0).standard_normal((2, 3)))
    expected = -(lp[0, 2] + lp[1, 2])
    assert ctc_loss(lp, [])[0] == pytest.approx(expected, abs=1e-14)
    assert ctc_brute_force(lp, []) == pytest.approx(expected, abs=1e-14)


def test_brute_force_unreachable_target_is_inf():
    lp = np.log(np.full((2, 3), 1 / 3))
    assert ctc_brute_force(lp, [0, 1, 0]) == math.inf
    assert ctc_brute_force(lp, [1, 1]) == math.inf


def test_brute_force_refuses_large_search():
    with pytest.raises(ValueError):
        ctc_brute_force(np.zeros((12, 5)), [0])


def test_infeasible_target_raises():
    lp = np.log(np.full((2, 3), 1 / 3))
    with pytest.raises(CtcInfeasibleError):
        ctc_loss(lp, [0, 0])
    with pytest.raises(ValueError):
        ctc_loss(lp, [2])


def test_min_frames():
    assert min_frames([]) == 0
    assert min_frames([1, 2, 3]) == 3
    assert min_frames([1, 1, 2, 2, 2]) == 8


def test_matches_brute_force_on_random_instances():
    rng = np.random.default_rng(2024)
    for _ in range(200):
        lp, target = random_instance(rng)
        loss, grad = ctc_loss(lp, target)
        assert abs(loss - ctc_brute_force(lp, target)) < 1e-9
        assert np.max(np.abs(grad.sum(axis=1))) < 1e-9


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(5)
    for _ in range(10):
        _, target = random_instance(rng)
        logits = rng.standard_normal((6, 4))
        target = [v % 3 for v in target]
        if min_frames(target) > 6:
            continue

        def loss():
            return ctc_loss(log_softmax(logits), target)[0]

        _, grad = ctc_loss(log_softmax(logits), target)
        assert rel_error(grad, numerical_grad(loss, logits)) < 1e-6


def test_alpha_beta_consistency():
    rng = np.random.default_rng(6)
    lp = log_softmax(rng.standard_normal((8, 4)))
    target = [0, 2, 2, 1]
    alpha, beta, ext = forward_variables(lp, target)
    totals = np.logaddexp.reduce(alpha + beta - lp[:, ext], axis=1)
    assert np.max(np.abs(totals - totals[0])) < 1e-9
    assert -totals[0] == pytest.approx(ctc_loss(lp, target)[0], abs=1e-12)


def test_probability_in_unit_interval_and_monotone():
    rng = np.random.default_rng(7)
    logits = rng.standard_normal((5, 3))
    target = [0, 1]
    base = ctc_loss(log_softmax(logits), target)[0]
    assert 0 < math.exp(-base) <= 1
    # push mass toward the valid path (0, 0, b, 1, 1)
    path = [0, 0, 2, 1, 1]
    logits[np.arange(5), path] += 1.0
    assert ctc_loss(log_softmax(logits), target)[0] < base


def test_long_sequences_do_not_underflow():
    rng = np.random.default_rng(8)
    lp = log_softmax(rng.standard_normal((500, 20)))
    loss, grad = ctc_loss(lp, rng.integers(0, 19, 60).tolist())
    assert np.isfinite(loss) and np.all(np.isfinite(grad))


def test_collapse_and_greedy_decode():
    b = 2
    assert collapse([b, 0, 0, b, 0], b) == (0, 0)
    frames = np.log(np.eye(3)[[b, 0, 0, b, 0]] * 0.98 + 0.01)
    assert ctc_greedy_decode(frames) == [0, 0]
    assert ctc_greedy_decode(np.log(np.full((4, 3), 1e-3)) + np.eye(3)[[2, 2, 2, 2]]) == []
    # exact tie between ids 0 and 1 picks 0
    assert ctc_greedy_decode(np.log(np.array([[0.5, 0.5, 1e-9]]))) == [0]


def test_batch_loss_masks_padding_and_skips_infeasible():
    rng = np.random.default_rng(9)
    lp = log_softmax(rng.standard_normal((3, 6, 4)))
    targets = [[0, 1], [2], [1, 1, 1, 1]]
    mean, grad, skipped = batch_ctc_loss(lp, [6, 3, 4], targets)
    assert skipped == [2]
    expected = (ctc_loss(lp[0], [0, 1])[0] + ctc_loss(lp[1, :3], [2])[0] + INFEASIBLE_LOSS) / 3
    assert mean == pytest.approx(expected, abs=1e-12)
    assert not grad[1, 3:].any() and not grad[2].any()
    np.testing.assert_allclose(grad[0], ctc_loss(lp[0], [0, 1])[1] / 3)

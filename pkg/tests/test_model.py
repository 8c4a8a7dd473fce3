import json
import math

import numpy as np
import pytest

import oracle
from conftest import orthonormal_model, random_case, tiny_model
from chainlabel.model import (
    PARAM_NAMES,
    Hyper,
    ModelParams,
    backward_sequence,
    embed_label,
    finite_diff_check,
    forward_sequence,
    joint_project,
    load_checkpoint,
    lstm_step,
    numerical_gradient,
    relative_error,
    save_checkpoint,
    score_labels,
    trace_loss,
)
from chainlabel.numerics import EmptySupportError, make_rng, softmax


def test_hyper_defaults_and_validation():
    h = Hyper(K=10, d_i=7)
    assert (h.d_e, h.d_r) == (64, 512)
    assert (h.end, h.start) == (10, 11)
    with pytest.raises(ValueError):
        Hyper(K=1, d_i=3)


def test_init_biases():
    p = tiny_model(0)
    assert (p.b_f == 1.0).all()
    for name in ("b_c", "b_i", "b_o", "b_x"):
        assert (p[name] == 0).all()
    assert p.U_l.shape == (7, 4)


class TestEmbed:
    def test_identity_table_gives_basis_vectors(self):
        p = orthonormal_model(4)
        for k in range(6):
            np.testing.assert_array_equal(embed_label(k, p), np.eye(6)[k])

    def test_shape_and_range(self):
        p = tiny_model(1)
        assert embed_label(6, p).shape == (4,)
        with pytest.raises(IndexError):
            embed_label(7, p)


class TestLstmStep:
    def test_constant_gates(self):
        p = ModelParams.zeros(Hyper(K=3, d_e=2, d_r=3, d_i=2))
        p.b_f[:] = 1.0
        r_prev = np.array([0.4, -1.0, 2.0])
        r, o = lstm_step(r_prev, np.array([0.3, 0.7]), p)
        np.testing.assert_allclose(r, 0.7310585786300049 * r_prev, rtol=1e-15)
        np.testing.assert_allclose(o, 0.5 * r, rtol=1e-15)

    def test_zero_fixed_point(self):
        p = tiny_model(2)
        for b in ("b_c", "b_i", "b_f", "b_o"):
            p[b][:] = 0.0
        r, o = lstm_step(np.zeros(6), np.zeros(4), p)
        assert not r.any() and not o.any()

    def test_pinned_seed42(self):
        # frozen from tests/oracle.py (scalar re-evaluation)
        p = ModelParams.init(Hyper(K=3, d_e=2, d_r=3, d_i=2), make_rng(42))
        r, o = lstm_step(np.array([0.1, -0.2, 0.3]), p.U_l[4], p)
        np.testing.assert_allclose(r, [0.08289783942033736, -0.13825032323624323, 0.21215021131374287], rtol=1e-13)
        np.testing.assert_allclose(o, [0.03937402105131915, -0.07372642822931877, 0.1485226661263063], rtol=1e-13)

    def test_matches_oracle_on_random_inputs(self):
        rng = make_rng(5)
        p = tiny_model(5)
        P = {n: a.tolist() for n, a in p.items()}
        r_prev, w = rng.standard_normal(6), rng.standard_normal(4)
        r, o = lstm_step(r_prev, w, p)
        r_ref, o_ref = oracle.lstm_step(P, list(r_prev), list(w))
        np.testing.assert_allclose(r, r_ref, rtol=1e-12)
        np.testing.assert_allclose(o, o_ref, rtol=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            lstm_step(np.zeros(5), np.zeros(4), tiny_model(0))

    def test_contracts_without_candidate(self):
        p = tiny_model(3)
        p.U_r[:] = 0.0
        p.U_w[:] = 0.0
        p.b_c[:] = 0.0
        r = make_rng(3).standard_normal(6)
        bound = np.abs(r).max()
        for _ in range(20):
            r, _ = lstm_step(r, make_rng(9).standard_normal(4), p)
            assert np.abs(r).max() <= bound


class TestJointAndScores:
    def test_zero_inputs(self):
        p = tiny_model(0)
        assert not joint_project(np.zeros(6), np.zeros(3), p).any()

    def test_all_ones_mask_is_identity(self):
        p = tiny_model(0)
        o, img = make_rng(1).standard_normal(6), make_rng(2).standard_normal(3)
        np.testing.assert_array_equal(
            joint_project(o, img, p), joint_project(o, img, p, (np.ones(6), np.ones(3)))
        )

    def test_orthonormal_argmax(self):
        p = orthonormal_model(4)
        for k in range(5):
            assert int(np.argmax(score_labels(p.U_l[k], p))) == k

    def test_masked_end_has_zero_probability(self):
        p = tiny_model(4)
        s = score_labels(make_rng(0).standard_normal(4), p, {5})
        assert softmax(s)[5] == 0.0

    def test_zero_embedding_gives_uniform(self):
        p = tiny_model(4)
        prob = softmax(score_labels(np.zeros(4), p, {0, 2}))
        np.testing.assert_allclose(prob, [0, 0.25, 0, 0.25, 0.25, 0.25])

    def test_all_masked(self):
        p = tiny_model(4)
        with pytest.raises(EmptySupportError):
            score_labels(np.ones(4), p, set(range(6)))


class TestForward:
    def test_minimal_sequence(self):
        p = tiny_model(0)
        trace = forward_sequence(np.ones(3), [5], p)
        assert len(trace) == 1
        assert trace.steps[0].input_id == 6

    def test_normalised_and_masked(self):
        p, img, seq = random_case(11)
        trace = forward_sequence(img, seq, p)
        for t, st in enumerate(trace.steps):
            assert abs(st.probs.sum() - 1.0) <= 1e-9
            for c in seq[:t]:
                assert st.probs[c] == 0.0

    def test_pinned_seed42_scores(self):
        p = ModelParams.init(Hyper(K=3, d_e=2, d_r=3, d_i=2), make_rng(42))
        trace = forward_sequence(np.array([-1.0, 1.0]), [1, 3], p)
        expected = [
            [0.39507118757210163, 0.7832832444129376, -0.21573692999275978, 0.7069825505082412],
            [0.4127193673083989, -np.inf, -0.33084728056908064, 0.6442533703592379],
        ]
        for st, exp in zip(trace.steps, expected):
            np.testing.assert_allclose(st.scores, exp, rtol=1e-12)

    def test_matches_oracle(self):
        p, img, seq = random_case(21)
        P = {n: a.tolist() for n, a in p.items()}
        ref = oracle.sequence(P, 5, 6, list(img), seq)
        trace = forward_sequence(img, seq, p)
        for st, (s, lp) in zip(trace.steps, ref):
            np.testing.assert_allclose(st.scores, s, rtol=1e-12, atol=1e-14)
            with np.errstate(divide="ignore"):
                np.testing.assert_allclose(np.log(st.probs), lp, rtol=1e-12, atol=1e-13)

    @pytest.mark.parametrize("seq", [[1, 1, 5], [1, 5, 2], [], [1, 2]])
    def test_bad_sequences(self, seq):
        with pytest.raises(ValueError):
            forward_sequence(np.ones(3), seq, tiny_model(0))

    def test_train_mode_draws_masks(self):
        p, img, seq = random_case(2)
        a = forward_sequence(img, seq, p, "train", make_rng(1), 0.5)
        b = forward_sequence(img, seq, p, "train", make_rng(1), 0.5)
        assert all(st.dropout is not None for st in a.steps)
        np.testing.assert_array_equal(a.steps[-1].probs, b.steps[-1].probs)
        keep = {float(v) for st in a.steps for v in st.dropout[0]}
        assert keep <= {0.0, 2.0}


class TestBackward:
    def test_shape_closure(self):
        p, img, seq = random_case(4)
        g = backward_sequence(forward_sequence(img, seq, p), img, p)
        for n in PARAM_NAMES:
            assert g[n].shape == p[n].shape

    def test_untouched_row_is_zero(self):
        # dead joint embedding: no row is scored with any weight, so rows that
        # are never fed as input get exactly zero gradient
        p, img, _ = random_case(4)
        p.b_x[:] = -1e3
        g = backward_sequence(forward_sequence(img, [0, 5], p), img, p)
        for c in (1, 2, 3, 4, 5):
            assert not g.U_l[c].any()

    def test_scored_only_rows_get_pure_scoring_term(self):
        # rows 1..4 are scored but never inputs or targets:
        # dL/dU_l[c] = (1/T) sum_t p_t[c] j_t
        p, img, _ = random_case(4)
        seq = [0, 5]
        trace = forward_sequence(img, seq, p)
        g = backward_sequence(trace, img, p)
        for c in range(1, 5):
            expected = sum(st.probs[c] * st.j for st in trace.steps) / len(seq)
            np.testing.assert_allclose(g.U_l[c], expected, rtol=1e-12, atol=1e-15)

    def test_batch_of_two_doubles_sum(self):
        p, img, seq = random_case(6)
        g = backward_sequence(forward_sequence(img, seq, p), img, p)
        total = {n: g[n] + backward_sequence(forward_sequence(img, seq, p), img, p)[n] for n in PARAM_NAMES}
        for n in PARAM_NAMES:
            np.testing.assert_array_equal(total[n], 2 * g[n])

    def test_dropout_masks_respected(self):
        p, img, seq = random_case(8)
        trace = forward_sequence(img, seq, p, "train", make_rng(3), 0.5)
        analytic = backward_sequence(trace, img, p)

        def loss():
            # replay the same masks deterministically
            return trace_loss(forward_sequence(img, seq, p, "train", make_rng(3), 0.5))

        numeric = numerical_gradient(loss, {"U_ox": p.U_ox, "U_Ix": p.U_Ix}, 1e-6)
        for n in numeric:
            np.testing.assert_allclose(analytic[n], numeric[n], rtol=1e-5, atol=1e-9)


class TestFiniteDiff:
    def test_quadratic(self):
        lam = 1e-4
        theta = make_rng(0).standard_normal((3, 4))
        numeric = numerical_gradient(lambda: 0.5 * lam * float((theta**2).sum()), {"t": theta}, 1e-5)
        assert relative_error(lam * theta, numeric["t"]).max() < 1e-7

    @pytest.mark.parametrize("seed", range(3))
    def test_tiny_model(self, seed):
        p, img, seq = random_case(seed)
        assert finite_diff_check(img, seq, p, 1e-5) <= 1e-4

    @pytest.mark.parametrize("seed", range(5))
    def test_step_refinement(self, seed):
        p, img, seq = random_case(seed)
        coarse = finite_diff_check(img, seq, p, 1e-4)
        fine = finite_diff_check(img, seq, p, 1e-5)
        # allowance for the extended-precision roundoff floor
        assert fine <= 10 * coarse + 1e-6

    def test_detects_a_wrong_gradient(self):
        p, img, seq = random_case(1)
        a = backward_sequence(forward_sequence(img, seq, p), img, p)
        n = numerical_gradient(lambda: trace_loss(forward_sequence(img, seq, p)), {"b_x": p.b_x})
        assert relative_error(a.b_x * 1.01, n["b_x"]).max() > 1e-3

    def test_rejects_bad_eps(self):
        p, img, seq = random_case(1)
        with pytest.raises(ValueError):
            finite_diff_check(img, seq, p, 0.0)


def test_hand_set_end_embedding():
    # j = relu(b_x) = 1 and only END's row is nonzero: p(END) = 3 / (3 + 2)
    p = ModelParams.zeros(Hyper(K=2, d_e=1, d_r=1, d_i=1))
    p.b_x[:] = 1.0
    p.U_l[2] = [math.log(3.0)]
    trace = forward_sequence(np.zeros(1), [2], p)
    np.testing.assert_allclose(trace.steps[0].probs, [0.2, 0.2, 0.6])


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        p = tiny_model(3)
        path = tmp_path / "m.json"
        save_checkpoint(path, p.hyper, ["a", "b", "c", "d", "e"], [4, 3, 2, 1, 0], params=p)
        ck = load_checkpoint(path)
        assert ck.hyper == p.hyper
        assert ck.vocab == ["a", "b", "c", "d", "e"]
        assert ck.label_order == [4, 3, 2, 1, 0]
        for n in PARAM_NAMES:
            np.testing.assert_array_equal(ck.params[n], p[n])
        doc = json.loads(path.read_text())
        assert doc["format_version"] == 1
        assert doc["params"]["U_l"]["rows"] == 7 and doc["params"]["b_x"]["cols"] == 1

    def test_rejects_bad_shape(self, tmp_path):
        p = tiny_model(3)
        path = tmp_path / "m.json"
        save_checkpoint(path, p.hyper, list("abcde"), range(5), params=p)
        doc = json.loads(path.read_text())
        doc["params"]["U_r"]["rows"] = 5
        path.write_text(json.dumps(doc))
        with pytest.raises(ValueError, match="U_r"):
            load_checkpoint(path)

    def test_rejects_non_finite(self, tmp_path):
        p = tiny_model(3)
        path = tmp_path / "m.json"
        save_checkpoint(path, p.hyper, list("abcde"), range(5), params=p)
        text = path.read_text().replace('"data": [', '"data": [NaN, ', 1)
        doc = json.loads(text)
        doc["params"]["U_l"]["data"] = doc["params"]["U_l"]["data"][1:]
        doc["params"]["U_l"]["data"][0] = float("inf")
        path.write_text(json.dumps(doc))
        with pytest.raises(ValueError, match="non-finite"):
            load_checkpoint(path)

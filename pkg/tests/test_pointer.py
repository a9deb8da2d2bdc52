import numpy as np
import pytest

from phasecond import tensor as T
from phasecond.errors import DataError, DegenerateRowError
from phasecond.params import ParamSet
from phasecond.pointer import (
    PointerHead,
    decode_span,
    question_summary,
    span_loss,
)
from phasecond.tensor import Tensor, grad_check


def brute_force_span(ps, pe, max_span):
    """Independent exhaustive-search oracle over all valid (s, e) pairs."""
    best, best_score = None, -1.0
    n = len(ps)
    for s in range(n):
        for e in range(s, min(s + max_span, n)):
            score = ps[s] * pe[e]
            if score > best_score:
                best, best_score = (s, e), score
    return best, best_score


def make_head(width=4, query_width=4, hops=2, seed=0, max_span=15):
    params = ParamSet()
    head = PointerHead(params, width, query_width, hops, np.random.default_rng(seed),
                       max_span=max_span)
    return head, params


class TestQuestionSummary:
    def test_single_row_passthrough(self):
        head, params = make_head(query_width=4)
        v = Tensor(np.array([[1.0, -2.0, 0.5, 3.0]]))
        out = question_summary(v, head.summary_proj, head.summary_score)
        assert np.allclose(out.data, v.data)

    def test_identical_rows_convexity(self):
        head, _ = make_head(query_width=4)
        row = np.array([0.3, -1.0, 2.0, 0.0])
        v = Tensor(np.tile(row, (3, 1)))
        out = question_summary(v, head.summary_proj, head.summary_score)
        assert np.allclose(out.data[0], row)

    def test_gradient(self):
        head, _ = make_head(query_width=4, seed=1)
        rng = np.random.default_rng(2)
        mix = Tensor(rng.standard_normal((1, 4)))
        v = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
        err = grad_check(lambda t: T.tsum(T.mul(
            question_summary(t, head.summary_proj, head.summary_score), mix)), v)
        assert err < 1e-4


class TestDecodeSpan:
    def test_fixture_max_span_15(self):
        span = decode_span([0.1, 0.7, 0.2], [0.05, 0.15, 0.8], max_span=15)
        assert (span.start, span.end) == (1, 2)
        assert span.score == pytest.approx(0.56)

    def test_fixture_max_span_1(self):
        span = decode_span([0.1, 0.7, 0.2], [0.05, 0.15, 0.8], max_span=1)
        assert (span.start, span.end) == (2, 2)
        assert span.score == pytest.approx(0.16)

    @pytest.mark.parametrize("max_span", [1, 5, 15])
    def test_matches_brute_force(self, max_span):
        rng = np.random.default_rng(3)
        for _ in range(200):
            n = rng.integers(1, 12)
            ps = rng.random(n)
            ps /= ps.sum()
            pe = rng.random(n)
            pe /= pe.sum()
            got = decode_span(ps, pe, max_span)
            (s, e), score = brute_force_span(ps, pe, max_span)
            assert (got.start, got.end) == (s, e)
            assert got.score == pytest.approx(score)
            assert 0 <= got.start <= got.end < n
            assert got.end - got.start < max_span


class TestPredictSpan:
    def test_distributions_valid_per_hop(self):
        head, _ = make_head(width=6, query_width=4, hops=3, seed=4)
        rng = np.random.default_rng(5)
        h = Tensor(rng.standard_normal((5, 6)))
        q = head.initial_query(Tensor(rng.standard_normal((3, 4))))
        hops, span = head.predict_span(h, q)
        assert len(hops) == 3
        for p_s, p_e in hops:
            assert np.all(p_s.data >= 0) and np.all(p_e.data >= 0)
            assert abs(p_s.data.sum() - 1.0) <= 1e-9
            assert abs(p_e.data.sum() - 1.0) <= 1e-9
        assert 0 <= span.start <= span.end < 5

    def test_uniform_scores_give_uniform_distribution(self):
        head, params = make_head(width=4, hops=1, seed=6)
        params["ptr.hop1.start.v"].data[:] = 0.0
        rng = np.random.default_rng(7)
        h = Tensor(rng.standard_normal((4, 4)))
        q = Tensor(rng.standard_normal((1, 4)))
        hops, _ = head.predict_span(h, q)
        assert np.allclose(hops[0][0].data, 0.25)

    def test_mask_zeroes_positions(self):
        head, _ = make_head(width=4, seed=8)
        rng = np.random.default_rng(9)
        h = Tensor(rng.standard_normal((5, 4)))
        q = Tensor(rng.standard_normal((1, 4)))
        mask = np.array([True, True, False, True, False])
        hops, span = head.predict_span(h, q, mask=mask)
        for p_s, p_e in hops:
            assert np.all(p_s.data[0, ~mask] == 0.0)
            assert np.all(p_e.data[0, ~mask] == 0.0)
        assert mask[span.start] and mask[span.end]

    def test_all_masked_rejected(self):
        head, _ = make_head(width=4)
        with pytest.raises(DegenerateRowError):
            head.predict_span(Tensor(np.zeros((3, 4))), Tensor(np.zeros((1, 4))),
                              mask=np.zeros(3, dtype=bool))

    def test_adapter_reconciles_query_width(self):
        head, params = make_head(width=6, query_width=4, seed=10)
        assert "ptr.adapter" in params
        v = Tensor(np.random.default_rng(11).standard_normal((2, 4)))
        q = head.initial_query(v)
        assert q.data.shape == (1, 6)

    def test_gradient_wrt_passage(self):
        head, _ = make_head(width=4, query_width=4, hops=2, seed=12)
        rng = np.random.default_rng(13)
        q_src = Tensor(rng.standard_normal((3, 4)))
        h = Tensor(rng.standard_normal((5, 4)), requires_grad=True)

        def f(t):
            hops, _ = head.predict_span(t, head.initial_query(q_src))
            return span_loss(hops, 1, 3)

        assert grad_check(f, h) < 1e-4


class TestSpanLoss:
    def make_hops(self, ps, pe):
        return [(Tensor(np.array([ps])), Tensor(np.array([pe])))]

    def test_half_half(self):
        hops = self.make_hops([0.5, 0.5], [0.5, 0.5])
        loss = span_loss(hops, 0, 1)
        assert loss.data == pytest.approx(2 * np.log(2), abs=1e-9)

    def test_perfect_prediction(self):
        hops = self.make_hops([1.0, 0.0], [0.0, 1.0])
        assert span_loss(hops, 0, 1).data == pytest.approx(0.0)

    def test_zero_probability_clamped(self):
        hops = self.make_hops([0.0, 1.0], [1.0, 0.0])
        loss = span_loss(hops, 0, 1)
        assert np.isfinite(loss.data)
        assert loss.data == pytest.approx(-2 * np.log(1e-12))

    def test_out_of_range_gold(self):
        hops = self.make_hops([0.5, 0.5], [0.5, 0.5])
        with pytest.raises(DataError):
            span_loss(hops, 0, 2)

    def test_non_negative_and_uses_last_hop(self):
        rng = np.random.default_rng(14)
        hops = []
        for _ in range(3):
            ps = rng.random(4)
            ps /= ps.sum()
            pe = rng.random(4)
            pe /= pe.sum()
            hops.append((Tensor(ps[None, :]), Tensor(pe[None, :])))
        loss = span_loss(hops, 1, 2)
        expected = -np.log(hops[-1][0].data[0, 1]) - np.log(hops[-1][1].data[0, 2])
        assert loss.data == pytest.approx(expected)
        assert loss.data >= 0

"""Finite-difference verification of every layer type's gradients.

Used by the grad-check CLI command and the acceptance suite: each
component gets a small random fixture, and the analytic gradient of a
scalar readout is compared against central differences.
"""

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .attention import qp_stack, self_align, self_propagate
from .encoders import EncoderPair
from .features import CharCNN, FeatureConfig
from .fusion import InnerFusionLayer, OuterFusionStack
from .params import ParamSet
from .pointer import PointerHead, question_summary, span_loss
from .tensor import Tensor, grad_check

THRESHOLD = 1e-4


@dataclass
class CheckReport:
    component: str
    max_rel_err: float
    dims: str
    seed: int

    @property
    def passed(self):
        return self.max_rel_err < THRESHOLD


def _mix(rng, shape):
    return Tensor(rng.standard_normal(shape))


def run_grad_checks(seed=0):
    """Check every layer type; returns one CheckReport per component."""
    reports = []

    def check(component, dims, fn, x):
        rng_err = grad_check(fn, x)
        reports.append(CheckReport(component=component, max_rel_err=rng_err,
                                   dims=dims, seed=seed))

    rng = np.random.default_rng(seed)

    # encoders: independent question and shared passage paths
    params = ParamSet()
    enc = EncoderPair(params, 3, 2, rng)
    mix_q = _mix(rng, (3, 4))
    check("encoder_independent", "m=3,in=3,d=2",
          lambda t: T.tsum(T.mul(enc.encode_independent_question(t), mix_q)),
          Tensor(rng.standard_normal((3, 3))))
    mix_p = _mix(rng, (4, 4))
    q_fixed = Tensor(rng.standard_normal((2, 3)))
    check("encoder_shared", "n=4,m=2,in=3,d=2",
          lambda t: T.tsum(T.mul(enc.encode_shared(t, q_fixed)[0], mix_p)),
          Tensor(rng.standard_normal((4, 3))))

    # question-passage attention stack (two layers)
    u = Tensor(rng.standard_normal((3, 4)))
    v = Tensor(rng.standard_normal((3, 4)))
    mix_qp = _mix(rng, (4, 4))

    def qp_loss(t):
        outputs, _ = qp_stack(t, u, v, 2)
        return T.tsum(T.mul(T.add(outputs[0], outputs[1]), mix_qp))

    check("qp_attention_stack", "n=4,m=3,d=2,layers=2", qp_loss,
          Tensor(rng.standard_normal((4, 4))))

    # self-attention
    mix_self = _mix(rng, (4, 4))
    check("self_attention", "n=4,w=4",
          lambda t: T.tsum(T.mul(self_propagate(self_align(t), t), mix_self)),
          Tensor(rng.standard_normal((4, 4))))

    # fusion layers
    params_fo = ParamSet()
    fo = OuterFusionStack(params_fo, "fo", 6, 2, rng)
    mix_fo = _mix(rng, (3, 6))
    check("outer_fusion", "n=3,w=6,K=2",
          lambda t: T.tsum(T.mul(fo(t), mix_fo)),
          Tensor(rng.standard_normal((3, 6))))

    params_fi = ParamSet()
    fi = InnerFusionLayer(params_fi, "fi", 4, rng)
    prev = Tensor(rng.standard_normal((3, 4)))
    mix_fi = _mix(rng, (3, 4))
    check("inner_fusion", "n=3,w=4",
          lambda t: T.tsum(T.mul(fi(t, prev), mix_fi)),
          Tensor(rng.standard_normal((3, 4))))

    # pointer head through the span loss
    params_ptr = ParamSet()
    head = PointerHead(params_ptr, 4, 4, 2, rng)
    v_q = Tensor(rng.standard_normal((3, 4)))

    def pointer_loss(t):
        hops, _ = head.predict_span(t, head.initial_query(v_q))
        return span_loss(hops, 1, 3)

    check("pointer_head", "n=5,w=4,hops=2", pointer_loss,
          Tensor(rng.standard_normal((5, 4))))

    mix_sum = _mix(rng, (1, 4))
    check("question_summary", "m=3,w=4",
          lambda t: T.tsum(T.mul(question_summary(
              t, head.summary_proj, head.summary_score), mix_sum)),
          Tensor(rng.standard_normal((3, 4))))

    # span loss against raw (pre-softmax) boundary scores
    def loss_from_scores(t):
        p_s = T.softmax_rows(T.rows(t, 0, 1))
        p_e = T.softmax_rows(T.rows(t, 1, 2))
        return span_loss([(p_s, p_e)], 2, 4)

    check("span_loss", "n=5", loss_from_scores,
          Tensor(rng.standard_normal((2, 5))))

    # character CNN parameters
    params_cnn = ParamSet()
    cnn = CharCNN(params_cnn, "cnn", {"a": 2, "b": 3, "c": 4},
                  FeatureConfig(char_dim=3, char_filters=4, char_width=5), rng)
    mix_cnn = _mix(rng, (2, 4))
    check("char_cnn", "words=2,dc=3,F=4",
          lambda _p: T.tsum(T.mul(cnn(["abca", "cb"]), mix_cnn)),
          params_cnn["cnn.filters"])

    return reports

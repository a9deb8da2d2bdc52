"""Phase conductor: parse a path expression and assemble the full model.

A path is a chain of steps:

    LQ  question-passage attention layer
    LS  self-attention layer
    Fi  inner fusion (gates the preceding attention layer's output)
    Fo  outer fusion (concatenates the preceding same-kind attention
        block's outputs and runs highway layers over them)

with groups repeatable as "(...)xN". The default two-phase path is
"LQ->LQ->Fo->LS->Fi->LS->Fi"; the alternating baseline is
"(LQ->Fi->LS->Fi)x2". Width consistency is checked once at build time,
so a malformed chain fails before any data is seen.
"""

import re
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .attention import qp_align, qp_represent, self_align, self_propagate
from .config import config_hash
from .encoders import EncoderPair
from .errors import BuildError, PathSyntaxError, PathValidationError
from .features import (
    FeatureConfig,
    FeatureExtractor,
    TokenAux,
    build_char_vocab,
    build_vocab_embedding,
    exact_match_features,
    load_pretrained_vectors,
)
from .fusion import InnerFusionLayer, OuterFusionStack
from .params import ParamSet, xavier_uniform
from .pointer import PointerHead, span_loss

STEP_NAMES = ("LQ", "LS", "Fi", "Fo")
ATTENTION_STEPS = ("LQ", "LS")


@dataclass(frozen=True)
class PhasePath:
    steps: tuple

    def render(self):
        return "->".join(self.steps)

    def __len__(self):
        return len(self.steps)


_TOKEN_RE = re.compile(r"\s*(LQ|LS|Fi|Fo|\(|\)|x\d+|->)")


def _lex(expr):
    tokens, pos = [], 0
    while pos < len(expr):
        m = _TOKEN_RE.match(expr, pos)
        if m is None:
            if expr[pos:].strip() == "":
                break
            raise PathSyntaxError(f"unexpected input {expr[pos:pos + 8]!r}", position=pos)
        tokens.append((m.group(1), m.start(1)))
        pos = m.end()
    return tokens


def parse_path(expr):
    """Parse and validate a path expression into a flat PhasePath."""
    tokens = _lex(expr)
    if not tokens:
        raise PathSyntaxError("empty path expression", position=0)
    index = 0

    def peek():
        return tokens[index][0] if index < len(tokens) else None

    def take(expected=None):
        nonlocal index
        if index >= len(tokens):
            raise PathSyntaxError(f"unexpected end of expression, wanted {expected}",
                                  position=len(expr))
        tok, pos = tokens[index]
        if expected is not None and tok != expected:
            raise PathSyntaxError(f"expected {expected}, found {tok!r}", position=pos)
        index += 1
        return tok, pos

    def parse_item():
        tok = peek()
        if tok == "(":
            take("(")
            inner = parse_seq()
            take(")")
            rep, pos = take()
            if not rep.startswith("x"):
                raise PathSyntaxError(f"expected a repetition like x2, found {rep!r}",
                                      position=pos)
            count = int(rep[1:])
            if count < 1:
                raise PathSyntaxError("repetition count must be >= 1", position=pos)
            return inner * count
        tok, pos = take()
        if tok not in STEP_NAMES:
            raise PathSyntaxError(f"expected a step, found {tok!r}", position=pos)
        return [tok]

    def parse_seq():
        steps = parse_item()
        while peek() == "->":
            take("->")
            steps.extend(parse_item())
        return steps

    steps = parse_seq()
    if index != len(tokens):
        raise PathSyntaxError(f"trailing input at {tokens[index][0]!r}",
                              position=tokens[index][1])
    validate_steps(steps)
    return PhasePath(steps=tuple(steps))


def _fo_block(steps, i):
    """Indices of the same-kind attention block an Fo at position i fuses."""
    block, kind = [], None
    j = i - 1
    while j >= 0:
        step = steps[j]
        if step == "Fi":
            j -= 1
            continue
        if step in ATTENTION_STEPS and (kind is None or step == kind):
            kind = step
            block.append(j)
            j -= 1
            continue
        break
    block.reverse()
    return block


def validate_steps(steps):
    first_attention = next((s for s in steps if s in ATTENTION_STEPS), None)
    if first_attention is None:
        raise PathValidationError("path contains no attention steps")
    if first_attention != "LQ":
        raise PathValidationError(
            "first attention step must be LQ (question-passage): "
            "self-attention has no input before it")
    for i, step in enumerate(steps):
        if step == "Fi":
            if i == 0 or steps[i - 1] not in ATTENTION_STEPS:
                raise PathValidationError(
                    f"step {i + 1}: Fi must immediately follow an attention step")
        elif step == "Fo":
            if not _fo_block(steps, i):
                raise PathValidationError(
                    f"step {i + 1}: Fo must follow a contiguous block of "
                    "same-kind attention steps")


@dataclass
class PlanStep:
    kind: str
    layer_index: int = 0           # 1-based within LQ/LS
    projection: object = None      # LQ query down-projection when width != 2d
    fusion: object = None          # InnerFusionLayer or OuterFusionStack
    block: tuple = ()              # plan indices an Fo concatenates
    in_width: int = 0
    out_width: int = 0


@dataclass
class ForwardResult:
    start_dist: object
    end_dist: object
    hops: list
    span: object
    trace: list
    final_repr: object


class ModelAssembly:
    """Instantiated encoders, path steps, and pointer head."""

    def __init__(self, path, config, word_spec, char_vocab,
                 pos_vocab=None, ner_vocab=None):
        config.validate()
        self.path = path
        self.config = config
        self.config_hash = config_hash(config)
        self.word_spec = word_spec
        self.char_vocab = char_vocab
        self.pos_vocab = pos_vocab or {}
        self.ner_vocab = ner_vocab or {}
        self.params = ParamSet()

        rng = np.random.default_rng(config.seed)
        feat_cfg = FeatureConfig(
            word_dim=word_spec.dim, char_dim=config.char_dim,
            char_filters=config.char_filters, char_width=config.char_width,
            feat_dim=config.feat_dim, use_pos=config.use_pos,
            use_ner=config.use_ner, use_qtype=config.use_qtype,
            dropout=config.dropout)
        self.extractor = FeatureExtractor(
            self.params, word_spec, char_vocab, feat_cfg, rng,
            pos_vocab=self.pos_vocab, ner_vocab=self.ner_vocab)
        self.encoders = EncoderPair(self.params, feat_cfg.width(), config.hidden, rng)

        d2 = 2 * config.hidden
        width = d2
        self.plan = []
        qp_count = self_count = 0
        for i, step in enumerate(path.steps):
            if step == "LQ":
                qp_count += 1
                projection = None
                if width != d2:
                    projection = self.params.add(
                        f"path.s{i + 1}.lq_proj", xavier_uniform(rng, (width, d2)))
                self.plan.append(PlanStep("LQ", layer_index=qp_count,
                                          projection=projection,
                                          in_width=width, out_width=d2))
                width = d2
            elif step == "LS":
                self_count += 1
                self.plan.append(PlanStep("LS", layer_index=self_count,
                                          in_width=width, out_width=width))
            elif step == "Fi":
                prev = self.plan[i - 1]
                if prev.in_width != prev.out_width:
                    raise BuildError(
                        f"step {i + 1}: inner fusion needs matching widths, but the "
                        f"preceding {prev.kind} maps {prev.in_width} -> {prev.out_width}")
                fusion = InnerFusionLayer(self.params, f"path.s{i + 1}.fi",
                                          prev.out_width, rng)
                self.plan.append(PlanStep("Fi", fusion=fusion,
                                          in_width=width, out_width=width))
            else:  # Fo
                block = _fo_block(path.steps, i)
                cat_width = sum(self.plan[j].out_width for j in block)
                fusion = OuterFusionStack(self.params, f"path.s{i + 1}.fo",
                                          cat_width, config.fusion_layers, rng)
                self.plan.append(PlanStep("Fo", fusion=fusion, block=tuple(block),
                                          in_width=width, out_width=cat_width))
                width = cat_width

        self.final_width = width
        self.pointer = PointerHead(self.params, width, d2, config.pointer_hops,
                                   rng, max_span=config.max_span)

    def parameter_count(self):
        return self.params.count()


def build_model(path, config, word_spec, char_vocab, pos_vocab=None, ner_vocab=None):
    if isinstance(path, str):
        path = parse_path(path)
    return ModelAssembly(path, config, word_spec, char_vocab,
                         pos_vocab=pos_vocab, ner_vocab=ner_vocab)


def build_from_examples(config, examples):
    """Assemble a model with vocabularies drawn from a training set."""
    tokens = []
    for ex in examples:
        tokens.extend(ex.passage_tokens)
        tokens.extend(ex.question_tokens)
    rng = np.random.default_rng(config.seed)
    if config.vectors:
        word_spec, _coverage = load_pretrained_vectors(
            config.vectors, config.word_dim, rng,
            corpus_tokens=tokens, trainable=not config.freeze_pretrained)
    else:
        word_spec = build_vocab_embedding(tokens, config.word_dim, rng)
    char_vocab = build_char_vocab(tokens)
    pos_vocab = ner_vocab = None
    if config.use_pos:
        pos_vocab = _tag_vocab(examples, "passage_pos", "question_pos")
    if config.use_ner:
        ner_vocab = _tag_vocab(examples, "passage_ner", "question_ner")
    return build_model(config.path, config, word_spec, char_vocab,
                       pos_vocab=pos_vocab, ner_vocab=ner_vocab)


def _tag_vocab(examples, *attrs):
    vocab = {}
    for ex in examples:
        for attr in attrs:
            for tag in getattr(ex, attr) or []:
                if tag not in vocab:
                    vocab[tag] = len(vocab) + 1  # 0 reserved for unknown tags
    return vocab


def forward(model, example, mode="eval", rng=None):
    """Run encoders, the phase path, and the pointer head on one example."""
    train = mode == "train"
    if train and rng is None:
        raise BuildError("training mode forward needs an rng for dropout")
    cfg = model.config
    p_bits, q_bits = exact_match_features(example.passage_tokens, example.question_tokens)
    p_feats = model.extractor.embed_sequence(
        example.passage_tokens, "passage",
        TokenAux(em_bits=p_bits, pos=example.passage_pos, ner=example.passage_ner),
        train=train, rng=rng)
    q_feats = model.extractor.embed_sequence(
        example.question_tokens, "question",
        TokenAux(em_bits=q_bits, pos=example.question_pos, ner=example.question_ner),
        train=train, rng=rng)

    v = model.encoders.encode_independent_question(q_feats)
    h, u = model.encoders.encode_shared(p_feats, q_feats)
    if train and cfg.dropout > 0:
        v = T.dropout(v, cfg.dropout, rng)
        h = T.dropout(h, cfg.dropout, rng)
        u = T.dropout(u, cfg.dropout, rng)

    trace = []
    effective = [None] * len(model.plan)  # per-step output, rewritten by Fi
    inputs = [None] * len(model.plan)     # h as seen by each step
    for i, step in enumerate(model.plan):
        inputs[i] = h
        if step.kind == "LQ":
            query = h if step.projection is None else T.matmul(h, step.projection)
            align = qp_align(query, u, layer_index=step.layer_index)
            out = qp_represent(align, v)
            trace.append(align)
        elif step.kind == "LS":
            align = self_align(h, mask_diagonal=cfg.mask_diagonal,
                               layer_index=step.layer_index)
            out = self_propagate(align, h)
            trace.append(align)
        elif step.kind == "Fi":
            out = step.fusion(b_new=effective[i - 1], b_prev=inputs[i - 1])
            effective[i - 1] = out
        else:  # Fo
            cat = T.concat([effective[j] for j in step.block], axis=1)
            out = step.fusion(cat)
        effective[i] = out
        h = out

    if train and cfg.dropout > 0:
        h = T.dropout(h, cfg.dropout, rng)
    query = model.pointer.initial_query(v)
    hops, span = model.pointer.predict_span(h, query)
    start, end = hops[-1]
    return ForwardResult(start_dist=start, end_dist=end, hops=hops, span=span,
                         trace=trace, final_repr=h)


def example_loss(model, example, mode="train", rng=None):
    """Span loss of the first gold span; forward + loss in one call."""
    result = forward(model, example, mode=mode, rng=rng)
    gold_start, gold_end = example.gold_spans[0]
    return span_loss(result.hops, gold_start, gold_end), result

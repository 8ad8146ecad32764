"""Stacked-LSTM encoder-decoder with additive attention.

The encoder embeds source tokens and runs them through L stacked LSTM
layers; each layer's final (h, c) seeds the matching decoder layer.  At
every decoder step an additive attention score v'tanh(W_enc h_t + W_dec s)
is taken against all encoder states, softmax-normalized into weights, and
the weighted context is concatenated with the decoder state before the
output projection.  Training is teacher-forced with Adam and global
gradient-norm clipping; generation is greedy argmax until the end tag.

All math runs on the tape engine in ``autodiff``; everything is float64 and
bit-for-bit reproducible for a fixed seed.
"""

from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .autodiff import Tape, Tensor, backward
from .corpus import Corpus
from .rng import SplitMix64, shuffled
from .vocab import END, PAD, START, Vocabulary, pad_batch

logger = logging.getLogger(__name__)

# Additive score applied to masked attention positions; large enough that the
# exponential underflows to exactly zero next to any real score.
MASK_SCORE = -1e30

INIT_SCALE = 0.08

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class ModelError(ValueError):
    """Invalid model configuration or inputs."""


class CheckpointError(ValueError):
    """Unreadable, corrupted or version-incompatible checkpoint."""


@dataclass
class LstmLayerParams:
    """One LSTM layer; gate order in the stacked weights is (i, f, g, o)."""

    w_x: Tensor  # (4H, D)
    w_h: Tensor  # (4H, H)
    b: Tensor    # (4H,)


@dataclass
class AttentionParams:
    w_enc: Tensor  # (A, H)
    w_dec: Tensor  # (A, H)
    v: Tensor      # (A,)


@dataclass
class ModelParams:
    enc_embedding: Tensor  # (V_src, E)
    dec_embedding: Tensor  # (V_tgt, E)
    enc_layers: list[LstmLayerParams]
    dec_layers: list[LstmLayerParams]
    attention: AttentionParams
    w_out: Tensor  # (V_tgt, 2H)
    b_out: Tensor  # (V_tgt,)


@dataclass(frozen=True)
class Hyperparams:
    embed_dim: int = 128
    hidden_dim: int = 256
    attn_dim: int = 128
    num_layers: int = 2
    learning_rate: float = 1e-3
    epochs: int = 10
    batch_size: int = 32
    max_len: int = 40
    seed: int = 0
    grad_clip_norm: float = 5.0
    attention: bool = True

    def __post_init__(self):
        for name in ("embed_dim", "hidden_dim", "attn_dim", "num_layers",
                     "batch_size"):
            if getattr(self, name) < 1:
                raise ModelError(f"{name} must be a positive integer")
        if self.max_len < 2:
            raise ModelError("max_len must be >= 2")
        if self.epochs < 0:
            raise ModelError("epochs must be >= 0")
        if self.learning_rate <= 0.0 or self.grad_clip_norm <= 0.0:
            raise ModelError("learning_rate and grad_clip_norm must be positive")
        if self.seed < 0:
            raise ModelError("seed must be non-negative")


@dataclass
class TrainingHistory:
    loss: list[float] = field(default_factory=list)
    accuracy: list[float] = field(default_factory=list)


def _param_shapes(src_vocab_size: int, tgt_vocab_size: int,
                  hyper: Hyperparams) -> dict[str, tuple[int, ...]]:
    """Named parameter shapes in their canonical (initialization) order."""
    e, h, a, layers = (hyper.embed_dim, hyper.hidden_dim, hyper.attn_dim,
                       hyper.num_layers)
    shapes: dict[str, tuple[int, ...]] = {
        "enc_embedding": (src_vocab_size, e),
        "dec_embedding": (tgt_vocab_size, e),
    }
    for side in ("enc", "dec"):
        for layer in range(layers):
            width = e if layer == 0 else h
            shapes[f"{side}.{layer}.w_x"] = (4 * h, width)
            shapes[f"{side}.{layer}.w_h"] = (4 * h, h)
            shapes[f"{side}.{layer}.b"] = (4 * h,)
    shapes["attn.w_enc"] = (a, h)
    shapes["attn.w_dec"] = (a, h)
    shapes["attn.v"] = (a,)
    shapes["w_out"] = (tgt_vocab_size, 2 * h)
    shapes["b_out"] = (tgt_vocab_size,)
    return shapes


def _assemble(tensors: dict[str, Tensor], num_layers: int) -> ModelParams:
    def layer_list(side: str) -> list[LstmLayerParams]:
        return [
            LstmLayerParams(
                w_x=tensors[f"{side}.{i}.w_x"],
                w_h=tensors[f"{side}.{i}.w_h"],
                b=tensors[f"{side}.{i}.b"],
            )
            for i in range(num_layers)
        ]

    return ModelParams(
        enc_embedding=tensors["enc_embedding"],
        dec_embedding=tensors["dec_embedding"],
        enc_layers=layer_list("enc"),
        dec_layers=layer_list("dec"),
        attention=AttentionParams(
            w_enc=tensors["attn.w_enc"],
            w_dec=tensors["attn.w_dec"],
            v=tensors["attn.v"],
        ),
        w_out=tensors["w_out"],
        b_out=tensors["b_out"],
    )


def named_parameters(params: ModelParams) -> list[tuple[str, Tensor]]:
    """All trainable tensors in canonical order."""
    out = [("enc_embedding", params.enc_embedding),
           ("dec_embedding", params.dec_embedding)]
    for side, layers in (("enc", params.enc_layers), ("dec", params.dec_layers)):
        for i, layer in enumerate(layers):
            out.append((f"{side}.{i}.w_x", layer.w_x))
            out.append((f"{side}.{i}.w_h", layer.w_h))
            out.append((f"{side}.{i}.b", layer.b))
    out.append(("attn.w_enc", params.attention.w_enc))
    out.append(("attn.w_dec", params.attention.w_dec))
    out.append(("attn.v", params.attention.v))
    out.append(("w_out", params.w_out))
    out.append(("b_out", params.b_out))
    return out


def init_params(src_vocab_size: int, tgt_vocab_size: int, hyper: Hyperparams,
                rng: SplitMix64 | None = None) -> ModelParams:
    """Initialize every weight uniform(-0.08, 0.08) from the seeded stream."""
    if rng is None:
        rng = SplitMix64(hyper.seed)
    tensors: dict[str, Tensor] = {}
    for name, shape in _param_shapes(src_vocab_size, tgt_vocab_size, hyper).items():
        size = int(np.prod(shape))
        flat = np.empty(size, dtype=np.float64)
        for i in range(size):
            flat[i] = (2.0 * rng.next_float() - 1.0) * INIT_SCALE
        tensors[name] = Tensor(flat.reshape(shape))
    return _assemble(tensors, hyper.num_layers)


def zero_params(src_vocab_size: int, tgt_vocab_size: int,
                hyper: Hyperparams) -> ModelParams:
    """All-zero parameters; handy for closed-form checks."""
    tensors = {
        name: Tensor(np.zeros(shape))
        for name, shape in _param_shapes(src_vocab_size, tgt_vocab_size,
                                         hyper).items()
    }
    return _assemble(tensors, hyper.num_layers)


def _as_row(tape: Tape, t: Tensor) -> Tensor:
    if t.data.ndim == 1:
        return tape.reshape(t, (1, t.data.shape[0]))
    return t


def lstm_step(tape: Tape, x: Tensor, state: tuple[Tensor, Tensor],
              layer: LstmLayerParams) -> tuple[Tensor, Tensor]:
    """One LSTM cell update.

    z = W_x x + W_h h + b is split into the four gate blocks (i, f, g, o);
    c' = sigmoid(f) * c + sigmoid(i) * tanh(g) and h' = sigmoid(o) * tanh(c').
    Accepts a single vector or a (batch, dim) matrix, returning the same rank.
    """
    h, c = state
    vector_in = x.data.ndim == 1
    xr, hr, cr = _as_row(tape, x), _as_row(tape, h), _as_row(tape, c)
    hidden = layer.w_h.data.shape[1]
    z = tape.add(
        tape.add(tape.matmul(xr, layer.w_x, trans_b=True),
                 tape.matmul(hr, layer.w_h, trans_b=True)),
        layer.b,
    )
    gate_i = tape.sigmoid(tape.slice_cols(z, 0, hidden))
    gate_f = tape.sigmoid(tape.slice_cols(z, hidden, 2 * hidden))
    gate_g = tape.tanh(tape.slice_cols(z, 2 * hidden, 3 * hidden))
    gate_o = tape.sigmoid(tape.slice_cols(z, 3 * hidden, 4 * hidden))
    c_new = tape.add(tape.mul(gate_f, cr), tape.mul(gate_i, gate_g))
    h_new = tape.mul(gate_o, tape.tanh(c_new))
    if vector_in:
        h_new = tape.reshape(h_new, (hidden,))
        c_new = tape.reshape(c_new, (hidden,))
    return h_new, c_new


def encode(tape: Tape, src: Sequence[int], params: ModelParams
           ) -> tuple[Tensor, list[tuple[Tensor, Tensor]]]:
    """Run the encoder stack over one source sequence.

    Returns the (T, H) matrix of top-layer states and each layer's final
    (h, c) as (1, H) rows.
    """
    if len(src) == 0:
        raise ModelError("cannot encode an empty source sequence")
    layers = params.enc_layers
    hidden = layers[0].w_h.data.shape[1]
    h = [Tensor(np.zeros((1, hidden))) for _ in layers]
    c = [Tensor(np.zeros((1, hidden))) for _ in layers]
    tops = []
    for token in src:
        x = tape.embedding(params.enc_embedding, [int(token)])
        for i, layer in enumerate(layers):
            h[i], c[i] = lstm_step(tape, x, (h[i], c[i]), layer)
            x = h[i]
        tops.append(h[-1])
    enc_states = tape.vstack(tops)
    return enc_states, list(zip(h, c))


def attend(tape: Tape, enc_states: Tensor, s: Tensor, attn: AttentionParams,
           src_mask: Sequence[bool]) -> tuple[Tensor, Tensor]:
    """Additive attention over encoder states for one decoder state.

    Masked positions receive a score of MASK_SCORE and therefore weight
    exactly zero.  Returns (weights of length T, context vector of length H).
    """
    t_steps = enc_states.data.shape[0]
    mask = [bool(m) for m in src_mask]
    if len(mask) != t_steps:
        raise ModelError("src_mask length must match encoder states")
    if not any(mask):
        raise ModelError("all source positions are masked")
    attn_dim = attn.v.data.shape[0]
    s_row = _as_row(tape, s)
    enc_proj = tape.matmul(enc_states, attn.w_enc, trans_b=True)   # (T, A)
    dec_proj = tape.matmul(s_row, attn.w_dec, trans_b=True)        # (1, A)
    u = tape.tanh(tape.add(enc_proj, tape.reshape(dec_proj, (attn_dim,))))
    scores = tape.matmul(u, tape.reshape(attn.v, (attn_dim, 1)))   # (T, 1)
    e_row = tape.reshape(scores, (1, t_steps))
    if not all(mask):
        bias = np.where(np.asarray(mask), 0.0, MASK_SCORE).reshape(1, t_steps)
        e_row = tape.add(e_row, Tensor(bias))
    alpha_row = tape.softmax(e_row)                                # (1, T)
    context_row = tape.matmul(alpha_row, enc_states)               # (1, H)
    hidden = enc_states.data.shape[1]
    return (tape.reshape(alpha_row, (t_steps,)),
            tape.reshape(context_row, (hidden,)))


def decode_step(tape: Tape, prev_token: int, state: list[tuple[Tensor, Tensor]],
                enc_states: Tensor, src_mask: Sequence[bool],
                params: ModelParams, use_attention: bool = True
                ) -> tuple[Tensor, list[tuple[Tensor, Tensor]], Tensor | None]:
    """One greedy/teacher step of the decoder stack.

    Returns the next-token probability distribution (length V), the new layer
    states, and the attention weights (None when attention is disabled).
    """
    hidden = params.dec_layers[0].w_h.data.shape[1]
    x = tape.embedding(params.dec_embedding, [int(prev_token)])
    new_state: list[tuple[Tensor, Tensor]] = []
    for layer, (h, c) in zip(params.dec_layers, state):
        h2, c2 = lstm_step(tape, x, (h, c), layer)
        new_state.append((h2, c2))
        x = h2
    s = new_state[-1][0]
    alpha: Tensor | None = None
    if use_attention:
        alpha, context = attend(tape, enc_states, s, params.attention, src_mask)
        context_row = tape.reshape(context, (1, hidden))
    else:
        context_row = Tensor(np.zeros((1, hidden)))
    feats = tape.concat([s, context_row])
    logits = tape.add(tape.matmul(feats, params.w_out, trans_b=True),
                      params.b_out)
    dist = tape.reshape(tape.softmax(logits), (params.w_out.data.shape[0],))
    return dist, new_state, alpha


def greedy_decode(src: Sequence[int], params: ModelParams, max_len: int,
                  use_attention: bool = True) -> list[int]:
    """Generate by repeated argmax until END or ``max_len`` emitted tokens.

    Ties break toward the lowest index.  START and the terminating END are
    excluded from the result; anything else the model emits is kept.
    """
    if len(src) == 0:
        raise ModelError("cannot decode from an empty source sequence")
    tape = Tape()
    enc_states, state = encode(tape, src, params)
    mask = [True] * len(src)
    prev = START
    out: list[int] = []
    for _ in range(max_len):
        dist, state, _ = decode_step(tape, prev, state, enc_states, mask,
                                     params, use_attention)
        token = int(np.argmax(dist.data))
        if token == END:
            break
        out.append(token)
        prev = token
    return out


def _batch_forward(params: ModelParams, src_mat: np.ndarray,
                   tgt_mat: np.ndarray, use_attention: bool
                   ) -> tuple[Tensor, np.ndarray, np.ndarray, np.ndarray]:
    """Teacher-forced forward pass over a padded batch.

    Returns the scalar loss tensor plus the stacked step distributions, the
    flattened prediction targets and the non-PAD mask (all step-major), which
    the training loop uses for token accuracy.
    """
    tape = Tape()
    batch, src_len = src_mat.shape
    tgt_len = tgt_mat.shape[1]
    layers = params.enc_layers
    hidden = layers[0].w_h.data.shape[1]
    attn = params.attention
    attn_dim = attn.v.data.shape[0]

    src_real = src_mat != PAD
    lengths = src_real.sum(axis=1)

    h = [Tensor(np.zeros((batch, hidden))) for _ in layers]
    c = [Tensor(np.zeros((batch, hidden))) for _ in layers]
    step_h: list[list[Tensor]] = [[] for _ in layers]
    step_c: list[list[Tensor]] = [[] for _ in layers]
    tops: list[Tensor] = []
    for t in range(src_len):
        x = tape.embedding(params.enc_embedding, src_mat[:, t])
        for i, layer in enumerate(layers):
            h[i], c[i] = lstm_step(tape, x, (h[i], c[i]), layer)
            step_h[i].append(h[i])
            step_c[i].append(c[i])
            x = h[i]
        tops.append(h[-1])

    # Right padding never precedes real tokens, so the state at each sample's
    # last real position is its true final state; select it by indicator.
    state: list[tuple[Tensor, Tensor]] = []
    last_steps = sorted(set(int(n) - 1 for n in lengths))
    for i in range(len(layers)):
        h_fin = c_fin = None
        for t in last_steps:
            ind = Tensor((lengths - 1 == t).astype(np.float64).reshape(batch, 1))
            h_term = tape.scale_rows(step_h[i][t], ind)
            c_term = tape.scale_rows(step_c[i][t], ind)
            h_fin = h_term if h_fin is None else tape.add(h_fin, h_term)
            c_fin = c_term if c_fin is None else tape.add(c_fin, c_term)
        state.append((h_fin, c_fin))

    if use_attention:
        enc_projs = [tape.matmul(top, attn.w_enc, trans_b=True) for top in tops]
        v_col = tape.reshape(attn.v, (attn_dim, 1))
        score_bias = Tensor(np.where(src_real, 0.0, MASK_SCORE))

    dists: list[Tensor] = []
    for t in range(tgt_len - 1):
        x = tape.embedding(params.dec_embedding, tgt_mat[:, t])
        for i, layer in enumerate(params.dec_layers):
            h2, c2 = lstm_step(tape, x, state[i], layer)
            state[i] = (h2, c2)
            x = h2
        s = state[-1][0]
        if use_attention:
            dec_proj = tape.matmul(s, attn.w_dec, trans_b=True)
            parts = [
                tape.matmul(tape.tanh(tape.add(proj, dec_proj)), v_col)
                for proj in enc_projs
            ]
            scores = tape.add(tape.concat(parts), score_bias)
            alpha = tape.softmax(scores)                      # (B, T_src)
            context = None
            for t2 in range(src_len):
                weight = tape.slice_cols(alpha, t2, t2 + 1)
                term = tape.scale_rows(tops[t2], weight)
                context = term if context is None else tape.add(context, term)
        else:
            context = Tensor(np.zeros((batch, hidden)))
        feats = tape.concat([s, context])
        logits = tape.add(tape.matmul(feats, params.w_out, trans_b=True),
                          params.b_out)
        dists.append(tape.softmax(logits))

    probs = tape.vstack(dists)
    flat_targets = tgt_mat[:, 1:].T.reshape(-1)
    flat_mask = (flat_targets != PAD).astype(np.float64)
    if flat_mask.sum() == 0:
        raise ModelError("all prediction positions are padding")
    loss = tape.masked_cross_entropy(probs, flat_targets, flat_mask)
    return loss, probs.data, flat_targets, flat_mask


def forward_loss(batch: Sequence[tuple[Sequence[int], Sequence[int]]],
                 params: ModelParams, use_attention: bool = True) -> Tensor:
    """Teacher-forced mean cross-entropy over all non-PAD positions.

    The decoder consumes tgt[t] and is scored against tgt[t+1]; its initial
    state is the encoder's final state, layer by layer.  Targets must carry
    START/END.  Sequences are right-padded to the batch maximum.
    """
    if not batch:
        raise ModelError("empty batch")
    srcs = [list(src) for src, _ in batch]
    tgts = [list(tgt) for _, tgt in batch]
    if any(len(s) == 0 for s in srcs):
        raise ModelError("cannot encode an empty source sequence")
    if any(len(t) < 2 for t in tgts):
        raise ModelError("target sequences must carry START and END")
    src_mat = pad_batch(srcs, max(2, max(len(s) for s in srcs)))
    tgt_mat = pad_batch(tgts, max(2, max(len(t) for t in tgts)))
    loss, _, _, _ = _batch_forward(params, src_mat, tgt_mat, use_attention)
    return loss


class _Adam:
    """Adam with global gradient-norm clipping over the full parameter set."""

    def __init__(self, named: list[tuple[str, Tensor]], learning_rate: float,
                 clip_norm: float):
        self.named = named
        self.learning_rate = learning_rate
        self.clip_norm = clip_norm
        self.m = {name: np.zeros_like(t.data) for name, t in named}
        self.v = {name: np.zeros_like(t.data) for name, t in named}
        self.t = 0

    def step(self) -> None:
        grads = {}
        total = 0.0
        for name, p in self.named:
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            grads[name] = g
            total += float((g * g).sum())
        norm = total**0.5
        if norm > self.clip_norm:
            scale = self.clip_norm / norm
            grads = {name: g * scale for name, g in grads.items()}
        self.t += 1
        bc1 = 1.0 - ADAM_BETA1**self.t
        bc2 = 1.0 - ADAM_BETA2**self.t
        for name, p in self.named:
            g = grads[name]
            m = self.m[name]
            v = self.v[name]
            m *= ADAM_BETA1
            m += (1.0 - ADAM_BETA1) * g
            v *= ADAM_BETA2
            v += (1.0 - ADAM_BETA2) * g * g
            p.data -= self.learning_rate * (m / bc1) / (np.sqrt(v / bc2)
                                                        + ADAM_EPS)
            p.grad = None


def _encode_pairs(corpus: Corpus, vocab_src: Vocabulary, vocab_tgt: Vocabulary
                  ) -> list[tuple[list[int], list[int]]]:
    return [
        (vocab_src.encode(s.source, add_bounds=True),
         vocab_tgt.encode(s.target, add_bounds=True))
        for s in corpus
    ]


def _capped(seqs: list[list[int]], cap: int) -> np.ndarray:
    width = min(max(len(s) for s in seqs), cap)
    return pad_batch(seqs, max(2, width))


def _corpus_loss(params: ModelParams, pairs: list[tuple[list[int], list[int]]],
                 hyper: Hyperparams) -> float:
    """Token-weighted mean loss over a corpus, evaluated batch by batch."""
    total_loss = 0.0
    total_tokens = 0.0
    for start in range(0, len(pairs), hyper.batch_size):
        chunk = pairs[start : start + hyper.batch_size]
        src_mat = _capped([p[0] for p in chunk], hyper.max_len)
        tgt_mat = _capped([p[1] for p in chunk], hyper.max_len)
        loss, _, _, mask = _batch_forward(params, src_mat, tgt_mat,
                                          hyper.attention)
        tokens = float(mask.sum())
        total_loss += float(loss.data) * tokens
        total_tokens += tokens
    return total_loss / total_tokens


def train(train_corpus: Corpus, val_corpus: Corpus, vocab_src: Vocabulary,
          vocab_tgt: Vocabulary, hyper: Hyperparams
          ) -> tuple[ModelParams, TrainingHistory]:
    """Train from a fresh seeded initialization; deterministic per seed.

    Each epoch reshuffles the training order (SplitMix64 stream shared with
    the initialization), walks mini-batches of ``batch_size``, and applies an
    Adam update after clipping the global gradient norm.  History records the
    mean batch loss and teacher-forced token accuracy accumulated over each
    epoch's forward passes.
    """
    if len(train_corpus) == 0:
        raise ModelError("training corpus is empty")
    if len(val_corpus) == 0:
        raise ModelError("validation corpus is empty")
    rng = SplitMix64(hyper.seed)
    params = init_params(vocab_src.size, vocab_tgt.size, hyper, rng)
    pairs = _encode_pairs(train_corpus, vocab_src, vocab_tgt)
    val_pairs = _encode_pairs(val_corpus, vocab_src, vocab_tgt)
    optimizer = _Adam(named_parameters(params), hyper.learning_rate,
                      hyper.grad_clip_norm)
    history = TrainingHistory()
    indices = list(range(len(pairs)))
    for epoch in range(hyper.epochs):
        order = shuffled(indices, rng)
        losses = []
        correct = 0.0
        total = 0.0
        for start in range(0, len(order), hyper.batch_size):
            chunk = order[start : start + hyper.batch_size]
            srcs = [pairs[i][0] for i in chunk]
            tgts = [pairs[i][1] for i in chunk]
            src_mat = _capped(srcs, hyper.max_len)
            tgt_mat = _capped(tgts, hyper.max_len)
            loss, probs, targets, mask = _batch_forward(
                params, src_mat, tgt_mat, hyper.attention
            )
            backward(loss.tape, loss)
            optimizer.step()
            losses.append(float(loss.data))
            predicted = probs.argmax(axis=1)
            correct += float(((predicted == targets) & (mask > 0)).sum())
            total += float(mask.sum())
        history.loss.append(sum(losses) / len(losses))
        history.accuracy.append(correct / total)
        logger.debug(
            "epoch %d: loss=%.6f accuracy=%.4f",
            epoch, history.loss[-1], history.accuracy[-1],
        )
    if hyper.epochs > 0:
        val_loss = _corpus_loss(params, val_pairs, hyper)
        logger.info("validation loss after training: %.6f", val_loss)
    return params, history


def summarize_text(text: str, params: ModelParams, vocab_src: Vocabulary,
                   vocab_tgt: Vocabulary, hyper: Hyperparams) -> str:
    """Encode raw text, greedy-decode, and render the summary string."""
    src = vocab_src.encode(text, add_bounds=True)
    tokens = greedy_decode(src, params, hyper.max_len, hyper.attention)
    return vocab_tgt.decode(tokens)


CHECKPOINT_VERSION = 1


def _format_float(x: float) -> str:
    # 17 significant digits round-trips any IEEE double exactly.
    return format(x, ".17g")


def _dump_json(obj) -> str:
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, float):
        return _format_float(obj)
    if isinstance(obj, int):
        return repr(obj)
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(_dump_json(v) for v in obj) + "]"
    if isinstance(obj, dict):
        return "{" + ",".join(
            f"{json.dumps(k, ensure_ascii=False)}:{_dump_json(v)}"
            for k, v in obj.items()
        ) + "}"
    if obj is None:
        return "null"
    raise TypeError(f"cannot serialize {type(obj)!r}")


def save_checkpoint(params: ModelParams,
                    vocabs: tuple[Vocabulary, Vocabulary],
                    hyper: Hyperparams, path: str | Path) -> None:
    """Write a version-1 JSON checkpoint; floats keep full f64 precision."""
    vocab_src, vocab_tgt = vocabs
    doc = {
        "version": CHECKPOINT_VERSION,
        "hyper": dataclasses.asdict(hyper),
        "vocab_src": vocab_src.to_dict(),
        "vocab_tgt": vocab_tgt.to_dict(),
        "params": {
            name: {
                "shape": list(t.data.shape),
                "values": [float(x) for x in t.data.reshape(-1)],
            }
            for name, t in named_parameters(params)
        },
    }
    Path(path).write_text(_dump_json(doc), encoding="utf-8")


def load_checkpoint(path: str | Path
                    ) -> tuple[ModelParams, tuple[Vocabulary, Vocabulary],
                               Hyperparams]:
    """Read a checkpoint, validating version, structure and shapes."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"corrupted checkpoint {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise CheckpointError("checkpoint must be a JSON object")
    version = doc.get("version")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint version: {version!r} "
            f"(expected {CHECKPOINT_VERSION})"
        )
    try:
        hyper = Hyperparams(**doc["hyper"])
        vocab_src = Vocabulary.from_dict(doc["vocab_src"])
        vocab_tgt = Vocabulary.from_dict(doc["vocab_tgt"])
        stored = doc["params"]
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"invalid checkpoint contents: {exc}") from exc
    shapes = _param_shapes(vocab_src.size, vocab_tgt.size, hyper)
    tensors: dict[str, Tensor] = {}
    for name, shape in shapes.items():
        entry = stored.get(name)
        if entry is None:
            raise CheckpointError(f"checkpoint missing parameter {name!r}")
        if tuple(entry.get("shape", ())) != shape:
            raise CheckpointError(
                f"parameter {name!r} has shape {entry.get('shape')}, "
                f"expected {list(shape)}"
            )
        values = np.asarray(entry.get("values", []), dtype=np.float64)
        if values.size != int(np.prod(shape)):
            raise CheckpointError(f"parameter {name!r} has wrong element count")
        tensors[name] = Tensor(values.reshape(shape))
    return _assemble(tensors, hyper.num_layers), (vocab_src, vocab_tgt), hyper

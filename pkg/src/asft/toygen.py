"""Toy token-sequence VAE with deterministic validity and property oracles.

Stands in for a molecular VAE: a 10-token grammar over fixed-length
sequences, three fixed property oracles, and a small encoder/decoder MLP
pair whose decoder forms the stochastic parameter block.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nnet
from .errors import NumericError, TrainingError
from .numkit import SeededRng

# Token ids: six atoms, brackets, bond, pad.
ATOM_IDS = (0, 1, 2, 3, 4, 5)
OPEN_ID = 6
CLOSE_ID = 7
EQ_ID = 8
PAD_ID = 9
VOCAB = 10

TOKEN_TEXT = ("a1", "a2", "a3", "a4", "a5", "a6", "[", "]", "=", "_")
_TEXT_TO_ID = {t: i for i, t in enumerate(TOKEN_TEXT)}

# toy-logp per-token weights (PAD contributes nothing).
LOGP_WEIGHTS = {0: 1.0, 1: 0.5, 2: 0.0, 3: -0.5, 4: -1.0, 5: 0.25, 6: -0.2, 7: -0.2, 8: 0.3}

PROPERTIES = ("toy-logp", "toy-sas", "toy-act")

# Shipped pipeline defaults: a 200-sequence corpus is small enough for the
# 8-dim VAE to near-memorize, which the decode round-trip quality bar needs.
DEFAULT_DATASET_SIZE = 200
DEFAULT_DATASET_SEED = 0


@dataclass(frozen=True)
class Grammar:
    """Fixed 10-token alphabet over length-L sequences (default L=16)."""

    length: int = 16

    @property
    def vocab(self) -> int:
        return VOCAB

    @property
    def input_dim(self) -> int:
        return self.length * VOCAB


@dataclass(frozen=True)
class ToySequence:
    tokens: tuple[int, ...]

    def __post_init__(self):
        if any(t < 0 or t >= VOCAB for t in self.tokens):
            raise ValueError("token id out of range")

    @property
    def canonical(self) -> str:
        """Textual rendering with the trailing PAD run stripped."""
        end = len(self.tokens)
        while end > 0 and self.tokens[end - 1] == PAD_ID:
            end -= 1
        return " ".join(TOKEN_TEXT[t] for t in self.tokens[:end])

    def __len__(self) -> int:
        return len(self.tokens)


def sequence_from_canonical(text: str, length: int = 16) -> ToySequence:
    """Inverse of ``ToySequence.canonical`` (pads back to ``length``)."""
    parts = text.split()
    if len(parts) > length:
        raise ValueError(f"canonical string longer than L={length}")
    ids = [_TEXT_TO_ID[p] for p in parts]
    ids.extend([PAD_ID] * (length - len(ids)))
    return ToySequence(tuple(ids))


def validate(seq: ToySequence) -> bool:
    """Grammar check: balanced brackets (depth <= 2), '=' between atoms,
    PAD only as a suffix, at least one atom."""
    toks = seq.tokens
    n = len(toks)
    body = n
    while body > 0 and toks[body - 1] == PAD_ID:
        body -= 1
    if any(t == PAD_ID for t in toks[:body]):
        return False
    depth = 0
    has_atom = False
    for i in range(body):
        t = toks[i]
        if t == OPEN_ID:
            depth += 1
            if depth > 2:
                return False
        elif t == CLOSE_ID:
            depth -= 1
            if depth < 0:
                return False
        elif t == EQ_ID:
            if i == 0 or i == body - 1:
                return False
            if toks[i - 1] not in ATOM_IDS or toks[i + 1] not in ATOM_IDS:
                return False
        else:
            has_atom = True
    return depth == 0 and has_atom


def property_value(seq: ToySequence, which: str) -> float:
    """Deterministic property oracle for a *valid* sequence."""
    if which not in PROPERTIES:
        raise ValueError(f"unknown property {which!r}")
    if not validate(seq):
        raise ValueError(f"property of an invalid sequence: {seq.canonical!r}")
    toks = seq.tokens
    body = [t for t in toks if t != PAD_ID]
    if which == "toy-logp":
        return float(sum(LOGP_WEIGHTS[t] for t in body))
    if which == "toy-sas":
        bigrams = {(body[i], body[i + 1]) for i in range(len(body) - 1)}
        depth = 0
        max_depth = 0
        for t in body:
            if t == OPEN_ID:
                depth += 1
                max_depth = max(max_depth, depth)
            elif t == CLOSE_ID:
                depth -= 1
        return 1.0 + 0.5 * len(bigrams) / len(toks) + max_depth
    # toy-act: logistic in (2 #a1 - 2 #a5 - 4)
    score = 2.0 * body.count(0) - 2.0 * body.count(4) - 4.0
    return float(1.0 / (1.0 + np.exp(-score)))


def sample_dataset(rng: SeededRng, n: int, grammar: Grammar = Grammar()) -> list[ToySequence]:
    """n valid sequences from a stochastic grammar walk.

    Per step: atom w.p. 0.7, bracket opening 0.15, '=' 0.15 (both fall back
    to an atom when they would break validity or the length budget).
    Target lengths are uniform on 4..L.
    """
    gen = rng.generator()
    L = grammar.length
    lo = min(4, L)
    out = []
    for _ in range(n):
        target = int(gen.integers(lo, L + 1))
        toks: list[int] = []
        depth = 0
        has_atom = False
        while len(toks) + depth < target:
            u = gen.random()
            if u < 0.7:
                kind = "atom"
            elif u < 0.85:
                kind = "bracket"
            else:
                kind = "eq"
            # opening a bracket must leave room to close it, plus one atom
            # if none has been placed yet (validity needs >= 1 atom)
            room = target - len(toks) - depth
            if kind == "bracket" and depth < 2 and room >= (2 if has_atom else 3):
                toks.append(OPEN_ID)
                depth += 1
            elif kind == "eq" and toks and toks[-1] in ATOM_IDS and room >= 2:
                toks.append(EQ_ID)
                toks.append(int(gen.integers(0, 6)))
                has_atom = True
            else:
                toks.append(int(gen.integers(0, 6)))
                has_atom = True
        toks.extend([CLOSE_ID] * depth)
        toks.extend([PAD_ID] * (L - len(toks)))
        out.append(ToySequence(tuple(toks)))
    return out


def save_dataset(path, seqs: list[ToySequence]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in seqs:
            fh.write(s.canonical + "\n")


def load_dataset(path, length: int = 16) -> list[ToySequence]:
    with open(path, encoding="utf-8") as fh:
        return [sequence_from_canonical(line.rstrip("\n"), length) for line in fh if line.strip()]


@dataclass
class ToyVae:
    """One-hot sequence VAE: L*V -> 64 tanh -> (mu, log sigma) in R^8;
    decoder 8 -> 64 tanh -> L*V logits.

    The decoder layers sit at the tail of the flat parameter vector and form
    the stochastic block; encoder parameters are the deterministic block.
    """

    grammar: Grammar
    partition: nnet.ParamPartition
    latent_dim: int
    hidden_dim: int

    @property
    def enc_layers(self) -> tuple[nnet.LayerSpec, ...]:
        return self.partition.layout[:3]

    @property
    def dec_layers(self) -> tuple[nnet.LayerSpec, ...]:
        return self.partition.layout[3:]

    @property
    def dec_offset(self) -> int:
        return self.dec_layers[0].w_offset


def build_vae(
    grammar: Grammar = Grammar(),
    latent_dim: int = 8,
    hidden_dim: int = 64,
    init_rng: SeededRng | None = None,
    init_scale: float = 1.0,
) -> ToyVae:
    """Construct a ToyVae; weights ~ N(0, scale^2/fan_in), biases zero."""
    d_in = grammar.input_dim
    layout, total = nnet.plan_layers(
        [
            ("enc_hidden", d_in, hidden_dim, "tanh"),
            ("enc_mu", hidden_dim, latent_dim, "linear"),
            ("enc_logsig", hidden_dim, latent_dim, "linear"),
            ("dec_hidden", latent_dim, hidden_dim, "tanh"),
            ("dec_out", hidden_dim, d_in, "linear"),
        ]
    )
    values = np.zeros(total)
    if init_rng is not None:
        gen = init_rng.generator()
        for spec in layout:
            w = gen.normal(0.0, init_scale / np.sqrt(spec.in_dim), size=(spec.in_dim, spec.out_dim))
            values[spec.w_offset : spec.b_offset] = w.ravel()
    dec_start = layout[3].w_offset
    partition = nnet.ParamPartition(values, np.arange(dec_start, total), layout)
    return ToyVae(grammar, partition, latent_dim, hidden_dim)


def one_hot(seqs: list[ToySequence] | ToySequence, grammar: Grammar) -> np.ndarray:
    """(batch, L*V) one-hot encoding (or a single flat vector)."""
    if isinstance(seqs, ToySequence):
        x = np.zeros((grammar.length, VOCAB))
        x[np.arange(grammar.length), list(seqs.tokens)] = 1.0
        return x.ravel()
    x = np.zeros((len(seqs), grammar.length, VOCAB))
    for i, s in enumerate(seqs):
        x[i, np.arange(grammar.length), list(s.tokens)] = 1.0
    return x.reshape(len(seqs), -1)


def encode(model: ToyVae, seq: ToySequence) -> tuple[np.ndarray, np.ndarray]:
    """Posterior parameters (mu_z, sigma_z) for one sequence."""
    mu, log_sig = _encode_batch(model, model.partition.values, one_hot(seq, model.grammar))
    return mu, np.exp(log_sig)


def _encode_batch(model: ToyVae, values: np.ndarray, x: np.ndarray):
    enc_hidden, enc_mu, enc_logsig = model.enc_layers
    h = nnet.layer_forward(values, enc_hidden, x)
    return nnet.layer_forward(values, enc_mu, h), nnet.layer_forward(values, enc_logsig, h)


def decode(model: ToyVae, z: np.ndarray, values: np.ndarray | None = None) -> ToySequence:
    """Greedy argmax decode (ties break to the lowest token id)."""
    return decode_batch(model, np.asarray(z, dtype=np.float64)[None, :], values)[0]


def decode_batch(
    model: ToyVae, z: np.ndarray, values: np.ndarray | None = None
) -> list[ToySequence]:
    """Greedy decode of a (batch, latent) array of latent points."""
    if values is None:
        values = model.partition.values
    logits = nnet.mlp_forward(values, model.dec_layers, z)
    logits = logits.reshape(z.shape[0], model.grammar.length, VOCAB)
    ids = np.argmax(logits, axis=2)
    return [ToySequence(tuple(int(t) for t in row)) for row in ids]


def _softmax_ce_rows(logits: np.ndarray, targets: np.ndarray):
    """Row-wise softmax cross-entropy; returns (total loss per item, d logits).

    logits: (B, L, V); targets: (B, L) int ids.
    """
    m = logits.max(axis=2, keepdims=True)
    ex = np.exp(logits - m)
    denom = ex.sum(axis=2, keepdims=True)
    log_z = np.log(denom) + m
    b_idx = np.arange(logits.shape[0])[:, None]
    l_idx = np.arange(logits.shape[1])[None, :]
    picked = logits[b_idx, l_idx, targets]
    ce = (log_z[:, :, 0] - picked).sum(axis=1)
    d_logits = ex / denom
    d_logits[b_idx, l_idx, targets] -= 1.0
    return ce, d_logits


def vae_loss_batch(
    model: ToyVae,
    values: np.ndarray,
    seqs: list[ToySequence],
    eps_z: np.ndarray,
    grad_mode: str = "none",
) -> tuple[np.ndarray, np.ndarray | None]:
    """Per-example VAE loss (recon CE + analytic KL) with optional gradients.

    ``eps_z`` is the (batch, latent) reparameterization noise.  grad_mode:
    ``none`` for losses only, ``stochastic`` for decoder-block gradients of the
    summed loss, ``full`` for gradients over the whole parameter vector.
    Raises NumericError when an intermediate goes non-finite.
    """
    L = model.grammar.length
    x = one_hot(seqs, model.grammar)
    targets = np.array([s.tokens for s in seqs], dtype=np.intp)

    enc_hidden, enc_mu, enc_logsig = model.enc_layers
    h_e = nnet.layer_forward(values, enc_hidden, x)
    mu = nnet.layer_forward(values, enc_mu, h_e)
    log_sig = nnet.layer_forward(values, enc_logsig, h_e)
    nnet.check_finite(log_sig, "encoder log-sigma head")
    sig = np.exp(log_sig)
    z = mu + sig * eps_z

    dec_out, dec_acts = nnet.mlp_forward_cached(values, model.dec_layers, z)
    nnet.check_finite(dec_out, "decoder logits")
    logits = dec_out.reshape(len(seqs), L, VOCAB)
    ce, d_logits = _softmax_ce_rows(logits, targets)
    kl = 0.5 * (mu * mu + sig * sig - 1.0 - 2.0 * log_sig).sum(axis=1)
    losses = ce + kl
    nnet.check_finite(losses, "vae loss")

    if grad_mode == "none":
        return losses, None

    grad = np.zeros_like(values)
    d_dec_out = d_logits.reshape(len(seqs), L * VOCAB)
    d_z = nnet.mlp_backward(values, model.dec_layers, dec_acts, d_dec_out, grad)
    if grad_mode == "stochastic":
        return losses, grad[model.dec_offset :].copy()
    if grad_mode != "full":
        raise ValueError(f"unknown grad_mode {grad_mode!r}")

    # Reparameterization path plus analytic KL terms.
    d_mu = d_z + mu
    d_log_sig = d_z * sig * eps_z + (sig * sig - 1.0)
    d_h = nnet.layer_backward(values, enc_mu, h_e, mu, d_mu, grad)
    d_h += nnet.layer_backward(values, enc_logsig, h_e, log_sig, d_log_sig, grad)
    nnet.layer_backward(values, enc_hidden, x, h_e, d_h, grad)
    return losses, grad


def vae_loss(model: ToyVae, seq: ToySequence, rng: SeededRng) -> float:
    """Single-sample reconstruction CE + analytic KL for one sequence."""
    eps = rng.generator().standard_normal((1, model.latent_dim))
    losses, _ = vae_loss_batch(model, model.partition.values, [seq], eps)
    return float(losses[0])


def vae_loss_and_grad(
    model: ToyVae,
    seq: ToySequence,
    rng: SeededRng,
    values: np.ndarray | None = None,
) -> tuple[float, np.ndarray]:
    """Loss and exact gradient over the stochastic (decoder) block only."""
    if values is None:
        values = model.partition.values
    eps = rng.generator().standard_normal((1, model.latent_dim))
    losses, grad = vae_loss_batch(model, values, [seq], eps, grad_mode="stochastic")
    return float(losses[0]), grad


@dataclass
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 32
    epochs: int = 2000
    seed: int = 0
    init_scale: float = 1.0


@dataclass
class TrainRecord:
    epoch_losses: list[float] = field(default_factory=list)

    @property
    def initial(self) -> float:
        return self.epoch_losses[0]

    @property
    def final(self) -> float:
        return self.epoch_losses[-1]


def train_vae(
    dataset: list[ToySequence],
    config: TrainConfig = TrainConfig(),
    grammar: Grammar = Grammar(),
) -> tuple[ToyVae, TrainRecord]:
    """Train the toy VAE with Adam; deterministic for a fixed config+seed."""
    if not dataset:
        raise ValueError("dataset must be nonempty")
    rng = SeededRng(config.seed, stream=0)
    model = build_vae(grammar, init_rng=rng.derive(1), init_scale=config.init_scale)
    gen = rng.generator()
    n = len(dataset)
    state = nnet.AdamState(lr=config.lr)
    record = TrainRecord()
    values = model.partition.values
    for epoch in range(config.epochs):
        order = gen.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            batch = [dataset[i] for i in idx]
            eps = gen.standard_normal((len(batch), model.latent_dim))
            try:
                losses, grad = vae_loss_batch(model, values, batch, eps, grad_mode="full")
            except NumericError as exc:
                raise TrainingError(f"training diverged at epoch {epoch}: {exc}", epoch) from exc
            epoch_loss += float(losses.sum())
            values = nnet.adam_step(state, values, grad / len(batch))
        record.epoch_losses.append(epoch_loss / n)
    model.partition.values = values
    return model, record

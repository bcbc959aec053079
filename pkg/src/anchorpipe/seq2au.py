"""Word vectors → per-frame AU+PS sequence with a learned stop flag.

Encoder: one forward LSTM pass over the sentence, final hidden through a linear layer (h_enc).
Decoder: LSTM whose step input is [h_enc ; y_prev]; initial state is a learned projection of h_enc.
One decoder step is one video frame.
"""
from __future__ import annotations
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F
from torch.nn.utils.rnn import pack_padded_sequence, pad_packed_sequence, pad_sequence

from .core import AU_DIM, AUPS_DIM, AUPSVector, SampleRecord, clamp_normalized
from .errors import ContractError, EmptyInputError, InvalidInputError, LengthError, ShapeError
from .text_frontend import EmbeddedSentence, EmbeddingTable, embed, tokenize

State = Tuple[torch.Tensor, torch.Tensor]


class Seq2AU(nn.Module):
    def __init__(self, embed_dim: int, hidden_size: int = 128, num_layers: int = 1,
                 vocab: Sequence[str] = ()):
        super().__init__()
        self.embed_dim = embed_dim
        self.hidden_size = hidden_size
        self.num_layers = num_layers
        self.vocab: Tuple[str, ...] = tuple(vocab)
        self.vocab_index: Dict[str, int] = {w: i for i, w in enumerate(self.vocab)}
        # only present when embeddings are fine-tuned
        self.embedding: Optional[nn.Embedding] = nn.Embedding(len(self.vocab), embed_dim) if self.vocab else None
        self.encoder = nn.LSTM(embed_dim, hidden_size, num_layers, batch_first=True)
        self.enc_out = nn.Linear(hidden_size, hidden_size)
        self.init_proj = nn.Linear(hidden_size, 2 * num_layers * hidden_size)
        self.decoder = nn.LSTM(hidden_size + AUPS_DIM, hidden_size, num_layers, batch_first=True)
        self.head = nn.Linear(hidden_size, AUPS_DIM + 1)

    # ---------- embeddings ----------
    def load_vocab_vectors(self, table: EmbeddingTable) -> None:
        if self.embedding is None:
            return
        with torch.no_grad():
            for word, i in self.vocab_index.items():
                self.embedding.weight[i].copy_(torch.as_tensor(table.vector(word)))

    def vectors_for(self, sentence: EmbeddedSentence) -> torch.Tensor:
        dtype = self.enc_out.weight.dtype
        base = torch.as_tensor(sentence.vectors, dtype=dtype, device=self.enc_out.weight.device)
        if self.embedding is None:
            return base
        rows = []
        for j, tok in enumerate(sentence.tokens):
            i = self.vocab_index.get(tok)
            rows.append(self.embedding.weight[i] if i is not None else base[j])
        return torch.stack(rows)

    # ---------- encoder ----------
    def encode(self, x: torch.Tensor, lengths: Optional[torch.Tensor] = None) -> Tuple[torch.Tensor, torch.Tensor]:
        """x: (B, T, D) padded word vectors → (h_enc (B, H), per-step hiddens (B, T, H))."""
        if x.dim() != 3 or x.shape[-1] != self.embed_dim:
            raise ShapeError(f"encoder input must be (B, T, {self.embed_dim}), got {tuple(x.shape)}")
        if torch.isnan(x).any():
            raise InvalidInputError("NaN in encoder input vectors")
        if lengths is None:
            lengths = torch.full((x.shape[0],), x.shape[1], dtype=torch.long)
        packed = pack_padded_sequence(x, lengths.cpu(), batch_first=True, enforce_sorted=False)
        out, (h, _) = self.encoder(packed)
        steps, _ = pad_packed_sequence(out, batch_first=True)
        return self.enc_out(h[-1]), steps

    # ---------- decoder ----------
    def initial_state(self, h_enc: torch.Tensor) -> State:
        b = h_enc.shape[0]
        proj = torch.tanh(self.init_proj(h_enc)).view(b, 2, self.num_layers, self.hidden_size)
        h0 = proj[:, 0].transpose(0, 1).contiguous()
        c0 = proj[:, 1].transpose(0, 1).contiguous()
        return h0, c0

    def step(self, state: State, h_enc: torch.Tensor, y_prev: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor, State]:
        if y_prev.shape[-1] != AUPS_DIM or h_enc.shape[-1] != self.hidden_size or y_prev.shape[0] != h_enc.shape[0]:
            raise ShapeError(f"decoder step got h_enc {tuple(h_enc.shape)} and y_prev {tuple(y_prev.shape)}")
        inp = torch.cat([h_enc, y_prev], dim=-1).unsqueeze(1)
        out, state = self.decoder(inp, state)
        raw = self.head(out.squeeze(1))
        y = torch.cat([torch.sigmoid(raw[:, :AU_DIM]), torch.tanh(raw[:, AU_DIM:AUPS_DIM])], dim=-1)
        return y, raw[:, AUPS_DIM], state

    def unroll(self, h_enc: torch.Tensor, targets: torch.Tensor, teacher_forcing: float = 1.0,
               generator: Optional[torch.Generator] = None) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """Train-mode unroll over targets (B, T, 20). Returns outputs, stop logits, top-layer hiddens."""
        state = self.initial_state(h_enc)
        y_prev = h_enc.new_zeros(h_enc.shape[0], AUPS_DIM)
        ys, stops, hiddens = [], [], []
        for l in range(targets.shape[1]):
            y, stop, state = self.step(state, h_enc, y_prev)
            ys.append(y); stops.append(stop); hiddens.append(state[0][-1])
            if teacher_forcing >= 1.0:
                y_prev = targets[:, l]
            else:
                draw = torch.rand(h_enc.shape[0], generator=generator).to(h_enc.device)
                use_truth = (draw < teacher_forcing).unsqueeze(-1)
                y_prev = torch.where(use_truth, targets[:, l], y.detach())
        return torch.stack(ys, 1), torch.stack(stops, 1), torch.stack(hiddens, 1)


def init_params(model: Seq2AU, seed: int) -> Seq2AU:
    """Seeded uniform(-k, k) init with k = 1/sqrt(hidden); fine-tuned embedding rows are left alone."""
    g = torch.Generator().manual_seed(int(seed))
    k = 1.0 / math.sqrt(model.hidden_size)
    with torch.no_grad():
        for name, p in model.named_parameters():
            if name.startswith("embedding."):
                continue
            p.copy_(torch.empty(p.shape, dtype=p.dtype).uniform_(-k, k, generator=g))
    return model


def build_seq2au(cfg, vocab: Sequence[str] = (), table: Optional[EmbeddingTable] = None) -> Seq2AU:
    s = cfg.seq2au
    model = Seq2AU(cfg.embed_dim, s.hidden_size, s.num_layers, vocab=vocab if s.finetune_embeddings else ())
    init_params(model, cfg.seed)
    if table is not None:
        model.load_vocab_vectors(table)
    return model


def make_optimizer(model: nn.Module, lr: float, betas: Sequence[float]) -> torch.optim.Adam:
    return torch.optim.Adam(model.parameters(), lr=lr, betas=tuple(betas))


# ---------- domain-level operations ----------

@dataclass(frozen=True, eq=False)
class EncoderState:
    h_enc: torch.Tensor
    step_hiddens: torch.Tensor


@dataclass(frozen=True, eq=False)
class DecoderStep:
    hidden: State
    output: torch.Tensor
    stop_logit: torch.Tensor

    @property
    def y(self) -> AUPSVector:
        return clamp_normalized(self.output.detach().reshape(-1).double().cpu().tolist())

    @property
    def stop_probability(self) -> float:
        return float(torch.sigmoid(self.stop_logit.detach()).reshape(-1)[0])


def encode(sentence: EmbeddedSentence, model: Seq2AU) -> EncoderState:
    if len(sentence) == 0:
        raise EmptyInputError("cannot encode an empty sentence")
    x = model.vectors_for(sentence).unsqueeze(0)
    h_enc, steps = model.encode(x)
    if not torch.isfinite(h_enc).all():
        raise InvalidInputError("encoder produced non-finite state")
    return EncoderState(h_enc[0], steps[0])


def decode_step(prev: Optional[DecoderStep], h_enc: torch.Tensor, y_prev: Optional[AUPSVector | torch.Tensor],
                model: Seq2AU) -> DecoderStep:
    h = h_enc.reshape(1, -1) if h_enc.dim() == 1 else h_enc
    if y_prev is None:
        y_prev_t = h.new_zeros(h.shape[0], AUPS_DIM)
    elif isinstance(y_prev, AUPSVector):
        if not y_prev.normalized:
            raise ContractError("decoder expects a normalized y_prev")
        y_prev_t = torch.as_tensor(y_prev.as_array(), dtype=h.dtype, device=h.device).unsqueeze(0)
    else:
        y_prev_t = y_prev.reshape(h.shape[0], -1)
    state = model.initial_state(h) if prev is None else prev.hidden
    y, stop, state = model.step(state, h, y_prev_t)
    return DecoderStep(state, y, stop)


def infer_steps(sentence: EmbeddedSentence, model: Seq2AU, t_max: int) -> List[DecoderStep]:
    if t_max < 1:
        raise LengthError(f"t_max must be >= 1, got {t_max}")
    enc = encode(sentence, model)
    steps: List[DecoderStep] = []
    prev: Optional[DecoderStep] = None
    for _ in range(t_max):
        prev = decode_step(prev, enc.h_enc, None if prev is None else prev.output, model)
        steps.append(prev)
        if float(prev.stop_logit.reshape(-1)[0]) > 0.0:  # sigmoid(logit) > 0.5
            break
    return steps


@torch.no_grad()
def infer(sentence: EmbeddedSentence, model: Seq2AU, t_max: int) -> List[AUPSVector]:
    return [s.y for s in infer_steps(sentence, model, t_max)]


@dataclass(frozen=True)
class Seq2AULossReport:
    total: float
    mse: float
    stop_bce: float
    frames: int

    def as_dict(self) -> Dict[str, float]:
        return {"loss": self.total, "mse": self.mse, "stop_bce": self.stop_bce}


def length_mask(lengths: torch.Tensor, t: int) -> torch.Tensor:
    return torch.arange(t, device=lengths.device).unsqueeze(0) < lengths.unsqueeze(1)


def seq2au_loss(pred: torch.Tensor, stop_logits: torch.Tensor, targets: torch.Tensor, lengths: torch.Tensor,
                lambda_stop: float) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    mask = length_mask(lengths, targets.shape[1]).to(pred.dtype)
    valid = mask.sum()
    mse = (((pred - targets) ** 2) * mask.unsqueeze(-1)).sum() / (valid * AUPS_DIM)
    stop_target = F.one_hot(lengths - 1, targets.shape[1]).to(pred.dtype)
    # -log sigmoid(x) = softplus(-x); -log(1 - sigmoid(x)) = softplus(x); exact at saturated logits
    per_step = torch.where(stop_target > 0.5, F.softplus(-stop_logits), F.softplus(stop_logits))
    bce = (per_step * mask).sum() / valid
    return mse + lambda_stop * bce, mse, bce


@dataclass(eq=False)
class Seq2AUBatch:
    x: torch.Tensor
    in_lengths: torch.Tensor
    targets: torch.Tensor
    out_lengths: torch.Tensor


def collate(batch: Sequence[SampleRecord], model: Seq2AU, table: EmbeddingTable, t_max: int) -> Seq2AUBatch:
    if not batch:
        raise EmptyInputError("empty training batch")
    dtype, device = model.enc_out.weight.dtype, model.enc_out.weight.device
    xs, ts = [], []
    for rec in batch:
        if len(rec) > t_max:
            raise LengthError(f"sample {rec.id}: {len(rec)} frames exceeds t_max={t_max}")
        if not all(v.normalized for v in rec.aups_seq):
            raise ContractError(f"sample {rec.id}: AU+PS targets must be normalized")
        xs.append(model.vectors_for(embed(tokenize(rec.text), table)))
        ts.append(torch.as_tensor(rec.aups_matrix(normalized=True), dtype=dtype, device=device))
    return Seq2AUBatch(
        x=pad_sequence(xs, batch_first=True),
        in_lengths=torch.tensor([len(x) for x in xs], dtype=torch.long),
        targets=pad_sequence(ts, batch_first=True),
        out_lengths=torch.tensor([len(t) for t in ts], dtype=torch.long, device=device),
    )


def train_step(batch: Sequence[SampleRecord], model: Seq2AU, optimizer: torch.optim.Optimizer,
               table: EmbeddingTable, cfg, generator: Optional[torch.Generator] = None) -> Seq2AULossReport:
    """One teacher-forced update; model and optimizer are updated in place."""
    b = collate(batch, model, table, cfg.t_max)
    model.train()
    h_enc, _ = model.encode(b.x, b.in_lengths)
    pred, stops, _ = model.unroll(h_enc, b.targets, cfg.seq2au.teacher_forcing, generator)
    total, mse, bce = seq2au_loss(pred, stops, b.targets, b.out_lengths, cfg.seq2au.lambda_stop)
    optimizer.zero_grad(set_to_none=True)
    total.backward()
    optimizer.step()
    return Seq2AULossReport(float(total.detach()), float(mse.detach()), float(bce.detach()),
                            int(b.out_lengths.sum()))


@torch.no_grad()
def teacher_forced_outputs(record: SampleRecord, model: Seq2AU, table: EmbeddingTable) -> torch.Tensor:
    """Model outputs (T, 20) under teacher forcing, aligned frame-for-frame with the record."""
    x = model.vectors_for(embed(tokenize(record.text), table)).unsqueeze(0)
    h_enc, _ = model.encode(x)
    targets = torch.as_tensor(record.aups_matrix(normalized=True), dtype=x.dtype, device=x.device).unsqueeze(0)
    pred, _, _ = model.unroll(h_enc, targets, 1.0)
    return pred[0]

"""LIF dynamics, ATan surrogate gradient, spike encoder and a toy spiking RNN.

Discretization is explicit Euler with a unit step:
    v' = v + (1/tau_m) * (-(v - v_reset) + r * input)
A neuron spikes when v' >= v_th and is reset to v_reset.  The backward pass
replaces the spike derivative with the ATan surrogate; a smooth forward mode
(spike = ATan primitive) exists for finite-difference gradient checks.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import torch
from torch import nn

from .errors import (
    DimensionMismatch,
    InvalidPrompt,
    NonFiniteLoss,
    UnsupportedCheckpoint,
)
from .tokens import EOS, FIELD_NAMES, METRIC, NOTE, CompoundToken, Vocab

DEFAULT_ALPHA = 2.0


@dataclass(frozen=True)
class LIFParams:
    tau_m: float = 2.0
    v_th: float = 0.5
    v_reset: float = 0.0
    r: float = 1.0

    def __post_init__(self) -> None:
        if self.tau_m < 1.0:
            raise ValueError(f"tau_m must be >= 1, got {self.tau_m}")
        if self.v_th <= self.v_reset:
            raise ValueError("v_th must exceed v_reset")


@dataclass
class LIFState:
    v: np.ndarray
    spiked: np.ndarray

    @classmethod
    def zeros(cls, n: int, p: LIFParams) -> "LIFState":
        return cls(v=np.full(n, p.v_reset, dtype=float), spiked=np.zeros(n, dtype=float))


def lif_step(
    state: LIFState, input_current: np.ndarray, p: LIFParams
) -> tuple[LIFState, np.ndarray]:
    """One Euler step of the LIF update; returns the new state and spikes."""
    current = np.asarray(input_current, dtype=float)
    if current.shape != state.v.shape:
        raise DimensionMismatch(
            f"input shape {current.shape} != neuron count {state.v.shape}"
        )
    v = state.v + (1.0 / p.tau_m) * (-(state.v - p.v_reset) + p.r * current)
    spikes = (v >= p.v_th).astype(float)
    v = np.where(spikes > 0, p.v_reset, v)
    return LIFState(v=v, spiked=spikes), spikes


def atan_surrogate_grad(u, alpha: float = DEFAULT_ALPHA):
    """Surrogate spike derivative: (alpha/2) / (1 + (pi*alpha*u/2)^2)."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if isinstance(u, torch.Tensor):
        return (alpha / 2.0) / (1.0 + (math.pi * alpha * u / 2.0) ** 2)
    u = np.asarray(u, dtype=float)
    out = (alpha / 2.0) / (1.0 + (math.pi * alpha * u / 2.0) ** 2)
    return out if out.shape else float(out)


def atan_smooth(u, alpha: float = DEFAULT_ALPHA):
    """Smooth primitive of the surrogate: (1/pi)*arctan(pi*alpha*u/2) + 1/2."""
    if isinstance(u, torch.Tensor):
        return torch.atan(math.pi * alpha * u / 2.0) / math.pi + 0.5
    u = np.asarray(u, dtype=float)
    out = np.arctan(math.pi * alpha * u / 2.0) / math.pi + 0.5
    return out if out.shape else float(out)


class _HardSpike(torch.autograd.Function):
    @staticmethod
    def forward(ctx, u: torch.Tensor, alpha: float) -> torch.Tensor:
        ctx.save_for_backward(u)
        ctx.alpha = alpha
        return (u >= 0).to(u.dtype)

    @staticmethod
    def backward(ctx, grad_output):
        (u,) = ctx.saved_tensors
        return grad_output * atan_surrogate_grad(u, ctx.alpha), None


class _SmoothSpike(torch.autograd.Function):
    @staticmethod
    def forward(ctx, u: torch.Tensor, alpha: float) -> torch.Tensor:
        ctx.save_for_backward(u)
        ctx.alpha = alpha
        return atan_smooth(u, ctx.alpha)

    @staticmethod
    def backward(ctx, grad_output):
        (u,) = ctx.saved_tensors
        return grad_output * atan_surrogate_grad(u, ctx.alpha), None


def spike_fn(u: torch.Tensor, alpha: float, smooth: bool = False) -> torch.Tensor:
    fn = _SmoothSpike if smooth else _HardSpike
    return fn.apply(u, alpha)


class LIFCell(nn.Module):
    """Stateless LIF step used inside torch models; state passed explicitly."""

    def __init__(self, p: LIFParams, alpha: float = DEFAULT_ALPHA, smooth: bool = False):
        super().__init__()
        self.p = p
        self.alpha = alpha
        self.smooth = smooth

    def forward(self, v: torch.Tensor, current: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        p = self.p
        v = v + (1.0 / p.tau_m) * (-(v - p.v_reset) + p.r * current)
        s = spike_fn(v - p.v_th, self.alpha, self.smooth)
        v = s * p.v_reset + (1.0 - s) * v
        return v, s


@dataclass(frozen=True)
class SpikeEncoderConfig:
    in_dim: int
    out_dim: int
    lif: LIFParams = field(default_factory=LIFParams)
    surrogate_alpha: float = DEFAULT_ALPHA

    def __post_init__(self) -> None:
        if self.in_dim <= 0 or self.out_dim <= 0:
            raise ValueError("encoder dimensions must be positive")
        if self.surrogate_alpha <= 0:
            raise ValueError("surrogate_alpha must be positive")


class SpikeEncoder(nn.Module):
    """Linear projection followed by LIF neurons, stateful over a sequence."""

    def __init__(self, cfg: SpikeEncoderConfig, generator: Optional[torch.Generator] = None):
        super().__init__()
        self.cfg = cfg
        self.proj = nn.Linear(cfg.in_dim, cfg.out_dim)
        if generator is not None:
            with torch.no_grad():
                bound = 1.0 / math.sqrt(cfg.in_dim)
                self.proj.weight.uniform_(-bound, bound, generator=generator)
                self.proj.bias.uniform_(-bound, bound, generator=generator)
        self.cell = LIFCell(cfg.lif, cfg.surrogate_alpha)

    def forward(self, embeddings: torch.Tensor) -> torch.Tensor:
        if embeddings.ndim != 2 or embeddings.shape[1] != self.cfg.in_dim:
            raise DimensionMismatch(
                f"expected [T, {self.cfg.in_dim}] embeddings, got {tuple(embeddings.shape)}"
            )
        v = torch.full((self.cfg.out_dim,), self.cfg.lif.v_reset, dtype=embeddings.dtype)
        out = []
        for t in range(embeddings.shape[0]):
            v, s = self.cell(v, self.proj(embeddings[t]))
            out.append(s)
        return torch.stack(out)


def spike_encode(embedding_sequence: np.ndarray, encoder: SpikeEncoder) -> np.ndarray:
    """Run the encoder over a [T, in_dim] array; returns binary spikes."""
    with torch.no_grad():
        x = torch.as_tensor(np.asarray(embedding_sequence), dtype=torch.get_default_dtype())
        return encoder(x).numpy()


class ToySRNN(nn.Module):
    """Desk-scale spiking recurrent sequence model over compound-word tokens.

    Per-field embeddings are concatenated, projected through a spike encoder,
    fed to a single recurrent layer, passed through output LIF neurons, and
    decoded by seven per-field linear heads.
    """

    CHECKPOINT_MAGIC = b"MSPK"
    CHECKPOINT_VERSION = 1

    def __init__(
        self,
        field_sizes: Sequence[int],
        hidden: int = 256,
        embed_dim: int = 16,
        lif: Optional[LIFParams] = None,
        surrogate_alpha: float = DEFAULT_ALPHA,
        seed: int = 0,
    ):
        super().__init__()
        if len(field_sizes) != len(FIELD_NAMES):
            raise ValueError(f"expected {len(FIELD_NAMES)} field sizes")
        self.field_sizes = tuple(int(s) for s in field_sizes)
        self.hidden = hidden
        self.embed_dim = embed_dim
        self.lif = lif or LIFParams()
        self.surrogate_alpha = surrogate_alpha
        self.seed = seed

        gen = torch.Generator().manual_seed(seed)

        def init_(t: torch.Tensor, fan_in: int) -> None:
            bound = 1.0 / math.sqrt(max(1, fan_in))
            with torch.no_grad():
                t.uniform_(-bound, bound, generator=gen)

        self.embeddings = nn.ModuleList(
            nn.Embedding(size, embed_dim) for size in self.field_sizes
        )
        for emb in self.embeddings:
            init_(emb.weight, embed_dim)
        in_dim = embed_dim * len(self.field_sizes)
        self.encoder = nn.Linear(in_dim, hidden)
        init_(self.encoder.weight, in_dim)
        init_(self.encoder.bias, in_dim)
        self.w_in = nn.Linear(hidden, hidden)
        self.w_rec = nn.Linear(hidden, hidden, bias=False)
        init_(self.w_in.weight, hidden)
        init_(self.w_in.bias, hidden)
        init_(self.w_rec.weight, hidden)
        self.heads = nn.ModuleList(
            nn.Linear(hidden, size) for size in self.field_sizes
        )
        for head in self.heads:
            init_(head.weight, hidden)
            init_(head.bias, hidden)
        self.enc_cell = LIFCell(self.lif, surrogate_alpha)
        self.out_cell = LIFCell(self.lif, surrogate_alpha)

    def set_smooth(self, smooth: bool) -> None:
        self.enc_cell.smooth = smooth
        self.out_cell.smooth = smooth

    def initial_state(self, dtype=None) -> tuple[torch.Tensor, ...]:
        dtype = dtype or next(self.parameters()).dtype
        z = torch.full((self.hidden,), self.lif.v_reset, dtype=dtype)
        h = torch.zeros(self.hidden, dtype=dtype)
        return z.clone(), h, z.clone()

    def forward(
        self, tokens: torch.Tensor, state: Optional[tuple] = None
    ) -> tuple[list[torch.Tensor], tuple]:
        """tokens: [T, 7] long indices.  Returns per-field logits and state."""
        if tokens.ndim != 2 or tokens.shape[1] != len(self.field_sizes):
            raise DimensionMismatch(f"expected [T, 7] tokens, got {tuple(tokens.shape)}")
        v_enc, h, v_out = state if state is not None else self.initial_state()
        logits: list[list[torch.Tensor]] = [[] for _ in self.field_sizes]
        for t in range(tokens.shape[0]):
            embeds = torch.cat(
                [emb(tokens[t, i]) for i, emb in enumerate(self.embeddings)]
            )
            v_enc, s_enc = self.enc_cell(v_enc, self.encoder(embeds))
            h = torch.tanh(self.w_in(s_enc) + self.w_rec(h))
            v_out, s_out = self.out_cell(v_out, h)
            for i, head in enumerate(self.heads):
                logits[i].append(head(s_out))
        return [torch.stack(l) for l in logits], (v_enc, h, v_out)


def _sequence_loss(model: ToySRNN, seq: torch.Tensor, state=None):
    """Next-token cross-entropy summed over the seven fields."""
    inputs, targets = seq[:-1], seq[1:]
    logits, state = model(inputs, state)
    loss = sum(
        torch.nn.functional.cross_entropy(logits[i], targets[:, i], reduction="sum")
        for i in range(len(model.field_sizes))
    )
    return loss, state


def train_toy(
    model: ToySRNN,
    corpus: Sequence[Sequence[Sequence[int]]],
    epochs: int,
    lr: float = 0.05,
    bptt_window: int = 32,
    clip_norm: float = 1.0,
) -> tuple[ToySRNN, list[float]]:
    """Plain SGD with gradient clipping; fully deterministic given the model
    seed.  Returns the trained model and the per-epoch loss curve."""
    if not corpus:
        raise ValueError("corpus must be non-empty")
    if epochs < 0:
        raise ValueError("epochs must be >= 0")
    seqs = [torch.as_tensor(np.asarray(s), dtype=torch.long) for s in corpus]
    if any(s.shape[0] < 2 for s in seqs):
        raise ValueError("each sequence needs at least two tokens")
    losses: list[float] = []
    opt = torch.optim.SGD(model.parameters(), lr=lr)
    for _ in range(epochs):
        epoch_loss = 0.0
        n_targets = 0
        for seq in seqs:
            state = None
            for start in range(0, seq.shape[0] - 1, bptt_window):
                chunk = seq[start : start + bptt_window + 1]
                if chunk.shape[0] < 2:
                    break
                opt.zero_grad()
                loss, state = _sequence_loss(model, chunk, state)
                if not torch.isfinite(loss):
                    raise NonFiniteLoss(f"loss diverged: {loss.item()}")
                loss.backward()
                torch.nn.utils.clip_grad_norm_(model.parameters(), clip_norm)
                opt.step()
                state = tuple(t.detach() for t in state)
                epoch_loss += loss.item()
                n_targets += chunk.shape[0] - 1
        losses.append(epoch_loss / max(1, n_targets))
    return model, losses


def field_accuracy(model: ToySRNN, seq: Sequence[Sequence[int]]) -> float:
    """Mean next-token argmax accuracy over positions and fields."""
    tokens = torch.as_tensor(np.asarray(seq), dtype=torch.long)
    with torch.no_grad():
        logits, _ = model(tokens[:-1])
    targets = tokens[1:]
    correct = 0
    total = 0
    for i in range(len(model.field_sizes)):
        pred = logits[i].argmax(dim=1)
        correct += int((pred == targets[:, i]).sum())
        total += targets.shape[0]
    return correct / total


# --- sampling ---------------------------------------------------------------


def _masked_sample(
    logits: torch.Tensor,
    allowed: Sequence[int],
    temperature: float,
    gen: torch.Generator,
) -> int:
    allowed_t = torch.as_tensor(list(allowed), dtype=torch.long)
    vals = logits[allowed_t]
    if temperature < 1e-6:
        return int(allowed_t[int(vals.argmax())])
    probs = torch.softmax(vals / temperature, dim=0)
    choice = int(torch.multinomial(probs, 1, generator=gen))
    return int(allowed_t[choice])


def generate(
    model: ToySRNN,
    vocab: Vocab,
    prompt: Sequence[Sequence[int]],
    length: int,
    temperature: float = 1.0,
    seed: int = 0,
) -> list[tuple[int, ...]]:
    """Autoregressive per-field sampling; invalid field combinations per token
    type are masked so every output token is well-formed.  The final token is
    forced to EOS so the sequence always decodes."""
    if length < 1:
        raise InvalidPrompt("length must be >= 1")
    if temperature <= 0:
        raise InvalidPrompt("temperature must be positive")
    prompt = [tuple(int(i) for i in tok) for tok in prompt]
    if not prompt:
        raise InvalidPrompt("prompt must contain at least one token")
    for tok in prompt:
        if len(tok) != len(FIELD_NAMES):
            raise InvalidPrompt("prompt tokens must have seven indices")
        for i, idx in enumerate(tok):
            if not 0 <= idx < model.field_sizes[i]:
                raise InvalidPrompt(f"prompt index {idx} out of range for field {i}")
    try:
        first_type = vocab.value_of("ttype", prompt[0][0])
    except Exception as exc:
        raise InvalidPrompt(str(exc)) from exc
    if first_type != METRIC:
        raise InvalidPrompt("prompt must start with a Metric token")

    type_indices = {
        vocab.value_of("ttype", i): i for i in range(1, vocab.size("ttype"))
    }
    gen = torch.Generator().manual_seed(seed)

    def nonzero(fname: str) -> list[int]:
        return list(range(1, vocab.size(fname)))

    out = list(prompt)
    with torch.no_grad():
        tokens = torch.as_tensor(np.asarray(out), dtype=torch.long)
        logits, state = model(tokens)
        for step in range(length):
            last = [l[-1] for l in logits]
            if step == length - 1 and EOS in type_indices:
                ttype_idx = type_indices[EOS]
            else:
                allowed_types = [i for t, i in type_indices.items()]
                ttype_idx = _masked_sample(last[0], allowed_types, temperature, gen)
            ttype = vocab.value_of("ttype", ttype_idx)
            tok = [ttype_idx, 0, 0, 0, 0, 0, 0]
            if ttype == NOTE:
                for fi, fname in ((3, "bar_beat"), (4, "pitch"), (5, "duration"), (6, "velocity")):
                    tok[fi] = _masked_sample(last[fi], nonzero(fname), temperature, gen)
            elif ttype == METRIC:
                for fi, fname in ((1, "tempo"), (3, "bar_beat")):
                    tok[fi] = _masked_sample(last[fi], nonzero(fname), temperature, gen)
                tok[2] = _masked_sample(last[2], range(vocab.size("chord")), temperature, gen)
            out.append(tuple(tok))
            if ttype == EOS:
                break
            step_t = torch.as_tensor([tok], dtype=torch.long)
            logits, state = model(step_t, state)
    return out


def tokens_from_indices(rows: Sequence[Sequence[int]], vocab: Vocab) -> list[CompoundToken]:
    return [vocab.decode_token(row) for row in rows]


# --- checkpoint format -------------------------------------------------------


def _pack_tensor(name: str, array: np.ndarray) -> bytes:
    data = array.astype("<f4")
    blob = name.encode()
    out = struct.pack("<H", len(blob)) + blob
    out += struct.pack("<B", data.ndim)
    out += b"".join(struct.pack("<I", d) for d in data.shape)
    return out + data.tobytes()


def save_checkpoint(model: ToySRNN, path: str) -> None:
    tensors: list[tuple[str, np.ndarray]] = [
        ("meta/field_sizes", np.asarray(model.field_sizes, dtype=float)),
        ("meta/hidden", np.asarray([model.hidden], dtype=float)),
        ("meta/embed_dim", np.asarray([model.embed_dim], dtype=float)),
        ("meta/seed", np.asarray([model.seed], dtype=float)),
        (
            "meta/lif",
            np.asarray(
                [model.lif.tau_m, model.lif.v_th, model.lif.v_reset, model.lif.r],
                dtype=float,
            ),
        ),
        ("meta/alpha", np.asarray([model.surrogate_alpha], dtype=float)),
    ]
    for name, tensor in model.state_dict().items():
        tensors.append((name, tensor.detach().numpy()))
    with open(path, "wb") as fh:
        fh.write(ToySRNN.CHECKPOINT_MAGIC)
        fh.write(struct.pack("<H", ToySRNN.CHECKPOINT_VERSION))
        fh.write(struct.pack("<I", len(tensors)))
        for name, arr in tensors:
            fh.write(_pack_tensor(name, np.asarray(arr)))


def load_checkpoint(path: str) -> ToySRNN:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != ToySRNN.CHECKPOINT_MAGIC:
        raise UnsupportedCheckpoint("bad checkpoint magic")
    (version,) = struct.unpack("<H", data[4:6])
    if version != ToySRNN.CHECKPOINT_VERSION:
        raise UnsupportedCheckpoint(f"unknown checkpoint version {version}")
    (count,) = struct.unpack("<I", data[6:10])
    pos = 10
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<H", data[pos : pos + 2])
        pos += 2
        name = data[pos : pos + nlen].decode()
        pos += nlen
        rank = data[pos]
        pos += 1
        dims = struct.unpack("<" + "I" * rank, data[pos : pos + 4 * rank])
        pos += 4 * rank
        n = int(np.prod(dims)) if rank else 1
        arr = np.frombuffer(data[pos : pos + 4 * n], dtype="<f4").reshape(dims)
        pos += 4 * n
        tensors[name] = arr
    lif_vals = tensors.pop("meta/lif")
    model = ToySRNN(
        field_sizes=[int(s) for s in tensors.pop("meta/field_sizes")],
        hidden=int(tensors.pop("meta/hidden")[0]),
        embed_dim=int(tensors.pop("meta/embed_dim")[0]),
        lif=LIFParams(*[float(x) for x in lif_vals]),
        surrogate_alpha=float(tensors.pop("meta/alpha")[0]),
        seed=int(tensors.pop("meta/seed")[0]),
    )
    state = {k: torch.as_tensor(v.copy()) for k, v in tensors.items()}
    model.load_state_dict(state)
    return model

"""Masked-prediction GAN that forecasts a suspect node's attack probability."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .classifier import save_networks, load_networks
from .errors import InsufficientDataError, InsufficientEvidenceError, NumericError, ShapeError
from .fuzzy import EvidenceLog
from .neural import AdamState, DenseNetwork, adam_step, loss_least_squares, loss_mean_abs


@dataclass
class RedemptionConfig:
    vector_len: int = 7
    epochs: int = 300
    update_epochs: int = 50
    batch_size: int = 32
    min_initial_batches: int = 10
    min_update_batches: int = 5
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8
    init_std: float = 0.05
    encoder_widths: tuple = (16, 8, 4)
    decoder_widths: tuple = (8, 16)
    disc_hidden: tuple = (16, 8)


def fuse(log: EvidenceLog, l_w1: int = 10) -> np.ndarray:
    """OR of the three evidence sequences over the latest ``l_w1`` records."""
    if len(log) < l_w1:
        raise InsufficientEvidenceError(f"need {l_w1} evidence bits, have {len(log)}")
    return log.fused()[-l_w1:]


def attack_vector_from_fused(fused, l_w2: int = 4) -> np.ndarray:
    fused = np.asarray(fused, dtype=int)
    if len(fused) < l_w2:
        raise InsufficientEvidenceError(f"fused sequence of {len(fused)} bits is shorter than window {l_w2}")
    return np.convolve(fused, np.ones(l_w2, dtype=int), mode="valid") / l_w2


def build_attack_vector(log: EvidenceLog, l_w1: int = 10, l_w2: int = 4) -> np.ndarray:
    return attack_vector_from_fused(fuse(log, l_w1), l_w2)


def mask_last(batch: np.ndarray, mask: np.ndarray) -> np.ndarray:
    out = np.array(batch, dtype=float, copy=True)
    out[:, -1] = mask
    return out


def restore(masked: np.ndarray, generated: np.ndarray) -> np.ndarray:
    """Put the generator's last digit in place of the mask; nothing else changes."""
    out = np.array(masked, dtype=float, copy=True)
    out[:, -1] = generated[:, -1]
    return out


@dataclass
class RedemptionModel:
    encoder: DenseNetwork
    decoder: DenseNetwork
    disc: DenseNetwork
    config: RedemptionConfig = field(default_factory=RedemptionConfig)
    optimizers: dict = field(default_factory=dict)
    history: list = field(default_factory=list)

    @classmethod
    def create(cls, config: RedemptionConfig, rng: np.random.Generator) -> "RedemptionModel":
        n = config.vector_len
        kw = dict(rng=rng, init_std=config.init_std)
        enc = [n, *config.encoder_widths]
        dec = [config.encoder_widths[-1], *config.decoder_widths, n]
        model = cls(
            encoder=DenseNetwork.build(enc, final="tanh", batch_norm=True, **kw),
            decoder=DenseNetwork.build(dec, final="sigmoid", batch_norm=True, **kw),
            disc=DenseNetwork.build([n, *config.disc_hidden, 1], final="sigmoid", **kw),
            config=config,
        )
        hyper = dict(lr=config.lr, beta1=config.beta1, beta2=config.beta2, eps=config.eps)
        model.optimizers = {
            "generator": AdamState.for_params(model.generator_params(), **hyper),
            "disc": AdamState.for_params(model.disc.params(), **hyper),
        }
        return model

    def networks(self) -> dict[str, DenseNetwork]:
        return {"encoder": self.encoder, "decoder": self.decoder, "disc": self.disc}

    def generator_params(self) -> list[np.ndarray]:
        return self.encoder.params() + self.decoder.params()

    def generate(self, masked: np.ndarray, train: bool = False) -> np.ndarray:
        return self.decoder.forward(self.encoder.forward(masked, train=train), train=train)

    def predict_last(self, vectors: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        v = np.atleast_2d(np.asarray(vectors, dtype=float))
        if v.shape[1] != self.config.vector_len:
            raise ShapeError(f"attack vectors have {self.config.vector_len} entries, got {v.shape[1]}")
        masked = mask_last(v, rng.uniform(0.0, 1.0, len(v)))
        return self.generate(masked)[:, -1]


def _train_step(model: RedemptionModel, real: np.ndarray, other: np.ndarray, rng) -> tuple[float, float]:
    b = len(real)
    ones, zeros = np.ones((b, 1)), np.zeros((b, 1))
    enc, dec, disc = model.encoder, model.decoder, model.disc

    masked = mask_last(real, rng.uniform(0.0, 1.0, b))
    generated = dec.forward(enc.forward(masked))
    restored = restore(masked, generated)

    # discriminator: a second real batch vs the restored samples
    r = loss_least_squares(disc.forward(other), ones)
    g_r, _ = disc.backward(r.grad)
    f = loss_least_squares(disc.forward(restored), zeros)
    g_f, _ = disc.backward(f.grad)
    adam_step(disc.params(), [a + c for a, c in zip(g_r, g_f)], model.optimizers["disc"])

    # generator: adversarial term on the restored digit + fidelity on the unmasked prefix
    adv = loss_least_squares(disc.forward(restored), ones)
    _, g_in = disc.backward(adv.grad)
    g_out = np.zeros_like(generated)
    g_out[:, -1] = 0.5 * g_in[:, -1]
    fid = loss_mean_abs(generated[:, :-1], real[:, :-1])
    g_out[:, :-1] += 0.5 * fid.grad
    g_dec, g_code = dec.backward(g_out)
    g_enc, _ = enc.backward(g_code)
    adam_step(model.generator_params(), g_enc + g_dec, model.optimizers["generator"])
    return r.value + f.value, 0.5 * adv.value + 0.5 * fid.value


def fit_redemption(model: RedemptionModel, dataset: np.ndarray, epochs: int, rng: np.random.Generator):
    data = np.asarray(dataset, dtype=float)
    bs = model.config.batch_size
    if data.ndim != 2 or data.shape[1] != model.config.vector_len:
        raise ShapeError(f"dataset must be (N, {model.config.vector_len}), got {data.shape}")
    if len(data) < bs:
        raise InsufficientDataError(f"need at least one batch ({bs}) of attack vectors, got {len(data)}")
    n_batches = len(data) // bs
    for epoch in range(epochs):
        order = rng.permutation(len(data))
        d_tot = g_tot = 0.0
        for i in range(n_batches):
            real = data[order[i * bs : (i + 1) * bs]]
            other = data[rng.integers(0, len(data), bs)]
            d_loss, g_loss = _train_step(model, real, other, rng)
            if not (np.isfinite(d_loss) and np.isfinite(g_loss)):
                raise NumericError(f"redemption loss not finite at epoch {epoch}, batch {i}")
            d_tot += d_loss
            g_tot += g_loss
        model.history.append({"disc": d_tot / n_batches, "generator": g_tot / n_batches})
    return model


def train_redemption(
    dataset: np.ndarray,
    config: Optional[RedemptionConfig] = None,
    rng: Optional[np.random.Generator] = None,
    epochs: Optional[int] = None,
    initial: bool = True,
) -> RedemptionModel:
    config = config or RedemptionConfig()
    rng = rng if rng is not None else np.random.default_rng(0)
    need = config.batch_size * (config.min_initial_batches if initial else config.min_update_batches)
    if len(dataset) < need:
        raise InsufficientDataError(f"need {need} attack vectors, got {len(dataset)}")
    model = RedemptionModel.create(config, rng)
    return fit_redemption(model, dataset, config.epochs if epochs is None else epochs, rng)


def predict_cooperation(model: RedemptionModel, current, rng: np.random.Generator) -> float:
    """Probability the node cooperates next: one minus its predicted attack probability."""
    p_attack = float(model.predict_last(current, rng)[0])
    return min(1.0, max(0.0, 1.0 - p_attack))


def save_redemption(path, model: RedemptionModel) -> None:
    save_networks(path, model.networks(), {"config": asdict(model.config)})


def load_redemption(path) -> RedemptionModel:
    with np.load(path) as data:
        cfg = json.loads(bytes(data["__meta__"]).decode())["config"]
    for key in ("encoder_widths", "decoder_widths", "disc_hidden"):
        cfg[key] = tuple(cfg[key])
    model = RedemptionModel.create(RedemptionConfig(**cfg), np.random.default_rng(0))
    load_networks(path, model.networks())
    return model

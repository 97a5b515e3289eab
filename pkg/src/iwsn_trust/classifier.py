"""GAN-pair codec used to classify trust vectors.

The encoder is the generator of an unconditional GAN whose discriminator
judges latent codes; the decoder is the generator of a conditional GAN whose
discriminator judges (sample, condition) pairs. A trust vector the codec
reconstructs poorly does not look like the benign data it was trained on.
"""

from __future__ import annotations

import enum
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import InsufficientDataError, NumericError, ShapeError
from .neural import AdamState, DenseNetwork, adam_step, loss_least_squares, loss_mean_abs

VECTOR_LEN = 10


class Verdict(str, enum.Enum):
    TRUSTED = "Trusted"
    SUSPECT = "Suspect"
    MALICIOUS = "Malicious"


@dataclass
class CodecConfig:
    latent_dim: int = 10
    epochs: int = 500
    update_epochs: int = 50
    batch_size: int = 32
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8
    init_std: float = 0.05
    encoder_hidden: tuple = (32, 32, 16)
    decoder_hidden: tuple = (32, 32, 16)
    disc_hidden: tuple = (32, 16, 8)


@dataclass(frozen=True)
class ThresholdPair:
    tr1: float
    tr2: float

    def __post_init__(self):
        if not 0.0 <= self.tr1 <= self.tr2:
            raise ValueError(f"thresholds must satisfy 0 <= Tr1 <= Tr2, got {self.tr1}, {self.tr2}")


def condition_of(x: np.ndarray) -> np.ndarray:
    """First differences of trust vectors (works on one vector or a batch)."""
    return np.diff(np.asarray(x, dtype=float), axis=-1)


@dataclass
class CodecModel:
    encoder: DenseNetwork
    decoder: DenseNetwork
    latent_disc: DenseNetwork
    sample_disc: DenseNetwork
    config: CodecConfig = field(default_factory=CodecConfig)
    optimizers: dict = field(default_factory=dict)
    history: list = field(default_factory=list)

    @classmethod
    def create(cls, config: CodecConfig, rng: np.random.Generator) -> "CodecModel":
        n, c, d = VECTOR_LEN, VECTOR_LEN - 1, config.latent_dim
        kw = dict(rng=rng, init_std=config.init_std)
        model = cls(
            encoder=DenseNetwork.build([n, *config.encoder_hidden, d], final="tanh", batch_norm=True, **kw),
            decoder=DenseNetwork.build([d + c, *config.decoder_hidden, n], final="sigmoid", batch_norm=True, **kw),
            latent_disc=DenseNetwork.build([d, *config.disc_hidden, 1], final="sigmoid", **kw),
            sample_disc=DenseNetwork.build([n + c, *config.disc_hidden, 1], final="sigmoid", **kw),
            config=config,
        )
        model.reset_optimizers()
        return model

    def networks(self) -> dict[str, DenseNetwork]:
        return {
            "encoder": self.encoder,
            "decoder": self.decoder,
            "latent_disc": self.latent_disc,
            "sample_disc": self.sample_disc,
        }

    def reset_optimizers(self) -> None:
        cfg = self.config
        hyper = dict(lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)
        self.optimizers = {name: AdamState.for_params(net.params(), **hyper) for name, net in self.networks().items()}

    def reconstruct(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != VECTOR_LEN:
            raise ShapeError(f"trust vectors have {VECTOR_LEN} entries, got {x.shape[1]}")
        code = self.encoder.forward(x, train=False)
        return self.decoder.forward(np.hstack([code, condition_of(x)]), train=False)


def _train_step(model: CodecModel, x: np.ndarray, cond_pool: np.ndarray, rng: np.random.Generator) -> dict:
    cfg = model.config
    b = x.shape[0]
    en, de, dl, ds = model.encoder, model.decoder, model.latent_disc, model.sample_disc
    opt = model.optimizers

    # conditions come from randomly chosen dataset members
    c_rec = cond_pool[rng.integers(0, len(cond_pool), b)]
    c_syn = cond_pool[rng.integers(0, len(cond_pool), b)]
    z = rng.uniform(-1.0, 1.0, size=(b, cfg.latent_dim))
    ones, zeros = np.ones((b, 1)), np.zeros((b, 1))

    # latent discriminator: prior samples are real, encodings are fake
    code = en.forward(x)
    real = loss_least_squares(dl.forward(z), ones)
    g_real, _ = dl.backward(real.grad)
    fake = loss_least_squares(dl.forward(code), zeros)
    g_fake, _ = dl.backward(fake.grad)
    adam_step(dl.params(), [a + b_ for a, b_ in zip(g_real, g_fake)], opt["latent_disc"])
    loss_dl = real.value + fake.value

    # sample discriminator: (x, c(x)) is real, (De(z|c), c) is fake
    synth = de.forward(np.hstack([z, c_syn]))
    real = loss_least_squares(ds.forward(np.hstack([x, condition_of(x)])), ones)
    g_real, _ = ds.backward(real.grad)
    fake = loss_least_squares(ds.forward(np.hstack([synth, c_syn])), zeros)
    g_fake, _ = ds.backward(fake.grad)
    adam_step(ds.params(), [a + b_ for a, b_ in zip(g_real, g_fake)], opt["sample_disc"])
    loss_ds = real.value + fake.value

    # encoder: fool the latent discriminator + invert the decoder on synthetic data
    code = en.forward(x)
    adv = loss_least_squares(dl.forward(code), ones)
    _, g_code = dl.backward(adv.grad)
    grads_adv, _ = en.backward(g_code)
    recode = en.forward(synth)
    cycle = loss_mean_abs(recode, z)
    grads_cycle, _ = en.backward(0.5 * cycle.grad)
    adam_step(en.params(), [a + b_ for a, b_ in zip(grads_adv, grads_cycle)], opt["encoder"])
    loss_en = adv.value + 0.5 * cycle.value

    # decoder: fool the sample discriminator + reconstruct x from En(x)
    synth = de.forward(np.hstack([z, c_syn]))
    adv = loss_least_squares(ds.forward(np.hstack([synth, c_syn])), ones)
    _, g_in = ds.backward(adv.grad)
    grads_adv, _ = de.backward(g_in[:, :VECTOR_LEN])
    rec = de.forward(np.hstack([code, c_rec]))
    recon = loss_mean_abs(rec, x)
    grads_rec, _ = de.backward(0.5 * recon.grad)
    adam_step(de.params(), [a + b_ for a, b_ in zip(grads_adv, grads_rec)], opt["decoder"])
    loss_de = adv.value + 0.5 * recon.value

    return {"latent_disc": loss_dl, "sample_disc": loss_ds, "encoder": loss_en, "decoder": loss_de}


def fit_codec(model: CodecModel, dataset: np.ndarray, epochs: int, rng: np.random.Generator) -> CodecModel:
    """Continue training ``model`` in place for ``epochs`` passes over ``dataset``."""
    data = np.asarray(dataset, dtype=float)
    bs = model.config.batch_size
    if data.ndim != 2 or data.shape[1] != VECTOR_LEN:
        raise ShapeError(f"dataset must be (N, {VECTOR_LEN}), got {data.shape}")
    if len(data) < bs:
        raise InsufficientDataError(f"need at least one batch ({bs}) of trust vectors, got {len(data)}")
    cond_pool = condition_of(data)
    n_batches = len(data) // bs
    for epoch in range(epochs):
        order = rng.permutation(len(data))
        totals = dict.fromkeys(("latent_disc", "sample_disc", "encoder", "decoder"), 0.0)
        for i in range(n_batches):
            losses = _train_step(model, data[order[i * bs : (i + 1) * bs]], cond_pool, rng)
            for k, v in losses.items():
                if not np.isfinite(v):
                    raise NumericError(f"{k} loss not finite at epoch {epoch}, batch {i}")
                totals[k] += v
        model.history.append({k: v / n_batches for k, v in totals.items()})
    return model


def train_codec(
    dataset: np.ndarray,
    config: Optional[CodecConfig] = None,
    rng: Optional[np.random.Generator] = None,
    epochs: Optional[int] = None,
) -> CodecModel:
    config = config or CodecConfig()
    rng = rng if rng is not None else np.random.default_rng(0)
    data = np.asarray(dataset, dtype=float)
    if len(data) < config.batch_size:
        raise InsufficientDataError(
            f"need at least one batch ({config.batch_size}) of trust vectors, got {len(data)}"
        )
    model = CodecModel.create(config, rng)
    return fit_codec(model, data, config.epochs if epochs is None else epochs, rng)


def reconstruction_losses(model: CodecModel, vectors: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(np.asarray(vectors, dtype=float))
    return np.mean(np.abs(x - model.reconstruct(x)), axis=1)


def reconstruction_loss(model: CodecModel, x: np.ndarray) -> float:
    return float(reconstruction_losses(model, x)[0])


def thresholds_from_losses(losses) -> ThresholdPair:
    """Tr2 is the largest loss; Tr1 the largest after trimming the top 10%."""
    ordered = np.sort(np.asarray(losses, dtype=float))
    n = len(ordered)
    if n == 0:
        raise InsufficientDataError("cannot set thresholds from an empty loss set")
    trim = int(np.floor(0.1 * n))
    return ThresholdPair(float(ordered[n - 1 - trim]), float(ordered[-1]))


def compute_thresholds(model: CodecModel, dataset: np.ndarray) -> ThresholdPair:
    data = np.asarray(dataset, dtype=float)
    if data.size == 0:
        raise InsufficientDataError("cannot set thresholds from an empty dataset")
    return thresholds_from_losses(reconstruction_losses(model, data))


def verdict_for_loss(loss: float, thresholds: ThresholdPair) -> Verdict:
    if loss < thresholds.tr1:
        return Verdict.TRUSTED
    if loss < thresholds.tr2:
        return Verdict.SUSPECT
    return Verdict.MALICIOUS


def classify(model: CodecModel, thresholds: ThresholdPair, x: np.ndarray) -> Verdict:
    return verdict_for_loss(reconstruction_loss(model, x), thresholds)


def save_networks(path, networks: dict[str, DenseNetwork], meta: Optional[dict] = None) -> None:
    """Write every network's arrays, layer-ordered, to one ``.npz`` file."""
    arrays = {}
    for name, net in networks.items():
        for i, arr in enumerate(net.state()):
            arrays[f"{name}/{i:03d}"] = arr
    arrays["__meta__"] = np.frombuffer(json.dumps(meta or {}).encode(), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_networks(path, networks: dict[str, DenseNetwork]) -> dict:
    with np.load(path) as data:
        for name, net in networks.items():
            keys = sorted(k for k in data.files if k.startswith(name + "/"))
            net.load_state([data[k] for k in keys])
        return json.loads(bytes(data["__meta__"]).decode())


def save_codec(path, model: CodecModel, thresholds: Optional[ThresholdPair] = None) -> None:
    meta = {"config": asdict(model.config)}
    if thresholds is not None:
        meta["thresholds"] = [thresholds.tr1, thresholds.tr2]
    save_networks(Path(path), model.networks(), meta)


def load_codec(path) -> tuple[CodecModel, Optional[ThresholdPair]]:
    with np.load(path) as data:
        meta = json.loads(bytes(data["__meta__"]).decode())
    cfg = meta["config"]
    for key in ("encoder_hidden", "decoder_hidden", "disc_hidden"):
        cfg[key] = tuple(cfg[key])
    model = CodecModel.create(CodecConfig(**cfg), np.random.default_rng(0))
    load_networks(path, model.networks())
    thr = meta.get("thresholds")
    return model, (ThresholdPair(*thr) if thr else None)

"""Per-node trust decisions, redemption gating and model updates."""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

import numpy as np

from .classifier import (
    CodecModel,
    ThresholdPair,
    Verdict,
    compute_thresholds,
    fit_codec,
    reconstruction_loss,
    verdict_for_loss,
)
from .errors import InsufficientEvidenceError
from .fuzzy import EvidenceLog, FuzzyTrustEvaluator
from .redemption import RedemptionConfig, RedemptionModel, build_attack_vector, fit_redemption, predict_cooperation, train_redemption

MIN_RECOMMENDATIONS = 3
UPDATE_ADMISSION = 0.6


class Label(str, enum.Enum):
    TRUSTED = "Trusted"
    REDEMPTION_TRUSTED = "RedemptionTrusted"
    UNTRUSTED = "Untrusted"


@dataclass
class TrustDecision:
    label: Label
    loss: float
    verdict: Verdict
    cooperation: Optional[float] = None
    recommendations: int = 0

    def __post_init__(self):
        if self.label is Label.REDEMPTION_TRUSTED and not (
            self.verdict is Verdict.SUSPECT and self.recommendations >= MIN_RECOMMENDATIONS
        ):
            raise ValueError("redemption requires a suspect verdict and enough recommendations")


@dataclass
class NeighborTrustState:
    neighbor: int
    log: EvidenceLog
    l_w1: int = 10
    trust_values: deque = field(default_factory=deque)
    last_label: Optional[Label] = None
    counts: dict = field(default_factory=lambda: {label: 0 for label in Label})
    # bumps whenever the trust vector changes, so cached losses can be reused
    version: int = 0

    def __post_init__(self):
        self.trust_values = deque(self.trust_values, maxlen=self.l_w1)

    def record(self, evaluator: FuzzyTrustEvaluator, drop: int, delay: int, tamper: int) -> None:
        self.log.append(drop, delay, tamper)
        if len(self.log) >= evaluator.l_w:
            self.trust_values.append(evaluator.latest_trust(self.log))
            self.version += 1

    def has_vector(self) -> bool:
        return len(self.trust_values) == self.l_w1

    def trust_vector(self) -> np.ndarray:
        if not self.has_vector():
            raise InsufficientEvidenceError(
                f"neighbor {self.neighbor}: {len(self.trust_values)} of {self.l_w1} trust values"
            )
        return np.fromiter(self.trust_values, dtype=float, count=self.l_w1)

    def attack_vector(self, l_w2: int = 4) -> np.ndarray:
        return build_attack_vector(self.log, self.l_w1, l_w2)

    @property
    def total_decisions(self) -> int:
        return sum(self.counts.values())


@dataclass
class UpdateBuffers:
    batch_size: int = 32
    capacity_batches: int = 10
    classifier: deque = field(default_factory=deque)
    redemption: deque = field(default_factory=deque)

    def __post_init__(self):
        cap = self.batch_size * self.capacity_batches
        self.classifier = deque(self.classifier, maxlen=cap)
        self.redemption = deque(self.redemption, maxlen=cap)


@dataclass
class TrustModels:
    """Classifier, thresholds, redemption model and their update buffers."""

    codec: CodecModel
    thresholds: ThresholdPair
    redemption: Optional[RedemptionModel] = None
    redemption_config: RedemptionConfig = field(default_factory=RedemptionConfig)
    buffers: UpdateBuffers = field(default_factory=UpdateBuffers)
    l_w2: int = 4
    update_batches: int = 5
    initial_redemption_batches: int = 10
    codec_version: int = 0
    # benign vectors replayed into every codec update; None retrains on the buffer alone
    reference: Optional[np.ndarray] = None
    retrain_log: list = field(default_factory=list)

    def loss(self, vector: np.ndarray) -> float:
        return reconstruction_loss(self.codec, vector)


def decide(
    state: NeighborTrustState,
    models: TrustModels,
    recommendations: int,
    rng: np.random.Generator,
    loss: Optional[float] = None,
) -> TrustDecision:
    """Classify one neighbor and apply the redemption rule.

    ``loss`` may be supplied when the caller has already scored the trust
    vector (the simulator scores a whole round in one batch).
    """
    vector = state.trust_vector()
    if loss is None:
        loss = models.loss(vector)
    verdict = verdict_for_loss(loss, models.thresholds)

    cooperation = None
    if verdict is Verdict.TRUSTED:
        label = Label.TRUSTED
        if loss < UPDATE_ADMISSION * models.thresholds.tr1:
            models.buffers.classifier.append(vector)
    elif verdict is Verdict.SUSPECT and recommendations >= MIN_RECOMMENDATIONS and models.redemption is not None:
        cooperation = predict_cooperation(models.redemption, state.attack_vector(models.l_w2), rng)
        label = Label.REDEMPTION_TRUSTED if rng.random() < cooperation else Label.UNTRUSTED
    else:
        label = Label.UNTRUSTED
        if verdict is Verdict.MALICIOUS:
            models.buffers.redemption.append(state.attack_vector(models.l_w2))

    state.last_label = label
    state.counts[label] += 1
    return TrustDecision(label, float(loss), verdict, cooperation, recommendations)


def gather_recommendations(
    decider: int,
    target: int,
    managers: Mapping[int, "TrustManager"],
    neighbors: Iterable[int],
) -> tuple[int, list[int]]:
    """Count the decider's trusted neighbors that currently vouch for ``target``.

    Returns the count and the neighbors queried (each query is one control exchange).
    """
    own = managers[decider].states
    queried = [n for n in neighbors if n != target and n in own and own[n].last_label is Label.TRUSTED]
    count = 0
    for n in queried:
        view = managers[n].states.get(target)
        if view is not None and view.last_label in (Label.TRUSTED, Label.REDEMPTION_TRUSTED):
            count += 1
    return count, queried


def buffer_and_maybe_retrain(models: TrustModels, rng: np.random.Generator) -> dict:
    """Retrain whichever model has a full update buffer. Returns what fired."""
    buf = models.buffers
    need = buf.batch_size * models.update_batches
    fired = {"codec": False, "redemption": False}

    if len(buf.classifier) >= need:
        data = np.array(buf.classifier)
        if models.reference is not None:
            data = np.vstack([data, models.reference])
        fit_codec(models.codec, data, models.codec.config.update_epochs, rng)
        models.thresholds = compute_thresholds(models.codec, data)
        models.codec_version += 1
        buf.classifier.clear()
        fired["codec"] = True

    if models.redemption is None:
        need_initial = buf.batch_size * models.initial_redemption_batches
        if len(buf.redemption) >= need_initial:
            models.redemption = train_redemption(np.array(buf.redemption), models.redemption_config, rng)
            buf.redemption.clear()
            fired["redemption"] = True
    elif len(buf.redemption) >= need:
        fit_redemption(models.redemption, np.array(buf.redemption), models.redemption.config.update_epochs, rng)
        buf.redemption.clear()
        fired["redemption"] = True

    if any(fired.values()):
        models.retrain_log.append(dict(fired, tr1=models.thresholds.tr1, tr2=models.thresholds.tr2))
    return fired


@dataclass
class TrustManager:
    """One node's view of its neighbors."""

    owner: int
    models: TrustModels | None
    evaluator: FuzzyTrustEvaluator
    max_len: int = 40
    prefill: int = 0
    states: dict = field(default_factory=dict)

    def state_for(self, neighbor: int) -> NeighborTrustState:
        st = self.states.get(neighbor)
        if st is None:
            log = EvidenceLog.from_bits([0] * self.prefill, [0] * self.prefill, [0] * self.prefill, self.max_len)
            st = self.states[neighbor] = NeighborTrustState(neighbor, log, self.evaluator.l_w1)
        return st

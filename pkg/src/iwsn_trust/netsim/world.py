"""Round-based simulation of a clustered sensor network under attack."""

from __future__ import annotations

import copy
import hashlib
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..classifier import CodecConfig, compute_thresholds, reconstruction_losses, train_codec
from ..errors import DomainError, InsufficientDataError, TrustSimError
from ..fuzzy import EvidenceLog, FuzzyTrustEvaluator, TSKRuleBase, compute_attribute_pairs, default_sets
from ..manager import (
    Label,
    TrustManager,
    TrustModels,
    UpdateBuffers,
    buffer_and_maybe_retrain,
    decide,
    gather_recommendations,
)
from ..redemption import RedemptionConfig
from . import channel
from .config import SimConfig
from .energy import RadioModel
from .metrics import RoundMetrics, summarize_metrics

HONEST = 0
TIER_NAMES = ("honest", "normal", "advanced", "super")

MEMBER, HEAD, SINK_DIRECT, DEAD = "member", "head", "sink-direct", "dead"


class SimulationError(TrustSimError):
    """A failure inside the round loop, tagged with the round it happened in."""


def head_election_threshold(p_c: float, r: int) -> float:
    """LEACH rotation threshold for round ``r``, clamped to [0, 1]."""
    if not 0.0 < p_c < 1.0:
        raise DomainError(f"head probability must lie in (0, 1), got {p_c}")
    if r < 0:
        raise DomainError(f"round must be nonnegative, got {r}")
    denom = 1.0 - p_c * math.fmod(r, 1.0 / p_c)
    if denom <= 0.0:
        return 1.0
    return min(1.0, max(0.0, p_c / denom))


def expected_first_decision_round(config: SimConfig) -> float:
    """Mean rounds a node waits before it can first judge a given neighbor head."""
    if config.area <= 0:
        raise DomainError("field area must be positive")
    return config.l_w1 * math.pi * config.radius**2 * config.n_nodes / config.area


def tier_counts(n_malicious: int, shares) -> list[int]:
    """Split ``n_malicious`` over the three tiers by largest remainder."""
    raw = [n_malicious * s for s in shares]
    counts = [int(math.floor(x)) for x in raw]
    remainders = sorted(range(len(raw)), key=lambda i: (-(raw[i] - counts[i]), i))
    for i in remainders[: n_malicious - sum(counts)]:
        counts[i] += 1
    return counts


@dataclass
class NodeRecord:
    id: int
    x: float
    y: float
    energy: float
    tier: int = HONEST
    role: str = MEMBER
    last_head_round: Optional[int] = None

    @property
    def alive(self) -> bool:
        return self.role != DEAD

    @property
    def malicious(self) -> bool:
        return self.tier != HONEST


@dataclass
class WorldState:
    config: SimConfig
    nodes: list[NodeRecord]
    sink: tuple[float, float]
    dist: np.ndarray
    sink_dist: np.ndarray
    neighbors: list[np.ndarray]
    channel_bad: np.ndarray
    node_rngs: list[np.random.Generator]
    channel_rng: np.random.Generator
    train_rng: np.random.Generator
    radio: RadioModel
    evaluator: FuzzyTrustEvaluator
    managers: dict[int, TrustManager] = field(default_factory=dict)
    models: Optional[TrustModels] = None
    round: int = 0
    ledger: list = field(default_factory=list)
    warmup_logs: dict = field(default_factory=dict)
    first_decision: dict = field(default_factory=dict)
    trace: list = field(default_factory=list)
    assignments: dict = field(default_factory=dict)

    @property
    def n_benign(self) -> int:
        return sum(1 for n in self.nodes if not n.malicious)

    def attackers_active(self) -> bool:
        return self.round >= self.config.warmup_rounds

    def eligible(self, node: NodeRecord) -> bool:
        if not node.alive:
            return False
        if node.last_head_round is None:
            return True
        return self.round - node.last_head_round >= self.config.eligibility_window

    def charge(self, node_id: int, amount: float, kind: str) -> bool:
        """Debit energy; returns False (and charges nothing) if the node is already dead."""
        node = self.nodes[node_id]
        if not node.alive:
            return False
        take = min(amount, node.energy)
        node.energy -= take
        self.ledger.append((node_id, take, kind))
        if node.energy <= 0.0:
            node.energy = 0.0
            node.role = DEAD
        return True

    def total_energy(self) -> float:
        return float(sum(n.energy for n in self.nodes))

    def link_bad(self, sender: int, receiver: int) -> bool:
        if self.config.channel_mode == "link":
            return bool(self.channel_bad[sender, receiver])
        return bool(self.channel_bad[sender])

    def models_for(self, node_id: int) -> Optional[TrustModels]:
        return self.managers[node_id].models if self.managers else None


def deploy(config: SimConfig, rng: Optional[np.random.Generator] = None) -> WorldState:
    """Scatter nodes, pick attackers and their tiers, and set up every random stream."""
    config.validate()
    seq = np.random.SeedSequence(config.seed)
    place_seq, adv_seq, chan_seq, train_seq, node_seq = seq.spawn(5)
    place = rng if rng is not None else np.random.default_rng(place_seq)
    n = config.n_nodes

    xs = place.uniform(0.0, config.field_width, n)
    ys = place.uniform(0.0, config.field_height, n)

    n_mal = int(round(n * config.malicious_pct / 100.0))
    adv = np.random.default_rng(adv_seq)
    chosen = adv.permutation(n)[:n_mal]
    tiers = np.zeros(n, dtype=int)
    order = adv.permutation(chosen)
    start = 0
    for tier, count in enumerate(tier_counts(n_mal, config.tier_shares), start=1):
        tiers[order[start : start + count]] = tier
        start += count

    nodes = [NodeRecord(i, float(xs[i]), float(ys[i]), config.initial_energy, int(tiers[i])) for i in range(n)]
    pos = np.column_stack([xs, ys])
    dist = np.sqrt(((pos[:, None, :] - pos[None, :, :]) ** 2).sum(axis=-1))
    sink = (config.field_width / 2.0, config.field_height / 2.0)
    sink_dist = np.sqrt(((pos - np.array(sink)) ** 2).sum(axis=1))
    neighbors = [np.flatnonzero((dist[i] <= config.radius) & (np.arange(n) != i)) for i in range(n)]

    chan = np.random.default_rng(chan_seq)
    shape = (n, n) if config.channel_mode == "link" else (n,)
    evaluator = FuzzyTrustEvaluator(
        TSKRuleBase(alpha=config.alpha, beta=config.beta),
        default_sets(config.lower_scale),
        config.l_w,
        config.l_w1,
    )
    world = WorldState(
        config=config,
        nodes=nodes,
        sink=sink,
        dist=dist,
        sink_dist=sink_dist,
        neighbors=neighbors,
        channel_bad=channel.initial_states(shape, config.p_bad, chan),
        node_rngs=[np.random.default_rng(s) for s in node_seq.spawn(n)],
        channel_rng=chan,
        train_rng=np.random.default_rng(train_seq),
        radio=RadioModel(config.e_elec, config.eps_fs, config.eps_mp),
        evaluator=evaluator,
    )
    if config.trust_enabled:
        prefill = config.l_w - 1 if config.evidence_prefill else 0
        for node in nodes:
            world.managers[node.id] = TrustManager(node.id, None, evaluator, config.evidence_max_len, prefill)
            world.warmup_logs[node.id] = EvidenceLog.from_bits(
                [0] * prefill, [0] * prefill, [0] * prefill, max_len=prefill + config.warmup_rounds + 1
            )
    return world


def step_channel(world: WorldState) -> None:
    world.channel_bad = channel.step_channel(world.channel_bad, world.config.p_bad, world.channel_rng)


def elect_heads(world: WorldState) -> list[int]:
    threshold = head_election_threshold(world.config.p_head, world.round)
    heads = []
    for node in world.nodes:
        if not node.alive:
            continue
        node.role = MEMBER
        draw = world.node_rngs[node.id].random()
        if world.eligible(node) and draw < threshold:
            node.role = HEAD
            heads.append(node.id)
    return heads


# --- trust decisions -------------------------------------------------------


def _score_pending(world: WorldState, candidates: dict[int, list[int]]) -> None:
    """Batch-score every (member, head) trust vector that changed since last scored."""
    pending = []
    for i, heads in candidates.items():
        models = world.models_for(i)
        if models is None:
            continue
        mgr = world.managers[i]
        for j in heads:
            st = mgr.states.get(j)
            if st is None or not st.has_vector():
                continue
            key = (st.version, id(models.codec), models.codec_version)
            if getattr(st, "loss_key", None) != key:
                pending.append((st, key, models))
    by_model: dict[int, list] = {}
    for item in pending:
        by_model.setdefault(id(item[2]), []).append(item)
    for items in by_model.values():
        vectors = np.array([st.trust_vector() for st, _, _ in items])
        losses = reconstruction_losses(items[0][2].codec, vectors)
        for (st, key, _), loss in zip(items, losses):
            st.loss_key = key
            st.cached_loss = float(loss)


def _decide_on_head(world: WorldState, i: int, j: int, metrics: RoundMetrics) -> Label:
    models = world.models_for(i)
    mgr = world.managers[i]
    st = mgr.states.get(j)
    if models is None or st is None or not st.has_vector():
        return Label.TRUSTED  # provisional trust until a full trust vector exists

    cfg = world.config
    loss = st.cached_loss
    recs = 0
    if models.thresholds.tr1 <= loss < models.thresholds.tr2:
        recs, queried = gather_recommendations(i, j, world.managers, world.neighbors[i])
        for q in queried:
            d = float(world.dist[i, q])
            world.charge(i, world.radio.tx(cfg.control_bits, d), "control_tx")
            world.charge(q, world.radio.rx(cfg.control_bits), "control_rx")
    decision = decide(st, models, recs, world.node_rngs[i], loss=loss)

    target = world.nodes[j]
    untrusted = decision.label is Label.UNTRUSTED
    if target.malicious:
        metrics.det_total_malicious += 1
        metrics.det_tp += int(untrusted)
    else:
        metrics.det_total_benign += 1
        metrics.det_fp += int(untrusted)
    world.first_decision.setdefault((i, j), world.round)
    if cfg.trace_decisions:
        world.trace.append(
            (world.round, i, j, decision.loss, decision.label.value, decision.recommendations, decision.cooperation)
        )
    return decision.label


def form_clusters(world: WorldState, heads: list[int], metrics: RoundMetrics) -> dict[int, Optional[int]]:
    """Assign every alive non-head to a head (or to the sink directly).

    Returns ``member -> head`` with ``None`` meaning the node sends straight
    to the sink. Nodes that promote themselves to head map to themselves.
    """
    cfg = world.config
    head_set = set(heads)
    candidates: dict[int, list[int]] = {}
    for node in world.nodes:
        if not node.alive or node.id in head_set:
            continue
        near = [int(j) for j in world.neighbors[node.id] if int(j) in head_set]
        near.sort(key=lambda j: (world.dist[node.id, j], j))
        candidates[node.id] = near

    if cfg.trust_enabled:
        _score_pending(world, candidates)

    assignment: dict[int, Optional[int]] = {}
    for i, near in candidates.items():
        chosen = None
        for j in near:
            label = _decide_on_head(world, i, j, metrics) if cfg.trust_enabled else Label.TRUSTED
            if label is not Label.UNTRUSTED and chosen is None:
                chosen = j
        node = world.nodes[i]
        if chosen is not None:
            node.role = MEMBER
            assignment[i] = chosen
        elif world.eligible(node):
            # no trusted head in range: lead a cluster of one
            node.role = HEAD
            assignment[i] = i
        else:
            node.role = SINK_DIRECT
            assignment[i] = None
    world.assignments = assignment
    return assignment


# --- data transmission -----------------------------------------------------


def _record_evidence(world: WorldState, member: int, head: int, bits: tuple[int, int, int]) -> None:
    if not world.config.trust_enabled:
        return
    world.managers[member].state_for(head).record(world.evaluator, *bits)
    if not world.attackers_active() and member in world.warmup_logs:
        world.warmup_logs[member].append(*bits)


def simulate_round(world: WorldState) -> RoundMetrics:
    """Run one full round: channel, election, clustering, transmission, bookkeeping."""
    cfg = world.config
    metrics = RoundMetrics(round=world.round)
    step_channel(world)
    heads = elect_heads(world)
    assignment = form_clusters(world, heads, metrics)
    all_heads = sorted(set(heads) | {i for i, h in assignment.items() if h == i})
    metrics.heads = len(all_heads)
    # only elected heads consume their rotation slot; forced singletons do not
    for h in heads:
        world.nodes[h].last_head_round = world.round
    active = world.attackers_active()
    bits = cfg.packet_bits

    inbox: dict[int, list[tuple[int, bool]]] = {h: [] for h in all_heads}
    for i, h in sorted(assignment.items()):
        if h is None or h == i:
            continue
        if not world.charge(i, world.radio.tx(bits, float(world.dist[i, h])), "data_tx"):
            continue
        head = world.nodes[h]
        if world.link_bad(i, h) or not head.alive:
            _record_evidence(world, i, h, (1, 0, 0))
            continue
        if not world.charge(h, world.radio.rx(bits), "data_rx"):
            _record_evidence(world, i, h, (1, 0, 0))
            continue
        drop = delay = tamper = 0
        if head.malicious and active:
            rng = world.node_rngs[h]
            p = min(1.0, head.tier * cfg.p_attack)
            misbehave, delay_draw, use_tamper = rng.random() < p, rng.random() < p, rng.random() < 0.5
            if misbehave:
                metrics.attacks_drop += 1
                if use_tamper:
                    tamper = 1
                else:
                    drop = 1
            if delay_draw and not drop:
                metrics.attacks_delay += 1
                delay = 1
        _record_evidence(world, i, h, (drop, delay, tamper))
        if not drop:
            inbox[h].append((i, not tamper))

    for h in all_heads:
        head = world.nodes[h]
        if not head.alive:
            continue
        packets = inbox[h]
        if not world.charge(h, world.radio.tx(bits * (len(packets) + 1), float(world.sink_dist[h])), "sink_tx"):
            continue
        metrics.delivered += sum(1 for src, intact in packets if intact and not world.nodes[src].malicious)
        metrics.delivered += int(not head.malicious)

    for i, h in sorted(assignment.items()):
        if h is not None:
            continue
        if not world.charge(i, world.radio.tx(bits, float(world.sink_dist[i])), "sink_tx"):
            continue
        if not world.link_bad(i, i) and not world.nodes[i].malicious:
            metrics.delivered += 1

    metrics.alive_benign = sum(1 for n in world.nodes if n.alive and not n.malicious)
    metrics.energy_total = world.total_energy()
    return metrics


# --- initial training ------------------------------------------------------


def warmup_dataset(world: WorldState) -> np.ndarray:
    """Benign trust vectors pooled from every node's warm-up evidence stream."""
    ev = world.evaluator
    vectors = []
    for i in sorted(world.warmup_logs):
        log = world.warmup_logs[i]
        need = ev.l_w + ev.l_w1 - 1
        if len(log) < need:
            continue
        values = np.array([ev.trust(p) for p in compute_attribute_pairs(log, ev.l_w)])
        for k in range(len(values) - ev.l_w1 + 1):
            vectors.append(values[k : k + ev.l_w1])
    if not vectors:
        raise InsufficientDataError("warm-up produced no trust vectors; lengthen warmup_rounds")
    return np.array(vectors)


_CODEC_CACHE: dict[str, tuple] = {}


def _train_initial(world: WorldState) -> TrustModels:
    cfg = world.config
    pool = warmup_dataset(world)
    rng = world.train_rng
    size = min(cfg.initial_dataset_size, len(pool))
    data = pool[np.sort(rng.choice(len(pool), size=size, replace=False))]
    codec_cfg = CodecConfig(epochs=cfg.codec_epochs, update_epochs=cfg.codec_update_epochs)
    if len(data) < codec_cfg.batch_size:
        raise InsufficientDataError(f"warm-up produced only {len(data)} trust vectors")

    # identical data + seed + settings give an identical model, so sweeps reuse it
    digest = hashlib.sha256(data.tobytes() + repr((cfg.seed, codec_cfg)).encode()).hexdigest()
    cached = _CODEC_CACHE.get(digest)
    if cached is None:
        train_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
        codec = train_codec(data, codec_cfg, train_rng)
        cached = _CODEC_CACHE[digest] = (codec, compute_thresholds(codec, data), data)
    codec, thresholds, _ = cached
    return TrustModels(
        codec=copy.deepcopy(codec),
        thresholds=thresholds,
        redemption_config=RedemptionConfig(epochs=cfg.redemption_epochs, update_epochs=cfg.redemption_update_epochs),
        buffers=UpdateBuffers(batch_size=codec_cfg.batch_size),
        l_w2=cfg.l_w2,
        reference=data,
    )


def _install_models(world: WorldState) -> None:
    cfg = world.config
    shared = _train_initial(world)
    world.models = shared
    for node in world.nodes:
        mgr = world.managers[node.id]
        mgr.models = copy.deepcopy(shared) if cfg.per_node_models else shared
        # one control exchange with the nearest trust agency to fetch the model
        world.charge(node.id, world.radio.rx(cfg.control_bits), "agency_rx")


def _maybe_update_models(world: WorldState) -> None:
    cfg = world.config
    seen = set()
    for i in range(cfg.n_nodes):
        models = world.managers[i].models
        if models is None or id(models) in seen:
            continue
        seen.add(id(models))
        buffer_and_maybe_retrain(models, world.train_rng)


# --- full run --------------------------------------------------------------


@dataclass
class RunResult:
    config: SimConfig
    series: list[RoundMetrics]
    summary: dict
    first_decision_rounds: list[int]
    trace: list
    world: WorldState


def train_initial_models(config: SimConfig) -> tuple[WorldState, TrustModels]:
    """Run only the warm-up phase and train the initial models from it."""
    world = deploy(config)
    for r in range(config.warmup_rounds):
        world.round = r
        try:
            simulate_round(world)
        except TrustSimError as exc:
            raise SimulationError(f"round {r}: {exc}") from exc
    return world, _train_initial(world)


def run(config: SimConfig) -> RunResult:
    """Warm-up, initial training, then adversarial rounds until the horizon."""
    world = deploy(config)
    n_benign = world.n_benign
    series = []
    for r in range(config.rounds):
        world.round = r
        try:
            if config.trust_enabled and r == config.warmup_rounds and world.models is None:
                _install_models(world)
            series.append(simulate_round(world))
            if config.trust_enabled and world.models is not None:
                _maybe_update_models(world)
        except TrustSimError as exc:
            raise SimulationError(f"round {r}: {exc}") from exc
    summary = summarize_metrics(series, n_benign)
    firsts = sorted(world.first_decision.values())
    return RunResult(config, series, summary, firsts, world.trace, world)

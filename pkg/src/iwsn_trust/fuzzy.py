"""Interval type-2 TSK fuzzy evaluation of node trust.

Binary drop/delay/tamper evidence is turned into (packet loss rate,
transfer delay rate) pairs over a sliding window, and each pair is mapped
to a trust value in [0, 1] with nine TSK rules and BMM defuzzification.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .errors import DomainError, InsufficientEvidenceError

LABELS = ("low", "medium", "high")


class FiringInterval(NamedTuple):
    lower: float
    upper: float


class TrustAttributePair(NamedTuple):
    loss_rate: float
    delay_rate: float


@dataclass(frozen=True)
class IT2MembershipFunction:
    """Piecewise-linear upper MF; the lower MF is a scaled copy of it."""

    label: str
    knots: tuple[tuple[float, float], ...]
    lower_scale: float = 0.8

    def __post_init__(self):
        if not 0.0 < self.lower_scale <= 1.0:
            raise DomainError(f"lower_scale must lie in (0, 1], got {self.lower_scale}")
        xs = [k[0] for k in self.knots]
        if xs != sorted(xs) or xs[0] != 0.0 or xs[-1] != 1.0:
            raise DomainError(f"knots of {self.label!r} must be sorted and span [0, 1]")

    def upper(self, x: float) -> float:
        xs, ys = zip(*self.knots)
        return float(np.interp(x, xs, ys))

    def degree(self, x: float) -> FiringInterval:
        if not 0.0 <= x <= 1.0:
            raise DomainError(f"trust attribute {x} outside [0, 1]")
        up = self.upper(x)
        return FiringInterval(self.lower_scale * up, up)


def default_membership(lower_scale: float = 0.8) -> dict[str, IT2MembershipFunction]:
    """Low on [0, .5], medium on [.1, .9], high on [.5, 1]."""
    return {
        "low": IT2MembershipFunction("low", ((0.0, 1.0), (0.1, 1.0), (0.5, 0.0), (1.0, 0.0)), lower_scale),
        "medium": IT2MembershipFunction(
            "medium", ((0.0, 0.0), (0.1, 0.0), (0.5, 1.0), (0.9, 0.0), (1.0, 0.0)), lower_scale
        ),
        "high": IT2MembershipFunction("high", ((0.0, 0.0), (0.5, 0.0), (0.9, 1.0), (1.0, 1.0)), lower_scale),
    }


def membership_degrees(mf: IT2MembershipFunction, x: float) -> FiringInterval:
    return mf.degree(x)


class Rule(NamedTuple):
    loss_label: str
    delay_label: str
    consequent: float


DEFAULT_RULES = (
    Rule("low", "low", 1.0),
    Rule("low", "medium", 0.9),
    Rule("low", "high", 0.7),
    Rule("medium", "low", 0.7),
    Rule("medium", "medium", 0.5),
    Rule("medium", "high", 0.3),
    Rule("high", "low", 0.3),
    Rule("high", "medium", 0.1),
    Rule("high", "high", 0.0),
)


@dataclass(frozen=True)
class TSKRuleBase:
    rules: tuple[Rule, ...] = DEFAULT_RULES
    alpha: float = 0.5
    beta: float = 0.5

    def __post_init__(self):
        for rule in self.rules:
            if rule.loss_label not in LABELS or rule.delay_label not in LABELS:
                raise DomainError(f"rule {rule} uses an unknown label")
            if not 0.0 <= rule.consequent <= 1.0:
                raise DomainError(f"rule consequent {rule.consequent} outside [0, 1]")


def firing_intervals(
    rules: TSKRuleBase,
    sets: Mapping[str, Mapping[str, IT2MembershipFunction]],
    pair: Sequence[float],
) -> list[FiringInterval]:
    """Product t-norm firing degree of every rule, lower and upper separately."""
    x1, x2 = pair
    loss = {label: mf.degree(x1) for label, mf in sets["loss"].items()}
    delay = {label: mf.degree(x2) for label, mf in sets["delay"].items()}
    return [
        FiringInterval(
            loss[r.loss_label].lower * delay[r.delay_label].lower,
            loss[r.loss_label].upper * delay[r.delay_label].upper,
        )
        for r in rules.rules
    ]


def infer_trust(
    rules: TSKRuleBase,
    sets: Mapping[str, Mapping[str, IT2MembershipFunction]],
    pair: Sequence[float],
) -> float:
    """BMM-defuzzified trust value for one attribute pair."""
    fired = firing_intervals(rules, sets, pair)
    ys = np.array([r.consequent for r in rules.rules])
    lo = np.array([f.lower for f in fired])
    up = np.array([f.upper for f in fired])
    if up.sum() <= 0.0:
        raise DomainError(f"no rule fires for {tuple(pair)}; membership sets do not cover input")
    upper_avg = float(ys @ up / up.sum())
    lower_avg = float(ys @ lo / lo.sum()) if lo.sum() > 0.0 else upper_avg
    value = rules.alpha * lower_avg + rules.beta * upper_avg
    return min(1.0, max(0.0, value))


def default_sets(lower_scale: float = 0.8) -> dict[str, dict[str, IT2MembershipFunction]]:
    return {"loss": default_membership(lower_scale), "delay": default_membership(lower_scale)}


@dataclass
class EvidenceLog:
    """Bounded record of per-transmission attack observations about one neighbor."""

    max_len: int = 40
    drop: deque = field(default_factory=deque)
    delay: deque = field(default_factory=deque)
    tamper: deque = field(default_factory=deque)

    def __post_init__(self):
        self.drop = deque(self.drop, maxlen=self.max_len)
        self.delay = deque(self.delay, maxlen=self.max_len)
        self.tamper = deque(self.tamper, maxlen=self.max_len)
        if not len(self.drop) == len(self.delay) == len(self.tamper):
            raise ValueError("evidence sequences must have equal length")

    @classmethod
    def from_bits(cls, drop: Iterable[int], delay: Iterable[int], tamper: Iterable[int], max_len: int = 40):
        return cls(max_len, deque(drop), deque(delay), deque(tamper))

    def append(self, drop: int, delay: int, tamper: int) -> None:
        for bit in (drop, delay, tamper):
            if bit not in (0, 1):
                raise DomainError(f"evidence bit must be 0 or 1, got {bit}")
        self.drop.append(drop)
        self.delay.append(delay)
        self.tamper.append(tamper)

    def __len__(self) -> int:
        return len(self.drop)

    def fused(self) -> np.ndarray:
        """1 wherever any of the three sequences records an attack."""
        return (np.array(self.drop, dtype=int) | np.array(self.delay, dtype=int) | np.array(self.tamper, dtype=int))


def compute_attribute_pairs(log: EvidenceLog, l_w: int) -> list[TrustAttributePair]:
    """Slide a window of ``l_w`` bits over the log in one-bit steps."""
    n = len(log)
    if n < l_w:
        raise InsufficientEvidenceError(f"need {l_w} evidence bits, have {n}")
    lost = np.array(log.drop, dtype=int) | np.array(log.tamper, dtype=int)
    late = np.array(log.delay, dtype=int)
    kernel = np.ones(l_w, dtype=int)
    lost_counts = np.convolve(lost, kernel, mode="valid")
    late_counts = np.convolve(late, kernel, mode="valid")
    return [TrustAttributePair(a / l_w, b / l_w) for a, b in zip(lost_counts, late_counts)]


@dataclass
class FuzzyTrustEvaluator:
    """Bundles rule base, membership sets and window lengths; memoizes pairs."""

    rules: TSKRuleBase = field(default_factory=TSKRuleBase)
    sets: dict = field(default_factory=default_sets)
    l_w: int = 10
    l_w1: int = 10

    def __post_init__(self):
        self._memo: dict[tuple[float, float], float] = {}

    def trust(self, pair: Sequence[float]) -> float:
        key = (float(pair[0]), float(pair[1]))
        value = self._memo.get(key)
        if value is None:
            value = self._memo[key] = infer_trust(self.rules, self.sets, key)
        return value

    def latest_trust(self, log: EvidenceLog) -> float:
        """Trust value of the most recent window only."""
        if len(log) < self.l_w:
            raise InsufficientEvidenceError(f"need {self.l_w} evidence bits, have {len(log)}")
        drop = list(log.drop)[-self.l_w :]
        tamper = list(log.tamper)[-self.l_w :]
        delay = list(log.delay)[-self.l_w :]
        lost = sum(d | t for d, t in zip(drop, tamper))
        return self.trust((lost / self.l_w, sum(delay) / self.l_w))

    def series(self, log: EvidenceLog) -> np.ndarray:
        return evaluate_trust_series(log, self.rules, self.sets, self.l_w, self.l_w1, evaluator=self)


def evaluate_trust_series(
    log: EvidenceLog,
    rules: TSKRuleBase,
    sets,
    l_w: int = 10,
    l_w1: int = 10,
    evaluator: FuzzyTrustEvaluator | None = None,
) -> np.ndarray:
    """The ``l_w1`` most recent trust values of ``log``, oldest first."""
    need = l_w + l_w1 - 1
    if len(log) < need:
        raise InsufficientEvidenceError(f"need {need} evidence bits for a trust vector, have {len(log)}")
    pairs = compute_attribute_pairs(log, l_w)[-l_w1:]
    if evaluator is not None:
        return np.array([evaluator.trust(p) for p in pairs])
    return np.array([infer_trust(rules, sets, p) for p in pairs])

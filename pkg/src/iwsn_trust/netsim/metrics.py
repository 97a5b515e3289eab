"""Per-round counters and run summaries."""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Optional, Sequence

from ..errors import InsufficientDataError

METRIC_COLUMNS = (
    "round",
    "heads",
    "attacks_drop",
    "attacks_delay",
    "det_tp",
    "det_total_malicious",
    "det_fp",
    "det_total_benign",
    "delivered",
    "alive_benign",
    "energy_total",
)


@dataclass
class RoundMetrics:
    round: int
    heads: int = 0
    attacks_drop: int = 0
    attacks_delay: int = 0
    det_tp: int = 0
    det_total_malicious: int = 0
    det_fp: int = 0
    det_total_benign: int = 0
    delivered: int = 0
    alive_benign: int = 0
    energy_total: float = 0.0

    def row(self) -> list:
        return [getattr(self, c) for c in METRIC_COLUMNS]

    @classmethod
    def from_row(cls, row: dict) -> "RoundMetrics":
        kw = {}
        for f in fields(cls):
            raw = row[f.name]
            kw[f.name] = float(raw) if f.name == "energy_total" else int(raw)
        return cls(**kw)


SUMMARY_FIELDS = (
    "rounds",
    "detection_rate",
    "false_positive_rate",
    "det_tp",
    "det_total_malicious",
    "det_fp",
    "det_total_benign",
    "attacks_drop",
    "attacks_delay",
    "attacks_total",
    "lifetime",
    "lifetime_censored",
    "throughput",
)


def _ratio(num: int, den: int) -> Optional[float]:
    return num / den if den else None


def summarize_metrics(series: Sequence[RoundMetrics], n_benign: Optional[int] = None) -> dict:
    """Detection rate, FPR, attack totals, lifetime and throughput over a run.

    Lifetime is the number of rounds survived by the first benign node to
    die; if none dies it is the horizon and ``lifetime_censored`` is set.
    """
    if not series:
        raise InsufficientDataError("cannot summarize an empty metrics series")
    if n_benign is None:
        n_benign = series[0].alive_benign
    tp = sum(m.det_tp for m in series)
    tot_m = sum(m.det_total_malicious for m in series)
    fp = sum(m.det_fp for m in series)
    tot_b = sum(m.det_total_benign for m in series)
    drop = sum(m.attacks_drop for m in series)
    delay = sum(m.attacks_delay for m in series)

    lifetime, censored = len(series), True
    for i, m in enumerate(series):
        if m.alive_benign < n_benign:
            lifetime, censored = i + 1, False
            break

    return {
        "rounds": len(series),
        "detection_rate": _ratio(tp, tot_m),
        "false_positive_rate": _ratio(fp, tot_b),
        "det_tp": tp,
        "det_total_malicious": tot_m,
        "det_fp": fp,
        "det_total_benign": tot_b,
        "attacks_drop": drop,
        "attacks_delay": delay,
        "attacks_total": drop + delay,
        "lifetime": lifetime,
        "lifetime_censored": censored,
        "throughput": sum(m.delivered for m in series),
    }

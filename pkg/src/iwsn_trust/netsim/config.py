"""Simulation parameters. Defaults follow the published parameter table."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields

from ..errors import ConfigError


@dataclass
class SimConfig:
    field_width: float = 100.0
    field_height: float = 100.0
    n_nodes: int = 100
    radius: float = 25.0
    p_head: float = 0.07
    p_attack: float = 0.1
    tier_shares: tuple = (0.3, 0.4, 0.3)
    malicious_pct: float = 0.0
    p_bad: float = 0.1
    packet_bits: int = 3000
    control_bits: int = 300
    initial_energy: float = 1.3
    l_w: int = 10
    l_w1: int = 10
    l_w2: int = 4
    alpha: float = 0.5
    beta: float = 0.5
    lower_scale: float = 0.8
    warmup_rounds: int = 50
    rounds: int = 300
    seed: int = 1
    trust_enabled: bool = True
    channel_mode: str = "node"
    per_node_models: bool = False
    evidence_prefill: bool = True
    initial_dataset_size: int = 320
    codec_epochs: int = 500
    codec_update_epochs: int = 50
    redemption_epochs: int = 300
    redemption_update_epochs: int = 50
    e_elec: float = 50e-9
    eps_fs: float = 10e-12
    eps_mp: float = 0.0013e-12
    trace_decisions: bool = False

    @property
    def area(self) -> float:
        return self.field_width * self.field_height

    @property
    def eligibility_window(self) -> int:
        return math.ceil(1.0 / self.p_head)

    @property
    def evidence_max_len(self) -> int:
        return 2 * (self.l_w + self.l_w1)

    def validate(self) -> "SimConfig":
        for name in ("p_head", "p_attack", "p_bad", "alpha", "beta"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {value}")
        if not 0.0 < self.p_head < 1.0:
            raise ConfigError(f"p_head must lie in (0, 1), got {self.p_head}")
        if not 0.0 <= self.malicious_pct <= 100.0:
            raise ConfigError(f"malicious_pct must lie in [0, 100], got {self.malicious_pct}")
        if len(self.tier_shares) != 3 or any(s < 0 for s in self.tier_shares):
            raise ConfigError(f"tier_shares must be three nonnegative numbers, got {self.tier_shares}")
        if abs(sum(self.tier_shares) - 1.0) > 1e-9:
            raise ConfigError(f"tier_shares must sum to 1, got {sum(self.tier_shares)}")
        if not 0.0 < self.lower_scale <= 1.0:
            raise ConfigError(f"lower_scale must lie in (0, 1], got {self.lower_scale}")
        if self.channel_mode not in ("node", "link"):
            raise ConfigError(f"channel_mode must be 'node' or 'link', got {self.channel_mode!r}")
        for name in ("n_nodes", "l_w", "l_w1", "l_w2", "rounds", "packet_bits", "control_bits"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.l_w2 > self.l_w1:
            raise ConfigError("l_w2 cannot exceed l_w1")
        if self.warmup_rounds < 0 or self.warmup_rounds >= self.rounds:
            raise ConfigError(f"warmup_rounds must lie in [0, rounds), got {self.warmup_rounds}")
        for name in ("field_width", "field_height", "initial_energy"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.radius < 0:
            raise ConfigError("radius must be nonnegative")
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["tier_shares"] = list(self.tier_shares)
        return d

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]

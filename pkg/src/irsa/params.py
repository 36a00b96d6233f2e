"""System-level parameter bundle shared by the CLI and the simulators."""
from __future__ import annotations

from dataclasses import dataclass

from .errors import ZeroSlots
from .slot_models import PhyFailureParams


def derive_slots(latency_budget: float, symbol_rate: float, n_pilots: int, n_payload: int) -> int:
    """Slots per frame under a latency budget (seconds) and symbol rate.

    floor(latency_budget * symbol_rate / (2 * (n_pilots + n_payload))).
    """
    if latency_budget <= 0 or symbol_rate <= 0 or n_pilots <= 0 or n_payload <= 0:
        raise ValueError("all slot-budget inputs must be positive")
    n = int(latency_budget * symbol_rate / (2.0 * (n_pilots + n_payload)))
    if n < 1:
        raise ZeroSlots(
            f"latency budget {latency_budget}s at {symbol_rate} sym/s leaves no slot"
        )
    return n


@dataclass(frozen=True)
class SystemParams:
    """PHY/MAC scalars; n_slots is derived from the budget when omitted."""

    antennas: int = 256
    pilots: int = 64
    payload_symbols: int = 256
    correction_capability: int = 10
    latency_budget: float = 0.05
    symbol_rate: float = 1e6
    n_slots: int | None = None
    noise_variance: float = 0.01  # per-antenna SNR 20 dB at unit signal power

    def __post_init__(self):
        if self.antennas < 1 or self.pilots < 1 or self.payload_symbols < 1:
            raise ValueError("antennas, pilots and payload_symbols must be >= 1")
        if not 0 <= self.correction_capability <= self.payload_symbols:
            raise ValueError("correction_capability must lie in [0, payload_symbols]")
        if self.noise_variance < 0:
            raise ValueError("noise_variance must be >= 0")
        if self.n_slots is None:
            object.__setattr__(
                self,
                "n_slots",
                derive_slots(
                    self.latency_budget, self.symbol_rate, self.pilots, self.payload_symbols
                ),
            )
        elif self.n_slots < 1:
            raise ValueError("n_slots must be >= 1")

    def phy_failure_params(self) -> PhyFailureParams:
        return PhyFailureParams(
            antennas=self.antennas,
            payload_symbols=self.payload_symbols,
            correction_capability=self.correction_capability,
            pilots=self.pilots,
        )

    def to_dict(self) -> dict:
        return {
            "antennas": self.antennas,
            "pilots": self.pilots,
            "payload_symbols": self.payload_symbols,
            "correction_capability": self.correction_capability,
            "latency_budget": self.latency_budget,
            "symbol_rate": self.symbol_rate,
            "n_slots": self.n_slots,
            "noise_variance": self.noise_variance,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SystemParams":
        return cls(**data)

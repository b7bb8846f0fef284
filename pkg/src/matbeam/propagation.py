"""Free-space loss and link-budget arithmetic (dB domain)."""

from __future__ import annotations

import math
from dataclasses import dataclass

SPEED_OF_LIGHT = 299_792_458.0

_FRIIS_CONST = 20.0 * math.log10(4.0 * math.pi / SPEED_OF_LIGHT)


def fspl(f_c: float, d: float) -> float:
    """Friis free-space path loss in dB for `f_c` GHz over `d` metres."""
    if not f_c > 0:
        raise ValueError(f"frequency must be positive, got {f_c}")
    if not d > 0:
        raise ValueError(f"distance must be positive, got {d}")
    return 20.0 * math.log10(d) + 20.0 * math.log10(f_c * 1e9) + _FRIIS_CONST


def overall_pl(fspl_db: float, rl_db: float) -> float:
    return fspl_db + rl_db


@dataclass(frozen=True)
class LinkBudget:
    p_tx: float = 30.0
    tx_gain: float = 0.0
    rx_gain: float = 0.0
    f_c: float = 100.0

    def __post_init__(self):
        if not self.f_c > 0:
            raise ValueError(f"frequency must be positive, got {self.f_c}")


def received_power(budget: LinkBudget, pl: float) -> float:
    """Received power in dBm after a path loss of `pl` dB."""
    return budget.p_tx + budget.tx_gain + budget.rx_gain - pl

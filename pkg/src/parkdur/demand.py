"""Parking-generation-rate calculators.

The static model sums rate x area over land uses. The extended model
divides each term by turnover and occupancy and scales the total by global
level-of-service, price-impact and vehicle-growth coefficients. Results are
raw reals; callers round to whole spaces. Sums are evaluated exactly in
rational arithmetic and rounded once, so the extended model with unit
coefficients reproduces the static model bit-for-bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction as Q


@dataclass(frozen=True)
class LandUseEntry:
    a: float          # spaces per unit area
    R: float          # building area, m^2
    mu: float = 1.0   # average turnover rate
    gamma: float = 1.0  # occupancy, (0, 1]

    def __post_init__(self):
        for name in ("a", "R", "mu", "gamma"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.a < 0 or self.R < 0:
            raise ValueError("generation rate and area must be nonnegative")
        if self.mu <= 0:
            raise ValueError("turnover rate must be positive")
        if not 0 < self.gamma <= 1:
            raise ValueError("occupancy must lie in (0, 1]")


@dataclass(frozen=True)
class DemandCoefficients:
    delta: float = 1.0  # level of service
    L: float = 1.0      # price impact
    beta: float = 1.0   # vehicle growth

    def __post_init__(self):
        for name in ("delta", "L", "beta"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be finite and positive")


def _entries(entries):
    out = [e if isinstance(e, LandUseEntry) else LandUseEntry(*e) for e in entries]
    if not out:
        raise ValueError("at least one land-use entry is required")
    return out


def demand_static(entries) -> float:
    """Sum of a_i * R_i. Entries may be LandUseEntry objects or (a, R) pairs."""
    return float(sum(Q(e.a) * Q(e.R) for e in _entries(entries)))


def demand_extended(entries, coeff: DemandCoefficients | None = None) -> float:
    """Sum of a_i R_i / (mu_i gamma_i), times delta * L * beta."""
    coeff = coeff or DemandCoefficients()
    total = sum(Q(e.a) * Q(e.R) / (Q(e.mu) * Q(e.gamma)) for e in _entries(entries))
    return float(total * Q(coeff.delta) * Q(coeff.L) * Q(coeff.beta))


def from_document(doc) -> tuple[list[LandUseEntry], DemandCoefficients]:
    """Parse ``{"entries": [{a, R, mu?, gamma?}, ...], "coefficients": {delta, L, beta}}``."""
    if not isinstance(doc, dict) or not isinstance(doc.get("entries"), list):
        raise ValueError("/entries: list of land-use entries required")
    entries = []
    for i, e in enumerate(doc["entries"]):
        try:
            entries.append(LandUseEntry(float(e["a"]), float(e["R"]),
                                        float(e.get("mu", 1.0)), float(e.get("gamma", 1.0))))
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"/entries/{i}: {exc}") from None
    c = doc.get("coefficients", {})
    try:
        coeff = DemandCoefficients(float(c.get("delta", 1.0)), float(c.get("L", 1.0)),
                                   float(c.get("beta", 1.0)))
    except (TypeError, ValueError, AttributeError) as exc:
        raise ValueError(f"/coefficients: {exc}") from None
    return entries, coeff

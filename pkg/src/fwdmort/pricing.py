"""Survivor bonds and survival-contingent annuities under deterministic rates."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DomainError
from .simulate import PathState, survival

__all__ = ["DiscountCurve", "survivor_bond_price", "annuity_value"]


@dataclass(frozen=True, eq=False)
class DiscountCurve:
    """Piecewise-constant short rate: r(t) = rates[k] on [knots[k], knots[k+1]).

    The last rate extends to infinity.
    """

    knots: np.ndarray
    rates: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.knots, dtype=float)
        r = np.asarray(self.rates, dtype=float)
        if k.ndim != 1 or k.shape != r.shape or len(k) == 0:
            raise DomainError("knots and rates must be equal-length 1-d arrays")
        if k[0] != 0.0 or np.any(np.diff(k) <= 0):
            raise DomainError("knots must start at 0 and increase")
        if not np.all(np.isfinite(r)):
            raise DomainError("rates must be finite")
        object.__setattr__(self, "knots", k)
        object.__setattr__(self, "rates", r)

    @classmethod
    def flat(cls, r: float) -> "DiscountCurve":
        return cls(np.array([0.0]), np.array([r]))

    def integral(self, t: float) -> float:
        """int_0^t r(s) ds, exact."""
        if t < 0:
            raise DomainError("negative time")
        ends = np.append(self.knots[1:], np.inf)
        widths = np.clip(np.minimum(ends, t) - self.knots, 0.0, None)
        return float(np.dot(widths, self.rates))

    def discount(self, t: float, T: float) -> float:
        return float(np.exp(-(self.integral(T) - self.integral(t))))


def survivor_bond_price(state: PathState, curve: DiscountCurve, t: float, T: float, x: float) -> float:
    """exp(-int_t^T r) * G_t(T, x), with ``state`` taken at time t."""
    if abs(state.t - t) > 1e-9:
        raise DomainError(f"state is at t={state.t}, not {t}")
    if T < t:
        raise DomainError("maturity before valuation date")
    return curve.discount(t, T) * survival(state, T, x)


def annuity_value(state: PathState, curve: DiscountCurve, t: float,
                  payment_dates: Sequence[float], x: float) -> float:
    """Sum of survivor-bond prices over the payment dates."""
    return float(sum(survivor_bond_price(state, curve, t, T, x) for T in payment_dates))

"""Monomial class-K-infinity gains ``s -> a * s**p``."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError


@dataclass(frozen=True)
class GainFn:
    coef: float
    power: float = 1.0

    def __post_init__(self):
        if not self.coef >= 0:
            raise InvalidParameterError(f"gain coefficient must be >= 0, got {self.coef}")
        # inverses of s^2-type gains have exponent 1/2, still class K-infinity
        if not self.power > 0:
            raise InvalidParameterError(f"gain exponent must be > 0, got {self.power}")
        object.__setattr__(self, "coef", float(self.coef))
        object.__setattr__(self, "power", float(self.power))

    @classmethod
    def zero(cls) -> "GainFn":
        return cls(0.0, 1.0)

    @classmethod
    def identity(cls) -> "GainFn":
        return cls(1.0, 1.0)

    @property
    def is_zero(self) -> bool:
        return self.coef == 0.0

    @property
    def is_linear(self) -> bool:
        return self.power == 1.0

    def __call__(self, s):
        return self.coef * np.power(s, self.power)

    def inverse(self) -> "GainFn":
        if self.is_zero:
            raise InvalidParameterError("the zero gain is not invertible")
        return GainFn(self.coef ** (-1.0 / self.power), 1.0 / self.power)

    def compose(self, inner: "GainFn") -> "GainFn":
        """``self o inner``: a1 * (a2 s^p2)^p1 = a1 a2^p1 s^(p1 p2)."""
        if self.is_zero or inner.is_zero:
            return GainFn.zero()
        return GainFn(self.coef * inner.coef**self.power, self.power * inner.power)

    def __matmul__(self, inner: "GainFn") -> "GainFn":
        return self.compose(inner)

    def scaled(self, t: float) -> "GainFn":
        return GainFn(self.coef * t, self.power)

    def to_dict(self) -> dict:
        return {"coef": self.coef, "power": self.power}

    @classmethod
    def from_value(cls, data) -> "GainFn":
        """Accept ``0``, a bare coefficient, or ``{coef, power}``."""
        if isinstance(data, (int, float)):
            return cls(float(data), 1.0)
        return cls(float(data["coef"]), float(data.get("power", 1.0)))

    def __str__(self):
        if self.is_zero:
            return "0"
        return f"{self.coef:g}*s" if self.is_linear else f"{self.coef:g}*s^{self.power:g}"

"""Core parameter bundle for the fractional p-energy."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class FractionalParams:
    """Differentiability order s, integrability p, domain dim n, target dim N.

    Energy-only code paths accept any p > 1; operator evaluation
    (pointwise density, weak residual, gradients) requires p >= 2.
    """

    s: float
    p: float
    n: int
    N: int
    sp_minus_n: float = field(init=False)

    def __post_init__(self):
        if not (0.0 < self.s < 1.0):
            raise ValueError(f"s must lie in (0,1), got {self.s}")
        if not (self.p > 1.0):
            raise ValueError(f"p must exceed 1, got {self.p}")
        if self.n not in (1, 2, 3):
            raise ValueError(f"n must be 1, 2 or 3, got {self.n}")
        if self.N < 2:
            raise ValueError(f"N must be >= 2, got {self.N}")
        object.__setattr__(self, "sp_minus_n", self.s * self.p - self.n)

    @property
    def sp(self) -> float:
        return self.s * self.p

    def require_operator_range(self):
        """Operator paths need p >= 2; raise otherwise."""
        if self.p < 2.0:
            raise ValueError(
                f"operator evaluation requires p >= 2, got p={self.p}"
            )

"""Model parameters for the quadratic branching diffusion."""

from __future__ import annotations

from dataclasses import dataclass, replace


@dataclass(frozen=True)
class ModelParams:
    """Parameters of the quadratic branching mechanism plus immigration weight.

    beta  -- time scale, > 0
    theta -- drift sign parameter; > 0 sub-critical, < 0 super-critical
    alpha -- immigration weight, >= 0; alpha = 0 is the Kesten (no
             immigration) case
    """

    beta: float = 1.0
    theta: float = 0.0
    alpha: float = 0.0

    def __post_init__(self) -> None:
        if not self.beta > 0:
            raise ValueError(f"beta must be > 0, got {self.beta}")
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")

    def with_theta(self, theta: float) -> "ModelParams":
        return replace(self, theta=theta)

    def with_alpha(self, alpha: float) -> "ModelParams":
        return replace(self, alpha=alpha)

    def flipped(self) -> "ModelParams":
        """Same parameters with the drift sign reversed."""
        return replace(self, theta=-self.theta)

    def abs_theta(self) -> "ModelParams":
        return self if self.theta >= 0 else self.flipped()

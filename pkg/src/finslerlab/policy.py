"""Numeric policy: every configurable floor, step and tolerance in one record."""

from __future__ import annotations

from dataclasses import dataclass, replace


@dataclass(frozen=True)
class NumericPolicy:
    # preconditions
    zero_direction_floor: float = 1e-12
    degenerate_floor: float = 1e-10
    randers_convexity_margin: float = 0.0  # ||b||_a must stay below 1 - margin
    # cross-checks
    chern_formula_rtol: float = 1e-7
    laplacian_consistency_rtol: float = 1e-8
    # finite differences (test oracles and the delta-Gamma step at curvature order)
    fd_step: float = 1e-4
    # discrete solvers
    eig_residual_rtol: float = 1e-8
    eig_seed: int = 20240

    def with_(self, **kw) -> "NumericPolicy":
        return replace(self, **kw)


DEFAULT_POLICY = NumericPolicy()

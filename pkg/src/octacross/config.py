"""Solver configuration shared by assembly, solvers and the CLI."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from .sh_algebra import SQRT_7_12
from .variety import DEGENERACY_THRESHOLD

__all__ = ["SolveConfig", "parse_p", "PRESETS"]


def parse_p(value) -> float:
    """Accept a number or ``"inf"``."""
    if isinstance(value, str) and value.strip().lower() in {"inf", "infinity", "max"}:
        return math.inf
    p = float(value)
    if not p >= 1:
        raise ValueError(f"p must be >= 1 or inf, got {value!r}")
    return p


@dataclass(frozen=True)
class SolveConfig:
    p: float = 2.0
    epsilon: float = 0.0
    tol_primal: float = 1e-6
    tol_dual: float = 1e-6
    tol_direct: float = 1e-8
    max_iter: int = 20000
    degeneracy_threshold: float = DEGENERACY_THRESHOLD
    resolve_rounds: int = 1
    seed: int = 0
    rho: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "p", parse_p(self.p))
        if not 0.0 <= self.epsilon < SQRT_7_12:
            raise ValueError(
                f"epsilon must lie in [0, sqrt(7/12) = {SQRT_7_12:.6f}), got {self.epsilon}"
            )
        if min(self.tol_primal, self.tol_dual, self.tol_direct) <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.resolve_rounds < 0:
            raise ValueError("resolve_rounds must be >= 0")

    @property
    def direct_applicable(self) -> bool:
        return self.p == 2.0 and self.epsilon == 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["p"] = "inf" if math.isinf(self.p) else self.p
        return d


# headline cases: total variation, Dirichlet, max-norm
PRESETS = {"tv": 1.0, "dirichlet": 2.0, "max": math.inf}

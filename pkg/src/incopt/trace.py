"""Run and grid-search result containers."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np


class Status(str, Enum):
    CONVERGED = "converged"
    STALLED = "stalled"
    DIVERGED = "diverged"


@dataclass
class RunTrace:
    """Per-epoch history of one run.

    Record ``k`` (1-based ``epoch``) describes x_k, the iterate after k epochs;
    ``step_size[k-1]`` is the stepsize that produced it.  ``x0_dist`` etc. hold
    the same metrics at the starting point.
    """

    epoch: np.ndarray
    step_size: np.ndarray
    dist: np.ndarray
    fval: np.ndarray
    moreau_grad_norm: np.ndarray
    status: Status
    epochs: int
    config: dict = field(default_factory=dict)
    x0_dist: float = float("nan")
    x0_fval: float = float("nan")
    x0_moreau: float = float("nan")
    x_final: Optional[np.ndarray] = None
    # True when the run was cut short because reaching the threshold was provably impossible
    certified_stall: bool = False
    # True when the run was cut short because every later iterate provably met the threshold
    certified_success: bool = False

    def __len__(self):
        return len(self.epoch)


@dataclass
class SuccessMap:
    rho_grid: np.ndarray
    mu0_grid: np.ndarray  # in units of 1/m
    cells: np.ndarray  # bool, shape (len(rho_grid), len(mu0_grid))
    final_dist: np.ndarray
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        shape = (len(self.rho_grid), len(self.mu0_grid))
        if self.cells.shape != shape or self.final_dist.shape != shape:
            raise ValueError(f"cell matrix must have shape {shape}")

    def smallest_successful_rho(self):
        rows = np.flatnonzero(self.cells.any(axis=1))
        return float(self.rho_grid[rows[0]]) if rows.size else None

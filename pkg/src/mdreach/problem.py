"""A reachability problem: grid + model + target + objective, with cached pieces."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Optional

import numpy as np

from mdreach.backup import DEFAULT_MEMORY_BUDGET, BackupOperator, TransitionTable, build_transition_table
from mdreach.grid import GridSpec
from mdreach.models import SystemModel, default_dt
from mdreach.targets import TargetSpec, clip_bound, l_vector


@dataclass
class Problem:
    grid: GridSpec
    model: SystemModel
    target: TargetSpec
    kind: str = "mdr"
    lam: float = 0.1
    dt: Optional[float] = None
    table_mode: str = "auto"
    memory_budget: int = field(default=DEFAULT_MEMORY_BUDGET, repr=False)

    def __post_init__(self):
        if self.kind not in ("mr", "mdr", "sdr"):
            raise ValueError(f"unknown problem kind {self.kind!r}")
        if self.kind in ("mdr", "sdr") and self.lam <= 0:
            raise ValueError(f"{self.kind} problems need a positive discount rate")

    @cached_property
    def time_step(self) -> float:
        return float(self.dt) if self.dt is not None else default_dt(self.grid, self.model)

    @cached_property
    def L(self) -> float:
        return clip_bound(self.target, self.grid)

    @cached_property
    def l(self) -> np.ndarray:
        return l_vector(self.target, self.grid)

    @cached_property
    def h(self) -> np.ndarray:
        return self.l - self.L

    @cached_property
    def table(self) -> TransitionTable:
        lam = 0.0 if self.kind == "mr" else self.lam
        if lam == 0:
            # gamma = 1 is expected for the undiscounted problem
            return TransitionTable(self.grid, self.model, self.time_step, 0.0,
                                   precompute=self.table_mode != "on_the_fly")
        return build_transition_table(self.grid, self.model, self.time_step, lam,
                                      memory_budget=self.memory_budget, mode=self.table_mode)

    @property
    def gamma(self) -> float:
        return self.table.gamma

    @cached_property
    def reward(self) -> np.ndarray:
        if self.kind == "mdr":
            return self.h
        if self.kind == "mr":
            return self.l
        return self.time_step * self.l

    @cached_property
    def operator(self) -> BackupOperator:
        return BackupOperator(self.kind, self.table, self.reward, clip_bound=self.L)

    def with_grid(self, grid: GridSpec) -> "Problem":
        return replace(self, grid=grid)

    def with_model(self, model: SystemModel) -> "Problem":
        return replace(self, model=model)

    def with_kind(self, kind: str) -> "Problem":
        return replace(self, kind=kind)

    def metadata(self) -> dict:
        return {
            "kind": self.kind,
            "model": self.model.name,
            "model_params": dict(self.model.params),
            "lambda": self.lam if self.kind != "mr" else 0.0,
            "gamma": self.gamma,
            "dt": self.time_step,
            "L": self.L,
            "grid": self.grid.header(),
            "grid_hash": self.grid.digest(),
            "table_mode": "table" if self.table.precomputed else "on_the_fly",
        }

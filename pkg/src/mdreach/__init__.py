"""Reachable sets as fixed points of a discounted, contracting backup."""

from mdreach.backup import BackupOperator, TransitionTable, build_transition_table, mdr_backup, mr_backup, policy_backup
from mdreach.grid import GridSpec, interpolate, interp_weights, make_grid
from mdreach.models import SystemModel, double_integrator, make_model, pursuit_evasion
from mdreach.problem import Problem
from mdreach.solver import SolverConfig, multigrid_solve, policy_iteration, value_iteration, warm_start_solve
from mdreach.targets import BoxComplement, Cylinder, NodeValues

__version__ = "0.1.0"

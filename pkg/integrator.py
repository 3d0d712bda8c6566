"""
Lagrange multiplier time stepper for gradient flows x' = -D grad V(x).

The quadratic part of V is treated by the midpoint rule, E by the scalar
multiplier, so every step is one factored linear solve plus one root of the
general multiplier equation. V never increases from step to step.
"""

import csv
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np

import config
from errors import ConfigurationError, RootFailureError, StationaryPointError
from multiplier_eq import (
    MultiplierEquation,
    Splitting,
    StepMatrix,
    general_bracket,
    perturb_splitting,
    small_step_condition,
    solve_eta,
)

# Relative size of <grad E, D grad V> below which the splitting is perturbed
ORTHOGONALITY_TOL = 1e-12


class MidpointRule(str, Enum):
    CURRENT = "current"            # x* = x_k
    EXTRAPOLATED = "extrapolated"  # x* = (3 x_k - x_{k-1}) / 2


@dataclass(frozen=True)
class FlowState:
    """
    One point of a flow trajectory.

    Each step returns a new state whose eta_history is the previous one
    plus the new multiplier; earlier states are never modified.
    """
    x_k: np.ndarray
    h: float
    k: int = 0
    x_prev: Optional[np.ndarray] = None
    eta_history: Tuple[float, ...] = ()
    perturbed: bool = False
    dissipated: bool = True

    def midpoint(self, rule: MidpointRule) -> np.ndarray:
        # First extrapolated step has no x_prev and uses the current rule
        if rule is MidpointRule.EXTRAPOLATED and self.x_prev is not None:
            return 1.5 * self.x_k - 0.5 * self.x_prev
        return self.x_k


def dissipates(V_next: float, V_k: float, slack: float = config.DISSIPATION_SLACK) -> bool:
    """V_next <= V_k up to slack * |V_k| + 1e-12"""
    return V_next <= V_k + slack * abs(V_k) + 1e-12


def _solve_general(
    splitting: Splitting,
    state: FlowState,
    x_mid: np.ndarray,
    tol: float,
    step_matrix: Optional[StepMatrix],
):
    equation = MultiplierEquation.general(splitting, state.x_k, state.h, x_mid=x_mid, step_matrix=step_matrix)
    eta = solve_eta(equation, general_bracket(equation, tol), tol)
    return equation.point(eta), eta


def flow_step(
    splitting: Splitting,
    state: FlowState,
    rule: MidpointRule = MidpointRule.CURRENT,
    tol: float = config.ETA_TOL,
    step_matrix: Optional[StepMatrix] = None,
    perturbation: float = config.PERTURBATION_EPS,
) -> FlowState:
    """
    x_{k+1} = p_k - h eta_k q_k with eta_k the root of the general equation nearest 1.

    When grad E(x*) = 0 the equation is degenerate and the step is the
    implicit midpoint step x_{k+1} = p_k with eta_k = 1. When grad E(x_k) is
    orthogonal to D grad V(x_k) the splitting is perturbed by epsilon, which
    is raised tenfold (up to 1) while the perturbed equation has no root.

    Raises:
        StationaryPointError: grad V(x_k) = 0
        NoBracketError: no sign change of the general equation at a state
            that is not orthogonal
        RootFailureError: the perturbed equation has no root at epsilon = 1
        SingularMatrixError: I + (h/2) D Q cannot be factored
    """
    x_k, h = state.x_k, state.h
    grad_V = splitting.gradient(x_k)
    if not np.any(grad_V):
        raise StationaryPointError(f"grad V vanishes at step {state.k}")

    if step_matrix is None:
        step_matrix = StepMatrix(splitting, h)

    x_mid = state.midpoint(rule)
    perturbed = False

    if not np.any(splitting.E_gradient(x_mid)):
        x_next, eta = step_matrix.p(x_k), 1.0
    else:
        grad_E = splitting.E_gradient(x_k)
        D_grad_V = splitting.D @ grad_V
        overlap = abs(float(grad_E @ D_grad_V))
        if overlap > ORTHOGONALITY_TOL * np.linalg.norm(grad_E) * np.linalg.norm(D_grad_V):
            solved = _solve_general(splitting, state, x_mid, tol, step_matrix)
        else:
            perturbed = True
            epsilon, solved = perturbation, None
            while solved is None:
                try:
                    solved = _solve_general(perturb_splitting(splitting, epsilon), state, x_mid, tol, None)
                except RootFailureError:
                    if epsilon >= 1.0:
                        raise
                    epsilon = min(1.0, 10.0 * epsilon)
        x_next, eta = solved

    return FlowState(
        x_k=x_next,
        h=h,
        k=state.k + 1,
        x_prev=x_k,
        eta_history=(*state.eta_history, eta),
        perturbed=perturbed,
        dissipated=dissipates(splitting.value(x_next), splitting.value(x_k)),
    )


# ============================================================================
# TRAJECTORIES
# ============================================================================

@dataclass(frozen=True)
class FlowRecord:
    k: int
    V: float
    grad_norm: float
    eta: float  # multiplier of the step leaving x_k; nan on the last record
    perturbed: bool = False


@dataclass
class FlowTrajectory:
    """
    small_step records h (rqmin(Q) - L_E) > -2 rqmin(D^-1) for the run's h:
    True or False when E_lipschitz is known, None otherwise. Steps still run
    when it is False; a root of the general equation is then not guaranteed.
    """
    records: List[FlowRecord]
    x_final: np.ndarray
    status: str  # "completed" | "stationary"
    rule: MidpointRule = MidpointRule.CURRENT
    h: float = 0.0
    small_step: Optional[bool] = None

    @property
    def values(self) -> np.ndarray:
        return np.array([r.V for r in self.records])

    @property
    def etas(self) -> np.ndarray:
        return np.array([r.eta for r in self.records if not math.isnan(r.eta)])

    @property
    def perturbed_steps(self) -> int:
        return sum(r.perturbed for r in self.records)

    @property
    def dissipation_violations(self) -> int:
        V = self.values
        return sum(not dissipates(V[i + 1], V[i]) for i in range(len(V) - 1))

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["k", "V", "grad_norm", "eta"])
            for r in self.records:
                writer.writerow([r.k, f"{r.V:.17g}", f"{r.grad_norm:.17g}", f"{r.eta:.17g}"])
        return path


def flow_run(
    splitting: Splitting,
    x0: np.ndarray,
    h: float,
    steps: int,
    rule: MidpointRule = MidpointRule.CURRENT,
    tol: float = config.ETA_TOL,
    perturbation: float = config.PERTURBATION_EPS,
) -> FlowTrajectory:
    """
    Run flow_step `steps` times from x0, stopping early at a stationary point.

    The step matrix is factored once and reused by every unperturbed step.
    """
    if steps < 1:
        raise ConfigurationError(f"steps must be positive: {steps}")

    rule = MidpointRule(rule)
    small_step = small_step_condition(splitting, h)
    step_matrix = StepMatrix(splitting, h)
    state = FlowState(x_k=np.asarray(x0, dtype=float), h=float(h))
    records: List[FlowRecord] = []
    status = "completed"

    for _ in range(steps):
        V_k = splitting.value(state.x_k)
        grad_norm = float(np.linalg.norm(splitting.gradient(state.x_k)))
        try:
            next_state = flow_step(splitting, state, rule, tol, step_matrix, perturbation)
        except StationaryPointError:
            status = "stationary"
            break
        records.append(FlowRecord(state.k, V_k, grad_norm, next_state.eta_history[-1], next_state.perturbed))
        state = next_state

    records.append(FlowRecord(
        state.k,
        splitting.value(state.x_k),
        float(np.linalg.norm(splitting.gradient(state.x_k))),
        math.nan,
    ))
    return FlowTrajectory(
        records=records,
        x_final=state.x_k,
        status=status,
        rule=rule,
        h=float(h),
        small_step=small_step,
    )

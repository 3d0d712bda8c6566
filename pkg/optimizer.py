"""
Optimization methods built on the multiplier equation.

exact_lm      Lagrange multiplier steepest descent, exact root of F_h each step
backtracking  eta shrinks from 1 by alpha until F_h(eta) <= 0
adaptive      backtracking with h_{k+1} = h_k eta_k / eta_star
fixed_gd      x - h grad f (baseline)
armijo        x - h grad f with an Armijo line search (baseline)
"""

import csv
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterator, List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, computed_field, model_validator

import config
from errors import (
    ConfigurationError,
    LineSearchError,
    MissingConstantError,
    RootFailureError,
    StalledError,
    StationaryPointError,
)
from integrator import dissipates
from multiplier_eq import MultiplierEquation, eta_bracket, solve_eta
from objective import ObjectiveFunction


class Method(str, Enum):
    EXACT_LM = "exact_lm"
    BACKTRACKING = "backtracking"
    ADAPTIVE = "adaptive"
    FIXED_GD = "fixed_gd"
    ARMIJO = "armijo"


LM_METHODS = (Method.EXACT_LM, Method.BACKTRACKING, Method.ADAPTIVE)
DESCENT_METHODS = LM_METHODS + (Method.ARMIJO,)


class RunConfig(BaseModel):
    method: Method
    h0: Optional[float] = Field(default=None, gt=0)  # None: 1/L (exact_lm, fixed_gd only)
    alpha: float = Field(default=config.ALPHA, gt=0, lt=1)
    eta_star: float = Field(default=config.ETA_STAR, gt=0, lt=1)
    eps: float = Field(default=config.EPS, gt=0)
    c_armijo: float = Field(default=1e-4, gt=0, lt=1)
    max_iter: int = Field(default=config.MAX_ITER, gt=0)
    armijo_h_init: float = Field(default=10.0, gt=0)
    tol: float = Field(default=config.ETA_TOL, gt=0)
    seed: Optional[int] = None  # overrides the experiment seed for x0

    @model_validator(mode="after")
    def _needs_h0(self):
        if self.h0 is None and self.method in (Method.BACKTRACKING, Method.ADAPTIVE):
            raise ValueError(f"{self.method.value} needs h0")
        return self

    @computed_field
    @property
    def label(self) -> str:
        if self.method is Method.ARMIJO:
            return f"armijo_c={self.c_armijo:g}"
        h = "1/L" if self.h0 is None else f"{self.h0:g}"
        if self.method is Method.ADAPTIVE:
            return f"adaptive_h0={h}"
        return f"{self.method.value}_h={h}"

    @computed_field
    @property
    def flags(self) -> List[str]:
        """Hypotheses of the adaptive rate theorems this configuration violates"""
        if self.method is not Method.ADAPTIVE:
            return []
        flags = []
        if self.eta_star >= self.alpha:
            flags.append("eta_star >= alpha")
        if self.eta_star < 0.5:
            flags.append("eta_star < 1/2")
        return flags

    def step_size(self, f: ObjectiveFunction) -> float:
        """h0, or 1/L when h0 is unset"""
        if self.h0 is not None:
            return self.h0
        if self.method is Method.ARMIJO:
            return self.armijo_h_init
        if not f.lipschitz_L:
            raise MissingConstantError(f"{self.method.value} with h0=None needs lipschitz_L")
        return 1.0 / f.lipschitz_L


class StepRecord(BaseModel):
    """
    State at x_k and the step taken from it.

    eta is nan for the baselines and on the last record, which has no step.
    effective_step is h_k * eta_k for the multiplier methods and the accepted
    h for the baselines.
    stalled marks a last record reached because no trial step could resolve
    a decrease of f.
    """
    k: int
    f: float
    grad_norm: float
    eta: float = math.nan
    h: float = math.nan
    backtracks: int = 0
    effective_step: float = math.nan
    stalled: bool = False


# ============================================================================
# STEP RULES
# ============================================================================

def _special_equation(f: ObjectiveFunction, x_k: np.ndarray, h: float) -> MultiplierEquation:
    equation = MultiplierEquation.special(f, x_k, h)
    if equation.degenerate:
        raise StationaryPointError("grad f vanishes at x_k")
    return equation


def exact_lm_step(f: ObjectiveFunction, x_k: np.ndarray, h: float, tol: float = config.ETA_TOL) -> Tuple[np.ndarray, float]:
    """
    x_{k+1} = x_k - eta_k h grad f(x_k) with eta_k the nontrivial root of F_h.

    The bracket is the tightest one the objective's class admits (convex,
    PL, smooth), falling back to expansion when none applies.
    """
    equation = _special_equation(f, x_k, h)
    bracket = eta_bracket(equation, f.lipschitz_L, f.pl_mu, f.convex)
    eta = solve_eta(equation, bracket, tol)
    return equation.point(eta), eta


def backtracking_step(
    f: ObjectiveFunction,
    x_k: np.ndarray,
    h: float,
    alpha: float,
    tol: float = config.ETA_TOL,
) -> Tuple[np.ndarray, float, int]:
    """
    Start at eta = 1 and multiply by alpha while F_h(eta) > 0.

    Raises:
        StalledError: the cap was hit with F_h within tol * (1 + |f(x_k)|)
            of zero, i.e. the decrease is below the resolution of f
        RootFailureError: the cap was hit with F_h clearly positive
    """
    equation = _special_equation(f, x_k, h)
    eta, backtracks = 1.0, 0
    while (F := equation(eta)) > 0:
        if backtracks == config.MAX_BACKTRACKS:
            if F <= tol * equation.scale:
                raise StalledError(f"F_h = {F:.3e} is at the resolution of f = {equation.value_k:.6g}")
            raise RootFailureError(f"F_h stayed positive after {config.MAX_BACKTRACKS} backtracks")
        eta *= alpha
        backtracks += 1
    return equation.point(eta), eta, backtracks


def adaptive_step(
    f: ObjectiveFunction,
    x_k: np.ndarray,
    h_k: float,
    alpha: float,
    eta_star: float,
    tol: float = config.ETA_TOL,
) -> Tuple[np.ndarray, float, float, int]:
    """Backtracking step followed by h_{k+1} = h_k eta_k / eta_star"""
    x_next, eta, backtracks = backtracking_step(f, x_k, h_k, alpha, tol)
    return x_next, eta, h_k * eta / eta_star, backtracks


def fixed_gd_step(f: ObjectiveFunction, x_k: np.ndarray, h: float) -> np.ndarray:
    return x_k - h * f.gradient(x_k)


def armijo_step(
    f: ObjectiveFunction,
    x_k: np.ndarray,
    h_init: float,
    c: float,
    alpha: float,
    tol: float = config.ETA_TOL,
) -> Tuple[np.ndarray, float, int]:
    """
    Shrink h from h_init by alpha until f(x - h g) - f(x) <= -c h ||g||^2.

    Raises StalledError when the cap is hit with the change of f within
    tol * (1 + |f(x_k)|) of zero, LineSearchError otherwise.
    """
    g = f.gradient(x_k)
    g_sq = float(g @ g)
    if g_sq == 0:
        raise StationaryPointError("grad f vanishes at x_k")

    f_k = f.value(x_k)
    h, backtracks = h_init, 0
    while (change := f.change(x_k, -h * g, f_k)) > -c * h * g_sq:
        if backtracks == config.MAX_BACKTRACKS:
            if change <= tol * (1.0 + abs(f_k)):
                raise StalledError(f"f changes by {change:.3e}, at the resolution of f = {f_k:.6g}")
            raise LineSearchError(f"Armijo condition still failing after {config.MAX_BACKTRACKS} backtracks")
        h *= alpha
        backtracks += 1
    return x_k - h * g, h, backtracks


# ============================================================================
# OUTER LOOP
# ============================================================================

@dataclass
class Trajectory:
    config: RunConfig
    records: List[StepRecord]
    x_final: np.ndarray

    @property
    def iterations(self) -> int:
        return len(self.records) - 1

    @property
    def steps(self) -> List[StepRecord]:
        """Records that took a step (all but the last)"""
        return self.records[:-1]

    @property
    def status(self) -> str:
        last = self.records[-1]
        if not math.isfinite(last.f) or not math.isfinite(last.grad_norm):
            return "diverged"
        if last.grad_norm == 0:
            return "stationary"
        if last.grad_norm < self.config.eps:
            return "converged"
        if last.stalled:
            return "stalled"
        return "max_iter"

    @property
    def values(self) -> np.ndarray:
        return np.array([r.f for r in self.records])

    @property
    def grad_norms(self) -> np.ndarray:
        return np.array([r.grad_norm for r in self.records])

    @property
    def etas(self) -> np.ndarray:
        return np.array([r.eta for r in self.steps])

    @property
    def step_sizes(self) -> np.ndarray:
        return np.array([r.h for r in self.steps])

    @property
    def backtracks(self) -> np.ndarray:
        return np.array([r.backtracks for r in self.steps], dtype=int)

    @property
    def avg_step(self) -> float:
        steps = self.steps
        return float(np.mean([r.effective_step for r in steps])) if steps else math.nan

    @property
    def avg_backtracks(self) -> float:
        steps = self.steps
        return float(np.mean(self.backtracks)) if steps else math.nan

    @property
    def dissipation_violations(self) -> int:
        f = self.values
        return sum(not dissipates(f[i + 1], f[i]) for i in range(len(f) - 1))

    def to_csv(self, path: Union[str, Path], f_star: Optional[float] = None) -> Path:
        """k,f,f_gap,grad_norm,eta,h,backtracks; one row per record, k = 0 included"""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["k", "f", "f_gap", "grad_norm", "eta", "h", "backtracks"])
            for r in self.records:
                gap = r.f - f_star if f_star is not None else math.nan
                writer.writerow([
                    r.k,
                    f"{r.f:.17g}",
                    f"{gap:.17g}",
                    f"{r.grad_norm:.17g}",
                    f"{r.eta:.17g}",
                    f"{r.h:.17g}",
                    r.backtracks,
                ])
        return path


def iterate(f: ObjectiveFunction, x0: np.ndarray, run: RunConfig) -> Iterator[Tuple[StepRecord, np.ndarray]]:
    """
    Run the configured method, yielding (record, x_k) for k = 0, 1, ...

    Stops after the record with ||grad f(x_k)|| < eps, a non-finite value,
    k = max_iter, or a line search stalled at the resolution of f; that last
    record carries no step.
    """
    x = np.array(x0, dtype=float)
    h = run.step_size(f)
    method = run.method

    for k in range(run.max_iter + 1):
        f_k = f.value(x)
        g = f.gradient(x)
        grad_norm = float(np.linalg.norm(g))

        done = grad_norm < run.eps or k == run.max_iter
        if done or not math.isfinite(f_k) or not math.isfinite(grad_norm):
            h_last = math.nan if method is Method.ARMIJO else h
            yield StepRecord(k=k, f=f_k, grad_norm=grad_norm, h=h_last), x
            return

        try:
            if method is Method.EXACT_LM:
                x_next, eta = exact_lm_step(f, x, h, run.tol)
                record = StepRecord(k=k, f=f_k, grad_norm=grad_norm, eta=eta, h=h, effective_step=h * eta)
            elif method is Method.BACKTRACKING:
                x_next, eta, n = backtracking_step(f, x, h, run.alpha, run.tol)
                record = StepRecord(k=k, f=f_k, grad_norm=grad_norm, eta=eta, h=h, backtracks=n, effective_step=h * eta)
            elif method is Method.ADAPTIVE:
                x_next, eta, h_next, n = adaptive_step(f, x, h, run.alpha, run.eta_star, run.tol)
                record = StepRecord(k=k, f=f_k, grad_norm=grad_norm, eta=eta, h=h, backtracks=n, effective_step=h * eta)
                h = h_next
            elif method is Method.FIXED_GD:
                x_next = fixed_gd_step(f, x, h)
                record = StepRecord(k=k, f=f_k, grad_norm=grad_norm, h=h, effective_step=h)
            elif method is Method.ARMIJO:
                x_next, h_acc, n = armijo_step(f, x, run.armijo_h_init, run.c_armijo, run.alpha, run.tol)
                record = StepRecord(k=k, f=f_k, grad_norm=grad_norm, h=h_acc, backtracks=n, effective_step=h_acc)
            else:
                raise ConfigurationError(f"Unknown method: {method}")
        except StalledError:
            h_last = math.nan if method is Method.ARMIJO else h
            yield StepRecord(k=k, f=f_k, grad_norm=grad_norm, h=h_last, stalled=True), x
            return

        yield record, x
        x = x_next


def optimize(f: ObjectiveFunction, x0: np.ndarray, run: RunConfig) -> Trajectory:
    """
    Collect iterate() into a Trajectory.

    Reaching max_iter is not an error; the trajectory status says so.
    """
    records: List[StepRecord] = []
    x_final = np.array(x0, dtype=float)
    for record, x in iterate(f, x0, run):
        records.append(record)
        x_final = x
    return Trajectory(config=run, records=records, x_final=x_final)

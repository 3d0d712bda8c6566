"""
Rate envelopes for the multiplier methods and certification of trajectories
against them.
"""

import math
from dataclasses import asdict, dataclass
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, computed_field

import config
from errors import ConfigurationError, MissingConstantError
from objective import ObjectiveFunction
from optimizer import Method, RunConfig, Trajectory, optimize


class EnvelopeKind(str, Enum):
    GRAD_MIN = "grad_min"      # exact_lm, min gradient norm
    CONVEX_1K = "convex_1k"    # exact_lm, convex, h <= 2/L
    PL_EXP = "pl_exp"          # exact_lm, PL
    BT_GRAD = "bt_grad"        # backtracking, min gradient norm
    BT_PL = "bt_pl"            # backtracking, PL
    AD_CONVEX = "ad_convex"    # adaptive, convex
    AD_PL = "ad_pl"            # adaptive, PL


GRADIENT_KINDS = (EnvelopeKind.GRAD_MIN, EnvelopeKind.BT_GRAD)


@dataclass(frozen=True)
class RateEnvelope:
    kind: EnvelopeKind
    L: float
    mu: Optional[float] = None
    h: Optional[float] = None
    alpha: Optional[float] = None
    eta_star: Optional[float] = None
    f_gap0: Optional[float] = None
    dist_sq: Optional[float] = None

    @property
    def bounds_gradient(self) -> bool:
        return self.kind in GRADIENT_KINDS

    def constants(self) -> Dict[str, Optional[float]]:
        data = asdict(self)
        data.pop("kind")
        return data


def _need(env: RateEnvelope, *names: str) -> None:
    missing = [n for n in names if getattr(env, n) is None]
    if missing:
        raise MissingConstantError(f"{env.kind.value} envelope needs {', '.join(missing)}")


def envelope_value(env: RateEnvelope, k: int) -> float:
    """Right-hand side of the rate bound at iteration k (inf at k = 0 for the 1/k kinds)"""
    kind, L = env.kind, env.L

    if kind is EnvelopeKind.GRAD_MIN:
        _need(env, "h", "f_gap0")
        return (L * env.h / 2.0 + 1.0) * math.sqrt(env.f_gap0 / ((k + 1) * env.h))
    if kind is EnvelopeKind.BT_GRAD:
        _need(env, "h", "f_gap0", "alpha")
        return (L * env.h + 2.0) / (2.0 * env.alpha) * math.sqrt(env.f_gap0 / ((k + 1) * env.h))
    if kind is EnvelopeKind.CONVEX_1K:
        _need(env, "h", "dist_sq")
        return math.inf if k == 0 else (L * env.h + 2.0) / 4.0 * env.dist_sq / (k * env.h)
    if kind is EnvelopeKind.PL_EXP:
        _need(env, "h", "mu", "f_gap0")
        return math.exp(-8.0 * env.mu * k * env.h / (L * env.h + 2.0) ** 2) * env.f_gap0
    if kind is EnvelopeKind.BT_PL:
        _need(env, "h", "mu", "f_gap0", "alpha")
        return math.exp(-8.0 * env.alpha ** 2 * env.mu * k * env.h / (L * env.h + 2.0) ** 2) * env.f_gap0
    if kind is EnvelopeKind.AD_CONVEX:
        _need(env, "alpha", "eta_star", "dist_sq")
        return math.inf if k == 0 else L / (4.0 * (env.alpha - env.eta_star)) * env.dist_sq / k
    if kind is EnvelopeKind.AD_PL:
        _need(env, "mu", "alpha", "eta_star", "f_gap0")
        kappa = L / env.mu
        es2 = env.eta_star ** 2
        rate = 16.0 * env.alpha * (env.alpha - env.eta_star) * es2 / (kappa * (kappa + 4.0 * es2))
        return math.exp(-rate * k) * env.f_gap0

    raise ConfigurationError(f"Unknown envelope kind: {kind}")


def h_lower_bound(alpha: float, eta_star: float, L: float) -> float:
    """h_LB = 2 (alpha - eta_star) / (eta_star L)"""
    return 2.0 * (alpha - eta_star) / (eta_star * L)


def h_upper_bound(mu: float, eta_star: float) -> float:
    """h_UB = 1 / (2 mu eta_star^2)"""
    return 1.0 / (2.0 * mu * eta_star ** 2)


def gradient_sum_bound(L: float, h: float, f_gap0: float) -> float:
    """Bound on sum_i ||grad f(x_i)||^2 over any prefix of an exact_lm run"""
    return ((L * h + 2.0) / 2.0) ** 2 * f_gap0 / h


# ============================================================================
# CERTIFICATION
# ============================================================================

class CertificationReport(BaseModel):
    kind: str
    constants: Dict[str, Optional[float]]
    checked: int
    violations: int
    first_violation: Optional[int] = None
    worst_ratio: float = 0.0
    note: str = ""

    @computed_field
    @property
    def passed(self) -> bool:
        return self.violations == 0


def certify(
    trajectory: Trajectory,
    env: RateEnvelope,
    f_star: Optional[float] = None,
    slack: float = config.CERT_SLACK,
) -> CertificationReport:
    """
    Check the trajectory against the envelope at every k >= 1.

    Value kinds compare f(x_k) - f*, gradient kinds compare min_{i<=k} ||grad f(x_i)||.
    A bound counts as violated when the observed quantity exceeds
    bound (1 + slack) + 1e-12 (1 + |f*|), or is not finite.
    """
    if env.bounds_gradient:
        observed = np.minimum.accumulate(trajectory.grad_norms)
        floor = 1e-12
    else:
        if f_star is None:
            raise MissingConstantError(f"{env.kind.value} certification needs f*")
        observed = trajectory.values - f_star
        floor = 1e-12 * (1.0 + abs(f_star))

    violations, first, worst = 0, None, 0.0
    for k in range(1, len(observed)):
        bound = envelope_value(env, k)
        value = float(observed[k])
        if not math.isfinite(value) or value > bound * (1.0 + slack) + floor:
            violations += 1
            if first is None:
                first = k
        if bound > 0 and math.isfinite(bound):
            ratio = value / bound if math.isfinite(value) else math.inf
            worst = max(worst, ratio)

    return CertificationReport(
        kind=env.kind.value,
        constants=env.constants(),
        checked=max(len(observed) - 1, 0),
        violations=violations,
        first_violation=first,
        worst_ratio=worst,
    )


def resolve_optimum(
    f: ObjectiveFunction,
    x0: np.ndarray,
    h: float = 10.0,
    max_iter: int = 50000,
) -> Tuple[float, Optional[np.ndarray]]:
    """
    (f*, x*) for an objective: the attached values when known, otherwise an
    exact_lm solve to ||grad f|| < 1e-12 (or max_iter) from x0.
    """
    if f.optimal_value is not None:
        return f.optimal_value, f.minimizer

    trajectory = optimize(f, x0, RunConfig(method=Method.EXACT_LM, h0=h, eps=1e-12, max_iter=max_iter))
    values = trajectory.values
    return float(np.min(values)), trajectory.x_final


def applicable_envelopes(
    run: RunConfig,
    f: ObjectiveFunction,
    h: float,
) -> Tuple[List[EnvelopeKind], Dict[str, str]]:
    """
    Envelope kinds whose hypotheses the run satisfies, plus a note for each
    kind that was considered and skipped.

    Args:
        h: Step size the run used (h0 for adaptive)
    """
    kinds: List[EnvelopeKind] = []
    skipped: Dict[str, str] = {}
    L, mu = f.lipschitz_L, f.pl_mu

    if L is None or run.method not in (Method.EXACT_LM, Method.BACKTRACKING, Method.ADAPTIVE):
        return kinds, skipped

    if run.method is Method.EXACT_LM:
        kinds.append(EnvelopeKind.GRAD_MIN)
        if f.convex:
            if h <= 2.0 / L:
                kinds.append(EnvelopeKind.CONVEX_1K)
            else:
                skipped[EnvelopeKind.CONVEX_1K.value] = "h > 2/L: only the O(1/k) asymptotic holds"
        if mu is not None:
            kinds.append(EnvelopeKind.PL_EXP)

    elif run.method is Method.BACKTRACKING:
        kinds.append(EnvelopeKind.BT_GRAD)
        if mu is not None:
            kinds.append(EnvelopeKind.BT_PL)

    else:
        if run.flags:
            note = "hypotheses violated: " + ", ".join(run.flags)
            skipped[EnvelopeKind.AD_CONVEX.value] = note
            skipped[EnvelopeKind.AD_PL.value] = note
            return kinds, skipped
        h_lb = h_lower_bound(run.alpha, run.eta_star, L)
        if f.convex:
            if h >= h_lb:
                kinds.append(EnvelopeKind.AD_CONVEX)
            else:
                skipped[EnvelopeKind.AD_CONVEX.value] = f"h0 < h_LB = {h_lb:.6g}"
        if mu is not None:
            h_ub = h_upper_bound(mu, run.eta_star)
            if h_lb <= h <= h_ub:
                kinds.append(EnvelopeKind.AD_PL)
            else:
                skipped[EnvelopeKind.AD_PL.value] = f"h0 outside [h_LB, h_UB] = [{h_lb:.6g}, {h_ub:.6g}]"

    return kinds, skipped


def make_envelope(
    kind: EnvelopeKind,
    run: RunConfig,
    f: ObjectiveFunction,
    h: float,
    f_gap0: float,
    dist_sq: Optional[float],
) -> RateEnvelope:
    if f.lipschitz_L is None:
        raise MissingConstantError(f"{kind.value} envelope needs lipschitz_L")
    return RateEnvelope(
        kind=kind,
        L=f.lipschitz_L,
        mu=f.pl_mu,
        h=h,
        alpha=run.alpha,
        eta_star=run.eta_star,
        f_gap0=f_gap0,
        dist_sq=dist_sq,
    )

"""
Scalar multiplier equation of the Lagrange multiplier scheme.

Every step of the scheme reduces to linear solves plus one scalar equation
F_h(eta; x_k) = 0. This module holds the three variants of F_h (general
splitting, general preconditioner D, plain steepest descent), the proved
root brackets, the root solver and the perturbed splitting used when the
general equation has no usable root.

All three variants are evaluated through one form

    F(eta) = value(base - eta * h * direction) - value_k - eta * lin + eta^2 * quad

with (base, direction, lin, quad) frozen per step:

    special    base = x_k, direction = grad f(x_k),   lin = 0, quad = h ||grad f||^2
    general_D  base = x_k, direction = D grad f(x_k), lin = 0, quad = h <grad f, D grad f>
    general    base = p_k, direction = q_k,           lin = <grad E(x*), p_k - x_k>,
               quad = h <grad E(x*), q_k>
"""

import math
import warnings
from dataclasses import dataclass
from enum import Enum
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy import linalg
from scipy.optimize import brentq

import config
from errors import (
    ConfigurationError,
    DegenerateError,
    MissingConstantError,
    NoBracketError,
    RootFailureError,
    SingularMatrixError,
)
from objective import ObjectiveFunction

# Relative amount by which a class upper bound may undershoot eta_LB before the
# bracket is rejected
BOUND_SLACK = 1e-9


# ============================================================================
# SPLITTING
# ============================================================================

@dataclass(frozen=True)
class Splitting:
    """
    V(x) = 1/2 <x, Q x> + E(x), integrated along x' = -D grad V(x).

    Q is symmetric (possibly zero), D has a positive definite symmetric part
    (it need not be symmetric). E_lipschitz is the optional smoothness
    constant of E.
    """
    Q: np.ndarray
    D: np.ndarray
    E_value: Callable[[np.ndarray], float]
    E_gradient: Callable[[np.ndarray], np.ndarray]
    E_lipschitz: Optional[float] = None

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        D = np.atleast_2d(np.asarray(self.D, dtype=float))
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "D", D)

        if Q.shape[0] != Q.shape[1] or D.shape != Q.shape:
            raise ConfigurationError(f"Q and D must be square and of equal shape, got {Q.shape} and {D.shape}")
        if not np.allclose(Q, Q.T, rtol=0.0, atol=1e-12):
            raise ConfigurationError("Q must be symmetric")
        if rayleigh_min(D) <= 0:
            raise ConfigurationError("D must have a positive definite symmetric part")

    @property
    def dim(self) -> int:
        return self.Q.shape[0]

    def value(self, x: np.ndarray) -> float:
        return float(0.5 * x @ (self.Q @ x)) + self.E_value(x)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return self.Q @ x + self.E_gradient(x)

    def objective(self, name: str = "V") -> ObjectiveFunction:
        """V as a plain ObjectiveFunction (no constants attached)"""
        return ObjectiveFunction(dim=self.dim, value=self.value, gradient=self.gradient, name=name)

    @classmethod
    def trivial(cls, f: ObjectiveFunction, D: Optional[np.ndarray] = None) -> "Splitting":
        """Q = 0, E = f: the general scheme collapses to the steepest-descent scheme"""
        return cls(
            Q=np.zeros((f.dim, f.dim)),
            D=np.eye(f.dim) if D is None else D,
            E_value=f.value,
            E_gradient=f.gradient,
            E_lipschitz=f.lipschitz_L,
        )


def perturb_splitting(splitting: Splitting, epsilon: float) -> Splitting:
    """
    Move a fraction epsilon of the quadratic part into E.

    Q_eps = (1 - eps) Q, E_eps(x) = E(x) + (eps/2) <x, Q x>, so V is unchanged.
    eps = 1 moves everything into E (Q_eps = 0).
    """
    if epsilon == 0:
        raise ConfigurationError("Perturbation epsilon must be nonzero")

    Q, E_value, E_gradient = splitting.Q, splitting.E_value, splitting.E_gradient

    def value(x: np.ndarray) -> float:
        return E_value(x) + 0.5 * epsilon * float(x @ (Q @ x))

    def gradient(x: np.ndarray) -> np.ndarray:
        return E_gradient(x) + epsilon * (Q @ x)

    E_lipschitz = None
    if splitting.E_lipschitz is not None:
        E_lipschitz = splitting.E_lipschitz + abs(epsilon) * float(np.max(np.abs(linalg.eigvalsh(Q))))

    return Splitting(
        Q=(1.0 - epsilon) * Q,
        D=splitting.D,
        E_value=value,
        E_gradient=gradient,
        E_lipschitz=E_lipschitz,
    )


def rayleigh_min(A: np.ndarray) -> float:
    """min over unit x of <x, A x>, i.e. the smallest eigenvalue of (A + A^T)/2"""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape[0] != A.shape[1]:
        raise ConfigurationError(f"Rayleigh quotient needs a square matrix, got {A.shape}")
    return float(linalg.eigvalsh(0.5 * (A + A.T))[0])


def small_step_condition(splitting: Splitting, h: float) -> Optional[bool]:
    """
    h (rqmin(Q) - L_E) > -2 rqmin(D^-1), under which the general equation
    has a nontrivial root. None when L_E is unknown.
    """
    if splitting.E_lipschitz is None:
        return None
    rq_Dinv = rayleigh_min(linalg.inv(splitting.D))
    return h * (rayleigh_min(splitting.Q) - splitting.E_lipschitz) > -2.0 * rq_Dinv


# ============================================================================
# STEP MATRIX
# ============================================================================

class StepMatrix:
    """
    LU factorization of I + (h/2) D Q.

    The matrix is constant for a fixed (h, D, Q), so one factorization serves
    both right-hand sides of every step of a run.
    """

    def __init__(self, splitting: Splitting, h: float):
        if h <= 0:
            raise ConfigurationError(f"Step size must be positive: {h}")

        self.h = float(h)
        self.DQ = splitting.D @ splitting.Q
        M = np.eye(splitting.dim) + 0.5 * self.h * self.DQ

        with warnings.catch_warnings():
            warnings.simplefilter("ignore", linalg.LinAlgWarning)
            self._lu = linalg.lu_factor(M)

        pivots = np.abs(np.diag(self._lu[0]))
        floor = splitting.dim * np.finfo(float).eps * max(1.0, float(pivots.max()))
        if not np.all(np.isfinite(pivots)) or pivots.min() <= floor:
            raise SingularMatrixError(f"I + (h/2) D Q is singular for h={h}")

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return linalg.lu_solve(self._lu, rhs)

    def p(self, x_k: np.ndarray) -> np.ndarray:
        """(I + h/2 DQ)^-1 (I - h/2 DQ) x_k"""
        return self.solve(x_k - 0.5 * self.h * (self.DQ @ x_k))


def compute_pq(
    splitting: Splitting,
    x_k: np.ndarray,
    h: float,
    x_mid: Optional[np.ndarray] = None,
    step_matrix: Optional[StepMatrix] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    p_k = (I + h/2 DQ)^-1 (I - h/2 DQ) x_k and q_k = (I + h/2 DQ)^-1 D grad E(x*).

    Args:
        x_mid: Point where grad E is taken (x_k when omitted)
        step_matrix: Factorization to reuse; built here when omitted

    Raises:
        SingularMatrixError: I + (h/2) D Q cannot be factored
    """
    if step_matrix is None:
        step_matrix = StepMatrix(splitting, h)
    elif step_matrix.h != h:
        raise ConfigurationError(f"Step matrix was factored for h={step_matrix.h}, not h={h}")

    x_star = x_k if x_mid is None else x_mid
    p_k = step_matrix.p(x_k)
    q_k = step_matrix.solve(splitting.D @ splitting.E_gradient(x_star))
    return p_k, q_k


# ============================================================================
# MULTIPLIER EQUATION
# ============================================================================

class Variant(str, Enum):
    GENERAL = "general"
    GENERAL_D = "general_D"
    SPECIAL = "special"


class FunctionClass(str, Enum):
    SMOOTH = "smooth"
    CONVEX = "convex"
    PL = "pl"


def eval_F_special(f: ObjectiveFunction, x_k: np.ndarray, h: float, eta: float) -> float:
    """f(x_k - eta h grad f(x_k)) - f(x_k) + h eta^2 ||grad f(x_k)||^2"""
    g = f.gradient(x_k)
    return f.change(x_k, -eta * h * g) + h * eta ** 2 * float(g @ g)


def eval_F_general_D(f: ObjectiveFunction, D: np.ndarray, x_k: np.ndarray, h: float, eta: float) -> float:
    """f(x_k - eta h D grad f(x_k)) - f(x_k) + h eta^2 <grad f(x_k), D grad f(x_k)>"""
    g = f.gradient(x_k)
    Dg = D @ g
    return f.change(x_k, -eta * h * Dg) + h * eta ** 2 * float(g @ Dg)


def eval_F_general(
    splitting: Splitting,
    x_k: np.ndarray,
    h: float,
    eta: float,
    p_k: np.ndarray,
    q_k: np.ndarray,
    x_mid: Optional[np.ndarray] = None,
) -> float:
    """E(p_k - h eta q_k) - E(x_k) - eta <grad E(x*), p_k - h eta q_k - x_k>"""
    grad_E = splitting.E_gradient(x_k if x_mid is None else x_mid)
    x_next = p_k - h * eta * q_k
    return splitting.E_value(x_next) - splitting.E_value(x_k) - eta * float(grad_E @ (x_next - x_k))


@dataclass(frozen=True)
class MultiplierEquation:
    """
    eta -> F_h(eta; x_k) with the per-step data frozen.

    Build with MultiplierEquation.special, .general_D or .general. Calling the
    object evaluates F; point(eta) is the iterate x_{k+1} the scheme takes
    for that multiplier.
    """
    variant: Variant
    h: float
    x_k: np.ndarray
    value_k: float
    value: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    base: np.ndarray
    direction: np.ndarray
    lin: float
    quad: float
    grad: np.ndarray
    p_k: Optional[np.ndarray] = None
    q_k: Optional[np.ndarray] = None
    rq_D: float = 1.0
    rq_Dinv: float = 1.0
    increment: Optional[Callable[[np.ndarray, np.ndarray], float]] = None

    @classmethod
    def special(cls, f: ObjectiveFunction, x_k: np.ndarray, h: float) -> "MultiplierEquation":
        if h <= 0:
            raise ConfigurationError(f"Step size must be positive: {h}")
        g = f.gradient(x_k)
        return cls(
            variant=Variant.SPECIAL,
            h=float(h),
            x_k=x_k,
            value_k=f.value(x_k),
            value=f.value,
            gradient=f.gradient,
            base=x_k,
            direction=g,
            lin=0.0,
            quad=h * float(g @ g),
            grad=g,
            increment=f.increment,
        )

    @classmethod
    def general_D(cls, f: ObjectiveFunction, D: np.ndarray, x_k: np.ndarray, h: float) -> "MultiplierEquation":
        if h <= 0:
            raise ConfigurationError(f"Step size must be positive: {h}")
        D = np.atleast_2d(np.asarray(D, dtype=float))
        rq_D = rayleigh_min(D)
        if rq_D <= 0:
            raise ConfigurationError("D must have a positive definite symmetric part")
        g = f.gradient(x_k)
        Dg = D @ g
        return cls(
            variant=Variant.GENERAL_D,
            h=float(h),
            x_k=x_k,
            value_k=f.value(x_k),
            value=f.value,
            gradient=f.gradient,
            base=x_k,
            direction=Dg,
            lin=0.0,
            quad=h * float(g @ Dg),
            grad=g,
            rq_D=rq_D,
            rq_Dinv=rayleigh_min(linalg.inv(D)),
            increment=f.increment,
        )

    @classmethod
    def general(
        cls,
        splitting: Splitting,
        x_k: np.ndarray,
        h: float,
        x_mid: Optional[np.ndarray] = None,
        step_matrix: Optional[StepMatrix] = None,
    ) -> "MultiplierEquation":
        p_k, q_k = compute_pq(splitting, x_k, h, x_mid=x_mid, step_matrix=step_matrix)
        grad_E = splitting.E_gradient(x_k if x_mid is None else x_mid)
        return cls(
            variant=Variant.GENERAL,
            h=float(h),
            x_k=x_k,
            value_k=splitting.E_value(x_k),
            value=splitting.E_value,
            gradient=splitting.E_gradient,
            base=p_k,
            direction=q_k,
            lin=float(grad_E @ (p_k - x_k)),
            quad=h * float(grad_E @ q_k),
            grad=grad_E,
            p_k=p_k,
            q_k=q_k,
        )

    def point(self, eta: float) -> np.ndarray:
        return self.base - eta * self.h * self.direction

    def __call__(self, eta: float) -> float:
        if self.increment is not None:
            # base is x_k for the special and general-D variants
            change = self.increment(self.x_k, -eta * self.h * self.direction)
        else:
            change = self.value(self.point(eta)) - self.value_k
        return change - eta * self.lin + eta ** 2 * self.quad

    def derivative(self, eta: float) -> float:
        slope = -self.h * float(self.gradient(self.point(eta)) @ self.direction)
        return slope - self.lin + 2.0 * eta * self.quad

    @property
    def degenerate(self) -> bool:
        """F is constant in eta (zero gradient of f, or of E at x*)"""
        return not np.any(self.grad)

    @property
    def scale(self) -> float:
        return 1.0 + abs(self.value_k)


# ============================================================================
# BRACKETS
# ============================================================================

@dataclass(frozen=True)
class EtaBracket:
    """
    [lower, upper] containing a sign change of F.

    For the special and general-D variants F(lower) <= 0 <= F(upper); a
    general-variant bracket may have either orientation. upper may be inf
    until solve_eta expands it.
    """
    lower: float
    upper: float
    provenance: str


def eta_lower_bound(L: float, h: float, rq_Dinv: float = 1.0) -> float:
    """(1 + L h / (2 rqmin(D^-1)))^-1; rq_Dinv = 1 gives the steepest-descent bound"""
    if h <= 0 or L < 0:
        raise ConfigurationError(f"eta lower bound needs L >= 0 and h > 0 (L={L}, h={h})")
    return 1.0 / (1.0 + L * h / (2.0 * rq_Dinv))


def eta_upper_bound(
    f_class: FunctionClass,
    L: Optional[float],
    mu: Optional[float],
    h: float,
    rq_Dinv: float = 1.0,
    rq_D: float = 1.0,
) -> float:
    """
    Upper bound on the nontrivial root for one function class.

    convex: 1. smooth: (1 - L h / (2 rqmin(D^-1)))^-1, inf once h reaches
    2 rqmin(D^-1)/L. pl: (2 mu h rqmin(D))^-1/2.
    """
    f_class = FunctionClass(f_class)
    if f_class is FunctionClass.CONVEX:
        return 1.0

    if f_class is FunctionClass.SMOOTH:
        if L is None:
            raise MissingConstantError("smooth upper bound needs L")
        ratio = L * h / (2.0 * rq_Dinv)
        return 1.0 / (1.0 - ratio) if ratio < 1.0 else math.inf

    if mu is None or mu <= 0:
        raise MissingConstantError("PL upper bound needs mu > 0")
    return 1.0 / math.sqrt(2.0 * mu * h * rq_D)


def _expand_upper(equation: MultiplierEquation, start: float, cap: float = config.BRACKET_CAP) -> float:
    eta = max(1.0, 2.0 * start)
    while equation(eta) < 0:
        eta *= 2.0
        if eta > cap:
            raise NoBracketError(f"F stayed negative up to eta={cap:g}")
    return eta


def eta_bracket(
    equation: MultiplierEquation,
    lipschitz_L: Optional[float] = None,
    pl_mu: Optional[float] = None,
    convex: bool = False,
) -> EtaBracket:
    """
    Tightest proved bracket around the nontrivial root.

    The lower end is eta_LB when L is known, otherwise the first halving of 1
    with F <= 0. The upper end is the smallest bound among the classes the
    objective belongs to, falling back to doubling from max(1, 2 * lower).

    Raises NoBracketError when a class upper bound falls below the lower end,
    which happens only when the attached constants are wrong.
    """
    if equation.variant is Variant.GENERAL:
        raise ConfigurationError("Use general_bracket for the general splitting equation")
    if equation.degenerate:
        raise DegenerateError("Gradient vanishes: F is identically zero")

    h, rq_D, rq_Dinv = equation.h, equation.rq_D, equation.rq_Dinv

    if lipschitz_L is not None:
        lower = eta_lower_bound(lipschitz_L, h, rq_Dinv)
        sources = ["eta_lb"]
    else:
        lower = 1.0
        for _ in range(60):
            if equation(lower) <= 0:
                break
            lower *= 0.5
        else:
            raise NoBracketError("F stayed positive while halving eta towards 0")
        sources = ["halving"]

    candidates: List[Tuple[float, str]] = []
    if convex:
        candidates.append((1.0, "convex"))
    if lipschitz_L is not None:
        candidates.append((eta_upper_bound(FunctionClass.SMOOTH, lipschitz_L, None, h, rq_Dinv), "smooth"))
    if pl_mu is not None and pl_mu > 0:
        candidates.append((eta_upper_bound(FunctionClass.PL, None, pl_mu, h, rq_D=rq_D), "pl"))

    upper, source = min(candidates, default=(math.inf, "expansion"))
    if math.isinf(upper):
        upper, source = _expand_upper(equation, lower), "expansion"

    if upper < lower:
        if upper < lower * (1.0 - BOUND_SLACK):
            raise NoBracketError(
                f"{source} upper bound {upper:.6g} lies below the lower bound {lower:.6g}; "
                "the attached L or mu does not hold for this objective"
            )
        upper = lower

    sources.append(source)
    return EtaBracket(lower=lower, upper=upper, provenance="/".join(sources))


def _scan_points() -> Tuple[List[float], List[float]]:
    below = [1.0 - 2.0 ** -j for j in range(10, 0, -1)] + [2.0 ** -j for j in range(2, 41)]
    above = [1.0 + 2.0 ** -j for j in range(10, -1, -1)]
    eta = 2.0
    while eta < config.BRACKET_CAP:
        eta *= 2.0
        above.append(eta)
    return below, above


_BELOW, _ABOVE = _scan_points()


def general_bracket(equation: MultiplierEquation, tol: float = config.ETA_TOL) -> EtaBracket:
    """
    Sign change of the general equation nearest 1.

    Scans outward from 1, alternating sides, so the root closest to the
    continuous value eta = 1 is bracketed first. Never reaches eta = 0.
    """
    if equation.degenerate:
        raise DegenerateError("grad E vanishes at the midpoint: F is constant")

    slack = tol * equation.scale
    F1 = equation(1.0)
    if abs(F1) <= slack:
        return EtaBracket(lower=1.0, upper=1.0, provenance="exact")

    prev = {"below": (1.0, F1), "above": (1.0, F1)}
    all_flat = True
    for i in range(max(len(_BELOW), len(_ABOVE))):
        for side, points in (("below", _BELOW), ("above", _ABOVE)):
            if i >= len(points):
                continue
            eta = points[i]
            F = equation(eta)
            if not np.isfinite(F):
                continue
            all_flat = all_flat and abs(F) <= slack
            eta_prev, F_prev = prev[side]
            if F * F_prev < 0:
                return EtaBracket(lower=min(eta, eta_prev), upper=max(eta, eta_prev), provenance=f"scan_{side}")
            prev[side] = (eta, F)

    if all_flat:
        raise DegenerateError("F is zero to tolerance over the whole scan")
    raise NoBracketError("No sign change of the general equation between 2^-40 and the bracket cap")


# ============================================================================
# ROOT SOLVER
# ============================================================================

def solve_eta(equation: MultiplierEquation, bracket: EtaBracket, tol: float = config.ETA_TOL) -> float:
    """
    Nontrivial root of F inside the bracket.

    brentq on the bracket, then one Newton step kept only when it stays in
    the bracket and lowers |F|. When both endpoints already sit within
    tol * (1 + |value_k|) of zero without a strict sign change (floating-point
    noise close to a minimizer) the endpoint with the smaller |F| is returned.
    A single-point bracket is returned only when F vanishes there to the same
    tolerance.

    Raises:
        DegenerateError: F is identically zero
        NoBracketError: no sign change in the bracket, a single-point bracket
            that is not a root, or expansion hit the cap
        RootFailureError: brentq did not converge
    """
    if equation.degenerate:
        raise DegenerateError("Gradient vanishes: F is identically zero")

    a, b = bracket.lower, bracket.upper
    if math.isinf(b):
        b = _expand_upper(equation, a)
    slack = tol * equation.scale
    if a == b:
        F_a = equation(a)
        if abs(F_a) > slack:
            raise NoBracketError(f"Bracket collapsed to eta={a:.6g} where F = {F_a:.3e} ({bracket.provenance})")
        return a

    Fa, Fb = equation(a), equation(b)
    if Fa == 0:
        return a
    if Fb == 0:
        return b

    if Fa * Fb > 0:
        if min(abs(Fa), abs(Fb)) <= slack:
            return a if abs(Fa) <= abs(Fb) else b
        raise NoBracketError(f"F has the same sign at both ends of [{a:.6g}, {b:.6g}] ({bracket.provenance})")

    try:
        eta = brentq(equation, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    except (RuntimeError, ValueError) as e:
        raise RootFailureError(f"brentq failed on [{a:.6g}, {b:.6g}]: {e}")

    F_eta = equation(eta)
    d = equation.derivative(eta)
    if d != 0 and np.isfinite(d):
        candidate = eta - F_eta / d
        if min(a, b) <= candidate <= max(a, b) and abs(equation(candidate)) < abs(F_eta):
            eta = candidate

    return float(eta)

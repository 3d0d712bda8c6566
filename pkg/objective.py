"""
Objective functions for lmflow.

Holds the evaluation/gradient contract, the three benchmark problem
generators (random quadratic, log-sum-exp, nonconvex PL) and the checks
used to validate an objective: finite-difference gradients, the two
L-smooth Taylor bounds and the PL inequality.
"""

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Sequence, Union

import numpy as np
from scipy import linalg
from scipy.special import logsumexp, softmax

from errors import ConfigurationError, MissingConstantError

RNG_NAME = "numpy.PCG64"

# Sub-streams drawn from one experiment seed
STREAM_INSTANCE = 0
STREAM_X0 = 1
STREAM_SAMPLES = 2


def make_rng(seed: Optional[Union[int, Sequence[int]]]) -> np.random.Generator:
    """Seeded generator used everywhere in the repo (PCG64, fixed for reproducible tables)"""
    return np.random.Generator(np.random.PCG64(seed))


def _stream(seed: Optional[int], stream: int) -> np.random.Generator:
    # seed=None draws fresh OS entropy
    return make_rng(None if seed is None else (seed, stream))


# ============================================================================
# OBJECTIVE CONTRACT
# ============================================================================

@dataclass(frozen=True)
class ObjectiveFunction:
    """
    A differentiable objective f: R^dim -> R.

    lipschitz_L, pl_mu and optimal_value are optional metadata; bounds that
    need them raise MissingConstantError when they are absent.

    increment(x, d) returns f(x + d) - f(x) evaluated without subtracting
    two large values; change() falls back to the plain difference.
    """
    dim: int
    value: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    lipschitz_L: Optional[float] = None
    pl_mu: Optional[float] = None
    optimal_value: Optional[float] = None
    minimizer: Optional[np.ndarray] = None
    convex: bool = False
    name: str = "objective"
    increment: Optional[Callable[[np.ndarray, np.ndarray], float]] = None

    def change(self, x: np.ndarray, d: np.ndarray, value_x: Optional[float] = None) -> float:
        """f(x + d) - f(x)"""
        if self.increment is not None:
            return self.increment(x, d)
        return self.value(x + d) - (self.value(x) if value_x is None else value_x)

    def with_lipschitz(self, lipschitz_L: Optional[float]) -> "ObjectiveFunction":
        """Same objective with a different smoothness constant attached"""
        return replace(self, lipschitz_L=lipschitz_L)


# ============================================================================
# BENCHMARK INSTANCES
# ============================================================================

@dataclass(frozen=True)
class QuadraticInstance:
    """f(x) = 1/2 <x, A x> + <b, x> with A symmetric positive definite"""
    A: np.ndarray
    b: np.ndarray
    seed: Optional[int]
    L: float
    mu: float
    problem: str = field(default="quadratic", init=False)

    @property
    def dim(self) -> int:
        return self.b.shape[0]

    def minimizer(self) -> np.ndarray:
        return linalg.solve(self.A, -self.b, assume_a="pos")

    def objective(self) -> ObjectiveFunction:
        A, b = self.A, self.b

        def value(x: np.ndarray) -> float:
            return float(0.5 * x @ (A @ x) + b @ x)

        def gradient(x: np.ndarray) -> np.ndarray:
            return A @ x + b

        def increment(x: np.ndarray, d: np.ndarray) -> float:
            return float((A @ x + b) @ d + 0.5 * d @ (A @ d))

        x_star = self.minimizer()
        return ObjectiveFunction(
            dim=self.dim,
            value=value,
            gradient=gradient,
            lipschitz_L=self.L,
            pl_mu=self.mu,
            optimal_value=value(x_star),
            minimizer=x_star,
            convex=True,
            name="quadratic",
            increment=increment,
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "problem": self.problem,
            "rng": RNG_NAME,
            "seed": self.seed,
            "A": self.A.tolist(),
            "b": self.b.tolist(),
            "L": self.L,
            "mu": self.mu,
        }


@dataclass(frozen=True)
class LogSumExpInstance:
    """f(x) = rho * log(sum_i exp((<a_i, x> - b_i) / rho)); a holds the a_i as rows"""
    a: np.ndarray
    b: np.ndarray
    rho: float
    seed: Optional[int]
    problem: str = field(default="lse", init=False)

    @property
    def dim(self) -> int:
        return self.a.shape[1]

    @property
    def max_row_norm_sq(self) -> float:
        """max_i ||a_i||^2, the bound the experiments quote for L"""
        return float(np.max(np.sum(self.a ** 2, axis=1)))

    @property
    def standard_lipschitz(self) -> float:
        """max_i ||a_i||^2 / rho, the usual log-sum-exp smoothness bound"""
        return self.max_row_norm_sq / self.rho

    def objective(self, lipschitz: str = "row_norm") -> ObjectiveFunction:
        """
        Args:
            lipschitz: "row_norm" attaches max_i ||a_i||^2, "standard" attaches
                max_i ||a_i||^2 / rho. Both are valid upper bounds.
        """
        if lipschitz == "row_norm":
            L = self.max_row_norm_sq
        elif lipschitz == "standard":
            L = self.standard_lipschitz
        else:
            raise ConfigurationError(f"Unknown lipschitz bound: {lipschitz}")

        a, b, rho = self.a, self.b, self.rho

        def value(x: np.ndarray) -> float:
            return float(rho * logsumexp((a @ x - b) / rho))

        def gradient(x: np.ndarray) -> np.ndarray:
            return a.T @ softmax((a @ x - b) / rho)

        def increment(x: np.ndarray, d: np.ndarray) -> float:
            # rho log sum_i p_i(x) exp(<a_i, d> / rho), p = softmax at x
            u = (a @ d) / rho
            if np.max(np.abs(u)) > 1.0:
                return value(x + d) - value(x)
            p = softmax((a @ x - b) / rho)
            return float(rho * np.log1p(p @ np.expm1(u)))

        return ObjectiveFunction(
            dim=self.dim,
            value=value,
            gradient=gradient,
            lipschitz_L=L,
            convex=True,
            name="lse",
            increment=increment,
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "problem": self.problem,
            "rng": RNG_NAME,
            "seed": self.seed,
            "a": self.a.tolist(),
            "b": self.b.tolist(),
            "rho": self.rho,
            "max_row_norm_sq": self.max_row_norm_sq,
            "standard_lipschitz": self.standard_lipschitz,
        }


@dataclass(frozen=True)
class NonconvexPLInstance:
    """f(x) = ||x||^2 + 3 sin^2(<b, x>) with ||b|| = 1; 8-smooth, PL with mu = 1/32"""
    b: np.ndarray
    seed: Optional[int]
    L: float = 8.0
    mu: float = 1.0 / 32.0
    problem: str = field(default="nonconvex_pl", init=False)

    @property
    def dim(self) -> int:
        return self.b.shape[0]

    def objective(self) -> ObjectiveFunction:
        b = self.b

        def value(x: np.ndarray) -> float:
            return float(x @ x + 3.0 * np.sin(b @ x) ** 2)

        def gradient(x: np.ndarray) -> np.ndarray:
            return 2.0 * x + 3.0 * np.sin(2.0 * (b @ x)) * b

        def increment(x: np.ndarray, d: np.ndarray) -> float:
            # sin^2(u + v) - sin^2(u) = sin(2u + v) sin(v)
            u, v = b @ x, b @ d
            return float(2.0 * x @ d + d @ d + 3.0 * np.sin(2.0 * u + v) * np.sin(v))

        return ObjectiveFunction(
            dim=self.dim,
            value=value,
            gradient=gradient,
            lipschitz_L=self.L,
            pl_mu=self.mu,
            optimal_value=0.0,
            minimizer=np.zeros(self.dim),
            convex=False,
            name="nonconvex_pl",
            increment=increment,
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "problem": self.problem,
            "rng": RNG_NAME,
            "seed": self.seed,
            "b": self.b.tolist(),
            "L": self.L,
            "mu": self.mu,
        }


Instance = Union[QuadraticInstance, LogSumExpInstance, NonconvexPLInstance]


# ============================================================================
# GENERATORS
# ============================================================================

def haar_orthogonal(n: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the sign(R_jj) correction"""
    G = rng.standard_normal((n, n))
    Q, R = np.linalg.qr(G)
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    return Q * signs


def make_quadratic(
    n: int,
    seed: Optional[int] = 0,
    eig_low: float = 0.001,
    eig_high: float = 1.0,
    b_scale: float = 5.0,
    eigenvalues: Optional[np.ndarray] = None,
    b: Optional[np.ndarray] = None,
) -> QuadraticInstance:
    """
    Random quadratic benchmark A = Q^T diag(lambda) Q, b ~ N(0, b_scale^2).

    Args:
        n: Dimension
        seed: RNG seed
        eig_low, eig_high: Range of the uniform eigenvalue distribution
        b_scale: Standard deviation of the entries of b
        eigenvalues: Fixed spectrum instead of the uniform draw
        b: Fixed linear term instead of the normal draw

    Returns:
        QuadraticInstance with L = max eigenvalue, mu = min eigenvalue
    """
    if n < 1:
        raise ConfigurationError(f"Dimension must be positive: {n}")

    rng = _stream(seed, STREAM_INSTANCE)
    lam = rng.uniform(eig_low, eig_high, size=n) if eigenvalues is None else np.asarray(eigenvalues, dtype=float)
    Q = haar_orthogonal(n, rng)
    A = Q.T @ (lam[:, None] * Q)
    A = 0.5 * (A + A.T)
    b_vec = rng.normal(0.0, b_scale, size=n) if b is None else np.asarray(b, dtype=float)

    return QuadraticInstance(A=A, b=b_vec, seed=seed, L=float(lam.max()), mu=float(lam.min()))


def quadratic_from_matrix(A: np.ndarray, b: np.ndarray, seed: Optional[int] = None) -> QuadraticInstance:
    """User-supplied quadratic; L and mu are read off the spectrum of A"""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ConfigurationError(f"A must be square, got shape {A.shape}")
    if not np.allclose(A, A.T, atol=1e-12):
        raise ConfigurationError("A must be symmetric")
    lam = linalg.eigvalsh(A)
    if lam[0] <= 0:
        raise ConfigurationError(f"A must be positive definite (min eigenvalue {lam[0]:.3e})")
    return QuadraticInstance(A=A, b=np.asarray(b, dtype=float), seed=seed, L=float(lam[-1]), mu=float(lam[0]))


def make_log_sum_exp(n: int, m: int, rho: float = 20.0, seed: Optional[int] = 0) -> LogSumExpInstance:
    """Log-sum-exp benchmark with a_i ~ N(0, 1) entries and b_i ~ N(0, sqrt(2))"""
    if n < 1 or m < 1:
        raise ConfigurationError(f"Dimensions must be positive: n={n}, m={m}")
    if rho <= 0:
        raise ConfigurationError(f"rho must be positive: {rho}")

    rng = _stream(seed, STREAM_INSTANCE)
    a = rng.standard_normal((m, n))
    b = rng.normal(0.0, np.sqrt(2.0), size=m)
    return LogSumExpInstance(a=a, b=b, rho=float(rho), seed=seed)


def make_nonconvex_pl(n: int, seed: Optional[int] = 0) -> NonconvexPLInstance:
    """Nonconvex PL benchmark with b = v / ||v||, v ~ N(0, I)"""
    if n < 1:
        raise ConfigurationError(f"Dimension must be positive: {n}")

    rng = _stream(seed, STREAM_INSTANCE)
    v = rng.standard_normal(n)
    return NonconvexPLInstance(b=v / np.linalg.norm(v), seed=seed)


def initial_point(dim: int, seed: int) -> np.ndarray:
    """Seeded standard normal starting point"""
    return _stream(seed, STREAM_X0).standard_normal(dim)


# ============================================================================
# CHECKS
# ============================================================================

def check_gradient(f: ObjectiveFunction, x: np.ndarray, delta: float = 1e-5) -> float:
    """
    Central finite-difference check of the gradient.

    Returns:
        max_i |(f(x + delta e_i) - f(x - delta e_i)) / (2 delta) - grad f(x)_i|
    """
    g = f.gradient(x)
    fd = np.empty(f.dim)
    e = np.zeros(f.dim)
    for i in range(f.dim):
        e[i] = delta
        fd[i] = (f.value(x + e) - f.value(x - e)) / (2.0 * delta)
        e[i] = 0.0
    return float(np.max(np.abs(fd - g)))


def gradient_check_passes(f: ObjectiveFunction, x: np.ndarray, delta: float = 1e-5, atol: float = 1e-6) -> bool:
    """check_gradient against atol scaled by (1 + ||grad f(x)||)"""
    scale = 1.0 + float(np.linalg.norm(f.gradient(x)))
    return check_gradient(f, x, delta) < atol * scale


def taylor_remainder(f: ObjectiveFunction, x: np.ndarray, y: np.ndarray) -> float:
    """f(y) - f(x) - <grad f(x), y - x>"""
    return f.value(y) - f.value(x) - float(f.gradient(x) @ (y - x))


def check_smoothness_inequalities(f: ObjectiveFunction, x: np.ndarray, y: np.ndarray, rel_slack: float = 1e-10) -> bool:
    """
    Both L-smooth bounds: |f(y) - f(x) - <grad f(x), y - x>| <= (L/2) ||y - x||^2.

    The slack is relative to the magnitudes of f(x), f(y) and the bound.
    """
    if f.lipschitz_L is None:
        raise MissingConstantError(f"{f.name}: smoothness check needs lipschitz_L")

    fx, fy = f.value(x), f.value(y)
    d = y - x
    remainder = fy - fx - float(f.gradient(x) @ d)
    bound = 0.5 * f.lipschitz_L * float(d @ d)
    slack = rel_slack * (1.0 + abs(fx) + abs(fy) + bound)
    return -bound - slack <= remainder <= bound + slack


def check_pl_inequality(f: ObjectiveFunction, x: np.ndarray, rel_slack: float = 1e-10) -> bool:
    """1/2 ||grad f(x)||^2 >= mu (f(x) - f*)"""
    if f.pl_mu is None or f.optimal_value is None:
        raise MissingConstantError(f"{f.name}: PL check needs pl_mu and optimal_value")

    g = f.gradient(x)
    fx = f.value(x)
    lhs = 0.5 * float(g @ g)
    rhs = f.pl_mu * (fx - f.optimal_value)
    return lhs >= rhs - rel_slack * (1.0 + abs(fx) + abs(f.optimal_value))


def top_curvature_direction(f: ObjectiveFunction, x: np.ndarray, rng: np.random.Generator, iters: int = 30, fd_step: float = 1e-6) -> np.ndarray:
    """Unit vector of (approximately) largest curvature at x, by power iteration on gradient differences"""
    v = rng.standard_normal(f.dim)
    v /= np.linalg.norm(v)
    g0 = f.gradient(x)
    for _ in range(iters):
        hv = (f.gradient(x + fd_step * v) - g0) / fd_step
        norm = np.linalg.norm(hv)
        if norm == 0.0:
            break
        v = hv / norm
    return v


# ============================================================================
# JSON I/O
# ============================================================================

def instance_from_dict(data: Dict[str, Any]) -> Instance:
    """Rebuild an instance from its JSON document"""
    problem = data.get("problem")
    if problem == "quadratic":
        A = np.asarray(data["A"], dtype=float)
        b = np.asarray(data["b"], dtype=float)
        if "L" in data and "mu" in data:
            return QuadraticInstance(A=A, b=b, seed=data.get("seed"), L=float(data["L"]), mu=float(data["mu"]))
        return quadratic_from_matrix(A, b, seed=data.get("seed"))
    if problem == "lse":
        return LogSumExpInstance(
            a=np.asarray(data["a"], dtype=float),
            b=np.asarray(data["b"], dtype=float),
            rho=float(data["rho"]),
            seed=data.get("seed"),
        )
    if problem == "nonconvex_pl":
        return NonconvexPLInstance(
            b=np.asarray(data["b"], dtype=float),
            seed=data.get("seed"),
            L=float(data.get("L", 8.0)),
            mu=float(data.get("mu", 1.0 / 32.0)),
        )
    raise ConfigurationError(f"Unknown problem in instance document: {problem}")


def save_instance(instance: Instance, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(instance.to_dict()))
    return path


def load_instance(path: Union[str, Path]) -> Instance:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigurationError(f"Could not read instance file {path}: {e}")
    return instance_from_dict(data)

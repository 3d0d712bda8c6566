"""
Experiment harness and command-line interface for lmflow.

Subcommands:
    solve   one method on one problem
    bench   the full method grid on one problem, printed as a table
    verify  invariant and rate-certification suite
    emit    per-method trajectory CSVs for plotting

Exit codes: 0 success, 1 invariant failure (verify), 2 configuration error.
"""

import argparse
import math
import re
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Literal, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, Field, ValidationError, computed_field

import config
from errors import ConfigurationError, LMFlowError, MissingConstantError
from multiplier_eq import FunctionClass, eta_lower_bound, eta_upper_bound
from objective import (
    Instance,
    ObjectiveFunction,
    check_gradient,
    check_pl_inequality,
    check_smoothness_inequalities,
    initial_point,
    load_instance,
    make_log_sum_exp,
    make_nonconvex_pl,
    make_quadratic,
    make_rng,
    top_curvature_direction,
    STREAM_SAMPLES,
)
from optimizer import DESCENT_METHODS, LM_METHODS, Method, RunConfig, StepRecord, Trajectory, optimize
from rates import (
    CertificationReport,
    applicable_envelopes,
    certify,
    gradient_sum_bound,
    h_lower_bound,
    h_upper_bound,
    make_envelope,
    resolve_optimum,
)

Problem = Literal["quadratic", "lse", "nonconvex_pl"]

PROBLEM_DEFAULTS: Dict[str, Dict[str, float]] = {
    "quadratic": {"n": 500},
    "lse": {"n": 50, "m": 200, "rho": 20.0},
    "nonconvex_pl": {"n": 50},
}

ARMIJO_H_INIT = {"quadratic": 10.0, "lse": 100.0, "nonconvex_pl": 10.0}
BACKTRACKING_H = {"quadratic": (1.0, 10.0, 100.0), "lse": (1.0, 10.0, 100.0), "nonconvex_pl": (0.1, 1.0, 10.0)}
ADAPTIVE_H0 = (1.0, 10.0, 100.0)
ARMIJO_C = (1e-4, 0.1, 0.5)

# Slack for per-step checks on eta and the energy identity
STEP_SLACK = 1e-9
# Steps with h ||grad f||^2 below this fraction of (1 + |f|) are at the
# floating-point floor; the backtracking-count bound is not checked there
NOISE_FLOOR = config.ETA_TOL


# ============================================================================
# MODELS
# ============================================================================

class ExperimentSpec(BaseModel):
    problem: Problem
    problem_params: Dict[str, float] = Field(default_factory=dict)
    methods: List[RunConfig]
    seed: int = config.DEFAULT_SEED
    out_dir: str = config.OUT_DIR
    lipschitz_scale: float = Field(default=1.0, gt=0)  # L used by the checks is L * scale
    instance_path: Optional[str] = None

    @property
    def params(self) -> Dict[str, float]:
        return {**PROBLEM_DEFAULTS[self.problem], **self.problem_params}


class MethodSummary(BaseModel):
    label: str
    method: str
    avg_step: Optional[float] = None
    avg_backtracks: Optional[float] = None
    iterations: int = 0
    final_f_gap: Optional[float] = None
    status: str = "error"
    dissipation_violations: int = 0
    csv_path: Optional[str] = None
    error: Optional[str] = None


class ExperimentSummary(BaseModel):
    problem: str
    seed: int
    f_star: float
    per_method: Dict[str, MethodSummary]


class InvariantCheck(BaseModel):
    name: str
    status: Literal["pass", "fail", "not_applicable"]
    worst: Optional[float] = None  # worst observed ratio or residual
    detail: str = ""


class CertificationBundle(BaseModel):
    problem: str
    seed: int
    checks: List[InvariantCheck]
    certifications: Dict[str, List[CertificationReport]] = Field(default_factory=dict)

    @computed_field
    @property
    def passed(self) -> bool:
        return all(c.status != "fail" for c in self.checks)

    def failures(self) -> List[InvariantCheck]:
        return [c for c in self.checks if c.status == "fail"]


# ============================================================================
# SETUP
# ============================================================================

@dataclass
class Experiment:
    spec: ExperimentSpec
    instance: Instance
    f: ObjectiveFunction
    x0: np.ndarray
    f_star: float
    x_star: Optional[np.ndarray]


@dataclass
class MethodResult:
    run: RunConfig
    x0: np.ndarray
    trajectory: Optional[Trajectory] = None
    error: Optional[str] = None


def default_spec(problem: str, seed: int = config.DEFAULT_SEED, **overrides) -> ExperimentSpec:
    """
    The standard method grid for one problem: Armijo with three c values,
    backtracking with three h, adaptive with three h0, plus fixed-step
    gradient descent and exact_lm at h = 1/L.

    Keyword overrides (eps, max_iter, alpha, eta_star) apply to every method;
    any other keyword goes to the spec itself.
    """
    if problem not in PROBLEM_DEFAULTS:
        raise ConfigurationError(f"Unknown problem: {problem}")

    shared = {k: overrides.pop(k) for k in ("eps", "max_iter", "alpha", "eta_star") if k in overrides}

    methods = [RunConfig(method=Method.ARMIJO, c_armijo=c, armijo_h_init=ARMIJO_H_INIT[problem], **shared) for c in ARMIJO_C]
    methods += [RunConfig(method=Method.BACKTRACKING, h0=h, **shared) for h in BACKTRACKING_H[problem]]
    methods += [RunConfig(method=Method.ADAPTIVE, h0=h, **shared) for h in ADAPTIVE_H0]
    methods += [
        RunConfig(method=Method.FIXED_GD, **shared),
        RunConfig(method=Method.EXACT_LM, **shared),
    ]
    return ExperimentSpec(problem=problem, methods=methods, seed=seed, **overrides)


def build_instance(spec: ExperimentSpec) -> Instance:
    if spec.instance_path:
        instance = load_instance(spec.instance_path)
        if instance.problem != spec.problem:
            raise ConfigurationError(f"Instance file holds a {instance.problem} problem, spec asks for {spec.problem}")
        return instance

    p = spec.params
    if spec.problem == "quadratic":
        return make_quadratic(int(p["n"]), seed=spec.seed)
    if spec.problem == "lse":
        return make_log_sum_exp(int(p["n"]), int(p["m"]), rho=p["rho"], seed=spec.seed)
    return make_nonconvex_pl(int(p["n"]), seed=spec.seed)


def prepare_experiment(spec: ExperimentSpec, verbose: bool = False, instance: Optional[Instance] = None) -> Experiment:
    """Instance, objective, x0 and (f*, x*) for a spec; a prebuilt instance skips generation"""
    if instance is None:
        instance = build_instance(spec)
    elif instance.problem != spec.problem:
        raise ConfigurationError(f"Instance holds a {instance.problem} problem, spec asks for {spec.problem}")
    f = instance.objective()
    x0 = initial_point(f.dim, spec.seed)
    if verbose and f.optimal_value is None:
        print(f"  Pre-solving {spec.problem} for f* ...")
    f_star, x_star = resolve_optimum(f, x0)
    return Experiment(spec=spec, instance=instance, f=f, x0=x0, f_star=f_star, x_star=x_star)


def _file_stem(label: str) -> str:
    return re.sub(r"[^A-Za-z0-9.]+", "_", label).strip("_")


def write_trajectory_csv(trajectory: Trajectory, out_dir: Union[str, Path], problem: str, f_star: Optional[float]) -> Path:
    path = Path(out_dir) / problem / f"{_file_stem(trajectory.config.label)}.csv"
    return trajectory.to_csv(path, f_star)


def run_methods(experiment: Experiment, verbose: bool = False) -> Dict[str, MethodResult]:
    """
    Run every configured method on the shared instance.

    A method that raises is recorded with its error and the others still run.
    """
    results: Dict[str, MethodResult] = {}
    f = experiment.f

    for run in experiment.spec.methods:
        x0 = experiment.x0 if run.seed is None else initial_point(f.dim, run.seed)
        result = MethodResult(run=run, x0=x0)
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                result.trajectory = optimize(f, x0, run)
            if verbose:
                t = result.trajectory
                print(f"  ✓ {run.label:<24} {t.iterations:>6} iterations  ({t.status})")
        except LMFlowError as e:
            result.error = f"{type(e).__name__}: {e}"
            if verbose:
                print(f"  ❌ {run.label:<24} {result.error}")
        results[run.label] = result

    return results


def summarize(experiment: Experiment, results: Dict[str, MethodResult], csv_paths: Optional[Dict[str, Path]] = None) -> ExperimentSummary:
    per_method: Dict[str, MethodSummary] = {}
    for label, result in results.items():
        t = result.trajectory
        if t is None:
            per_method[label] = MethodSummary(label=label, method=result.run.method.value, error=result.error)
            continue
        per_method[label] = MethodSummary(
            label=label,
            method=result.run.method.value,
            avg_step=t.avg_step,
            avg_backtracks=t.avg_backtracks,
            iterations=t.iterations,
            final_f_gap=t.records[-1].f - experiment.f_star,
            status=t.status,
            dissipation_violations=t.dissipation_violations,
            csv_path=str(csv_paths[label]) if csv_paths and label in csv_paths else None,
        )
    return ExperimentSummary(
        problem=experiment.spec.problem,
        seed=experiment.spec.seed,
        f_star=experiment.f_star,
        per_method=per_method,
    )


def print_summary(summary: ExperimentSummary) -> None:
    print()
    print("=" * 78)
    print(f"RESULTS: {summary.problem} (seed {summary.seed}, f* = {summary.f_star:.10g})")
    print("=" * 78)
    print(f"{'method':<24} {'avg step':>10} {'avg bt':>8} {'iters':>7} {'final gap':>12}  status")
    print("-" * 78)
    for label, s in summary.per_method.items():
        if s.error:
            print(f"{label:<24} {'-':>10} {'-':>8} {'-':>7} {'-':>12}  ❌ {s.error}")
            continue
        print(f"{label:<24} {s.avg_step:>10.4g} {s.avg_backtracks:>8.3g} {s.iterations:>7} {s.final_f_gap:>12.3e}  {s.status}")
    print("=" * 78)
    print()


# ============================================================================
# OPERATIONS
# ============================================================================

def emit_figure_data(
    spec: ExperimentSpec,
    experiment: Optional[Experiment] = None,
    results: Optional[Dict[str, MethodResult]] = None,
    verbose: bool = False,
) -> Dict[str, Path]:
    """
    One CSV per method under <out_dir>/<problem>/ with columns
    k,f,f_gap,grad_norm,eta,h,backtracks. Runs the methods when no results
    are passed in.
    """
    if experiment is None:
        experiment = prepare_experiment(spec, verbose)
    if results is None:
        results = run_methods(experiment, verbose)

    paths: Dict[str, Path] = {}
    for label, result in results.items():
        if result.trajectory is None:
            continue
        paths[label] = write_trajectory_csv(result.trajectory, spec.out_dir, spec.problem, experiment.f_star)
        if verbose:
            print(f"  Saved: {paths[label]}")
    return paths


def run_experiment(spec: ExperimentSpec, verbose: bool = True, write_csv: bool = True) -> ExperimentSummary:
    """
    Run every method of the spec on one instance, write the per-method CSVs
    and return the table of average effective step, average backtracks and
    iteration counts.
    """
    if verbose:
        print("=" * 78)
        print(f"EXPERIMENT: {spec.problem}  seed={spec.seed}  methods={len(spec.methods)}")
        print("=" * 78)

    experiment = prepare_experiment(spec, verbose)
    results = run_methods(experiment, verbose)
    paths = emit_figure_data(spec, experiment, results, verbose) if write_csv else None
    summary = summarize(experiment, results, paths)

    if verbose:
        print_summary(summary)
    return summary


def _ratio_check(name: str, worst: float, detail: str = "") -> InvariantCheck:
    return InvariantCheck(name=name, status="pass" if worst <= 1.0 else "fail", worst=worst, detail=detail)


def _objective_checks(experiment: Experiment, samples: int = 10) -> List[InvariantCheck]:
    f, spec = experiment.f, experiment.spec
    rng = make_rng((spec.seed, STREAM_SAMPLES))
    points = [experiment.x0 + rng.standard_normal(f.dim) for _ in range(samples)]
    checks: List[InvariantCheck] = []

    worst = 0.0
    for x in points:
        scale = 1.0 + float(np.linalg.norm(f.gradient(x)))
        worst = max(worst, check_gradient(f, x, 1e-5) / (1e-6 * scale))
    checks.append(_ratio_check("gradient_fd", worst, f"{samples} points, delta=1e-5"))

    if f.lipschitz_L is None:
        checks.append(InvariantCheck(name="smoothness", status="not_applicable", detail="L unknown"))
    else:
        L_check = f.lipschitz_L * spec.lipschitz_scale
        f_check = f.with_lipschitz(L_check)
        failed = 0
        for x in points:
            v = top_curvature_direction(f, x, rng)
            pairs = [(x, x + rng.standard_normal(f.dim)), (x, x + v), (x - 0.5 * v, x + 0.5 * v)]
            failed += sum(not check_smoothness_inequalities(f_check, a, b) for a, b in pairs)
        checks.append(InvariantCheck(
            name="smoothness",
            status="pass" if failed == 0 else "fail",
            worst=float(failed),
            detail=f"L={L_check:.6g}, {failed} of {3 * samples} pairs violate",
        ))

    if f.pl_mu is None or f.optimal_value is None:
        checks.append(InvariantCheck(name="pl_inequality", status="not_applicable", detail="mu or f* unknown"))
    else:
        failed = sum(not check_pl_inequality(f, x) for x in points)
        checks.append(InvariantCheck(name="pl_inequality", status="pass" if failed == 0 else "fail", worst=float(failed)))

    return checks


def _eta_interval(f: ObjectiveFunction, h: float):
    lower = eta_lower_bound(f.lipschitz_L, h)
    uppers = [eta_upper_bound(FunctionClass.SMOOTH, f.lipschitz_L, None, h)]
    if f.convex:
        uppers.append(1.0)
    if f.pl_mu is not None:
        uppers.append(eta_upper_bound(FunctionClass.PL, None, f.pl_mu, h))
    return lower, min(uppers)


def at_noise_floor(record: StepRecord) -> bool:
    """The step's predicted decrease h ||grad f||^2 is below the resolution of f"""
    return record.h * record.grad_norm ** 2 <= NOISE_FLOOR * (1.0 + abs(record.f))


def _trajectory_checks(experiment: Experiment, label: str, result: MethodResult) -> List[InvariantCheck]:
    f, run, t = experiment.f, result.run, result.trajectory
    L = f.lipschitz_L
    checks: List[InvariantCheck] = []

    if run.method in DESCENT_METHODS:
        v = t.dissipation_violations
        checks.append(InvariantCheck(
            name=f"{label}/dissipation",
            status="pass" if v == 0 else "fail",
            worst=float(v),
            detail=f"{v} increasing steps of {t.iterations}",
        ))

    if L is None:
        return checks

    steps = t.steps
    if run.method is Method.EXACT_LM and steps:
        h = steps[0].h
        lower, upper = _eta_interval(f, h)
        worst = 0.0
        for r in steps:
            below = (lower - r.eta) / max(lower, 1e-300)
            above = (r.eta - upper) / upper if math.isfinite(upper) else 0.0
            worst = max(worst, below / STEP_SLACK, above / STEP_SLACK)
        checks.append(_ratio_check(f"{label}/eta_bracket", worst, f"[{lower:.6g}, {upper:.6g}]"))

        worst = 0.0
        values = t.values
        for i, r in enumerate(steps):
            residual = values[i + 1] - values[i] + h * r.eta ** 2 * r.grad_norm ** 2
            worst = max(worst, abs(residual) / (STEP_SLACK * (1.0 + abs(values[i]))))
        checks.append(_ratio_check(f"{label}/energy_identity", worst))

        gap0 = values[0] - experiment.f_star
        bound = gradient_sum_bound(L, h, gap0)
        total = float(np.sum(t.grad_norms[:-1] ** 2))
        checks.append(_ratio_check(f"{label}/gradient_sum", total / (bound * (1.0 + config.CERT_SLACK))))

    if run.method in (Method.BACKTRACKING, Method.ADAPTIVE) and steps:
        worst, skipped = 0.0, 0
        for r in steps:
            if at_noise_floor(r):
                skipped += 1
                continue
            eta_lb = eta_lower_bound(L, r.h)
            max_bt = math.ceil(math.log(eta_lb) / math.log(run.alpha) - 1e-9)
            worst = max(worst, r.backtracks / max(max_bt, 1) if r.backtracks else 0.0)
            if r.eta < run.alpha * eta_lb * (1.0 - STEP_SLACK):
                worst = max(worst, 2.0)
        checks.append(_ratio_check(f"{label}/backtrack_count", worst, f"{skipped} steps at the noise floor skipped"))

    if run.method is Method.ADAPTIVE and steps:
        if run.flags:
            checks.append(InvariantCheck(
                name=f"{label}/h_bounds",
                status="not_applicable",
                detail="hypotheses violated: " + ", ".join(run.flags),
            ))
        else:
            h0 = run.h0
            h_lb = h_lower_bound(run.alpha, run.eta_star, L)
            hs = t.step_sizes
            worst = 0.0
            notes = []
            if h0 >= h_lb:
                worst = max(worst, float(np.max(h_lb / hs)) * (1.0 - STEP_SLACK))
                notes.append(f"h_LB={h_lb:.6g}")
            if f.pl_mu is not None:
                h_ub = h_upper_bound(f.pl_mu, run.eta_star)
                if h0 <= h_ub:
                    worst = max(worst, float(np.max(hs / h_ub)) * (1.0 - STEP_SLACK))
                    notes.append(f"h_UB={h_ub:.6g}")
            if notes:
                checks.append(_ratio_check(f"{label}/h_bounds", worst, ", ".join(notes)))
            else:
                checks.append(InvariantCheck(name=f"{label}/h_bounds", status="not_applicable", detail="h0 outside the bounds"))

    return checks


def _certifications(experiment: Experiment, label: str, result: MethodResult):
    f, run, t = experiment.f, result.run, result.trajectory
    checks: List[InvariantCheck] = []
    reports: List[CertificationReport] = []

    try:
        h = run.step_size(f)
    except MissingConstantError:
        return checks, reports

    kinds, skipped = applicable_envelopes(run, f, h)
    f_gap0 = t.values[0] - experiment.f_star
    dist_sq = None
    if experiment.x_star is not None:
        d = result.x0 - experiment.x_star
        dist_sq = float(d @ d)

    for kind in kinds:
        env = make_envelope(kind, run, f, h, f_gap0, dist_sq)
        try:
            report = certify(t, env, experiment.f_star)
        except MissingConstantError as e:
            checks.append(InvariantCheck(name=f"{label}/{kind.value}", status="not_applicable", detail=str(e)))
            continue
        reports.append(report)
        checks.append(InvariantCheck(
            name=f"{label}/{kind.value}",
            status="pass" if report.passed else "fail",
            worst=report.worst_ratio,
            detail=f"{report.violations} violations of {report.checked}",
        ))

    for kind, note in skipped.items():
        checks.append(InvariantCheck(name=f"{label}/{kind}", status="not_applicable", detail=note))

    return checks, reports


def verify_all(spec: ExperimentSpec, verbose: bool = True) -> CertificationBundle:
    """
    Run the invariant suite on the spec's instance: objective checks,
    dissipation, eta brackets, the energy identity, the backtracking-count
    bound, adaptive step-size bounds and every applicable rate envelope.
    Failures are data in the returned bundle; nothing is raised.
    """
    if verbose:
        print("=" * 78)
        print(f"VERIFY: {spec.problem}  seed={spec.seed}")
        print("=" * 78)

    experiment = prepare_experiment(spec, verbose)
    checks = _objective_checks(experiment)
    certifications: Dict[str, List[CertificationReport]] = {}

    results = run_methods(experiment, verbose)
    for label, result in results.items():
        if result.trajectory is None:
            checks.append(InvariantCheck(name=f"{label}/run", status="fail", detail=result.error or ""))
            continue
        checks.extend(_trajectory_checks(experiment, label, result))
        cert_checks, reports = _certifications(experiment, label, result)
        checks.extend(cert_checks)
        if reports:
            certifications[label] = reports

    bundle = CertificationBundle(problem=spec.problem, seed=spec.seed, checks=checks, certifications=certifications)

    if verbose:
        print()
        for c in checks:
            mark = {"pass": "✓", "fail": "❌", "not_applicable": "⚠️ "}[c.status]
            worst = f"  worst={c.worst:.3g}" if c.worst is not None else ""
            print(f"  {mark} {c.name:<40}{worst}  {c.detail}")
        print()
        print(f"{'✅ ALL INVARIANTS HOLD' if bundle.passed else f'❌ {len(bundle.failures())} INVARIANT(S) FAILED'}")
        print()
    return bundle


# ============================================================================
# CLI
# ============================================================================

def get_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(prog="lmflow", description=__doc__.split("\n")[1])
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (
        ("solve", "run one method on one problem"),
        ("bench", "reproduce the full method table for one problem"),
        ("verify", "run the invariant suite"),
        ("emit", "write per-method trajectory CSVs"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--problem", choices=sorted(PROBLEM_DEFAULTS), default="quadratic")
        p.add_argument("--method", choices=[m.value for m in Method], default=None)
        p.add_argument("--seed", type=int, default=config.DEFAULT_SEED)
        p.add_argument("--h0", type=float, default=None)
        p.add_argument("--alpha", type=float, default=config.ALPHA)
        p.add_argument("--eta-star", type=float, default=config.ETA_STAR)
        p.add_argument("--eps", type=float, default=config.EPS)
        p.add_argument("--c", type=float, default=None, help="Armijo constant (solve only, default 1e-4)")
        p.add_argument("--max-iter", type=int, default=config.MAX_ITER)
        p.add_argument("--out-dir", default=config.OUT_DIR)
        p.add_argument("--instance", default=None, help="JSON instance file (user-supplied quadratic)")
        p.add_argument("--json-summary", default=None, help="write the summary as JSON to this path")
        p.add_argument("--lipschitz-scale", type=float, default=1.0, help="scale the L used by the checks")
        p.add_argument("--quiet", action="store_true")

    return parser.parse_args(argv)


def spec_from_args(args: argparse.Namespace) -> ExperimentSpec:
    common = dict(
        seed=args.seed,
        out_dir=args.out_dir,
        instance_path=args.instance,
        lipschitz_scale=args.lipschitz_scale,
    )

    if args.command == "solve":
        if args.method is None:
            raise ConfigurationError("solve needs --method")
        armijo = {} if args.c is None else {"c_armijo": args.c}
        run = RunConfig(
            method=args.method,
            h0=args.h0,
            alpha=args.alpha,
            eta_star=args.eta_star,
            eps=args.eps,
            max_iter=args.max_iter,
            armijo_h_init=ARMIJO_H_INIT[args.problem],
            **armijo,
        )
        return ExperimentSpec(problem=args.problem, methods=[run], **common)

    # bench, verify and emit run the fixed grid of step sizes and Armijo constants
    given = [flag for flag, value in (("--h0", args.h0), ("--c", args.c)) if value is not None]
    if given:
        raise ConfigurationError(f"{args.command} runs the default grid and does not take {', '.join(given)}")

    spec = default_spec(
        args.problem,
        eps=args.eps,
        max_iter=args.max_iter,
        alpha=args.alpha,
        eta_star=args.eta_star,
        **common,
    )
    if args.method is not None:
        spec.methods = [m for m in spec.methods if m.method.value == args.method]
    return spec


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = get_args(argv)
    verbose = not args.quiet

    try:
        spec = spec_from_args(args)

        if args.command == "verify":
            bundle = verify_all(spec, verbose=verbose)
            if args.json_summary:
                Path(args.json_summary).parent.mkdir(parents=True, exist_ok=True)
                Path(args.json_summary).write_text(bundle.model_dump_json(indent=2))
            return 0 if bundle.passed else 1

        if args.command == "emit":
            paths = emit_figure_data(spec, verbose=verbose)
            if verbose:
                print(f"✓ Wrote {len(paths)} trajectory files to {Path(spec.out_dir) / spec.problem}")
            return 0

        summary = run_experiment(spec, verbose=verbose)
        if args.json_summary:
            Path(args.json_summary).parent.mkdir(parents=True, exist_ok=True)
            Path(args.json_summary).write_text(summary.model_dump_json(indent=2))
        return 0

    except (ConfigurationError, ValidationError) as e:
        print(f"❌ Configuration error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

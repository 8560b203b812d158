"""Command-line entry point: ``gp-arclength <command> [options]``.

Commands read a JSON run configuration and write JSON or CSV.  Exit codes:
0 success, 2 bad input (config, flags, data files), 3 numerical failure
(including a failed ``validate``).
"""

from __future__ import annotations

import argparse
import contextlib
import io
import json
import math
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np
from referencing import Registry, Resource

from .arclength import (ArcLengthMoments, Interval, Method, RhoPolicy, SeriesPolicy,
                        posterior_moments_1d, posterior_moments_nd, prior_mean_1d,
                        prior_moments_1d, prior_moments_nd)
from .gp import GpPosterior, SingularModelError, fit, read_observations
from .integrand import Integrand1D, cdf_1d, pdf_1d
from .kernels import CoregionalizedKernel, KernelSpec
from .mc import LengthMode, McReport, empirical_arclength
from .quadrature import QuadratureSpec
from .specfun import ConvergenceError

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3
VALIDATE_Z_LIMIT = 4.0

_SCHEMA_FILES = ("config", "moments", "mc_report", "validate")


class InputError(Exception):
    """Bad configuration, flags or data file (exit 2)."""


# ---------------------------------------------------------------------------
# schemas
# ---------------------------------------------------------------------------


def load_schema(name: str) -> dict:
    text = resources.files("gp_arclength").joinpath(f"schemas/{name}.schema.json").read_text()
    return json.loads(text)


def _registry() -> Registry:
    pairs = []
    for name in _SCHEMA_FILES:
        schema = load_schema(name)
        pairs.append((schema["$id"], Resource.from_contents(schema)))
    return Registry().with_resources(pairs)


def validator(name: str) -> jsonschema.protocols.Validator:
    schema = load_schema(name)
    cls = jsonschema.validators.validator_for(schema)
    return cls(schema, registry=_registry())


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


@dataclass
class RunConfig:
    kernel: KernelSpec = field(default_factory=lambda: KernelSpec("se"))
    B: np.ndarray = field(default_factory=lambda: np.eye(1))
    interval: Interval = field(default_factory=lambda: Interval(0.0, 1.0))
    observations_path: Path | None = None
    noise_variance: float | list = 0.0
    quadrature: QuadratureSpec = field(default_factory=QuadratureSpec)
    series: SeriesPolicy = field(default_factory=SeriesPolicy)
    rho_policy: RhoPolicy = RhoPolicy.PRIOR_STATIONARY
    mc_count: int = 2000
    mc_grid_size: int = 2000
    mc_seed: int = 0

    @property
    def vector_kernel(self) -> CoregionalizedKernel:
        return CoregionalizedKernel(self.kernel, self.B)

    @property
    def output_dim(self) -> int:
        return self.B.shape[0]


def _error_location(err: jsonschema.ValidationError) -> str:
    return ".".join(str(p) for p in err.absolute_path) or "<root>"


def parse_config(text: str, source: str = "<config>", base_dir: Path | None = None) -> RunConfig:
    """Parse and schema-check a JSON run configuration.  Raises InputError."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{source}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from None
    errors = sorted(validator("config").iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        lines = [f"{source}: at {_error_location(e)}: {e.message}" for e in errors]
        raise InputError("\n".join(lines))
    try:
        return _build_config(raw, base_dir or Path("."))
    except ValueError as exc:
        raise InputError(f"{source}: {exc}") from None


def _build_config(raw: dict, base_dir: Path) -> RunConfig:
    cfg = RunConfig()
    if "kernel" in raw:
        cfg.kernel = KernelSpec(**{"family": "se", **raw["kernel"]})
    if "B" in raw:
        rows = raw["B"]
        if any(len(r) != len(rows) for r in rows):
            raise ValueError("B must be square")
        cfg.B = np.asarray(rows, dtype=float)
        CoregionalizedKernel(cfg.kernel, cfg.B)   # symmetry / PSD checks
    if "interval" in raw:
        cfg.interval = Interval(float(raw["interval"]["a"]), float(raw["interval"]["b"]))
    if raw.get("observations_path") is not None:
        p = Path(raw["observations_path"])
        cfg.observations_path = p if p.is_absolute() else base_dir / p
    if "noise_variance" in raw:
        cfg.noise_variance = raw["noise_variance"]
        if isinstance(cfg.noise_variance, list) and len(cfg.noise_variance) != cfg.output_dim:
            raise ValueError("noise_variance list length must match the size of B")
    if "quadrature" in raw:
        cfg.quadrature = QuadratureSpec(**raw["quadrature"])
    if "series" in raw:
        s = dict(raw["series"])
        if "rho_policy" in s:
            cfg.rho_policy = RhoPolicy(s.pop("rho_policy"))
        cfg.series = SeriesPolicy(**s)
    mc = raw.get("mc", {})
    cfg.mc_count = mc.get("count", cfg.mc_count)
    cfg.mc_grid_size = mc.get("grid_size", cfg.mc_grid_size)
    cfg.mc_seed = mc.get("seed", cfg.mc_seed)
    return cfg


def load_config(path: str | None) -> RunConfig:
    if path is None:
        return RunConfig()
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, str(p), p.parent)


def load_gp(cfg: RunConfig, require_observations: bool) -> GpPosterior:
    ck = cfg.vector_kernel
    if cfg.observations_path is None:
        if require_observations:
            raise InputError("config has no observations_path")
        return GpPosterior.prior(ck)
    if not cfg.observations_path.is_file():
        raise InputError(f"observations file not found: {cfg.observations_path}")
    try:
        obs = read_observations(cfg.observations_path, cfg.noise_variance, cfg.output_dim)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    return GpPosterior.prior(ck) if obs is None else fit(ck, obs)


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


def _plain(obj):
    """numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def dump_json(obj, schema: str | None = None) -> str:
    obj = _plain(obj)
    if schema is not None:
        validator(schema).validate(obj)
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def fmt(x: float) -> str:
    # shortest repr that round-trips the double exactly
    return repr(float(x))


def moments_json(res: ArcLengthMoments) -> dict:
    d = res.to_dict()
    for key in ("second_moment", "variance"):
        if d[key] is None:
            del d[key]
    return d


@contextlib.contextmanager
def _output(path: str | None):
    if path is None:
        yield sys.stdout
    else:
        buf = io.StringIO()
        yield buf
        try:
            Path(path).write_text(buf.getvalue(), encoding="utf-8")
        except OSError as exc:
            raise InputError(f"cannot write {path}: {exc.strerror}") from None


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _seeded(cfg: RunConfig, args) -> RunConfig:
    if getattr(args, "seed", None) is not None:
        cfg.mc_seed = args.seed
    return cfg


def _mc(cfg: RunConfig, gp: GpPosterior) -> McReport:
    mode = LengthMode.GRAPH_1D if cfg.output_dim == 1 else LengthMode.VECTOR
    return empirical_arclength(gp, cfg.interval, cfg.mc_grid_size, cfg.mc_count,
                               cfg.mc_seed, mode)


def _with_mc_variance(res: ArcLengthMoments, rep: McReport) -> ArcLengthMoments:
    """Attach a sampled second moment to an analytic one-output mean."""
    diag = dict(res.diagnostics)
    diag.pop("variance_reason", None)
    diag["mc"] = rep.to_dict()
    second = rep.empirical_variance + res.mean ** 2
    return ArcLengthMoments(res.mean, second, rep.empirical_variance,
                            Method.MONTE_CARLO_FALLBACK, diag)


def analytic_moments(cfg: RunConfig, gp: GpPosterior) -> ArcLengthMoments:
    if cfg.output_dim == 1:
        if gp.is_prior:
            return prior_moments_1d(cfg.kernel, cfg.interval)
        return posterior_moments_1d(gp, cfg.interval, cfg.quadrature)
    if gp.is_prior:
        return prior_moments_nd(cfg.vector_kernel, cfg.interval, cfg.quadrature, cfg.series)
    return posterior_moments_nd(gp, cfg.interval, cfg.quadrature, cfg.series, cfg.rho_policy)


def cmd_prior_moments(args) -> int:
    cfg = _seeded(load_config(args.config), args)
    gp = GpPosterior.prior(cfg.vector_kernel)
    res = analytic_moments(cfg, gp)
    if args.mc_variance and cfg.output_dim == 1:
        res = _with_mc_variance(res, _mc(cfg, gp))
    with _output(args.out) as fh:
        fh.write(dump_json(moments_json(res), "moments"))
    return EXIT_OK


def cmd_posterior_moments(args) -> int:
    cfg = _seeded(load_config(args.config), args)
    gp = load_gp(cfg, require_observations=True)
    res = analytic_moments(cfg, gp)
    res.diagnostics["observations"] = 0 if gp.is_prior else gp.obs.n
    if args.mc_variance and cfg.output_dim == 1:
        res = _with_mc_variance(res, _mc(cfg, gp))
    with _output(args.out) as fh:
        fh.write(dump_json(moments_json(res), "moments"))
    return EXIT_OK


def integrand_grid(mu: float, sigma: float, points: int) -> np.ndarray:
    """y nodes for tabulating the integrand density.

    Half the nodes are log-spaced in y - 1 (the density has an inverse
    square-root singularity at y = 1 when mass sits near x = 0); the rest are
    uniform over the image of |mu| +- 12 sigma so narrow peaks are resolved.
    """
    lo = max(0.0, abs(mu) - 12.0 * sigma)
    hi = abs(mu) + 12.0 * sigma
    y_max = math.hypot(1.0, hi)
    near = 1.0 + np.exp(np.linspace(math.log(1e-14), math.log(y_max - 1.0), points // 2))
    bulk = np.hypot(1.0, np.linspace(lo, hi, points - points // 2))
    return np.unique(np.concatenate([near, bulk]))


def cmd_integrand_pdf(args) -> int:
    if not (math.isfinite(args.mu) and args.sigma > 0 and math.isfinite(args.sigma)):
        raise InputError("--sigma must be a positive finite number and --mu finite")
    if args.points < 4:
        raise InputError("--points must be >= 4")
    d = Integrand1D(args.mu, args.sigma)
    y = integrand_grid(args.mu, args.sigma, args.points)
    pdf, cdf = pdf_1d(d, y), cdf_1d(d, y)
    with _output(args.out) as fh:
        fh.write("y,pdf,cdf\n")
        for row in zip(y, pdf, cdf):
            fh.write(",".join(fmt(v) for v in row) + "\n")
    return EXIT_OK


def parse_grid(text: str) -> np.ndarray:
    """``lo:hi:n`` (n evenly spaced values) or a comma-separated list."""
    try:
        if ":" in text:
            lo, hi, n = text.split(":")
            n = int(n)
            if n < 1:
                raise ValueError
            vals = np.linspace(float(lo), float(hi), n) if n > 1 else np.array([float(lo)])
        else:
            vals = np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise InputError(f"bad grid {text!r}; use lo:hi:n or v1,v2,...") from None
    if vals.size == 0 or np.any(~np.isfinite(vals)) or np.any(vals <= 0):
        raise InputError(f"grid {text!r} must contain positive finite values")
    return vals


def cmd_heatmap(args) -> int:
    cfg = load_config(args.config)
    lams, sigmas = parse_grid(args.lambda_grid), parse_grid(args.sigma_grid)
    base = cfg.kernel
    with _output(args.out) as fh:
        fh.write("lambda,sigma,log_mean\n")
        for lam in lams:
            for sig in sigmas:
                k = KernelSpec(base.family, lam * lam, sig, base.rq_shape)
                val = math.log(prior_mean_1d(k, cfg.interval))
                fh.write(f"{fmt(lam)},{fmt(sig)},{fmt(val)}\n")
    return EXIT_OK


def cmd_sample_lengths(args) -> int:
    cfg = _seeded(load_config(args.config), args)
    gp = load_gp(cfg, require_observations=False)
    rep = _mc(cfg, gp)
    with _output(args.out) as fh:
        fh.write("draw_index,length\n")
        for i, v in enumerate(rep.lengths):
            fh.write(f"{i},{fmt(v)}\n")
    report = dump_json(rep.to_dict(), "mc_report")
    if args.report is not None:
        with _output(args.report) as fh:
            fh.write(report)
    elif args.out is not None:
        sys.stdout.write(report)
    else:
        sys.stderr.write(report)
    return EXIT_OK


def validation_report(cfg: RunConfig, gp: GpPosterior) -> dict:
    ana = analytic_moments(cfg, gp)
    rep = _mc(cfg, gp)
    z = (ana.mean - rep.empirical_mean) / rep.mean_std_error if rep.mean_std_error > 0 else 0.0
    ratio = None
    if ana.variance is not None and rep.empirical_variance > 0:
        ratio = ana.variance / rep.empirical_variance
    return {
        "analytic_mean": ana.mean,
        "empirical_mean": rep.empirical_mean,
        "z_mean": z,
        "analytic_variance": ana.variance,
        "empirical_variance": rep.empirical_variance,
        "variance_ratio": ratio,
        "passed": bool(abs(z) <= VALIDATE_Z_LIMIT),
        "mc": rep.to_dict(),
    }


def cmd_validate(args) -> int:
    cfg = _seeded(load_config(args.config), args)
    gp = load_gp(cfg, require_observations=False)
    report = validation_report(cfg, gp)
    with _output(args.out) as fh:
        fh.write(dump_json(report, "validate"))
    if not report["passed"]:
        print(f"validation failed: |z_mean| = {abs(report['z_mean']):.3f} > {VALIDATE_Z_LIMIT}",
              file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _u64(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be in [0, 2^64)")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gp-arclength",
        description="Moments of Gaussian-process arc length, with Monte Carlo checks.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_, config=True, seed=False):
        p = sub.add_parser(name, help=help_, description=help_)
        if config:
            p.add_argument("--config", help="JSON run configuration")
        if seed:
            p.add_argument("--seed", type=_u64, help="override mc.seed")
        p.add_argument("--out", help="output file (default: stdout)")
        p.set_defaults(func=func)
        return p

    for name, func, help_ in (
            ("prior-moments", cmd_prior_moments, "arc-length moments under the prior"),
            ("posterior-moments", cmd_posterior_moments,
             "arc-length moments under the posterior given observations_path")):
        p = add(name, func, help_, seed=True)
        p.add_argument("--mc-variance", action="store_true",
                       help="one output only: estimate the variance by sampling")

    p = add("integrand-pdf", cmd_integrand_pdf,
            "tabulate density and CDF of sqrt(1 + X^2), X ~ N(mu, sigma^2)")
    p.add_argument("--mu", type=float, default=0.0)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--points", type=int, default=4001)

    p = add("heatmap", cmd_heatmap, "log expected one-output length over (lambda, sigma)")
    p.add_argument("--lambda-grid", default="0.1:5:20",
                   help="signal amplitudes, lo:hi:n or a comma list")
    p.add_argument("--sigma-grid", default="0.1:5:20",
                   help="length scales, lo:hi:n or a comma list")

    p = add("sample-lengths", cmd_sample_lengths, "sampled path lengths as CSV", seed=True)
    p.add_argument("--report", help="McReport JSON file (default: stdout if --out is "
                                    "given, otherwise stderr)")

    add("validate", cmd_validate, "compare analytic moments with sampled lengths", seed=True)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ConvergenceError, SingularModelError, ArithmeticError,
            np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        # domain checks inside the library (bad B, bad interval, ...)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

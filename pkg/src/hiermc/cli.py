"""Command-line interface: ``fit``, ``compare``, ``simulate`` and ``diagnose``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 sampler fault,
4 convergence failure under ``--require-converged``.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .data_io import (
    DataError,
    SimEnergyConfig,
    SimLogLogConfig,
    load_csv,
    read_samples,
    simulate_energy,
    simulate_loglog,
    write_csv,
    write_samples,
)
from .diagnostics import check_convergence
from .mcmc import ChainFaults, SamplerConfig, SamplerFault, run_multi
from .model_spec import Effect, EffectPrior, Family, ModelSpec
from .selection import FitReport, build_report, compare, quantile_plot_data
from .stats_core import RngStream

log = logging.getLogger(__name__)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_FAULT, EXIT_UNCONVERGED = 0, 1, 2, 3, 4

# Stream id for posterior predictive replicates, kept clear of chain ids.
RESIDUAL_STREAM = 10_000

# The nine cells of the family x structure lattice, in table order.
SWEEP_CELLS = (
    ("normal", "none"), ("normal", "additive"), ("normal", "model3"),
    ("lognormal", "none"), ("lognormal", "additive"), ("lognormal", "model3"),
    ("gamma", "none"), ("gamma", "additive"), ("gamma", "model3"),
)

FIT_DEFAULTS = {
    "family": "normal",
    "effect": "none",
    "effect_prior": None,
    "interaction": True,
    "dlw_only": False,
    "iters": 200_000,
    "burnin": 100_000,
    "thin": 50,
    "chains": 3,
    "seed": None,
    "jitter": 1.0,
    "workers": 1,
    "dump_effects": False,
    "require_converged": False,
}

# Prior-sensitivity variants of the additive-effect cells: the log-normal
# model under the uniform-SD prior and the gamma model under the gamma
# variance prior (each is the non-default prior for its family).
PRESETS = {
    "lognormal-additive-gelman": {"family": "lognormal", "effect": "additive",
                                  "effect_prior": "gelman"},
    "gamma-additive-gamma-od": {"family": "gamma", "effect": "additive",
                                "effect_prior": "gamma-od"},
}

_BOOL_KEYS = {"interaction", "dlw_only", "dump_effects", "require_converged"}
_INT_KEYS = {"iters", "burnin", "thin", "chains", "seed", "workers"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that exits with the usage code 1 instead of 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _parse_bool(key: str, raw: str) -> bool:
    v = raw.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"config key {key!r} expects a boolean, got {raw!r}")


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines.  ``#`` starts a comment; keys use underscores."""
    out = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}") from None
    for no, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config line {no}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in FIT_DEFAULTS:
            raise UsageError(f"config line {no}: unknown key {key!r}")
        if key in _BOOL_KEYS:
            out[key] = _parse_bool(key, raw)
        elif key in _INT_KEYS:
            try:
                out[key] = int(raw)
            except ValueError:
                raise UsageError(f"config line {no}: {key} must be an integer") from None
        elif key == "jitter":
            try:
                out[key] = float(raw)
            except ValueError:
                raise UsageError(f"config line {no}: jitter must be a number") from None
        else:
            out[key] = raw
    return out


def _env_seed() -> int | None:
    raw = os.environ.get("HIERMC_SEED")
    if raw is None or raw.strip() == "":
        return None
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"HIERMC_SEED must be an integer, got {raw!r}") from None


def effective_settings(args) -> dict:
    """Merge defaults, the optional config file and explicit flags (flags win)."""
    settings = dict(FIT_DEFAULTS)
    preset = getattr(args, "preset", None)
    if preset:
        settings.update(PRESETS[preset])
    if getattr(args, "config", None):
        settings.update(read_config_file(args.config))
    for key in FIT_DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    if settings["seed"] is None:
        env = _env_seed()
        settings["seed"] = 0 if env is None else env
    if settings["family"] not in {f.value for f in Family}:
        raise UsageError(f"unknown family {settings['family']!r}")
    if settings["effect"] not in ("none", "additive", "model3"):
        raise UsageError(f"unknown effect {settings['effect']!r}")
    if settings["effect_prior"] not in (None, "gelman", "gamma-od"):
        raise UsageError(f"unknown effect prior {settings['effect_prior']!r}")
    return settings


def build_spec(settings: dict) -> ModelSpec:
    family = Family(settings["family"])
    effect = Effect.parse(settings["effect"], family)
    prior = settings["effect_prior"]
    try:
        return ModelSpec(
            family=family,
            effect=effect,
            include_interaction=settings["interaction"] and not settings["dlw_only"],
            include_covariates=not settings["dlw_only"],
            effect_prior=None if prior is None else EffectPrior(prior),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def build_sampler_config(settings: dict) -> SamplerConfig:
    try:
        return SamplerConfig(
            iterations=settings["iters"],
            burn_in=settings["burnin"],
            thin=settings["thin"],
            n_chains=settings["chains"],
            seed=settings["seed"],
            init_jitter=settings["jitter"],
            workers=settings["workers"],
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _load_data(path):
    try:
        return load_csv(path)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from None
    except DataError:
        raise
    except ValueError as exc:
        raise DataError(str(exc)) from None


def fit_to_dir(data, spec: ModelSpec, settings: dict, out_dir, data_path=None) -> FitReport:
    """Run the chains, write the four artifacts and return the report.

    Raises :class:`ChainFaults` if any chain faults.
    """
    config = build_sampler_config(settings)
    chains = run_multi(spec, data, config)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_samples(chains, out / "samples.csv", dump_effects=settings["dump_effects"])
    if len(chains) >= 2:
        conv = check_convergence(chains)
        conv_dict = conv.to_dict()
        conv_text = conv.render()
    else:
        conv_dict = None
        conv_text = "convergence not assessed: at least 2 chains are needed\n"
    provenance = dict(settings)
    provenance["data"] = None if data_path is None else str(data_path)
    report = build_report(chains, spec, data, RngStream(config.seed, RESIDUAL_STREAM),
                          convergence=conv_dict, config=provenance)
    (out / "report.json").write_text(report.to_json() + "\n", encoding="utf-8")
    (out / "convergence.txt").write_text(conv_text, encoding="utf-8")
    res = np.array([np.nan if r is None else r for r in report.residuals], dtype=float)
    q, r = quantile_plot_data(res)
    with open(out / "residuals.csv", "w", encoding="utf-8") as fh:
        fh.write("quantile,residual\n")
        for a, b in zip(q, r):
            fh.write(f"{float(a)!r},{float(b)!r}\n")
    return report


def _converged(report: FitReport) -> bool:
    return report.convergence is not None and bool(report.convergence["passed"])


def cmd_fit(args) -> int:
    settings = effective_settings(args)
    spec = build_spec(settings)
    if settings["require_converged"] and settings["chains"] < 2:
        raise UsageError("--require-converged needs at least 2 chains")
    data = _load_data(args.data)
    report = fit_to_dir(data, spec, settings, args.out, data_path=args.data)
    print(f"{spec.label}: DIC {report.dic} pD {report.pD} MSPE {report.mspe:.6g}")
    if settings["require_converged"] and not _converged(report):
        print("convergence check failed; see convergence.txt", file=sys.stderr)
        return EXIT_UNCONVERGED
    return EXIT_OK


def _load_report(directory) -> FitReport:
    path = Path(directory) / "report.json"
    try:
        return FitReport.from_json(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from None
    except (ValueError, KeyError, TypeError) as exc:
        raise DataError(f"malformed report {path}: {exc}") from None


def cmd_compare(args) -> int:
    if args.sweep:
        if args.dirs:
            raise UsageError("--sweep takes --data/--out instead of result directories")
        if not args.data or not args.out:
            raise UsageError("--sweep needs --data and --out")
        settings = effective_settings(args)
        data = _load_data(args.data)
        reports, unconverged = [], []
        for family, effect in SWEEP_CELLS:
            cell = dict(settings, family=family, effect=effect)
            spec = build_spec(cell)
            cell_dir = Path(args.out) / f"{family}-{spec.effect.value}"
            log.info("fitting %s", spec.label)
            rep = fit_to_dir(data, spec, cell, cell_dir, data_path=args.data)
            reports.append(rep)
            if not _converged(rep):
                unconverged.append(spec.label)
        table = compare(reports)
        out = Path(args.out)
        (out / "comparison.txt").write_text(table.render(), encoding="utf-8")
        (out / "comparison.csv").write_text(table.to_csv(), encoding="utf-8")
    else:
        if not args.dirs:
            raise UsageError("compare needs result directories or --sweep")
        reports = [_load_report(d) for d in args.dirs]
        try:
            table = compare(reports)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        unconverged = [r.spec.label for r in reports if not _converged(r)]
    sys.stdout.write(table.to_csv() if args.csv else table.render())
    if unconverged and getattr(args, "require_converged", None):
        print("not converged: " + ", ".join(unconverged), file=sys.stderr)
        return EXIT_UNCONVERGED
    return EXIT_OK


def _seed_or_env(seed):
    if seed is not None:
        return seed
    env = _env_seed()
    return 0 if env is None else env


def _float_list(raw: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in raw.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {raw!r}")


def cmd_simulate(args) -> int:
    seed = _seed_or_env(args.seed)
    try:
        if args.kind == "loglog":
            cfg = SimLogLogConfig(n=args.n or 500, beta0=args.beta0, beta1=args.beta1,
                                  sigma_e=args.sigma_e, x_range=(args.x_lo, args.x_hi),
                                  seed=seed)
            data = simulate_loglog(cfg).to_dataset()
            truth = None
        else:
            family = Family(args.family)
            kwargs = dict(n=args.n or 81, family=family,
                          effect=Effect.parse(args.effect, family),
                          effect_scale=args.effect_scale, noise=args.noise,
                          dlw_mean=args.dlw_mean, dlw_sd=args.dlw_sd,
                          include_interaction=not args.no_interaction, seed=seed)
            if args.beta is not None:
                kwargs["beta"] = args.beta
            elif args.no_interaction:
                kwargs["beta"] = SimEnergyConfig.beta[:4]
            data, truth = simulate_energy(SimEnergyConfig(**kwargs))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    write_csv(data, args.out)
    if truth is not None and args.truth:
        Path(args.truth).write_text(json.dumps(truth, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {data.n} rows to {args.out}")
    return EXIT_OK


def cmd_diagnose(args) -> int:
    report = _load_report(args.dir)
    try:
        chains = read_samples(Path(args.dir) / "samples.csv", report.spec)
    except OSError as exc:
        raise DataError(f"cannot read samples: {exc.strerror or exc}") from None
    except (ValueError, KeyError) as exc:
        raise DataError(f"malformed samples.csv: {exc}") from None
    print(f"model: {report.spec.label}")
    passed = None
    if len(chains) >= 2:
        conv = check_convergence(chains)
        passed = conv.passed
        sys.stdout.write(conv.render())
    else:
        print("convergence not assessed: at least 2 chains are needed")
    corr = report.resid_normal_corr
    print("residual normal-quantile correlation: " + ("undefined" if corr is None else f"{corr:.4f}"))
    print("significant: " + (", ".join(report.significant) or "none"))
    if args.require_converged and not passed:
        return EXIT_UNCONVERGED
    return EXIT_OK


def _add_sampling_flags(p):
    p.add_argument("--iters", type=int, help="total iterations per chain (default 200000)")
    p.add_argument("--burnin", type=int, help="burn-in iterations (default 100000)")
    p.add_argument("--thin", type=int, help="keep every k-th draw (default 50)")
    p.add_argument("--chains", type=int, help="number of chains (default 3)")
    p.add_argument("--seed", type=int, help="master seed (default $HIERMC_SEED or 0)")
    p.add_argument("--jitter", type=float, help="initial-value dispersion (default 1.0)")
    p.add_argument("--workers", type=int, help="worker processes for chains (default 1)")
    p.add_argument("--config", metavar="FILE", help="key = value file; flags override it")
    p.add_argument("--dump-effects", dest="dump_effects", action="store_const", const=True,
                   help="include the subject effects in samples.csv")
    p.add_argument("--require-converged", dest="require_converged", action="store_const",
                   const=True, help="exit 4 if any monitored R-hat is >= 1.1")
    p.add_argument("--effect-prior", dest="effect_prior", choices=["gelman", "gamma-od"])
    p.add_argument("--no-interaction", dest="interaction", action="store_const", const=False,
                   help="drop the socdes x edu interaction")
    p.add_argument("--dlw-only", dest="dlw_only", action="store_const", const=True,
                   help="regress on DLW alone")


def make_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hiermc",
                     description="Bayesian hierarchical models of self-reported energy intake.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("fit", help="fit one model cell")
    p.add_argument("--data", required=True, metavar="F")
    p.add_argument("--family", choices=[f.value for f in Family])
    p.add_argument("--effect", choices=["none", "additive", "model3"])
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--preset", choices=sorted(PRESETS),
                   help="named prior-sensitivity variant; other flags override it")
    _add_sampling_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("compare", help="tabulate fitted cells, or fit all nine with --sweep")
    p.add_argument("dirs", nargs="*", metavar="DIR")
    p.add_argument("--csv", action="store_true", help="emit CSV instead of the text table")
    p.add_argument("--sweep", action="store_true", help="fit the full 3 x 3 lattice first")
    p.add_argument("--data", metavar="F")
    p.add_argument("--out", metavar="DIR")
    _add_sampling_flags(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("simulate", help="write a synthetic dataset")
    p.add_argument("kind", choices=["loglog", "energy"])
    p.add_argument("--out", required=True, metavar="F")
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--beta0", type=float, default=1.0, help="loglog scale")
    p.add_argument("--beta1", type=float, default=1.2, help="loglog exponent")
    p.add_argument("--sigma-e", dest="sigma_e", type=float, default=0.3)
    p.add_argument("--x-lo", dest="x_lo", type=float, default=1.0)
    p.add_argument("--x-hi", dest="x_hi", type=float, default=10.0)
    p.add_argument("--family", choices=[f.value for f in Family], default="normal")
    p.add_argument("--effect", choices=["none", "additive", "model3"], default="none")
    p.add_argument("--effect-scale", dest="effect_scale", type=float, default=0.0)
    p.add_argument("--noise", type=float, default=200.0)
    p.add_argument("--beta", type=_float_list, help="comma-separated coefficients")
    p.add_argument("--dlw-mean", dest="dlw_mean", type=float, default=2300.0)
    p.add_argument("--dlw-sd", dest="dlw_sd", type=float, default=300.0)
    p.add_argument("--no-interaction", action="store_true")
    p.add_argument("--truth", metavar="F", help="also write the generating values as JSON")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("diagnose", help="re-render convergence and residual diagnostics")
    p.add_argument("dir", metavar="DIR")
    p.add_argument("--require-converged", action="store_true")
    p.set_defaults(func=cmd_diagnose)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"hiermc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"hiermc: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ChainFaults as exc:
        for fault in exc.faults:
            print(f"hiermc: sampler fault: {fault}", file=sys.stderr)
        return EXIT_FAULT
    except SamplerFault as exc:
        print(f"hiermc: sampler fault: {exc}", file=sys.stderr)
        return EXIT_FAULT


if __name__ == "__main__":
    sys.exit(main())

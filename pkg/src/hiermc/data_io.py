"""Dataset files, synthetic data generators and the posterior sample dump."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .mcmc import PosteriorSamples
from .model_spec import (
    COEF_NAMES,
    Dataset,
    Effect,
    Family,
    ModelSpec,
    ParameterState,
    linear_predictor,
)
from .stats_core import RngStream

__all__ = [
    "DataError",
    "load_csv",
    "write_csv",
    "SimLogLogConfig",
    "LogLogData",
    "simulate_loglog",
    "SimEnergyConfig",
    "simulate_energy",
    "SAMPLE_COLUMNS",
    "write_samples",
    "read_samples",
]

CSV_COLUMNS = ("ffq", "dlw", "socdes", "edu")


class DataError(ValueError):
    """Malformed dataset file; message names the offending row/column."""

    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        self.row = row
        self.column = column
        loc = []
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column '{column}'")
        super().__init__(f"{', '.join(loc)}: {message}" if loc else message)


def load_csv(path) -> Dataset:
    """Read a ``ffq,dlw,socdes,edu`` file.  Rows are numbered from 1 after the header."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError("empty file") from None
        missing = [c for c in CSV_COLUMNS if c not in header]
        if missing:
            raise DataError(f"missing column(s) {', '.join(missing)}", column=missing[0])
        idx = {c: header.index(c) for c in CSV_COLUMNS}
        cols = {c: [] for c in CSV_COLUMNS}
        for row_no, row in enumerate(reader, start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            for c in CSV_COLUMNS:
                try:
                    raw = row[idx[c]].strip()
                except IndexError:
                    raise DataError("missing value", row_no, c) from None
                try:
                    v = float(raw)
                except ValueError:
                    raise DataError(f"non-numeric value {raw!r}", row_no, c) from None
                if not math.isfinite(v):
                    raise DataError(f"non-finite value {raw!r}", row_no, c)
                if c in ("ffq", "dlw") and v <= 0:
                    raise DataError(f"{c} must be > 0, got {raw}", row_no, c)
                if c == "edu" and v not in (0.0, 1.0):
                    raise DataError(f"edu must be 0 or 1, got {raw}", row_no, c)
                cols[c].append(v)
    n = len(cols["ffq"])
    if n < 2:
        raise DataError(f"need at least 2 data rows, got {n}")
    return Dataset(y=cols["ffq"], x1=cols["dlw"], x2=cols["socdes"], x3=cols["edu"])


def write_csv(data: Dataset, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row in zip(data.y, data.x1, data.x2, data.x3):
            w.writerow([repr(float(v)) for v in row[:3]] + [str(int(row[3]))])


@dataclass(frozen=True)
class SimLogLogConfig:
    n: int = 500
    beta0: float = 1.0
    beta1: float = 1.2
    sigma_e: float = 0.3
    x_range: tuple[float, float] = (1.0, 10.0)
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.x_range
        if self.n < 2:
            raise ValueError("n must be >= 2")
        if not (0 < lo < hi):
            raise ValueError("x_range must satisfy 0 < lo < hi")
        if not self.beta0 > 0:
            raise ValueError("beta0 must be > 0")
        if self.sigma_e < 0:
            raise ValueError("sigma_e must be >= 0")


@dataclass(frozen=True)
class LogLogData:
    x: np.ndarray
    y: np.ndarray

    def to_dataset(self) -> Dataset:
        """Embed as a dataset with y on DLW only (x2 = x3 = 0)."""
        z = np.zeros_like(self.x)
        return Dataset(y=self.y, x1=self.x, x2=z, x3=z)


def simulate_loglog(cfg: SimLogLogConfig) -> LogLogData:
    """``y = beta0 * x**beta1 * exp(e)`` with ``x ~ U(lo, hi)``, ``e ~ N(0, sigma_e^2)``."""
    rng = RngStream(cfg.seed)
    x = rng.generator.uniform(cfg.x_range[0], cfg.x_range[1], cfg.n)
    e = cfg.sigma_e * rng.generator.standard_normal(cfg.n)
    y = cfg.beta0 * x ** cfg.beta1 * np.exp(e)
    return LogLogData(x=x, y=y)


@dataclass(frozen=True)
class SimEnergyConfig:
    """ENERGY-like cohort generator.

    ``noise`` is the outcome sd (normal: kcal/day, log-normal: log scale) or
    the gamma shape ``r_y``.  ``effect_scale`` is the sd of additive or
    measurement-error effects, or the Gamma(tau, tau) shape for
    multiplicative ones.
    """

    n: int = 81
    beta: tuple[float, ...] = (500.0, 0.5, 10.0, 650.0, 0.0)
    family: Family = Family.NORMAL
    effect: Effect = Effect.NONE
    effect_scale: float = 0.0
    noise: float = 200.0
    dlw_mean: float = 2300.0
    dlw_sd: float = 300.0
    socdes_mean: float = 0.0
    socdes_sd: float = 1.0
    edu_prob: float = 0.5
    include_interaction: bool = True
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        object.__setattr__(self, "effect", Effect(self.effect))
        if self.n < 2:
            raise ValueError("n must be >= 2")
        need = 5 if self.include_interaction else 4
        if len(self.beta) != need:
            raise ValueError(f"beta must have {need} entries")
        if self.noise < 0 or self.effect_scale < 0:
            raise ValueError("noise and effect_scale must be >= 0")
        if self.family is Family.GAMMA and not self.noise > 0:
            raise ValueError("gamma outcomes need a positive shape (noise)")
        if self.effect is Effect.MULTIPLICATIVE and not self.effect_scale > 0:
            raise ValueError("multiplicative effects need a positive shape (effect_scale)")
        if self.dlw_mean <= 0 or self.dlw_sd < 0 or not 0 <= self.edu_prob <= 1:
            raise ValueError("invalid covariate generator settings")

    def spec(self) -> ModelSpec:
        return ModelSpec(family=self.family, effect=self.effect,
                         include_interaction=self.include_interaction)


def simulate_energy(cfg: SimEnergyConfig) -> tuple[Dataset, dict]:
    """Generate covariates, subject effects and outcomes from one model cell.

    Returns the dataset and a truth record.  Raises ValueError when the
    draw yields outcomes or gamma means that are not strictly positive.
    """
    rng = RngStream(cfg.seed)
    g = rng.generator
    n = cfg.n
    x1 = np.abs(cfg.dlw_mean + cfg.dlw_sd * g.standard_normal(n))
    x2 = cfg.socdes_mean + cfg.socdes_sd * g.standard_normal(n)
    x3 = (g.random(n) < cfg.edu_prob).astype(float)
    if cfg.effect is Effect.NONE:
        eps = None
    elif cfg.effect is Effect.MULTIPLICATIVE:
        eps = g.gamma(cfg.effect_scale, 1.0 / cfg.effect_scale, n)
    else:
        eps = cfg.effect_scale * g.standard_normal(n)
    spec = cfg.spec()
    state = ParameterState(beta=np.asarray(cfg.beta, dtype=float),
                           var_beta=np.ones(len(cfg.beta)), eps=eps)
    # Covariates only; y is a placeholder so the predictor can be evaluated.
    frame = Dataset(y=np.ones(n), x1=x1, x2=x2, x3=x3)
    mu = np.array([linear_predictor(spec, state, frame, i) for i in range(n)])
    if cfg.family is Family.NORMAL:
        y = mu + cfg.noise * g.standard_normal(n)
    elif cfg.family is Family.LOGNORMAL:
        y = np.exp(mu + cfg.noise * g.standard_normal(n))
    else:
        if np.any(mu <= 0):
            raise ValueError("gamma outcome requires a positive linear predictor")
        y = g.gamma(cfg.noise, mu / cfg.noise)
    if np.any(y <= 0):
        raise ValueError("configuration produced non-positive outcomes")
    truth = {
        "beta": list(map(float, cfg.beta)),
        "eps": None if eps is None else eps.tolist(),
        "mu": mu.tolist(),
        "family": cfg.family.value,
        "effect": cfg.effect.value,
        "noise": cfg.noise,
        "effect_scale": cfg.effect_scale,
    }
    return Dataset(y=y, x1=x1, x2=x2, x3=x3), truth


SAMPLE_COLUMNS = ("chain", "iter", *COEF_NAMES, "var_y", "var_eps", "r_y", "alpha1",
                  "alpha2", "deviance")
VAR_BETA_COLUMNS = tuple(f"var_{b}" for b in COEF_NAMES)


def _cell(v) -> str:
    return "" if v is None else repr(float(v))


def write_samples(chains: list[PosteriorSamples], path, dump_effects: bool = False) -> None:
    """One row per retained draw per chain; inactive parameters are blank."""
    spec = chains[0].spec
    names = spec.coef_names
    n_eps = len(chains[0].draws[0].eps) if (dump_effects and spec.has_eps) else 0
    header = list(SAMPLE_COLUMNS) + list(VAR_BETA_COLUMNS) + [f"eps_{i + 1}" for i in range(n_eps)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for ch in chains:
            for it, d, dev in zip(ch.iterations, ch.draws, ch.deviance_trace):
                beta = dict(zip(names, d.beta))
                vb = dict(zip(names, d.var_beta))
                row = [str(ch.chain_id), str(int(it))]
                row += [_cell(beta.get(b)) for b in COEF_NAMES]
                row += [_cell(d.var_y), _cell(d.var_eps), _cell(d.r_y), _cell(d.alpha1),
                        _cell(d.alpha2), _cell(dev)]
                row += [_cell(vb.get(b)) for b in COEF_NAMES]
                if n_eps:
                    row += [repr(float(e)) for e in d.eps]
                w.writerow(row)


def read_samples(path, spec: ModelSpec) -> list[PosteriorSamples]:
    """Inverse of :func:`write_samples`.  Without dumped effects ``eps`` is None."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        eps_cols = [c for c in reader.fieldnames if c.startswith("eps_")]
        by_chain: dict[int, dict] = {}

        def opt(row, key):
            v = row.get(key, "")
            return None if v in ("", None) else float(v)

        for row in reader:
            cid = int(row["chain"])
            slot = by_chain.setdefault(cid, {"draws": [], "dev": [], "iters": []})
            state = ParameterState(
                beta=np.array([float(row[b]) for b in spec.coef_names]),
                var_beta=np.array([opt(row, f"var_{b}") or math.nan for b in spec.coef_names]),
                eps=np.array([float(row[c]) for c in eps_cols]) if eps_cols else None,
                var_y=opt(row, "var_y"),
                var_eps=opt(row, "var_eps"),
                r_y=opt(row, "r_y"),
                alpha1=opt(row, "alpha1"),
                alpha2=opt(row, "alpha2"),
            )
            slot["draws"].append(state)
            slot["dev"].append(float(row["deviance"]))
            slot["iters"].append(int(row["iter"]))
    return [PosteriorSamples(draws=v["draws"], deviance_trace=np.array(v["dev"]), chain_id=c,
                             spec=spec, iterations=np.array(v["iters"], dtype=int))
            for c, v in sorted(by_chain.items())]

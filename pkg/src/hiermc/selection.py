"""Model comparison: DIC, posterior predictive loss and residual diagnostics.

DIC is computed from the deviance ``-2 log L``; for the log-normal family
the likelihood is that of ``log(y)``, so its DIC is on the log scale.  MSPE
always compares against ``y`` on the original kcal/day scale.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .diagnostics import ParamSummary, summarize
from .model_spec import (
    Dataset,
    Effect,
    EffectPrior,
    Family,
    ModelSpec,
    ParameterState,
    design_matrix,
    log_likelihood,
    outcome_mean,
    predictor_vector,
)
from .stats_core import RngStream, normal_quantile

__all__ = [
    "DicResult",
    "FitReport",
    "ComparisonTable",
    "deviance",
    "pool",
    "posterior_mean_state",
    "dic",
    "mspe",
    "predictive_residuals",
    "residual_normal_correlation",
    "quantile_plot_data",
    "build_report",
    "compare",
]


def deviance(spec: ModelSpec, state: ParameterState, data: Dataset) -> float:
    """``-2 * log_likelihood``; ``+inf`` when the likelihood is zero."""
    ll = log_likelihood(spec, state, data)
    return math.inf if ll == -math.inf else -2.0 * ll


def pool(samples) -> tuple[list[ParameterState], np.ndarray]:
    """Flatten one or several :class:`PosteriorSamples` into draws + deviances."""
    if hasattr(samples, "draws"):
        samples = [samples]
    draws = [d for s in samples for d in s.draws]
    devs = np.concatenate([np.asarray(s.deviance_trace, dtype=float) for s in samples])
    return draws, devs


def _mean(values, axis=None):
    """Arithmetic mean that returns a constant input bit-for-bit unchanged."""
    x = np.asarray(values, dtype=float)
    ref = x[0] if axis == 0 else x.ravel()[0]
    return ref + np.mean(x - ref, axis=axis)


def _mean_sd_scale(values, axis=None):
    x = np.asarray(values, dtype=float)
    if np.all(x == (x[0] if axis == 0 else x.ravel()[0])):
        return x[0] if axis == 0 else float(x.ravel()[0])
    return _mean(np.sqrt(x), axis=axis) ** 2


def posterior_mean_state(draws: list[ParameterState], spec: ModelSpec
                         ) -> tuple[ParameterState, bool]:
    """Coordinate-wise posterior mean, variances averaged as standard deviations.

    Returns the state and whether any coordinate had to be clamped back into
    its prior support.
    """
    pr = spec.priors
    beta = _mean([d.beta for d in draws], axis=0)
    var_beta = np.array([_mean_sd_scale(col) for col in np.array([d.var_beta for d in draws]).T])
    clamped = bool(np.any(var_beta > pr.B_beta ** 2))
    state = ParameterState(beta=beta, var_beta=np.minimum(var_beta, pr.B_beta ** 2))

    def clamp(v, upper):
        nonlocal clamped
        if v > upper:
            clamped = True
            return upper
        return v

    if spec.has_var_y:
        state.var_y = clamp(_mean_sd_scale([d.var_y for d in draws]), pr.B_y ** 2)
    if spec.family is Family.GAMMA:
        state.r_y = float(_mean([d.r_y for d in draws]))
    if spec.has_eps:
        state.eps = _mean([d.eps for d in draws], axis=0)
        if spec.effect is Effect.MULTIPLICATIVE:
            state.var_eps = clamp(float(_mean([d.var_eps for d in draws])), pr.mult_tau_bound)
        elif spec.effect_prior is EffectPrior.GELMAN_UNIFORM:
            state.var_eps = clamp(_mean_sd_scale([d.var_eps for d in draws]), pr.B_eps ** 2)
        else:
            state.var_eps = _mean_sd_scale([d.var_eps for d in draws])
        if spec.has_alpha:
            state.alpha1 = float(_mean([d.alpha1 for d in draws]))
            state.alpha2 = float(_mean([d.alpha2 for d in draws]))
    return state, clamped


@dataclass(frozen=True)
class DicResult:
    dbar: float
    d_at_mean: float
    pD: float | None
    dic: float | None
    pd_negative: bool = False
    clamped: bool = False

    @property
    def undefined(self) -> bool:
        return self.dic is None


def dic(samples, spec: ModelSpec, data: Dataset) -> DicResult:
    """DIC = Dbar + pD with pD = Dbar - D(posterior mean state)."""
    draws, devs = pool(samples)
    if len(draws) < 2:
        raise ValueError("DIC needs at least 2 pooled draws")
    dbar = float(_mean(devs))
    mean_state, clamped = posterior_mean_state(draws, spec)
    d_mean = deviance(spec, mean_state, data)
    if not math.isfinite(d_mean):
        return DicResult(dbar, d_mean, None, None, False, clamped)
    pd = dbar - d_mean
    return DicResult(dbar, d_mean, pd, dbar + pd, pd < 0, clamped)


def _predictor_matrix(draws, spec: ModelSpec, data: Dataset) -> np.ndarray:
    X = design_matrix(spec, data)
    return np.array([predictor_vector(spec, d, data, X) for d in draws])


def mspe(samples, spec: ModelSpec, data: Dataset) -> float:
    """Mean squared difference between ``y`` and its posterior predictive mean."""
    draws, _ = pool(samples)
    if not draws:
        raise ValueError("MSPE needs at least 1 draw")
    mu = _predictor_matrix(draws, spec, data)
    if spec.family is Family.LOGNORMAL:
        var_y = np.array([d.var_y for d in draws])[:, None]
        pred = outcome_mean(spec, mu, var_y)
    else:
        pred = mu
    yhat = pred.mean(axis=0)
    return float(np.mean((data.y - yhat) ** 2))


def predictive_residuals(samples, spec: ModelSpec, data: Dataset, rng: RngStream) -> np.ndarray:
    """Standardized predictive residuals ``(y - mean(y_rep)) / sd(y_rep)``.

    One replicate per retained draw.  Entries whose replicates have zero
    spread are returned as NaN.
    """
    draws, _ = pool(samples)
    if len(draws) < 2:
        raise ValueError("predictive residuals need at least 2 draws")
    mu = _predictor_matrix(draws, spec, data)
    gen = rng.generator
    if spec.family is Family.GAMMA:
        r = np.array([d.r_y for d in draws])[:, None]
        shape = np.broadcast_to(r, mu.shape)
        with np.errstate(divide="ignore", invalid="ignore"):
            scale = np.where(mu > 0, mu / r, np.nan)
        yrep = gen.gamma(shape, np.nan_to_num(scale, nan=1.0))
        yrep[~(mu > 0)] = np.nan
    else:
        sd = np.sqrt(np.array([d.var_y for d in draws]))[:, None]
        yrep = mu + sd * gen.standard_normal(mu.shape)
        if spec.family is Family.LOGNORMAL:
            yrep = np.exp(yrep)
    center = yrep.mean(axis=0)
    spread = yrep.std(axis=0, ddof=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        res = (data.y - center) / spread
    res[~(spread > 0)] = np.nan
    return res


def quantile_plot_data(residuals) -> tuple[np.ndarray, np.ndarray]:
    """Plotting positions ``(i - 0.5)/n`` as normal quantiles, with sorted residuals."""
    r = np.sort(np.asarray(residuals, dtype=float)[~np.isnan(residuals)])
    n = r.shape[0]
    q = np.array([normal_quantile((i - 0.5) / n) for i in range(1, n + 1)])
    return q, r


def residual_normal_correlation(residuals) -> float:
    """Pearson correlation of sorted residuals with normal plotting quantiles.

    Undefined residuals (NaN) are ignored; returns NaN if fewer than 3 remain
    or the residuals have no spread.
    """
    r = np.asarray(residuals, dtype=float)
    if np.count_nonzero(~np.isnan(r)) < 3:
        return math.nan
    q, r = quantile_plot_data(r)
    if np.ptp(r) == 0:
        return math.nan
    c = float(np.corrcoef(q, r)[0, 1])
    return min(1.0, max(-1.0, c))


def _num(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


@dataclass
class FitReport:
    spec: ModelSpec
    dbar: float
    d_at_mean: float | None
    pD: float | None
    dic: float | None
    mspe: float
    summaries: list[ParamSummary]
    residuals: list[float | None]
    resid_normal_corr: float | None
    pd_negative: bool = False
    dic_undefined: bool = False
    clamped: bool = False
    convergence: dict | None = None
    config: dict = field(default_factory=dict)

    @property
    def significant(self) -> list[str]:
        return [s.name for s in self.summaries if s.significant and s.name.startswith("beta")]

    def to_dict(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "dbar": self.dbar,
            "d_at_mean": self.d_at_mean,
            "pD": self.pD,
            "dic": self.dic,
            "mspe": self.mspe,
            "pd_negative": self.pd_negative,
            "dic_undefined": self.dic_undefined,
            "clamped": self.clamped,
            "summaries": [s.to_dict() for s in self.summaries],
            "significant": self.significant,
            "residuals": list(self.residuals),
            "resid_normal_corr": self.resid_normal_corr,
            "convergence": self.convergence,
            "config": self.config,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, allow_nan=False)

    @classmethod
    def from_dict(cls, d: dict) -> "FitReport":
        return cls(
            spec=ModelSpec.from_dict(d["spec"]),
            dbar=d["dbar"],
            d_at_mean=d["d_at_mean"],
            pD=d["pD"],
            dic=d["dic"],
            mspe=d["mspe"],
            summaries=[ParamSummary(**s) for s in d["summaries"]],
            residuals=list(d["residuals"]),
            resid_normal_corr=d["resid_normal_corr"],
            pd_negative=d["pd_negative"],
            dic_undefined=d["dic_undefined"],
            clamped=d["clamped"],
            convergence=d.get("convergence"),
            config=d.get("config", {}),
        )

    @classmethod
    def from_json(cls, text: str) -> "FitReport":
        return cls.from_dict(json.loads(text))


def build_report(samples, spec: ModelSpec, data: Dataset, rng: RngStream,
                 convergence: dict | None = None, config: dict | None = None) -> FitReport:
    """Assemble DIC, MSPE, summaries and residual diagnostics for one fit."""
    from .diagnostics import monitored_names

    chains = [samples] if hasattr(samples, "draws") else list(samples)
    d = dic(chains, spec, data)
    summaries = []
    for name in monitored_names(spec):
        if name == "deviance":
            continue
        trace = np.concatenate([ch.trace(name) for ch in chains])
        summaries.append(summarize(trace, name))
    res = predictive_residuals(chains, spec, data, rng)
    corr = residual_normal_correlation(res)
    return FitReport(
        spec=spec,
        dbar=d.dbar,
        d_at_mean=_num(d.d_at_mean),
        pD=d.pD,
        dic=d.dic,
        mspe=mspe(chains, spec, data),
        summaries=summaries,
        residuals=[_num(r) for r in res],
        resid_normal_corr=_num(corr),
        pd_negative=d.pd_negative,
        dic_undefined=d.undefined,
        clamped=d.clamped,
        convergence=convergence,
        config=dict(config or {}),
    )


_COLUMN = {Effect.NONE: "I", Effect.ADDITIVE: "II", Effect.MEAS_ERR: "III",
           Effect.MULTIPLICATIVE: "III"}
_ROWS = {Family.NORMAL: "Normal", Family.LOGNORMAL: "LogNormal", Family.GAMMA: "Gamma"}


@dataclass
class ComparisonTable:
    """Family x effect-structure grid of (MSPE, DIC, significant coefficients)."""

    cells: dict[tuple[str, str], FitReport]
    best_dic: tuple[str, str] | None
    best_mspe: tuple[str, str] | None

    @property
    def rows(self) -> list[str]:
        return [r for r in _ROWS.values() if any(k[0] == r for k in self.cells)]

    @property
    def columns(self) -> list[str]:
        return [c for c in ("I", "II", "III") if any(k[1] == c for k in self.cells)]

    def _fmt(self, key) -> tuple[str, str, str]:
        rep = self.cells.get(key)
        if rep is None:
            return "", "", ""
        m = f"{rep.mspe:.6g}" + ("+" if key == self.best_mspe else "")
        if rep.dic is None:
            d = "undef"
        else:
            d = f"{rep.dic:.2f}" + ("*" if key == self.best_dic else "")
            if rep.pd_negative:
                d += " (a)"
        sig = ",".join(rep.significant) or "none"
        return m, d, sig

    def render(self) -> str:
        cols = self.columns
        rows = self.rows
        cells = {(r, c): self._fmt((r, c)) for r in rows for c in cols}
        w = max([len(x) for v in cells.values() for x in v] + [12])
        head1 = f"{'':<10}" + "".join(f"  {c:^{2 * w + 2}}" for c in cols)
        head2 = f"{'family':<10}" + "".join(f"  {'MSPE':>{w}}  {'DIC':>{w}}" for _ in cols)
        lines = [head1, head2]
        for r in rows:
            lines.append(f"{r:<10}" + "".join(
                f"  {cells[r, c][0]:>{w}}  {cells[r, c][1]:>{w}}" for c in cols))
            lines.append(f"{'':<10}" + "".join(
                f"  {cells[r, c][2]:<{2 * w + 2}}" for c in cols))
        lines.append("")
        lines.append("+ lowest MSPE   * lowest DIC   second line: significant coefficients")
        if any(rep.pd_negative for rep in self.cells.values()):
            lines.append("(a) negative pD: the DIC of this cell cannot be fully relied on")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["family", "structure", "effect", "mspe", "dic", "pD", "pd_negative",
                    "significant", "best_mspe", "best_dic"])
        for (r, c), rep in self.cells.items():
            w.writerow([r, c, rep.spec.effect.value, repr(rep.mspe),
                        "" if rep.dic is None else repr(rep.dic),
                        "" if rep.pD is None else repr(rep.pD), int(rep.pd_negative),
                        " ".join(rep.significant), int((r, c) == self.best_mspe),
                        int((r, c) == self.best_dic)])
        return buf.getvalue()


def compare(reports: list[FitReport]) -> ComparisonTable:
    """Arrange reports into the family x I/II/III grid and mark the winners."""
    if not reports:
        raise ValueError("compare needs at least one report")
    cells = {}
    for rep in reports:
        key = (_ROWS[rep.spec.family], _COLUMN[rep.spec.effect])
        if key in cells:
            raise ValueError(f"duplicate report for cell {key}")
        cells[key] = rep
    with_dic = [(rep.dic, k) for k, rep in cells.items() if rep.dic is not None]
    best_dic = min(with_dic)[1] if with_dic else None
    best_mspe = min((rep.mspe, k) for k, rep in cells.items())[1]
    return ComparisonTable(cells=cells, best_dic=best_dic, best_mspe=best_mspe)

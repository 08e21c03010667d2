"""Brooks-Gelman-Rubin convergence checks and posterior summaries."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

__all__ = [
    "DegenerateTraceError",
    "ParamSummary",
    "ConvergenceReport",
    "bgr_statistic",
    "summarize",
    "monitored_names",
    "check_convergence",
]


class DegenerateTraceError(ValueError):
    """Pooled within-chain variance is zero."""


@dataclass(frozen=True)
class ParamSummary:
    name: str
    mean: float
    sd: float
    q025: float
    q50: float
    q975: float
    significant: bool

    def to_dict(self) -> dict:
        return asdict(self)


def bgr_statistic(chains) -> float:
    """Potential scale reduction factor for ``m`` aligned scalar traces.

    ``W`` is the mean within-chain variance, ``B/n`` the variance of the chain
    means, ``V = (n - 1)/n * W + B/n`` and the statistic is ``sqrt(V / W)``.
    No degrees-of-freedom or ``B/(m n)`` correction is applied.
    """
    x = np.asarray(chains, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("need at least 2 chains of equal length")
    n = x.shape[1]
    if n < 2:
        raise ValueError("each chain needs at least 2 draws")
    w = float(np.mean(np.var(x, axis=1, ddof=1)))
    if not w > 0:
        raise DegenerateTraceError("within-chain variance is zero")
    b_over_n = float(np.var(np.mean(x, axis=1), ddof=1))
    v = (n - 1) / n * w + b_over_n
    return math.sqrt(v / w)


def summarize(trace, name: str) -> ParamSummary:
    """Mean, sd, 2.5/50/97.5% quantiles and a 95%-interval significance flag."""
    x = np.asarray(trace, dtype=float).ravel()
    if x.shape[0] < 2:
        raise ValueError("summarize needs at least 2 samples")
    q025, q50, q975 = np.quantile(x, [0.025, 0.5, 0.975])
    return ParamSummary(
        name=name,
        mean=float(np.mean(x)),
        sd=float(np.std(x, ddof=1)),
        q025=float(q025),
        q50=float(q50),
        q975=float(q975),
        significant=bool(q025 > 0 or q975 < 0),
    )


@dataclass
class ConvergenceReport:
    rhat: dict[str, float]
    degenerate: list[str] = field(default_factory=list)
    threshold: float = 1.1

    @property
    def failed(self) -> list[str]:
        return [k for k, v in self.rhat.items() if not v < self.threshold]

    @property
    def passed(self) -> bool:
        return not self.failed

    def to_dict(self) -> dict:
        return {"threshold": self.threshold, "passed": self.passed,
                "rhat": dict(self.rhat), "failed": self.failed,
                "degenerate": list(self.degenerate)}

    def render(self) -> str:
        width = max([len(k) for k in self.rhat] + [len(k) for k in self.degenerate] + [9])
        lines = [f"{'parameter':<{width}}  {'R-hat':>8}  status"]
        for k, v in self.rhat.items():
            lines.append(f"{k:<{width}}  {v:8.4f}  {'pass' if v < self.threshold else 'FAIL'}")
        for k in self.degenerate:
            lines.append(f"{k:<{width}}  {'n/a':>8}  degenerate")
        verdict = "converged" if self.passed else "NOT converged"
        lines.append(f"overall: {verdict} (threshold {self.threshold})")
        return "\n".join(lines) + "\n"


def monitored_names(spec) -> list[str]:
    """Scalars checked for convergence: coefficients, variances, r_y, deviance."""
    names = list(spec.coef_names) + [f"var_{b}" for b in spec.coef_names]
    if spec.has_var_y:
        names.append("var_y")
    if spec.has_eps:
        names.append("var_eps")
    if spec.has_alpha:
        names += ["alpha1", "alpha2"]
    if spec.family.value == "gamma":
        names.append("r_y")
    names.append("deviance")
    return names


def check_convergence(multi, threshold: float = 1.1) -> ConvergenceReport:
    """R-hat for every monitored scalar across the chains in ``multi``.

    Constant traces are listed as degenerate instead of failing the report.
    """
    if len(multi) < 2:
        raise ValueError("convergence check needs at least 2 chains")
    spec = multi[0].spec
    rhat, degenerate = {}, []
    for name in monitored_names(spec):
        traces = [ch.trace(name) for ch in multi]
        try:
            rhat[name] = bgr_statistic(np.vstack(traces))
        except DegenerateTraceError:
            degenerate.append(name)
    return ConvergenceReport(rhat=rhat, degenerate=degenerate, threshold=threshold)

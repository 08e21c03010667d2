"""Metropolis-within-Gibbs sampling with univariate slice kernels.

Each sweep visits every active coordinate once and draws it from its full
conditional with a stepping-out / shrinkage slice sampler.  The per-subject
effects are conditionally independent given everything else, so they are
updated together by a vectorized slice step that runs an independent
univariate slice sampler in every component.

Coordinates with a uniform prior on a standard deviation (``sd_beta*``,
``sd_y``, ``sd_eps``) are moved on the standard-deviation scale.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .model_spec import (
    Dataset,
    Effect,
    EffectPrior,
    Family,
    ModelSpec,
    ParameterState,
    design_matrix,
    log_joint,
    log_likelihood_terms,
    predictor_vector,
)
from .stats_core import RngStream

__all__ = [
    "SamplerConfig",
    "PosteriorSamples",
    "SamplerFault",
    "ChainFaults",
    "slice_sample_scalar",
    "slice_sample_block",
    "collapsible",
    "coordinate_names",
    "initial_state",
    "gibbs_sweep",
    "run_chain",
    "run_multi",
]

log = logging.getLogger(__name__)

MAX_SHRINK = 1000
MAX_STEPS = 10_000
ADAPT_EVERY = 50


class SamplerFault(RuntimeError):
    """Slice shrinkage failed to find a point of positive density."""

    def __init__(self, coordinate: str, iteration: int | None = None, chain_id: int | None = None):
        self.coordinate = coordinate
        self.iteration = iteration
        self.chain_id = chain_id
        where = f" at iteration {iteration}" if iteration is not None else ""
        chain = f" in chain {chain_id}" if chain_id is not None else ""
        super().__init__(f"slice sampler fault on '{coordinate}'{where}{chain}")


class ChainFaults(RuntimeError):
    """Raised by :func:`run_multi` when one or more chains fault."""

    def __init__(self, partial: list, faults: list[SamplerFault]):
        self.partial = partial
        self.faults = faults
        super().__init__("; ".join(str(f) for f in faults))


@dataclass(frozen=True)
class SamplerConfig:
    iterations: int = 200_000
    burn_in: int = 100_000
    thin: int = 50
    n_chains: int = 3
    seed: int = 0
    init_jitter: float = 1.0
    workers: int = 1
    collapse: bool = True

    def __post_init__(self):
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if not 0 <= self.burn_in < self.iterations:
            raise ValueError("need 0 <= burn_in < iterations")
        if self.retained < 2:
            raise ValueError("config retains fewer than 2 draws per chain")
        if self.n_chains < 1:
            raise ValueError("n_chains must be >= 1")
        if self.init_jitter < 0:
            raise ValueError("init_jitter must be >= 0")

    @property
    def retained(self) -> int:
        return (self.iterations - self.burn_in) // self.thin


@dataclass
class PosteriorSamples:
    draws: list[ParameterState]
    deviance_trace: np.ndarray
    chain_id: int
    spec: ModelSpec
    iterations: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    def __len__(self):
        return len(self.draws)

    def trace(self, name: str) -> np.ndarray:
        """Scalar trace by name: ``beta0``..``beta4``, ``var_beta0``.., ``var_y``,
        ``var_eps``, ``alpha1``, ``alpha2``, ``r_y``, ``deviance``."""
        if name == "deviance":
            return np.asarray(self.deviance_trace, dtype=float)
        names = self.spec.coef_names
        if name in names:
            k = names.index(name)
            return np.array([d.beta[k] for d in self.draws])
        if name.startswith("var_beta") and name[len("var_"):] in names:
            k = names.index(name[len("var_"):])
            return np.array([d.var_beta[k] for d in self.draws])
        values = [getattr(d, name) for d in self.draws]
        if any(v is None for v in values):
            raise KeyError(f"{name} is not a parameter of {self.spec.label}")
        return np.array(values, dtype=float)

    def eps_matrix(self) -> np.ndarray:
        return np.array([d.eps for d in self.draws])


def _slice(logdensity, x0, lp0, width, rng, lo, hi, name):
    """Core univariate slice step; returns (x, logdensity(x))."""
    logu = lp0 + math.log(rng.uniform())
    left = x0 - width * rng.uniform()
    right = left + width
    j = int(MAX_STEPS * rng.uniform())
    k = MAX_STEPS - 1 - j
    while j > 0 and left > lo and logdensity(left) > logu:
        left -= width
        j -= 1
    while k > 0 and right < hi and logdensity(right) > logu:
        right += width
        k -= 1
    if left < lo:
        left = lo
    if right > hi:
        right = hi
    for _ in range(MAX_SHRINK):
        x1 = left + rng.uniform() * (right - left)
        if lo < x1 < hi:
            lp1 = logdensity(x1)
            if lp1 > logu:
                return x1, lp1
        if x1 < x0:
            left = x1
        else:
            right = x1
    raise SamplerFault(name)


def slice_sample_scalar(logdensity, current: float, width: float, rng: RngStream,
                        support: tuple[float, float] = (-math.inf, math.inf),
                        name: str = "x") -> float:
    """Draw from a univariate unnormalized density by slice sampling.

    Parameters
    ----------
    logdensity : callable
        Log of the unnormalized target; may return ``-inf``.
    current : float
        Current point; ``logdensity(current)`` must be finite.
    width : float
        Initial bracket width for stepping out.
    rng : RngStream
    support : (lo, hi)
        Open interval outside which the density is zero.
    name : str
        Coordinate name reported in a :class:`SamplerFault`.
    """
    if not width > 0:
        raise ValueError("width must be > 0")
    lp0 = logdensity(current)
    if not math.isfinite(lp0):
        raise ValueError(f"logdensity at current point of '{name}' is not finite")
    return _slice(logdensity, current, lp0, width, rng, support[0], support[1], name)[0]


def slice_sample_block(logdensity, current: np.ndarray, widths: np.ndarray, rng: RngStream,
                       support: tuple[float, float] = (-math.inf, math.inf),
                       name: str = "eps") -> np.ndarray:
    """Independent slice updates of each component of ``current``.

    ``logdensity`` maps a vector to the vector of per-component log densities;
    component ``i`` of the output may depend only on component ``i`` of the
    input.
    """
    lo, hi = support
    x0 = np.array(current, dtype=float)
    n = x0.shape[0]
    widths = np.broadcast_to(np.asarray(widths, dtype=float), (n,))
    lp0 = logdensity(x0)
    if not np.all(np.isfinite(lp0)):
        raise ValueError(f"logdensity at current point of '{name}' is not finite")
    logu = lp0 + np.log(rng.uniforms(n))
    left = x0 - widths * rng.uniforms(n)
    right = left + widths
    j = np.floor(MAX_STEPS * rng.uniforms(n))
    k = MAX_STEPS - 1 - j
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        active = (j > 0) & (left > lo)
        while active.any():
            active &= logdensity(left) > logu
            left -= widths * active
            j -= active
            active &= (j > 0) & (left > lo)
        active = (k > 0) & (right < hi)
        while active.any():
            active &= logdensity(right) > logu
            right += widths * active
            k -= active
            active &= (k > 0) & (right < hi)
        np.maximum(left, lo, out=left)
        np.minimum(right, hi, out=right)
        out = x0.copy()
        pending = np.ones(n, dtype=bool)
        for _ in range(MAX_SHRINK):
            prop = left + rng.uniforms(n) * (right - left)
            lp1 = logdensity(prop)
            ok = pending & (lp1 > logu) & (prop > lo) & (prop < hi)
            out = np.where(ok, prop, out)
            pending &= ~ok
            if not pending.any():
                return out
            below = prop < x0
            left = np.where(pending & below, prop, left)
            right = np.where(pending & ~below, prop, right)
    raise SamplerFault(f"{name}[{int(np.flatnonzero(pending)[0])}]")


def collapsible(spec: ModelSpec) -> bool:
    """Gaussian outcome with Gaussian subject effects entering linearly.

    In these cells the outcome and effect variances are only weakly
    separated by the data, and single-site updates of the variances mix
    very slowly, and the intercept trades off against the mean of the
    effects.  The coefficients and both variances are instead updated with
    the effects integrated out, after which the effects are drawn exactly
    from their Gaussian conditional.
    """
    return (spec.family in (Family.NORMAL, Family.LOGNORMAL)
            and spec.effect in (Effect.ADDITIVE, Effect.MEAS_ERR))


def coordinate_names(spec: ModelSpec, collapse: bool = True) -> list[str]:
    """Coordinates updated by one sweep, in update order."""
    names = list(spec.coef_names)
    names += [f"sd_{b}" for b in spec.coef_names]
    if not spec.has_eps:
        names.append("r_y" if spec.family is Family.GAMMA else "sd_y")
        return names
    if spec.effect_prior is EffectPrior.GELMAN_UNIFORM:
        hyper = ["sd_eps"]
    elif spec.effect_prior is EffectPrior.GAMMA_OVERDISPERSED:
        hyper = ["var_eps", "alpha1", "alpha2"]
    else:
        hyper = ["tau_eps"]
    if collapse and collapsible(spec):
        return names + ["sd_y"] + hyper + ["eps"]
    return names + ["eps"] + hyper + ["r_y" if spec.family is Family.GAMMA else "sd_y"]


class _Sweeper:
    """Chain-local sampler with cached design quantities and predictor."""

    def __init__(self, spec: ModelSpec, data: Dataset, state: ParameterState,
                 collapse: bool = True):
        self.spec = spec
        self.collapsed = collapse and collapsible(spec)
        self.data = data
        self.n = data.n
        self.X = design_matrix(spec, data)
        self.y = data.y
        self.logy = np.log(data.y)
        self.obs = self.logy if spec.family is Family.LOGNORMAL else data.y
        self.sum_logy = float(np.sum(self.logy))
        self.state = state.copy()
        self.names = coordinate_names(spec, collapse)
        self.widths = {name: 1.0 for name in self.names}
        if spec.has_eps:
            self.widths["eps"] = np.ones(self.n)
        self.refresh()

    # -- cached predictor ------------------------------------------------
    def refresh(self):
        self.mu = predictor_vector(self.spec, self.state, self.data, self.X)

    def column(self, k: int) -> np.ndarray:
        """Coefficient ``k``'s effective regressor under the current effects."""
        col = self.X[:, k]
        if k == 1:
            eff = self.spec.effect
            if eff is Effect.MEAS_ERR:
                col = col + self.state.eps
            elif eff is Effect.MULTIPLICATIVE:
                col = col * self.state.eps
        return col

    def deviance(self) -> float:
        s = self.state
        ll = log_likelihood_terms(self.spec, self.mu, self.data, s.var_y, s.r_y)
        return -2.0 * float(np.sum(ll))

    # -- full conditionals ----------------------------------------------
    def _beta_conditional(self, k: int):
        s = self.state
        c = self.column(k)
        base = self.mu - s.beta[k] * c
        vb = s.var_beta[k]
        if self.spec.family is Family.GAMMA:
            r = s.r_y
            y = self.y

            def logc(v):
                mu = base + v * c
                if np.any(mu <= 0):
                    return -math.inf
                return float(-r * np.sum(np.log(mu) + y / mu)) - 0.5 * v * v / vb
        else:
            r0 = self.obs - base
            a = float(r0 @ r0)
            b = float(r0 @ c)
            cc = float(c @ c)
            vy = s.var_y

            def logc(v):
                return -0.5 * (a - 2.0 * v * b + v * v * cc) / vy - 0.5 * v * v / vb
        return logc, base, c

    def update_beta_collapsed(self, k: int, rng):
        """Coefficient update with the Gaussian effects integrated out."""
        s = self.state
        xb = self.X @ s.beta
        c = self.X[:, k]
        r0 = self.obs - (xb - s.beta[k] * c)
        a, b, cc = float(r0 @ r0), float(r0 @ c), float(c @ c)
        vb, vy, ve = s.var_beta[k], s.var_y, s.var_eps
        half_n = 0.5 * self.n
        if k == 1 and self.spec.effect is Effect.MEAS_ERR:
            def logc(v):
                tv = vy + v * v * ve
                return -half_n * math.log(tv) - 0.5 * (a - 2.0 * v * b + v * v * cc) / tv \
                    - 0.5 * v * v / vb
        else:
            tv = vy + (s.beta[1] ** 2 if self.spec.effect is Effect.MEAS_ERR else 1.0) * ve

            def logc(v):
                return -0.5 * (a - 2.0 * v * b + v * v * cc) / tv - 0.5 * v * v / vb
        name = self.spec.coef_names[k]
        x0 = float(s.beta[k])
        x, _ = _slice(logc, x0, logc(x0), self.widths[name], rng, -math.inf, math.inf, name)
        s.beta[k] = x
        self.refresh()
        return x - x0

    def update_beta(self, k: int, rng):
        if self.collapsed:
            return self.update_beta_collapsed(k, rng)
        logc, base, c = self._beta_conditional(k)
        name = self.spec.coef_names[k]
        x0 = float(self.state.beta[k])
        x, _ = _slice(logc, x0, logc(x0), self.widths[name], rng, -math.inf, math.inf, name)
        self.state.beta[k] = x
        self.mu = base + x * c
        return x - x0

    def update_sd_beta(self, k: int, rng):
        b2 = float(self.state.beta[k]) ** 2

        def logc(sd):
            return -math.log(sd) - 0.5 * b2 / (sd * sd)

        name = f"sd_{self.spec.coef_names[k]}"
        x0 = math.sqrt(self.state.var_beta[k])
        x, _ = _slice(logc, x0, logc(x0), self.widths[name], rng, 0.0,
                      self.spec.priors.B_beta, name)
        self.state.var_beta[k] = x * x
        return x - x0

    def _eps_parts(self):
        """mu_i = a_i + g_i * eps_i."""
        s = self.state
        eff = self.spec.effect
        if eff is Effect.ADDITIVE:
            g = np.ones(self.n)
        elif eff is Effect.MEAS_ERR:
            g = np.full(self.n, s.beta[1])
        else:
            g = s.beta[1] * self.X[:, 1]
        return self.mu - g * s.eps, g

    def _marginal(self):
        """Residuals with effects removed and the effect loading ``g``."""
        a, g = self._eps_parts()
        r = self.obs - a
        return float(r @ r), float(g[0]) ** 2

    def _marginal_logc(self, ss: float, total_var):
        half_n = 0.5 * self.n

        def logc(x):
            v = total_var(x)
            return -half_n * math.log(v) - 0.5 * ss / v
        return logc

    def draw_eps_exact(self, rng):
        s = self.state
        a, g = self._eps_parts()
        prec = g * g / s.var_y + 1.0 / s.var_eps
        mean = (self.obs - a) * g / s.var_y / prec
        old = s.eps
        new = mean + rng.generator.standard_normal(self.n) / np.sqrt(prec)
        s.eps = new
        self.mu = a + g * new
        return new - old

    def update_eps(self, rng):
        if self.collapsed:
            return self.draw_eps_exact(rng)
        s = self.state
        a, g = self._eps_parts()
        mult = self.spec.effect is Effect.MULTIPLICATIVE
        ve = s.var_eps
        if self.spec.family is Family.GAMMA:
            r, y = s.r_y, self.y

            def logc(e):
                mu = a + g * e
                out = -r * (np.log(mu) + y / mu) - 0.5 * e * e / ve
                out[~(mu > 0)] = -np.inf
                return out
        elif mult:
            # Normal likelihood term is quadratic in e: e * (q + p * e).
            q = (self.obs - a) * g / s.var_y
            p = -0.5 * g * g / s.var_y

            def logc(e):
                out = e * (q + p * e) + (ve - 1.0) * np.log(e) - ve * e
                out[~(e > 0)] = -np.inf
                return out
        else:
            q = (self.obs - a) * g / s.var_y
            p = -0.5 * (g * g / s.var_y + 1.0 / ve)

            def logc(e):
                return e * (q + p * e)

        support = (0.0, math.inf) if mult else (-math.inf, math.inf)
        old = s.eps
        new = slice_sample_block(logc, old, self.widths["eps"], rng, support, "eps")
        s.eps = new
        self.mu = a + g * new
        return new - old

    def update_sd_eps(self, rng):
        if self.collapsed:
            ss, g2 = self._marginal()
            vy = self.state.var_y
            logc = self._marginal_logc(ss, lambda sd: vy + g2 * sd * sd)
        else:
            ss = float(self.state.eps @ self.state.eps)
            n = self.n

            def logc(sd):
                return -n * math.log(sd) - 0.5 * ss / (sd * sd)

        x0 = math.sqrt(self.state.var_eps)
        x, _ = _slice(logc, x0, logc(x0), self.widths["sd_eps"], rng, 0.0,
                      self.spec.priors.B_eps, "sd_eps")
        self.state.var_eps = x * x
        return x - x0

    def update_var_eps(self, rng):
        s = self.state
        a1, a2 = s.alpha1, s.alpha2
        if self.collapsed:
            ss, g2 = self._marginal()
            vy = s.var_y
            lik = self._marginal_logc(ss, lambda v: vy + g2 * v)

            def logc(v):
                return lik(v) + (a1 - 1.0) * math.log(v) - a2 * v
        else:
            ss = float(s.eps @ s.eps)
            half_n = 0.5 * self.n

            def logc(v):
                return (a1 - 1.0 - half_n) * math.log(v) - 0.5 * ss / v - a2 * v

        x0 = s.var_eps
        x, _ = _slice(logc, x0, logc(x0), self.widths["var_eps"], rng, 0.0, math.inf, "var_eps")
        s.var_eps = x
        return x - x0

    def update_alpha1(self, rng):
        s = self.state
        shape, rate = self.spec.priors.gamma_hyper[:2]
        c = math.log(s.alpha2) + math.log(s.var_eps)

        def logc(a):
            return a * c - math.lgamma(a) + (shape - 1.0) * math.log(a) - rate * a

        x0 = s.alpha1
        x, _ = _slice(logc, x0, logc(x0), self.widths["alpha1"], rng, 0.0, math.inf, "alpha1")
        s.alpha1 = x
        return x - x0

    def update_alpha2(self, rng):
        s = self.state
        shape, rate = self.spec.priors.gamma_hyper[2:]
        a1, v = s.alpha1, s.var_eps

        def logc(b):
            return (a1 + shape - 1.0) * math.log(b) - (v + rate) * b

        x0 = s.alpha2
        x, _ = _slice(logc, x0, logc(x0), self.widths["alpha2"], rng, 0.0, math.inf, "alpha2")
        s.alpha2 = x
        return x - x0

    def update_tau_eps(self, rng):
        s = self.state
        n = self.n
        slog = float(np.sum(np.log(s.eps)))
        ssum = float(np.sum(s.eps))

        def logc(t):
            return n * (t * math.log(t) - math.lgamma(t)) + t * (slog - ssum)

        x0 = s.var_eps
        x, _ = _slice(logc, x0, logc(x0), self.widths["tau_eps"], rng, 0.0,
                      self.spec.priors.mult_tau_bound, "tau_eps")
        s.var_eps = x
        return x - x0

    def update_sd_y(self, rng):
        if self.collapsed:
            ss, g2 = self._marginal()
            ve = self.state.var_eps
            logc = self._marginal_logc(ss, lambda sd: sd * sd + g2 * ve)
        else:
            d = self.obs - self.mu
            ss = float(d @ d)
            n = self.n

            def logc(sd):
                return -n * math.log(sd) - 0.5 * ss / (sd * sd)

        x0 = math.sqrt(self.state.var_y)
        x, _ = _slice(logc, x0, logc(x0), self.widths["sd_y"], rng, 0.0,
                      self.spec.priors.B_y, "sd_y")
        self.state.var_y = x * x
        return x - x0

    def update_r_y(self, rng):
        mu = self.mu
        total = float(np.sum(self.logy - np.log(mu) - self.y / mu))
        n = self.n
        shape, rate = self.spec.priors.r_y_prior

        def logc(r):
            return n * (r * math.log(r) - math.lgamma(r)) + r * total \
                + (shape - 1.0) * math.log(r) - rate * r

        x0 = self.state.r_y
        x, _ = _slice(logc, x0, logc(x0), self.widths["r_y"], rng, 0.0, math.inf, "r_y")
        self.state.r_y = x
        return x - x0

    # -- sweep -----------------------------------------------------------
    def sweep(self, rng) -> dict:
        """Update every coordinate once; returns the jump per coordinate."""
        jumps = {}
        for name in self.names:
            if name.startswith("beta"):
                jumps[name] = self.update_beta(int(name[4:]), rng)
            elif name.startswith("sd_beta"):
                jumps[name] = self.update_sd_beta(int(name[7:]), rng)
            else:
                jumps[name] = getattr(self, f"update_{name}")(rng)
        return jumps


def gibbs_sweep(spec: ModelSpec, state: ParameterState, data: Dataset, rng: RngStream,
                widths: dict | None = None, collapse: bool = True) -> ParameterState:
    """One systematic-scan sweep over all active coordinates.

    ``widths`` maps coordinate names (see :func:`coordinate_names`) to slice
    widths; missing entries default to 1.0.
    """
    state.check(spec, data.n)
    if not math.isfinite(log_joint(spec, state, data)):
        raise ValueError("state is outside the prior support")
    sw = _Sweeper(spec, data, state, collapse)
    if widths:
        sw.widths.update(widths)
    sw.sweep(rng)
    return sw.state.copy()


def initial_state(spec: ModelSpec, data: Dataset, jitter: float = 0.0,
                  rng: RngStream | None = None) -> ParameterState:
    """Least-squares start with variances at 10% of their bounds.

    With ``jitter > 0`` coefficients move by ``jitter`` least-squares standard
    errors and positive parameters by a log-normal factor of scale ``jitter``.
    """
    pr = spec.priors
    X = design_matrix(spec, data)
    target = np.log(data.y) if spec.family is Family.LOGNORMAL else data.y
    beta, *_ = np.linalg.lstsq(X, target, rcond=None)
    resid = target - X @ beta
    dof = max(data.n - X.shape[1], 1)
    s2 = float(resid @ resid) / dof
    try:
        se = np.sqrt(np.maximum(np.diag(np.linalg.pinv(X.T @ X)) * s2, 0.0))
    except np.linalg.LinAlgError:
        se = np.zeros(X.shape[1])

    def z():
        return float(rng.generator.standard_normal()) if (rng is not None and jitter > 0) else 0.0

    if jitter > 0 and rng is not None:
        beta = beta + jitter * se * rng.generator.standard_normal(beta.shape[0])
    if spec.family is Family.GAMMA and np.any(X @ beta <= 0):
        beta = np.zeros(X.shape[1])
        beta[0] = float(np.mean(data.y))

    def spread(value, upper=math.inf):
        return min(value * math.exp(0.5 * jitter * z()), 0.999 * upper)

    k = spec.n_coef
    sd_b = np.array([spread(0.1 * pr.B_beta, pr.B_beta) for _ in range(k)])
    state = ParameterState(beta=np.asarray(beta, dtype=float), var_beta=sd_b ** 2)
    if spec.has_var_y:
        state.var_y = spread(0.1 * pr.B_y, pr.B_y) ** 2
    if spec.family is Family.GAMMA:
        ratio = data.y / (X @ state.beta)
        state.r_y = spread(1.0 / max(float(np.var(ratio)), 1e-6))
    if spec.has_eps:
        if spec.effect is Effect.MULTIPLICATIVE:
            state.eps = np.ones(data.n)
            state.var_eps = spread(0.1 * pr.mult_tau_bound, pr.mult_tau_bound)
        elif spec.effect_prior is EffectPrior.GAMMA_OVERDISPERSED:
            s1, r1, s2, r2 = pr.gamma_hyper
            state.eps = np.zeros(data.n)
            state.alpha1 = spread(s1 / r1)
            state.alpha2 = spread(s2 / r2)
            state.var_eps = spread(state.alpha1 / state.alpha2)
        else:
            state.eps = np.zeros(data.n)
            state.var_eps = spread(0.1 * pr.B_eps, pr.B_eps) ** 2
    if not math.isfinite(log_joint(spec, state, data)):
        raise ValueError(f"could not construct an in-support start for {spec.label}")
    return state


def _adapt(widths: dict, totals: dict, count: int):
    for name, tot in totals.items():
        mean_jump = tot / count
        if isinstance(mean_jump, np.ndarray):
            w = widths[name]
            upd = mean_jump > 0
            w[upd] = np.maximum(2.0 * mean_jump[upd], 0.1 * w[upd])
        elif mean_jump > 0:
            widths[name] = max(2.0 * mean_jump, 0.1 * widths[name])


def run_chain(spec: ModelSpec, data: Dataset, config: SamplerConfig,
              chain_id: int = 0) -> PosteriorSamples:
    """Run one chain: burn-in with width adaptation, then thinned retention."""
    rng = RngStream(config.seed, chain_id)
    state = initial_state(spec, data, config.init_jitter, rng)
    sw = _Sweeper(spec, data, state, config.collapse)
    draws, devs, iters = [], [], []
    totals: dict = {}
    count = 0
    for it in range(1, config.iterations + 1):
        try:
            jumps = sw.sweep(rng)
        except SamplerFault as fault:
            raise SamplerFault(fault.coordinate, it, chain_id) from None
        if it <= config.burn_in:
            for name, d in jumps.items():
                totals[name] = totals.get(name, 0.0) + np.abs(d)
            count += 1
            if count == ADAPT_EVERY:
                _adapt(sw.widths, totals, count)
                totals, count = {}, 0
        elif (it - config.burn_in) % config.thin == 0:
            draws.append(sw.state.copy())
            devs.append(sw.deviance())
            iters.append(it)
    log.debug("chain %d done: %d draws, widths %s", chain_id, len(draws),
              {k: v for k, v in sw.widths.items() if k != "eps"})
    return PosteriorSamples(draws=draws, deviance_trace=np.array(devs), chain_id=chain_id,
                            spec=spec, iterations=np.array(iters, dtype=int))


def _run_chain_safe(args):
    spec, data, config, chain_id = args
    try:
        return run_chain(spec, data, config, chain_id)
    except SamplerFault as fault:
        return fault


def run_multi(spec: ModelSpec, data: Dataset, config: SamplerConfig) -> list[PosteriorSamples]:
    """Run ``config.n_chains`` chains with distinct stream ids.

    Chains run in a process pool when ``config.workers > 1``.  Results are
    ordered by chain id.  If any chain faults, :class:`ChainFaults` carries
    the successful chains and the faults.
    """
    jobs = [(spec, data, config, c) for c in range(config.n_chains)]
    if config.workers > 1 and config.n_chains > 1:
        with ProcessPoolExecutor(max_workers=min(config.workers, config.n_chains)) as ex:
            results = list(ex.map(_run_chain_safe, jobs))
    else:
        results = [_run_chain_safe(j) for j in jobs]
    faults = [r for r in results if isinstance(r, SamplerFault)]
    chains = [r for r in results if not isinstance(r, SamplerFault)]
    if faults:
        raise ChainFaults(chains, faults)
    return chains

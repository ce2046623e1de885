"""Periodic medium: grids, coefficient fields, nonlinearity families, configuration.

Coefficients are given as named expression templates (constant, cosine in x,
cosine in t, product) rather than arbitrary callables, so a run is reproducible
from its config file alone.  All fields are sampled on a uniform tensor grid on
the space-time torus; second-order centered differences are used downstream,
which matches the smoothness of the templates.
"""
from __future__ import annotations

import dataclasses
import math
import sys

import numpy as np

from .errors import ConfigurationError, EllipticityError, EvaluationError

if sys.version_info >= (3, 11):
    import tomllib as _toml
else:
    import tomli as _toml


# ---------------------------------------------------------------------------
# grids and fields


@dataclasses.dataclass(frozen=True)
class TorusGrid:
    """Uniform grid on the periodicity cell [0,T) x [0,L); indices wrap."""

    t_period: float
    x_period: float
    nt: int
    nx: int

    @property
    def dt(self):
        return self.t_period / self.nt

    @property
    def dx(self):
        return self.x_period / self.nx

    @property
    def t_nodes(self):
        return np.arange(self.nt) * self.dt

    @property
    def x_nodes(self):
        return np.arange(self.nx) * self.dx


def build_grid(spec: "MediumSpec") -> TorusGrid:
    """Validate periods/counts from the spec and return the torus grid."""
    if spec.t_period <= 0 or spec.x_period <= 0:
        raise ConfigurationError(
            f"periods must be positive, got T={spec.t_period}, L={spec.x_period}")
    if spec.nt < 8 or spec.nx < 8:
        raise ConfigurationError(
            f"grid counts must be at least 8, got nt={spec.nt}, nx={spec.nx}")
    return TorusGrid(float(spec.t_period), float(spec.x_period),
                     int(spec.nt), int(spec.nx))


def validate_field(grid: TorusGrid, values: np.ndarray, name: str = "field") -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.shape != (grid.nt, grid.nx):
        raise ConfigurationError(
            f"{name} has shape {arr.shape}, expected {(grid.nt, grid.nx)}")
    if not np.all(np.isfinite(arr)):
        raise EvaluationError(f"{name} contains non-finite values")
    return arr


@dataclasses.dataclass
class CoefficientSet:
    """Sampled diffusion a, drift q, linearization zero-order mu, plus the
    exact x-derivatives of a and q carried from the templates (the twisted
    operator and the contraction constants need them)."""

    a: np.ndarray
    q: np.ndarray
    mu: np.ndarray
    dxa: np.ndarray
    dxq: np.ndarray
    gamma_ell: float
    Gamma_ell: float

    def time_constant(self) -> bool:
        # exact check; templates that do not depend on t sample to equal rows
        return all(np.ptp(f, axis=0).max() == 0.0
                   for f in (self.a, self.q, self.mu, self.dxa, self.dxq))


# ---------------------------------------------------------------------------
# expression templates

_TEMPLATE_KINDS = ("constant", "cosine_x", "cosine_t", "cosine_tx", "product")


def _template_eval(tpl: dict, t, x, T, L, d_dx=0):
    """Evaluate a template (or its first/second exact x-derivative) on a
    broadcastable (t, x) pair."""
    kind = tpl.get("kind", "constant")
    if kind == "constant":
        v = float(tpl.get("value", 0.0))
        return np.full(np.broadcast(t, x).shape, v if d_dx == 0 else 0.0)
    if kind == "cosine_x":
        mean = float(tpl.get("mean", 0.0))
        amp = float(tpl.get("amplitude", 0.0))
        k = int(tpl.get("harmonic", 1))
        ph = float(tpl.get("phase", 0.0))
        w = 2.0 * math.pi * k / L
        arg = w * x + ph
        if d_dx == 0:
            out = mean + amp * np.cos(arg)
        elif d_dx == 1:
            out = -amp * w * np.sin(arg)
        else:
            out = -amp * w * w * np.cos(arg)
        return np.broadcast_to(out, np.broadcast(t, x).shape).copy()
    if kind == "cosine_t":
        mean = float(tpl.get("mean", 0.0))
        amp = float(tpl.get("amplitude", 0.0))
        k = int(tpl.get("harmonic", 1))
        ph = float(tpl.get("phase", 0.0))
        arg = 2.0 * math.pi * k / T * t + ph
        out = mean + amp * np.cos(arg) if d_dx == 0 else np.zeros_like(np.asarray(t, dtype=float))
        return np.broadcast_to(out, np.broadcast(t, x).shape).copy()
    if kind == "cosine_tx":
        mean = float(tpl.get("mean", 0.0))
        amp = float(tpl.get("amplitude", 0.0))
        kx = int(tpl.get("harmonic_x", 1))
        kt = int(tpl.get("harmonic_t", 1))
        phx = float(tpl.get("phase_x", 0.0))
        pht = float(tpl.get("phase_t", 0.0))
        w = 2.0 * math.pi * kx / L
        ct = np.cos(2.0 * math.pi * kt / T * t + pht)
        if d_dx == 0:
            out = mean + amp * np.cos(w * x + phx) * ct
        elif d_dx == 1:
            out = -amp * w * np.sin(w * x + phx) * ct
        else:
            out = -amp * w * w * np.cos(w * x + phx) * ct
        return np.broadcast_to(out, np.broadcast(t, x).shape).copy()
    if kind == "product":
        factors = tpl.get("factors")
        if not factors or len(factors) != 2:
            raise ConfigurationError("product template needs exactly two factors")
        f0 = _template_eval(factors[0], t, x, T, L, 0)
        f1 = _template_eval(factors[1], t, x, T, L, 0)
        if d_dx == 0:
            return f0 * f1
        d0 = _template_eval(factors[0], t, x, T, L, 1)
        d1 = _template_eval(factors[1], t, x, T, L, 1)
        if d_dx == 1:
            return d0 * f1 + f0 * d1
        dd0 = _template_eval(factors[0], t, x, T, L, 2)
        dd1 = _template_eval(factors[1], t, x, T, L, 2)
        return dd0 * f1 + 2.0 * d0 * d1 + f0 * dd1
    raise ConfigurationError(f"unknown template kind {kind!r}; valid: {_TEMPLATE_KINDS}")


# ---------------------------------------------------------------------------
# nonlinearities

_FAMILIES = ("homogeneous_logistic", "heterogeneous_logistic", "cubic_nonKPP", "ignition")


@dataclasses.dataclass
class Nonlinearity:
    """Reaction family f(t,x,s); the (t,x) dependence enters only through the
    sampled mu field, which callers pass alongside s.

    kpp_flag records whether f(t,x,s) <= mu(t,x)*s for all s >= 0.  rho/r_exp
    and bound_range record constants for the lower reaction bound
    mu*s <= rho*s^(1+r) + f valid on [0, bound_range]; logistic families
    satisfy it globally with (1, 1).
    """

    family: str
    params: dict
    kpp_flag: bool
    rho: float
    r_exp: float
    bound_range: float

    def value(self, s, mu):
        s = np.asarray(s, dtype=float)
        if self.family == "homogeneous_logistic":
            return s * (1.0 - s)
        if self.family == "heterogeneous_logistic":
            return s * (mu - s)
        if self.family == "cubic_nonKPP":
            al = self.params["alpha"]
            return s * (1.0 - s) * (1.0 + al * s)
        if self.family == "ignition":
            th = self.params["theta"]
            amp = self.params.get("amp", 1.0)
            d = np.maximum(s - th, 0.0)
            return amp * d * d * (1.0 - s) / (1.0 - th) ** 2
        raise ConfigurationError(f"unknown family {self.family!r}")

    def deriv(self, s, mu):
        s = np.asarray(s, dtype=float)
        if self.family == "homogeneous_logistic":
            return 1.0 - 2.0 * s
        if self.family == "heterogeneous_logistic":
            return mu - 2.0 * s
        if self.family == "cubic_nonKPP":
            al = self.params["alpha"]
            return 1.0 + 2.0 * (al - 1.0) * s - 3.0 * al * s * s
        if self.family == "ignition":
            th = self.params["theta"]
            amp = self.params.get("amp", 1.0)
            d = np.maximum(s - th, 0.0)
            return amp * (2.0 * d * (1.0 - s) - d * d) / (1.0 - th) ** 2
        raise ConfigurationError(f"unknown family {self.family!r}")

    def ratio(self, s, mu):
        """f(t,x,s)/s, written without the removable singularity at s=0."""
        s = np.asarray(s, dtype=float)
        if self.family == "homogeneous_logistic":
            return 1.0 - s
        if self.family == "heterogeneous_logistic":
            return mu - s
        if self.family == "cubic_nonKPP":
            al = self.params["alpha"]
            return (1.0 - s) * (1.0 + al * s)
        if self.family == "ignition":
            th = self.params["theta"]
            amp = self.params.get("amp", 1.0)
            d = np.maximum(s - th, 0.0)
            with np.errstate(divide="ignore", invalid="ignore"):
                out = np.where(s > 0, amp * d * d * (1.0 - s) / ((1.0 - th) ** 2 * s), 0.0)
            return out
        raise ConfigurationError(f"unknown family {self.family!r}")

    def mu_template(self, reaction_params: dict) -> dict:
        # zero-order linearization f_u(.,.,0) per family
        if self.family == "heterogeneous_logistic":
            tpl = reaction_params.get("mu")
            if tpl is None:
                raise ConfigurationError(
                    "heterogeneous_logistic requires reaction.params.mu template")
            return tpl
        if self.family == "ignition":
            return {"kind": "constant", "value": 0.0}
        return {"kind": "constant", "value": 1.0}

    def upper_seed(self, mu_field) -> float:
        """A constant above every equilibrium, used to start the downward march."""
        if self.family in ("homogeneous_logistic", "heterogeneous_logistic"):
            return max(float(np.max(mu_field)), 0.0) + 1.0
        if self.family == "cubic_nonKPP":
            return 2.0
        return 1.25  # ignition: f < 0 above 1


def make_nonlinearity(family: str, params: dict | None = None) -> Nonlinearity:
    params = dict(params or {})
    if family == "homogeneous_logistic":
        return Nonlinearity(family, params, True, 1.0, 1.0, math.inf)
    if family == "heterogeneous_logistic":
        return Nonlinearity(family, params, True, 1.0, 1.0, math.inf)
    if family == "cubic_nonKPP":
        al = float(params.get("alpha", 1.0))
        if al <= 0:
            raise ConfigurationError("cubic_nonKPP needs alpha > 0")
        params["alpha"] = al
        # mu*s - f = (1-alpha)s^2 + alpha*s^3 <= s^2 on [0,1] for every alpha
        return Nonlinearity(family, params, al <= 1.0, 1.0, 1.0, 1.0)
    if family == "ignition":
        th = float(params.get("theta", 0.25))
        if not 0.0 < th < 1.0:
            raise ConfigurationError("ignition needs 0 < theta < 1")
        params["theta"] = th
        params["amp"] = float(params.get("amp", 1.0))
        return Nonlinearity(family, params, False, 1.0, 1.0, 1.0)
    raise ConfigurationError(f"unknown reaction family {family!r}; valid: {_FAMILIES}")


# ---------------------------------------------------------------------------
# medium specification / config ingestion


@dataclasses.dataclass
class MediumSpec:
    t_period: float = 1.0
    x_period: float = 1.0
    nt: int = 32
    nx: int = 32
    diffusion: dict = dataclasses.field(default_factory=lambda: {"kind": "constant", "value": 1.0})
    drift: dict = dataclasses.field(default_factory=lambda: {"kind": "constant", "value": 0.0})
    reaction_family: str = "homogeneous_logistic"
    reaction_params: dict = dataclasses.field(default_factory=dict)
    form: str = "divergence"

    @classmethod
    def from_dict(cls, cfg: dict) -> "MediumSpec":
        try:
            periods = cfg.get("periods", {})
            grid = cfg.get("grid", {})
            reaction = cfg.get("reaction", {})
            spec = cls(
                t_period=float(periods.get("T", 1.0)),
                x_period=float(periods.get("L", 1.0)),
                nt=int(grid.get("nt", 32)),
                nx=int(grid.get("nx", 32)),
                diffusion=dict(cfg.get("diffusion", {"kind": "constant", "value": 1.0})),
                drift=dict(cfg.get("drift", {"kind": "constant", "value": 0.0})),
                reaction_family=str(reaction.get("family", "homogeneous_logistic")),
                reaction_params=dict(reaction.get("params", {})),
                form=str(cfg.get("form", "divergence")),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(f"malformed config: {exc}") from exc
        if spec.form not in ("divergence", "nondivergence"):
            raise ConfigurationError(f"form must be divergence|nondivergence, got {spec.form!r}")
        return spec

    @classmethod
    def from_toml(cls, path) -> "MediumSpec":
        try:
            with open(path, "rb") as fh:
                cfg = _toml.load(fh)
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
        except _toml.TOMLDecodeError as exc:
            raise ConfigurationError(f"bad TOML in {path}: {exc}") from exc
        return cls.from_dict(cfg)

    def refined(self, k: int) -> "MediumSpec":
        """Halve dt and dx k times (doubles nt, nx); periods unchanged."""
        out = dataclasses.replace(self)
        out.nt = self.nt * (2 ** k)
        out.nx = self.nx * (2 ** k)
        return out

    def nonlinearity(self) -> Nonlinearity:
        return make_nonlinearity(self.reaction_family, self.reaction_params)


def sample_coefficients(spec: MediumSpec, grid: TorusGrid) -> CoefficientSet:
    """Sample a, q, mu (and exact x-derivatives) at the torus nodes.

    In non-divergence form the input templates are (alpha, beta) and the
    divergence-form drift is recovered as q = beta - dx(alpha); the derivative
    is taken exactly from the template, which lands within the O(dx^2)
    tolerance the conversion contract asks for.
    """
    T, L = grid.t_period, grid.x_period
    t = grid.t_nodes[:, None]
    x = grid.x_nodes[None, :]

    a = _template_eval(spec.diffusion, t, x, T, L, 0)
    dxa = _template_eval(spec.diffusion, t, x, T, L, 1)
    if spec.form == "nondivergence":
        beta = _template_eval(spec.drift, t, x, T, L, 0)
        dxbeta = _template_eval(spec.drift, t, x, T, L, 1)
        q = beta - dxa
        dxq = dxbeta - _template_eval(spec.diffusion, t, x, T, L, 2)
    else:
        q = _template_eval(spec.drift, t, x, T, L, 0)
        dxq = _template_eval(spec.drift, t, x, T, L, 1)

    nl = spec.nonlinearity()
    mu = _template_eval(nl.mu_template(spec.reaction_params), t, x, T, L, 0)

    for name, f in (("a", a), ("q", q), ("mu", mu)):
        validate_field(grid, f, name)

    gamma = float(np.min(a))
    Gamma = float(np.max(a))
    if gamma <= 0:
        raise EllipticityError(f"diffusion must be positive everywhere, min a = {gamma}")
    return CoefficientSet(a=a, q=q, mu=mu, dxa=dxa, dxq=dxq,
                          gamma_ell=gamma, Gamma_ell=Gamma)


# ---------------------------------------------------------------------------
# growth-ratio envelope


def evaluate_eta(nl: Nonlinearity, p: np.ndarray, grid: TorusGrid, ns: int = 256,
                 mu: np.ndarray | None = None) -> np.ndarray:
    """Nodewise sup over 0 < s <= p(t,x) of f(t,x,s)/s.

    Sampling on a merged geometric+uniform ladder of fractions of p, then a
    vectorized golden-section polish around the best sample.  The s->0 limit
    equals mu, which is always included, so eta >= mu holds exactly.
    """
    p = validate_field(grid, p, "p")
    if np.min(p) <= 0:
        raise ValueError("equilibrium p must be positive at all nodes")
    if ns < 64:
        raise ValueError("ns must be at least 64")
    if mu is None:
        if nl.family == "heterogeneous_logistic":
            raise ValueError("heterogeneous_logistic needs the sampled mu field")
        mu_val = {"homogeneous_logistic": 1.0, "cubic_nonKPP": 1.0, "ignition": 0.0}
        mu = np.full((grid.nt, grid.nx), mu_val.get(nl.family, 1.0))
    mu = validate_field(grid, mu, "mu")

    half = ns // 2
    fracs = np.concatenate([np.geomspace(1e-8, 1.0, half),
                            np.linspace(0.0, 1.0, ns - half + 1)[1:]])
    fracs = np.unique(fracs)

    s = fracs[:, None, None] * p[None, :, :]
    with np.errstate(all="ignore"):
        ratios = nl.ratio(s, mu[None, :, :])
    if not np.all(np.isfinite(ratios)):
        raise EvaluationError("non-finite reaction ratio sample")

    best = np.argmax(ratios, axis=0)
    eta = np.maximum(mu, np.max(ratios, axis=0))

    # golden-section polish on the bracket [frac(best-1), frac(best+1)] per node
    lo = fracs[np.maximum(best - 1, 0)] * p
    hi = fracs[np.minimum(best + 1, len(fracs) - 1)] * p
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = hi - invphi * (hi - lo)
    d = lo + invphi * (hi - lo)
    fc = nl.ratio(c, mu)
    fd = nl.ratio(d, mu)
    for _ in range(80):
        take_c = fc >= fd
        hi = np.where(take_c, d, hi)
        lo = np.where(take_c, lo, c)
        c = hi - invphi * (hi - lo)
        d = lo + invphi * (hi - lo)
        fc = nl.ratio(c, mu)
        fd = nl.ratio(d, mu)
    eta = np.maximum(eta, np.maximum(fc, fd))
    if not np.all(np.isfinite(eta)):
        raise EvaluationError("non-finite eta")
    return eta

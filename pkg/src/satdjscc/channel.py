"""Three-state land-mobile-satellite fading simulator.

Within a shadowing state the complex gain follows the Loo law: a ray whose
amplitude is log-normal (mean/std given in dB) plus Rayleigh multipath of a
given average power. Transitions between the line-of-sight, shadow, and deep
shadow states follow a 3x3 Markov chain. Samples within a state are i.i.d.
and the ray phase is uniform per sample; no Doppler or correlation model.
"""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import integrate, special, stats

from .errors import ConfigError, NumericError, ParameterError, StructureError

ENVIRONMENT_NAMES = (
    "open",
    "suburban",
    "intermediate_tree_shadow",
    "heavy_tree_shadow",
    "urban",
)

ELEVATION_RANGE_DEG = (40.0, 80.0)


class ShadowState(enum.IntEnum):
    LOS = 0
    SHADOW = 1
    DEEP_SHADOW = 2

    @classmethod
    def parse(cls, text):
        key = str(text).strip().lower()
        try:
            return _STATE_BY_NAME[key]
        except KeyError:
            raise ConfigError(
                f"unknown shadow state {text!r}; expected one of "
                "'los', 'shadow', 'deep_shadow'"
            ) from None

    @property
    def label(self):
        return _STATE_LABELS[self]


_STATE_BY_NAME = {
    "los": ShadowState.LOS,
    "shadow": ShadowState.SHADOW,
    "deep_shadow": ShadowState.DEEP_SHADOW,
}
_STATE_LABELS = {
    ShadowState.LOS: "los",
    ShadowState.SHADOW: "shadow",
    ShadowState.DEEP_SHADOW: "deep_shadow",
}


def _require_finite(name, value):
    if not math.isfinite(value):
        raise ParameterError(f"{name} must be finite, got {value}")


@dataclass(frozen=True)
class LooParameters:
    """One fading state: ray mean/std in dB plus average multipath power.

    alpha_db / psi_db describe the ray amplitude a = 10^(G/20) with
    G ~ N(alpha_db, psi_db^2); mp_db is the total complex multipath power
    10^(mp_db/10), split equally between real and imaginary parts.
    """

    alpha_db: float
    psi_db: float
    mp_db: float

    def __post_init__(self):
        _require_finite("alpha_db", self.alpha_db)
        _require_finite("mp_db", self.mp_db)
        if not (math.isfinite(self.psi_db) and self.psi_db >= 0):
            raise ParameterError(f"psi_db must be finite and >= 0, got {self.psi_db}")

    @classmethod
    def degenerate(cls, alpha_db, psi_db, mp_db):
        """Test-only constructor permitting -inf sentinels for alpha/mp.

        alpha_db = -inf removes the direct ray, mp_db = -inf removes the
        multipath component. Config loading never takes this path.
        """
        for name, value in (("alpha_db", alpha_db), ("mp_db", mp_db)):
            if math.isnan(value) or value == math.inf:
                raise ParameterError(f"{name} may be finite or -inf, got {value}")
        if not (math.isfinite(psi_db) and psi_db >= 0):
            raise ParameterError(f"psi_db must be finite and >= 0, got {psi_db}")
        obj = object.__new__(cls)
        object.__setattr__(obj, "alpha_db", float(alpha_db))
        object.__setattr__(obj, "psi_db", float(psi_db))
        object.__setattr__(obj, "mp_db", float(mp_db))
        return obj

    @property
    def multipath_power(self):
        return 10.0 ** (self.mp_db / 10.0)


def sample_loo(params: LooParameters, count, rng):
    """Draw complex gains h = a*exp(j*theta) + w from the Loo law.

    a = 10^(G/20) with G ~ N(alpha_db, psi_db^2), theta uniform on [0, 2pi),
    and w circular complex Gaussian with total power 10^(mp_db/10). Draw
    order is G, theta, Re(w), Im(w), so one seed maps to one gain vector.
    """
    if count < 1:
        raise ParameterError(f"count must be >= 1, got {count}")
    for name in ("alpha_db", "psi_db", "mp_db"):
        value = getattr(params, name)
        if math.isnan(value) or value == math.inf:
            raise ParameterError(f"{name} is not a usable parameter: {value}")
    gain_db = params.alpha_db + params.psi_db * rng.standard_normal(count)
    ray = 10.0 ** (gain_db / 20.0)
    theta = rng.uniform(0.0, 2.0 * np.pi, count)
    sigma_mp = math.sqrt(10.0 ** (params.mp_db / 10.0) / 2.0)
    scatter_re = rng.standard_normal(count)
    scatter_im = rng.standard_normal(count)
    return ray * np.exp(1j * theta) + sigma_mp * (scatter_re + 1j * scatter_im)


# --- Envelope density / CDF oracles -----------------------------------------
#
# Conditional on the ray amplitude a, the envelope is Rician with noncentrality
# a and per-component variance b0 = 10^(mp_db/10)/2; the Loo density integrates
# that conditional over the log-normal law of a.

_LN10_OVER_20 = math.log(10.0) / 20.0
_GL_NODES, _GL_WEIGHTS = leggauss(400)


def _rician_pdf(r, ray, b0):
    return (r / b0) * np.exp(-((r - ray) ** 2) / (2.0 * b0)) * special.i0e(r * ray / b0)


def loo_pdf(params: LooParameters, r):
    """Envelope density at r >= 0 via adaptive quadrature over the ray law."""
    if r < 0:
        raise ParameterError(f"r must be >= 0, got {r}")
    if r == 0.0:
        return 0.0
    if params.mp_db == -math.inf:
        raise ParameterError("mp_db = -inf has no envelope density (atomic law)")
    b0 = 10.0 ** (params.mp_db / 10.0) / 2.0
    if params.alpha_db == -math.inf:
        # no direct ray: pure Rayleigh envelope
        return float(_rician_pdf(r, 0.0, b0))
    if params.psi_db == 0.0:
        # ray amplitude collapses to a point: conditional Rician is exact
        return float(_rician_pdf(r, 10.0 ** (params.alpha_db / 20.0), b0))
    mu_ln = params.alpha_db * _LN10_OVER_20
    sigma_ln = params.psi_db * _LN10_OVER_20

    def integrand(a):
        ray_density = math.exp(-((math.log(a) - mu_ln) ** 2) / (2.0 * sigma_ln ** 2)) \
            / (a * sigma_ln * math.sqrt(2.0 * math.pi))
        return ray_density * _rician_pdf(r, a, b0)

    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            value, abserr = integrate.quad(integrand, 0.0, np.inf, limit=200)
        except integrate.IntegrationWarning as exc:
            raise NumericError(
                f"Loo density quadrature did not converge at r={r} "
                f"for {params}: {exc}"
            ) from exc
    if abserr > max(1e-7, 1e-5 * abs(value)):
        raise NumericError(
            f"Loo density quadrature error {abserr:.3e} too large at r={r} "
            f"(value {value:.6e}, params {params})"
        )
    return value


def loo_cdf(params: LooParameters, r_values):
    """Envelope CDF on an array of points.

    Integrates the conditional Rician CDF against the ray law with a fixed
    400-node Gauss-Legendre rule over ten standard deviations of G; agrees
    with integrating :func:`loo_pdf` but is vectorized over r.
    """
    r = np.atleast_1d(np.asarray(r_values, dtype=float))
    if np.any(r < 0):
        raise ParameterError("all CDF evaluation points must be >= 0")
    if params.mp_db == -math.inf:
        if params.psi_db == 0.0:
            ray = 10.0 ** (params.alpha_db / 20.0)
            return (r >= ray).astype(float)
        mu_ln = params.alpha_db * _LN10_OVER_20
        sigma_ln = params.psi_db * _LN10_OVER_20
        out = np.zeros_like(r)
        positive = r > 0
        out[positive] = stats.norm.cdf((np.log(r[positive]) - mu_ln) / sigma_ln)
        return out
    sigma = math.sqrt(10.0 ** (params.mp_db / 10.0) / 2.0)
    if params.alpha_db == -math.inf:
        return np.asarray(stats.rayleigh.cdf(r, scale=sigma))
    if params.psi_db == 0.0:
        ray = 10.0 ** (params.alpha_db / 20.0)
        return np.asarray(stats.rice.cdf(r, ray / sigma, scale=sigma))
    acc = np.zeros_like(r)
    half_width = 10.0
    for node, weight in zip(_GL_NODES, _GL_WEIGHTS):
        t = node * half_width
        ray = 10.0 ** ((params.alpha_db + params.psi_db * t) / 20.0)
        acc += (weight * half_width) * stats.norm.pdf(t) \
            * stats.rice.cdf(r, ray / sigma, scale=sigma)
    return acc


@dataclass(frozen=True)
class MarkovChain:
    """Row-stochastic 3x3 transition matrix over the shadow states."""

    transition: np.ndarray

    def __post_init__(self):
        matrix = np.asarray(self.transition, dtype=float)
        if matrix.shape != (3, 3):
            raise ParameterError(f"transition matrix must be 3x3, got {matrix.shape}")
        if np.any(matrix < 0) or np.any(matrix > 1):
            raise ParameterError("transition probabilities must lie in [0, 1]")
        row_sums = matrix.sum(axis=1)
        if np.any(np.abs(row_sums - 1.0) > 1e-9):
            raise ParameterError(f"rows must sum to 1 within 1e-9, got {row_sums}")
        matrix = matrix.copy()
        matrix.setflags(write=False)
        object.__setattr__(self, "transition", matrix)

    def is_irreducible(self):
        reach = (self.transition > 0) | np.eye(3, dtype=bool)
        for _ in range(2):
            reach = reach | (reach @ reach)
        return bool(reach.all())


def step_markov(chain: MarkovChain, current: ShadowState, rng):
    """One transition: draw the next state from the row of `current`."""
    row = chain.transition[int(current)]
    u = rng.random()
    if u < row[0]:
        return ShadowState.LOS
    if u < row[0] + row[1]:
        return ShadowState.SHADOW
    return ShadowState.DEEP_SHADOW


def simulate_states(chain: MarkovChain, initial: ShadowState, count, rng):
    """Trajectory of `count` states, one transition per sample.

    Consumes exactly `count` uniforms in order, so it reproduces what
    repeated :func:`step_markov` calls would yield from the same generator.
    """
    if count < 1:
        raise ParameterError(f"count must be >= 1, got {count}")
    uniforms = rng.random(count).tolist()
    cut = [(row[0], row[0] + row[1]) for row in chain.transition]
    states = np.empty(count, dtype=np.int8)
    s = int(initial)
    for i, u in enumerate(uniforms):
        c0, c1 = cut[s]
        s = 0 if u < c0 else (1 if u < c1 else 2)
        states[i] = s
    return states


def stationary_distribution(chain: MarkovChain):
    """Solve pi P = pi, sum(pi) = 1 directly; requires an irreducible chain."""
    if not chain.is_irreducible():
        raise StructureError(
            "chain is reducible; no unique stationary distribution exists"
        )
    p = chain.transition
    system = np.vstack([p.T - np.eye(3), np.ones(3)])
    rhs = np.array([0.0, 0.0, 0.0, 1.0])
    pi, *_ = np.linalg.lstsq(system, rhs, rcond=None)
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


@dataclass(frozen=True)
class EnvironmentTable:
    """Loo parameters per (state, elevation) plus the state chain."""

    environment: str
    entries: dict = field(repr=False)
    chain: MarkovChain

    def __post_init__(self):
        if self.environment not in ENVIRONMENT_NAMES:
            raise ConfigError(
                f"unknown environment {self.environment!r}; expected one of "
                f"{ENVIRONMENT_NAMES}"
            )
        lo, hi = ELEVATION_RANGE_DEG
        for (state, elevation), params in self.entries.items():
            if not isinstance(state, ShadowState):
                raise ConfigError(f"entry key state {state!r} is not a ShadowState")
            if not lo <= elevation <= hi:
                raise ConfigError(
                    f"elevation {elevation} for state {state.label} outside "
                    f"[{lo}, {hi}] degrees"
                )
            if not isinstance(params, LooParameters):
                raise ConfigError(f"entry for {state.label}@{elevation} is not "
                                  "LooParameters")

    def elevations_for(self, state: ShadowState):
        return sorted(e for (s, e) in self.entries if s == state)

    def lookup(self, state: ShadowState, elevation_deg):
        """Parameters for `state` at the nearest configured elevation."""
        candidates = self.elevations_for(state)
        if not candidates:
            raise ConfigError(
                f"environment {self.environment!r} has no entries for state "
                f"{state.label}"
            )
        nearest = min(candidates, key=lambda e: (abs(e - elevation_deg), e))
        return self.entries[(state, nearest)]


@dataclass(frozen=True)
class GainSeries:
    """Complex gains plus the shadow state active when each was drawn."""

    samples: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=complex)
        states = np.asarray(self.states, dtype=np.int8)
        if samples.ndim != 1 or states.ndim != 1:
            raise ParameterError("samples and states must be one-dimensional")
        if samples.shape[0] != states.shape[0]:
            raise ParameterError(
                f"samples ({samples.shape[0]}) and states ({states.shape[0]}) "
                "must have equal length"
            )
        if not np.all(np.isfinite(samples.view(float))):
            raise NumericError("gain series contains non-finite samples")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "states", states)

    def __len__(self):
        return self.samples.shape[0]


@dataclass(frozen=True)
class FixedState:
    """Channel mode: every sample drawn from one shadow state."""

    state: ShadowState


@dataclass(frozen=True)
class MarkovEvolution:
    """Channel mode: one Markov transition per sample, starting at `initial`."""

    initial: ShadowState


def generate_gain_series(table: EnvironmentTable, elevation_deg, mode, count, rng):
    """Generate `count` gains under `mode` (FixedState or MarkovEvolution)."""
    if count < 1:
        raise ParameterError(f"count must be >= 1, got {count}")
    if isinstance(mode, FixedState):
        params = table.lookup(mode.state, elevation_deg)
        samples = sample_loo(params, count, rng)
        states = np.full(count, int(mode.state), dtype=np.int8)
        return GainSeries(samples=samples, states=states)
    if isinstance(mode, MarkovEvolution):
        per_state = {
            state: table.lookup(state, elevation_deg) for state in ShadowState
        }
        states = simulate_states(table.chain, mode.initial, count, rng)
        samples = np.empty(count, dtype=complex)
        for state in ShadowState:
            index = np.nonzero(states == int(state))[0]
            if index.size:
                samples[index] = sample_loo(per_state[state], index.size, rng)
        return GainSeries(samples=samples, states=states)
    raise ParameterError(f"mode must be FixedState or MarkovEvolution, got {mode!r}")

"""Continuous scalar laws with exact density suprema and small-ball functionals.

Every law carries its density supremum analytically (1/(c-a) for uniform,
1/(sigma*sqrt(2*pi)) for gaussian, ...) rather than estimated: the bound
curves are parameterised by that constant, so it has to be exact.  Laws with
unbounded densities (arcsine and friends) are deliberately not representable;
``PiecewiseConstant`` is the extensibility point for arbitrary bounded
densities.

All sampling goes through the quantile function, one uniform variate per
draw, so the counter-based streams in :mod:`smallball.ensembles` stay
reproducible under any chunking.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

__all__ = [
    "Distribution",
    "Uniform",
    "Gaussian",
    "Triangular",
    "PiecewiseConstant",
    "from_record",
]

# Generator.random() emits doubles in [0, 1); clamp away exact zero before
# inverse-CDF transforms so laws with infinite lower quantiles stay finite.
_U_FLOOR = 2.0 ** -53

# Unbounded supports are cut at this many standard deviations for shift grids
# and quadrature domains.
_TAIL_SIGMAS = 8.0

_SQRT_2PI = math.sqrt(2.0 * math.pi)


class Distribution:
    """A continuous law with analytic density, CDF, quantile and sampler."""

    kind = ""

    @property
    def density_sup(self) -> float:
        raise NotImplementedError

    @property
    def support(self) -> tuple[float, float]:
        raise NotImplementedError

    def density(self, x):
        """Density f(x); zero outside the support.  Scalars or arrays."""
        raise NotImplementedError

    def cdf(self, x):
        raise NotImplementedError

    def ppf(self, u):
        """Quantile function; inverse of ``cdf`` on (0, 1)."""
        raise NotImplementedError

    def describe(self) -> dict:
        """Config-file record; inverse of :func:`from_record`."""
        raise NotImplementedError

    def effective_support(self) -> tuple[float, float]:
        """Finite interval carrying all but a negligible tail of the mass."""
        lo, hi = self.support
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise NotImplementedError("unbounded law must override effective_support")
        return lo, hi

    def sample(self, rng: np.random.Generator, size=None):
        """Draw via the quantile transform from an explicit generator."""
        return self.ppf(np.maximum(rng.random(size), _U_FLOOR))

    def small_ball_prob(self, gamma: float, t: float) -> float:
        """Exact P[|X + gamma| <= t] from the analytic CDF."""
        if t < 0:
            raise ValueError(f"threshold must be nonnegative, got {t}")
        return float(self.cdf(t - gamma) - self.cdf(-t - gamma))

    def small_ball_sup(self, t: float, gamma_grid: int = 512) -> float:
        """Maximum of ``small_ball_prob`` over a support-aware shift grid.

        The window centre -gamma sweeps the effective support expanded by t
        on each side.  Whatever the law, the result is at most
        2 * density_sup * t.
        """
        if t < 0:
            raise ValueError(f"threshold must be nonnegative, got {t}")
        if gamma_grid < 1:
            raise ValueError(f"gamma_grid must be positive, got {gamma_grid}")
        if t == 0:
            return 0.0
        lo, hi = self.effective_support()
        centers = np.linspace(lo - t, hi + t, gamma_grid)
        probs = self.cdf(centers + t) - self.cdf(centers - t)
        return float(np.max(probs))


@dataclass(frozen=True)
class Uniform(Distribution):
    """Uniform law on [a, c]."""

    a: float
    c: float

    kind = "uniform"

    def __post_init__(self):
        if not (math.isfinite(self.a) and math.isfinite(self.c)):
            raise ValueError("uniform endpoints must be finite")
        if not self.c > self.a:
            raise ValueError(f"uniform needs a < c, got [{self.a}, {self.c}]")

    @property
    def density_sup(self) -> float:
        return 1.0 / (self.c - self.a)

    @property
    def support(self) -> tuple[float, float]:
        return self.a, self.c

    def density(self, x):
        if np.ndim(x) == 0:
            return 1.0 / (self.c - self.a) if self.a <= x <= self.c else 0.0
        x = np.asarray(x, dtype=float)
        return np.where((x >= self.a) & (x <= self.c), 1.0 / (self.c - self.a), 0.0)

    def cdf(self, x):
        out = np.clip((np.asarray(x, dtype=float) - self.a) / (self.c - self.a), 0.0, 1.0)
        return out if out.ndim else float(out)

    def ppf(self, u):
        out = self.a + (self.c - self.a) * np.asarray(u, dtype=float)
        return out if out.ndim else float(out)

    def describe(self) -> dict:
        return {"kind": "uniform", "a": self.a, "c": self.c}


@dataclass(frozen=True)
class Gaussian(Distribution):
    """Normal law with mean mu and standard deviation sigma."""

    mu: float
    sigma: float

    kind = "gaussian"

    def __post_init__(self):
        if not (math.isfinite(self.mu) and math.isfinite(self.sigma)):
            raise ValueError("gaussian parameters must be finite")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")

    @property
    def density_sup(self) -> float:
        return 1.0 / (self.sigma * _SQRT_2PI)

    @property
    def support(self) -> tuple[float, float]:
        return -math.inf, math.inf

    def effective_support(self) -> tuple[float, float]:
        pad = _TAIL_SIGMAS * self.sigma
        return self.mu - pad, self.mu + pad

    def density(self, x):
        if np.ndim(x) == 0:
            z = (x - self.mu) / self.sigma
            return math.exp(-0.5 * z * z) / (self.sigma * _SQRT_2PI)
        z = (np.asarray(x, dtype=float) - self.mu) / self.sigma
        return np.exp(-0.5 * z * z) / (self.sigma * _SQRT_2PI)

    def cdf(self, x):
        out = ndtr((np.asarray(x, dtype=float) - self.mu) / self.sigma)
        return out if np.ndim(out) else float(out)

    def ppf(self, u):
        out = self.mu + self.sigma * ndtri(np.asarray(u, dtype=float))
        return out if np.ndim(out) else float(out)

    def describe(self) -> dict:
        return {"kind": "gaussian", "mu": self.mu, "sigma": self.sigma}


@dataclass(frozen=True)
class Triangular(Distribution):
    """Triangular law on [a, c] with mode m (a <= m <= c, a < c)."""

    a: float
    m: float
    c: float

    kind = "triangular"

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.a, self.m, self.c)):
            raise ValueError("triangular parameters must be finite")
        if not (self.a <= self.m <= self.c and self.a < self.c):
            raise ValueError(
                f"triangular needs a <= m <= c and a < c, got ({self.a}, {self.m}, {self.c})"
            )

    @property
    def density_sup(self) -> float:
        return 2.0 / (self.c - self.a)

    @property
    def support(self) -> tuple[float, float]:
        return self.a, self.c

    def density(self, x):
        a, m, c = self.a, self.m, self.c
        w = c - a
        if np.ndim(x) == 0:
            if x < a or x > c:
                return 0.0
            if x < m:
                return 2.0 * (x - a) / (w * (m - a))
            if x > m:
                return 2.0 * (c - x) / (w * (c - m))
            return 2.0 / w
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        if m > a:
            sel = (x >= a) & (x < m)
            out[sel] = 2.0 * (x[sel] - a) / (w * (m - a))
        if c > m:
            sel = (x >= m) & (x <= c)
            out[sel] = 2.0 * (c - x[sel]) / (w * (c - m))
        else:
            out[x == c] = 2.0 / w
        return out

    def cdf(self, x):
        scalar = np.ndim(x) == 0
        x = np.atleast_1d(np.asarray(x, dtype=float))
        a, m, c = self.a, self.m, self.c
        w = c - a
        out = np.zeros_like(x)
        if m > a:
            sel = (x > a) & (x <= m)
            out[sel] = (x[sel] - a) ** 2 / (w * (m - a))
        if c > m:
            sel = (x > m) & (x < c)
            out[sel] = 1.0 - (c - x[sel]) ** 2 / (w * (c - m))
        out[x >= c] = 1.0
        return float(out[0]) if scalar else out

    def ppf(self, u):
        scalar = np.ndim(u) == 0
        u = np.atleast_1d(np.asarray(u, dtype=float))
        a, m, c = self.a, self.m, self.c
        w = c - a
        fm = (m - a) / w
        out = np.empty_like(u)
        left = u <= fm
        if m > a:
            out[left] = a + np.sqrt(u[left] * w * (m - a))
        else:
            out[left] = a
        if c > m:
            out[~left] = c - np.sqrt((1.0 - u[~left]) * w * (c - m))
        else:
            out[~left] = c
        return float(out[0]) if scalar else out

    def describe(self) -> dict:
        return {"kind": "triangular", "a": self.a, "m": self.m, "c": self.c}


@dataclass(frozen=True)
class PiecewiseConstant(Distribution):
    """Step density: heights[j] on [breakpoints[j], breakpoints[j+1]).

    Heights must integrate to one against the breakpoints; that is validated
    at construction (tolerance 1e-9), not renormalised silently.
    """

    breakpoints: tuple[float, ...]
    heights: tuple[float, ...]

    kind = "piecewise_constant"

    def __post_init__(self):
        bp = tuple(float(v) for v in self.breakpoints)
        hs = tuple(float(v) for v in self.heights)
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "heights", hs)
        if len(bp) < 2 or len(hs) != len(bp) - 1:
            raise ValueError("need k+1 breakpoints and k heights with k >= 1")
        if not all(math.isfinite(v) for v in bp + hs):
            raise ValueError("breakpoints and heights must be finite")
        widths = np.diff(bp)
        if not np.all(widths > 0):
            raise ValueError("breakpoints must be strictly increasing")
        if any(h < 0 for h in hs):
            raise ValueError("heights must be nonnegative")
        mass = float(np.sum(np.asarray(hs) * widths))
        if abs(mass - 1.0) > 1e-9:
            raise ValueError(f"heights must integrate to 1, got {mass!r}")
        cum = np.concatenate([[0.0], np.cumsum(np.asarray(hs) * widths)])
        cum[-1] = 1.0
        object.__setattr__(self, "_cum", cum)
        object.__setattr__(self, "_bp", np.asarray(bp))
        object.__setattr__(self, "_hs", np.asarray(hs))

    @property
    def density_sup(self) -> float:
        return max(self.heights)

    @property
    def support(self) -> tuple[float, float]:
        return self.breakpoints[0], self.breakpoints[-1]

    def density(self, x):
        if np.ndim(x) == 0:
            if x < self.breakpoints[0] or x > self.breakpoints[-1]:
                return 0.0
            j = min(bisect.bisect_right(self.breakpoints, x) - 1, len(self.heights) - 1)
            return self.heights[max(j, 0)]
        x = np.asarray(x, dtype=float)
        j = np.clip(np.searchsorted(self._bp, x, side="right") - 1, 0, len(self.heights) - 1)
        inside = (x >= self._bp[0]) & (x <= self._bp[-1])
        return np.where(inside, self._hs[j], 0.0)

    def cdf(self, x):
        scalar = np.ndim(x) == 0
        x = np.atleast_1d(np.asarray(x, dtype=float))
        j = np.clip(np.searchsorted(self._bp, x, side="right") - 1, 0, len(self.heights) - 1)
        out = self._cum[j] + self._hs[j] * (x - self._bp[j])
        out[x <= self._bp[0]] = 0.0
        out[x >= self._bp[-1]] = 1.0
        out = np.clip(out, 0.0, 1.0)
        return float(out[0]) if scalar else out

    def ppf(self, u):
        scalar = np.ndim(u) == 0
        u = np.atleast_1d(np.asarray(u, dtype=float))
        j = np.clip(np.searchsorted(self._cum, u, side="right") - 1, 0, len(self.heights) - 1)
        h = self._hs[j]
        out = np.where(h > 0, self._bp[j] + (u - self._cum[j]) / np.where(h > 0, h, 1.0), self._bp[j])
        return float(out[0]) if scalar else out

    def describe(self) -> dict:
        return {
            "kind": "piecewise_constant",
            "breakpoints": list(self.breakpoints),
            "heights": list(self.heights),
        }


_KINDS = {
    "uniform": Uniform,
    "gaussian": Gaussian,
    "triangular": Triangular,
    "piecewise_constant": PiecewiseConstant,
}


def from_record(record: dict) -> Distribution:
    """Build a law from a config record like ``{"kind": "uniform", "a": 0, "c": 1}``."""
    if not isinstance(record, dict):
        raise ValueError(f"distribution record must be a mapping, got {type(record).__name__}")
    if "kind" not in record:
        raise ValueError("distribution record needs a 'kind' field")
    kind = record["kind"]
    cls = _KINDS.get(kind)
    if cls is None:
        raise ValueError(f"unknown distribution kind {kind!r} (choose from {sorted(_KINDS)})")
    params = {k: v for k, v in record.items() if k != "kind"}
    if cls is PiecewiseConstant:
        params = {k: tuple(v) if isinstance(v, (list, tuple)) else v for k, v in params.items()}
    try:
        return cls(**params)
    except TypeError as exc:
        raise ValueError(f"bad parameters for {kind!r}: {exc}") from exc

"""Closed-form small-ball bound curves and the epsilon-schedule machinery.

Bounds are reported unclamped; the comparison layer applies min(1, value)
separately, since a bound above 1 is vacuous but the raw curve is still
informative in reports.  On (0, 1) the absolute value |log t| is implemented
as -log t.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

__all__ = [
    "det_bound",
    "norm_bound",
    "sn_bound_closed",
    "sn_bound_raw",
    "symmetric_norm_bound",
    "schedule_bound",
    "geometric_schedule",
    "product_smallball_bound",
    "twobytwo_det_bound",
    "product_density_envelope",
    "product_density_envelope_mass",
    "minimize_sn_raw",
    "BoundCurve",
    "make_curve",
    "CURVE_NAMES",
    "VERIFIABLE_CURVES",
]


def _check_dim(n) -> int:
    if int(n) != n or n < 1:
        raise ValueError(f"dimension must be a positive integer, got {n!r}")
    return int(n)


def _check_b(b) -> float:
    if not b > 0:
        raise ValueError(f"density supremum must be positive, got {b!r}")
    return float(b)


def _check_t(t) -> float:
    if t < 0:
        raise ValueError(f"threshold must be nonnegative, got {t!r}")
    return float(t)


def _check_unit_t(t) -> float:
    if not 0.0 < t < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {t!r}")
    return float(t)


def det_bound(n: int, b: float, t: float) -> float:
    """2*b*n*t, bounding P[|det(A+T)|^(1/n) <= t] for b-bounded diagonals."""
    n, b, t = _check_dim(n), _check_b(b), _check_t(t)
    return 2.0 * b * n * t


def norm_bound(n: int, b: float, t: float) -> float:
    """2*b*n*t for P[||T|| <= t]: the norm event implies the determinant event."""
    return det_bound(n, b, t)


def sn_bound_closed(n: int, b: float, expected_norm: float, t: float) -> float:
    """(2b)^(n/(2n-1)) * E^((n-1)/(2n-1)) * t^(1/(2n-1)) for P[s_min <= t]."""
    n, b, t = _check_dim(n), _check_b(b), _check_t(t)
    if not expected_norm > 0:
        raise ValueError(f"expected_norm must be positive, got {expected_norm!r}")
    e = 2.0 * n - 1.0
    return (2.0 * b) ** (n / e) * expected_norm ** ((n - 1.0) / e) * t ** (1.0 / e)


def sn_bound_raw(n: int, b: float, expected_norm: float, t: float, beta: float) -> float:
    """Two-term trade-off 2b * beta^((n-1)/n) * t^(1/n) + E/beta at a given beta."""
    n, b, t = _check_dim(n), _check_b(b), _check_t(t)
    if not expected_norm > 0:
        raise ValueError(f"expected_norm must be positive, got {expected_norm!r}")
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta!r}")
    return 2.0 * b * beta ** ((n - 1.0) / n) * t ** (1.0 / n) + expected_norm / beta


def symmetric_norm_bound(n: int, b: float, t: float) -> float:
    """(2bt)^n for P[||T|| <= t] when T is symmetric (norm >= every |T_ii|)."""
    n, b, t = _check_dim(n), _check_b(b), _check_t(t)
    return (2.0 * b * t) ** n


def schedule_bound(b: float, eps) -> float:
    """Accumulated recursion bound 2b * (eps_1 + sum_{k>=2} eps_k / eps_{k-1})."""
    b = _check_b(b)
    eps = [float(e) for e in eps]
    if not eps:
        raise ValueError("schedule must be nonempty")
    if any(e <= 0 for e in eps):
        raise ValueError("schedule entries must be positive")
    total = eps[0] + sum(eps[k] / eps[k - 1] for k in range(1, len(eps)))
    return 2.0 * b * total


def geometric_schedule(n: int, tau: float) -> list[float]:
    """[tau^(1/n), ..., tau]: equalises all ratio terms, optimal by AM-GM.

    ``schedule_bound(b, geometric_schedule(n, tau))`` equals 2*b*n*tau^(1/n).
    """
    n = _check_dim(n)
    if not 0.0 < tau < 1.0:
        raise ValueError(f"final epsilon must lie in (0, 1), got {tau!r}")
    return [tau ** (j / n) for j in range(1, n + 1)]


def product_smallball_bound(b: float, t: float) -> float:
    """4bt + 4b^2 t (1 + |log t|), bounding P[|X*Y + gamma| < t] for t in (0,1)."""
    b, t = _check_b(b), _check_unit_t(t)
    return 4.0 * b * t + 4.0 * b * b * t * (1.0 - math.log(t))


def twobytwo_det_bound(b: float, t: float) -> float:
    """4bt^2 + 4b^2 t^2 (1 + 2|log t|), bounding P[|det T|^(1/2) <= t] at n=2."""
    b, t = _check_b(b), _check_unit_t(t)
    return 4.0 * b * t * t + 4.0 * b * b * t * t * (1.0 - 2.0 * math.log(t))


def product_density_envelope(b: float, z: float) -> float:
    """Pointwise envelope for the density of a product of two b-bounded laws.

    2b + 2b^2 |log|z|| inside the unit interval, 2b outside; the origin is an
    integrable log divergence and returns +inf.
    """
    b = _check_b(b)
    az = abs(z)
    if az == 0.0:
        return math.inf
    if az >= 1.0:
        return 2.0 * b
    return 2.0 * b - 2.0 * b * b * math.log(az)


def product_density_envelope_mass(b: float, lo: float, hi: float) -> float:
    """Closed-form integral of the envelope over [lo, hi]."""
    b = _check_b(b)
    if hi < lo:
        raise ValueError(f"empty interval [{lo}, {hi}]")

    def anti(x: float) -> float:
        # integral of the envelope from 0 to x >= 0
        if x <= 0.0:
            return 0.0
        if x <= 1.0:
            return 2.0 * b * x + 2.0 * b * b * (x - x * math.log(x))
        return 2.0 * b + 2.0 * b * b + 2.0 * b * (x - 1.0)

    def signed(x: float) -> float:
        return math.copysign(anti(abs(x)), x)

    return signed(hi) - signed(lo)


_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def minimize_sn_raw(
    n: int, b: float, expected_norm: float, t: float, rel_tol: float = 1e-10
) -> tuple[float, float]:
    """Golden-section minimum of ``sn_bound_raw`` over beta.

    The objective is one increasing plus one decreasing term of beta, hence
    unimodal; the search runs on log(beta) over [1e-6, 1e9] * expected_norm.
    Returns (beta_star, minimum value).
    """
    if not expected_norm > 0:
        raise ValueError(f"expected_norm must be positive, got {expected_norm!r}")

    def f(x: float) -> float:
        return sn_bound_raw(n, b, expected_norm, t, math.exp(x))

    lo = math.log(1e-6 * expected_norm)
    hi = math.log(1e9 * expected_norm)
    x1 = hi - _GOLDEN * (hi - lo)
    x2 = lo + _GOLDEN * (hi - lo)
    f1, f2 = f(x1), f(x2)
    while hi - lo > rel_tol * max(1.0, abs(lo), abs(hi)):
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _GOLDEN * (hi - lo)
            f1 = f(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _GOLDEN * (hi - lo)
            f2 = f(x2)
    x = 0.5 * (lo + hi)
    return math.exp(x), f(x)


@dataclass(frozen=True)
class BoundCurve:
    """A named closed-form curve t -> bound(t) with its parameters.

    ``clamp`` says whether probability comparisons use min(1, value).
    ``vanishes_at_zero`` marks genuine small-ball probability bounds; the raw
    beta trade-off carries a +E/beta offset and the density envelope diverges
    at the origin, so neither qualifies.
    """

    name: str
    params: dict
    evaluator: Callable[[float], float]
    description: str
    clamp: bool = True
    vanishes_at_zero: bool = True

    def __call__(self, t: float) -> float:
        return self.evaluator(t)

    def clamped(self, t: float) -> float:
        value = self.evaluator(t)
        return min(1.0, value) if self.clamp else value


CURVE_NAMES = (
    "det",
    "norm",
    "sn_closed",
    "sn_raw",
    "sym_norm",
    "schedule",
    "product_smallball",
    "det2x2",
    "envelope",
)

# the envelope bounds a density, not a probability, so it cannot be used in
# Monte-Carlo domination checks
VERIFIABLE_CURVES = tuple(name for name in CURVE_NAMES if name != "envelope")


def _needs(name: str, **kwargs):
    missing = [k for k, v in kwargs.items() if v is None]
    if missing:
        raise ValueError(f"curve {name!r} requires parameter(s): {', '.join(missing)}")


def _unset_expected_norm(t: float) -> float:
    raise RuntimeError("expected_norm not set; estimate it before evaluating this curve")


def make_curve(
    name: str,
    *,
    n: int | None = None,
    b: float | None = None,
    expected_norm: float | None = None,
    beta: float | None = None,
) -> BoundCurve:
    """Build a catalogue curve by name.

    ``sn_closed`` and ``sn_raw`` accept ``expected_norm=None`` as a
    placeholder; the verification engine fills it in from a pre-pass before
    evaluating.
    """
    if name in ("det", "norm"):
        _needs(name, n=n, b=b)
        fn = det_bound if name == "det" else norm_bound
        what = "|det(A+T)|^(1/n)" if name == "det" else "||T||"
        return BoundCurve(
            name=name,
            params={"n": n, "b": b},
            evaluator=lambda t, n=n, b=b, fn=fn: fn(n, b, t),
            description=f"2*b*n*t bound on P[{what} <= t]",
        )
    if name == "sn_closed":
        _needs(name, n=n, b=b)
        if expected_norm is None:
            evaluator = _unset_expected_norm
        else:
            evaluator = lambda t, n=n, b=b, e=expected_norm: sn_bound_closed(n, b, e, t)
        return BoundCurve(
            name=name,
            params={"n": n, "b": b, "expected_norm": expected_norm},
            evaluator=evaluator,
            description="(2b)^(n/(2n-1)) E^((n-1)/(2n-1)) t^(1/(2n-1)) bound on P[s_min <= t]",
        )
    if name == "sn_raw":
        _needs(name, n=n, b=b, beta=beta)
        if expected_norm is None:
            evaluator = _unset_expected_norm
        else:
            evaluator = lambda t, n=n, b=b, e=expected_norm, beta=beta: sn_bound_raw(n, b, e, t, beta)
        return BoundCurve(
            name=name,
            params={"n": n, "b": b, "expected_norm": expected_norm, "beta": beta},
            evaluator=evaluator,
            description="two-term bound 2b beta^((n-1)/n) t^(1/n) + E/beta on P[s_min <= t]",
            vanishes_at_zero=False,
        )
    if name == "sym_norm":
        _needs(name, n=n, b=b)
        return BoundCurve(
            name=name,
            params={"n": n, "b": b},
            evaluator=lambda t, n=n, b=b: symmetric_norm_bound(n, b, t),
            description="(2bt)^n bound on P[||T|| <= t] for symmetric T",
        )
    if name == "schedule":
        _needs(name, n=n, b=b)

        def evaluator(t, n=n, b=b):
            if t == 0.0:
                return 0.0
            return schedule_bound(b, geometric_schedule(n, t))

        return BoundCurve(
            name=name,
            params={"n": n, "b": b},
            evaluator=evaluator,
            description="recursion bound with the geometric schedule (= 2 b n t^(1/n)) on P[|det| <= t]",
        )
    if name in ("product_smallball", "det2x2"):
        _needs(name, b=b)
        fn = product_smallball_bound if name == "product_smallball" else twobytwo_det_bound
        what = (
            "P[|X*Y + gamma| < t] for b-bounded X, Y"
            if name == "product_smallball"
            else "P[|det T|^(1/2) <= t] for 2x2 T"
        )

        def evaluator(t, b=b, fn=fn):
            if t == 0.0:
                return 0.0
            return fn(b, t)

        return BoundCurve(
            name=name,
            params={"b": b},
            evaluator=evaluator,
            description=f"log-corrected bound on {what}",
        )
    if name == "envelope":
        _needs(name, b=b)
        return BoundCurve(
            name=name,
            params={"b": b},
            evaluator=lambda z, b=b: product_density_envelope(b, z),
            description="pointwise envelope 2b + 2b^2|log|z|| for the product density",
            clamp=False,
            vanishes_at_zero=False,
        )
    raise ValueError(f"unknown curve {name!r} (choose from {', '.join(CURVE_NAMES)})")

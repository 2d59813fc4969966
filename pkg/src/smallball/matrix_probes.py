"""Numerically robust matrix functionals: log|det|, permanent, singular values.

Determinants are always accumulated in log space: the probability probes need
|det| far below double-precision underflow once the dimension grows, and the
event |det|^(1/n) <= t is evaluated downstream as log|det| <= n*log(t).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgWarning, lu_factor

__all__ = [
    "SINGULAR_PIVOT",
    "PERMANENT_CAP",
    "ProbeResult",
    "log_abs_det",
    "log_abs_det_batch",
    "permanent",
    "permanent_batch",
    "singular_values",
    "singular_values_batch",
    "probe",
]

# LU pivots below this magnitude count as exact zeros.  Continuous ensembles
# never get here; the sentinel guards adversarial deterministic inputs.
SINGULAR_PIVOT = 1e-300

# Ryser's formula is Theta(2^n * n); refuse anything bigger by default.
PERMANENT_CAP = 20


def _as_square(m) -> np.ndarray:
    a = np.asarray(m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if a.shape[0] == 0:
        raise ValueError("empty matrix")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix entries must be finite")
    return a


def _as_stack(ms) -> np.ndarray:
    a = np.asarray(ms, dtype=float)
    if a.ndim != 3 or a.shape[1] != a.shape[2] or a.shape[1] == 0:
        raise ValueError(f"expected a stack of square matrices, got shape {a.shape}")
    return a


def log_abs_det(m) -> tuple[float, int]:
    """log|det m| and the sign of det m via row-pivoted LU.

    Returns (-inf, 0) when a pivot is below ``SINGULAR_PIVOT``.
    """
    a = _as_square(m)
    with warnings.catch_warnings():
        # scipy warns on exactly-zero pivots; the sentinel below handles them
        warnings.simplefilter("ignore", LinAlgWarning)
        lu, piv = lu_factor(a)
    d = lu.diagonal()
    if np.any(np.abs(d) < SINGULAR_PIVOT):
        return float("-inf"), 0
    swaps = int(np.count_nonzero(piv != np.arange(a.shape[0])))
    negatives = int(np.count_nonzero(d < 0))
    sign = -1 if (swaps + negatives) % 2 else 1
    return float(np.sum(np.log(np.abs(d)))), sign


def log_abs_det_batch(ms) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised ``log_abs_det`` over a (B, n, n) stack.

    Same pivoted-LU route (LAPACK getrf under slogdet); exactly singular
    members come back as (-inf, 0).
    """
    a = _as_stack(ms)
    sign, logdet = np.linalg.slogdet(a)
    return logdet, sign.astype(np.int64)


def permanent(m, cap: int = PERMANENT_CAP) -> float:
    """Permanent via Ryser's inclusion-exclusion with Gray-code updates."""
    return float(permanent_batch(_as_square(m)[None, :, :], cap=cap)[0])


def permanent_batch(ms, cap: int = PERMANENT_CAP) -> np.ndarray:
    """Permanents of a (B, n, n) stack; one Gray-code sweep shared by the batch."""
    a = _as_stack(ms)
    n = a.shape[1]
    if n > cap:
        raise ValueError(f"permanent limited to n <= {cap}, got n = {n}")
    rowsums = np.zeros((a.shape[0], n))
    acc = np.zeros(a.shape[0])
    subset_sign = 1
    prev = 0
    for k in range(1, 1 << n):
        gray = k ^ (k >> 1)
        bit = gray ^ prev
        j = bit.bit_length() - 1
        if gray & bit:
            rowsums += a[:, :, j]
        else:
            rowsums -= a[:, :, j]
        subset_sign = -subset_sign
        prev = gray
        acc += subset_sign * np.prod(rowsums, axis=1)
    return acc if n % 2 == 0 else -acc


def singular_values(m) -> np.ndarray:
    """Full singular spectrum, descending."""
    return np.linalg.svd(_as_square(m), compute_uv=False)


def singular_values_batch(ms) -> np.ndarray:
    """Spectra of a (B, n, n) stack, each row descending."""
    return np.linalg.svd(_as_stack(ms), compute_uv=False)


@dataclass(frozen=True)
class ProbeResult:
    """Bundle of the matrix functionals used by the Monte-Carlo engine."""

    log_abs_det: float
    sign: int
    s_min: float
    s_max: float
    spectrum: np.ndarray | None = None


def probe(m, full_spectrum: bool = False) -> ProbeResult:
    a = _as_square(m)
    logdet, sign = log_abs_det(a)
    s = singular_values(a)
    return ProbeResult(
        log_abs_det=logdet,
        sign=sign,
        s_min=float(s[-1]),
        s_max=float(s[0]),
        spectrum=s if full_spectrum else None,
    )

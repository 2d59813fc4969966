"""Random-matrix ensembles: independent continuous diagonals, arbitrary
off-diagonal content, optional deterministic shift.

Sampling is counter-based for reproducible parallelism.  Every diagonal
position and the off-diagonal block own disjoint Philox streams keyed by
(master seed, role); sample ``index`` maps to a fixed, whole-block counter
window inside its stream.  Entry values therefore never depend on chunk
boundaries, worker count or evaluation order, and any (master seed, index)
pair can be replayed bit-exactly.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numpy.random import Generator, Philox

from .distributions import Distribution

__all__ = [
    "OffdiagPolicy",
    "Zero",
    "Constant",
    "DeterministicMatrix",
    "IID",
    "SymmetricIID",
    "RankOne",
    "SharedScalar",
    "EnsembleSpec",
    "SeedPath",
    "MatrixSample",
    "sample_matrix",
    "sample_matrix_batch",
    "regenerate",
    "symmetric_ensemble",
    "policy_from_record",
    "derive_seed",
]

_MASK64 = (1 << 64) - 1
_U_FLOOR = 2.0 ** -53
_WORDS_PER_BLOCK = 4  # Philox-4x64 emits four 64-bit words per counter tick


def _stream_key(master_seed: int, role: int) -> int:
    """128-bit Philox key: master seed in the low word, role in the high."""
    return (int(master_seed) & _MASK64) | ((int(role) & _MASK64) << 64)


def _stream_uniforms(master_seed: int, role: int, words_per_index: int, start: int, stop: int):
    """Uniform draws for sample indices [start, stop) of one role's stream.

    Each index owns ceil(words/4) whole Philox blocks, so any chunking of the
    index range reproduces identical values.
    """
    count = stop - start
    blocks_per_index = -(-words_per_index // _WORDS_PER_BLOCK)
    bitgen = Philox(key=_stream_key(master_seed, role), counter=start * blocks_per_index)
    u = Generator(bitgen).random(count * blocks_per_index * _WORDS_PER_BLOCK)
    u = u.reshape(count, blocks_per_index * _WORDS_PER_BLOCK)[:, :words_per_index]
    return np.maximum(u, _U_FLOOR)


def _offdiag_indices(n: int) -> tuple[np.ndarray, np.ndarray]:
    rows, cols = np.nonzero(~np.eye(n, dtype=bool))
    return rows, cols  # row-major over i != j


def _mix64(z: int) -> int:
    """SplitMix64 finaliser."""
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def derive_seed(master_seed: int, tag: int) -> int:
    """Mix of (seed, tag); used by passes needing their own streams.

    The tag is mixed before combining so structured (seed, tag) pairs cannot
    collide the way a plain XOR would.
    """
    return _mix64((int(master_seed) & _MASK64) ^ _mix64(int(tag) & _MASK64))


class OffdiagPolicy:
    """Recipe for the off-diagonal part of T.

    The policies are deliberately a mixed bag, including fully dependent ones
    (``SharedScalar``, ``RankOne``): the bound curves assume nothing about
    off-diagonal entries, so adversarial choices stress-test that generality.
    """

    name = ""

    def draws_per_sample(self, n: int) -> int:
        raise NotImplementedError

    def fill(self, out: np.ndarray, u: np.ndarray | None) -> None:
        """Write off-diagonal entries of the (B, n, n) buffer ``out``."""
        raise NotImplementedError

    def validate(self, n: int) -> None:
        pass

    def describe(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Zero(OffdiagPolicy):
    name = "zero"

    def draws_per_sample(self, n: int) -> int:
        return 0

    def fill(self, out, u) -> None:
        pass

    def describe(self) -> dict:
        return {"policy": "zero"}


@dataclass(frozen=True)
class Constant(OffdiagPolicy):
    value: float

    name = "constant"

    def draws_per_sample(self, n: int) -> int:
        return 0

    def fill(self, out, u) -> None:
        rows, cols = _offdiag_indices(out.shape[1])
        out[:, rows, cols] = self.value

    def describe(self) -> dict:
        return {"policy": "constant", "value": self.value}


@dataclass(frozen=True, eq=False)
class DeterministicMatrix(OffdiagPolicy):
    """Fixed off-diagonal content; the matrix's own diagonal is ignored."""

    matrix: np.ndarray

    name = "deterministic_matrix"

    def __post_init__(self):
        object.__setattr__(self, "matrix", np.asarray(self.matrix, dtype=float))

    def validate(self, n: int) -> None:
        if self.matrix.shape != (n, n):
            raise ValueError(
                f"deterministic off-diagonal matrix must be {n}x{n}, got {self.matrix.shape}"
            )

    def draws_per_sample(self, n: int) -> int:
        return 0

    def fill(self, out, u) -> None:
        rows, cols = _offdiag_indices(out.shape[1])
        out[:, rows, cols] = self.matrix[rows, cols]

    def describe(self) -> dict:
        return {"policy": "deterministic_matrix", "matrix": self.matrix.tolist()}


@dataclass(frozen=True)
class IID(OffdiagPolicy):
    law: Distribution

    name = "iid"

    def draws_per_sample(self, n: int) -> int:
        return n * (n - 1)

    def fill(self, out, u) -> None:
        rows, cols = _offdiag_indices(out.shape[1])
        out[:, rows, cols] = self.law.ppf(u)

    def describe(self) -> dict:
        return {"policy": "iid", "law": self.law.describe()}


@dataclass(frozen=True)
class SymmetricIID(OffdiagPolicy):
    law: Distribution

    name = "symmetric_iid"

    def draws_per_sample(self, n: int) -> int:
        return n * (n - 1) // 2

    def fill(self, out, u) -> None:
        n = out.shape[1]
        if n == 1:
            return
        rows, cols = np.triu_indices(n, k=1)
        values = self.law.ppf(u)
        out[:, rows, cols] = values
        out[:, cols, rows] = values

    def describe(self) -> dict:
        return {"policy": "symmetric_iid", "law": self.law.describe()}


@dataclass(frozen=True)
class RankOne(OffdiagPolicy):
    """Off-diagonal entries u_i * v_j from two random vectors: all dependent."""

    law: Distribution

    name = "rank_one"

    def draws_per_sample(self, n: int) -> int:
        return 2 * n

    def fill(self, out, u) -> None:
        n = out.shape[1]
        left = self.law.ppf(u[:, :n])
        right = self.law.ppf(u[:, n:])
        product = left[:, :, None] * right[:, None, :]
        rows, cols = _offdiag_indices(n)
        out[:, rows, cols] = product[:, rows, cols]

    def describe(self) -> dict:
        return {"policy": "rank_one", "law": self.law.describe()}


@dataclass(frozen=True)
class SharedScalar(OffdiagPolicy):
    """Every off-diagonal entry equals one sampled scalar: maximal dependence."""

    law: Distribution

    name = "shared_scalar"

    def draws_per_sample(self, n: int) -> int:
        return 1

    def fill(self, out, u) -> None:
        rows, cols = _offdiag_indices(out.shape[1])
        out[:, rows, cols] = self.law.ppf(u[:, :1])

    def describe(self) -> dict:
        return {"policy": "shared_scalar", "law": self.law.describe()}


@dataclass(frozen=True, eq=False)
class EnsembleSpec:
    """Recipe for an n x n random matrix A + T.

    ``diagonal_laws`` may be given as a single law (broadcast to all n
    positions) or a sequence of n laws.
    """

    n: int
    diagonal_laws: tuple[Distribution, ...]
    offdiag: OffdiagPolicy
    shift: np.ndarray | None = None

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"matrix dimension must be a positive integer, got {self.n!r}")
        object.__setattr__(self, "n", int(self.n))
        laws = self.diagonal_laws
        if isinstance(laws, Distribution):
            laws = (laws,) * self.n
        else:
            laws = tuple(laws)
        if len(laws) != self.n:
            raise ValueError(f"need {self.n} diagonal laws, got {len(laws)}")
        object.__setattr__(self, "diagonal_laws", laws)
        self.offdiag.validate(self.n)
        if self.shift is not None:
            shift = np.asarray(self.shift, dtype=float)
            if shift.shape != (self.n, self.n):
                raise ValueError(f"shift must be {self.n}x{self.n}, got shape {shift.shape}")
            object.__setattr__(self, "shift", shift)

    @property
    def b_max(self) -> float:
        """Largest diagonal density supremum: the b that bound curves must use."""
        return max(law.density_sup for law in self.diagonal_laws)

    def stream_ids(self, master_seed: int) -> dict[str, int]:
        """Stream keys by role; disjointness of values is the independence guarantee."""
        ids = {f"diag_{i}": _stream_key(master_seed, i) for i in range(self.n)}
        ids["offdiag"] = _stream_key(master_seed, self.n)
        return ids

    def describe(self) -> dict:
        return {
            "n": self.n,
            "diagonal": [law.describe() for law in self.diagonal_laws],
            "offdiag": self.offdiag.describe(),
            "shift": None if self.shift is None else self.shift.tolist(),
        }

    def digest(self) -> str:
        canonical = json.dumps(self.describe(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()[:16]


class SeedPath(NamedTuple):
    """Replay coordinates of one sample."""

    master_seed: int
    index: int


@dataclass(frozen=True, eq=False)
class MatrixSample:
    entries: np.ndarray
    seed_path: SeedPath


def sample_matrix_batch(spec: EnsembleSpec, master_seed: int, start: int, stop: int) -> np.ndarray:
    """Matrices for sample indices [start, stop), shape (stop-start, n, n)."""
    if not 0 <= start < stop:
        raise ValueError(f"need 0 <= start < stop, got [{start}, {stop})")
    n = spec.n
    out = np.zeros((stop - start, n, n))
    for i, law in enumerate(spec.diagonal_laws):
        u = _stream_uniforms(master_seed, i, 1, start, stop)
        out[:, i, i] = law.ppf(u[:, 0])
    words = spec.offdiag.draws_per_sample(n)
    u = _stream_uniforms(master_seed, n, words, start, stop) if words else None
    spec.offdiag.fill(out, u)
    if spec.shift is not None:
        out += spec.shift
    return out


def sample_matrix(spec: EnsembleSpec, master_seed: int, index: int) -> MatrixSample:
    """Single reproducible draw; equals row ``index`` of any covering batch."""
    entries = sample_matrix_batch(spec, master_seed, index, index + 1)[0]
    return MatrixSample(entries=entries, seed_path=SeedPath(int(master_seed), int(index)))


def regenerate(spec: EnsembleSpec, seed_path: SeedPath) -> MatrixSample:
    """Replay a sample from its seed path; bit-exact."""
    return sample_matrix(spec, seed_path.master_seed, seed_path.index)


def symmetric_ensemble(n: int, diagonal_law: Distribution, upper_law: Distribution) -> EnsembleSpec:
    """Symmetric ensemble: independent continuous diagonals, mirrored i<j entries."""
    return EnsembleSpec(n=n, diagonal_laws=(diagonal_law,) * n, offdiag=SymmetricIID(upper_law))


_POLICIES = {
    "zero": Zero,
    "constant": Constant,
    "deterministic_matrix": DeterministicMatrix,
    "iid": IID,
    "symmetric_iid": SymmetricIID,
    "rank_one": RankOne,
    "shared_scalar": SharedScalar,
}


def policy_from_record(record: dict, law_builder) -> OffdiagPolicy:
    """Build a policy from a config record; ``law_builder`` maps law records."""
    if not isinstance(record, dict) or "policy" not in record:
        raise ValueError("off-diagonal record needs a 'policy' field")
    name = record["policy"]
    if name not in _POLICIES:
        raise ValueError(f"unknown off-diagonal policy {name!r} (choose from {sorted(_POLICIES)})")
    if name == "zero":
        return Zero()
    if name == "constant":
        if "value" not in record:
            raise ValueError("constant policy needs a 'value' field")
        return Constant(value=float(record["value"]))
    if name == "deterministic_matrix":
        if "matrix" not in record:
            raise ValueError("deterministic_matrix policy needs a 'matrix' field")
        return DeterministicMatrix(matrix=np.asarray(record["matrix"], dtype=float))
    if "law" not in record:
        raise ValueError(f"{name} policy needs a 'law' field")
    return _POLICIES[name](law=law_builder(record["law"]))

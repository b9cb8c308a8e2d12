"""Shared domain types, validation and the Brunovsky target pair."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

EPS = np.finfo(float).eps


class BrunovskyError(Exception):
    """Base class for all errors raised by this package."""


class InputError(BrunovskyError, ValueError):
    """Malformed or inconsistent input (CLI exit code 2)."""


class DimensionMismatch(InputError):
    pass


class RankDeficientB(InputError):
    pass


class NonDescendingIndices(InputError):
    pass


class EmptyOrNonDescending(InputError):
    pass


class InconsistentWeyr(InputError):
    pass


class ShapeMismatch(InputError):
    pass


class HypothesisViolated(InputError):
    pass


class Uncontrollable(BrunovskyError):
    """The pair (A, B) is not controllable.

    ``stage`` is the 1-based staircase stage at which the reduction stalled and
    ``achieved`` the number of states reached so far (the rank of the
    controllability matrix).
    """

    def __init__(self, message, stage=None, achieved=None):
        super().__init__(message)
        self.stage = stage
        self.achieved = achieved


class NumericalError(BrunovskyError):
    """Numerical breakdown (CLI exit code 4)."""


class SingularD(NumericalError):
    pass


class SingularT(NumericalError):
    pass


class SingularInput(NumericalError):
    pass


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def numerical_rank(M: np.ndarray, tol: float | None = None) -> int:
    """Rank from singular values, threshold ``sigma_max * max(shape) * eps``."""
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    if tol is None:
        tol = s[0] * max(M.shape) * EPS
    return int(np.sum(s > tol))


@dataclass(frozen=True)
class LinearSystem:
    """Validated pair (A, B) of ``x+ = A x + B u``."""

    A: np.ndarray
    B: np.ndarray
    rank_B: int

    def __post_init__(self):
        object.__setattr__(self, "A", _frozen(self.A))
        object.__setattr__(self, "B", _frozen(self.B))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    def to_dict(self) -> dict:
        return {"n": self.n, "m": self.m, "A": self.A.tolist(), "B": self.B.tolist()}


@dataclass(frozen=True)
class StaircasePair:
    """Orthogonally similar staircase pair ``A_s = U A U^T``, ``B_s = U B``."""

    A_s: np.ndarray
    B_s: np.ndarray
    U: np.ndarray
    weyr: tuple[int, ...]

    def __post_init__(self):
        for name in ("A_s", "B_s", "U"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        object.__setattr__(self, "weyr", tuple(int(w) for w in self.weyr))

    @property
    def n(self) -> int:
        return self.A_s.shape[0]

    @property
    def m(self) -> int:
        return self.B_s.shape[1]

    @property
    def offsets(self) -> tuple[int, ...]:
        """Start row of every stair block; ``offsets[i]`` for block ``i+1``."""
        return tuple(int(x) for x in np.concatenate([[0], np.cumsum(self.weyr)]))

    def block(self, i: int, j: int) -> np.ndarray:
        """Stair block ``A^s_{i,j}`` with 1-based indices; ``j = 0`` addresses B_s."""
        off = self.offsets
        rows = slice(off[i - 1], off[i])
        if j == 0:
            return self.B_s[rows, :]
        return self.A_s[rows, off[j - 1] : off[j]]

    def to_dict(self) -> dict:
        return {
            "A_s": self.A_s.tolist(),
            "B_s": self.B_s.tolist(),
            "U": self.U.tolist(),
            "weyr": list(self.weyr),
        }


@dataclass(frozen=True)
class IndexSummary:
    """Integer data derived from the Weyr characteristics.

    ``distinct`` holds the distinct controllability indices ``k_1 > ... > k_g``,
    ``multiplicities`` how often each one occurs, ``weyr_at_k`` the stair
    widths ``omega_{k_j}`` and ``trailing_weyr_sums`` the widths of the free
    parameter blocks.
    """

    weyr: tuple[int, ...]
    mu: tuple[int, ...]
    distinct: tuple[int, ...]
    multiplicities: tuple[int, ...]
    weyr_at_k: tuple[int, ...]
    trailing_weyr_sums: tuple[int, ...]
    n_rank: int
    n_free: int

    @property
    def n(self) -> int:
        return sum(self.weyr)

    @property
    def m(self) -> int:
        return self.weyr[0]

    @property
    def mu_max(self) -> int:
        return self.mu[0]

    @property
    def g(self) -> int:
        return len(self.distinct)

    @property
    def zero_prefix_widths(self) -> tuple[int, ...]:
        return tuple(sum(self.weyr[: k - 1]) for k in self.distinct)

    def to_dict(self) -> dict:
        return {
            "weyr": list(self.weyr),
            "mu": list(self.mu),
            "mu_max": self.mu_max,
            "distinct": list(self.distinct),
            "multiplicities": list(self.multiplicities),
            "weyr_at_k": list(self.weyr_at_k),
            "trailing_weyr_sums": list(self.trailing_weyr_sums),
            "n_rank": self.n_rank,
            "n_free": self.n_free,
        }


@dataclass(frozen=True)
class ParameterSet:
    """Rank-constrained blocks ``S_r[j]`` and free blocks ``S_f[j]``, one per group."""

    S_r: tuple[np.ndarray, ...]
    S_f: tuple[np.ndarray, ...]

    def __post_init__(self):
        object.__setattr__(self, "S_r", tuple(_frozen(s) for s in self.S_r))
        object.__setattr__(self, "S_f", tuple(_frozen(s) for s in self.S_f))

    @property
    def size(self) -> int:
        return sum(s.size for s in self.S_r) + sum(s.size for s in self.S_f)

    def to_vector(self) -> np.ndarray:
        """Flatten S_r blocks then S_f blocks, each column-major."""
        parts = [s.ravel(order="F") for s in self.S_r] + [s.ravel(order="F") for s in self.S_f]
        return np.concatenate(parts) if parts else np.zeros(0)

    def with_vector(self, x: np.ndarray) -> "ParameterSet":
        """Inverse of :meth:`to_vector` using this set's block shapes."""
        x = np.asarray(x, dtype=float)
        if x.size != self.size:
            raise ShapeMismatch(f"expected {self.size} parameters, got {x.size}")
        blocks, pos = [], 0
        for s in self.S_r + self.S_f:
            blocks.append(x[pos : pos + s.size].reshape(s.shape, order="F"))
            pos += s.size
        g = len(self.S_r)
        return ParameterSet(tuple(blocks[:g]), tuple(blocks[g:]))

    def combine(self, a: float, other: "ParameterSet", b: float) -> "ParameterSet":
        return self.with_vector(a * self.to_vector() + b * other.to_vector())

    def to_dict(self) -> dict:
        return {"S_r": [s.tolist() for s in self.S_r], "S_f": [s.tolist() for s in self.S_f]}


@dataclass(frozen=True)
class BrunovskyPair:
    A_b: np.ndarray
    B_b: np.ndarray
    mu: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "A_b", _frozen(self.A_b))
        object.__setattr__(self, "B_b", _frozen(self.B_b))
        object.__setattr__(self, "mu", tuple(int(k) for k in self.mu))


@dataclass(frozen=True)
class TransformTriple:
    """A Brunovsky transformation: ``T (A + B F) T^-1 = A_b`` and ``T B G = B_b``."""

    T: np.ndarray
    F: np.ndarray
    G: np.ndarray
    mu: tuple[int, ...]
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        for name in ("T", "F", "G"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        object.__setattr__(self, "mu", tuple(int(k) for k in self.mu))

    def to_dict(self) -> dict:
        return {
            "mu": list(self.mu),
            "T": self.T.tolist(),
            "F": self.F.tolist(),
            "G": self.G.tolist(),
            "diagnostics": {k: _jsonable(v) for k, v in self.diagnostics.items()},
        }


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, float) and not np.isfinite(v):
        return str(v)
    return v


def validate_system(A, B) -> LinearSystem:
    """Check shapes and the column rank of B, returning a :class:`LinearSystem`."""
    try:
        A = np.asarray(A, dtype=float)
        B = np.asarray(B, dtype=float)
    except (TypeError, ValueError) as exc:
        raise DimensionMismatch(f"matrices must be real and rectangular: {exc}") from exc
    if B.ndim == 1:
        B = B.reshape(-1, 1)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"A must be square, got shape {A.shape}")
    if B.ndim != 2 or B.shape[0] != A.shape[0]:
        raise DimensionMismatch(f"B must have {A.shape[0]} rows, got shape {B.shape}")
    n, m = B.shape
    if not 1 <= m <= n:
        raise DimensionMismatch(f"need n >= m >= 1, got n={n}, m={m}")
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
        raise DimensionMismatch("A and B must be finite")
    r = numerical_rank(B)
    if r < m:
        raise RankDeficientB(f"B has numerical rank {r} < m = {m}")
    return LinearSystem(A, B, r)


def _check_indices(mu: Sequence[int]) -> tuple[int, ...]:
    mu = tuple(int(k) for k in mu)
    if not mu or mu[-1] < 1 or any(a < b for a, b in zip(mu, mu[1:])):
        raise NonDescendingIndices(f"indices must be descending positive integers, got {list(mu)}")
    return mu


def brunovsky_target(mu: Sequence[int]) -> BrunovskyPair:
    """Chains of integrators with lengths ``mu`` (descending), as exact 0/1 matrices."""
    mu = _check_indices(mu)
    n, m = sum(mu), len(mu)
    A_b = np.zeros((n, n))
    B_b = np.zeros((n, m))
    start = 0
    for i, k in enumerate(mu):
        for r in range(start, start + k - 1):
            A_b[r, r + 1] = 1.0
        B_b[start + k - 1, i] = 1.0
        start += k
    return BrunovskyPair(A_b, B_b, mu)


def system_from_dict(doc: dict) -> LinearSystem:
    """Parse the JSON system document ``{"n", "m", "A", "B"}``."""
    try:
        n, m, A, B = doc["n"], doc["m"], doc["A"], doc["B"]
    except (KeyError, TypeError) as exc:
        raise InputError(f"system document needs fields n, m, A, B: {exc}") from exc
    sys = validate_system(A, B)
    if sys.n != n or sys.m != m:
        raise DimensionMismatch(f"declared n={n}, m={m} but matrices give n={sys.n}, m={sys.m}")
    return sys


def load_system(path) -> LinearSystem:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read system file {path}: {exc}") from exc
    return system_from_dict(doc)


def save_system(sys: LinearSystem, path) -> None:
    Path(path).write_text(json.dumps(sys.to_dict()))

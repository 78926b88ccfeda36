"""Exact discrete probability space: a binary scenario tree for one Brownian motion.

A depth-``N`` :class:`BinaryLattice` discretizes one scalar Brownian motion on
``[0, T]`` with increments of exactly ``+/- sqrt(h)``, ``h = T/N``, each with
probability 1/2.  Conditional expectations, stochastic integrals and the
martingale representation are then exact finite sums, so positivity and
comparison statements can be asserted as exact inequalities instead of
statistical ones.

Storage convention: level ``k`` holds ``2**k`` nodes in a dense array indexed
by the path bitmask.  The children of node ``i`` at level ``k`` are ``2*i``
(up move, ``+sqrt(h)``) and ``2*i + 1`` (down move, ``-sqrt(h)``) at level
``k + 1``; the ancestor of node ``i`` at level ``j <= k`` is ``i >> (k - j)``.
Adaptedness is structural: a value stored at level ``k`` can only depend on
the path to that node.

All node probabilities are dyadic rationals and are reported as exact
:class:`fractions.Fraction` objects alongside floating approximations.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

DEFAULT_MAX_DEPTH = 16


class OutOfHorizonError(ValueError):
    """Raised when an increment is requested past the final level."""


class IncompleteProcessError(ValueError):
    """Raised when an operation needs node values that were not supplied."""


@dataclass(frozen=True)
class NodeId:
    """A tree node: ``level`` in [0, N] and path ``index`` in [0, 2**level)."""

    level: int
    index: int

    @property
    def path(self) -> str:
        """The node's path from the root as a string of 'u'/'d' moves."""
        return "".join(
            "u" if (self.index >> (self.level - 1 - j)) & 1 == 0 else "d"
            for j in range(self.level)
        )

    def child(self, branch: str) -> "NodeId":
        if branch == "up":
            return NodeId(self.level + 1, 2 * self.index)
        if branch == "down":
            return NodeId(self.level + 1, 2 * self.index + 1)
        raise ValueError(f"branch must be 'up' or 'down', got {branch!r}")

    def parent(self) -> "NodeId":
        if self.level == 0:
            raise ValueError("root node has no parent")
        return NodeId(self.level - 1, self.index >> 1)

    def ancestor(self, level: int) -> "NodeId":
        if not 0 <= level <= self.level:
            raise ValueError("ancestor level out of range")
        return NodeId(level, self.index >> (self.level - level))

    def __str__(self) -> str:  # compact, used in reports
        return f"L{self.level}:{self.path or 'root'}"


class BinaryLattice:
    """Binary scenario tree on [0, T] with depth N and step h = T/N."""

    def __init__(self, horizon: float, depth: int, max_depth: int = DEFAULT_MAX_DEPTH):
        if horizon <= 0:
            raise ValueError("horizon must be positive")
        if not 1 <= depth <= max_depth:
            raise ValueError(f"depth must be in [1, {max_depth}], got {depth}")
        self.horizon = float(horizon)
        self.depth = int(depth)
        self.h = self.horizon / self.depth
        self.sqrt_h = float(np.sqrt(self.h))
        self.times = np.linspace(0.0, self.horizon, self.depth + 1)
        # increment sign taken at step j by a node of level k > j:
        # +1 for an up move, -1 for a down move (bit j of the path).
        self._signs: list[list[np.ndarray]] = []
        self._w_levels: list[np.ndarray] = [np.zeros(1)]
        for k in range(self.depth):
            w = self._w_levels[k]
            nxt = np.empty(2 ** (k + 1))
            nxt[0::2] = w + self.sqrt_h
            nxt[1::2] = w - self.sqrt_h
            self._w_levels.append(nxt)

    # -- basic structure ---------------------------------------------------

    def nodes_at(self, level: int) -> int:
        return 2**level

    def increment(self, node: NodeId, branch: str) -> float:
        """The Brownian increment +/- sqrt(h) taken from ``node`` along ``branch``."""
        if node.level >= self.depth:
            raise OutOfHorizonError(f"node {node} is at the horizon; no further increment")
        if branch == "up":
            return self.sqrt_h
        if branch == "down":
            return -self.sqrt_h
        raise ValueError(f"branch must be 'up' or 'down', got {branch!r}")

    def step_signs(self, level: int, step: int) -> np.ndarray:
        """Sign (+1 up / -1 down) of increment ``step`` along the paths of ``level`` nodes."""
        if not 0 <= step < level <= self.depth:
            raise ValueError("need 0 <= step < level <= depth")
        idx = np.arange(2**level)
        bits = (idx >> (level - 1 - step)) & 1
        return 1.0 - 2.0 * bits

    def brownian_level(self, level: int) -> np.ndarray:
        """W(t_level) at every node of ``level`` (shape ``(2**level,)``)."""
        return self._w_levels[level]

    def brownian(self) -> "AdaptedProcess":
        """The discrete Brownian path itself as a scalar adapted process."""
        return AdaptedProcess(self, 1, [w.reshape(-1, 1).copy() for w in self._w_levels])

    def lift(self, values: np.ndarray, from_level: int, to_level: int) -> np.ndarray:
        """Broadcast level-``from_level`` values to their descendants at ``to_level``."""
        if to_level < from_level:
            raise ValueError("to_level must be >= from_level")
        return np.repeat(values, 2 ** (to_level - from_level), axis=0)


@dataclass(frozen=True)
class LevelNodes:
    """Handle on one lattice level, passed to coefficient/generator callables.

    Lets adapted coefficients read the time and the Brownian values of the
    nodes they are evaluated on, without giving them a way to peek forward.
    """

    lattice: BinaryLattice
    level: int

    @property
    def time(self) -> float:
        return self.lattice.times[self.level]

    @property
    def w(self) -> np.ndarray:
        return self.lattice.brownian_level(self.level)


# -- conditional expectation / expectation ---------------------------------


def conditional_expectation(child_values: np.ndarray) -> np.ndarray:
    """One-step conditional expectation: exact average of the two children.

    ``child_values`` holds a level-(k+1) slice; the result is the level-k
    slice ``(X_up + X_down) / 2``.
    """
    v = np.asarray(child_values, dtype=float)
    if v.shape[0] % 2 != 0:
        raise IncompleteProcessError("child slice must pair up/down values")
    return 0.5 * (v[0::2] + v[1::2])


def condition_to(values: np.ndarray, from_level: int, to_level: int) -> np.ndarray:
    """Iterated conditional expectation from ``from_level`` down to ``to_level``."""
    if to_level > from_level:
        raise ValueError("to_level must be <= from_level")
    v = np.asarray(values, dtype=float)
    for _ in range(from_level - to_level):
        v = conditional_expectation(v)
    return v


def expectation(values) -> np.ndarray:
    """Expectation of a level slice (or of a whole process per level).

    Paths are equally likely, so this is the plain average over the slice.
    """
    if isinstance(values, AdaptedProcess):
        return np.stack([np.mean(lv, axis=0) for lv in values.levels])
    return np.mean(np.asarray(values, dtype=float), axis=0)


# -- adapted processes ------------------------------------------------------


class AdaptedProcess:
    """An R^n-valued process with one value per tree node, levels 0..N.

    ``levels[k]`` has shape ``(2**k, n)``.  Adaptedness holds by construction:
    the storage shape cannot express a dependence on the future.
    """

    def __init__(self, lattice: BinaryLattice, dim: int, levels: Sequence[np.ndarray]):
        if len(levels) != lattice.depth + 1:
            raise IncompleteProcessError(
                f"need {lattice.depth + 1} level slices, got {len(levels)}"
            )
        self.lattice = lattice
        self.dim = int(dim)
        self.levels: list[np.ndarray] = []
        for k, lv in enumerate(levels):
            arr = np.asarray(lv, dtype=float)
            if arr.ndim == 1:
                arr = arr.reshape(-1, 1)
            if arr.shape != (2**k, self.dim):
                raise IncompleteProcessError(
                    f"level {k} slice has shape {arr.shape}, expected {(2**k, self.dim)}"
                )
            self.levels.append(arr)

    @classmethod
    def constant(cls, lattice: BinaryLattice, value) -> "AdaptedProcess":
        v = np.atleast_1d(np.asarray(value, dtype=float))
        return cls(
            lattice, v.size, [np.tile(v, (2**k, 1)) for k in range(lattice.depth + 1)]
        )

    @classmethod
    def from_function(
        cls, lattice: BinaryLattice, dim: int, fn: Callable[[float, np.ndarray], np.ndarray]
    ) -> "AdaptedProcess":
        """Build from ``fn(t, w) -> (m, n)`` evaluated on every level (w is the path value)."""
        levels = []
        for k in range(lattice.depth + 1):
            vals = np.asarray(fn(lattice.times[k], lattice.brownian_level(k)), dtype=float)
            levels.append(vals.reshape(2**k, dim))
        return cls(lattice, dim, levels)

    def at(self, level: int) -> np.ndarray:
        return self.levels[level]

    def value(self, node: NodeId) -> np.ndarray:
        return self.levels[node.level][node.index]

    def min(self) -> float:
        return min(float(lv.min()) for lv in self.levels)

    def max_abs(self) -> float:
        return max(float(np.abs(lv).max()) for lv in self.levels)

    def __sub__(self, other: "AdaptedProcess") -> "AdaptedProcess":
        return AdaptedProcess(
            self.lattice,
            self.dim,
            [a - b for a, b in zip(self.levels, other.levels)],
        )

    def grid_sq_norm(self) -> float:
        """Discrete L^2 norm:  sum_k h * E|X(t_k)|^2  over the full grid."""
        h = self.lattice.h
        return float(sum(h * np.mean(np.sum(lv * lv, axis=1)) for lv in self.levels))


class TerminalField:
    """Time-indexed field of leaf-measurable vectors: psi(t_i) known at the horizon.

    ``values`` has shape ``(N + 1, 2**N, n)``; slice ``i`` is psi(t_i) as a
    function of the full path, with no adaptedness requirement.
    """

    def __init__(self, lattice: BinaryLattice, dim: int, values: np.ndarray):
        self.lattice = lattice
        self.dim = int(dim)
        arr = np.asarray(values, dtype=float)
        want = (lattice.depth + 1, 2**lattice.depth, self.dim)
        if arr.shape != want:
            raise IncompleteProcessError(f"terminal field has shape {arr.shape}, expected {want}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("terminal field has non-finite entries")
        self.values = arr

    @classmethod
    def from_time_function(
        cls, lattice: BinaryLattice, dim: int, fn: Callable[[float], np.ndarray]
    ) -> "TerminalField":
        """Deterministic free term: psi(t_i) constant across leaves."""
        leaves = 2**lattice.depth
        vals = np.empty((lattice.depth + 1, leaves, dim))
        for i, t in enumerate(lattice.times):
            vals[i, :, :] = np.atleast_1d(np.asarray(fn(t), dtype=float)).reshape(1, dim)
        return cls(lattice, dim, vals)

    def slice(self, i: int) -> np.ndarray:
        return self.values[i]


class TwoParamProcess:
    """Z(t_i, s_j) values: slice (i, j) lives on the level-j nodes.

    The triangle ``j >= i`` carries the integrand of the backward stochastic
    integral (diagonal included); the strict triangle ``j < i`` carries the
    martingale-representation part pinned down for M-solutions.
    """

    def __init__(self, lattice: BinaryLattice, dim: int):
        self.lattice = lattice
        self.dim = int(dim)
        self._slices: dict[tuple[int, int], np.ndarray] = {}

    def set(self, i: int, j: int, values: np.ndarray) -> None:
        arr = np.asarray(values, dtype=float).reshape(2**j, self.dim)
        self._slices[(i, j)] = arr

    def get(self, i: int, j: int) -> np.ndarray:
        try:
            return self._slices[(i, j)]
        except KeyError:
            raise IncompleteProcessError(f"Z({i},{j}) slice not populated") from None

    def has(self, i: int, j: int) -> bool:
        return (i, j) in self._slices

    def pairs(self) -> list[tuple[int, int]]:
        return sorted(self._slices)


# -- stochastic integral and martingale representation ----------------------


def ito_integral(integrand: AdaptedProcess) -> AdaptedProcess:
    """Pathwise stochastic integral: I(0) = 0, I(child) = I(node) + f(node) * dW.

    The integrand is read on levels 0..N-1; the result is adapted and a
    martingale by construction.
    """
    lat = integrand.lattice
    n = integrand.dim
    levels = [np.zeros((1, n))]
    for k in range(lat.depth):
        cur = levels[k]
        f = integrand.levels[k]
        nxt = np.empty((2 ** (k + 1), n))
        nxt[0::2] = cur + f * lat.sqrt_h
        nxt[1::2] = cur - f * lat.sqrt_h
        levels.append(nxt)
    return AdaptedProcess(lat, n, levels)


def martingale_representation(
    lattice: BinaryLattice, xi: np.ndarray, level: int
) -> tuple[np.ndarray, list[np.ndarray]]:
    """Exact predictable representation of a level-``level`` field.

    Returns ``(mean, z)`` with ``z[j]`` of shape ``(2**j, n)`` for
    ``j = 0..level-1`` such that, node by node,

        xi = mean + sum_j z[j] * dW_j                     (exactly).

    The construction is the backward filtration of conditional expectations:
    ``z[j] = (V_up - V_down) / (2 sqrt(h))`` where V is the conditional
    expectation of xi at level j+1.
    """
    v = np.asarray(xi, dtype=float)
    if v.ndim == 1:
        v = v.reshape(-1, 1)
    if v.shape[0] != 2**level:
        raise IncompleteProcessError(f"field has {v.shape[0]} nodes, expected {2 ** level}")
    z: list[np.ndarray] = [np.empty(0)] * level
    for j in range(level - 1, -1, -1):
        z[j] = (v[0::2] - v[1::2]) / (2.0 * lattice.sqrt_h)
        v = 0.5 * (v[0::2] + v[1::2])
    return v[0], z


def reconstruct_from_representation(
    lattice: BinaryLattice, mean: np.ndarray, z: list[np.ndarray], level: int
) -> np.ndarray:
    """Evaluate mean + sum_j z[j] dW_j at every level-``level`` node."""
    n = mean.shape[-1] if np.ndim(mean) else 1
    acc = np.tile(np.asarray(mean, dtype=float).reshape(1, -1), (1, 1))
    for j in range(level):
        nxt = np.empty((2 ** (j + 1), acc.shape[1]))
        nxt[0::2] = acc + z[j] * lattice.sqrt_h
        nxt[1::2] = acc - z[j] * lattice.sqrt_h
        acc = nxt
    return acc


# -- sign violations ---------------------------------------------------------


@dataclass(frozen=True)
class SignViolation:
    """Where a process goes negative: exact dyadic mass and one witness node.

    ``probability`` is the largest per-level mass of nodes with a negative
    component; ``fraction`` is the same number as an exact dyadic rational.
    ``per_level`` holds the exact mass per level.
    """

    probability: float
    fraction: Fraction
    witness: NodeId | None
    per_level: list[Fraction] = field(default_factory=list)


def sign_violation(x: AdaptedProcess, component: int | None = None) -> SignViolation:
    """Scan a process for strictly negative values, level by level."""
    per_level: list[Fraction] = []
    witness: NodeId | None = None
    best = Fraction(0)
    for k, lv in enumerate(x.levels):
        if component is None:
            neg = np.any(lv < 0.0, axis=1)
        else:
            neg = lv[:, component] < 0.0
        count = int(np.count_nonzero(neg))
        frac = Fraction(count, 2**k)
        per_level.append(frac)
        if count and witness is None:
            witness = NodeId(k, int(np.argmax(neg)))
        if frac > best:
            best = frac
    return SignViolation(float(best), best, witness, per_level)

"""Forward solvers: linear/nonlinear SDEs and linear Volterra equations.

Lattice solvers use the explicit one-step update

    X(child) = X(node) + drift * h + diffusion * dW,      dW = +/- sqrt(h),

which is deterministic given the lattice, so solutions are exact functions of
the tree.  The one-step matrix of the linear update, ``I + A0 h +/- A1
sqrt(h)``, is entrywise nonnegative whenever A0 is Metzler, A1 is diagonal and
the step is small enough; products of such matrices keep nonnegative vectors
nonnegative exactly, even in floating point.

Volterra equations are solved by the explicit recursion along each node's
ancestor path.  Deterministic scalar reductions (zero diffusion, deterministic
data) run on a plain time grid instead of the tree, which allows much finer
steps than the tree depth cap.

A Gaussian-increment Euler Monte Carlo is included as a continuous-increment
cross-check of lattice results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DivergenceError, NonConvergenceError, ResourceBudgetError
from .lattice import AdaptedProcess, BinaryLattice, LevelNodes

DEFAULT_MC_BUDGET = 2**31  # work units: paths * steps (SDE) or paths * steps^2 (Volterra)
_MC_CHUNK = 1 << 14


@dataclass
class FsdeSpec:
    """Forward SDE data:  dX = drift dt + diffusion dW,  X(t_start) = x0.

    Either supply ``drift``/``diffusion`` as callables ``f(t, x, nodes)`` acting
    on a stacked state array of shape ``(m, n)`` (``nodes`` is a
    :class:`~bsvielab.lattice.LevelNodes`-like handle on the lattice, ``None``
    in Monte Carlo), or supply the linear form

        dX = (A0(t) X + b(t)) dt + A1(t) X dW

    through matrix callables ``a0``, ``a1`` and vector callable ``b``.
    """

    dim: int
    x0: np.ndarray
    start_index: int = 0
    drift: Callable | None = None
    diffusion: Callable | None = None
    a0: Callable | None = None
    a1: Callable | None = None
    b: Callable | None = None
    lip_drift: float = 0.0
    lip_diffusion: float = 0.0

    def __post_init__(self):
        self.x0 = np.atleast_1d(np.asarray(self.x0, dtype=float))
        if self.x0.shape != (self.dim,):
            raise ValueError(f"x0 must have shape ({self.dim},)")
        linear = self.a0 is not None or self.a1 is not None or self.b is not None
        general = self.drift is not None or self.diffusion is not None
        if linear and general:
            raise ValueError("give either the linear form or drift/diffusion callables")
        if not linear and not general:
            raise ValueError("no dynamics supplied")
        self.is_linear = linear

    def drift_at(self, t: float, x: np.ndarray, nodes=None) -> np.ndarray:
        if self.is_linear:
            out = x @ self.a0(t).T if self.a0 is not None else np.zeros_like(x)
            if self.b is not None:
                out = out + np.asarray(self.b(t), dtype=float)
            return out
        if self.drift is None:
            return np.zeros_like(x)
        return np.asarray(self.drift(t, x, nodes), dtype=float)

    def diffusion_at(self, t: float, x: np.ndarray, nodes=None) -> np.ndarray:
        if self.is_linear:
            return x @ self.a1(t).T if self.a1 is not None else np.zeros_like(x)
        if self.diffusion is None:
            return np.zeros_like(x)
        return np.asarray(self.diffusion(t, x, nodes), dtype=float)


@dataclass
class FsvieSpec:
    """Linear forward Volterra data:

        X(t) = phi(t) + int_0^t A0(t,s) X(s) ds + int_0^t A1 X(s) dW(s).

    ``phi`` is a deterministic callable ``t -> (n,)`` or an
    :class:`~bsvielab.lattice.AdaptedProcess`.  The diffusion kernel is either
    the separated form ``a1(s)`` (the only form for which positivity theory
    applies) or the full form ``a1_full(t, s)`` admitted for counterexamples.
    ``rho`` optionally declares a continuity modulus for the drift kernel.
    """

    dim: int
    phi: Callable | AdaptedProcess
    a0: Callable | None = None
    a1: Callable | None = None
    a1_full: Callable | None = None
    rho: Callable | None = None

    def __post_init__(self):
        if self.a1 is not None and self.a1_full is not None:
            raise ValueError("give the diffusion kernel in one form only")

    def phi_level(self, lattice: BinaryLattice, level: int) -> np.ndarray:
        if isinstance(self.phi, AdaptedProcess):
            return self.phi.at(level)
        v = np.atleast_1d(np.asarray(self.phi(lattice.times[level]), dtype=float))
        return np.tile(v.reshape(1, self.dim), (2**level, 1))

    def a1_at(self, t: float, s: float) -> np.ndarray | None:
        if self.a1 is not None:
            return np.asarray(self.a1(s), dtype=float)
        if self.a1_full is not None:
            return np.asarray(self.a1_full(t, s), dtype=float)
        return None


# -- step bounds -------------------------------------------------------------


def positivity_step_bound(a0_bound: float, a1_bound: float) -> float:
    """Step bound under which each factor of the one-step update is nonnegative.

    ``h <= 1/a0_bound`` keeps ``I + h A0`` entrywise nonnegative for every
    Metzler A0 with entries bounded by ``a0_bound``; ``h <= 1/a1_bound**2``
    keeps ``I +/- sqrt(h) A1`` nonnegative for every diagonal A1 bounded by
    ``a1_bound``.  Zero bounds contribute no constraint (infinity).
    """
    if a0_bound < 0 or a1_bound < 0:
        raise ValueError("bounds must be nonnegative")
    terms = []
    if a0_bound > 0:
        terms.append(1.0 / a0_bound)
    if a1_bound > 0:
        terms.append(1.0 / a1_bound**2)
    return min(terms) if terms else math.inf


def worst_case_step_bound(a0_bound: float, a1_bound: float) -> float:
    """Largest h with ``1 - h*a0_bound - sqrt(h)*a1_bound >= 0``.

    This is the exact condition for the summed one-step matrix
    ``I + A0 h + A1 dW`` itself to stay entrywise nonnegative when the drift
    and diffusion bounds bite simultaneously; it is never larger than
    :func:`positivity_step_bound`.  Randomized positivity trials draw their
    step below this bound.
    """
    if a0_bound < 0 or a1_bound < 0:
        raise ValueError("bounds must be nonnegative")
    if a0_bound == 0 and a1_bound == 0:
        return math.inf
    if a0_bound == 0:
        return 1.0 / a1_bound**2
    u = (-a1_bound + math.sqrt(a1_bound**2 + 4.0 * a0_bound)) / (2.0 * a0_bound)
    return u * u


# -- SDE solvers -------------------------------------------------------------


def solve_fsde(spec: FsdeSpec, lattice: BinaryLattice) -> AdaptedProcess:
    """Explicit Euler on the lattice from ``spec.start_index`` to the horizon.

    Levels before the start carry the initial state unchanged.
    """
    n = spec.dim
    s = spec.start_index
    if not 0 <= s < lattice.depth:
        raise ValueError("start index must lie before the horizon")
    h, sq = lattice.h, lattice.sqrt_h
    levels = [np.tile(spec.x0, (2**k, 1)) for k in range(s + 1)]
    for k in range(s, lattice.depth):
        x = levels[k]
        t = lattice.times[k]
        nodes = LevelNodes(lattice, k)
        mu = spec.drift_at(t, x, nodes)
        sg = spec.diffusion_at(t, x, nodes)
        nxt = np.empty((2 ** (k + 1), n))
        nxt[0::2] = x + mu * h + sg * sq
        nxt[1::2] = x + mu * h - sg * sq
        if not np.all(np.isfinite(nxt)):
            bad = int(np.argmax(~np.isfinite(nxt).all(axis=1)))
            raise DivergenceError(f"non-finite state at level {k + 1}, node {bad}")
        levels.append(nxt)
    return AdaptedProcess(lattice, n, levels)


class FundamentalMatrix:
    """Matrix-valued adapted solution Phi(t, t_s) with Phi(t_s, t_s) = I.

    ``at(level)`` returns an array of shape ``(2**level, n, n)``; each column
    is evolved by the same explicit one-step update as the vector solver.
    """

    def __init__(self, lattice: BinaryLattice, start: int, levels: list[np.ndarray]):
        self.lattice = lattice
        self.start = start
        self._levels = levels

    def at(self, level: int) -> np.ndarray:
        if level < self.start:
            raise ValueError("fundamental matrix starts at its anchor time")
        return self._levels[level - self.start]


def fundamental_matrix(
    a0: Callable | None, a1: Callable | None, start_index: int, lattice: BinaryLattice, dim: int
) -> FundamentalMatrix:
    """Evolve the identity through the homogeneous linear one-step updates."""
    if not 0 <= start_index < lattice.depth:
        raise ValueError("start index must lie before the horizon")
    h, sq = lattice.h, lattice.sqrt_h
    eye = np.eye(dim)
    levels = [np.tile(eye, (2**start_index, 1, 1))]
    for k in range(start_index, lattice.depth):
        t = lattice.times[k]
        m0 = np.asarray(a0(t), dtype=float) if a0 is not None else np.zeros((dim, dim))
        m1 = np.asarray(a1(t), dtype=float) if a1 is not None else np.zeros((dim, dim))
        up = eye + h * m0 + sq * m1
        dn = eye + h * m0 - sq * m1
        cur = levels[-1]
        nxt = np.empty((2 * cur.shape[0], dim, dim))
        nxt[0::2] = up @ cur
        nxt[1::2] = dn @ cur
        if not np.all(np.isfinite(nxt)):
            raise DivergenceError(f"non-finite fundamental matrix at level {k + 1}")
        levels.append(nxt)
    return FundamentalMatrix(lattice, start_index, levels)


def solve_ode_euler(
    x0, f: Callable[[float, np.ndarray], np.ndarray], horizon: float, steps: int
) -> tuple[np.ndarray, np.ndarray]:
    """Plain forward Euler for the deterministic reduction (zero diffusion)."""
    x = np.atleast_1d(np.asarray(x0, dtype=float))
    times = np.linspace(0.0, horizon, steps + 1)
    h = horizon / steps
    out = np.empty((steps + 1, x.size))
    out[0] = x
    for k in range(steps):
        x = x + h * np.asarray(f(times[k], x), dtype=float)
        if not np.all(np.isfinite(x)):
            raise DivergenceError(f"non-finite state at step {k + 1}")
        out[k + 1] = x
    return times, out


# -- linear Volterra solvers -------------------------------------------------


def _solve_fsvie_on_lattice(
    lattice: BinaryLattice,
    dim: int,
    phi_level: Callable[[int], np.ndarray],
    a0_pair: Callable[[int, int], np.ndarray | None],
    a1_pair: Callable[[int, int], np.ndarray | None],
) -> AdaptedProcess:
    """Explicit Volterra recursion; coefficient lookups are by grid indices."""
    h, sq = lattice.h, lattice.sqrt_h
    levels = [phi_level(0)]
    for k in range(1, lattice.depth + 1):
        acc = phi_level(k).copy()
        for j in range(k):
            xj = levels[j]
            m0 = a0_pair(k, j)
            if m0 is not None:
                acc += h * lattice.lift(xj @ m0.T, j, k)
            m1 = a1_pair(k, j)
            if m1 is not None:
                incr = sq * lattice.step_signs(k, j)
                acc += lattice.lift(xj @ m1.T, j, k) * incr[:, None]
        if not np.all(np.isfinite(acc)):
            bad = int(np.argmax(~np.isfinite(acc).all(axis=1)))
            raise DivergenceError(f"non-finite state at level {k}, node {bad}")
        levels.append(acc)
    return AdaptedProcess(lattice, dim, levels)


def solve_linear_fsvie(spec: FsvieSpec, lattice: BinaryLattice) -> AdaptedProcess:
    """Exact lattice recursion for the linear Volterra equation."""
    times = lattice.times

    def a0_pair(k, j):
        if spec.a0 is None:
            return None
        return np.asarray(spec.a0(times[k], times[j]), dtype=float).reshape(spec.dim, spec.dim)

    def a1_pair(k, j):
        m = spec.a1_at(times[k], times[j])
        return None if m is None else m.reshape(spec.dim, spec.dim)

    return _solve_fsvie_on_lattice(
        lattice, spec.dim, lambda k: spec.phi_level(lattice, k), a0_pair, a1_pair
    )


def partition_approximation(
    spec: FsvieSpec, partition: Sequence[int], lattice: BinaryLattice
) -> AdaptedProcess:
    """Solve with the drift kernel and free term frozen along a partition.

    ``partition`` is an increasing list of grid indices containing 0 and N;
    at grid time ``t_i`` the kernel/free-term are read at the largest
    partition time not exceeding ``t_i``.  With the full grid as partition the
    result coincides with :func:`solve_linear_fsvie` operation for operation.
    """
    part = list(partition)
    if (
        not part
        or part[0] != 0
        or part[-1] != lattice.depth
        or any(b <= a for a, b in zip(part, part[1:]))
        or any(not 0 <= p <= lattice.depth for p in part)
    ):
        raise ValueError("partition must be increasing grid indices containing 0 and N")
    anchors = np.asarray(part)
    frozen = np.empty(lattice.depth + 1, dtype=int)
    for i in range(lattice.depth + 1):
        frozen[i] = anchors[np.searchsorted(anchors, i, side="right") - 1]
    times = lattice.times

    def a0_pair(k, j):
        if spec.a0 is None:
            return None
        tk = times[frozen[k]]
        return np.asarray(spec.a0(tk, times[j]), dtype=float).reshape(spec.dim, spec.dim)

    def a1_pair(k, j):
        m = spec.a1_at(times[frozen[k]], times[j])
        return None if m is None else m.reshape(spec.dim, spec.dim)

    def phi_level(k):
        return _phi_frozen(spec, lattice, k, int(frozen[k]))

    return _solve_fsvie_on_lattice(lattice, spec.dim, phi_level, a0_pair, a1_pair)


def _phi_frozen(spec: FsvieSpec, lattice: BinaryLattice, level: int, anchor: int) -> np.ndarray:
    if isinstance(spec.phi, AdaptedProcess):
        # freeze in time, keep measurability: the anchor-time slice lifted
        return lattice.lift(spec.phi.at(anchor), anchor, level)
    v = np.atleast_1d(np.asarray(spec.phi(lattice.times[anchor]), dtype=float))
    return np.tile(v.reshape(1, spec.dim), (2**level, 1))


def picard_fsvie(
    spec: FsvieSpec,
    lattice: BinaryLattice,
    max_iter: int = 50,
    tol: float = 1e-12,
) -> tuple[AdaptedProcess, list[float]]:
    """Successive substitution X^k = phi + K X^{k-1} for the pure-drift equation.

    Requires a zero diffusion kernel.  When the drift kernel is entrywise
    nonnegative and phi >= 0, every iterate (and therefore the limit) is
    built from sums and products of nonnegative numbers, so X >= phi >= 0
    holds exactly.  Returns the limit together with the successive difference
    norms in the discrete L^2 grid norm.
    """
    if spec.a1 is not None or spec.a1_full is not None:
        raise ValueError("successive substitution requires a zero diffusion kernel")
    times = lattice.times
    h = lattice.h
    kern: dict[tuple[int, int], np.ndarray] = {}
    if spec.a0 is not None:
        for k in range(1, lattice.depth + 1):
            for j in range(k):
                kern[(k, j)] = np.asarray(spec.a0(times[k], times[j]), dtype=float).reshape(
                    spec.dim, spec.dim
                )
    phi_levels = [spec.phi_level(lattice, k) for k in range(lattice.depth + 1)]
    cur = [p.copy() for p in phi_levels]
    norms: list[float] = []
    for _ in range(max_iter):
        nxt = [phi_levels[0].copy()]
        for k in range(1, lattice.depth + 1):
            acc = phi_levels[k].copy()
            for j in range(k):
                if (k, j) in kern:
                    acc += h * lattice.lift(cur[j] @ kern[(k, j)].T, j, k)
            nxt.append(acc)
        diff = math.sqrt(
            sum(h * float(np.mean(np.sum((a - b) ** 2, axis=1))) for a, b in zip(nxt, cur))
        )
        norms.append(diff)
        cur = nxt
        if diff < tol:
            return AdaptedProcess(lattice, spec.dim, cur), norms
    ratio = norms[-1] / norms[-2] if len(norms) > 1 and norms[-2] > 0 else float("nan")
    raise NonConvergenceError(
        f"successive substitution not below {tol} after {max_iter} sweeps (last ratio {ratio:.3g})"
    )


# -- deterministic scalar grid solvers ---------------------------------------


def solve_linear_fsvie_deterministic(
    phi: Callable[[float], float],
    a0: Callable[[float, np.ndarray], np.ndarray],
    horizon: float,
    steps: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Scalar deterministic Volterra recursion on a fine time grid.

    ``a0(t, s_array)`` must broadcast over the past-time array.  This is the
    zero-diffusion reduction of the lattice recursion with one node per level,
    so the depth cap does not apply.
    """
    times = np.linspace(0.0, horizon, steps + 1)
    h = horizon / steps
    x = np.empty(steps + 1)
    x[0] = phi(times[0])
    for i in range(1, steps + 1):
        row = np.asarray(a0(times[i], times[:i]), dtype=float)
        x[i] = phi(times[i]) + h * float(row @ x[:i])
        if not np.isfinite(x[i]):
            raise DivergenceError(f"non-finite state at step {i}")
    return times, x


def picard_fsvie_deterministic(
    phi: Callable[[float], float],
    a0: Callable[[float, np.ndarray], np.ndarray],
    horizon: float,
    steps: int,
    max_iter: int = 80,
    tol: float = 1e-12,
) -> tuple[np.ndarray, np.ndarray, list[float]]:
    """Successive substitution on the deterministic grid; returns (t, x, norms)."""
    times = np.linspace(0.0, horizon, steps + 1)
    h = horizon / steps
    phi_vals = np.array([phi(t) for t in times])
    rows = [np.asarray(a0(times[i], times[:i]), dtype=float) for i in range(steps + 1)]
    cur = phi_vals.copy()
    norms: list[float] = []
    for _ in range(max_iter):
        nxt = np.empty_like(cur)
        for i in range(steps + 1):
            nxt[i] = phi_vals[i] + h * float(rows[i] @ cur[:i])
        diff = math.sqrt(h * float(np.sum((nxt - cur) ** 2)))
        norms.append(diff)
        cur = nxt
        if diff < tol:
            return times, cur, norms
    raise NonConvergenceError(f"not below {tol} after {max_iter} sweeps")


# -- Monte Carlo -------------------------------------------------------------


@dataclass
class McResult:
    """Per-time mean path and strict sign-violation frequency with its SE."""

    times: np.ndarray
    mean: np.ndarray  # (steps + 1, n)
    violation_freq: np.ndarray  # (steps + 1,)
    violation_se: np.ndarray  # binomial standard error per time
    paths: int


def euler_monte_carlo(
    spec: FsdeSpec | FsvieSpec,
    horizon: float,
    steps: int,
    paths: int,
    seed: int,
    budget: int = DEFAULT_MC_BUDGET,
) -> McResult:
    """Gaussian-increment Euler simulation, reproducible for a fixed seed.

    Paths are processed in fixed-size chunks; chunk ``c`` draws from a
    counter-based generator keyed by ``(seed, c)``, so results do not depend
    on how chunks are scheduled.  Volterra specs cost ``paths * steps**2``
    work units, SDE specs ``paths * steps``; exceeding ``budget`` raises.
    """
    if steps < 1 or paths < 1:
        raise ValueError("steps and paths must be positive")
    is_volterra = isinstance(spec, FsvieSpec)
    work = paths * steps * (steps if is_volterra else 1)
    if work > budget:
        raise ResourceBudgetError(f"requested work {work} exceeds budget {budget}")
    n = spec.dim
    sum_x = np.zeros((steps + 1, n))
    neg_counts = np.zeros(steps + 1, dtype=np.int64)
    done = 0
    chunk_idx = 0
    while done < paths:
        m = min(_MC_CHUNK, paths - done)
        rng = np.random.Generator(
            np.random.Philox(key=np.array([seed & 0xFFFFFFFFFFFFFFFF, chunk_idx], dtype=np.uint64))
        )
        if is_volterra:
            xs = _mc_volterra_chunk(spec, horizon, steps, m, rng)
        else:
            xs = _mc_sde_chunk(spec, horizon, steps, m, rng)
        sum_x += xs.sum(axis=1)
        neg_counts += (xs < 0.0).any(axis=2).sum(axis=1)
        done += m
        chunk_idx += 1
    freq = neg_counts / paths
    se = np.sqrt(np.clip(freq * (1.0 - freq), 0.0, None) / paths)
    times = np.linspace(0.0, horizon, steps + 1)
    return McResult(times, sum_x / paths, freq, se, paths)


def _mc_sde_chunk(spec: FsdeSpec, horizon: float, steps: int, m: int, rng) -> np.ndarray:
    h = horizon / steps
    sq = math.sqrt(h)
    times = np.linspace(0.0, horizon, steps + 1)
    x = np.tile(spec.x0, (m, 1))
    out = np.empty((steps + 1, m, spec.dim))
    out[0] = x
    for k in range(steps):
        dw = sq * rng.standard_normal(m)
        x = x + h * spec.drift_at(times[k], x) + spec.diffusion_at(times[k], x) * dw[:, None]
        out[k + 1] = x
    return out


def _mc_volterra_chunk(spec: FsvieSpec, horizon: float, steps: int, m: int, rng) -> np.ndarray:
    if isinstance(spec.phi, AdaptedProcess):
        raise ValueError("Monte Carlo needs a deterministic free term")
    h = horizon / steps
    sq = math.sqrt(h)
    times = np.linspace(0.0, horizon, steps + 1)
    n = spec.dim
    dw = sq * rng.standard_normal((steps, m))
    out = np.empty((steps + 1, m, n))
    out[0] = np.tile(np.atleast_1d(spec.phi(0.0)), (m, 1))
    for i in range(1, steps + 1):
        acc = np.tile(np.atleast_1d(spec.phi(times[i])).astype(float), (m, 1))
        if n == 1:
            if spec.a0 is not None:
                row = np.array(
                    [np.asarray(spec.a0(times[i], times[j])).reshape(()) for j in range(i)]
                )
                acc[:, 0] += h * (row @ out[:i, :, 0])
            row1 = np.array(
                [
                    0.0 if (m1 := spec.a1_at(times[i], times[j])) is None
                    else np.asarray(m1).reshape(())
                    for j in range(i)
                ]
            )
            if np.any(row1):
                acc[:, 0] += np.einsum("j,jm->m", row1, out[:i, :, 0] * dw[:i])
        else:
            for j in range(i):
                if spec.a0 is not None:
                    m0 = np.asarray(spec.a0(times[i], times[j]), dtype=float)
                    acc += h * out[j] @ m0.T
                m1 = spec.a1_at(times[i], times[j])
                if m1 is not None:
                    acc += (out[j] @ np.asarray(m1, dtype=float).T) * dw[j][:, None]
        out[i] = acc
    return out

"""Backward solvers on the lattice: BSDEs, backward Volterra equations,
adapted M-solutions, duality checks and the weak comparison functional.

The one-step scheme is implicit in y and explicit in z:

    Z(node) = (Y_up - Y_down) / (2 sqrt(h)),
    Y(node) solves  y = E[Y_next | node] + h * g(t, y, Z(node)).

For linear drifts the inner solve is a Jacobi splitting that maps nonnegative
data to nonnegative iterates exactly, which is what turns the positivity and
comparison statements into exact inequalities instead of tolerance checks.

Backward Volterra equations carry a time-indexed free term psi(t_i) (known at
the horizon, not necessarily adapted) and a two-time-parameter integrand
Z(t_i, s_j).  The solver sweeps a backward recursion per grid time t_i; drift
evaluations at inner times s_j > t_i read the already-solved diagonal values
Y(t_j), so one pass over i = N..0 solves the equation exactly on the lattice.
For M-solutions the part of Z below the diagonal is pinned down by the exact
martingale representation of Y, and the coupled system is solved by
alternating representation and re-solve sweeps; the dependency is strictly
triangular in time, so the alternation reaches a bitwise fixed point in at
most N + 1 sweeps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import NonConvergenceError
from .lattice import (
    AdaptedProcess,
    BinaryLattice,
    LevelNodes,
    TerminalField,
    TwoParamProcess,
    conditional_expectation,
    martingale_representation,
)

FP_TOL = 1e-13
FP_MAX_ITER = 50


# -- implicit one-step helpers ------------------------------------------------


def _jacobi_step(mat: np.ndarray, rhs: np.ndarray, h: float, sign: float,
                 tol: float = FP_TOL, max_iter: int = FP_MAX_ITER) -> np.ndarray:
    """Solve (I - sign*h*mat) y = rhs for every row of ``rhs`` by Jacobi iteration.

    Starting from y = 0, every iterate is a sum of products of the inputs with
    the nonnegative weights 1/d and sign*h*offdiag(mat); when those weights and
    ``rhs`` are nonnegative the result is exactly nonnegative in floating point.
    """
    d = 1.0 - sign * h * np.diag(mat)
    if np.any(d <= 0.0):
        raise NonConvergenceError("implicit step requires h*|diag coefficient| < 1")
    p = sign * h * np.asarray(mat, dtype=float).copy()
    np.fill_diagonal(p, 0.0)
    y = np.zeros_like(rhs)
    for _ in range(max_iter):
        y_new = (rhs + y @ p.T) / d
        if float(np.max(np.abs(y_new - y))) < tol:
            return y_new
        y = y_new
    raise NonConvergenceError(
        f"Jacobi inner solve not below {tol} in {max_iter} iterations; reduce the step"
    )


def _blend(up: np.ndarray, down: np.ndarray, b: np.ndarray | None, sqrt_h: float,
           z_sign: float) -> np.ndarray:
    """E[next] + z_sign * h * B Z, written as the exact two-child blend.

    With Z = (up - down) / (2 sqrt(h)) this equals
    0.5*(I + z_sign*sqrt(h) B) up + 0.5*(I - z_sign*sqrt(h) B) down, a convex
    combination with nonnegative diagonal weights whenever B is diagonal and
    sqrt(h)*|B| <= 1.
    """
    if b is None:
        return 0.5 * (up + down)
    m = z_sign * sqrt_h * np.asarray(b, dtype=float)
    wu = 0.5 * (np.eye(b.shape[0]) + m)
    wd = 0.5 * (np.eye(b.shape[0]) - m)
    return up @ wu.T + down @ wd.T


# -- BSDEs ---------------------------------------------------------------------


@dataclass
class BsdeSpec:
    """Backward SDE data.

    Linear form (the positivity/duality workhorse):

        dY = (A(t) Y + B(t) Z - f(t)) dt + Z dW,     Y(T) = xi,

    through matrix callables ``a``, ``b`` and vector callable ``forcing``.
    General form: standard-shape generator ``g(t, y, z, nodes) -> (m, n)``
    for  Y(t) = xi + int_t^T g ds - int_t^T Z dW,  vectorized over the nodes
    of one level.
    """

    dim: int
    terminal: np.ndarray
    generator: Callable | None = None
    a: Callable | None = None
    b: Callable | None = None
    forcing: Callable | None = None
    lip_y: float = 0.0
    lip_z: float = 0.0

    def __post_init__(self):
        linear = self.a is not None or self.b is not None or self.forcing is not None
        if linear and self.generator is not None:
            raise ValueError("give either the linear form or a generator, not both")
        if not linear and self.generator is None:
            raise ValueError("no generator supplied")
        self.is_linear = linear

    def terminal_field(self, lattice: BinaryLattice) -> np.ndarray:
        xi = np.asarray(self.terminal, dtype=float)
        if xi.ndim == 0:
            xi = np.full((1,), float(xi))
        if xi.ndim == 1 and xi.shape == (self.dim,):
            return np.tile(xi, (2**lattice.depth, 1))
        return xi.reshape(2**lattice.depth, self.dim)


@dataclass
class BsdeSolution:
    """Backward solution on levels ``from_index..N`` (``None`` below the start)."""

    from_index: int
    y: list[np.ndarray | None]
    z: list[np.ndarray | None]


def solve_bsde(
    spec: BsdeSpec,
    lattice: BinaryLattice,
    from_index: int = 0,
    fp_tol: float = FP_TOL,
    fp_max_iter: int = FP_MAX_ITER,
) -> BsdeSolution:
    """Backward induction with the implicit-in-y, explicit-in-z one-step scheme."""
    n = spec.dim
    N = lattice.depth
    h, sq = lattice.h, lattice.sqrt_h
    y: list[np.ndarray | None] = [None] * (N + 1)
    z: list[np.ndarray | None] = [None] * N
    y[N] = spec.terminal_field(lattice)
    for k in range(N - 1, from_index - 1, -1):
        nxt = y[k + 1]
        up, down = nxt[0::2], nxt[1::2]
        zk = (up - down) / (2.0 * sq)
        z[k] = zk
        t = lattice.times[k]
        if spec.is_linear:
            a_k = np.asarray(spec.a(t), dtype=float) if spec.a is not None else np.zeros((n, n))
            b_k = np.asarray(spec.b(t), dtype=float) if spec.b is not None else None
            rhs = _blend(up, down, b_k, sq, z_sign=-1.0)
            if spec.forcing is not None:
                rhs = rhs + h * np.asarray(spec.forcing(t), dtype=float)
            # (I + h A) y = E[next] - h B Z + h f
            y[k] = _jacobi_step(a_k, rhs, h, sign=-1.0, tol=fp_tol, max_iter=fp_max_iter)
        else:
            e = 0.5 * (up + down)
            nodes = LevelNodes(lattice, k)
            cur = e
            for it in range(fp_max_iter):
                new = e + h * np.asarray(spec.generator(t, cur, zk, nodes), dtype=float)
                if float(np.max(np.abs(new - cur))) < fp_tol:
                    cur = new
                    break
                cur = new
            else:
                raise NonConvergenceError(
                    f"implicit y-step not below {fp_tol} in {fp_max_iter} iterations; "
                    f"h*L_y = {h * spec.lip_y:.3g} -- reduce the step"
                )
            y[k] = cur
    return BsdeSolution(from_index, y, z)


def bsde_duality_check(
    spec: BsdeSpec,
    x: np.ndarray,
    s_index: int,
    lattice: BinaryLattice,
    fp_tol: float = FP_TOL,
) -> float:
    """Pairing error of the backward solution against its adjoint forward flow.

    The adjoint follows  dX = -A^T X dt - B^T X dW  with the semi-implicit
    one-step  X_next = (I -/+ sqrt(h) B^T)(I + h A^T)^{-1} X  and the forcing
    accumulated against (I + h A^T)^{-1} X, the unique choice for which the
    one-step product rule telescopes without a remainder.  Returns the maximum
    over level-``s_index`` nodes of

        | <x, Y(t_s)>  -  E_s[ <X(T), xi> + sum_k h <X_hat(t_k), f(t_k)> ] |.
    """
    if not spec.is_linear:
        raise ValueError("duality check needs the linear form")
    n = spec.dim
    N = lattice.depth
    h, sq = lattice.h, lattice.sqrt_h
    sol = solve_bsde(spec, lattice, from_index=s_index, fp_tol=fp_tol)
    xv = np.atleast_1d(np.asarray(x, dtype=float))
    X = np.tile(xv, (2**s_index, 1))
    pair = np.zeros((2**s_index, 1))
    eye = np.eye(n)
    for k in range(s_index, N):
        t = lattice.times[k]
        a_k = np.asarray(spec.a(t), dtype=float) if spec.a is not None else np.zeros((n, n))
        b_k = np.asarray(spec.b(t), dtype=float) if spec.b is not None else np.zeros((n, n))
        x_hat = np.linalg.solve(eye + h * a_k.T, X.T).T
        if spec.forcing is not None:
            f_k = np.asarray(spec.forcing(t), dtype=float)
            pair = pair + h * (x_hat @ f_k)[:, None]
        up = x_hat - sq * (x_hat @ b_k)  # (-B^T X) dW with dW = +sqrt(h)
        down = x_hat + sq * (x_hat @ b_k)
        X_next = np.empty((2 ** (k + 1), n))
        X_next[0::2], X_next[1::2] = up, down
        p_next = np.empty((2 ** (k + 1), 1))
        p_next[0::2] = p_next[1::2] = pair
        X, pair = X_next, p_next
    xi = spec.terminal_field(lattice)
    leaf_val = np.sum(X * xi, axis=1, keepdims=True) + pair
    cond = leaf_val
    for _ in range(N - s_index):
        cond = conditional_expectation(cond)
    lhs = sol.y[s_index] @ xv
    return float(np.max(np.abs(lhs - cond[:, 0])))


# -- backward Volterra equations ----------------------------------------------


@dataclass
class BsvieSpec:
    """Backward Volterra data:

        Y(t) = psi(t) + int_t^T g(t, s, Y(s), Z(t,s), Z(s,t)) ds
                      - int_t^T Z(t,s) dW(s).

    Supply either a generic ``generator(t, s, y, z, zeta, nodes)`` (vectorized
    over the level-``s`` nodes; ``z``/``zeta`` are ``None`` when the declared
    flags say the generator ignores them) or the structured pieces

        drift = A(t,s) y  +  h_fn(t,s,y)  +  B(s) z  +  C(t) zeta,

    any subset of which may be present.  ``uses_z``/``uses_zeta`` declare the
    actual dependencies and must be consistent with the structured pieces.
    The discrete convention for the sub-diagonal argument is zeta(t_i, t_i) = 0
    (the diagonal carries no mass in the continuum).
    """

    dim: int
    psi: TerminalField
    generator: Callable | None = None
    a_kernel: Callable | None = None
    h_fn: Callable | None = None
    b_coef: Callable | None = None
    c_coef: Callable | None = None
    uses_z: bool = True
    uses_zeta: bool = False
    lip_y: float = 0.0
    lip_z: float = 0.0
    lip_zeta: float = 0.0

    def __post_init__(self):
        structured = any(
            f is not None for f in (self.a_kernel, self.h_fn, self.b_coef, self.c_coef)
        )
        if structured and self.generator is not None:
            raise ValueError("give either a generator or structured pieces, not both")
        if structured:
            if self.uses_z != (self.b_coef is not None):
                raise ValueError("uses_z inconsistent with the structured pieces")
            if self.uses_zeta != (self.c_coef is not None):
                raise ValueError("uses_zeta inconsistent with the structured pieces")

    @property
    def is_linear_y(self) -> bool:
        return self.generator is None and self.h_fn is None

    def drift(self, t: float, s: float, y: np.ndarray, z: np.ndarray | None,
              zeta: np.ndarray | None, nodes: LevelNodes) -> np.ndarray:
        if self.generator is not None:
            return np.asarray(self.generator(t, s, y, z, zeta, nodes), dtype=float)
        out = np.zeros_like(y)
        if self.a_kernel is not None:
            out = out + y @ np.asarray(self.a_kernel(t, s), dtype=float).T
        if self.h_fn is not None:
            out = out + np.asarray(self.h_fn(t, s, y, nodes), dtype=float)
        if self.b_coef is not None and z is not None:
            out = out + z @ np.asarray(self.b_coef(s), dtype=float).T
        if self.c_coef is not None and zeta is not None:
            out = out + zeta @ np.asarray(self.c_coef(t), dtype=float).T
        return out


@dataclass
class BsvieSolution:
    """Adapted solution: Y per node, Z(t_i, s_j) slices on ``j >= i``.

    M-solutions additionally carry the ``j < i`` slices produced by the exact
    martingale representation of Y, and ``msolution_residual`` is the largest
    pathwise error of  Y(t_i) = E Y(t_i) + sum_{j<i} Z(t_i,s_j) dW_j.
    """

    y: AdaptedProcess
    z: TwoParamProcess
    msolution_residual: float | None = None


def _zeta_slice(z: TwoParamProcess | None, lattice: BinaryLattice, i: int, j: int,
                dim: int) -> np.ndarray:
    """Z(s,t) argument at (t,s) = (t_i, t_j): the (j, i) slice lifted to level j."""
    if j == i or z is None or not z.has(j, i):
        return np.zeros((2**j, dim))
    return lattice.lift(z.get(j, i), i, j)


def solve_bsvie_family(
    spec: BsvieSpec,
    lattice: BinaryLattice,
    fp_tol: float = FP_TOL,
    fp_max_iter: int = FP_MAX_ITER,
    zeta: TwoParamProcess | None = None,
    frozen_y: Sequence[np.ndarray] | None = None,
) -> BsvieSolution:
    """One backward sweep per grid time; exact on the lattice.

    For each t_i the sweep runs the BSDE recursion from the horizon down to
    level i with terminal psi(t_i); drift evaluations at inner times t_j > t_i
    read the already-solved values Y(t_j), and the diagonal step is implicit
    in y.  ``frozen_y`` replaces the y-argument everywhere (used by the
    monotone successive scheme); ``zeta`` supplies the sub-diagonal Z slices
    for M-solution sweeps.
    """
    if spec.uses_zeta and zeta is None:
        raise ValueError("generator depends on Z(s,t): solve as an M-solution")
    n = spec.dim
    N = lattice.depth
    h, sq = lattice.h, lattice.sqrt_h
    y_levels: list[np.ndarray | None] = [None] * (N + 1)
    z = TwoParamProcess(lattice, n)
    for i in range(N, -1, -1):
        lam = spec.psi.slice(i).copy()
        t_i = lattice.times[i]
        for j in range(N - 1, i - 1, -1):
            up, down = lam[0::2], lam[1::2]
            e = 0.5 * (up + down)
            mu = (up - down) / (2.0 * sq)
            z.set(i, j, mu)
            t_j = lattice.times[j]
            nodes = LevelNodes(lattice, j)
            zeta_ij = _zeta_slice(zeta, lattice, i, j, n) if spec.uses_zeta else None
            z_arg = mu if spec.uses_z else None
            if frozen_y is not None:
                lam = e + h * spec.drift(t_i, t_j, frozen_y[j], z_arg, zeta_ij, nodes)
            elif j > i:
                lam = e + h * spec.drift(t_i, t_j, y_levels[j], z_arg, zeta_ij, nodes)
            elif spec.is_linear_y:
                a_jj = (
                    np.asarray(spec.a_kernel(t_i, t_j), dtype=float)
                    if spec.a_kernel is not None
                    else np.zeros((n, n))
                )
                rhs = e.copy()
                if spec.b_coef is not None:
                    rhs = _blend(up, down, np.asarray(spec.b_coef(t_j), dtype=float), sq, 1.0)
                if spec.c_coef is not None:
                    rhs = rhs + h * (zeta_ij @ np.asarray(spec.c_coef(t_i), dtype=float).T)
                # (I - h A(t_i,t_i)) y = E[next] + h B Z + h C zeta
                lam = _jacobi_step(a_jj, rhs, h, sign=1.0, tol=fp_tol, max_iter=fp_max_iter)
            else:
                cur = e
                for _ in range(fp_max_iter):
                    new = e + h * spec.drift(t_i, t_j, cur, z_arg, zeta_ij, nodes)
                    if float(np.max(np.abs(new - cur))) < fp_tol:
                        cur = new
                        break
                    cur = new
                else:
                    raise NonConvergenceError(
                        f"diagonal y-step not below {fp_tol} in {fp_max_iter} iterations; "
                        f"h*L_y = {h * spec.lip_y:.3g} -- reduce the step"
                    )
                lam = cur
        y_levels[i] = lam
    y = AdaptedProcess(lattice, n, y_levels)
    return BsvieSolution(y, z, None)


def solve_bsvie_msolution(
    spec: BsvieSpec,
    lattice: BinaryLattice,
    max_iter: int = 60,
    tol: float = 1e-13,
    fp_tol: float = FP_TOL,
    fp_max_iter: int = FP_MAX_ITER,
) -> BsvieSolution:
    """Adapted M-solution by alternating representation and re-solve sweeps.

    (a) the sub-diagonal slices Z(t_i, s_j), j < i, are read off the exact
    martingale representation of the current Y(t_i); (b) the family of
    backward recursions is re-solved feeding Z(s,t) from (a).  The coupling is
    strictly lower-triangular in time, so the alternation becomes stationary
    after at most N + 1 sweeps; it stops early once the sweep no longer
    changes Y by more than ``tol``.
    """
    if spec.uses_z:
        raise ValueError("M-solution form must not depend on Z(t,s) in the drift")
    N = lattice.depth
    sol = solve_bsvie_family(
        spec, lattice, fp_tol, fp_max_iter,
        zeta=TwoParamProcess(lattice, spec.dim) if spec.uses_zeta else None,
    )
    if not spec.uses_zeta:
        sol.msolution_residual = _attach_mpart(spec, lattice, sol)
        return sol
    for _ in range(max_iter):
        _attach_mpart(spec, lattice, sol)
        new_sol = solve_bsvie_family(spec, lattice, fp_tol, fp_max_iter, zeta=sol.z)
        delta = max(
            float(np.max(np.abs(a - b)))
            for a, b in zip(new_sol.y.levels, sol.y.levels)
        )
        # carry the representation slices forward for the convergence test
        for (i, j) in sol.z.pairs():
            if j < i:
                new_sol.z.set(i, j, sol.z.get(i, j))
        sol = new_sol
        if delta < tol:
            sol.msolution_residual = _attach_mpart(spec, lattice, sol)
            return sol
    raise NonConvergenceError(f"M-solution alternation not below {tol} after {max_iter} sweeps")


def _attach_mpart(spec: BsvieSpec, lattice: BinaryLattice, sol: BsvieSolution) -> float:
    """Populate Z(t_i, s_j) for j < i from Y's representation; return the residual."""
    worst = 0.0
    for i in range(1, lattice.depth + 1):
        yi = sol.y.at(i)
        mean, zs = martingale_representation(lattice, yi, i)
        recon = np.tile(mean, (1, 1))
        for j in range(i):
            sol.z.set(i, j, zs[j])
            nxt = np.empty((2 ** (j + 1), spec.dim))
            nxt[0::2] = recon + zs[j] * lattice.sqrt_h
            nxt[1::2] = recon - zs[j] * lattice.sqrt_h
            recon = nxt
        worst = max(worst, float(np.max(np.abs(recon - yi))))
    return worst


def solve_bsvie_family_deterministic(
    psi: Callable[[float], float],
    g: Callable[[float, np.ndarray, np.ndarray], np.ndarray],
    horizon: float,
    steps: int,
    fp_tol: float = FP_TOL,
    fp_max_iter: int = FP_MAX_ITER,
) -> tuple[np.ndarray, np.ndarray]:
    """Scalar deterministic reduction on a fine grid (Z = 0 throughout).

    ``g(t, s_array, y_array)`` must broadcast over the inner-time arrays.
    Solves  Y_i = psi(t_i) + h * sum_{j >= i} g(t_i, t_j, Y_j)  with the
    diagonal term implicit, exactly like the lattice sweep with one node per
    level but without the depth cap.
    """
    times = np.linspace(0.0, horizon, steps + 1)
    h = horizon / steps
    y = np.empty(steps + 1)
    y[steps] = psi(times[steps])
    for i in range(steps - 1, -1, -1):
        # drift sum over j = i..steps-1, matching the lattice sweep
        tail = psi(times[i]) + h * float(
            np.sum(np.asarray(g(times[i], times[i + 1: steps], y[i + 1: steps]), dtype=float))
        )
        cur = y[i + 1]
        for _ in range(fp_max_iter):
            new = tail + h * float(g(times[i], np.asarray([times[i]]), np.asarray([cur]))[0])
            if abs(new - cur) < fp_tol:
                cur = new
                break
            cur = new
        else:
            raise NonConvergenceError("diagonal step did not converge; reduce the step")
        y[i] = cur
    return times, y


# -- monotone successive scheme -------------------------------------------------


@dataclass
class PicardHistory:
    """Diagnostics of the frozen-y successive scheme.

    ``diff_norms[k]`` is the weighted norm of iterate k minus iterate k-1
    (iterate 0 is the solution of the upper spec), ``ratios`` the successive
    quotients of those norms, ``max_increase[k]`` the largest nodewise increase
    from iterate k-1 to k (<= 0 up to roundoff when the comparator is
    nondecreasing in y and dominated by the upper data).
    """

    beta: float
    diff_norms: list[float] = field(default_factory=list)
    ratios: list[float] = field(default_factory=list)
    max_increase: list[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False


def default_beta(lip: float, horizon: float) -> float:
    """Weighted-norm rate 4*(1+L)^2*T: four times the stability constant."""
    return 4.0 * (1.0 + lip) ** 2 * horizon


def _weighted_diff_norm(
    lattice: BinaryLattice,
    y_new: Sequence[np.ndarray],
    y_old: Sequence[np.ndarray],
    z_new: TwoParamProcess,
    z_old: TwoParamProcess | None,
    beta: float,
) -> float:
    h = lattice.h
    total = 0.0
    for i in range(lattice.depth + 1):
        w = h * math.exp(beta * lattice.times[i])
        dy = y_new[i] - y_old[i]
        total += w * float(np.mean(np.sum(dy * dy, axis=1)))
        if z_old is not None:
            for j in range(i, lattice.depth):
                dz = z_new.get(i, j) - z_old.get(i, j)
                total += w * h * float(np.mean(np.sum(dz * dz, axis=1)))
    return math.sqrt(total)


def picard_bsvie(
    upper: BsvieSpec,
    comparator: BsvieSpec,
    lattice: BinaryLattice,
    beta: float | None = None,
    max_iter: int = 50,
    tol: float = 1e-10,
) -> tuple[BsvieSolution, PicardHistory]:
    """Frozen-y successive scheme started from the upper solution.

    Iterate 0 solves ``upper``; iterate k solves the comparator equation with
    the y-argument frozen at iterate k-1.  When the comparator drift is
    nondecreasing in y with a diagonal z-coefficient and is dominated by the
    upper drift (and the comparator free term by the upper one), the iterates
    decrease nodewise and converge to the comparator solution; the weighted
    norm of successive differences contracts.  Convergence is declared at the
    first self-consistent pair of map outputs, so a y-independent comparator
    converges after one effective iteration.
    """
    if beta is None:
        beta = default_beta(max(comparator.lip_y, comparator.lip_z), lattice.horizon)
    hist = PicardHistory(beta=beta)
    sol = solve_bsvie_family(upper, lattice)
    prev_y = [lv.copy() for lv in sol.y.levels]
    prev_z: TwoParamProcess | None = sol.z
    for k in range(1, max_iter + 1):
        new_sol = solve_bsvie_family(comparator, lattice, frozen_y=prev_y)
        new_y = new_sol.y.levels
        norm = _weighted_diff_norm(lattice, new_y, prev_y, new_sol.z, prev_z, beta)
        hist.diff_norms.append(norm)
        if len(hist.diff_norms) > 1 and hist.diff_norms[-2] > 0:
            hist.ratios.append(norm / hist.diff_norms[-2])
        hist.max_increase.append(
            max(float(np.max(n_lv - p_lv)) for n_lv, p_lv in zip(new_y, prev_y))
        )
        prev_y = [lv.copy() for lv in new_y]
        prev_z = new_sol.z
        sol = new_sol
        if k >= 2 and norm < tol:
            hist.iterations = k - 1
            hist.converged = True
            return sol, hist
    raise NonConvergenceError(
        f"successive scheme not below {tol} after {max_iter} iterations "
        f"(last ratio {hist.ratios[-1] if hist.ratios else float('nan'):.3g})"
    )


# -- weak comparison functional --------------------------------------------------


def weak_comparison_functional(y: AdaptedProcess, lattice: BinaryLattice) -> AdaptedProcess:
    """node -> E[ sum_{level <= j < N} Y(t_j) h | node ], by one backward sweep.

    The left Riemann sum of the remaining time integral of Y: the constant
    process 1 gives exactly T - t at every level-t node, and the horizon slice
    itself contributes nothing (it carries no time mass).
    """
    h = lattice.h
    levels: list[np.ndarray | None] = [None] * (lattice.depth + 1)
    levels[lattice.depth] = np.zeros_like(y.at(lattice.depth))
    for k in range(lattice.depth - 1, -1, -1):
        levels[k] = h * y.at(k) + conditional_expectation(levels[k + 1])
    return AdaptedProcess(lattice, y.dim, levels)


# -- duality for the Volterra form ------------------------------------------------


def bsvie_duality_check(
    spec: BsvieSpec,
    eta: AdaptedProcess,
    lattice: BinaryLattice,
    msol: BsvieSolution | None = None,
) -> float:
    """|E sum_t h <psi(t), X(t)>  -  E sum_t h <phi(t), Y(t)>| for the adjoint pair.

    Y is the M-solution of the linear backward equation with drift
    A(t,s) Y(s) + C(t) Z(s,t); X solves the adjoint forward Volterra equation

        X(t) = phi(t) + int_0^t A(s,t)^T X(s) ds + int_0^t C(s)^T X(s) dW(s),

    phi(t) = int_0^t eta(s) ds, discretized with the drift diagonal taken
    implicitly.  Both time pairings are left Riemann sums (grid times t_0 ..
    t_{N-1}), matching the backward drift quadrature; with that convention the
    two pairings agree exactly on the lattice.
    """
    if spec.generator is not None or spec.h_fn is not None or spec.b_coef is not None:
        raise ValueError("duality check needs the linear form A(t,s) y + C(t) zeta")
    n = spec.dim
    N = lattice.depth
    h, sq = lattice.h, lattice.sqrt_h
    times = lattice.times
    if msol is None:
        msol = solve_bsvie_msolution(spec, lattice)
    a = spec.a_kernel if spec.a_kernel is not None else (lambda t, s: np.zeros((n, n)))
    c = spec.c_coef
    eye = np.eye(n)
    xs: list[np.ndarray] = []
    phis: list[np.ndarray] = []
    phi_acc = np.zeros((1, n))
    for j in range(N):
        if j > 0:
            prev = phi_acc + h * eta.at(j - 1)
            phi_acc = np.empty((2**j, n))
            phi_acc[0::2] = phi_acc[1::2] = prev
        phis.append(phi_acc.copy())
        rhs = phi_acc.copy()
        for i in range(j):
            term = xs[i] @ np.asarray(a(times[i], times[j]), dtype=float)
            rhs += h * lattice.lift(term, i, j)
            if c is not None:
                cterm = xs[i] @ np.asarray(c(times[i]), dtype=float)
                rhs += lattice.lift(cterm, i, j) * (sq * lattice.step_signs(j, i))[:, None]
        a_jj = np.asarray(a(times[j], times[j]), dtype=float)
        xs.append(np.linalg.solve(eye - h * a_jj.T, rhs.T).T)
    lhs = 0.0
    rhs_pair = 0.0
    for j in range(N):
        x_leaf = lattice.lift(xs[j], j, N)
        lhs += h * float(np.mean(np.sum(spec.psi.slice(j) * x_leaf, axis=1)))
        rhs_pair += h * float(np.mean(np.sum(phis[j] * msol.y.at(j), axis=1)))
    return abs(lhs - rhs_pair)


# -- step-function linear backward Volterra ----------------------------------------


@dataclass
class StepFnBsvieData:
    """Piecewise-constant-in-t linear backward Volterra data.

    The kernel A(t, s) equals ``a_pieces[k](s)`` for t in the k-th partition
    interval (half-open to the left, so t = 0 belongs to the first piece), the
    free term equals the leaf field ``psi_pieces[k]`` there, and B(s) is the
    shared z-coefficient.  ``partition`` lists grid indices 0 = p_0 < ... <
    p_M = N.
    """

    dim: int
    partition: list[int]
    a_pieces: list[Callable]
    psi_pieces: list[np.ndarray]
    b: Callable | None = None

    def n_pieces(self) -> int:
        return len(self.partition) - 1

    def piece_of(self, i: int) -> int:
        """0-based piece index of grid time i (i = 0 joins the first piece)."""
        for k in range(self.n_pieces()):
            if i <= self.partition[k + 1]:
                return k
        raise ValueError("grid index outside the partition")

    def validate(self, lattice: BinaryLattice) -> None:
        p = self.partition
        if p[0] != 0 or p[-1] != lattice.depth or any(b <= a for a, b in zip(p, p[1:])):
            raise ValueError("partition must be increasing grid indices from 0 to N")
        if len(self.a_pieces) != self.n_pieces() or len(self.psi_pieces) != self.n_pieces():
            raise ValueError("need one kernel and one free-term slice per interval")


@dataclass
class StepFnHypotheses:
    """Structural hypotheses of the step-function comparison, checked not assumed."""

    kernel_metzler: bool
    kernel_monotone: bool  # pieces nonincreasing along the partition
    free_term_monotone: bool  # psi_1 >= ... >= psi_M >= 0 pathwise
    z_coef_diagonal: bool
    step_bound_ok: bool  # h*||A||_inf < 1 and sqrt(h)*|B| <= 1

    def all_met(self) -> bool:
        return (
            self.kernel_metzler
            and self.kernel_monotone
            and self.free_term_monotone
            and self.z_coef_diagonal
            and self.step_bound_ok
        )


@dataclass
class StepFnSolution:
    solution: BsvieSolution
    hypotheses: StepFnHypotheses


def solve_linear_bsvie_stepfn(
    data: StepFnBsvieData,
    lattice: BinaryLattice,
    fp_tol: float = FP_TOL,
    fp_max_iter: int = FP_MAX_ITER,
) -> StepFnSolution:
    """Interval-by-interval nested backward induction for step-function data.

    The last interval is a plain linear backward recursion.  Each earlier
    interval k reuses the interval-(k+1) sweep: above its right endpoint the
    two sweeps differ by a correction D driven by the kernel increment
    (A_k - A_{k+1}) Y and the free-term increment psi_k - psi_{k+1}, computed
    by its own explicit recursion; below the endpoint the sweep continues with
    implicit steps.  Every operation preserves exact nonnegativity when the
    hypotheses hold, so hypothesis-satisfying data yields Y >= 0 with no
    tolerance.  Hypothesis violations are reported on the result, never
    raised: counterexample data must run.
    """
    data.validate(lattice)
    n = data.dim
    N = lattice.depth
    h, sq = lattice.h, lattice.sqrt_h
    times = lattice.times
    M = data.n_pieces()
    b = data.b if data.b is not None else (lambda s: np.zeros((n, n)))

    y_levels: list[np.ndarray | None] = [None] * (N + 1)
    z = TwoParamProcess(lattice, n)
    # lam[j] holds the current interval's sweep value at level j (j >= lower end)
    lam: list[np.ndarray | None] = [None] * (N + 1)
    z_rows: list[np.ndarray | None] = [None] * N

    def implicit_step(a_fn, j, nxt):
        up, down = nxt[0::2], nxt[1::2]
        mu = (up - down) / (2.0 * sq)
        rhs = _blend(up, down, np.asarray(b(times[j]), dtype=float), sq, 1.0)
        val = _jacobi_step(
            np.asarray(a_fn(times[j]), dtype=float), rhs, h, 1.0, fp_tol, fp_max_iter
        )
        return val, mu

    for k in range(M - 1, -1, -1):
        hi = data.partition[k + 1]
        lo = data.partition[k] + 1 if k > 0 else 0
        if k == M - 1:
            lam[N] = np.asarray(data.psi_pieces[k], dtype=float).reshape(2**N, n).copy()
            sweep_from = N - 1
        else:
            # correction sweep above the right endpoint: the previous
            # interval's values are defined on levels hi+1..N only
            d_cur = (
                np.asarray(data.psi_pieces[k], dtype=float).reshape(2**N, n)
                - np.asarray(data.psi_pieces[k + 1], dtype=float).reshape(2**N, n)
            )
            new_lam: list[np.ndarray | None] = [None] * (N + 1)
            new_lam[N] = lam[N] + d_cur
            new_rows: list[np.ndarray | None] = [None] * N
            for j in range(N - 1, hi, -1):
                up, down = d_cur[0::2], d_cur[1::2]
                dz = (up - down) / (2.0 * sq)
                da = np.asarray(data.a_pieces[k](times[j]), dtype=float) - np.asarray(
                    data.a_pieces[k + 1](times[j]), dtype=float
                )
                d_cur = _blend(up, down, np.asarray(b(times[j]), dtype=float), sq, 1.0)
                d_cur = d_cur + h * (y_levels[j] @ da.T)
                new_lam[j] = lam[j] + d_cur
                new_rows[j] = z_rows[j] + dz
            lam, z_rows = new_lam, new_rows
            sweep_from = hi
        for j in range(sweep_from, lo - 1, -1):
            val, mu = implicit_step(data.a_pieces[k], j, lam[j + 1])
            lam[j] = val
            z_rows[j] = mu
        for i in range(lo, hi + 1):
            y_levels[i] = lam[i]
            for j in range(i, N):
                z.set(i, j, z_rows[j])

    hyp = _stepfn_hypotheses(data, lattice)
    sol = BsvieSolution(AdaptedProcess(lattice, n, y_levels), z, None)
    return StepFnSolution(sol, hyp)


def _stepfn_hypotheses(data: StepFnBsvieData, lattice: BinaryLattice) -> StepFnHypotheses:
    from . import cones

    h, sq = lattice.h, lattice.sqrt_h
    metzler = True
    monotone = True
    diag = True
    bound_ok = True
    for j in range(lattice.depth):
        s = lattice.times[j]
        mats = [np.asarray(fn(s), dtype=float) for fn in data.a_pieces]
        metzler &= all(cones.is_metzler(m) for m in mats)
        monotone &= all(cones.is_nonneg(a - bmat) for a, bmat in zip(mats, mats[1:]))
        bound_ok &= all(h * np.abs(m).sum(axis=1).max() < 1.0 for m in mats)
        if data.b is not None:
            bm = np.asarray(data.b(s), dtype=float)
            diag &= cones.is_diagonal(bm)
            bound_ok &= sq * np.abs(np.diag(bm)).max() <= 1.0
    psi_mono = True
    prev = None
    for piece in data.psi_pieces:
        arr = np.asarray(piece, dtype=float)
        if prev is not None:
            psi_mono &= bool(np.all(prev >= arr))
        prev = arr
    psi_mono &= bool(np.all(np.asarray(data.psi_pieces[-1]) >= 0.0))
    return StepFnHypotheses(metzler, monotone, psi_mono, diag, bound_ok)

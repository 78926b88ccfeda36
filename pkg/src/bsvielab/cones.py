"""Matrix cone algebra: entrywise-nonnegative, Metzler, and diagonal cones.

Every positivity and comparison hypothesis in this library is a membership
statement in one of three cones of real matrices:

* nonnegative      -- all entries >= 0,
* Metzler          -- all off-diagonal entries >= 0 (diagonal unconstrained),
* diagonal         -- all off-diagonal entries == 0.

The Metzler cone decomposes as (nonnegative) + (diagonal).  For 1x1 matrices
the Metzler and diagonal cones are all of R.  Membership is structural, so
the default tolerance is 0; a tolerance parameter exists for matrices that
come out of floating-point arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ConeLogicError(RuntimeError):
    """Internal inconsistency between the exact vertex test and sampling."""


def _as_matrix(a) -> np.ndarray:
    m = np.asarray(a, dtype=float)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-d matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    return m


def _require_square(m: np.ndarray) -> None:
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"square matrix required, got shape {m.shape}")


def is_nonneg(a, tol: float = 0.0) -> bool:
    """True iff every entry of ``a`` is >= -tol."""
    m = _as_matrix(a)
    return bool(np.all(m >= -tol))


def is_metzler(a, tol: float = 0.0) -> bool:
    """True iff every off-diagonal entry of the square matrix ``a`` is >= -tol.

    Diagonal entries are unconstrained; any 1x1 matrix is Metzler.
    """
    m = _as_matrix(a)
    _require_square(m)
    off = m[~np.eye(m.shape[0], dtype=bool)]
    return bool(off.size == 0 or np.all(off >= -tol))


def is_diagonal(a, tol: float = 0.0) -> bool:
    """True iff every off-diagonal entry of the square matrix ``a`` has |entry| <= tol."""
    m = _as_matrix(a)
    _require_square(m)
    off = m[~np.eye(m.shape[0], dtype=bool)]
    return bool(off.size == 0 or np.all(np.abs(off) <= tol))


@dataclass(frozen=True)
class ConeMembership:
    """Membership of one matrix in the three cones, with a diagnostic witness.

    ``worst_offender`` is ``(row, col, value)`` for the most negative
    off-diagonal entry (the entry that blocks Metzler membership), or the most
    negative entry overall when the matrix is Metzler but not nonnegative.
    ``None`` when the matrix is entrywise nonnegative.
    """

    in_nonneg: bool
    in_metzler: bool
    in_diagonal: bool
    worst_offender: tuple[int, int, float] | None


def cone_membership(a, tol: float = 0.0) -> ConeMembership:
    """Classify ``a`` against all three cones in one pass."""
    m = _as_matrix(a)
    nonneg = is_nonneg(m, tol)
    if m.shape[0] == m.shape[1]:
        metzler = is_metzler(m, tol)
        diagonal = is_diagonal(m, tol)
    else:
        metzler = False
        diagonal = False
    offender = None
    if not nonneg:
        if m.shape[0] == m.shape[1] and not metzler:
            # most negative off-diagonal entry
            masked = m + np.where(np.eye(m.shape[0], dtype=bool), np.inf, 0.0)
        else:
            masked = m
        r, c = np.unravel_index(int(np.argmin(masked)), m.shape)
        offender = (int(r), int(c), float(m[r, c]))
    return ConeMembership(nonneg, metzler, diagonal, offender)


def cone_preservation_check(a, sample_count: int, rng_seed: int) -> bool:
    """Exact test that ``x >= 0`` implies ``a @ x >= 0``.

    The exact answer is the vertex test on the basis vectors e_j, which is
    equivalent to entrywise nonnegativity of the columns.  As a guard, the
    routine additionally samples ``sample_count`` random nonnegative vectors;
    a sampled violation while the vertex test passes is impossible in exact
    arithmetic and aborts with :class:`ConeLogicError`.
    """
    m = _as_matrix(a)
    vertex_ok = bool(np.all(m >= 0.0))
    rng = np.random.default_rng(rng_seed)
    xs = rng.uniform(0.0, 1.0, size=(max(int(sample_count), 0), m.shape[1]))
    images = xs @ m.T
    if vertex_ok and images.size and not np.all(images >= 0.0):
        raise ConeLogicError(
            "sampled x >= 0 with a negative image although every column is nonnegative"
        )
    return vertex_ok

import math

import numpy as np
import pytest

from bsvielab import backward, forward
from bsvielab.errors import NonConvergenceError
from bsvielab.lattice import (
    AdaptedProcess,
    BinaryLattice,
    TerminalField,
    condition_to,
    martingale_representation,
)


def random_metzler(rng, n, scale):
    m = rng.uniform(0.0, scale, (n, n))
    m[np.diag_indices(n)] = rng.uniform(-scale, scale, n)
    return m


def deterministic_psi(lat, fn):
    return TerminalField.from_time_function(lat, 1, lambda t: np.array([fn(t)]))


# -- backward SDE -----------------------------------------------------------------


def test_bsde_zero_generator_is_conditional_expectation():
    lat = BinaryLattice(1.0, 7)
    rng = np.random.default_rng(0)
    xi = rng.standard_normal((128, 2))
    sol = backward.solve_bsde(
        backward.BsdeSpec(2, xi, generator=lambda t, y, z, nd: 0.0 * y), lat
    )
    for k in range(8):
        assert np.max(np.abs(sol.y[k] - condition_to(xi, 7, k))) <= 1e-13
    mean, zs = martingale_representation(lat, xi, 7)
    for k in range(7):
        assert np.max(np.abs(sol.z[k] - zs[k])) <= 1e-13


def test_bsde_scalar_exponential_decay():
    lat = BinaryLattice(1.0, 10)
    sol = backward.solve_bsde(
        backward.BsdeSpec(1, np.ones((1024, 1)), generator=lambda t, y, z, nd: -y, lip_y=1.0),
        lat,
    )
    assert abs(sol.y[0][0, 0] - math.exp(-1.0)) <= 0.5 * lat.h  # measured 0.18 h


def test_bsde_linear_positivity_is_exact():
    rng = np.random.default_rng(1)
    for trial in range(50):
        n = int(rng.integers(1, 4))
        N = int(rng.integers(4, 9))
        lat = BinaryLattice(1.0, N)
        neg_a = random_metzler(rng, n, 0.6)  # -A Metzler
        a = -neg_a
        if lat.h * float(np.abs(a).sum(axis=1).max()) > 0.9:
            a *= 0.9 / (lat.h * float(np.abs(a).sum(axis=1).max()))
        b = np.diag(rng.uniform(-0.9, 0.9, n)) / max(lat.sqrt_h, 1.0)
        f = rng.uniform(0.0, 1.0, n)
        xi = rng.uniform(0.0, 2.0, (2**N, n))
        sol = backward.solve_bsde(
            backward.BsdeSpec(n, xi, a=lambda t, m=a: m, b=lambda t, m=b: m,
                              forcing=lambda t, v=f: v),
            lat,
        )
        assert min(float(np.min(sol.y[k])) for k in range(N + 1)) >= 0.0


def test_bsde_nonconvergence_reports_step_hint():
    lat = BinaryLattice(1.0, 2)  # h = 0.5, L_y * h = 5
    spec = backward.BsdeSpec(
        1, np.ones((4, 1)), generator=lambda t, y, z, nd: -10.0 * y, lip_y=10.0
    )
    with pytest.raises(NonConvergenceError, match="h\\*L_y"):
        backward.solve_bsde(spec, lat)


# -- BSDE duality -------------------------------------------------------------------


def test_bsde_duality_trivial_coefficients():
    lat = BinaryLattice(1.0, 8)
    rng = np.random.default_rng(2)
    xi = rng.standard_normal((256, 2))
    spec = backward.BsdeSpec(2, xi, a=lambda t: np.zeros((2, 2)), b=lambda t: np.zeros((2, 2)))
    assert backward.bsde_duality_check(spec, np.array([1.0, -0.5]), 0, lat) <= 1e-13


@pytest.mark.parametrize("kind", ["diagonal", "full_a_zero_b", "full_a_diag_b"])
def test_bsde_duality_random_specs(kind):
    rng = np.random.default_rng(hash(kind) % 2**32)
    n = 2
    lat = BinaryLattice(1.0, 8)
    for trial in range(20):
        if kind == "diagonal":
            a = np.diag(rng.uniform(-1.0, 1.0, n))
            b = np.diag(rng.uniform(-1.0, 1.0, n))
        elif kind == "full_a_zero_b":
            a = rng.uniform(-1.0, 1.0, (n, n))
            b = np.zeros((n, n))
        else:
            a = rng.uniform(-1.0, 1.0, (n, n))
            b = np.diag(rng.uniform(-1.0, 1.0, n))
        f = rng.uniform(-1.0, 1.0, n)
        xi = rng.standard_normal((256, n))
        spec = backward.BsdeSpec(
            n, xi, a=lambda t, m=a: m, b=lambda t, m=b: m, forcing=lambda t, v=f: v
        )
        x = rng.uniform(0.0, 1.0, n)
        s_idx = int(rng.integers(0, 4))
        assert backward.bsde_duality_check(spec, x, s_idx, lat) <= 1e-10


# -- backward Volterra: family solver ---------------------------------------------------


def test_family_reduces_to_single_bsde_for_t_free_data():
    lat = BinaryLattice(1.0, 9)
    rng = np.random.default_rng(3)
    xi = rng.standard_normal((512, 1))
    psi = TerminalField(lat, 1, np.tile(xi[None], (10, 1, 1)))
    gen2 = lambda t, y, z, nd: np.arctan(y) + 0.2 * z
    fam = backward.solve_bsvie_family(
        backward.BsvieSpec(
            1, psi, generator=lambda t, s, y, z, zeta, nd: np.arctan(y) + 0.2 * z,
            lip_y=1.0, lip_z=0.2,
        ),
        lat,
    )
    bsde = backward.solve_bsde(
        backward.BsdeSpec(1, xi, generator=gen2, lip_y=1.0, lip_z=0.2), lat
    )
    worst = max(np.max(np.abs(fam.y.at(k) - bsde.y[k])) for k in range(10))
    assert worst <= 1e-12
    # the diagonal-inclusive Z slices match the single equation's integrand
    for k in range(9):
        assert np.max(np.abs(fam.z.get(0, k) - bsde.z[k])) <= 1e-12


def test_family_increasing_free_term_goes_negative():
    T, steps = 1.0, 2**10
    times, y = backward.solve_bsvie_family_deterministic(
        lambda t: t, lambda t, s, yv: -yv, T, steps
    )
    exact = math.exp(-T) * (T + 1.0) - 1.0
    assert abs(y[0] - exact) <= 5e-3
    tstar = T - math.log(T + 1.0)
    h = T / steps
    inside = times <= tstar - 5.0 * h  # standoff: the scheme error is O(h)
    assert np.all(y[inside] < 0.0)
    assert y[0] < 0.0


def test_family_shifted_drift_stays_above_minus_h():
    T, steps = 1.0, 2**10
    h = T / steps
    times, y = backward.solve_bsvie_family_deterministic(
        lambda t: 0.0, lambda t, s, yv: s - t - yv, T, steps
    )
    assert float(np.min(y)) >= -h
    oracle = np.exp(times - T) + T - times - 1.0
    assert float(np.max(np.abs(y - oracle))) <= 2.0 * h  # measured 0.45 h


def test_family_lattice_matches_deterministic_grid():
    T, N = 1.0, 9
    lat = BinaryLattice(T, N)
    psi = deterministic_psi(lat, lambda t: t)
    fam = backward.solve_bsvie_family(
        backward.BsvieSpec(1, psi, a_kernel=lambda t, s: np.array([[-1.0]]),
                           uses_z=False, lip_y=1.0),
        lat,
    )
    times, y = backward.solve_bsvie_family_deterministic(
        lambda t: t, lambda t, s, yv: -yv, T, N
    )
    worst = max(abs(fam.y.at(i)[0, 0] - y[i]) for i in range(N + 1))
    assert worst <= 1e-13


# -- monotone successive scheme -----------------------------------------------------------


def make_picard_pair(rng, n, lat):
    leaves = 2**lat.depth
    b = np.diag(rng.uniform(-0.4, 0.4, n))
    eps = rng.uniform(0.1, 0.5, n)
    psibar = rng.standard_normal((lat.depth + 1, leaves, n))
    psi1 = psibar + rng.uniform(0.0, 0.5, (lat.depth + 1, leaves, n))
    gbar = lambda t, s, y, z, zeta, nd: np.arctan(y) + z @ b.T
    comp = backward.BsvieSpec(
        n, TerminalField(lat, n, psibar), generator=gbar, lip_y=1.0, lip_z=0.4
    )
    upper = backward.BsvieSpec(
        n, TerminalField(lat, n, psi1),
        generator=lambda t, s, y, z, zeta, nd: gbar(t, s, y, z, zeta, nd) + eps,
        lip_y=1.0, lip_z=0.4,
    )
    return comp, upper


def test_picard_y_free_comparator_converges_in_one_iteration():
    lat = BinaryLattice(1.0, 7)
    rng = np.random.default_rng(4)
    leaves = 2**7
    psibar = rng.standard_normal((8, leaves, 1))
    psi1 = psibar + 0.3
    comp = backward.BsvieSpec(
        1, TerminalField(lat, 1, psibar),
        generator=lambda t, s, y, z, zeta, nd: 0.3 * z + 0.0 * y, lip_z=0.3,
    )
    upper = backward.BsvieSpec(
        1, TerminalField(lat, 1, psi1),
        generator=lambda t, s, y, z, zeta, nd: 0.3 * z + 0.1 + 0.0 * y, lip_z=0.3,
    )
    sol, hist = backward.picard_bsvie(upper, comp, lat)
    assert hist.converged and hist.iterations == 1
    assert hist.diff_norms[-1] == 0.0


def test_picard_iterates_decrease_nodewise():
    rng = np.random.default_rng(5)
    lat = BinaryLattice(1.0, 8)
    comp, upper = make_picard_pair(rng, 1, lat)
    sol, hist = backward.picard_bsvie(upper, comp, lat)
    assert max(hist.max_increase) <= 1e-12
    # the limit solves the comparator equation
    direct = backward.solve_bsvie_family(comp, lat)
    worst = max(np.max(np.abs(sol.y.at(k) - direct.y.at(k))) for k in range(9))
    assert worst <= 1e-8


def test_picard_weighted_norm_contracts_at_default_rate():
    rng = np.random.default_rng(6)
    for trial in range(10):
        lat = BinaryLattice(1.0, 7)
        comp, upper = make_picard_pair(rng, int(rng.integers(1, 3)), lat)
        _, hist = backward.picard_bsvie(upper, comp, lat)
        assert hist.beta == backward.default_beta(1.0, 1.0)
        assert all(r < 1.0 for r in hist.ratios)


# -- M-solutions --------------------------------------------------------------------------


def test_msolution_degenerate_matches_family():
    lat = BinaryLattice(1.0, 8)
    rng = np.random.default_rng(7)
    psi = TerminalField(lat, 2, rng.standard_normal((9, 256, 2)))
    spec = backward.BsvieSpec(
        2, psi, generator=lambda t, s, y, z, zeta, nd: 0.3 * np.tanh(y),
        uses_z=False, uses_zeta=False, lip_y=0.3,
    )
    fam = backward.solve_bsvie_family(spec, lat)
    mso = backward.solve_bsvie_msolution(spec, lat)
    worst = max(np.max(np.abs(fam.y.at(k) - mso.y.at(k))) for k in range(9))
    assert worst <= 1e-12
    assert mso.msolution_residual <= 1e-12


def test_msolution_residual_small_for_zeta_coupled_equation():
    lat = BinaryLattice(1.0, 8)
    rng = np.random.default_rng(8)
    psi = TerminalField(lat, 1, rng.standard_normal((9, 256, 1)))
    spec = backward.BsvieSpec(
        1, psi,
        generator=lambda t, s, y, z, zeta, nd: 0.2 * np.tanh(y) + (1.5 - t) * zeta / (1 + s),
        uses_z=False, uses_zeta=True, lip_y=0.2, lip_zeta=2.0,
    )
    sol = backward.solve_bsvie_msolution(spec, lat)
    assert sol.msolution_residual <= 1e-12
    # every sub-diagonal slice exists
    for i in range(1, 9):
        for j in range(i):
            assert sol.z.has(i, j)


def test_msolution_rejects_z_dependent_drift():
    lat = BinaryLattice(1.0, 4)
    psi = deterministic_psi(lat, lambda t: 1.0)
    spec = backward.BsvieSpec(
        1, psi, generator=lambda t, s, y, z, zeta, nd: z, uses_z=True, lip_z=1.0
    )
    with pytest.raises(ValueError):
        backward.solve_bsvie_msolution(spec, lat)


def test_bsvie_spec_flag_consistency():
    lat = BinaryLattice(1.0, 4)
    psi = deterministic_psi(lat, lambda t: 1.0)
    with pytest.raises(ValueError):
        backward.BsvieSpec(1, psi, a_kernel=lambda t, s: np.eye(1), uses_z=True)


def test_indicator_free_term_negative_time_integral():
    # sub-diagonal coupling with both time arguments; expected time integral of
    # Y matches the dual pairing with the forward solution and is negative
    T, depth = 1.0, 12
    lat = BinaryLattice(T, depth)
    fw = forward.solve_linear_fsvie(
        forward.FsvieSpec(
            1, lambda t: np.array([1.0]),
            a1_full=lambda t, s: np.array([[(2 * T - s) / (2 * T - t)]]),
        ),
        lat,
    )
    ind = np.empty((depth + 1, 2**depth, 1))
    for i in range(depth + 1):
        ind[i] = lat.lift((fw.at(i) < 0.0).astype(float), i, depth)
    spec = backward.BsvieSpec(
        1, TerminalField(lat, 1, ind),
        generator=lambda t, s, y, z, zeta, nd: ((2 * T - t) / (2 * T - s)) * zeta,
        uses_z=False, uses_zeta=True, lip_zeta=2.0,
    )
    sol = backward.solve_bsvie_msolution(spec, lat)
    e_int_y = sum(lat.h * float(np.mean(sol.y.at(i))) for i in range(depth))
    e_int_dual = sum(
        lat.h * float(np.mean(np.where(fw.at(i) < 0.0, fw.at(i), 0.0))) for i in range(depth)
    )
    assert e_int_y < 0.0
    assert abs(e_int_y - e_int_dual) <= 1e-10
    assert sol.msolution_residual <= 1e-12


# -- Volterra duality ----------------------------------------------------------------------


def test_bsvie_duality_zero_weight():
    lat = BinaryLattice(1.0, 6)
    rng = np.random.default_rng(9)
    psi = TerminalField(lat, 1, rng.standard_normal((7, 64, 1)))
    spec = backward.BsvieSpec(
        1, psi, a_kernel=lambda t, s: np.array([[0.3]]),
        c_coef=lambda t: np.array([[0.2]]),
        uses_z=False, uses_zeta=True, lip_y=0.3, lip_zeta=0.2,
    )
    eta = AdaptedProcess.constant(lat, [0.0])
    assert backward.bsvie_duality_check(spec, eta, lat) == 0.0


def test_bsvie_duality_decoupled():
    lat = BinaryLattice(1.0, 6)
    rng = np.random.default_rng(10)
    psi = TerminalField(lat, 1, rng.standard_normal((7, 64, 1)))
    spec = backward.BsvieSpec(
        1, psi, a_kernel=lambda t, s: np.zeros((1, 1)),
        c_coef=lambda t: np.zeros((1, 1)),
        uses_z=False, uses_zeta=True,
    )
    eta = AdaptedProcess.from_function(lat, 1, lambda t, w: (np.abs(w) + 0.5)[:, None])
    assert backward.bsvie_duality_check(spec, eta, lat) <= 1e-12


def test_bsvie_duality_random_diagonal_specs():
    rng = np.random.default_rng(11)
    n = 2
    lat = BinaryLattice(1.0, 8)
    for trial in range(10):
        a = np.diag(rng.uniform(-0.6, 0.6, n))
        c = np.diag(rng.uniform(-1.0, 1.0, n))
        psi = TerminalField(lat, n, rng.standard_normal((9, 256, n)))
        spec = backward.BsvieSpec(
            n, psi, a_kernel=lambda t, s, m=a: m, c_coef=lambda t, m=c: m,
            uses_z=False, uses_zeta=True, lip_y=0.6, lip_zeta=1.0,
        )
        eta = AdaptedProcess.from_function(
            lat, n, lambda t, w: np.stack([np.abs(np.sin(w)), np.ones_like(w)], axis=1)
        )
        assert backward.bsvie_duality_check(spec, eta, lat) <= 1e-8


# -- weak comparison functional --------------------------------------------------------------


def test_weak_functional_of_constant_process():
    lat = BinaryLattice(1.0, 6)
    f = backward.weak_comparison_functional(AdaptedProcess.constant(lat, [1.0]), lat)
    for k in range(7):
        assert np.max(np.abs(f.at(k) - (1.0 - lat.times[k]))) <= 1e-14


def test_weak_functional_of_brownian_motion_vanishes_at_root():
    lat = BinaryLattice(1.0, 8)
    f = backward.weak_comparison_functional(lat.brownian(), lat)
    assert abs(f.at(0)[0, 0]) <= 1e-13


def test_weak_functional_matches_exhaustive_sum():
    lat = BinaryLattice(1.0, 6)
    rng = np.random.default_rng(12)
    y = AdaptedProcess(lat, 1, [rng.standard_normal((2**k, 1)) for k in range(7)])
    f = backward.weak_comparison_functional(y, lat)
    for k in (0, 2, 4):
        # oracle: lift everything to the leaves and average subtree sums
        acc = np.zeros((2**6, 1))
        for j in range(k, 6):
            acc += lat.h * lat.lift(y.at(j), j, 6)
        per_node = acc.reshape(2**k, 2 ** (6 - k)).mean(axis=1)
        assert np.max(np.abs(f.at(k)[:, 0] - per_node)) <= 1e-13


# -- step-function solver ---------------------------------------------------------------------


def test_stepfn_single_interval_is_one_bsde():
    rng = np.random.default_rng(13)
    n, N = 2, 8
    lat = BinaryLattice(1.0, N)
    a = random_metzler(rng, n, 0.4)
    b = np.diag(rng.uniform(-0.5, 0.5, n))
    psi = rng.uniform(0.0, 1.0, (2**N, n))
    res = backward.solve_linear_bsvie_stepfn(
        backward.StepFnBsvieData(n, [0, N], [lambda s: a], [psi], b=lambda s: b), lat
    )
    bsde = backward.solve_bsde(
        backward.BsdeSpec(n, psi, a=lambda t: -a, b=lambda t: -b), lat
    )
    worst = max(np.max(np.abs(res.solution.y.at(k) - bsde.y[k])) for k in range(N + 1))
    assert worst <= 1e-12
    assert res.hypotheses.all_met()


def test_stepfn_two_intervals_zero_kernel_closed_form():
    # with A = 0 and B = 0 the solution is the conditional expectation of the
    # active free-term slice: exactly nonnegative for ordered nonnegative data
    rng = np.random.default_rng(14)
    N = 6
    lat = BinaryLattice(1.0, N)
    psi2 = rng.uniform(0.0, 1.0, (2**N, 1))
    psi1 = psi2 + rng.uniform(0.0, 1.0, (2**N, 1))
    data = backward.StepFnBsvieData(
        1, [0, 3, N], [lambda s: np.zeros((1, 1))] * 2, [psi1, psi2], b=None
    )
    res = backward.solve_linear_bsvie_stepfn(data, lat)
    for i in range(N + 1):
        active = psi1 if i <= 3 else psi2
        assert np.max(np.abs(res.solution.y.at(i) - condition_to(active, N, i))) <= 1e-13
    assert res.solution.y.min() >= 0.0


def test_stepfn_exact_positivity_and_family_agreement():
    rng = np.random.default_rng(15)
    for trial in range(20):
        n = int(rng.integers(1, 4))
        N = int(rng.integers(5, 10))
        lat = BinaryLattice(1.0, N)
        leaves = 2**N
        cuts = sorted(rng.choice(np.arange(1, N), size=2, replace=False).tolist())
        partition = [0] + cuts + [N]
        mats = [random_metzler(rng, n, 0.4)]
        for _ in range(2):
            mats.insert(0, mats[0] + rng.uniform(0.0, 0.2, (n, n)))
        b = np.diag(rng.uniform(-0.5, 0.5, n))
        psis = [rng.uniform(0.0, 1.0, (leaves, n))]
        for _ in range(2):
            psis.insert(0, psis[0] + rng.uniform(0.0, 1.0, (leaves, n)))
        data = backward.StepFnBsvieData(
            n, partition, [lambda s, m=m: m for m in mats], psis, b=lambda s, m=b: m
        )
        res = backward.solve_linear_bsvie_stepfn(data, lat)
        assert res.hypotheses.all_met()
        assert res.solution.y.min() >= 0.0

        def a_kernel(t, s, data=data, mats=mats, lat=lat):
            return mats[data.piece_of(min(int(round(t / lat.h)), lat.depth))]

        vals = np.stack([psis[data.piece_of(i)] for i in range(N + 1)])
        fam = backward.solve_bsvie_family(
            backward.BsvieSpec(
                n, TerminalField(lat, n, vals), a_kernel=a_kernel,
                b_coef=lambda s, m=b: m, uses_z=True, lip_y=1.0, lip_z=1.0,
            ),
            lat,
        )
        worst = max(np.max(np.abs(fam.y.at(i) - res.solution.y.at(i))) for i in range(N + 1))
        assert worst <= 1e-10


def test_stepfn_increasing_kernel_counterexample_runs_without_raising():
    # frozen rising kernel on a deep lattice: hypothesis flags report the
    # violation and the solution dips negative at the root for a long horizon
    T, N = 3.0, 16
    lat = BinaryLattice(T, N)
    leaves = 2**N
    data = backward.StepFnBsvieData(
        1, list(range(N + 1)),
        [lambda s, tt=lat.times[k]: np.array([[tt - 1.0]]) for k in range(N)],
        [np.ones((leaves, 1)) for _ in range(N)],
        b=None,
    )
    res = backward.solve_linear_bsvie_stepfn(data, lat)
    assert not res.hypotheses.kernel_monotone
    assert not res.hypotheses.all_met()
    assert res.solution.y.at(0)[0, 0] < 0.0

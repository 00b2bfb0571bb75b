"""Nonlinear shooting, Newton correction, branch continuation and indices."""

import numpy as np
import pytest

import diracgap as dg


@pytest.fixture(scope="module")
def branch_short(coulomb_plus, zero_plus, seed_branch, branch_window,
                 soler_coupling):
    return dg.continue_branch(coulomb_plus, soler_coupling, seed_branch,
                              ds=0.001, max_steps=8, window=branch_window,
                              zero=zero_plus)


def test_trivial_shot_zero_mismatch(coulomb_plus, zero_plus, branch_window,
                                    soler_coupling):
    shot = dg.shoot_nonlinear(coulomb_plus, soler_coupling, 0.5, 0.0, 0.0,
                              branch_window, zero=zero_plus)
    np.testing.assert_array_equal(shot.mismatch, np.zeros(2))
    assert shot.rotation is None


def test_linear_eigenpair_small_mismatch(coulomb_plus, zero_plus, seed_branch,
                                         branch_window):
    # with the trivial coupling and the matched backward amplitude, the
    # midpoint mismatch is set by the eigenvalue accuracy, uniformly in a
    zc = dg.zero_coupling()
    lam = seed_branch.lam
    ratio, sign = dg.linear_amplitude_ratio(coulomb_plus, lam, branch_window,
                                            zero=zero_plus)
    for a in (1e-3, 1e-2, 1e-1):
        shot = dg.shoot_nonlinear(coulomb_plus, zc, lam, a, sign * ratio * a,
                                  branch_window, zero=zero_plus)
        assert np.linalg.norm(shot.mismatch) / a < 1e-5


def test_soler_mismatch_cubic_scaling(coulomb_plus, zero_plus, seed_branch,
                                      branch_window, soler_coupling):
    lam = seed_branch.lam
    ratio, sign = dg.linear_amplitude_ratio(coulomb_plus, lam, branch_window,
                                            zero=zero_plus)
    amps = np.array([1e-3, 3e-3, 1e-2])
    norms = []
    for a in amps:
        shot = dg.shoot_nonlinear(coulomb_plus, soler_coupling, lam, a,
                                  sign * ratio * a, branch_window,
                                  zero=zero_plus)
        norms.append(np.linalg.norm(shot.mismatch))
    slope = np.polyfit(np.log(amps), np.log(norms), 1)[0]
    assert 2.5 < slope < 3.5


def test_shot_sign_symmetry(coulomb_plus, zero_plus, seed_branch,
                            branch_window, soler_coupling):
    # the coupling is even in z, so negating both shooting amplitudes negates
    # the solution and the mismatch, and leaves the rotation unchanged
    lam = seed_branch.lam
    ratio, sign = dg.linear_amplitude_ratio(coulomb_plus, lam, branch_window,
                                            zero=zero_plus)
    a, b = 5e-3, sign * ratio * 5e-3
    s1 = dg.shoot_nonlinear(coulomb_plus, soler_coupling, lam, a, b,
                            branch_window, zero=zero_plus)
    s2 = dg.shoot_nonlinear(coulomb_plus, soler_coupling, lam, -a, -b,
                            branch_window, zero=zero_plus)
    np.testing.assert_allclose(s2.mismatch, -s1.mismatch, rtol=1e-8,
                               atol=1e-14)
    assert abs(s2.rotation - s1.rotation) < 1e-9


def test_solve_point_converges_and_shifts_quadratically(
        coulomb_plus, zero_plus, seed_branch, branch_window, soler_coupling):
    lam0 = seed_branch.lam
    shifts = []
    for a in (2e-3, 4e-3):
        pt = dg.solve_point(coulomb_plus, soler_coupling, lam0, a,
                            window=branch_window, zero=zero_plus)
        assert pt.residual < 1e-9 * max(1.0, a)
        shifts.append(pt.lam - lam0)
    # doubling the amplitude quadruples the leading-order level shift
    assert 3.0 < shifts[1] / shifts[0] < 5.0


def test_solve_point_infeasible_lambda(coulomb_plus, zero_plus, branch_window,
                                       soler_coupling):
    with pytest.raises((dg.CorrectorError, ValueError)):
        dg.solve_point(coulomb_plus, soler_coupling, 1.5, 1e-3,
                       constraint="lambda", window=branch_window,
                       zero=zero_plus)


def test_linear_coupling_point_recovers_eigenvalue(coulomb_plus, zero_plus,
                                                   seed_branch, branch_window):
    # trivial coupling: the corrector must stay at the linear eigenvalue
    zc = dg.zero_coupling()
    pt = dg.solve_point(coulomb_plus, zc, seed_branch.lam + 2e-6, 1e-3,
                        window=branch_window, zero=zero_plus)
    assert abs(pt.lam - seed_branch.lam) < 1e-7
    assert pt.residual < 1e-9


def test_branch_points_well_formed(branch_short, seed_branch):
    br = branch_short
    assert len(br.points) == 8
    assert br.termination == "max-steps"
    for pt in br.points:
        assert pt.residual < 1e-8
        assert -1.0 < pt.lam < 1.0
    amps = [p.a for p in br.points]
    assert all(b > a for a, b in zip(amps, amps[1:]))


def test_branch_index_constant(branch_short, seed_branch):
    assert branch_short.index_audit_ok
    assert all(p.index == seed_branch.nodal_index for p in branch_short.points)


def test_branch_rotation_continuous_at_zero_amplitude(branch_short,
                                                      seed_branch):
    # j tends to the seed rotation number as the amplitude vanishes
    first = branch_short.points[0]
    assert abs(first.rotation - seed_branch.rot) < 1e-3


def test_branch_extrapolates_to_seed(branch_short, seed_branch):
    a = np.array([p.a for p in branch_short.points[:5]])
    lam = np.array([p.lam for p in branch_short.points[:5]])
    fit = np.polyfit(a ** 2, lam, 2)
    assert abs(fit[-1] - seed_branch.lam) < 1e-5


def test_branch_rejects_bad_seed(coulomb_plus, zero_plus, seed_branch,
                                 branch_window, soler_coupling):
    from dataclasses import replace
    bad = replace(seed_branch, residual=1.0)
    with pytest.raises(ValueError):
        dg.continue_branch(coulomb_plus, soler_coupling, bad, 0.001, 3,
                           window=branch_window, zero=zero_plus)


def test_linearized_index_matches_point(coulomb_plus, zero_plus, branch_short,
                                        branch_window, soler_coupling):
    pt = branch_short.points[2]
    j, i = dg.linearized_index(coulomb_plus, soler_coupling, pt,
                               window=branch_window, zero=zero_plus)
    assert abs(j - pt.rotation) < 1e-9
    assert i == pt.index


def test_linearized_index_rejects_vanishing_side(coulomb_plus, zero_plus,
                                                 branch_short, branch_window,
                                                 soler_coupling):
    from dataclasses import replace
    pt = replace(branch_short.points[0], a=0.0)
    with pytest.raises(ValueError):
        dg.linearized_index(coulomb_plus, soler_coupling, pt,
                            window=branch_window, zero=zero_plus)


def test_overflow_abort_reports_position(coulomb_plus, zero_plus,
                                         soler_coupling):
    # a huge backward amplitude on a long window overflows the true scale
    win = dg.TruncationWindow(x_zero=1e-3, x_inf=600.0, delta=2e-4, eps=1e-3)
    with pytest.raises((dg.OverflowAbort, dg.IntegrationError)):
        dg.shoot_nonlinear(coulomb_plus, dg.zero_coupling(), 0.5, 1e-3, 1e80,
                           win, zero=zero_plus)

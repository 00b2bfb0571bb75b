"""Nonlinear gap solutions by two-sided shooting and amplitude continuation.

The nonlinear system J z' + P(x) z = lam z + S(x, z) z is solved as a singular
two-point boundary value problem on the truncation window: shoot forward from
x_zero along the origin boundary direction with amplitude a, backward from
x_inf along the decaying direction with amplitude b, and drive the midpoint
mismatch to zero with a damped Newton corrector in (lam, b) at fixed a.
Since S vanishes with z and solutions decay at both ends, the linear boundary
directions remain the right asymptotic data; the truncation window controls
the approximation.

Branches are continued in the left amplitude a (near bifurcation from a simple
eigenvalue the branch is a graph over the amplitude), with a secant predictor
and step halving on corrector failure.  Every accepted point carries the
rotation number j of the solution's own angle sweep, the integer index i
obtained from j by the quadrant floor rule, and the solver audits that i stays
equal to the seed eigenvalue's index along the branch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import quad

from .asymptotics import TruncationWindow, ZeroData, infinity_data, zero_data
from .model import CoefficientFamily, NonlinearCoupling
from .prufer import (DEFAULT_ATOL, DEFAULT_RTOL, IntegrationError,
                     OverflowAbort, _integrate_cartesian_engine,
                     integrate_prufer)
from .spectrum import EigenvalueRecord, _gauss_log_segments


class CorrectorError(RuntimeError):
    """Newton corrector failed to converge or met a singular Jacobian."""


def linear_amplitude_ratio(family: CoefficientFamily, lam: float,
                           window: TruncationWindow, *,
                           zero: Optional[ZeroData] = None,
                           rtol: float = DEFAULT_RTOL,
                           atol: float = DEFAULT_ATOL) -> tuple:
    """(ratio, sign) of backward to forward shooting amplitude for the linear
    flow at lam: matching midpoint magnitudes requires b = sign * ratio * a,
    with sign -1 when the matched angles differ by an odd multiple of pi.
    """
    zero = zero or zero_data(family)
    idata = infinity_data(family.mu_minus, family.mu_plus, lam)
    x_mid = window.x_mid
    fwd = integrate_prufer(family, lam, window, zero.theta_zero, "forward",
                           rtol=rtol, atol=atol, x_stop=x_mid)
    bwd = integrate_prufer(family, lam, window, idata.theta_inf, "backward",
                           rtol=rtol, atol=atol, x_stop=x_mid)
    ratio = math.exp(fwd.logrho_end - bwd.logrho_end)
    parity = round((fwd.theta_end - bwd.theta_end) / math.pi)
    return ratio, (-1.0 if parity % 2 else 1.0)


@dataclass
class ShootResult:
    """Midpoint mismatch of one forward/backward nonlinear shot.

    mismatch is z_fwd(x_mid) - z_bwd(x_mid) in true (unrenormalized)
    amplitude.  rotation is the angle sweep of the composite solution across
    the window divided by pi (None when a side is identically zero).
    """

    lam: float
    a: float
    b: float
    x_mid: float
    mismatch: np.ndarray
    rotation: Optional[float]
    fwd: object = field(repr=False, default=None)
    bwd: object = field(repr=False, default=None)
    theta_zero: float = math.nan
    theta_inf: float = math.nan


def shoot_nonlinear(family: CoefficientFamily, coupling: NonlinearCoupling,
                    lam: float, a: float, b: float,
                    window: TruncationWindow, *,
                    zero: Optional[ZeroData] = None,
                    rtol: float = DEFAULT_RTOL,
                    atol: float = DEFAULT_ATOL) -> ShootResult:
    """Integrate the full nonlinear system from both ends to the midpoint.

    Renormalization is disabled (amplitude is meaningful here); if the scales
    overflow the representable range the run aborts with OverflowAbort naming
    the last x reached.  a = b = 0 returns the exact zero mismatch of the
    trivial solution.
    """
    zero = zero or zero_data(family)
    idata = infinity_data(family.mu_minus, family.mu_plus, lam)
    x_mid = window.x_mid
    th0, thi = zero.theta_zero, idata.theta_inf

    def endpoint_value(traj):
        u, v, ls = traj.state(x_mid)
        return np.array([u, v]) * math.exp(ls)

    fwd = bwd = None
    if a != 0.0:
        sgn = 1.0 if a > 0.0 else -1.0
        fwd = _integrate_cartesian_engine(
            family, lam, window, (sgn * math.cos(th0), sgn * math.sin(th0)),
            "forward", coupling=coupling, renormalize=False,
            rtol=rtol, atol=atol, x_stop=x_mid, log_scale_init=math.log(abs(a)))
        zf = endpoint_value(fwd)
    else:
        zf = np.zeros(2)
    if b != 0.0:
        sgn = 1.0 if b > 0.0 else -1.0
        bwd = _integrate_cartesian_engine(
            family, lam, window, (sgn * math.cos(thi), sgn * math.sin(thi)),
            "backward", coupling=coupling, renormalize=False,
            rtol=rtol, atol=atol, x_stop=x_mid, log_scale_init=math.log(abs(b)))
        zb = endpoint_value(bwd)
    else:
        zb = np.zeros(2)

    rotation = None
    if fwd is not None and bwd is not None:
        # angle sweep of the composite solution: forward piece plus the
        # backward piece's increment from the midpoint out to x_inf
        rotation = (thi - th0 + fwd.angle(x_mid) - bwd.angle(x_mid)) / math.pi
    return ShootResult(lam=lam, a=a, b=b, x_mid=x_mid, mismatch=zf - zb,
                       rotation=rotation, fwd=fwd, bwd=bwd,
                       theta_zero=th0, theta_inf=thi)


# ---------------------------------------------------------------------------
# Branch points and the Newton corrector
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BranchPoint:
    lam: float
    a: float                    # left shooting amplitude
    b: float                    # right shooting amplitude (signed)
    x: np.ndarray = field(repr=False)
    u: np.ndarray = field(repr=False)
    v: np.ndarray = field(repr=False)
    l2_norm: float
    rotation: float             # j, the solution's own rotation number
    index: int                  # i, conserved along the branch
    residual: float
    flags: tuple = ()


def _index_from_rotation(rotation: float, quadrant: str) -> int:
    shifted = rotation if quadrant != "second" else rotation + 0.5
    return math.floor(shifted)


def _point_from_shot(family, zero, shot: ShootResult, n_samples=257) -> BranchPoint:
    window = shot.fwd.window
    xs = np.geomspace(window.x_zero, window.x_inf, n_samples)
    us = np.empty(n_samples)
    vs = np.empty(n_samples)
    for i, x in enumerate(xs):
        traj = shot.fwd if x <= shot.x_mid else shot.bwd
        u, v, ls = traj.state(x)
        s = math.exp(ls)
        us[i], vs[i] = s * u, s * v

    # L2 norm: quadrature inside the window plus linear-rate end corrections
    gx, gw = _gauss_log_segments(window.x_zero, window.x_inf)
    logn = np.array([(shot.fwd if x <= shot.x_mid else shot.bwd).log_norm(x)
                     for x in gx])
    lmax = float(logn.max())
    mass = float(np.sum(gw * np.exp(2.0 * (logn - lmax))))
    idata = infinity_data(family.mu_minus, family.mu_plus, shot.lam)
    tail = math.exp(2.0 * (shot.bwd.log_norm(window.x_inf) - lmax)) \
        / (2.0 * idata.decay_rate)
    if family.beta == 1.0:
        head = math.exp(2.0 * (shot.fwd.log_norm(window.x_zero) - lmax)) \
            * window.x_zero / (2.0 * math.sqrt(zero.delta_star) + 1.0)
    else:
        x0 = window.x_zero
        head_int, _ = quad(
            lambda x: math.exp(-2.0 * zero.rate * (x ** (1.0 - family.beta)
                                                   - x0 ** (1.0 - family.beta))),
            0.0, x0)
        head = math.exp(2.0 * (shot.fwd.log_norm(x0) - lmax)) * head_int
    l2 = math.exp(lmax) * math.sqrt(mass + tail + head)

    rot = shot.rotation
    idx = _index_from_rotation(rot, zero.quadrant)
    return BranchPoint(lam=shot.lam, a=shot.a, b=shot.b, x=xs, u=us, v=vs,
                       l2_norm=l2, rotation=rot, index=idx,
                       residual=float(np.linalg.norm(shot.mismatch)))


def solve_point(family: CoefficientFamily, coupling: NonlinearCoupling,
                lam_guess: float, a_target: float,
                b_guess: Optional[float] = None, *,
                window: TruncationWindow,
                zero: Optional[ZeroData] = None,
                constraint: str = "amplitude",
                rtol: float = DEFAULT_RTOL, atol: float = DEFAULT_ATOL,
                max_iter: int = 25) -> BranchPoint:
    """Newton-correct one nonlinear solution near the supplied guess.

    With constraint "amplitude" the unknowns are (lam, b) at fixed left
    amplitude a_target; with constraint "lambda" they are (a, b) at fixed
    lam_guess.  The mismatch is driven below 1e-9 * max(1, a); the Jacobian is
    formed by forward differences.  b may be negative (the backward direction
    flips sign for odd rotation offsets); its sign is frozen from the guess.
    """
    zero = zero or zero_data(family)
    if a_target <= 0.0:
        raise ValueError("amplitude target must be positive")
    if b_guess is None or b_guess == 0.0:
        # the linear eigenfunction fixes both the scale and the sign of the
        # backward amplitude; anything else is hopeless as a Newton start
        ratio, sign = linear_amplitude_ratio(family, lam_guess, window,
                                             zero=zero, rtol=rtol, atol=atol)
        b_guess = sign * ratio * a_target
    b_sign = 1.0 if b_guess > 0.0 else -1.0
    tol = 1e-9 * max(1.0, a_target)
    gap_margin = 1e-9 * (family.mu_plus - family.mu_minus)

    def residual(p):
        if float(np.max(np.abs(p))) > 700.0:
            raise CorrectorError("corrector step left the representable "
                                 "amplitude range")
        if constraint == "amplitude":
            lam, b = p[0], b_sign * math.exp(p[1])
            a = a_target
        else:
            lam = lam_guess
            a, b = math.exp(p[0]), b_sign * math.exp(p[1])
        if not (family.mu_minus + gap_margin < lam < family.mu_plus - gap_margin):
            raise CorrectorError(f"lam = {lam:.6g} left the spectral gap")
        shot = shoot_nonlinear(family, coupling, lam, a, b, window, zero=zero,
                               rtol=rtol, atol=atol)
        return shot.mismatch, shot

    if constraint == "amplitude":
        p = np.array([lam_guess, math.log(abs(b_guess))])
        steps = np.array([1e-7 * max(1.0, abs(lam_guess)), 1e-7])
    elif constraint == "lambda":
        p = np.array([math.log(a_target), math.log(abs(b_guess))])
        steps = np.array([1e-7, 1e-7])
    else:
        raise ValueError("constraint must be 'amplitude' or 'lambda'")

    try:
        r, shot = residual(p)
    except (OverflowAbort, IntegrationError) as exc:
        raise CorrectorError(f"initial shot failed: {exc}") from exc
    for _ in range(max_iter):
        if float(np.max(np.abs(r))) < tol:
            return _point_from_shot(family, zero, shot)
        jac = np.empty((2, 2))
        for col in range(2):
            q = p.copy()
            q[col] += steps[col]
            try:
                rq, _ = residual(q)
            except (OverflowAbort, IntegrationError) as exc:
                raise CorrectorError(
                    f"Jacobian evaluation failed: {exc}") from exc
            jac[:, col] = (rq - r) / steps[col]
        try:
            dp = np.linalg.solve(jac, -r)
        except np.linalg.LinAlgError as exc:
            raise CorrectorError(
                f"singular corrector Jacobian (cond ~ {np.linalg.cond(jac):.3g})"
            ) from exc
        # damped update
        scale = 1.0
        base = float(np.max(np.abs(r)))
        for _ in range(5):
            try:
                r_new, shot_new = residual(p + scale * dp)
            except (CorrectorError, OverflowAbort, IntegrationError):
                scale *= 0.5
                continue
            if float(np.max(np.abs(r_new))) < base or scale <= 0.0625:
                break
            scale *= 0.5
        else:
            raise CorrectorError("corrector step could not reduce the mismatch")
        p = p + scale * dp
        r, shot = r_new, shot_new
    if float(np.max(np.abs(r))) < tol:
        return _point_from_shot(family, zero, shot)
    raise CorrectorError(
        f"no convergence in {max_iter} iterations "
        f"(final mismatch {float(np.max(np.abs(r))):.3g}, tolerance {tol:.3g})")


def linearized_index(family: CoefficientFamily, coupling: NonlinearCoupling,
                     point: BranchPoint, *, window: TruncationWindow,
                     zero: Optional[ZeroData] = None,
                     rtol: float = DEFAULT_RTOL,
                     atol: float = DEFAULT_ATOL) -> tuple:
    """(j, i) for a solved point: j is the rotation number of the solution's
    own unwrapped angle across the window (the solution solves its linearized
    equation, so no second integration is needed), i the quadrant floor of j.
    """
    zero = zero or zero_data(family)
    if point.a == 0.0 or point.b == 0.0:
        raise ValueError("solution vanishes on one side; angle sweep undefined")
    shot = shoot_nonlinear(family, coupling, point.lam, point.a, point.b,
                           window, zero=zero, rtol=rtol, atol=atol)
    j = shot.rotation
    return j, _index_from_rotation(j, zero.quadrant)


# ---------------------------------------------------------------------------
# Branch continuation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Branch:
    seed: EigenvalueRecord
    points: tuple
    termination: str            # "max-steps" | "gap-edge-reached" | "step-failure"
    index_audit_ok: bool
    audit_failures: tuple = ()


def continue_branch(family: CoefficientFamily, coupling: NonlinearCoupling,
                    seed: EigenvalueRecord, ds: float, max_steps: int, *,
                    a_max: float = 10.0,
                    window: Optional[TruncationWindow] = None,
                    zero: Optional[ZeroData] = None,
                    rtol: float = DEFAULT_RTOL,
                    atol: float = DEFAULT_ATOL) -> Branch:
    """March a solution branch away from a linear eigenvalue in amplitude.

    Starts at left amplitude ds and grows it by ds per accepted step, with a
    secant predictor for (lam, b) and up to four step halvings on corrector
    failure.  Terminates when lam comes within 1e-6 of a gap edge, when the
    amplitude budget or step count is exhausted, or on persistent corrector
    failure.  Each accepted point's index i is audited against the seed's
    nodal index; disagreements are recorded, not silently accepted.
    """
    if ds <= 0.0:
        raise ValueError("continuation step ds must be positive")
    if seed.residual > 1e-6:
        raise ValueError("seed eigenvalue residual too large for continuation")
    window = window or seed.window
    zero = zero or zero_data(family)

    # backward/forward amplitude ratio of the linear eigenfunction fixes the
    # initial guess for b, including its sign (odd rotation offsets flip it)
    ratio, sign = linear_amplitude_ratio(family, seed.lam, window, zero=zero,
                                         rtol=rtol, atol=atol)

    points = []
    audit_failures = []
    termination = "max-steps"
    edge_tol = 1e-6
    a = 0.0
    lam_pred, b_pred = seed.lam, None
    while len(points) < max_steps:
        ds_local = ds
        accepted = None
        for _ in range(5):          # initial try plus four halvings
            a_try = a + ds_local
            if len(points) >= 2:
                p1, p2 = points[-2], points[-1]
                w = (a_try - p2.a) / (p2.a - p1.a)
                lam_pred = p2.lam + w * (p2.lam - p1.lam)
                b_pred = p2.b + w * (p2.b - p1.b)
            elif points:
                lam_pred, b_pred = points[-1].lam, points[-1].b * a_try / points[-1].a
            else:
                lam_pred, b_pred = seed.lam, sign * ratio * a_try
            try:
                accepted = solve_point(family, coupling, lam_pred, a_try,
                                       b_pred, window=window, zero=zero,
                                       rtol=rtol, atol=atol)
                break
            except CorrectorError:
                ds_local *= 0.5
        if accepted is None:
            termination = "step-failure"
            break
        points.append(accepted)
        a = accepted.a
        if accepted.index != seed.nodal_index:
            audit_failures.append(
                (len(points) - 1, accepted.index, seed.nodal_index))
        if accepted.lam >= family.mu_plus - edge_tol \
                or accepted.lam <= family.mu_minus + edge_tol:
            termination = "gap-edge-reached"
            break
        if a >= a_max:
            termination = "max-steps"
            break

    return Branch(seed=seed, points=tuple(points), termination=termination,
                  index_audit_ok=not audit_failures,
                  audit_failures=tuple(audit_failures))

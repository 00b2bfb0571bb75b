"""Endpoint eigen-directions, boundary angles and truncation windows.

At both ends of the half-line the system z' = J^{-1}(lam Id - P(x)) z is an
integrable perturbation of a constant-coefficient system.  At infinity the
frozen matrix J^{-1}(lam Id - diag(mu_minus, mu_plus)) has one decaying and
one growing direction for lam inside the gap; at the origin the matrix
J^{-1} * limit_zero (scaled by 1/(beta-1) for beta > 1, after the taming
change of variables) plays the same role.  Square-integrable solutions
approach the decaying direction, which fixes the boundary angle of the polar
coordinate at each end.  The truncation window [x_zero, x_inf] is chosen so
that beyond the cutoffs the coefficients are within delta of their limits and
the angular vector field pins trajectories to within the cone margin eps of
the boundary angle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import CoefficientFamily, classify_zero_endpoint


class NoWindowError(RuntimeError):
    """No truncation window satisfies the requested closeness bound."""


def gap_angle(mu_minus: float, mu_plus: float, lam: float) -> float:
    """arctan sqrt((lam - mu_minus) / (mu_plus - lam)), in (0, pi/2)."""
    return math.atan(math.sqrt((lam - mu_minus) / (mu_plus - lam)))


@dataclass(frozen=True)
class InfinityData:
    """Eigen-structure of the frozen system at infinity for one lam in the gap.

    decay_rate is sqrt((mu_plus - lam)(lam - mu_minus)); the decaying and
    growing directions are eigenvectors of J^{-1}(lam Id - diag(mu-, mu+)) for
    -decay_rate and +decay_rate.  theta_inf, the polar angle of the decaying
    direction, lies in (pi/2, pi) and equals pi minus the gap angle.
    """

    lam: float
    mu_minus: float
    mu_plus: float
    decay_rate: float
    decay_direction: np.ndarray
    growth_direction: np.ndarray
    theta_inf: float

    def frozen_matrix(self) -> np.ndarray:
        return np.array([[0.0, self.mu_plus - self.lam],
                         [self.lam - self.mu_minus, 0.0]])


def infinity_data(mu_minus: float, mu_plus: float, lam: float) -> InfinityData:
    """Decay/growth directions and boundary angle at infinity."""
    if not (mu_minus < lam < mu_plus):
        raise ValueError(f"lam = {lam} outside the open gap ({mu_minus}, {mu_plus})")
    delta = (mu_plus - lam) * (lam - mu_minus)
    rate = math.sqrt(delta)
    b1 = np.array([lam - mu_plus, rate])
    b2 = np.array([mu_plus - lam, rate])
    b1 /= np.linalg.norm(b1)
    b2 /= np.linalg.norm(b2)
    theta = math.pi - gap_angle(mu_minus, mu_plus, lam)
    return InfinityData(lam=lam, mu_minus=mu_minus, mu_plus=mu_plus,
                        decay_rate=rate, decay_direction=b1,
                        growth_direction=b2, theta_inf=theta)


@dataclass(frozen=True)
class ZeroData:
    """Eigen-structure of the origin flow matrix; independent of lam.

    flow_matrix is J^{-1} * limit_zero, scaled by 1/(beta - 1) when beta > 1.
    decay_direction is the eigenvector for the negative eigenvalue (the
    direction along which solutions vanish into the origin), sign-fixed so its
    polar angle theta_zero lies in [0, pi).  quadrant records which index
    convention applies downstream; theta_zero in {0, pi/2} (within 1e-9) is
    flagged degenerate and handled with the first-quadrant convention.
    """

    beta: float
    delta_star: float
    rate: float                 # positive eigenvalue of flow_matrix
    flow_matrix: np.ndarray
    decay_direction: np.ndarray
    growth_direction: np.ndarray
    theta_zero: float
    quadrant: str               # "first" | "second" | "degenerate"
    degenerate: bool


def _eigvec_tracefree(c: np.ndarray, sigma: float) -> np.ndarray:
    """Eigenvector of the trace-free 2x2 matrix c for eigenvalue sigma."""
    w1 = np.array([c[0, 1], sigma - c[0, 0]])
    w2 = np.array([sigma - c[1, 1], c[1, 0]])
    w = w1 if np.linalg.norm(w1) >= np.linalg.norm(w2) else w2
    n = np.linalg.norm(w)
    if n == 0.0:
        raise ValueError("degenerate eigenproblem for the origin flow matrix")
    return w / n


def zero_data(family: CoefficientFamily) -> ZeroData:
    """Boundary direction and angle at the origin for an admissible family."""
    cls = classify_zero_endpoint(family)
    if not cls.admissible:
        raise ValueError("origin endpoint is not admissible: " + cls.note)
    l = family.limit_zero
    c = np.array([[-l[1, 0], -l[1, 1]], [l[0, 0], l[0, 1]]])   # J^{-1} @ limit
    if family.beta > 1.0:
        c = c / (family.beta - 1.0)
    delta_star = cls.delta_star
    rate = math.sqrt(delta_star) if family.beta == 1.0 \
        else math.sqrt(delta_star) / (family.beta - 1.0)
    w1 = _eigvec_tracefree(c, -rate)
    w2 = _eigvec_tracefree(c, rate)
    # sign-fix both directions into the closed upper half plane
    if w1[1] < 0.0 or (w1[1] == 0.0 and w1[0] < 0.0):
        w1 = -w1
    if w2[1] < 0.0 or (w2[1] == 0.0 and w2[0] < 0.0):
        w2 = -w2
    theta = math.atan2(w1[1], w1[0]) % math.pi
    degenerate = min(abs(theta), abs(theta - math.pi / 2.0),
                     abs(theta - math.pi)) < 1e-9
    if degenerate:
        quadrant = "degenerate"
    else:
        quadrant = "first" if theta < math.pi / 2.0 else "second"
    return ZeroData(beta=family.beta, delta_star=delta_star, rate=rate,
                    flow_matrix=c, decay_direction=w1, growth_direction=w2,
                    theta_zero=theta, quadrant=quadrant, degenerate=degenerate)


@dataclass(frozen=True)
class TruncationWindow:
    """Computational interval [x_zero, x_inf] with the bounds that chose it."""

    x_zero: float
    x_inf: float
    delta: float
    eps: float

    def __post_init__(self):
        if not 0.0 < self.x_zero < self.x_inf:
            raise ValueError("window cutoffs must satisfy 0 < x_zero < x_inf")

    @property
    def x_mid(self) -> float:
        return math.sqrt(self.x_zero * self.x_inf)


def _angle_field(family: CoefficientFamily, lam: float, x: float, theta: float) -> float:
    p11, p12, p22 = family.coeffs(x)
    ct, st = math.cos(theta), math.sin(theta)
    return (lam - p11) * ct * ct - 2.0 * p12 * ct * st + (lam - p22) * st * st


def select_truncation(
    family: CoefficientFamily,
    lam_range: tuple,
    delta: Optional[float] = None,
    eps: float = 1e-3,
    *,
    x_bounds: tuple = (1e-8, 1e8),
    per_decade: int = 16,
    cone_points: int = 32,
    zero: Optional[ZeroData] = None,
) -> TruncationWindow:
    """Choose cutoffs by coefficient closeness, then confirm by the cone test.

    x_zero is the largest grid point below which |x^beta P(x) - limit| < delta
    at every sample; x_inf the smallest point beyond which |P(x) - limit| <
    delta at every sample (with the tail beyond the grid extrapolated from the
    fitted decay exponent).  The cone test then samples the angular field at
    the boundary angles +- eps over ``cone_points`` log-spaced points past each
    cutoff, for lam at both ends and the middle of lam_range, and requires the
    outward sign pattern that pins trajectories near the boundary angle; if it
    fails, the cutoff is pushed further out.  The origin cone test needs
    boundary data, so it is skipped (coefficient closeness only) when the
    family has no admissible origin and no ``zero`` data is passed in.
    """
    lo, hi = lam_range
    if not (family.mu_minus < lo <= hi < family.mu_plus):
        raise ValueError("lam_range must lie strictly inside the gap")
    if delta is None:
        delta = 1e-4 * (family.mu_plus - family.mu_minus)

    lg_lo, lg_hi = math.log10(x_bounds[0]), math.log10(x_bounds[1])
    n = int(round((lg_hi - lg_lo) * per_decade)) + 1
    xs = np.logspace(lg_lo, lg_hi, n)

    left = xs[xs <= 1.0]
    r0 = np.array([family.remainder_zero_norm(x) for x in left])
    ok0 = r0 < delta
    # largest index i such that all samples up to i pass
    run = np.cumprod(ok0).astype(bool)
    if not run[0]:
        raise NoWindowError(
            f"origin closeness {delta:g} unattainable above x = {x_bounds[0]:g}")
    i0 = int(np.max(np.nonzero(run)))

    right = xs[xs >= 1.0]
    rinf = np.array([family.remainder_inf_norm(x) for x in right])
    okinf = rinf < delta
    run_inf = np.cumprod(okinf[::-1]).astype(bool)[::-1]
    if not run_inf[-1]:
        raise NoWindowError(
            f"infinity closeness {delta:g} unattainable below x = {x_bounds[1]:g}")
    j0 = int(np.min(np.nonzero(run_inf)))

    if zero is None:
        cls = classify_zero_endpoint(family)
        zero = zero_data(family) if cls.admissible else None

    lam_samples = (lo, 0.5 * (lo + hi), hi)

    def cone_ok_inf(x_cut: float) -> bool:
        pts = np.logspace(math.log10(x_cut), math.log10(x_cut) + 1.0, cone_points)
        for lam in lam_samples:
            th = math.pi - gap_angle(family.mu_minus, family.mu_plus, lam)
            if th - eps <= math.pi / 2.0:
                return False
            for x in pts:
                if not (_angle_field(family, lam, x, th - eps) < 0.0
                        < _angle_field(family, lam, x, th + eps)):
                    return False
        return True

    def cone_ok_zero(x_cut: float) -> bool:
        pts = np.logspace(math.log10(x_cut) - 1.0, math.log10(x_cut), cone_points)
        th = zero.theta_zero
        for lam in lam_samples:
            for x in pts:
                if not (_angle_field(family, lam, x, th - eps) > 0.0
                        > _angle_field(family, lam, x, th + eps)):
                    return False
        return True

    while j0 < right.size and not cone_ok_inf(right[j0]):
        j0 += 1
    if j0 >= right.size:
        raise NoWindowError("cone test at infinity fails up to the grid end")
    x_inf = float(right[j0])

    if zero is not None:
        while i0 >= 0 and not cone_ok_zero(left[i0]):
            i0 -= 1
        if i0 < 0:
            raise NoWindowError("cone test at the origin fails down to the grid end")
    x_zero = float(left[i0])

    return TruncationWindow(x_zero=x_zero, x_inf=x_inf, delta=delta, eps=eps)

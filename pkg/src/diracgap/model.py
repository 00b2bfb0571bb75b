"""Coefficient families for singular planar Dirac systems on the half-line.

The linear operator acts as tau z = J z' + P(x) z on (0, infinity), with J the
standard symplectic matrix and P(x) a continuous symmetric 2x2 matrix.  This
module builds P for the radial Dirac operator (electrostatic potential V,
angular number k, anomalous moment mu_a), classifies the singularity at the
origin, verifies the admissibility hypotheses numerically, and constructs the
nonlinear self-couplings S(x, z) used by the bifurcation solver.

Admissibility in short: P(x) tends to diag(mu_minus, mu_plus) at infinity with
an integrable remainder, x^beta P(x) tends to a limit matrix at the origin with
an integrable weighted remainder, and that limit matrix has determinant below
-1/4 (beta = 1) or below 0 (beta > 1).  The determinant condition is what makes
the origin limit point, so that boundary data there is unique.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.interpolate import CubicSpline


class MissingDerivativeError(ValueError):
    """The potential cannot supply V' but the construction needs it."""


class GridTooCoarseError(ValueError):
    """Sampling grid has fewer points per decade than the checks require."""


class CouplingRejectedError(ValueError):
    """Nonlinear coupling fails the envelope boundedness/decay conditions."""


# ---------------------------------------------------------------------------
# Potentials
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PotentialSpec:
    """Electrostatic potential with declared endpoint behaviour.

    The potential is described by its leading power terms at the two
    endpoints, V ~ gamma_zero / x^alpha_zero near 0 and
    V ~ gamma_inf / x^alpha_inf near infinity, plus optional remainder
    evaluators.  ``kind`` is one of "pure-coulomb", "coulomb-with-remainder"
    or "tabulated".
    """

    kind: str
    gamma_zero: float
    alpha_zero: float
    gamma_inf: float
    alpha_inf: float
    remainder_zero: Optional[Callable[[float], float]] = None   # on (0, 1]
    remainder_inf: Optional[Callable[[float], float]] = None    # on [1, inf)
    d_remainder_zero: Optional[Callable[[float], float]] = None
    d_remainder_inf: Optional[Callable[[float], float]] = None

    def __post_init__(self):
        if self.alpha_zero <= 0 or self.alpha_inf <= 0:
            raise ValueError("endpoint exponents must be positive")
        if self.kind not in ("pure-coulomb", "coulomb-with-remainder", "tabulated"):
            raise ValueError(f"unknown potential kind {self.kind!r}")

    # -- evaluation ---------------------------------------------------------

    def v(self, x: float) -> float:
        """Potential value, assembled from the side-appropriate decomposition."""
        if x <= 1.0:
            lead = self.gamma_zero * x ** (-self.alpha_zero)
            return lead + (self.remainder_zero(x) if self.remainder_zero else 0.0)
        lead = self.gamma_inf * x ** (-self.alpha_inf)
        return lead + (self.remainder_inf(x) if self.remainder_inf else 0.0)

    @property
    def has_derivative(self) -> bool:
        if self.kind == "pure-coulomb":
            return True
        left = self.remainder_zero is None or self.d_remainder_zero is not None
        right = self.remainder_inf is None or self.d_remainder_inf is not None
        return left and right

    def dv(self, x: float) -> float:
        if not self.has_derivative:
            raise MissingDerivativeError(
                "potential remainder derivative not supplied")
        if x <= 1.0:
            lead = -self.alpha_zero * self.gamma_zero * x ** (-self.alpha_zero - 1.0)
            return lead + (self.d_remainder_zero(x) if self.d_remainder_zero else 0.0)
        lead = -self.alpha_inf * self.gamma_inf * x ** (-self.alpha_inf - 1.0)
        return lead + (self.d_remainder_inf(x) if self.d_remainder_inf else 0.0)

    def remainder_at_zero(self, x: float) -> float:
        """V(x) - gamma_zero * x**(-alpha_zero), the remainder near the origin."""
        if self.remainder_zero is not None:
            return self.remainder_zero(x)
        if self.kind == "pure-coulomb":
            return 0.0
        return self.v(x) - self.gamma_zero * x ** (-self.alpha_zero)

    def remainder_at_inf(self, x: float) -> float:
        if self.remainder_inf is not None:
            return self.remainder_inf(x)
        if self.kind == "pure-coulomb":
            return 0.0
        return self.v(x) - self.gamma_inf * x ** (-self.alpha_inf)

    def d_remainder_at_zero(self, x: float) -> float:
        if self.d_remainder_zero is not None:
            return self.d_remainder_zero(x)
        if self.kind == "pure-coulomb":
            return 0.0
        return self.dv(x) + self.alpha_zero * self.gamma_zero * x ** (-self.alpha_zero - 1.0)


def coulomb_potential(gamma: float) -> PotentialSpec:
    """V(x) = gamma / x with no remainder on either side."""
    return PotentialSpec("pure-coulomb", gamma, 1.0, gamma, 1.0)


def coulomb_with_remainder(
    gamma_zero: float,
    alpha_zero: float,
    gamma_inf: float,
    alpha_inf: float,
    remainder_zero: Callable[[float], float],
    remainder_inf: Callable[[float], float],
    d_remainder_zero: Optional[Callable[[float], float]] = None,
    d_remainder_inf: Optional[Callable[[float], float]] = None,
) -> PotentialSpec:
    """Leading power terms plus user-supplied remainder evaluators.

    The two decompositions must describe the same potential; the mismatch at
    the seam x = 1 is checked and rejected beyond 1e-9.
    """
    spec = PotentialSpec("coulomb-with-remainder", gamma_zero, alpha_zero,
                         gamma_inf, alpha_inf, remainder_zero, remainder_inf,
                         d_remainder_zero, d_remainder_inf)
    left = spec.gamma_zero + remainder_zero(1.0)
    right = spec.gamma_inf + remainder_inf(1.0)
    if abs(left - right) > 1e-9 * (1.0 + abs(left)):
        raise ValueError(
            f"potential decompositions disagree at x=1: {left} vs {right}")
    return spec


def tabulated_potential(
    x: Sequence[float],
    v: Sequence[float],
    gamma_zero: float,
    alpha_zero: float,
    gamma_inf: float,
    alpha_inf: float,
) -> PotentialSpec:
    """Cubic-spline interpolant on a log-x grid with declared endpoint powers.

    Outside the tabulated range the declared leading terms continue the
    potential.  The abscissae must be strictly increasing and positive.
    """
    xs = np.asarray(x, dtype=float)
    vs = np.asarray(v, dtype=float)
    if xs.ndim != 1 or xs.shape != vs.shape or xs.size < 4:
        raise ValueError("tabulated potential needs matching 1-d arrays, >= 4 points")
    if np.any(xs <= 0.0) or np.any(np.diff(xs) <= 0.0):
        raise ValueError("tabulated abscissae must be positive and strictly increasing")
    logx = np.log(xs)
    spline = CubicSpline(logx, vs)
    dspline = spline.derivative()
    lo, hi = xs[0], xs[-1]

    def v_eval(t: float) -> float:
        if t < lo:
            return gamma_zero * t ** (-alpha_zero)
        if t > hi:
            return gamma_inf * t ** (-alpha_inf)
        return float(spline(math.log(t)))

    def dv_eval(t: float) -> float:
        if t < lo:
            return -alpha_zero * gamma_zero * t ** (-alpha_zero - 1.0)
        if t > hi:
            return -alpha_inf * gamma_inf * t ** (-alpha_inf - 1.0)
        return float(dspline(math.log(t))) / t

    def r_zero(t: float) -> float:
        return v_eval(t) - gamma_zero * t ** (-alpha_zero)

    def r_inf(t: float) -> float:
        return v_eval(t) - gamma_inf * t ** (-alpha_inf)

    def dr_zero(t: float) -> float:
        return dv_eval(t) + alpha_zero * gamma_zero * t ** (-alpha_zero - 1.0)

    def dr_inf(t: float) -> float:
        return dv_eval(t) + alpha_inf * gamma_inf * t ** (-alpha_inf - 1.0)

    return PotentialSpec("tabulated", gamma_zero, alpha_zero, gamma_inf,
                         alpha_inf, r_zero, r_inf, dr_zero, dr_inf)


def tabulated_potential_from_csv(path, gamma_zero, alpha_zero, gamma_inf, alpha_inf):
    """Read a two-column CSV (x, V(x)); an optional single header row is skipped."""
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p for p in line.replace(",", " ").split() if p]
            try:
                rows.append((float(parts[0]), float(parts[1])))
            except (ValueError, IndexError):
                if not rows:
                    continue    # header row
                raise ValueError(f"malformed table row: {line!r}")
    if len(rows) < 4:
        raise ValueError("potential table needs at least 4 rows")
    xs, vs = zip(*rows)
    return tabulated_potential(xs, vs, gamma_zero, alpha_zero, gamma_inf, alpha_inf)


# ---------------------------------------------------------------------------
# Coefficient families
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DiracRadialParams:
    """Radial Dirac data: angular number k != 0, anomalous moment, potential."""

    k: int
    mu_a: float
    potential: PotentialSpec

    def __post_init__(self):
        if self.k == 0:
            raise ValueError("angular quantum number k must be nonzero")


@dataclass(frozen=True)
class CoefficientFamily:
    """Symmetric coefficient matrix P(x) together with its endpoint data.

    ``coeffs(x)`` returns the scalar triple (p11, p12, p22); ``matrix(x)``
    assembles the symmetric 2x2 array with bit-identical off-diagonal entries.
    ``limit_zero`` is the limit of x**beta * P(x) at the origin, and the limit
    at infinity is diag(mu_minus, mu_plus).  Evaluators are pure, so a family
    may be shared read-only across concurrent computations.
    """

    coeffs: Callable[[float], tuple]
    mu_minus: float
    mu_plus: float
    beta: float
    limit_zero: np.ndarray
    q_zero: float = 2.0
    q_inf: float = 2.0
    dirac: Optional[DiracRadialParams] = None

    def __post_init__(self):
        if not self.mu_minus < self.mu_plus:
            raise ValueError("gap edges must satisfy mu_minus < mu_plus")
        if self.beta < 1.0:
            raise ValueError("singularity exponent beta must be >= 1")
        if min(self.q_zero, self.q_inf) < 1.0:
            raise ValueError("integrability exponents must be >= 1")
        object.__setattr__(self, "limit_zero",
                           np.array(self.limit_zero, dtype=float))

    def matrix(self, x: float) -> np.ndarray:
        p11, p12, p22 = self.coeffs(x)
        return np.array([[p11, p12], [p12, p22]])

    @property
    def limit_inf(self) -> np.ndarray:
        return np.diag([self.mu_minus, self.mu_plus])

    @property
    def gap(self) -> tuple:
        return (self.mu_minus, self.mu_plus)

    def remainder_zero(self, x: float) -> np.ndarray:
        """x**beta * P(x) - limit_zero."""
        w = x ** self.beta
        p11, p12, p22 = self.coeffs(x)
        l = self.limit_zero
        return np.array([[w * p11 - l[0, 0], w * p12 - l[0, 1]],
                         [w * p12 - l[1, 0], w * p22 - l[1, 1]]])

    def remainder_inf(self, x: float) -> np.ndarray:
        p11, p12, p22 = self.coeffs(x)
        return np.array([[p11 - self.mu_minus, p12], [p12, p22 - self.mu_plus]])

    def remainder_zero_norm(self, x: float) -> float:
        return float(np.linalg.norm(self.remainder_zero(x), 2))

    def remainder_inf_norm(self, x: float) -> float:
        return float(np.linalg.norm(self.remainder_inf(x), 2))


def build_dirac_family(params: DiracRadialParams) -> CoefficientFamily:
    """Radial Dirac coefficient matrix for the given potential, k and mu_a.

    Entries: p11 = -1 + V, p12 = -k/x - mu_a V', p22 = 1 + V.  The gap edges
    are -1 and 1.  Without an anomalous moment the origin data is beta = 1 and
    limit matrix [[gamma0, -k], [-k, gamma0]]; with mu_a != 0 the derivative
    coupling regularises the origin, beta = alpha0 + 1 and the limit matrix is
    purely off-diagonal with entry mu_a * alpha0 * gamma0.
    """
    pot = params.potential
    k = float(params.k)
    mu_a = params.mu_a
    if mu_a != 0.0 and not pot.has_derivative:
        raise MissingDerivativeError(
            "anomalous moment coupling needs the potential derivative")

    if mu_a == 0.0:
        def coeffs(x: float, _k=k, _v=pot.v) -> tuple:
            v = _v(x)
            off = -_k / x
            return (-1.0 + v, off, 1.0 + v)
        beta = 1.0
        limit = np.array([[pot.gamma_zero, -k], [-k, pot.gamma_zero]])
        q_zero = 2.0
    else:
        def coeffs(x: float, _k=k, _a=mu_a, _v=pot.v, _dv=pot.dv) -> tuple:
            v = _v(x)
            off = -_k / x - _a * _dv(x)
            return (-1.0 + v, off, 1.0 + v)
        beta = pot.alpha_zero + 1.0
        c = mu_a * pot.alpha_zero * pot.gamma_zero
        limit = np.array([[0.0, c], [c, 0.0]])
        q_zero = max(2.0, pot.alpha_zero + 1.0)

    q_inf = 1.0 + 1.0 / pot.alpha_inf
    return CoefficientFamily(coeffs=coeffs, mu_minus=-1.0, mu_plus=1.0,
                             beta=beta, limit_zero=limit, q_zero=q_zero,
                             q_inf=q_inf, dirac=params)


def mirror_family(family: CoefficientFamily) -> CoefficientFamily:
    """Family with the spectrum reflected through zero.

    The substitution (u, v) -> (v, u), lam -> -lam turns solutions of the
    original system into solutions of the system with coefficient matrix
    [[-p22, -p12], [-p12, -p11]].  The gap edges become (-mu_plus, -mu_minus),
    so statements about the upper edge of the mirrored family translate to the
    lower edge of the original one.
    """
    base = family.coeffs

    def coeffs(x: float) -> tuple:
        p11, p12, p22 = base(x)
        return (-p22, -p12, -p11)

    l = family.limit_zero
    limit = np.array([[-l[1, 1], -l[0, 1]], [-l[1, 0], -l[0, 0]]])
    return CoefficientFamily(coeffs=coeffs, mu_minus=-family.mu_plus,
                             mu_plus=-family.mu_minus, beta=family.beta,
                             limit_zero=limit, q_zero=family.q_zero,
                             q_inf=family.q_inf)


# ---------------------------------------------------------------------------
# Origin classification and hypothesis verification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ZeroClassification:
    """Origin singularity data and the admissibility verdict."""

    beta: float
    limit_zero: np.ndarray
    det_limit: float
    delta_star: float           # -det of the limit matrix
    admissible: bool
    note: str


def classify_zero_endpoint(family: CoefficientFamily) -> ZeroClassification:
    """Decide whether the origin is strongly enough singular to be limit point.

    Admissible means det(limit_zero) < -1/4 for beta = 1, or < 0 for beta > 1.
    An admissible origin pins the boundary data there to the single decaying
    direction (the operator has a unique self-adjoint realization), which is
    what the whole angle machinery downstream relies on.  Inadmissible input
    is a reported outcome, not an error.
    """
    det = float(np.linalg.det(family.limit_zero))
    if family.beta == 1.0:
        admissible = det < -0.25
        bound = "-1/4"
    else:
        admissible = det < 0.0
        bound = "0"
    if admissible:
        note = (f"det {det:.6g} < {bound}: origin is limit point, boundary "
                "direction there is unique")
    else:
        note = (f"det {det:.6g} >= {bound}: origin classification fails, "
                "boundary data at zero would not be unique")
    return ZeroClassification(beta=family.beta, limit_zero=family.limit_zero,
                              det_limit=det, delta_star=-det,
                              admissible=admissible, note=note)


@dataclass(frozen=True)
class SampleGrid:
    """Log-uniform sampling grid covering both endpoint regions."""

    x_min: float = 1e-6
    x_max: float = 1e6
    per_decade: int = 24

    def points(self) -> np.ndarray:
        lo = math.log10(self.x_min)
        hi = math.log10(self.x_max)
        n = int(round((hi - lo) * self.per_decade)) + 1
        return np.logspace(lo, hi, n)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    measured: float
    threshold: float
    detail: str = ""


@dataclass(frozen=True)
class HypothesisReport:
    checks: tuple
    passed: bool

    def failed_names(self) -> list:
        return [c.name for c in self.checks if not c.passed]


def _decade_maxima(xs: np.ndarray, vals: np.ndarray) -> list:
    """Max of |vals| per decade of xs (xs ascending)."""
    out = []
    exps = np.floor(np.log10(xs) + 1e-12).astype(int)
    for e in range(exps.min(), exps.max() + 1):
        mask = exps == e
        if mask.any():
            out.append(float(np.max(np.abs(vals[mask]))))
    return out


def _fit_log_slope(xs: np.ndarray, vals: np.ndarray) -> tuple:
    """Least-squares fit of log|vals| ~ c + s*log(xs); returns (s, c)."""
    mask = np.abs(vals) > 1e-300
    if mask.sum() < 3:
        return 0.0, -math.inf
    s, c = np.polyfit(np.log(xs[mask]), np.log(np.abs(vals[mask])), 1)
    return float(s), float(c)


def validate_hypotheses(family: CoefficientFamily,
                        grid: Optional[SampleGrid] = None) -> HypothesisReport:
    """Numerically verify the admissibility hypotheses on a sampling grid.

    Checks, each reported with the measured quantity: convergence of
    x**beta P(x) to its origin limit, convergence of P(x) to the gap-edge
    diagonal at infinity, finiteness of the two weighted remainder integrals
    (finite quadrature plus a tail/head bound extrapolated from the fitted
    leading exponents), the determinant condition at the origin, and, for
    radial Dirac input, the potential endpoint conditions.  These are sampled
    surrogates for hypotheses the theory assumes rather than proves.
    """
    grid = grid or SampleGrid()
    if grid.per_decade < 16:
        raise GridTooCoarseError(
            f"need >= 16 points per decade, got {grid.per_decade}")
    if not grid.x_min < 1.0 < grid.x_max:
        raise ValueError("sampling grid must cover both endpoint regions "
                         "(x_min < 1 < x_max)")
    xs = grid.points()
    left = xs[xs <= 1.0]
    right = xs[xs >= 1.0]
    checks = []

    # convergence of x^beta P(x) at the origin
    r0 = np.array([family.remainder_zero_norm(x) for x in left])
    scale0 = 1.0 + float(np.linalg.norm(family.limit_zero, 2))
    dec0 = _decade_maxima(left, r0)
    conv0 = dec0[0] < 1e-2 * scale0 and dec0[0] <= dec0[min(2, len(dec0) - 1)] + 1e-300
    checks.append(CheckResult("origin-limit", conv0, dec0[0], 1e-2 * scale0,
                              "max |x^beta P - limit| over the smallest decade"))

    # convergence of P(x) at infinity
    rinf = np.array([family.remainder_inf_norm(x) for x in right])
    decinf = _decade_maxima(right, rinf)
    scale_inf = 1.0 + max(abs(family.mu_minus), abs(family.mu_plus))
    convinf = decinf[-1] < 1e-2 * scale_inf and decinf[-1] <= decinf[max(-3, -len(decinf))] + 1e-300
    checks.append(CheckResult("infinity-limit", convinf, decinf[-1], 1e-2 * scale_inf,
                              "max |P - diag(mu-, mu+)| over the largest decade"))

    # integral of |remainder at infinity|^q_inf over [1, inf)
    integrand = rinf ** family.q_inf
    partial = float(np.trapezoid(integrand * right, np.log(right)))
    s_inf, c_inf = _fit_log_slope(right[right >= right[-1] / 10.0],
                                  rinf[right >= right[-1] / 10.0])
    p = -s_inf
    if decinf[-1] < 1e-13:
        tail, tail_ok = 0.0, True
    elif p * family.q_inf > 1.0:
        tail = math.exp(c_inf * family.q_inf) * right[-1] ** (1.0 - p * family.q_inf) \
            / (p * family.q_inf - 1.0)
        tail_ok = True
    else:
        tail, tail_ok = math.inf, False
    checks.append(CheckResult("infinity-integral", tail_ok and math.isfinite(partial + tail),
                              partial + tail, math.inf,
                              f"quadrature {partial:.3g} + extrapolated tail {tail:.3g}, "
                              f"fitted decay exponent {p:.3g}"))

    # integral of x^-beta |remainder at zero|^q_zero over (0, 1]
    integrand0 = left ** (-family.beta) * r0 ** family.q_zero
    partial0 = float(np.trapezoid(integrand0 * left, np.log(left)))
    mask_head = left <= left[0] * 10.0
    s0, c0 = _fit_log_slope(left[mask_head], r0[mask_head])
    head_exp = -family.beta + s0 * family.q_zero
    if dec0[0] < 1e-13:
        head, head_ok = 0.0, True
    elif head_exp > -1.0:
        head = math.exp(c0 * family.q_zero) * left[0] ** (head_exp + 1.0) / (head_exp + 1.0)
        head_ok = True
    else:
        head, head_ok = math.inf, False
    checks.append(CheckResult("origin-integral", head_ok and math.isfinite(partial0 + head),
                              partial0 + head, math.inf,
                              f"quadrature {partial0:.3g} + extrapolated head {head:.3g}, "
                              f"fitted growth exponent {s0:.3g}"))

    # determinant condition
    cls = classify_zero_endpoint(family)
    bound = -0.25 if family.beta == 1.0 else 0.0
    checks.append(CheckResult("origin-determinant", cls.admissible,
                              cls.det_limit, bound, cls.note))

    # potential endpoint conditions for radial Dirac input
    if family.dirac is not None:
        checks.extend(_potential_checks(family.dirac, left))

    return HypothesisReport(checks=tuple(checks),
                            passed=all(c.passed for c in checks))


def _potential_checks(params: DiracRadialParams, left: np.ndarray) -> list:
    pot = params.potential
    k2 = float(params.k) ** 2
    out = []
    if params.mu_a == 0.0:
        out.append(CheckResult("potential-origin-exponent",
                               abs(pot.alpha_zero - 1.0) < 1e-12,
                               pot.alpha_zero, 1.0,
                               "mu_a = 0 requires a Coulomb-order origin exponent"))
        rv = np.array([abs(left[i] * pot.remainder_at_zero(left[i]))
                       for i in range(left.size)])
        dec = _decade_maxima(left, rv)
        ok = dec[0] < max(1e-6, 1e-3 * (1.0 + abs(pot.gamma_zero)))
        out.append(CheckResult("potential-origin-remainder", ok, dec[0],
                               max(1e-6, 1e-3 * (1.0 + abs(pot.gamma_zero))),
                               "x * remainder must vanish at the origin"))
        bound = k2 - 0.25
        out.append(CheckResult("potential-coupling-bound",
                               pot.gamma_zero ** 2 < bound,
                               pot.gamma_zero ** 2, bound,
                               "gamma0^2 < k^2 - 1/4"))
    else:
        out.append(CheckResult("potential-coupling-nonzero",
                               pot.gamma_zero != 0.0, pot.gamma_zero, 0.0,
                               "mu_a != 0 requires gamma0 != 0"))
        rv = np.array([abs(left[i] ** pot.alpha_zero * pot.remainder_at_zero(left[i]))
                       for i in range(left.size)])
        dec = _decade_maxima(left, rv)
        thr = max(1e-6, 1e-3 * (1.0 + abs(pot.gamma_zero)))
        out.append(CheckResult("potential-origin-remainder", dec[0] < thr,
                               dec[0], thr,
                               "x^alpha0 * remainder must vanish at the origin"))
        drv = np.array([abs(left[i] ** (pot.alpha_zero + 1.0) * pot.d_remainder_at_zero(left[i]))
                        for i in range(left.size)])
        decd = _decade_maxima(left, drv)
        out.append(CheckResult("potential-origin-remainder-derivative",
                               decd[0] < thr, decd[0], thr,
                               "x^(alpha0+1) * remainder' must vanish at the origin"))
    return out


# ---------------------------------------------------------------------------
# Nonlinear couplings
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NonlinearCoupling:
    """Symmetric matrix coupling S(x, z) with envelope bound data.

    ``entries(x, u, v)`` returns (s11, s12, s22).  The envelope satisfies
    |S_ij(x, z)| <= alpha(x) * eta_ij(z) with eta vanishing at z = 0, alpha
    bounded and decaying at infinity.
    """

    entries: Callable[[float, float, float], tuple]
    alpha: Callable[[float], float]
    eta_diag: Callable[[float, float], float]
    eta_off: Callable[[float, float], float]
    f: Callable[[float], float]
    gamma_fn: Callable[[float], float]
    lipschitz_bound: float
    angular_constant: float = 4.0 * math.pi

    def matrix(self, x: float, z) -> np.ndarray:
        s11, s12, s22 = self.entries(x, float(z[0]), float(z[1]))
        return np.array([[s11, s12], [s12, s22]])


def zero_coupling() -> NonlinearCoupling:
    """The trivial coupling S = 0 (turns the solver into the linear problem)."""
    return NonlinearCoupling(
        entries=lambda x, u, v: (0.0, 0.0, 0.0),
        alpha=lambda x: 0.0,
        eta_diag=lambda u, v: 0.0,
        eta_off=lambda u, v: 0.0,
        f=lambda s: 0.0,
        gamma_fn=lambda r: 0.0,
        lipschitz_bound=0.0,
    )


def build_soler_coupling(
    gamma: Callable[[float], float],
    f: Callable[[float], float],
    lipschitz_bound: float,
    angular_constant: float = 4.0 * math.pi,
) -> NonlinearCoupling:
    """Self-coupling S(r, z) = gamma(r) F((u^2 - v^2) / (c r^2)) diag(1, -1).

    c is the angular normalization constant (4*pi by default, exposed as a
    knob).  Requires |F(s)| <= C|s| with C = lipschitz_bound, gamma continuous;
    the induced envelope alpha(r) = C*gamma(r)/(c r^2) must be bounded near
    the origin (gamma = O(r^2)) and decay at infinity, and r^2 gamma(r) must
    vanish at infinity.  Violations raise CouplingRejectedError.
    """
    if lipschitz_bound <= 0.0:
        raise ValueError("lipschitz_bound must be positive")
    c = angular_constant

    def alpha(r: float) -> float:
        return lipschitz_bound * abs(gamma(r)) / (c * r * r)

    rs = np.logspace(-8, 8, 16 * 17)
    avals = np.array([alpha(r) for r in rs])
    if not np.all(np.isfinite(avals)):
        raise CouplingRejectedError("envelope is not finite on the sampled grid")
    head = rs <= rs[0] * 10.0
    slope0, _ = _fit_log_slope(rs[head], avals[head])
    if np.max(avals[head]) > 1e-12 and slope0 < -0.05:
        raise CouplingRejectedError(
            f"envelope grows like r^{slope0:.2f} near the origin "
            "(coupling weight is not O(r^2) there)")
    peak = float(np.max(avals))
    if peak > 0.0 and avals[-1] > 1e-3 * peak:
        raise CouplingRejectedError("envelope does not decay at infinity")
    r2g = np.array([rs[i] ** 2 * abs(gamma(rs[i])) for i in range(rs.size)
                    if rs[i] >= 1.0])
    if r2g.size and np.max(r2g) > 0.0 and r2g[-1] > 1e-3 * np.max(r2g):
        raise CouplingRejectedError("r^2 * gamma(r) does not vanish at infinity")

    def entries(x: float, u: float, v: float) -> tuple:
        s = gamma(x) * f((u * u - v * v) / (c * x * x))
        return (s, 0.0, -s)

    return NonlinearCoupling(
        entries=entries,
        alpha=alpha,
        eta_diag=lambda u, v: abs(u * u - v * v),
        eta_off=lambda u, v: 0.0,
        f=f,
        gamma_fn=gamma,
        lipschitz_bound=lipschitz_bound,
        angular_constant=c,
    )

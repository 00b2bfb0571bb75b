"""Angle/amplitude and raw Cartesian integration of the planar system.

In polar coordinates u = rho cos(theta), v = rho sin(theta) the system
J z' + P(x) z = lam z decouples into

    theta'   = (lam - p11) cos^2 - 2 p12 cos sin + (lam - p22) sin^2
    logrho'  = p12 (cos^2 - sin^2) + (p22 - p11) sin cos

The angle is integrated as an ODE, never rebuilt from atan2 branch fixing, so
the winding count is exact.  Near the origin the coefficients blow up like
x^-beta; the left part of the window is therefore integrated in a transformed
variable, log x for beta = 1 and x^(1-beta) for beta > 1, in which the flow is
asymptotically autonomous.  The module picks the chart automatically.

The raw Cartesian path integrates z' = J^{-1}(lam Id - P) z, renormalizing z
back to unit size whenever its norm leaves [1e-150, 1e150] and accumulating
the discarded scale in a log; it serves as an independent cross-check of the
polar formulation and as the engine for the nonlinear shooting solver.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import solve_ivp

from .asymptotics import TruncationWindow
from .model import CoefficientFamily, NonlinearCoupling

DEFAULT_RTOL = 1e-10
DEFAULT_ATOL = 1e-12
_RENORM_LOG = 150.0 * math.log(10.0)       # keep double-precision headroom
_OVERFLOW_LOG = 100.0 * math.log(10.0)     # abort bound for amplitude-true runs


class IntegrationError(RuntimeError):
    """Step-size underflow or tolerance failure; carries the last x reached."""

    def __init__(self, message: str, x_reached: float):
        super().__init__(f"{message} (last x reached: {x_reached:g})")
        self.x_reached = x_reached


class OverflowAbort(IntegrationError):
    """Amplitude left the representable range in an amplitude-true run."""


class _EvalBudgetExceeded(Exception):
    def __init__(self, s: float):
        self.s = s


def prufer_rhs(p: np.ndarray, lam: float, theta: float) -> tuple:
    """Angle and log-amplitude derivatives for coefficient matrix p at theta."""
    p = np.asarray(p, dtype=float)
    return _rhs_core(p[0, 0], p[0, 1], p[1, 1], lam, theta)


def _rhs_core(p11: float, p12: float, p22: float, lam: float, theta: float) -> tuple:
    ct = math.cos(theta)
    st = math.sin(theta)
    dtheta = (lam - p11) * ct * ct - 2.0 * p12 * ct * st + (lam - p22) * st * st
    dlogrho = p12 * (ct * ct - st * st) + (p22 - p11) * st * ct
    return dtheta, dlogrho


# ---------------------------------------------------------------------------
# Charts and window segmentation
# ---------------------------------------------------------------------------

class _Chart:
    """Monotone reparametrization x = x(s) of part of the window."""

    kind = "identity"

    def to_s(self, x: float) -> float:
        return x

    def to_x(self, s: float) -> float:
        return s

    def dx_ds(self, s: float) -> float:
        return 1.0


class _LogChart(_Chart):
    kind = "log"

    def to_s(self, x):
        return math.log(x)

    def to_x(self, s):
        return math.exp(s)

    def dx_ds(self, s):
        return math.exp(s)


class _PowerChart(_Chart):
    """s = x^(1-beta) for beta > 1; s is decreasing in x."""

    kind = "power"

    def __init__(self, beta: float):
        self.beta = beta

    def to_s(self, x):
        return x ** (1.0 - self.beta)

    def to_x(self, s):
        return s ** (1.0 / (1.0 - self.beta))

    def dx_ds(self, s):
        x = self.to_x(s)
        return x ** self.beta / (1.0 - self.beta)


def _segments(window: TruncationWindow, beta: float, direction: str,
              x_stop: Optional[float]) -> list:
    """Ordered (chart, x_from, x_to) pieces covering the requested span."""
    if direction == "forward":
        a, b = window.x_zero, window.x_inf if x_stop is None else x_stop
    elif direction == "backward":
        a, b = window.x_inf, window.x_zero if x_stop is None else x_stop
    else:
        raise ValueError(f"direction must be forward or backward, got {direction!r}")
    if not (window.x_zero <= min(a, b) and max(a, b) <= window.x_inf) or a == b:
        raise ValueError("integration span must be a nontrivial part of the window")

    left_chart = _LogChart() if beta == 1.0 else _PowerChart(beta)
    lo, hi = min(a, b), max(a, b)
    pieces = []
    if lo < 1.0:
        pieces.append((left_chart, lo, min(hi, 1.0)))
    if hi > 1.0:
        pieces.append((_Chart(), max(lo, 1.0), hi))
    if direction == "backward":
        pieces = [(c, x1, x0) for (c, x0, x1) in reversed(pieces)]
    else:
        pieces = [(c, x0, x1) for (c, x0, x1) in pieces]
    return pieces


@dataclass
class _Piece:
    chart: _Chart
    sol: object                # scipy OdeSolution in the chart variable
    x_lo: float
    x_hi: float


def _locate(pieces: list, x: float) -> _Piece:
    for p in pieces:
        if p.x_lo - 1e-300 <= x <= p.x_hi * (1.0 + 1e-12) + 1e-300:
            return p
    # tolerate roundoff just outside the covered span
    ends = [(min(abs(x - p.x_lo), abs(x - p.x_hi)), p) for p in pieces]
    dist, p = min(ends, key=lambda t: t[0])
    if dist <= 1e-9 * max(1.0, abs(x)):
        return p
    raise ValueError(f"x = {x:g} outside the integrated span")


# ---------------------------------------------------------------------------
# Angle/log-amplitude trajectories
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PruferState:
    x: float
    theta: float
    logrho: float


@dataclass
class IntegratorStats:
    steps: int
    rejected_steps: int        # estimated from evaluation counts
    nfev: int
    rtol: float
    atol: float


@dataclass
class PruferTrajectory:
    """Dense, continuously unwrapped angle trajectory over (part of) a window.

    ``theta`` and ``logrho`` are queryable at arbitrary x in the integrated
    span; ``x_end``/``theta_end``/``logrho_end`` give the terminal values.
    Immutable after construction (fields are never reassigned), so instances
    can be shared across threads.
    """

    lam: float
    direction: str
    window: TruncationWindow
    x_start: float
    x_end: float
    stats: IntegratorStats
    _pieces: list = field(repr=False)

    def _eval(self, x: float) -> tuple:
        p = _locate(self._pieces, x)
        y = p.sol(p.chart.to_s(min(max(x, p.x_lo), p.x_hi)))
        return float(y[0]), float(y[1])

    def theta(self, x: float) -> float:
        return self._eval(x)[0]

    def logrho(self, x: float) -> float:
        return self._eval(x)[1]

    def state(self, x: float) -> PruferState:
        th, lr = self._eval(x)
        return PruferState(x=x, theta=th, logrho=lr)

    @property
    def theta_end(self) -> float:
        return self._eval(self.x_end)[0]

    @property
    def logrho_end(self) -> float:
        return self._eval(self.x_end)[1]

    def z(self, x: float, logrho_offset: float = 0.0) -> tuple:
        """Reconstruct (u, v) = e^(logrho + offset) (cos theta, sin theta)."""
        th, lr = self._eval(x)
        r = math.exp(lr + logrho_offset)
        return (r * math.cos(th), r * math.sin(th))


_DOP853_STAGES = 12
_DENSE_EXTRA = 3


def _run_segments(rhs_in_x: Callable, y0, segments: list, rtol: float,
                  atol: float) -> tuple:
    """Integrate over ordered chart segments; returns (pieces, y_end, stats)."""
    pieces = []
    y = np.array(y0, dtype=float)
    nfev = 0
    steps = 0
    for chart, x_from, x_to in segments:
        s0, s1 = chart.to_s(x_from), chart.to_s(x_to)

        def rhs(s, yy, _c=chart):
            j = _c.dx_ds(s)
            dy = rhs_in_x(_c.to_x(s), yy)
            return [d * j for d in dy]

        res = solve_ivp(rhs, (s0, s1), y, method="DOP853", rtol=rtol,
                        atol=atol, dense_output=True)
        if res.status != 0:
            raise IntegrationError(res.message, chart.to_x(res.t[-1]))
        pieces.append(_Piece(chart=chart, sol=res.sol,
                             x_lo=min(x_from, x_to), x_hi=max(x_from, x_to)))
        y = res.y[:, -1]
        nfev += res.nfev
        steps += len(res.t) - 1
    attempts = max(steps, (nfev - len(segments) - _DENSE_EXTRA * steps) // _DOP853_STAGES)
    stats = IntegratorStats(steps=steps, rejected_steps=max(0, attempts - steps),
                            nfev=nfev, rtol=rtol, atol=atol)
    return pieces, y, stats


def integrate_prufer(
    family: CoefficientFamily,
    lam: float,
    window: TruncationWindow,
    theta_init: float,
    direction: str = "forward",
    *,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
    logrho_init: float = 0.0,
    x_stop: Optional[float] = None,
) -> PruferTrajectory:
    """Integrate (theta, logrho) across the window with adaptive embedded RK.

    ``direction`` chooses the starting end; ``x_stop`` truncates the run at an
    interior point (used by the midpoint-matching solver).  The returned
    trajectory supports dense queries anywhere in the integrated span.
    """
    if not math.isfinite(theta_init):
        raise ValueError("theta_init must be finite")
    coeffs = family.coeffs

    def rhs_in_x(x, y):
        p11, p12, p22 = coeffs(x)
        return _rhs_core(p11, p12, p22, lam, y[0])

    segs = _segments(window, family.beta, direction, x_stop)
    pieces, _, stats = _run_segments(rhs_in_x, (theta_init, logrho_init),
                                     segs, rtol, atol)
    x_start = segs[0][1]
    x_end = segs[-1][2]
    return PruferTrajectory(lam=lam, direction=direction, window=window,
                            x_start=x_start, x_end=x_end, stats=stats,
                            _pieces=pieces)


# ---------------------------------------------------------------------------
# Cartesian trajectories with renormalization
# ---------------------------------------------------------------------------

@dataclass
class _Chunk:
    chart: _Chart
    sol: object
    x_lo: float
    x_hi: float
    s_from: float              # chunk orientation in the chart variable
    s_to: float
    log_scale: float           # accumulated renormalization log for this chunk
    scale_in_state: bool = False   # third state component carries the log scale


@dataclass
class CartesianTrajectory:
    """Raw (u, v) trajectory with renormalization log and unwrapped angle.

    ``state(x)`` returns (u, v, log_scale): the actual solution value is
    e^(log_scale) * (u, v).  ``angle(x)`` is the continuously unwrapped polar
    angle, anchored at the initial direction; ``log_norm(x)`` the log of the
    true solution norm.
    """

    lam: float
    direction: str
    window: TruncationWindow
    x_start: float
    x_end: float
    stats: IntegratorStats
    renorm_log: list = field(repr=False)       # (x, log_scale after event)
    _chunks: list = field(repr=False, default_factory=list)
    _node_x: np.ndarray = field(repr=False, default=None)
    _node_angle: np.ndarray = field(repr=False, default=None)

    def _chunk_at(self, x: float) -> _Chunk:
        best, dist = None, math.inf
        for c in self._chunks:
            if c.x_lo * (1.0 - 1e-12) <= x <= c.x_hi * (1.0 + 1e-12):
                return c
            d = min(abs(x - c.x_lo), abs(x - c.x_hi))
            if d < dist:
                best, dist = c, d
        if dist <= 1e-9 * max(1.0, abs(x)):
            return best
        raise ValueError(f"x = {x:g} outside the integrated span")

    def state(self, x: float) -> tuple:
        c = self._chunk_at(x)
        s = c.chart.to_s(min(max(x, c.x_lo), c.x_hi))
        y = c.sol(s)
        if c.scale_in_state:
            return float(y[0]), float(y[1]), float(y[2])
        return float(y[0]), float(y[1]), c.log_scale

    def log_norm(self, x: float) -> float:
        u, v, ls = self.state(x)
        return ls + 0.5 * math.log(u * u + v * v)

    def angle(self, x: float) -> float:
        idx = bisect_right(self._node_x, x if self.direction == "forward" else -x) - 1
        idx = min(max(idx, 0), len(self._node_x) - 1)
        xa = self._node_x[idx] if self.direction == "forward" else -self._node_x[idx]
        base = self._node_angle[idx]
        u0, v0, _ = self.state(xa)
        u1, v1, _ = self.state(x)
        d = math.atan2(v1, u1) - math.atan2(v0, u0)
        d = (d + math.pi) % (2.0 * math.pi) - math.pi
        return base + d

    @property
    def angle_end(self) -> float:
        return float(self._node_angle[-1])


def _unwrap_nodes(chunks: list, direction: str, theta_anchor: float) -> tuple:
    """Unwrapped angle at solver nodes, refined so no jump exceeds pi/2."""
    xs = []
    angs = []

    def raw_angle(c, s):
        y = c.sol(s)
        return math.atan2(y[1], y[0])

    prev_raw = None
    total = theta_anchor
    for c in chunks:
        s_nodes = list(c.sol.ts) if hasattr(c.sol, "ts") else list(c.sol.t)
        # guarantee orientation from s_from to s_to
        s_nodes = sorted({float(s) for s in s_nodes},
                         reverse=bool(c.s_from > c.s_to))
        k = 0
        refined = 0
        while k < len(s_nodes):
            s = s_nodes[k]
            a = raw_angle(c, s)
            if prev_raw is None:
                total = theta_anchor
            else:
                d = a - prev_raw
                d = (d + math.pi) % (2.0 * math.pi) - math.pi
                # Refine intervals where the sampled angle jumps by more than
                # pi/2 so the winding count stays exact.  Refinement is capped:
                # once the amplitude decays to the integrator's absolute noise
                # floor the direction flips through the origin in a single
                # roundoff step and no subdivision can resolve it; the wrapped
                # increment is accepted there (the angle is pure noise anyway).
                if abs(d) > 0.5 * math.pi and k > 0 and refined < 4096:
                    depth = 0
                    lo_s, hi_s = s_nodes[k - 1], s
                    inserted = []
                    resolved = False
                    while depth < 24:
                        mids = 0.5 * (lo_s + hi_s)
                        am = raw_angle(c, mids)
                        dm = (am - prev_raw + math.pi) % (2.0 * math.pi) - math.pi
                        if abs(dm) <= 0.5 * math.pi:
                            inserted.insert(0, mids)
                            resolved = True
                            break
                        hi_s = mids
                        depth += 1
                    if resolved:
                        refined += len(inserted)
                        s_nodes[k:k] = inserted
                        continue
                total += d
            prev_raw = a
            xs.append(c.chart.to_x(s))
            angs.append(total)
            k += 1
    xs = np.array(xs)
    angs = np.array(angs)
    key = xs if direction == "forward" else -xs
    order = np.argsort(key, kind="stable")
    return key[order], angs[order]


def _cartesian_matrix_terms(coeffs, entries, lam):
    """RHS factory for z' = J^{-1}(lam Id - P + S) z, S evaluated at true z."""
    if entries is None:
        def terms(x, zu, zv):
            p11, p12, p22 = coeffs(x)
            return lam - p11, -p12, lam - p22
    else:
        def terms(x, zu, zv):
            p11, p12, p22 = coeffs(x)
            s11, s12, s22 = entries(x, zu, zv)
            return lam - p11 + s11, -p12 + s12, lam - p22 + s22
    return terms


def _integrate_cartesian_engine(
    family: CoefficientFamily,
    lam: float,
    window: TruncationWindow,
    z_init,
    direction: str,
    *,
    coupling: Optional[NonlinearCoupling] = None,
    renormalize: bool = True,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
    x_stop: Optional[float] = None,
    log_scale_init: float = 0.0,
    eval_budget: int = 150_000,
) -> CartesianTrajectory:
    """Two engine modes share this entry point.

    renormalize=True integrates the raw two-component system and rescales the
    state back to unit norm at the representable-range events (the linear
    cross-check path).  renormalize=False integrates the exactly equivalent
    scaled system for z = e^mu w,

        w' = A(x, e^mu w) w - rho w,   mu' = rho,   rho = <w, A w> / <w, w>,

    which keeps the integrated state of unit size over arbitrarily many
    amplitude decades while mu carries the true (meaningful) amplitude; any
    coupling term is evaluated at the true z.  This is the amplitude-true mode
    the nonlinear shooting uses; overflow of the true amplitude aborts.
    """
    z0 = np.array(z_init, dtype=float)
    if not np.any(z0):
        raise ValueError("z_init must be nonzero")
    coeffs = family.coeffs
    entries = coupling.entries if coupling is not None else None
    terms = _cartesian_matrix_terms(coeffs, entries, lam)
    segs = _segments(window, family.beta, direction, x_stop)
    chunks = []
    renorm_log = []
    nfev = 0
    steps = 0

    if renormalize:
        if log_scale_init != 0.0:
            raise ValueError("log_scale_init requires the scaled mode")

        def rhs_in_x(x, y):
            m11, m12, m22 = terms(x, y[0], y[1])
            return (-m12 * y[0] - m22 * y[1], m11 * y[0] + m12 * y[1])

        def too_large(s, y):
            return 0.5 * math.log(y[0] * y[0] + y[1] * y[1]) - _RENORM_LOG
        too_large.terminal = True

        def too_small(s, y):
            return 0.5 * math.log(y[0] * y[0] + y[1] * y[1]) + _RENORM_LOG
        too_small.terminal = True
        events = [too_large, too_small]

        y = z0.copy()
        log_scale = 0.0
        for chart, x_from, x_to in segs:
            s_cur, s_end = chart.to_s(x_from), chart.to_s(x_to)

            def rhs(s, yy, _c=chart):
                j = _c.dx_ds(s)
                du, dv = rhs_in_x(_c.to_x(s), yy)
                return [du * j, dv * j]

            while True:
                res = solve_ivp(rhs, (s_cur, s_end), y, method="DOP853",
                                rtol=rtol, atol=atol, dense_output=True,
                                events=events)
                x_here = chart.to_x(res.t[-1])
                if res.status == -1:
                    raise IntegrationError(res.message, x_here)
                chunks.append(_Chunk(chart=chart, sol=res.sol,
                                     x_lo=min(chart.to_x(s_cur), x_here),
                                     x_hi=max(chart.to_x(s_cur), x_here),
                                     s_from=s_cur, s_to=res.t[-1],
                                     log_scale=log_scale))
                nfev += res.nfev
                steps += len(res.t) - 1
                y = res.y[:, -1].copy()
                if res.status == 0:
                    break
                n = math.hypot(y[0], y[1])
                log_scale += math.log(n)
                y /= n
                renorm_log.append((x_here, log_scale))
                s_cur = res.t[-1]
                if s_cur == s_end:
                    break
    else:
        used = [0]

        def rhs_in_x(x, y):
            # clamped so that trial stages overshooting the overflow bound
            # cannot push the coupling argument into inf/nan territory
            mu = y[2]
            scale = 0.0 if mu <= -700.0 else math.exp(min(mu, 150.0))
            m11, m12, m22 = terms(x, scale * y[0], scale * y[1])
            a1 = -m12 * y[0] - m22 * y[1]
            a2 = m11 * y[0] + m12 * y[1]
            n2 = y[0] * y[0] + y[1] * y[1]
            rho = (y[0] * a1 + y[1] * a2) / n2
            return (a1 - rho * y[0], a2 - rho * y[1], rho)

        def overflow(s, y):
            return y[2] + 0.5 * math.log(y[0] * y[0] + y[1] * y[1]) \
                - _OVERFLOW_LOG
        overflow.terminal = True

        n0 = math.hypot(z0[0], z0[1])
        y = np.array([z0[0] / n0, z0[1] / n0,
                      log_scale_init + math.log(n0)])
        for chart, x_from, x_to in segs:
            s_cur, s_end = chart.to_s(x_from), chart.to_s(x_to)

            def rhs(s, yy, _c=chart):
                # fail fast on near-blowup trajectories instead of letting the
                # step control chase the spike indefinitely
                used[0] += 1
                if used[0] > eval_budget:
                    raise _EvalBudgetExceeded(s)
                j = _c.dx_ds(s)
                dy = rhs_in_x(_c.to_x(s), yy)
                return [d * j for d in dy]

            try:
                res = solve_ivp(rhs, (s_cur, s_end), y, method="DOP853",
                                rtol=rtol, atol=atol, dense_output=True,
                                events=[overflow])
            except _EvalBudgetExceeded as exc:
                raise IntegrationError(
                    "integration work budget exceeded (near-blowup "
                    "trajectory)", chart.to_x(exc.s)) from None
            x_here = chart.to_x(res.t[-1])
            if res.status == -1:
                raise IntegrationError(res.message, x_here)
            if res.status == 1:
                raise OverflowAbort(
                    "amplitude exceeded the representable range; shrink the "
                    "window or the shooting scales", x_here)
            chunks.append(_Chunk(chart=chart, sol=res.sol,
                                 x_lo=min(x_from, x_to),
                                 x_hi=max(x_from, x_to),
                                 s_from=s_cur, s_to=res.t[-1],
                                 log_scale=0.0, scale_in_state=True))
            nfev += res.nfev
            steps += len(res.t) - 1
            y = res.y[:, -1].copy()

    attempts = max(steps, (nfev - len(chunks) - _DENSE_EXTRA * steps) // _DOP853_STAGES)
    stats = IntegratorStats(steps=steps, rejected_steps=max(0, attempts - steps),
                            nfev=nfev, rtol=rtol, atol=atol)
    theta_anchor = math.atan2(z0[1], z0[0])
    traj = CartesianTrajectory(lam=lam, direction=direction, window=window,
                               x_start=segs[0][1], x_end=segs[-1][2],
                               stats=stats, renorm_log=renorm_log,
                               _chunks=chunks)
    node_x, node_angle = _unwrap_nodes(chunks, direction, theta_anchor)
    traj._node_x = node_x
    traj._node_angle = node_angle
    return traj


def integrate_cartesian(
    family: CoefficientFamily,
    lam: float,
    window: TruncationWindow,
    z_init,
    direction: str = "forward",
    *,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
    x_stop: Optional[float] = None,
) -> CartesianTrajectory:
    """Integrate the raw linear system with automatic renormalization."""
    return _integrate_cartesian_engine(family, lam, window, z_init, direction,
                                       coupling=None, renormalize=True,
                                       rtol=rtol, atol=atol, x_stop=x_stop)


def export_trajectory(trajectory: PruferTrajectory, path,
                      n_samples: int = 400) -> None:
    """Write the trajectory as CSV columns x, theta, logrho (for plotting)."""
    lo = min(trajectory.x_start, trajectory.x_end)
    hi = max(trajectory.x_start, trajectory.x_end)
    xs = np.geomspace(lo, hi, n_samples)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("x,theta,logrho\n")
        for x in xs:
            th, lr = trajectory._eval(x)
            fh.write(f"{float(x)!r},{th!r},{lr!r}\n")


# ---------------------------------------------------------------------------
# Residual check
# ---------------------------------------------------------------------------

def ode_residual(trajectory: PruferTrajectory, family: CoefficientFamily,
                 lam: float, sample_count: int) -> float:
    """Max relative defect of the reconstructed solution in the raw system.

    Rebuilds z from the polar data at log-spaced interior samples, forms the
    derivative by fourth-order central differences of the dense output, and
    compares against J^{-1}(lam Id - P) z.  Amplitudes are measured relative
    to the sample point, so renormalization scale never overflows.
    """
    if sample_count <= 0:
        return 0.0
    lo = min(trajectory.x_start, trajectory.x_end)
    hi = max(trajectory.x_start, trajectory.x_end)
    xs = np.logspace(math.log10(lo) + 0.02 * (math.log10(hi) - math.log10(lo)),
                     math.log10(hi) - 0.02 * (math.log10(hi) - math.log10(lo)),
                     sample_count)
    worst = 0.0
    for x in xs:
        # relative step near the singular end, absolute cap where the
        # solution scale is exponential in x
        h = min(1e-3 * x, 0.05)
        th0, lr0 = trajectory._eval(x)

        def zval(xx):
            th, lr = trajectory._eval(xx)
            r = math.exp(lr - lr0)
            return np.array([r * math.cos(th), r * math.sin(th)])

        zm2, zm1, zp1, zp2 = zval(x - 2 * h), zval(x - h), zval(x + h), zval(x + 2 * h)
        dz = (zm2 - 8.0 * zm1 + 8.0 * zp1 - zp2) / (12.0 * h)
        z = zval(x)
        p11, p12, p22 = family.coeffs(x)
        rhs = np.array([p12 * z[0] - (lam - p22) * z[1],
                        (lam - p11) * z[0] - p12 * z[1]])
        denom = max(np.linalg.norm(dz), np.linalg.norm(rhs), 1e-300)
        worst = max(worst, float(np.linalg.norm(dz - rhs)) / denom)
    return worst

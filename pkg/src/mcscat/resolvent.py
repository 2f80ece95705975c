"""Resolvent identities, boundary values, and the exceptional-set scan.

The perturbed resolvent is reached through two sandwiched Fredholm routes:

* block route:      R(z) J (I + T R0(z)) = J R0(z)
* weighted route:   Q R(z) Q* (I + G0(z)) = M Q0 R0(z) Q0*,
  with G0(z) = -(1/z) M0* + (1/z) K Q0 R0(z) Q0*.

Boundary values on the real axis are obtained by evaluating the weighted
route at z = lambda + i*eps over a decreasing schedule and extrapolating.
At finite dimension the literal eps -> 0 limit resolves the discrete
spectrum, so the table is read at the first local minimum of the
correction profile: above the local eigenvalue spacing the samples follow
the smooth continuum expansion in eps and corrections shrink; crossing
the spacing they jump; below it the samples settle onto the resolved
discrete matrix, whose corrections can shrink again even though that
plateau is not the sought limit.  err_est is the accepted correction
norm.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import NearSingularFredholm, NoConvergence, ZeroEnergy
from .linalg import GAP_TOL, adjoint, op_norm
from .model import MultichannelSystem

__all__ = [
    "EPS_FLOOR",
    "Z_FLOOR",
    "SING_THRESH",
    "ResolventPoint",
    "BoundaryValue",
    "ExceptionalScan",
    "geometric_schedule",
    "resolvent_via_fredholm",
    "sandwiched_resolvent",
    "g0_matrix",
    "check_dissipation_identity",
    "boundary_value",
    "boundary_value_window",
    "local_spacing",
    "exceptional_scan",
]

# Smallest |Im z| accepted by the Fredholm routes, relative to system scale.
EPS_FLOOR = 1e-10
# Smallest |z| accepted (the weighted route divides by z), relative scale.
Z_FLOOR = 1e-9
# Default flagging threshold for the exceptional-set scan, relative scale.
SING_THRESH = 1e-6


def _check_z(system: MultichannelSystem, z: complex, eps_floor: float | None) -> None:
    scale = system.scale
    floor = (EPS_FLOOR if eps_floor is None else eps_floor) * scale
    if abs(z.imag) < floor:
        raise ValueError(f"|Im z| = {abs(z.imag):.3e} below floor {floor:.3e}")
    if abs(z) < Z_FLOOR * scale:
        raise ZeroEnergy(f"|z| = {abs(z):.3e} below {Z_FLOOR:.1e} * scale")


def _solve_right_guarded(b: np.ndarray, a: np.ndarray, what: str) -> np.ndarray:
    """X = B A^{-1} via LU on A^T; near-singularity mapped to the domain error."""
    lu, piv = scipy.linalg.lu_factor(a.T, check_finite=False)
    pivots = np.abs(np.diag(lu))
    floor = 1e-14 * max(np.abs(a).max(), 1e-300)
    if pivots.min() < floor:
        raise NearSingularFredholm(
            f"{what}: pivot {pivots.min():.3e} below floor {floor:.3e}"
        )
    return scipy.linalg.lu_solve((lu, piv), b.T, check_finite=False).T


@dataclass(frozen=True)
class ResolventPoint:
    """All resolvent carriers evaluated at one regular point z."""

    z: complex
    rj: np.ndarray            # R(z) J, block route
    g0: np.ndarray            # weighted kernel G0(z)
    sandwiched: np.ndarray    # Q R(z) Q*, weighted route
    residuals: dict = field(default_factory=dict)


def g0_matrix(system: MultichannelSystem, z: complex) -> np.ndarray:
    """G0(z) = -(1/z) M0* + (1/z) K Q0 R0(z) Q0*."""
    core = system.q0_r0_q0(z)
    return (-1.0 / z) * adjoint(system.m0) + (1.0 / z) * (system.k @ core)


def resolvent_via_fredholm(
    system: MultichannelSystem, z: complex, eps_floor: float | None = None
) -> np.ndarray:
    """R(z) J from the block Fredholm route, never forming (A - z)^{-1}.

    Returns an (n, (N+1) n) matrix.  Raises NearSingularFredholm when
    I + T R0(z) loses invertibility at working precision.
    """
    _check_z(system, z, eps_floor)
    r0 = system.r0(z)
    fred = np.eye(system.dim0, dtype=np.complex128) + system.t @ r0
    jr0 = system.j @ r0
    return _solve_right_guarded(jr0, fred, "I + T R0(z)")


def sandwiched_resolvent(
    system: MultichannelSystem, z: complex, eps_floor: float | None = None
) -> ResolventPoint:
    """Q R(z) Q* through the weighted kernel, with self-consistency residuals.

    residuals:
      fredholm  -- relative residual of the weighted identity re-multiplied out
      block     -- relative gap to the block-route value of Q R(z) Q*
    """
    _check_z(system, z, eps_floor)
    core = system.q0_r0_q0(z)
    g0 = (-1.0 / z) * adjoint(system.m0) + (1.0 / z) * (system.k @ core)
    rhs = system.m @ core
    fred = np.eye(system.dim0, dtype=np.complex128) + g0
    sandwiched = _solve_right_guarded(rhs, fred, "I + G0(z)")

    rj = resolvent_via_fredholm(system, z, eps_floor)
    via_block = system.q0 @ (adjoint(system.j) @ rj) @ adjoint(system.q0)
    denom = max(op_norm(rhs), 1e-300)
    residuals = {
        "fredholm": op_norm(sandwiched @ fred - rhs) / denom,
        "block": op_norm(sandwiched - via_block) / max(op_norm(sandwiched), 1e-300),
    }
    return ResolventPoint(z=z, rj=rj, g0=g0, sandwiched=sandwiched, residuals=residuals)


def check_dissipation_identity(
    system: MultichannelSystem, z: complex, g, eps_floor: float | None = None
):
    """Both sides of the weighted dissipation identity at z for a vector g.

    Im((I + G0(z)) g, M Q0 R0(z) Q0* g) = -Im(z) ||J R0(z) Q0* g||^2,
    with the inner product conjugate-linear in its second slot.
    Returns (lhs, rhs).
    """
    _check_z(system, z, eps_floor)
    gvec = np.asarray(g, dtype=np.complex128).reshape(-1)
    core = system.q0_r0_q0(z)
    g0 = (-1.0 / z) * adjoint(system.m0) + (1.0 / z) * (system.k @ core)
    lhs_vec = gvec + g0 @ gvec
    rhs_vec = system.m @ (core @ gvec)
    lhs = complex(np.vdot(rhs_vec, lhs_vec)).imag
    jr0q = system.j @ (system.r0(z) @ (adjoint(system.q0) @ gvec))
    rhs = -z.imag * float(np.vdot(jr0q, jr0q).real)
    return lhs, rhs


# ---------------------------------------------------------------------------
# limiting absorption
# ---------------------------------------------------------------------------


def geometric_schedule(
    start: float = 0.1, ratio: float = 0.5, count: int = 11, floor: float | None = None
) -> np.ndarray:
    """Decreasing eps schedule start * ratio^k, clipped at an optional floor."""
    eps = start * ratio ** np.arange(count)
    if floor is not None:
        eps = eps[eps >= floor]
    if eps.size < 4:
        raise ValueError("schedule must keep at least 4 entries")
    return eps


@dataclass(frozen=True)
class BoundaryValue:
    """Extrapolated boundary value of Q R(lambda +/- i0) Q*."""

    lam: float
    side: int
    value: np.ndarray
    err_est: float
    hoelder_fit: float
    schedule: np.ndarray
    corrections: np.ndarray
    accepted: int

    @property
    def z_effective(self) -> complex:
        return complex(self.lam, self.side * self.schedule[-1])


def _richardson_order2(samples: list) -> tuple:
    """Order-2 Richardson table for a geometric (ratio 1/2) eps schedule.

    Returns (extrapolants, corrections): corrections[k] is the norm of the
    step from extrapolant k to k+1.
    """
    first = [2.0 * samples[k + 1] - samples[k] for k in range(len(samples) - 1)]
    second = [
        (4.0 * first[k + 1] - first[k]) / 3.0 for k in range(len(first) - 1)
    ]
    corrections = np.array(
        [op_norm(second[k + 1] - second[k]) for k in range(len(second) - 1)]
    )
    return second, corrections


def _accept_index(corrections: np.ndarray, rise: float = 1.5) -> int:
    """First local minimum of the correction profile, coarse end first.

    Tracks the running minimum and stops once a correction exceeds it by
    the rise factor: past that jump the table follows the resolved
    discrete spectrum, whose corrections can shrink again without the
    extrapolant being the sought boundary value.  Falls back to the global
    argmin when no jump occurs (the genuinely convergent case).
    """
    best = 0
    for k in range(corrections.size - 1):
        if corrections[k] < corrections[best]:
            best = k
        if corrections[k + 1] > rise * corrections[best]:
            return best
    if corrections[-1] < corrections[best]:
        best = corrections.size - 1
    return best


def boundary_value(
    system: MultichannelSystem,
    lam: float,
    side: int = +1,
    schedule=None,
    eps_floor: float | None = None,
) -> BoundaryValue:
    """Limiting absorption for the weighted resolvent at real lambda.

    Evaluates Q R(lambda + i*side*eps) Q* over the schedule, extrapolates
    with an order-2 Richardson table, and accepts the first local minimum
    of the correction profile (see module docstring for why the table is
    not read at its last row).  hoelder_fit is the least-squares slope of
    log ||G(eps) - G_accepted|| against log eps over the schedule prefix
    ending at the accepted entry.

    Raises NoConvergence when lambda sits on an eigenvalue of the coupled
    operator within the finest schedule scale: there the samples follow a
    real-axis pole, every extrapolant diverges as eps -> 0, and no prefix
    of the table targets a boundary value.  At points merely near the
    spectrum the extrapolation degrades gracefully instead (err_est
    grows), which is the behaviour deep schedules rely on.
    """
    if side not in (+1, -1):
        raise ValueError("side must be +1 or -1")
    eps = np.asarray(
        geometric_schedule() if schedule is None else schedule, dtype=float
    )
    if eps.size < 4 or np.any(np.diff(eps) >= 0):
        raise ValueError("schedule must be strictly decreasing with >= 4 entries")
    gap = float(np.abs(system.eig_a.eigenvalues - lam).min())
    if gap <= max(eps[-1] / 8.0, GAP_TOL * system.scale):
        raise NoConvergence(
            f"lambda={lam:.6g} lies on the point spectrum of the coupled "
            f"operator (gap {gap:.3e}); the extrapolation table diverges"
        )
    samples = [
        sandwiched_resolvent(system, complex(lam, side * e), eps_floor).sandwiched
        for e in eps
    ]
    extrapolants, corrections = _richardson_order2(samples)
    accepted = _accept_index(corrections)
    value = extrapolants[accepted + 1]
    err_est = float(corrections[accepted])

    # Hoelder diagnostic over the trusted prefix of the raw samples.
    upto = min(accepted + 2, len(samples))
    gaps = np.array([op_norm(samples[k] - value) for k in range(upto)])
    mask = gaps > 0
    if mask.sum() >= 2:
        slope = np.polyfit(np.log(eps[:upto][mask]), np.log(gaps[mask]), 1)[0]
        hoelder = float(min(max(slope, 0.0), 1.0))
    else:
        hoelder = 1.0
    return BoundaryValue(
        lam=float(lam),
        side=side,
        value=value,
        err_est=err_est,
        hoelder_fit=hoelder,
        schedule=eps,
        corrections=corrections,
        accepted=accepted,
    )


def _distinct_sorted(vals: np.ndarray, tol: float) -> np.ndarray:
    out = [vals[0]]
    for v in vals[1:]:
        if v - out[-1] > tol:
            out.append(v)
    return np.asarray(out)


def local_spacing(system: MultichannelSystem, lam: float, count: int = 13) -> float:
    """Coarsest per-channel grid spacing near lambda.

    The mesoscopic eps windows must blur every channel's eigenvalue
    lattice into its continuum surrogate, and the Poisson-summation error
    of each lattice decays in eps over that lattice's own spacing, so
    the binding scale is the widest channel spacing, not the spacing of
    the coupled operator: couplings split cross-channel degeneracies by
    tiny amounts that would otherwise masquerade as the local gap.
    Per channel, eigenvalues closer than GAP_TOL * scale collapse into
    one cluster so flat bands do not shrink the estimate.
    """
    tol = GAP_TOL * max(1.0, system.scale)
    widest = 0.0
    for vals, _ in system.eig_channels:
        arr = _distinct_sorted(np.sort(vals), tol)
        if arr.size < 3:
            continue
        near = np.sort(arr[np.argsort(np.abs(arr - lam))[: min(count, arr.size)]])
        widest = max(widest, float(np.median(np.diff(near))))
    if widest == 0.0:
        raise ValueError("no channel exposes 3 distinct eigenvalues for a spacing")
    return widest


def boundary_value_window(
    system: MultichannelSystem,
    lam: float,
    side: int = +1,
    window: tuple = (2.0, 14.0),
    nodes: int = 14,
    degree: int = 6,
    spacing: float | None = None,
) -> BoundaryValue:
    """Scattering-grade boundary value from a mesoscopic-window fit.

    Samples QR(lambda + i*side*eps)Q* at `nodes` points with eps between
    window[0] and window[1] times the local eigenvalue spacing, fits a
    least-squares polynomial in eps, and reads it off at eps = 0.  The
    samples never go below twice the spacing, so the resolved-spectrum
    plateau that caps the Richardson route is never entered; on smooth
    models this lands well below that route's error floor, which the
    stationary scattering assembly needs for its unitarity budget.

    corrections[d-1] is the shift of the constant term when the fit
    degree grows from d-1 to d; err_est is the final shift.  Raises
    NoConvergence when err_est stays above half the value norm (the
    continuation did not settle; expect this at exceptional energies).
    """
    if side not in (+1, -1):
        raise ValueError("side must be +1 or -1")
    if degree < 1 or nodes < degree + 2:
        raise ValueError("need nodes >= degree + 2 and degree >= 1")
    if not 0 < window[0] < window[1]:
        raise ValueError("window must be increasing positive multiples")
    h = local_spacing(system, lam) if spacing is None else float(spacing)
    eps = h * np.linspace(window[1], window[0], nodes)
    samples = np.stack(
        [
            sandwiched_resolvent(system, complex(lam, side * e)).sandwiched
            for e in eps
        ]
    )
    flat = samples.reshape(nodes, -1)
    vand = np.vander(eps, degree + 1, increasing=True)
    consts = []
    for d in range(degree + 1):
        coef, *_ = np.linalg.lstsq(vand[:, : d + 1], flat, rcond=None)
        consts.append(coef[0].reshape(samples.shape[1:]))
    corrections = np.array(
        [op_norm(consts[d] - consts[d - 1]) for d in range(1, degree + 1)]
    )
    value = consts[degree]
    err_est = float(corrections[-1])
    if err_est > 0.5 * op_norm(value):
        raise NoConvergence(
            f"window fit unsettled at lambda={lam:.6g} "
            f"(err_est {err_est:.3e} vs value {op_norm(value):.3e})"
        )
    gaps = np.array([op_norm(s - value) for s in samples])
    mask = gaps > 0
    if mask.sum() >= 2:
        slope = np.polyfit(np.log(eps[mask]), np.log(gaps[mask]), 1)[0]
        hoelder = float(min(max(slope, 0.0), 1.0))
    else:
        hoelder = 1.0
    return BoundaryValue(
        lam=float(lam),
        side=side,
        value=value,
        err_est=err_est,
        hoelder_fit=hoelder,
        schedule=eps,
        corrections=corrections,
        accepted=degree - 1,
    )


# ---------------------------------------------------------------------------
# exceptional set
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExceptionalScan:
    lambdas: np.ndarray
    sigma_min: np.ndarray
    flagged: tuple
    eps: float
    threshold: float


def exceptional_scan(
    system: MultichannelSystem,
    lambdas,
    eps: float,
    threshold: float | None = None,
) -> ExceptionalScan:
    """Scan sigma_min(I + G0(lambda + i*eps)) over a grid of energies.

    Grid points where the profile dips below the threshold (default
    SING_THRESH * scale) are flagged; at finite dimension a genuine
    embedded eigenvalue drives the profile to O(eps) at the nearest grid
    point, while regular points stay at the level-spacing scale.
    """
    lams = np.asarray(lambdas, dtype=float)
    thr = (SING_THRESH if threshold is None else threshold) * system.scale
    eye = np.eye(system.dim0, dtype=np.complex128)
    sig = np.empty(lams.size, dtype=float)
    for i, lam in enumerate(lams):
        g0 = g0_matrix(system, complex(lam, eps))
        sig[i] = scipy.linalg.svdvals(eye + g0)[-1]
    flagged = tuple(float(lams[i]) for i in np.nonzero(sig < thr)[0])
    return ExceptionalScan(
        lambdas=lams, sigma_min=sig, flagged=flagged, eps=float(eps), threshold=thr
    )

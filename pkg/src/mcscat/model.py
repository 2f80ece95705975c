"""Channel models and the assembled two-space block system.

A model is a weight operator X together with Hermitian channels
A_1, ..., A_N and a Hermitian remainder A_inf on a common space C^n.
The full operator is A = A_inf + A_1 + ... + A_N.  The comparison
operator A0 = 0 (+) A_1 (+) ... (+) A_N acts block-diagonally on the
stacked space C^((N+1) n), and the identification map J sums the blocks.
Everything downstream (resolvent identities, spectral fibers, wave
operators) consumes the assembled `MultichannelSystem`.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Any

import numpy as np
import scipy.linalg

from . import linalg
from .errors import (
    BadDimensions,
    BadGrid,
    BoundaryEigenvalue,
    IllConditionedX,
    IntervalContainsZero,
    NonHermitian,
)
from .linalg import adjoint, as_matrix, op_norm

__all__ = [
    "ChannelSet",
    "MultichannelSystem",
    "AuditItem",
    "AssumptionReport",
    "build_system",
    "audit",
    "make_random_channels",
    "make_multiplication_channels",
    "with_rank_one",
    "plant_embedded_eigenvalue",
    "channelset_to_json",
    "channelset_from_json",
]

# Relative residual accepted for the exact block factorisations at build time.
BUILD_RESIDUAL_CAP = 1e-8


def _check_hermitian(name: str, m: np.ndarray) -> None:
    scale = max(np.abs(m).max() if m.size else 0.0, 1e-300)
    defect = np.abs(m - adjoint(m)).max()
    if defect > linalg.TOL_HERM * scale:
        raise NonHermitian(f"{name}: defect {defect:.3e} relative to {scale:.3e}")


@dataclass(frozen=True)
class ChannelSet:
    """Raw model data: weight, channels, remainder, plus provenance.

    Attributes
    ----------
    a_inf : (n, n) Hermitian remainder term of A.
    channels : tuple of (n, n) Hermitian channel operators A_1..A_N.
    x : (n, n) injective weight operator.
    factory, params, seed : provenance for serialisation; params must be
        JSON-serialisable.
    """

    a_inf: np.ndarray
    channels: tuple
    x: np.ndarray
    factory: str = "custom"
    params: dict = field(default_factory=dict)
    seed: int | None = None

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def count(self) -> int:
        return len(self.channels)

    @property
    def a_total(self) -> np.ndarray:
        return self.a_inf + sum(self.channels)


@dataclass(frozen=True)
class MultichannelSystem:
    """Assembled block operators for one model.

    Block index 0 is the remainder slot; blocks 1..N carry the channels.
    `t` satisfies A J - J A0 = J T exactly by construction, `k` carries
    T A0 = Q0* K Q0, `m0` carries Q0 T* Q0^{-1}, `m` equals J*J, and
    `k_tilde` carries A0 (J*J - I) A0 = Q0* Ktilde Q0.
    """

    base: ChannelSet
    a: np.ndarray
    a0: np.ndarray
    j: np.ndarray
    t: np.ndarray
    q0: np.ndarray
    q: np.ndarray
    k: np.ndarray
    m0: np.ndarray
    m: np.ndarray
    k_tilde: np.ndarray
    build_residuals: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.base.n

    @property
    def nchan(self) -> int:
        return self.base.count

    @property
    def nblocks(self) -> int:
        return self.nchan + 1

    @property
    def dim0(self) -> int:
        return self.nblocks * self.n

    def block(self, i: int) -> slice:
        return slice(i * self.n, (i + 1) * self.n)

    @cached_property
    def scale(self) -> float:
        return max(1.0, op_norm(self.a), max(op_norm(c) for c in self.base.channels))

    @cached_property
    def eig_channels(self) -> tuple:
        return tuple(linalg.herm_eig(c) for c in self.base.channels)

    @cached_property
    def eig_a(self) -> linalg.HermEig:
        return linalg.herm_eig(self.a)

    # -- resolvent carriers -------------------------------------------------

    def r0(self, z: complex) -> np.ndarray:
        """Block resolvent (A0 - z)^{-1} assembled channel by channel."""
        out = np.zeros((self.dim0, self.dim0), dtype=np.complex128)
        out[self.block(0), self.block(0)] = (-1.0 / z) * np.eye(self.n)
        for jdx, eig in enumerate(self.eig_channels, start=1):
            vals, vecs = eig
            blk = (vecs * (1.0 / (vals - z))) @ adjoint(vecs)
            out[self.block(jdx), self.block(jdx)] = blk
        return out

    def r_full(self, z: complex) -> np.ndarray:
        """(A - z)^{-1} through the cached eigendecomposition of A."""
        vals, vecs = self.eig_a
        return (vecs * (1.0 / (vals - z))) @ adjoint(vecs)

    def q0_r0_q0(self, z: complex) -> np.ndarray:
        """Q0 (A0 - z)^{-1} Q0*, assembled per block."""
        x = self.base.x
        out = np.zeros((self.dim0, self.dim0), dtype=np.complex128)
        out[self.block(0), self.block(0)] = (-1.0 / z) * (x @ adjoint(x))
        for jdx, eig in enumerate(self.eig_channels, start=1):
            vals, vecs = eig
            w = x @ vecs
            out[self.block(jdx), self.block(jdx)] = (w * (1.0 / (vals - z))) @ adjoint(w)
        return out

    # -- spectral projections ----------------------------------------------

    def _interval_mask(self, vals: np.ndarray, interval) -> np.ndarray:
        lo, hi = float(interval[0]), float(interval[1])
        guard = linalg.GAP_TOL * max(1.0, self.scale)
        if np.any(np.abs(vals - lo) < guard) or np.any(np.abs(vals - hi) < guard):
            raise BoundaryEigenvalue(
                f"eigenvalue within {guard:.3e} of [{lo}, {hi}] endpoint"
            )
        return (vals > lo) & (vals < hi)

    def e0(self, interval) -> np.ndarray:
        """Spectral projection of A0 onto the open interval."""
        out = np.zeros((self.dim0, self.dim0), dtype=np.complex128)
        lo, hi = float(interval[0]), float(interval[1])
        if lo < 0.0 < hi:
            raise IntervalContainsZero("interval must exclude 0 (remainder block)")
        for jdx, eig in enumerate(self.eig_channels, start=1):
            vals, vecs = eig
            keep = self._interval_mask(vals, interval)
            sub = vecs[:, keep]
            out[self.block(jdx), self.block(jdx)] = sub @ adjoint(sub)
        return out

    def e_full(self, interval) -> np.ndarray:
        """Spectral projection of A onto the open interval."""
        vals, vecs = self.eig_a
        keep = self._interval_mask(vals, interval)
        sub = vecs[:, keep]
        return sub @ adjoint(sub)


def build_system(base: ChannelSet) -> MultichannelSystem:
    """Assemble the stacked block operators and their exact factorisations.

    Raises BadDimensions on inconsistent shapes, NonHermitian on a
    non-Hermitian input block, IllConditionedX once cond(X) exceeds
    COND_CAP, and ValueError if an exact identity fails beyond roundoff
    (which would indicate a corrupted input).
    """
    n = base.n
    x = as_matrix(base.x)
    if x.shape != (n, n):
        raise BadDimensions(f"x must be ({n}, {n}), got {x.shape}")
    if base.count < 1:
        raise BadDimensions("need at least one channel")
    a_inf = as_matrix(base.a_inf)
    if a_inf.shape != (n, n):
        raise BadDimensions(f"a_inf must be ({n}, {n}), got {a_inf.shape}")
    chans = []
    for idx, c in enumerate(base.channels, start=1):
        cm = as_matrix(c)
        if cm.shape != (n, n):
            raise BadDimensions(f"channel {idx} must be ({n}, {n}), got {cm.shape}")
        _check_hermitian(f"channel {idx}", cm)
        chans.append(cm)
    _check_hermitian("a_inf", a_inf)

    svals = scipy.linalg.svdvals(x)
    if svals[0] <= 0 or svals[-1] <= 0 or svals[0] / svals[-1] > linalg.COND_CAP:
        raise IllConditionedX(
            f"cond(x) = {svals[0] / max(svals[-1], 1e-300):.3e} exceeds "
            f"{linalg.COND_CAP:.1e}"
        )

    nb = base.count + 1
    dim0 = nb * n
    eye = np.eye(n, dtype=np.complex128)

    a = a_inf + sum(chans)
    a0 = np.zeros((dim0, dim0), dtype=np.complex128)
    t = np.zeros((dim0, dim0), dtype=np.complex128)
    q0 = np.zeros((dim0, dim0), dtype=np.complex128)
    jmap = np.hstack([eye] * nb)
    for bi in range(nb):
        rb = slice(bi * n, (bi + 1) * n)
        q0[rb, rb] = x
        if bi >= 1:
            a0[rb, rb] = chans[bi - 1]
        for bj in range(nb):
            cb = slice(bj * n, (bj + 1) * n)
            if bi == 0:
                t[rb, cb] = a_inf
            elif bi != bj:
                t[rb, cb] = chans[bi - 1]

    q = q0 @ adjoint(jmap)
    m = adjoint(jmap) @ jmap

    q0h = adjoint(q0)
    k = linalg.solve_right(linalg.solve(q0h, t @ a0), q0)
    m0 = linalg.solve_right(q0 @ adjoint(t), q0)
    core = a0 @ (m - np.eye(dim0)) @ a0
    k_tilde = linalg.solve_right(linalg.solve(q0h, core), q0)

    scale = max(1.0, op_norm(a))
    residuals = {
        "factorisation": op_norm(a @ jmap - jmap @ a0 - jmap @ t) / scale,
        "k": op_norm(t @ a0 - q0h @ k @ q0) / scale,
        "m0": op_norm(q0 @ adjoint(t) - m0 @ q0) / scale,
        "k_tilde": op_norm(core - q0h @ k_tilde @ q0) / scale,
        "m_vs_jstar_j": op_norm(m - adjoint(jmap) @ jmap),
    }
    worst = max(residuals.values())
    if worst > BUILD_RESIDUAL_CAP:
        raise ValueError(f"block factorisation residual {worst:.3e} out of range")

    return MultichannelSystem(
        base=replace(base, a_inf=a_inf, channels=tuple(chans), x=x),
        a=a,
        a0=a0,
        j=jmap,
        t=t,
        q0=q0,
        q=q,
        k=k,
        m0=m0,
        m=m,
        k_tilde=k_tilde,
        build_residuals=residuals,
    )


# ---------------------------------------------------------------------------
# assumption audit
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AuditItem:
    key: str
    label: str
    value: float
    threshold: float | None
    passed: bool

    def as_dict(self) -> dict:
        return {
            "key": self.key,
            "label": self.label,
            "value": self.value,
            "threshold": self.threshold,
            "passed": self.passed,
        }


@dataclass(frozen=True)
class AssumptionReport:
    items: tuple

    @property
    def all_pass(self) -> bool:
        return all(it.passed for it in self.items)

    def __getitem__(self, key: str) -> AuditItem:
        for it in self.items:
            if it.key == key:
                return it
        raise KeyError(key)

    def as_dict(self) -> dict:
        return {
            "all_pass": self.all_pass,
            "items": [it.as_dict() for it in self.items],
        }


def _sv_tail_fraction(mat: np.ndarray, rank: int) -> float:
    """Fraction of the singular-value mass sitting beyond `rank`."""
    sv = scipy.linalg.svdvals(mat)
    total = sv.sum()
    if total <= 0:
        return 0.0
    return float(sv[rank:].sum() / total)


def audit(
    system: MultichannelSystem,
    fact_tol: float = 1e-10,
    bound_cap: float | None = None,
    smallness_cap: float | None = None,
    gamma_hat: float | None = None,
) -> AssumptionReport:
    """Quantitative surrogates for the structural model assumptions.

    Each item reports a number and a verdict against the supplied
    tolerance; `None` thresholds mean report-only (always passing).
    `gamma_hat`, when supplied from the spectral module, is judged
    against the 0.5 smoothness line.
    """
    base = system.base
    x = base.x
    scale = system.scale
    items: list[AuditItem] = []

    def add(key, label, value, threshold):
        passed = True if threshold is None else bool(value <= threshold)
        items.append(AuditItem(key, label, float(value), threshold, passed))

    sv = scipy.linalg.svdvals(x)
    items.append(
        AuditItem(
            "weight_injective",
            "smallest singular value of the weight X",
            float(sv[-1]),
            None,
            bool(sv[-1] > 0 and sv[0] / sv[-1] <= linalg.COND_CAP),
        )
    )
    smin_jstar = scipy.linalg.svdvals(system.j)[-1]
    expected = np.sqrt(system.nblocks)
    items.append(
        AuditItem(
            "identification_injective",
            "smallest singular value of J* (equals sqrt(N+1))",
            float(smin_jstar),
            None,
            bool(abs(smin_jstar - expected) <= 1e-9 * expected),
        )
    )

    # remainder factorisation A_inf = X* K_inf X
    k_inf = linalg.solve_right(linalg.solve(adjoint(x), base.a_inf), x)
    add(
        "remainder_fact_residual",
        "residual of A_inf = X* K_inf X",
        op_norm(base.a_inf - adjoint(x) @ k_inf @ x) / scale,
        fact_tol,
    )
    add(
        "remainder_core_norm",
        "norm of the sandwiched remainder core K_inf",
        op_norm(k_inf),
        smallness_cap,
    )

    # cross products A_j A_l = X* K_jl X
    worst_res = 0.0
    worst_core = 0.0
    for jj in range(base.count):
        for ll in range(base.count):
            if jj == ll:
                continue
            prod = base.channels[jj] @ base.channels[ll]
            core = linalg.solve_right(linalg.solve(adjoint(x), prod), x)
            worst_res = max(worst_res, op_norm(prod - adjoint(x) @ core @ x) / scale)
            worst_core = max(worst_core, op_norm(core))
    add(
        "cross_product_fact_residual",
        "worst residual of A_j A_l = X* K_jl X over channel pairs",
        worst_res,
        fact_tol,
    )
    add(
        "cross_product_core_norm",
        "largest sandwiched cross-product core norm",
        worst_core,
        smallness_cap,
    )

    # boundedness of the weight-conjugated channels
    worst_conj = max(
        op_norm(x @ c @ np.linalg.inv(x)) for c in base.channels
    )
    add(
        "weight_conjugation_norm",
        "largest norm of X A_j X^{-1} over channels",
        worst_conj,
        bound_cap,
    )

    # stacked-space surrogates
    add(
        "coupling_core_fact_residual",
        "residual of T A0 = Q0* K Q0",
        system.build_residuals["k"],
        fact_tol,
    )
    add(
        "overlap_core_fact_residual",
        "residual of A0 (J*J - I) A0 = Q0* Ktilde Q0",
        system.build_residuals["k_tilde"],
        fact_tol,
    )
    m0_sq = system.m0 @ system.m0
    add(
        "m0_square_norm",
        "norm of (Q0 T* Q0^{-1})^2, smallness surrogate",
        op_norm(m0_sq),
        smallness_cap,
    )
    add(
        "m0_square_tail",
        "singular-value tail fraction of the squared coupling core",
        _sv_tail_fraction(m0_sq, max(1, system.dim0 // 4)),
        None,
    )
    items.append(
        AuditItem(
            "overlap_norm",
            "norm of J*J (equals N+1)",
            float(op_norm(system.m)),
            None,
            bool(abs(op_norm(system.m) - system.nblocks) <= 1e-9 * system.nblocks),
        )
    )
    diff = system.j @ (system.a0 @ system.a0) @ adjoint(system.j) - system.a @ system.a
    add(
        "square_comparison_norm",
        "norm of J A0^2 J* - A^2, smallness surrogate",
        op_norm(diff),
        smallness_cap,
    )
    add(
        "square_comparison_tail",
        "singular-value tail fraction of J A0^2 J* - A^2",
        _sv_tail_fraction(diff, max(1, system.n // 4)),
        None,
    )

    if gamma_hat is not None:
        items.append(
            AuditItem(
                "fiber_smoothness",
                "Hoelder exponent estimate for the weighted fiber map",
                float(gamma_hat),
                None,
                bool(gamma_hat >= 0.5),
            )
        )

    return AssumptionReport(items=tuple(items))


# ---------------------------------------------------------------------------
# factories
# ---------------------------------------------------------------------------


def _random_unitary(rng: np.random.Generator, n: int) -> np.ndarray:
    g = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    qmat, rmat = np.linalg.qr(g)
    phases = np.diag(rmat).copy()
    phases /= np.abs(phases)
    return qmat * phases


def _random_hermitian_unit(rng: np.random.Generator, n: int) -> np.ndarray:
    g = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    h = 0.5 * (g + adjoint(g))
    nrm = op_norm(h)
    return h / nrm if nrm > 0 else h


def make_random_channels(
    n: int,
    nchan: int,
    delta: float,
    seed: int,
    interval=(1.0, 2.0),
    a_inf_scale: float | None = None,
) -> ChannelSet:
    """Random channels on near-orthogonal ranges with O(delta) overlap.

    Each channel is an isometry-conjugated real diagonal with spectrum
    drawn inside `interval`, plus delta times a unit-norm Hermitian
    perturbation.  delta = 0 with the shared unitary makes the channel
    products vanish exactly.  A_inf defaults to delta times a unit-norm
    Hermitian; pass a_inf_scale=0.0 to drop it.
    """
    if nchan < 1 or n < nchan:
        raise BadDimensions(f"cannot split n={n} into {nchan} channel ranges")
    lo, hi = float(interval[0]), float(interval[1])
    if not lo < hi:
        raise BadGrid("interval must satisfy lo < hi")
    rng = np.random.default_rng(seed)
    m = n // nchan
    u = _random_unitary(rng, n)
    channels = []
    for jj in range(nchan):
        cols = u[:, jj * m : (jj + 1) * m]
        d = np.sort(rng.uniform(lo, hi, size=m))
        a_j = (cols * d) @ adjoint(cols)
        if delta != 0.0:
            a_j = a_j + delta * _random_hermitian_unit(rng, n)
        channels.append(0.5 * (a_j + adjoint(a_j)))
    scale_inf = delta if a_inf_scale is None else a_inf_scale
    if scale_inf != 0.0:
        a_inf = scale_inf * _random_hermitian_unit(rng, n)
    else:
        a_inf = np.zeros((n, n), dtype=np.complex128)
    x = np.diag(rng.uniform(0.5, 1.5, size=n)).astype(np.complex128)
    return ChannelSet(
        a_inf=a_inf,
        channels=tuple(channels),
        x=x,
        factory="random",
        params={
            "n": n,
            "nchan": nchan,
            "delta": delta,
            "interval": [lo, hi],
            "a_inf_scale": a_inf_scale,
        },
        seed=seed,
    )


def _smooth_block_vector(
    rng: np.random.Generator, m: int, envelope: np.ndarray, modes: int = 6
) -> np.ndarray:
    """Envelope-weighted random combination of a few slow Fourier modes."""
    p = np.arange(m)
    v = np.zeros(m, dtype=np.complex128)
    for b in range(modes):
        c = rng.standard_normal() + 1j * rng.standard_normal()
        v += c * np.exp(2j * np.pi * b * p / m)
    v *= envelope
    return v / np.linalg.norm(v)


def make_multiplication_channels(
    grid,
    nchan: int,
    width: float = 8.0,
    seed: int = 0,
    coupling: float = 0.0,
    mix: float = 0.0,
    stagger: float = 0.0,
    smooth_unitaries: bool = True,
    weight_floor: float = 1e-3,
    a_inf_scale: float = 0.0,
) -> ChannelSet:
    """Discretised multiplication channels with a decaying diagonal weight.

    The grid supplies each channel's eigenvalues exactly (shifted by
    `stagger` fractions of the mean spacing per channel, so several
    channels interleave instead of stacking exact degeneracies).  Channel
    j lives on its own coordinate block of size m = len(grid); inside the
    block it is the multiplication operator diag(grid) conjugated by a
    smooth Fourier-type unitary with channel-specific phases, so the
    weighted fiber map is Hoelder continuous and measurable by the
    spectral module.  The weight X is the same centred envelope (Gaussian
    of the given width on top of weight_floor) on every block.

    `coupling` conjugates each channel by exp(i * coupling * H_j) with a
    smooth envelope-localised Hermitian H_j mixing neighbouring blocks:
    channel spectra are preserved exactly for every coupling while
    ||A_j A_l|| = O(coupling) for j != l.  The conjugating vectors carry
    spectral weight at few energies, so this family scatters only near
    those fibers.

    `mix` instead spreads an energy-local remainder over the whole band:
    the remainder term couples the p-th eigenvectors of every channel
    pair through a smooth bump profile in energy.  The kernel carries a
    spacing / (2 pi) factor, which by the golden rule (2 pi x density x
    element) makes `mix` the on-shell coupling: off-diagonal
    scattering-matrix blocks come out mix * profile at interior fibers,
    instead of O(mix * level density) as a raw operator norm would give.

    smooth_unitaries=False drops all conjugations, leaving diag(grid)
    embedded per block (the transparent reference case).
    """
    g = np.asarray(grid, dtype=float)
    if g.ndim != 1 or g.size < 2 or np.any(np.diff(g) <= 0):
        raise BadGrid("grid must be a strictly increasing 1-d array")
    if g.min() <= 0.0 <= g.max():
        raise BadGrid("grid must not straddle zero energy")
    if nchan < 1:
        raise BadDimensions("need at least one channel")
    m = g.size
    n = nchan * m
    rng = np.random.default_rng(seed)
    h_mean = float(np.mean(np.diff(g)))

    p = np.arange(m)
    q_centered = p - (m - 1) / 2.0
    envelope = weight_floor + np.exp(-(q_centered**2) / (2.0 * width**2))

    if smooth_unitaries:
        fourier = np.exp(2j * np.pi * np.outer(q_centered, p) / m) / np.sqrt(m)
    else:
        fourier = np.eye(m, dtype=np.complex128)

    grids = [g + stagger * h_mean * jj / nchan for jj in range(nchan)]
    unitaries = []
    blocks = []
    for jj in range(nchan):
        if smooth_unitaries:
            amp = rng.uniform(0.3, 1.0)
            beta = rng.uniform(0.0, 2.0 * np.pi)
            phases = np.exp(1j * amp * np.sin(2.0 * np.pi * p / m + beta))
            w_j = phases[:, None] * fourier
        else:
            w_j = fourier
        unitaries.append(w_j)
        blocks.append((w_j * grids[jj]) @ adjoint(w_j))

    channels = []
    for jj in range(nchan):
        a_j = np.zeros((n, n), dtype=np.complex128)
        blk = slice(jj * m, (jj + 1) * m)
        a_j[blk, blk] = blocks[jj]
        channels.append(a_j)

    if coupling != 0.0 and nchan > 1:
        for jj in range(nchan):
            nxt = (jj + 1) % nchan
            u_vec = np.zeros(n, dtype=np.complex128)
            w_vec = np.zeros(n, dtype=np.complex128)
            u_vec[jj * m : (jj + 1) * m] = _smooth_block_vector(rng, m, envelope)
            w_vec[nxt * m : (nxt + 1) * m] = _smooth_block_vector(rng, m, envelope)
            h_j = np.outer(u_vec, np.conj(w_vec)) + np.outer(w_vec, np.conj(u_vec))
            u_rot = linalg.propagator(h_j, coupling)
            channels[jj] = u_rot @ channels[jj] @ adjoint(u_rot)
            channels[jj] = 0.5 * (channels[jj] + adjoint(channels[jj]))

    x = np.diag(np.tile(envelope, nchan)).astype(np.complex128)

    a_inf = np.zeros((n, n), dtype=np.complex128)
    if mix != 0.0 and nchan > 1:
        center = 0.5 * (g[0] + g[-1])
        sigma = (g[-1] - g[0]) / 6.0
        profile = np.exp(-((g - center) ** 2) / (2.0 * sigma**2))
        kern = mix * h_mean / (2.0 * np.pi)
        for jj in range(nchan):
            for ll in range(jj + 1, nchan):
                cross = (unitaries[jj] * profile) @ adjoint(unitaries[ll])
                bj = slice(jj * m, (jj + 1) * m)
                bl = slice(ll * m, (ll + 1) * m)
                a_inf[bj, bl] += kern * cross
                a_inf[bl, bj] += kern * adjoint(cross)
    if a_inf_scale != 0.0:
        v = np.concatenate(
            [_smooth_block_vector(rng, m, envelope) for _ in range(nchan)]
        )
        v /= np.linalg.norm(v)
        a_inf = a_inf + a_inf_scale * np.outer(v, np.conj(v))

    return ChannelSet(
        a_inf=a_inf,
        channels=tuple(channels),
        x=x,
        factory="multiplication",
        params={
            "grid": [float(v) for v in g],
            "nchan": nchan,
            "width": width,
            "coupling": coupling,
            "mix": mix,
            "stagger": stagger,
            "smooth_unitaries": smooth_unitaries,
            "weight_floor": weight_floor,
            "a_inf_scale": a_inf_scale,
        },
        seed=seed,
    )


def with_rank_one(base: ChannelSet, kappa: float, vec) -> ChannelSet:
    """Add kappa |v><v| to the remainder term of a model."""
    v = np.asarray(vec, dtype=np.complex128).reshape(-1)
    if v.size != base.n:
        raise BadDimensions(f"vector length {v.size} != n={base.n}")
    bump = kappa * np.outer(v, np.conj(v))
    return replace(
        base,
        a_inf=base.a_inf + bump,
        factory=base.factory,
        params={**base.params, "rank_one_kappa": float(kappa)},
    )


def plant_embedded_eigenvalue(
    base: ChannelSet, lambda_star: float, direction=None, seed: int = 0
):
    """Tune a rank-one remainder so A gains an exact eigenvalue at lambda_star.

    For A_base = A_inf + sum A_j and a unit vector u, the rank-one update
    kappa |u><u| creates the eigenvalue exactly when
    1 + kappa <(A_base - lambda*)^{-1} u, u> = 0, which is solvable at any
    lambda* off the discrete spectrum of A_base.  Returns (new ChannelSet,
    kappa).
    """
    n = base.n
    if direction is None:
        rng = np.random.default_rng(seed)
        u = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        u = base.x @ u
    else:
        u = np.asarray(direction, dtype=np.complex128).reshape(-1)
    u = u / np.linalg.norm(u)
    a_base = base.a_total
    w = linalg.solve(a_base - lambda_star * np.eye(n), u)
    g = np.vdot(u, w).real
    if abs(g) < 1e-14:
        raise ValueError("direction is blind to lambda_star; pick another")
    kappa = -1.0 / g
    return with_rank_one(base, kappa, u), kappa


# ---------------------------------------------------------------------------
# serialisation
# ---------------------------------------------------------------------------

_FORMAT = "mcscat-channelset-v1"


def _complex_to_pairs(m: np.ndarray) -> list:
    return [[[float(c.real), float(c.imag)] for c in row] for row in np.asarray(m)]


def _pairs_to_complex(rows: list) -> np.ndarray:
    return np.array(
        [[complex(re, im) for re, im in row] for row in rows], dtype=np.complex128
    )


def channelset_to_json(base: ChannelSet, indent: int | None = 2) -> str:
    doc = {
        "format": _FORMAT,
        "n": base.n,
        "nchan": base.count,
        "factory": base.factory,
        "params": base.params,
        "seed": base.seed,
        "a_inf": _complex_to_pairs(base.a_inf),
        "channels": [_complex_to_pairs(c) for c in base.channels],
        "x": _complex_to_pairs(base.x),
    }
    return json.dumps(doc, sort_keys=True, indent=indent)


def channelset_from_json(text: str) -> ChannelSet:
    doc = json.loads(text)
    if doc.get("format") != _FORMAT:
        raise ValueError(f"unknown serialisation format: {doc.get('format')!r}")
    base = ChannelSet(
        a_inf=_pairs_to_complex(doc["a_inf"]),
        channels=tuple(_pairs_to_complex(c) for c in doc["channels"]),
        x=_pairs_to_complex(doc["x"]),
        factory=doc.get("factory", "custom"),
        params=doc.get("params", {}),
        seed=doc.get("seed"),
    )
    if base.n != doc["n"] or base.count != doc["nchan"]:
        raise BadDimensions("serialised dimensions disagree with matrix shapes")
    return base

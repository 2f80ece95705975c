"""Spectral fibers of the block-diagonal comparison operator.

The comparison operator is diagonalised channel by channel (it is block
diagonal by construction, so this is exact and resolves cross-channel
degeneracies deterministically).  Eigenpairs inside the analysis interval
are grouped into uniform bins; each bin's eigenvectors form the fiber
basis at the bin centre.  Eigenvector phases are gauge-fixed (largest
modulus entry made real positive) so that fiber operators at nearby bins
can be compared in norm: without the gauge the comparison would measure
LAPACK's arbitrary phases instead of the model.

The discrete analogue of the direct-integral representation normalises a
fiber coefficient by bin_width^(-1/2), so that summing |coefficients|^2
times bin_width recovers Parseval exactly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    BoundaryEigenvalue,
    IntervalContainsZero,
    MultiplicityError,
    OutsideInterval,
    TooFewBins,
)
from .linalg import GAP_TOL, adjoint, op_norm
from .model import MultichannelSystem

__all__ = [
    "SpectralDecomposition",
    "FiberOperator",
    "WeylComparison",
    "diagonalize_a0",
    "f0_coefficients",
    "channel_profile_vector",
    "z0_of_lambda",
    "gamma0_of_lambda",
    "smoothness_estimate",
    "weyl_compare",
]


@dataclass(frozen=True)
class SpectralDecomposition:
    """Binned eigenvector fibers of the comparison operator on an interval.

    fibers[b] is a (dim0, fiber_dim) matrix of orthonormal eigenvector
    columns for bin b, ordered channel-major then by eigenvalue;
    channel_of_col[c] names the channel of fiber column c (1-based block
    index), constant across bins; eig_by_bin[b, c] is the matching
    eigenvalue.
    """

    interval: tuple
    bin_width: float
    centers: np.ndarray
    fibers: np.ndarray
    eig_by_bin: np.ndarray
    channel_of_col: tuple

    @property
    def fiber_dim(self) -> int:
        return self.fibers.shape[2]

    @property
    def nbins(self) -> int:
        return self.centers.size

    def bin_of(self, lam: float) -> int:
        lo, hi = self.interval
        if not lo < lam < hi:
            raise OutsideInterval(f"lambda={lam} outside ({lo}, {hi})")
        return min(int((lam - lo) / self.bin_width), self.nbins - 1)


@dataclass(frozen=True)
class FiberOperator:
    """A fiber-valued operator sample at one energy."""

    lam: float
    matrix: np.ndarray
    kind: str


def _gauge_fix(vec: np.ndarray, weighted: np.ndarray) -> np.ndarray:
    """Rotate so the weighted vector's largest entry is real positive.

    The weighted image is what every fiber operator sees; choosing the
    phase there keeps the gauge stable even when the bare eigenvector has
    entries of equal modulus (Fourier-type channels).
    """
    pivot = int(np.argmax(np.abs(weighted)))
    ph = weighted[pivot]
    mag = abs(ph)
    return vec * (np.conj(ph) / mag) if mag > 0 else vec


def diagonalize_a0(
    system: MultichannelSystem,
    interval,
    bin_width: float | None = None,
) -> SpectralDecomposition:
    """Bin the comparison operator's eigenpairs over the interval.

    bin_width defaults to |interval| / 32 and is snapped so that an
    integer number of bins tiles the interval.  Raises
    IntervalContainsZero, BoundaryEigenvalue (eigenvalue within the gap
    guard of either endpoint), and MultiplicityError when per-bin,
    per-channel eigencounts are not constant.
    """
    lo, hi = float(interval[0]), float(interval[1])
    if not lo < hi:
        raise ValueError("interval must satisfy lo < hi")
    if lo <= 0.0 <= hi:
        raise IntervalContainsZero("interval must exclude zero energy")
    length = hi - lo
    if bin_width is None:
        bin_width = length / 32.0
    nbins = max(1, int(round(length / bin_width)))
    bin_width = length / nbins

    guard = GAP_TOL * max(1.0, system.scale)
    per_bin_channel: dict = {}
    for ch, eig in enumerate(system.eig_channels, start=1):
        vals, vecs = eig
        if np.any(np.abs(vals - lo) < guard) or np.any(np.abs(vals - hi) < guard):
            raise BoundaryEigenvalue(
                f"channel {ch} eigenvalue within {guard:.3e} of an endpoint"
            )
        inside = np.nonzero((vals > lo) & (vals < hi))[0]
        for idx in inside:
            b = min(int((vals[idx] - lo) / bin_width), nbins - 1)
            per_bin_channel.setdefault((b, ch), []).append(idx)

    counts = {}
    for ch in range(1, system.nchan + 1):
        ch_counts = [len(per_bin_channel.get((b, ch), ())) for b in range(nbins)]
        if len(set(ch_counts)) != 1:
            bad = [b for b, c in enumerate(ch_counts) if c != ch_counts[0]]
            raise MultiplicityError(
                f"channel {ch}: eigencount varies across bins, offending bins {bad}"
            )
        counts[ch] = ch_counts[0]
    fiber_dim = sum(counts.values())
    if fiber_dim == 0:
        raise MultiplicityError("no eigenvalues of the comparison operator in the interval")

    dim0 = system.dim0
    n = system.n
    fibers = np.zeros((nbins, dim0, fiber_dim), dtype=np.complex128)
    eig_by_bin = np.zeros((nbins, fiber_dim), dtype=float)
    channel_of_col: list = []
    for b in range(nbins):
        col = 0
        for ch in range(1, system.nchan + 1):
            vals, vecs = system.eig_channels[ch - 1]
            idxs = sorted(per_bin_channel.get((b, ch), ()), key=lambda i: vals[i])
            for idx in idxs:
                v = _gauge_fix(vecs[:, idx], system.base.x @ vecs[:, idx])
                fibers[b, ch * n : (ch + 1) * n, col] = v
                eig_by_bin[b, col] = vals[idx]
                if b == 0:
                    channel_of_col.append(ch)
                col += 1
    centers = lo + (np.arange(nbins) + 0.5) * bin_width
    return SpectralDecomposition(
        interval=(lo, hi),
        bin_width=float(bin_width),
        centers=centers,
        fibers=fibers,
        eig_by_bin=eig_by_bin,
        channel_of_col=tuple(channel_of_col),
    )


def f0_coefficients(decomp: SpectralDecomposition, f) -> np.ndarray:
    """Fiber coefficients of a vector: coeff[b] = bin_width^{-1/2} V_b* f."""
    fv = np.asarray(f, dtype=np.complex128).reshape(-1)
    scale = decomp.bin_width ** -0.5
    return scale * np.einsum("bdc,d->bc", np.conj(decomp.fibers), fv)


def channel_profile_vector(
    decomp: SpectralDecomposition,
    system: MultichannelSystem,
    channel: int,
    profile,
) -> np.ndarray:
    """Unit vector of the base space with prescribed channel-fiber overlaps.

    profile maps an eigenvalue of the chosen channel to a real amplitude;
    the result is the normalised sum of that channel's gauge-fixed fiber
    columns weighted by profile(eigenvalue).  The fibers are orthonormal,
    so the overlap with the channel eigenvector at mu is profile(mu) up
    to the overall normalisation, and the shared gauge keeps the overlaps
    real positive in the same frame the fiber operators interpolate in.
    Rank-one couplings built this way carry a smooth local spectral
    profile, which is what the mesoscopic eps windows assume.
    """
    n = system.n
    if not 1 <= channel <= system.nchan:
        raise ValueError(f"channel must lie in 1..{system.nchan}")
    rows = slice(channel * n, (channel + 1) * n)
    v = np.zeros(n, dtype=np.complex128)
    for b in range(decomp.nbins):
        for c in range(decomp.fiber_dim):
            if decomp.channel_of_col[c] != channel:
                continue
            amp = float(profile(decomp.eig_by_bin[b, c]))
            if amp != 0.0:
                v += amp * decomp.fibers[b, rows, c]
    nrm = float(np.linalg.norm(v))
    if nrm == 0.0:
        raise ValueError("profile vanished on every fiber eigenvalue")
    return v / nrm


def _fiber_matrix(decomp: SpectralDecomposition, b: int, weight: np.ndarray | None):
    v = decomp.fibers[b]
    mat = adjoint(v)
    if weight is not None:
        mat = mat @ weight
    return decomp.bin_width ** -0.5 * mat


def _interpolated(decomp, system, lam, weight, kind) -> FiberOperator:
    lo, hi = decomp.interval
    if not lo < lam < hi:
        raise OutsideInterval(f"lambda={lam} outside ({lo}, {hi})")
    pos = (lam - lo) / decomp.bin_width - 0.5
    b0 = int(np.floor(pos))
    w = pos - b0
    if b0 < 0:
        b0, b1, w = 0, 0, 0.0
    elif b0 >= decomp.nbins - 1:
        b0, b1, w = decomp.nbins - 1, decomp.nbins - 1, 0.0
    else:
        b1 = b0 + 1
    m0 = _fiber_matrix(decomp, b0, weight)
    if b1 == b0 or w <= 0.0:
        mat = m0
    else:
        mat = (1.0 - w) * m0 + w * _fiber_matrix(decomp, b1, weight)
    return FiberOperator(lam=float(lam), matrix=mat, kind=kind)


def z0_of_lambda(
    decomp: SpectralDecomposition, system: MultichannelSystem, lam: float
) -> FiberOperator:
    """Weighted fiber map at lambda: bin_width^{-1/2} V_b* Q0*, interpolated
    linearly between the two nearest bin centres."""
    return _interpolated(decomp, system, lam, adjoint(system.q0), "z0")


def gamma0_of_lambda(
    decomp: SpectralDecomposition, system: MultichannelSystem, lam: float
) -> FiberOperator:
    """Bare fiber evaluation map at lambda (no weight)."""
    return _interpolated(decomp, system, lam, None, "gamma0")


def smoothness_estimate(
    decomp: SpectralDecomposition,
    system: MultichannelSystem,
    max_separation: float | None = None,
) -> float:
    """Hoelder exponent estimate for the weighted fiber map.

    Structure-function slope at the finest resolved scales: for each bin
    separation s (up to max_separation, default 8 bins) take the median of
    ||Z0(b+s) - Z0(b)|| over b, then fit log median against log distance.
    Local regularity is what matters, so separations past the default stay
    out of the fit: once the fiber difference saturates near 2||Z0|| the
    log-log profile flattens and would drag any exponent toward zero.
    Clipped into (0, 1]; a map constant at the sampled resolution has no
    usable increments and reports the clip value 1.  Raises TooFewBins
    below 8 bins.
    """
    if decomp.nbins < 8:
        raise TooFewBins(f"need >= 8 bins, got {decomp.nbins}")
    lo, hi = decomp.interval
    cap = 8 * decomp.bin_width if max_separation is None else max_separation
    cap = min(cap, (hi - lo) / 4.0)
    smax = max(2, int(round(cap / decomp.bin_width)))
    smax = min(smax, decomp.nbins - 1)
    weight = adjoint(system.q0)
    mats = [_fiber_matrix(decomp, b, weight) for b in range(decomp.nbins)]
    xs, ys = [], []
    for s in range(1, smax + 1):
        gaps = [
            op_norm(mats[b + s] - mats[b]) for b in range(decomp.nbins - s)
        ]
        med = float(np.median(gaps))
        if med > 0:
            xs.append(np.log(s * decomp.bin_width))
            ys.append(np.log(med))
    if len(xs) < 2:
        return 1.0
    slope = np.polyfit(np.array(xs), np.array(ys), 1)[0]
    return float(min(max(slope, 1e-12), 1.0))


@dataclass(frozen=True)
class WeylComparison:
    edges: np.ndarray
    counts_full: np.ndarray
    counts_comparison: np.ndarray
    distance: float


def weyl_compare(
    system: MultichannelSystem, edges, zero_margin: float = 1e-9
) -> WeylComparison:
    """Histogram comparison of spec(A) against spec(A0) away from zero.

    Bins are the half-open cells of `edges`; any cell meeting
    (-zero_margin, zero_margin) is rejected, since the stacked comparison
    operator carries a zero block of no spectral significance.  distance
    is the largest per-bin count gap divided by the comparison operator's
    total count over the kept cells.
    """
    e = np.asarray(edges, dtype=float)
    if e.ndim != 1 or e.size < 2 or np.any(np.diff(e) <= 0):
        raise ValueError("edges must be strictly increasing with >= 2 entries")
    for lo, hi in zip(e[:-1], e[1:]):
        if lo < zero_margin and hi > -zero_margin:
            raise IntervalContainsZero(
                f"bin [{lo}, {hi}) meets the zero margin {zero_margin:.1e}"
            )
    vals_full = system.eig_a.eigenvalues
    vals_comp = np.concatenate(
        [eig.eigenvalues for eig in system.eig_channels]
        + [np.zeros(system.n)]
    )
    cf = np.histogram(vals_full, bins=e)[0]
    cc = np.histogram(vals_comp, bins=e)[0]
    total = max(1, int(cc.sum()))
    distance = float(np.abs(cf - cc).max() / total)
    return WeylComparison(
        edges=e, counts_full=cf, counts_comparison=cc, distance=distance
    )

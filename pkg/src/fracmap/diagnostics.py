"""Regularity probes on computed minimizers.

Everything here is a pure function of (field, kernel, config): Caccioppoli
ratios, decay of the normalized energy, blow-up normalization, singular-set
detection via persistent energy concentration, Campanato-based Hölder
exponent fitting, reverse-Hölder (higher integrability) probes, and the
hole-filling iteration consistency check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy import ndimage
from scipy.optimize import nnls

from .energy import (_SPHERE_AREA, FieldMap, KernelTable, _row_pair_sums,
                     campanato_quotient, localized_energy, mean_value)
from .grid import BallSpec, ball_indices


def cellwise_energy(field: FieldMap, kernel: KernelTable,
                    tail: str = "auto") -> np.ndarray:
    """Per-cell localized-energy contributions e_i = sum_j w_ij |u_i-u_j|^p.

    Localized energies over any region are then plain partial sums, which
    makes multi-scale sweeps cheap. Includes the per-cell analytic tail
    term when exterior data is constant and tail="auto".
    """
    M = kernel.grid.num_cells
    idx = np.arange(M)
    rows = _row_pair_sums(field.values, kernel.weights, idx, idx,
                          kernel.params.p)
    if tail == "auto":
        c = field.exterior_constant()
        if c is not None:
            params = kernel.params
            grid = kernel.grid
            D = grid.boundary_distance(grid.centers)
            mag = np.linalg.norm(field.values - c[None, :], axis=1) ** params.p
            rows = rows + (grid.cell_volume * mag * _SPHERE_AREA[params.n]
                           * D ** (-params.sp) / params.sp)
    return rows


# ---------------------------------------------------------------------------
# Caccioppoli sweep
# ---------------------------------------------------------------------------

@dataclass
class CaccioppoliReport:
    x0: tuple
    entries: list          # dicts: rho, lhs, rhs_core, ratio, resolved
    sup_ratio: float
    meta: dict = dc_field(default_factory=dict)

    def to_dict(self):
        return {"x0": list(self.x0), "entries": self.entries,
                "sup_ratio": self.sup_ratio, "meta": self.meta}


def caccioppoli_sweep(field: FieldMap, kernel: KernelTable, x0,
                      rhos) -> CaccioppoliReport:
    """Measure the interior-energy / oscillation-term ratio over a rho sweep.

    lhs = localized energy over B_rho, rhs_core = rho^(-sp) times the
    p-oscillation integral over B_(6 rho); the sup of lhs/rhs_core over
    resolved radii is the empirical comparison constant.
    """
    grid = kernel.grid
    params = kernel.params
    x0 = np.asarray(x0, dtype=float)
    for rho in rhos:
        if np.any(x0 - 6 * rho < grid.lo) or np.any(x0 + 6 * rho > grid.hi):
            raise ValueError(
                f"B_(6rho) must fit inside the interior box (rho={rho})")
    entries = []
    ratios = []
    for rho in sorted(rhos):
        lhs = localized_energy(field, kernel, BallSpec(tuple(x0), rho))
        big = BallSpec(tuple(x0), 6.0 * rho)
        rhs = rho ** (-params.sp) * campanato_quotient(
            field, big, lam=0.0, p=params.p)
        resolved = rho >= 2.0 * grid.h
        if rhs > 0:
            ratio = lhs / rhs
        else:
            ratio = 0.0 if lhs == 0.0 else math.inf
        entries.append({"rho": rho, "lhs": lhs, "rhs_core": rhs,
                        "ratio": ratio, "resolved": bool(resolved)})
        if resolved:
            ratios.append(ratio)
    sup_ratio = max(ratios) if ratios else 0.0
    return CaccioppoliReport(
        x0=tuple(x0), entries=entries, sup_ratio=sup_ratio,
        meta={"s": params.s, "p": params.p, "h": grid.h})


# ---------------------------------------------------------------------------
# decay probe
# ---------------------------------------------------------------------------

@dataclass
class DecayReport:
    x0: tuple
    R: float
    theta: float
    e_R: float
    e_thetaR: float
    ratio: float | None    # None when vacuous (both energies zero)
    small: bool
    eps1: float
    meta: dict = dc_field(default_factory=dict)

    def to_dict(self):
        return {"x0": list(self.x0), "R": self.R, "theta": self.theta,
                "e_R": self.e_R, "e_thetaR": self.e_thetaR,
                "ratio": self.ratio, "small": self.small, "eps1": self.eps1,
                "meta": self.meta}


def decay_probe(field: FieldMap, kernel: KernelTable, x0, R: float,
                theta: float, eps1: float) -> DecayReport:
    """Compare normalized energies at radii R and theta R around x0."""
    if not (0.0 < theta < 0.5):
        raise ValueError(f"theta must lie in (0, 1/2), got {theta}")
    grid = kernel.grid
    if theta * R < 2.0 * grid.h:
        raise ValueError(
            f"theta * R = {theta * R} is under-resolved (< 2h = {2 * grid.h})")
    params = kernel.params
    e_R = R ** params.sp_minus_n * localized_energy(
        field, kernel, BallSpec(tuple(x0), R))
    e_tR = (theta * R) ** params.sp_minus_n * localized_energy(
        field, kernel, BallSpec(tuple(x0), theta * R))
    if e_R == 0.0:
        ratio = None if e_tR == 0.0 else math.inf
    else:
        ratio = e_tR / e_R
    return DecayReport(x0=tuple(np.asarray(x0, dtype=float)), R=R,
                       theta=theta, e_R=e_R, e_thetaR=e_tR, ratio=ratio,
                       small=e_R < eps1, eps1=eps1,
                       meta={"s": params.s, "p": params.p, "h": grid.h})


# ---------------------------------------------------------------------------
# blow-up normalization
# ---------------------------------------------------------------------------

def blowup_normalize(field: FieldMap, kernel: KernelTable,
                     ball: BallSpec) -> FieldMap:
    """Shift to zero ball-mean and rescale to unit localized ball energy.

    v = (u - mean_ball) / eps with eps^p the localized energy; by
    p-homogeneity the output's localized energy over the ball is exactly 1.
    """
    e = localized_energy(field, kernel, ball)
    if e <= 0.0:
        raise ValueError("cannot normalize a field with zero ball energy")
    idx = ball_indices(kernel.grid, ball)
    m = mean_value(field, idx)
    eps = e ** (1.0 / kernel.params.p)
    out = field.copy()
    out.values[:] = (field.values - m[None, :]) / eps
    # second pass: for tiny-amplitude fields the first mean/energy
    # evaluations lose digits to cancellation, so re-center and rescale
    # once more at O(1) amplitude where both are accurate
    out.values -= mean_value(out, idx)[None, :]
    e2 = localized_energy(out, kernel, ball)
    if e2 > 0.0:
        out.values /= e2 ** (1.0 / kernel.params.p)
    return out


# ---------------------------------------------------------------------------
# singular-set detection
# ---------------------------------------------------------------------------

@dataclass
class SingularSetReport:
    eps1: float
    scales: list
    flagged: list              # interior cell indices
    curves: dict               # cell index -> list of normalized energies
    clusters: list             # dicts: cells, centroid, size
    density_argmax: int        # interior cell with largest energy density
    meta: dict = dc_field(default_factory=dict)

    def to_dict(self):
        return {"eps1": self.eps1, "scales": self.scales,
                "flagged": [int(i) for i in self.flagged],
                "curves": {str(k): v for k, v in self.curves.items()},
                "clusters": self.clusters,
                "density_argmax": int(self.density_argmax),
                "meta": self.meta}


def singular_detect(field: FieldMap, kernel: KernelTable, eps1: float,
                    scales) -> SingularSetReport:
    """Flag cells whose normalized energy exceeds eps1 at every scale.

    The discrete surrogate of persistent concentration as R -> 0; the
    flagged set is antitone in eps1 by construction. Flagged cells are
    grouped into lattice-adjacent clusters.
    """
    grid = kernel.grid
    params = kernel.params
    if eps1 <= 0:
        raise ValueError("eps1 must be positive")
    scales = sorted(scales)
    if scales[0] < 2.0 * grid.h:
        raise ValueError(f"all scales must be >= 2h = {2 * grid.h}")
    cell_e = cellwise_energy(field, kernel)
    interior = grid.interior_indices()
    centers = grid.centers
    curves = {}
    flagged = []
    for i in interior:
        vals = []
        for R in scales:
            d2 = np.sum((centers - centers[i][None, :]) ** 2, axis=1)
            inside = d2 < R * R
            vals.append(R ** params.sp_minus_n * float(cell_e[inside].sum()))
        if min(vals) > eps1:
            flagged.append(int(i))
            curves[int(i)] = vals
    clusters = _cluster(grid, flagged)
    dens_argmax = int(interior[np.argmax(cell_e[interior])])
    return SingularSetReport(
        eps1=eps1, scales=list(scales), flagged=flagged, curves=curves,
        clusters=clusters, density_argmax=dens_argmax,
        meta={"s": params.s, "p": params.p, "h": grid.h,
              "R_min": scales[0], "R_max": scales[-1]})


def _cluster(grid, flagged):
    """Connected components of flagged cells under lattice adjacency."""
    if not flagged:
        return []
    lat = grid.lattice
    lo = lat.min(axis=0)
    shape = lat.max(axis=0) - lo + 1
    mask = np.zeros(shape, dtype=bool)
    for i in flagged:
        mask[tuple(lat[i] - lo)] = True
    labels, num = ndimage.label(mask)
    clusters = []
    by_label = {}
    for i in flagged:
        lab = int(labels[tuple(lat[i] - lo)])
        by_label.setdefault(lab, []).append(i)
    for lab in sorted(by_label):
        cells = sorted(by_label[lab])
        centroid = grid.centers[cells].mean(axis=0)
        clusters.append({"cells": cells, "size": len(cells),
                         "centroid": centroid.tolist()})
    return clusters


# ---------------------------------------------------------------------------
# Hölder exponent fit
# ---------------------------------------------------------------------------

@dataclass
class HolderReport:
    alpha: float | None
    beta: float | None
    residual: float | None
    smooth_sentinel: bool     # all quotients vanished (constant field)
    accepted: bool            # residual below threshold
    samples: list             # dicts: z, slope, residual
    meta: dict = dc_field(default_factory=dict)

    def to_dict(self):
        return {"alpha": self.alpha, "beta": self.beta,
                "residual": self.residual,
                "smooth_sentinel": self.smooth_sentinel,
                "accepted": self.accepted, "samples": self.samples,
                "meta": self.meta}


def holder_fit(field: FieldMap, region: BallSpec, p: float, radii,
               max_centers: int = 9,
               residual_threshold: float = 0.35) -> HolderReport:
    """Fit the r-power of the Campanato quotient and convert it to alpha.

    For each sampled center z inside the region, the quotient
    Q(z, r) = r^(-n) * oscillation integral over B_r(z) behaves like
    r^(alpha p) for an alpha-Hölder field; the least-squares slope of
    log Q against log r gives beta-hat and alpha-hat = beta-hat / p.
    """
    grid = field.grid
    n = grid.n
    radii = sorted(radii)
    if len(radii) < 3:
        raise ValueError("need at least 3 radii to fit an exponent")
    rmax = radii[-1]
    cand = ball_indices(grid, region)
    cand = cand[grid.interior[cand]]
    # keep centers whose largest ball stays inside the interior box
    keep = []
    for i in cand:
        c = grid.centers[i]
        if np.all(c - rmax >= grid.lo) and np.all(c + rmax <= grid.hi):
            keep.append(i)
    if not keep:
        raise ValueError("no admissible fit centers inside the region")
    stride = max(1, len(keep) // max_centers)
    centers = keep[::stride][:max_centers]

    samples = []
    slopes, residuals = [], []
    all_zero = True
    for i in centers:
        z = grid.centers[i]
        qs = [campanato_quotient(field, BallSpec(tuple(z), r), lam=float(n),
                                 p=p) for r in radii]
        if any(q <= 0.0 for q in qs):
            continue
        all_zero = False
        logr = np.log(np.asarray(radii))
        logq = np.log(np.asarray(qs))
        coef = np.polyfit(logr, logq, 1)
        resid = float(np.sqrt(np.mean((np.polyval(coef, logr) - logq) ** 2)))
        samples.append({"z": z.tolist(), "slope": float(coef[0]),
                        "residual": resid})
        slopes.append(float(coef[0]))
        residuals.append(resid)
    if not samples:
        if all_zero:
            return HolderReport(alpha=None, beta=None, residual=None,
                                smooth_sentinel=True, accepted=False,
                                samples=[], meta={"radii": radii})
        raise ValueError("no usable Campanato quotients in the region")
    beta = float(np.mean(slopes))
    residual = float(np.mean(residuals))
    alpha = min(max(beta / p, 0.0), 1.0)
    accepted = residual <= residual_threshold
    return HolderReport(alpha=alpha, beta=beta,
                        residual=residual, smooth_sentinel=False,
                        accepted=accepted, samples=samples,
                        meta={"radii": radii, "p": p,
                              "residual_threshold": residual_threshold})


# ---------------------------------------------------------------------------
# reverse-Hölder / higher-integrability probe
# ---------------------------------------------------------------------------

@dataclass
class GehringProbe:
    gamma_field: np.ndarray    # per-cell energy-density root
    per_ball: list             # dicts: center, radius, ratio, moments
    stable_constant: float
    meta: dict = dc_field(default_factory=dict)

    def to_dict(self):
        return {"per_ball": self.per_ball,
                "stable_constant": self.stable_constant, "meta": self.meta}


def gehring_probe(field: FieldMap, kernel: KernelTable, balls, q: float,
                  pbar_list) -> GehringProbe:
    """Power-mean ratios of the energy-density root Gamma over test balls.

    Gamma_i = (sum_j w_ij |u_i - u_j|^p / h^n)^(1/p); each ball reports
    the reverse-Hölder ratio (mean Gamma^p)^(1/p) / (mean Gamma^q)^(1/q)
    (always >= 1 by the power-mean inequality) and the higher moments
    (mean Gamma^pbar)^(1/pbar) as finiteness surrogates.
    """
    params = kernel.params
    p = params.p
    if not (1.0 < q < p):
        raise ValueError(f"need 1 < q < p, got q={q}, p={p}")
    for pb in pbar_list:
        if pb <= p:
            raise ValueError(f"pbar values must exceed p, got {pb}")
    cell_e = cellwise_energy(field, kernel, tail="drop")
    gamma = (cell_e / kernel.cell_volume) ** (1.0 / p)
    per_ball = []
    ratios = []
    for ball in balls:
        idx = ball_indices(kernel.grid, ball)
        if idx.size == 0:
            continue
        g = gamma[idx]
        mp = float(np.mean(g ** p)) ** (1.0 / p)
        mq = float(np.mean(g ** q)) ** (1.0 / q)
        moments = {str(pb): float(np.mean(g ** pb)) ** (1.0 / pb)
                   for pb in pbar_list}
        ratio = None if mq == 0.0 else mp / mq
        per_ball.append({"center": list(ball.center), "radius": ball.radius,
                         "ratio": ratio, "mean_p": mp, "mean_q": mq,
                         "moments": moments})
        if ratio is not None:
            ratios.append(ratio)
    return GehringProbe(gamma_field=gamma, per_ball=per_ball,
                        stable_constant=max(ratios) if ratios else 0.0,
                        meta={"q": q, "p": p, "pbar": list(pbar_list)})


# ---------------------------------------------------------------------------
# hole-filling iteration consistency
# ---------------------------------------------------------------------------

@dataclass
class HolefillFit:
    consistent: bool
    theta: float | None
    A: float | None
    B: float | None
    residual: float | None
    sentinel: str | None = None

    def to_dict(self):
        return {"consistent": self.consistent, "theta": self.theta,
                "A": self.A, "B": self.B, "residual": self.residual,
                "sentinel": self.sentinel}


def holefill_convergence_check(radii, hvals, alpha: float = 1.0,
                               beta: float = 2.0,
                               residual_tol: float = 0.05) -> HolefillFit:
    """Fit h(r) <= theta h(R) + A/(R-r)^alpha + B/(R-r)^beta with theta < 1.

    Nonnegative least squares over all ordered radius pairs. Consistency
    requires theta < 1, a small relative residual, and h nondecreasing in
    the radius (localized energies over nested balls are monotone).
    """
    radii = np.asarray(radii, dtype=float)
    hvals = np.asarray(hvals, dtype=float)
    if radii.shape != hvals.shape or radii.size < 3:
        raise ValueError("need matching radii/hvals with at least 3 points")
    order = np.argsort(radii)
    radii, hvals = radii[order], hvals[order]
    if np.all(hvals == 0.0):
        return HolefillFit(consistent=True, theta=None, A=0.0, B=0.0,
                           residual=0.0, sentinel="identically-zero")
    if np.any(np.diff(hvals) < -1e-12 * hvals.max()):
        return HolefillFit(consistent=False, theta=None, A=None, B=None,
                           residual=None, sentinel="non-monotone")
    rows, targets = [], []
    for i in range(len(radii)):
        for j in range(i + 1, len(radii)):
            gap = radii[j] - radii[i]
            rows.append([hvals[j], gap ** (-alpha), gap ** (-beta)])
            targets.append(hvals[i])
    Amat = np.asarray(rows)
    b = np.asarray(targets)
    coef, rnorm = nnls(Amat, b)
    theta, Ac, Bc = (float(c) for c in coef)
    residual = float(rnorm / np.linalg.norm(b)) if np.linalg.norm(b) else 0.0
    consistent = theta < 1.0 - 1e-9 and residual <= residual_tol
    return HolefillFit(consistent=consistent, theta=theta, A=Ac, B=Bc,
                       residual=residual)

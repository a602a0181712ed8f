"""Target-manifold machinery: projection, tangent projectors, retractions.

The unit sphere S^(N-1) is built in; other targets are supplied through
three callables (nearest-point projection, tangent projector, shifted
retraction). The comparison-map construction replaces the interior of a
ball by a cutoff blend toward the ball mean and retracts the blend back to
the target, choosing the retraction shift by sampled energy minimization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .energy import FieldMap, KernelTable, gagliardo_energy, mean_value
from .grid import BallSpec, ball_indices

SPHERE_TUBE_EPS = 1e-8
ON_MANIFOLD_TOL = 1e-12


class DegenerateInputError(ValueError):
    """Point outside the projection tube (sphere: too close to the origin)."""


@dataclass(frozen=True)
class ManifoldSpec:
    """Target manifold with explicit projection machinery.

    kind: "sphere" or "custom".
    lambda_conn: connectivity index; the regularity hypotheses require
        lambda_conn > max(p, 2). For the sphere this is N.
    reach_rho: radius of the tubular neighborhood on which the projection
        is well defined.
    """

    kind: str
    N: int
    lambda_conn: int
    reach_rho: float
    _project: callable = None
    _tangent: callable = None
    _retract: callable = None

    @staticmethod
    def sphere(N: int) -> "ManifoldSpec":
        return ManifoldSpec(kind="sphere", N=N, lambda_conn=N, reach_rho=1.0)

    @staticmethod
    def custom(N, lambda_conn, reach_rho, project, tangent_projector,
               retraction_shifted) -> "ManifoldSpec":
        return ManifoldSpec(kind="custom", N=N, lambda_conn=lambda_conn,
                            reach_rho=reach_rho, _project=project,
                            _tangent=tangent_projector,
                            _retract=retraction_shifted)

    def assert_connectivity(self, p: float):
        """Check lambda > max(p, 2) when a run claims the theorem regime."""
        if not (self.lambda_conn > max(p, 2.0)):
            raise ValueError(
                f"connectivity index {self.lambda_conn} must exceed "
                f"max(p, 2) = {max(p, 2.0)}")

    # -- pointwise operations ------------------------------------------------

    def project(self, x):
        """Nearest-point projection; accepts (..., N) arrays."""
        x = np.asarray(x, dtype=float)
        if self.kind == "sphere":
            norms = np.linalg.norm(x, axis=-1, keepdims=True)
            if np.any(norms <= SPHERE_TUBE_EPS):
                raise DegenerateInputError(
                    "point(s) within {:.0e} of the origin".format(
                        SPHERE_TUBE_EPS))
            return x / norms
        return self._project(x)

    def tangent_projector(self, u):
        """Orthogonal projection onto T_u, as an (N, N) matrix."""
        u = np.asarray(u, dtype=float)
        if self.kind == "sphere":
            return np.eye(self.N) - np.outer(u, u)
        return self._tangent(u)

    def normal_projector(self, u):
        return np.eye(self.N) - self.tangent_projector(u)

    def project_tangent(self, u, vectors):
        """Tangential part of vectors at base points u; both (M, N).

        Sphere fast path avoids building per-point matrices.
        """
        u = np.asarray(u, dtype=float)
        v = np.asarray(vectors, dtype=float)
        if self.kind == "sphere":
            coef = np.einsum("ij,ij->i", u, v)
            return v - coef[:, None] * u
        out = np.empty_like(v)
        for i in range(v.shape[0]):
            out[i] = self.tangent_projector(u[i]) @ v[i]
        return out

    def retraction_shifted(self, x, a):
        """Shifted retraction P_a(x) = P(x - a); sphere: normalize x - a."""
        x = np.asarray(x, dtype=float)
        a = np.asarray(a, dtype=float)
        if self.kind == "sphere":
            shifted = x - a
            norms = np.linalg.norm(shifted, axis=-1, keepdims=True)
            if np.any(norms <= SPHERE_TUBE_EPS):
                raise DegenerateInputError("retraction hit its singular set")
            return shifted / norms
        return self._retract(x, a)

    def constraint_violation(self, values) -> float:
        """Max distance of values from the target (sphere: | |u|-1 |)."""
        values = np.asarray(values, dtype=float)
        if self.kind == "sphere":
            return float(np.max(np.abs(np.linalg.norm(values, axis=-1) - 1.0)))
        proj = self._project(values)
        return float(np.max(np.linalg.norm(values - proj, axis=-1)))


def taylor_remainder(manifold: ManifoldSpec, u, v) -> float:
    """Norm of (u - v) minus its tangential part at v, for u, v on the target.

    The second-order term of the projection's Taylor expansion; bounded by
    a manifold constant times |u - v|^2 (equal to |u - v|^2 / 2 on the
    unit sphere).
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    diff = u - v
    tang = manifold.tangent_projector(v) @ diff
    return float(np.linalg.norm(diff - tang))


@dataclass
class ComparisonResult:
    """Comparison map plus the shift selection diagnostics."""

    field: FieldMap
    shift: np.ndarray
    blend_energy: float      # energy of the pre-retraction blend over ball x all
    retracted_energy: float  # energy of the selected retracted map
    samples_tried: int

    @property
    def energy_ratio(self) -> float:
        if self.blend_energy == 0.0:
            return 0.0 if self.retracted_energy == 0.0 else np.inf
        return self.retracted_energy / self.blend_energy


def comparison_map(field: FieldMap, kernel: KernelTable, ball: BallSpec,
                   mean_ball: BallSpec, manifold: ManifoldSpec,
                   shift_samples: int = 64, seed: int = 0,
                   inner_fraction: float = 0.5, shift_radius: float = 0.5,
                   retry_cap: int = 8) -> ComparisonResult:
    """Cutoff blend toward the mean, retracted to the target per shifted P_a.

    Builds v = eta * mean + (1 - eta) * u with a piecewise-linear radial
    cutoff (eta = 1 inside inner_fraction * R, 0 outside R), then returns
    P_a(v) on the ball for the sampled shift a of lowest localized energy.
    Frozen cells and cells outside the ball are never changed.
    """
    grid = kernel.grid
    idx = ball_indices(grid, ball)
    idx = idx[~field.frozen[idx]]
    mean_idx = ball_indices(grid, mean_ball)
    m = mean_value(field, mean_idx)

    center = np.asarray(ball.center, dtype=float)
    r_in = inner_fraction * ball.radius
    dist = np.linalg.norm(grid.centers[idx] - center[None, :], axis=1)
    eta = np.clip((ball.radius - dist) / (ball.radius - r_in), 0.0, 1.0)

    blend = field.copy()
    blend.values[idx] = (eta[:, None] * m[None, :]
                         + (1.0 - eta[:, None]) * field.values[idx])
    blend_energy = gagliardo_energy(blend, kernel, idx, None)

    rng = np.random.default_rng(seed)
    best = None
    tried = 0
    for attempt in range(retry_cap):
        # zero shift (plain projection) is always a candidate; random
        # shifts in the ball of radius shift_radius compete with it
        shifts = [np.zeros(manifold.N)] if attempt == 0 else []
        for _ in range(shift_samples):
            a = rng.standard_normal(manifold.N)
            a *= shift_radius * rng.random() ** (1.0 / manifold.N) \
                / np.linalg.norm(a)
            shifts.append(a)
        for a in shifts:
            tried += 1
            try:
                retr = manifold.retraction_shifted(blend.values[idx], a)
            except DegenerateInputError:
                continue
            candidate = field.copy()
            candidate.values[idx] = retr
            e = gagliardo_energy(candidate, kernel, idx, None)
            if best is None or e < best[0]:
                best = (e, a, candidate)
        if best is not None:
            break
    if best is None:
        raise DegenerateInputError(
            "every sampled shift hit the retraction singular set")
    e, a, candidate = best
    return ComparisonResult(field=candidate, shift=a, blend_energy=blend_energy,
                            retracted_energy=e, samples_tried=tried)

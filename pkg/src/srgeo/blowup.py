"""Blowup experiment: rescaled finite-perimeter sets against the predicted
vertical halfspace.

Given a set E with 0 on its reduced boundary (structure already in
privileged coordinates), the run computes the dual normal at 0, predicts
the halfspace F of the tangent group, and measures per dyadic radius: the
L1 gap on a fixed window, monotonicity/invariance pairings against fixed
polynomial bumps, and both sides of the perimeter-density limit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional

import numpy as np

from .carnot import (
    HalfspacePerimeterReport,
    VerticalHalfspace,
    group_law_from_flows,
    halfspace_perimeter_unit_ball,
    vertical_halfspace,
)
from .fields import PolyVectorField, divergence
from .grids import Box, PolyBump
from .nilpotent import Grading, truncate
from .perimeter import SetRep, LevelFunc, density_ratio, dual_normal
from .poly import Polynomial

__all__ = [
    "rescale_set",
    "l1loc_gap",
    "monotonicity_pairing",
    "BlowupOptions",
    "BlowupReport",
    "blowup_run",
    "default_window",
    "standard_bumps",
]


def default_window(grading: Grading) -> Box:
    """Weighted unit box |z_j| <= 1 used for L1-loc comparison."""
    return Box.cube(1.0, grading.n)


def rescale_set(E: SetRep, p, grading: Grading, r) -> SetRep:
    """The blowup delta_{1/r} E as a level set: level_r(z) = level(delta_r z).

    Exact on polynomial levels (r is converted to an exact dyadic
    rational); the box is dilated by delta_{1/r}.
    """
    if r <= 0:
        raise ValueError("rescaling radius must be positive")
    p = np.asarray(p, dtype=float)
    factors = [float(r) ** w for w in grading.weights]
    inv = [1.0 / f for f in factors]
    box = Box(
        tuple(l * s for l, s in zip(E.box.lo, inv)),
        tuple(h * s for h, s in zip(E.box.hi, inv)),
    )
    if isinstance(E.level, Polynomial):
        level = E.level
        if np.any(p != 0):
            level = level.translate([Fraction(v) for v in p])
        rq = Fraction(r)
        level = level.scale_variables([rq**w for w in grading.weights])
        return SetRep(level, box, E.resolution, E.grad_floor)
    scale = np.asarray(factors)

    def value_fn(pts):
        return E.level.eval_batch(np.asarray(pts) * scale + p)

    def grad_fn(pts):
        return E.level.grad_batch(np.asarray(pts) * scale + p) * scale

    return SetRep(LevelFunc(value_fn, grad_fn), box, E.resolution, E.grad_floor)


def l1loc_gap(A: SetRep, B, window: Box, resolution=128) -> float:
    """Volume of (A symm. diff. B) inside the window, on a common grid."""
    res = window.resolution_tuple(resolution)
    pts = window.centers(res)
    a = A.indicator(pts)
    b = B.indicator(pts) if hasattr(B, "indicator") else B(pts)
    return float(np.sum(a != b)) * window.voxel_volume(res)


def monotonicity_pairing(E_r, X_hat: PolyVectorField, psi, window: Box,
                         resolution=96) -> float:
    """int 1_set div(psi X) dz over the support of psi.

    Nonpositive values (within quadrature tolerance) for all nonnegative
    psi certify monotonicity of the indicator along X; zero certifies
    invariance.
    """
    support = getattr(psi, "support", None) or window
    res = support.resolution_tuple(resolution)
    pts = support.centers(res)
    psi_vals = psi.value(pts)
    if np.any(psi_vals < -1e-12):
        raise ValueError("test bump must be nonnegative")
    ind = (
        E_r.indicator(pts)
        if hasattr(E_r, "indicator")
        else E_r(pts)
    ).astype(float)
    div_vals = divergence(X_hat).eval_batch(pts)
    x_psi = np.einsum("bj,bj->b", X_hat.eval_batch(pts), psi.grad(pts))
    integrand = ind * (psi_vals * div_vals + x_psi)
    return float(integrand.sum() * support.voxel_volume(res))


def standard_bumps(window: Box, offsets=(0.0, 0.3, -0.3)):
    """Three fixed polynomial bumps: one centered, two offset along axis 1."""
    half = 0.85 * np.asarray(window.widths) / 2
    center = (np.asarray(window.lo) + np.asarray(window.hi)) / 2
    bumps = []
    for off in offsets:
        c = center.copy()
        c[0] += off * half[0]
        bumps.append(PolyBump(c, half * (1 - abs(off))))
    return bumps


@dataclass(frozen=True)
class BlowupOptions:
    radii: tuple = (0.5, 0.25, 0.125, 0.0625)
    window: Optional[Box] = None
    resolution: int = 128
    pairing_resolution: int = 96
    compute_density: bool = True
    density_box: Optional[Callable] = None  # r -> Box for the CC ball at radius r
    density_resolution: tuple = (48, 48, 32)
    density_mask_opts: dict = field(default_factory=dict)
    unit_ball_box: Optional[Box] = None
    unit_ball_resolution: tuple = (48, 48, 32)
    bump_offsets: tuple = (0.0, 0.3, -0.3)


@dataclass(frozen=True)
class BlowupReport:
    radii: tuple
    l1_gap: tuple
    monotone_pairings: tuple  # per radius: tuple over bumps
    invariance_pairings: tuple  # per radius: tuple over (direction, bump)
    density_lhs: tuple  # per radius: DensityReport or None
    density_rhs: Optional[HalfspacePerimeterReport]
    nu_star: np.ndarray
    halfspace: VerticalHalfspace
    window: Box
    window_volume: float
    dropped_radii: tuple = ()

    def as_dict(self):
        return {
            "radii": list(self.radii),
            "l1_gap": list(self.l1_gap),
            "monotone_pairings": [list(v) for v in self.monotone_pairings],
            "invariance_pairings": [
                [list(row) for row in v] for v in self.invariance_pairings
            ],
            "density_lhs": [
                None
                if d is None
                else {
                    "radius": d.radius,
                    "perimeter_in_ball": d.perimeter_in_ball,
                    "ball_volume": d.ball_volume,
                    "h": d.h,
                    "ratio": d.ratio,
                    "unknown_voxels": d.unknown_voxels,
                }
                for d in self.density_lhs
            ],
            "density_rhs": None
            if self.density_rhs is None
            else {
                "perimeter": self.density_rhs.perimeter,
                "ball_volume": self.density_rhs.ball_volume,
                "ratio": self.density_rhs.ratio,
                "unknown_voxels": self.density_rhs.unknown_voxels,
            },
            "nu_star": [float(v) for v in self.nu_star],
            "window_volume": self.window_volume,
            "dropped_radii": list(self.dropped_radii),
        }


def _orthogonal_directions(nu_star):
    """Orthonormal basis of the control directions orthogonal to nu*."""
    from scipy.linalg import null_space

    basis = null_space(np.asarray(nu_star, dtype=float)[None, :])
    return [basis[:, k] for k in range(basis.shape[1])]


def blowup_run(S, E: SetRep, p, grading: Optional[Grading] = None,
               opts: BlowupOptions = BlowupOptions()) -> BlowupReport:
    """Full blowup experiment at a non-characteristic boundary point.

    Requires the structure in privileged coordinates at p with step 2 and
    the isotropy criterion satisfied (group law must exist); refuses
    characteristic points with a diagnostic.
    """
    p = np.asarray(p, dtype=float)
    if np.any(p != 0):
        S = S.translated(p)
        if not isinstance(E.level, Polynomial):
            raise TypeError("blowup at p != 0 needs a polynomial level set")
        E = E.with_level(E.level.translate([Fraction(v) for v in p]))
        p = np.zeros(S.dim)

    level_at_p = float(E.values(p[None, :])[0])
    if abs(level_at_p) > 1e-9:
        raise ValueError(
            f"p is not on the boundary of E (level value {level_at_p:.3g})"
        )
    if grading is None:
        grading = Grading.from_flag(S)
    NA = truncate(S, grading)
    group_law_from_flows(NA)  # validates step-2 + isotropy criterion

    nu_star = dual_normal(S, E, p)  # raises CharacteristicPointError
    F = vertical_halfspace(nu_star, NA)
    X_mono = F.direction
    orth_fields = []
    for c in _orthogonal_directions(nu_star):
        X = PolyVectorField.zero(NA.dim)
        for ci, Xi in zip(c, NA.truncated_frame):
            if ci != 0:
                X = X + float(ci) * Xi
        orth_fields.append(X)

    window = opts.window or default_window(grading)
    window_volume = window.volume
    bumps = standard_bumps(window, opts.bump_offsets)

    l1 = []
    mono = []
    invar = []
    density_lhs = []
    dropped = []
    for r in opts.radii:
        E_r = rescale_set(E, np.zeros(S.dim), grading, r)
        l1.append(l1loc_gap(E_r, F, window, opts.resolution))
        mono.append(
            tuple(
                monotonicity_pairing(E_r, X_mono, psi, window,
                                     opts.pairing_resolution)
                for psi in bumps
            )
        )
        invar.append(
            tuple(
                tuple(
                    monotonicity_pairing(E_r, X, psi, window,
                                         opts.pairing_resolution)
                    for psi in bumps
                )
                for X in orth_fields
            )
        )
        if opts.compute_density:
            box_r = (
                opts.density_box(r)
                if opts.density_box is not None
                else _default_density_box(grading, r)
            )
            try:
                density_lhs.append(
                    density_ratio(
                        S, E, np.zeros(S.dim), r, box_r,
                        opts.density_resolution,
                        mask_opts=dict(opts.density_mask_opts),
                    )
                )
            except Exception:
                density_lhs.append(None)
                dropped.append(r)
        else:
            density_lhs.append(None)

    density_rhs = None
    if opts.compute_density:
        ball_box = opts.unit_ball_box or _default_density_box(grading, 1.0)
        density_rhs = halfspace_perimeter_unit_ball(
            F, NA, ball_box, opts.unit_ball_resolution,
            mask_opts=dict(opts.density_mask_opts),
        )

    return BlowupReport(
        radii=tuple(opts.radii),
        l1_gap=tuple(l1),
        monotone_pairings=tuple(mono),
        invariance_pairings=tuple(invar),
        density_lhs=tuple(density_lhs),
        density_rhs=density_rhs,
        nu_star=nu_star,
        halfspace=F,
        window=window,
        window_volume=window_volume,
        dropped_radii=tuple(dropped),
    )


def _default_density_box(grading: Grading, r) -> Box:
    """Conservative box covering the CC ball of radius r (heuristic)."""
    halves = []
    for w in grading.weights:
        if w == 1:
            halves.append(1.1 * r)
        else:
            halves.append(0.35 * r**w)
    return Box.from_half_widths(halves)

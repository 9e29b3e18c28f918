"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Criteria 4, 5, 7 and 9 are solver- and grid-heavy; the whole module is
sized to finish within the stated per-criterion budgets on a laptop-class
machine.
"""

import math
import time
from fractions import Fraction

import numpy as np
import pytest

from srgeo.blowup import BlowupOptions, blowup_run
from srgeo.builtins import make_structure
from srgeo.carnot import (
    group_law_from_flows,
    left_invariance_check,
    triangular_flow,
    vertical_halfspace,
)
from srgeo.ccdist import (
    SolverOptions,
    control_graph_distance,
    distance,
    distance_many,
    tangent_convergence,
)
from srgeo.errors import CharacteristicPointError, HormanderError
from srgeo.fields import PolyVectorField, lie_bracket, pair_distributional
from srgeo.grammar import parse_vector_field
from srgeo.grids import Box, GaussianBump, GridFunction
from srgeo.metric import quadratic_form
from srgeo.nilpotent import Grading, dilate, remainder_rescale, truncate
from srgeo.perimeter import (
    SetRep,
    dual_normal,
    flow_estimator,
    geometric_normal,
    mollified_estimator,
    surface_estimator,
)
from srgeo.poly import Polynomial
from srgeo.structure import SubRiemannianStructure, growth_vector, point_flag


def report(num, ok, detail):
    status = "PASS" if ok else "FAIL"
    print(f"\nACCEPTANCE {num}: {status} - {detail}")
    assert ok, f"criterion {num}: {detail}"


def x(i, n):
    return Polynomial.variable(i, n)


def random_poly_field(rng, n, max_deg=3):
    comps = []
    for _ in range(n):
        terms = {}
        for _t in range(int(rng.integers(1, 4))):
            expo = tuple(int(e) for e in rng.integers(0, 2, n))
            while sum(expo) > max_deg:
                expo = tuple(int(e) for e in rng.integers(0, 2, n))
            terms[expo] = Fraction(int(rng.integers(-3, 4)), int(rng.integers(1, 4)))
        comps.append(Polynomial(n, terms))
    return PolyVectorField(comps)


def test_criterion_1_symbolic_exactness():
    t0 = time.time()
    H = make_structure("heisenberg")
    ok = lie_bracket(H.frame[0], H.frame[1]) == PolyVectorField.coordinate(2, 3)
    G_ok = lie_bracket(
        PolyVectorField.coordinate(0, 2), parse_vector_field("x1*d2", 2)
    ) == PolyVectorField.coordinate(1, 2)
    rng = np.random.default_rng(0)
    fields = []
    for n in (2, 3, 4):
        fields.extend(random_poly_field(rng, n) for _ in range(34))
    fields = fields[:100]
    jacobi_ok = True
    by_dim = {}
    for f in fields:
        by_dim.setdefault(f.dim, []).append(f)
    for dim_fields in by_dim.values():
        for i in range(0, len(dim_fields) - 2, 3):
            X, Y, Z = dim_fields[i : i + 3]
            s = (
                lie_bracket(X, lie_bracket(Y, Z))
                + lie_bracket(Y, lie_bracket(Z, X))
                + lie_bracket(Z, lie_bracket(X, Y))
            )
            jacobi_ok = jacobi_ok and s.is_zero
    dt = time.time() - t0
    report(
        1,
        ok and G_ok and jacobi_ok and dt < 1.0,
        f"Heisenberg bracket, Grushin bracket, Jacobi on 100 fields exact "
        f"({dt:.2f}s < 1s)",
    )


def test_criterion_2_flags():
    t0 = time.time()
    checks = []
    for n in (2, 3, 5):
        flag = point_flag(make_structure(f"euclidean:{n}"), np.zeros(n))
        checks.append(flag.growth == (n,) and flag.weights == (1,) * n and flag.Q == n)
    H = make_structure("heisenberg")
    flag = point_flag(H, [0.2, -0.1, 0.4])
    checks.append(flag.growth == (2, 3) and flag.weights == (1, 1, 2) and flag.Q == 4)
    G = make_structure("grushin")
    checks.append(growth_vector(G, [0, 0]) == (1, 2))
    checks.append(growth_vector(G, [0.5, 0.3]) == (2,))
    S = make_structure("singruppo")
    checks.append(growth_vector(S, [0.1, 0.2, 0.0]) == (2, 3))
    checks.append(growth_vector(S, [0.1, 0.2, 0.3]) == (3,))
    C = make_structure("contact_corank1_standard:5")
    checks.append(growth_vector(C, [0.3, 0.1, -0.2, 0.4, 0.0]) == (4, 5))
    dt = time.time() - t0
    report(2, all(checks) and dt < 5.0, f"all stated growth/weights/Q exact ({dt:.2f}s < 5s)")


def test_criterion_3_nilpotent_approximation():
    t0 = time.time()
    S = make_structure("singruppo")
    H = make_structure("heisenberg")
    NA = truncate(S, Grading((1, 1, 2)))
    sing_ok = (
        NA.truncated_frame[0] == H.frame[0]
        and NA.truncated_frame[1] == H.frame[1]
        and NA.truncated_frame[2].is_zero
    )
    G = make_structure("grushin")
    NAg = truncate(G, Grading((1, 2)))
    grush_ok = all(Xh == X for Xh, X in zip(NAg.truncated_frame, G.frame))
    R3 = parse_vector_field("x3*x3*d3", 3)
    resc_ok = True
    for r in (Fraction(1, 2), Fraction(1, 3), Fraction(3, 4)):
        Y = remainder_rescale(R3, Grading((1, 1, 2)), r)
        expect = PolyVectorField(
            [Polynomial.zero(3), Polynomial.zero(3),
             Polynomial(3, {(0, 0, 2): r**3})]
        )
        resc_ok = resc_ok and Y == expect
    dt = time.time() - t0
    report(
        3,
        sing_ok and grush_ok and resc_ok and dt < 1.0,
        f"singruppo -> Heisenberg frame, Grushin identity, r^3 rescaling exact "
        f"({dt:.2f}s < 1s)",
    )


def test_criterion_4_distance_solver():
    t0 = time.time()
    rng = np.random.default_rng(42)
    E2 = make_structure("euclidean:2")
    H = make_structure("heisenberg")
    opts = SolverOptions(restarts=6, maxiter=250, max_refinements=2, seed=0)

    euclid = distance(E2, [0, 0], [3, 4], opts)
    euclid_ok = euclid.converged and abs(euclid.value - 5.0) <= 0.05

    unit = distance(H, [0, 0, 0], [1, 0, 0], opts)
    unit_ok = unit.converged and abs(unit.value - 1.0) <= 0.01

    # homogeneity on 10 sampled z
    zs = np.stack(
        [
            rng.uniform(-0.4, 0.4, 10),
            rng.uniform(-0.4, 0.4, 10),
            rng.uniform(-0.08, 0.08, 10),
        ],
        axis=1,
    )
    z2 = zs.copy()
    z2[:, :2] *= 2.0
    z2[:, 2] *= 4.0
    starts = np.zeros((20, 3))
    targets = np.vstack([zs, z2])
    res = distance_many(H, starts, targets, opts)
    d1 = np.array([r.value for r in res[:10]])
    d2 = np.array([r.value for r in res[10:]])
    homo_err = np.max(np.abs(d2 - 2 * d1) / (2 * d1))
    homo_ok = homo_err <= 0.02 and all(r.converged for r in res)

    # triangle inequality on 30 random triples
    pts = np.stack(
        [
            rng.uniform(-0.6, 0.6, (30, 3))[:, 0],
            rng.uniform(-0.6, 0.6, (30, 3))[:, 1],
            rng.uniform(-0.1, 0.1, 30),
        ],
        axis=1,
    )
    qts = np.stack(
        [
            rng.uniform(-0.6, 0.6, 30),
            rng.uniform(-0.6, 0.6, 30),
            rng.uniform(-0.1, 0.1, 30),
        ],
        axis=1,
    )
    rts = np.stack(
        [
            rng.uniform(-0.6, 0.6, 30),
            rng.uniform(-0.6, 0.6, 30),
            rng.uniform(-0.1, 0.1, 30),
        ],
        axis=1,
    )
    starts = np.vstack([pts, pts, qts])
    targets = np.vstack([rts, qts, rts])
    res = distance_many(H, starts, targets, opts)
    d_xz = np.array([r.value for r in res[:30]])
    d_xy = np.array([r.value for r in res[30:60]])
    d_yz = np.array([r.value for r in res[60:]])
    tri_violation = np.max((d_xz - d_xy - d_yz) / np.maximum(d_xz, 1e-9))
    tri_ok = tri_violation <= 0.03

    # control-graph oracle (an independent feasible-path upper bound)
    oracle = control_graph_distance(
        H, [0, 0, 0], [0.8, 0.0, 0.0], Box.from_half_widths([1.1, 1.1, 0.3]),
        c_max=3, K=48,
    )
    hop = distance(H, oracle.end_state, [0.8, 0.0, 0.0],
                   SolverOptions(restarts=2, fixed_n=16, maxiter=80)).value
    solver_val = distance(H, [0, 0, 0], [0.8, 0.0, 0.0], opts).value
    oracle_ok = solver_val <= (oracle.value + hop) * 1.005

    dt = time.time() - t0
    report(
        4,
        euclid_ok and unit_ok and homo_ok and tri_ok and oracle_ok and dt < 600,
        f"euclid {euclid.value:.4f}, heis {unit.value:.4f}, homogeneity err "
        f"{homo_err:.3%} <= 2%, triangle slack {tri_violation:.3%} <= 3%, "
        f"oracle bound respected ({dt:.0f}s < 600s)",
    )


def test_criterion_5_tangent_convergence():
    t0 = time.time()
    S = make_structure("singruppo")
    NA = truncate(S, Grading((1, 1, 2)))
    rep = tangent_convergence(
        S,
        NA,
        R=1.0,
        eps_schedule=(0.5, 0.25, 0.125),
        pairs=20,
        opts=SolverOptions(restarts=6, maxiter=400, fixed_n=32,
                           mu_schedule=(1e2, 1e3, 1e4, 1e5, 1e6)),
        seed=0,
        box_shrink=0.7,
    )
    sups = rep.sup_gaps
    decreasing = sups[0] > sups[1] > sups[2]
    final_ok = sups[2] < 0.1 * sups[0]
    clean = all(not exc for exc in rep.excluded)
    dt = time.time() - t0
    report(
        5,
        decreasing and final_ok and clean and dt < 900,
        f"sup gaps {[f'{s:.2e}' for s in sups]} strictly decreasing, final < "
        f"10% of initial ({dt:.0f}s < 900s)",
    )


def test_criterion_6_group_law():
    t0 = time.time()
    H = make_structure("heisenberg")
    NA = truncate(H, Grading((1, 1, 2)))
    law = group_law_from_flows(NA)
    rng = np.random.default_rng(3)
    worst_bch = 0.0
    worst_axioms = 0.0
    for _ in range(20):
        a, b, c = (rng.uniform(-1, 1, 3) for _ in range(3))
        V = law.solve_algebra_element(a)
        W = law.solve_algebra_element(b)
        Z = V + W + 0.5 * lie_bracket(V, W)
        bch = triangular_flow(Z, np.zeros(3), 1.0, NA.grading.weights)
        worst_bch = max(worst_bch, float(np.max(np.abs(bch - law.evaluate(a, b)))))
        worst_axioms = max(
            worst_axioms,
            float(np.max(np.abs(law.evaluate(np.zeros(3), a) - a))),
            float(np.max(np.abs(law.evaluate(a, law.inverse(a))))),
            float(
                np.max(
                    np.abs(
                        law.evaluate(law.evaluate(a, b), c)
                        - law.evaluate(a, law.evaluate(b, c))
                    )
                )
            ),
            float(
                np.max(
                    np.abs(
                        dilate(law.evaluate(a, b), NA.grading, 1.7)
                        - law.evaluate(
                            dilate(a, NA.grading, 1.7), dilate(b, NA.grading, 1.7)
                        )
                    )
                )
            ),
        )
    inv = left_invariance_check(law, NA, pairs=10, seed=5)
    dt = time.time() - t0
    report(
        6,
        worst_bch <= 1e-8 and worst_axioms <= 1e-8 and inv.passed and dt < 5,
        f"BCH gap {worst_bch:.1e} <= 1e-8, axiom gap {worst_axioms:.1e} <= 1e-8 "
        f"({dt:.2f}s < 5s)",
    )


def test_criterion_7_perimeter_cross_validation():
    t0 = time.time()
    results = []

    E2 = make_structure("euclidean:2")
    Ea = SetRep(x(0, 2), Box.cube(1.0, 2), 128)
    surf = surface_estimator(E2, Ea)
    moll = mollified_estimator(E2, Ea)
    flow_v = flow_estimator(E2, Ea, E2.frame[0])
    truth = 2.0
    results.append(("euclid", surf.total_variation, moll.total_variation, flow_v, truth))

    G = make_structure("grushin")
    Eb = SetRep(x(1, 2) - Fraction(1, 2), Box((0, 0), (1, 1)), 128)
    surf_b = surface_estimator(G, Eb)
    moll_b = mollified_estimator(G, Eb)
    flow_b = flow_estimator(G, Eb, G.frame[1])
    results.append(
        ("grushin", surf_b.total_variation, moll_b.total_variation, flow_b, 0.5)
    )

    H = make_structure("heisenberg")
    Ec = SetRep(x(0, 3), Box.cube(1.0, 3), 128)
    surf_c = surface_estimator(H, Ec)
    moll_c = mollified_estimator(H, Ec)
    flow_c = flow_estimator(H, Ec, H.frame[0])
    results.append(("heis", surf_c.total_variation, moll_c.total_variation, flow_c, 4.0))

    ok = True
    details = []
    for name, s, m, f, truth in results:
        rel = lambda a, b: abs(a - b) / abs(b)
        case_ok = rel(s, truth) <= 0.05 and rel(m, s) <= 0.05 and rel(f, s) <= 0.05
        ok = ok and case_ok
        details.append(f"{name}: surf {s:.3f} moll {m:.3f} flow {f:.3f} truth {truth}")
    dt = time.time() - t0
    report(7, ok and dt < 300, "; ".join(details) + f" all within 5% ({dt:.0f}s < 300s)")


def test_criterion_8_riesz_normals():
    t0 = time.time()
    rng = np.random.default_rng(11)
    cases = [
        ("euclidean:2", x(0, 2) * x(0, 2) + x(1, 2) * x(1, 2) - Fraction(1, 4),
         Box.cube(1.0, 2)),
        ("grushin", x(0, 2) * x(0, 2) + x(1, 2) * x(1, 2) - Fraction(1, 4),
         Box.cube(1.0, 2)),
        ("heisenberg",
         x(0, 3) * x(0, 3) + x(1, 3) * x(1, 3) + x(2, 3) * x(2, 3) - Fraction(1, 4),
         Box.cube(1.0, 3)),
        ("singruppo",
         x(0, 3) * x(0, 3) + x(1, 3) * x(1, 3) + x(2, 3) * x(2, 3) - Fraction(1, 4),
         Box.cube(1.0, 3)),
    ]
    norm_ok = True
    for name, level, box in cases:
        S = make_structure(name)
        E = SetRep(level, box, 48)
        checked = 0
        tries = 0
        while checked < 50 and tries < 500:
            tries += 1
            u = rng.standard_normal(S.dim)
            p = 0.5 * u / np.linalg.norm(u)
            try:
                gn = geometric_normal(S, E, p, check_tol=1e-6)
            except (CharacteristicPointError, AssertionError):
                continue
            q = quadratic_form(S, p, gn.vector)
            norm_ok = norm_ok and q.finite and abs(q.value - 1.0) <= 1e-6
            checked += 1
        norm_ok = norm_ok and checked >= 50

    # sign convention vs the distributional pairing, 5%
    E2 = make_structure("euclidean:2")
    box = Box.cube(1.0, 2)
    Eh = SetRep(x(0, 2), box, 256)
    u = GridFunction.indicator(box, 256, lambda pts: Eh.values(pts))
    phi = GaussianBump([0.0, 0.0], 0.15)
    pairing = pair_distributional(E2.frame[0], u, phi)
    ys = np.linspace(-1, 1, 4001)
    line = np.stack([np.zeros_like(ys), ys], axis=1)
    sigma = np.trapezoid(phi.value(line), ys)
    nu = dual_normal(E2, Eh, [0.0, 0.0])
    sign_ok = abs(pairing - nu[0] * sigma) <= 0.05 * abs(sigma)

    G = make_structure("grushin")
    boxg = Box((0.25, 0.0), (1.75, 1.0))
    Eg = SetRep(x(1, 2) - Fraction(1, 2), boxg, 256)
    ug = GridFunction.indicator(boxg, 256, lambda pts: Eg.values(pts))
    phig = GaussianBump([1.0, 0.5], 0.07)
    pairing_g = pair_distributional(G.frame[1], ug, phig)
    xs = np.linspace(0.25, 1.75, 4001)
    line_g = np.stack([xs, np.full_like(xs, 0.5)], axis=1)
    # d||D1_E|| = |N_X| dH^1 with N_X = (0, -x1); nu*_2 = -1 on this boundary
    sigma_g = np.trapezoid(phig.value(line_g) * xs, xs)
    sign_ok = sign_ok and abs(pairing_g - (-1.0) * sigma_g) <= 0.05 * abs(sigma_g)

    dt = time.time() - t0
    report(
        8,
        norm_ok and sign_ok and dt < 120,
        f"G(nu_E)=1 +- 1e-6 at 50 samples x 4 structures; pairing sign "
        f"consistent within 5% ({dt:.0f}s < 120s)",
    )


def test_criterion_9_blowup_headline():
    t0 = time.time()
    H = make_structure("heisenberg")
    E = SetRep(x(0, 3) + x(2, 3) * x(2, 3), Box.cube(1.0, 3), 128)

    def density_box(r):
        return Box.from_half_widths([1.05 * r, 1.05 * r, 0.1 * r * r])

    opts = BlowupOptions(
        radii=(0.5, 0.25, 0.125, 0.0625),
        resolution=128,
        pairing_resolution=96,
        compute_density=True,
        density_box=density_box,
        density_resolution=(48, 48, 24),
        unit_ball_box=density_box(1.0),
        unit_ball_resolution=(48, 48, 24),
    )
    rep = blowup_run(H, E, [0, 0, 0], opts=opts)

    halfspace_ok = bool(
        np.allclose(rep.nu_star, [-1.0, 0.0])
        and rep.halfspace.w[0] < 0
        and abs(rep.halfspace.w[1]) < 1e-12
    )
    gaps = rep.l1_gap
    vox_tol = rep.window_volume / 128**3 * 256
    decreasing = all(b <= a + vox_tol for a, b in zip(gaps, gaps[1:]))
    final_ok = gaps[-1] <= 0.05 * rep.window_volume

    quad_tol = 1e-6
    mono_ok = all(v <= quad_tol for per_bump in rep.monotone_pairings for v in per_bump)
    inv_max = [
        max((abs(v) for row in per_dir for v in row), default=0.0)
        for per_dir in rep.invariance_pairings
    ]
    # invariance pairings shrink with the gap (correlation, not a constant)
    gap_floor = [max(g, vox_tol) for g in gaps]
    ratios = [m / g for m, g in zip(inv_max, gap_floor)]
    inv_ok = inv_max[-1] <= max(3.0 * ratios[0] * gap_floor[-1], 5e-4)

    lhs = rep.density_lhs[-1]
    rhs = rep.density_rhs
    density_ok = (
        lhs is not None
        and rhs is not None
        and abs(lhs.ratio - rhs.ratio) <= 0.10 * rhs.ratio
    )
    # two-sided density bounds across the whole schedule
    all_ratios = [d.ratio for d in rep.density_lhs if d is not None]
    density_ok = density_ok and len(all_ratios) == len(rep.radii)
    density_ok = density_ok and all(
        0.5 * rhs.ratio <= v <= 1.5 * rhs.ratio for v in all_ratios
    )
    dt = time.time() - t0
    report(
        9,
        halfspace_ok and decreasing and final_ok and mono_ok and inv_ok
        and density_ok and dt < 1800,
        f"gaps {[f'{g:.2e}' for g in gaps]} decreasing, final <= 5% of window; "
        f"monotone pairings <= {quad_tol}; invariance max {inv_max[-1]:.1e}; "
        f"density lhs {lhs.ratio if lhs else float('nan'):.4f} vs rhs "
        f"{rhs.ratio if rhs else float('nan'):.4f} within 10% ({dt:.0f}s < 1800s)",
    )


def test_criterion_10_degenerate_input_honesty():
    t0 = time.time()
    H = make_structure("heisenberg")
    E = SetRep(x(2, 3), Box.cube(1.0, 3), 32)
    refused = False
    try:
        blowup_run(H, E, [0, 0, 0],
                   opts=BlowupOptions(compute_density=False, resolution=32))
    except CharacteristicPointError:
        refused = True

    hormander_flagged = False
    S = SubRiemannianStructure(2, [PolyVectorField.coordinate(0, 2)])
    try:
        point_flag(S, [0.0, 0.0])
    except HormanderError as err:
        hormander_flagged = err.achieved_dim == 1
    dt = time.time() - t0
    report(
        10,
        refused and hormander_flagged and dt < 1.0,
        f"characteristic blowup refused; non-Hormander frame rejected with "
        f"achieved dimension 1 ({dt:.2f}s < 1s)",
    )

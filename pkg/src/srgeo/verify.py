"""Property suite behind the ``verify`` CLI subcommand.

Each check returns (name, passed, detail).  Checks that need capabilities
the structure lacks (polynomial frame, privileged coordinates at 0,
step-2 group) are skipped silently rather than failed.
"""

from __future__ import annotations

import numpy as np

from .ccdist import SolverOptions, distance_many
from .errors import SrgeoError
from .fields import flow, lie_bracket
from .metric import quadratic_form, scalar_product
from .nilpotent import Grading, dilate, nilpotency_check, truncate
from .structure import growth_vector


def _bracket_checks(S, rng):
    rows = []
    if not S.is_polynomial:
        X, Y = S.frame[0], S.frame[1]
        pts = rng.uniform(-0.5, 0.5, (5, S.dim))
        from .structure import _bracket_any

        B1 = _bracket_any(X, Y).eval_batch(pts)
        B2 = _bracket_any(Y, X).eval_batch(pts)
        err = float(np.max(np.abs(B1 + B2)))
        rows.append(("bracket_antisymmetry", err < 1e-10, f"max |[X,Y]+[Y,X]| = {err:.2e}"))
        return rows
    X, Y = S.frame[0], S.frame[-1]
    anti = lie_bracket(X, Y) + lie_bracket(Y, X)
    rows.append(("bracket_antisymmetry", anti.is_zero, "exact"))
    if len(S.frame) >= 2:
        Z = S.frame[1]
        jac = (
            lie_bracket(X, lie_bracket(Y, Z))
            + lie_bracket(Y, lie_bracket(Z, X))
            + lie_bracket(Z, lie_bracket(X, Y))
        )
        rows.append(("jacobi_identity", jac.is_zero, "exact"))
    return rows


def _flag_check(S):
    try:
        g = growth_vector(S, np.zeros(S.dim))
        return [("hormander_at_origin", g[-1] == S.dim, f"growth {g}")]
    except SrgeoError as exc:
        return [("hormander_at_origin", False, str(exc))]


def _metric_checks(S, rng):
    rows = []
    worst = 0.0
    tried = 0
    for _ in range(12):
        x = rng.uniform(-0.8, 0.8, S.dim)
        A = S.frame_matrix(x)
        c1, c2 = rng.standard_normal(len(S.frame)), rng.standard_normal(len(S.frame))
        v, w = A @ c1, A @ c2
        Gv = quadratic_form(S, x, v)
        Gw = quadratic_form(S, x, w)
        Gp = quadratic_form(S, x, v + w)
        Gm = quadratic_form(S, x, v - w)
        if not (Gv.finite and Gw.finite and Gp.finite and Gm.finite):
            continue
        tried += 1
        lhs = Gp.value + Gm.value
        rhs = 2 * Gv.value + 2 * Gw.value
        worst = max(worst, abs(lhs - rhs) / max(rhs, 1e-12))
        sym = abs(
            scalar_product(S, x, v, w) - scalar_product(S, x, w, v)
        )
        worst = max(worst, sym)
    rows.append(
        ("metric_parallelogram", worst < 1e-9 and tried > 0, f"max rel err {worst:.2e}")
    )
    return rows


def _flow_checks(S):
    rows = []
    if not S.is_polynomial:
        return rows
    X = S.frame[0]
    x0 = np.full(S.dim, 0.1)
    a = flow(X, x0, 0.3)
    b = flow(X, a.endpoint, 0.2)
    c = flow(X, x0, 0.5)
    err = float(np.max(np.abs(b.endpoint - c.endpoint)))
    rows.append(("flow_semigroup", err < 1e-8, f"max err {err:.2e}"))
    return rows


def _nilpotent_checks(S):
    rows = []
    if not S.is_polynomial:
        return rows
    try:
        grading = Grading.from_flag(S)
        NA = truncate(S, grading)
    except SrgeoError as exc:
        rows.append(("privileged_at_origin", False, str(exc)))
        return rows
    exact = all(
        (Xh + R) == X
        for Xh, R, X in zip(NA.truncated_frame, NA.remainders, S.frame)
    )
    rows.append(("truncation_reconstructs_frame", exact, "exact"))
    rep = nilpotency_check(NA, grading.step, original=S)
    rows.append(
        (
            "nilpotency_and_growth",
            rep.passed,
            f"growth {rep.growth_truncated} vs {rep.growth_original}",
        )
    )
    if grading.step == 2:
        rows.extend(_group_checks(NA, grading))
    return rows


def _group_checks(NA, grading):
    from .carnot import group_law_from_flows

    rows = []
    try:
        law = group_law_from_flows(NA)
    except SrgeoError as exc:
        rows.append(("group_law", True, f"not a group ({exc})"))
        return rows
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(10):
        x = rng.uniform(-1, 1, NA.dim)
        y = rng.uniform(-1, 1, NA.dim)
        z = rng.uniform(-1, 1, NA.dim)
        worst = max(worst, float(np.max(np.abs(law.evaluate(np.zeros(NA.dim), x) - x))))
        worst = max(worst, float(np.max(np.abs(law.evaluate(x, law.inverse(x))))))
        worst = max(
            worst,
            float(
                np.max(
                    np.abs(
                        law.evaluate(law.evaluate(x, y), z)
                        - law.evaluate(x, law.evaluate(y, z))
                    )
                )
            ),
        )
        lam = 1.5
        worst = max(
            worst,
            float(
                np.max(
                    np.abs(
                        dilate(law.evaluate(x, y), grading, lam)
                        - law.evaluate(
                            dilate(x, grading, lam), dilate(y, grading, lam)
                        )
                    )
                )
            ),
        )
    rows.append(("group_invariants", worst < 1e-8, f"max err {worst:.2e}"))
    return rows


def _distance_checks(S, seed):
    opts = SolverOptions(restarts=3, fixed_n=16, maxiter=80, seed=seed)
    x = np.zeros(S.dim)
    y = np.full(S.dim, 0.2)
    y[-1] = 0.0
    res = distance_many(S, [x, y], [y, x], opts)
    d_xy, d_yx = res[0].value, res[1].value
    sym = abs(d_xy - d_yx) / max(d_xy, 1e-9)
    zero = distance_many(S, [x], [x], opts)[0].value
    ok = res[0].converged and res[1].converged and sym < 0.02 and zero < 1e-4
    return [
        (
            "distance_sanity",
            ok,
            f"d(x,y)={d_xy:.4f} d(y,x)={d_yx:.4f} d(x,x)={zero:.2e}",
        )
    ]


def run_verification(S, seed=0, fast=False):
    rng = np.random.default_rng(seed)
    rows = []
    rows.extend(_bracket_checks(S, rng))
    rows.extend(_flag_check(S))
    rows.extend(_metric_checks(S, rng))
    rows.extend(_flow_checks(S))
    rows.extend(_nilpotent_checks(S))
    if not fast:
        rows.extend(_distance_checks(S, seed))
    return rows

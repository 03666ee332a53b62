"""Randomized property suites for the calculus layers.

Each suite returns (failures, checked, detail).  They are shared by the
check-calculus CLI command and by the acceptance tests; all sampling is
driven by a caller-supplied generator so runs are reproducible.
"""

import numpy as np

from .plq import (
    PLQFunction,
    piece_critical_cones,
    prox,
    sample_domain_point,
    second_subderivative,
    subderivative,
    subdifferential,
    subgradient_dist,
)
from .polyhedral import (
    Polyhedron,
    active_rows,
    contains,
    interior_point,
    project,
    tangent_cone,
)


def prox_resolvent_suite(g: PLQFunction, rng, n_cases: int = 200, tol: float = 1e-8):
    """x - prox(x) must be a subgradient at prox(x) (resolvent identity)."""
    failures = 0
    for _ in range(n_cases):
        x = 3.0 * rng.standard_normal(g.m)
        z = prox(g, x)
        if subgradient_dist(g, z, x - z) > tol:
            failures += 1
    return failures, n_cases, "prox resolvent identity"


def subdifferential_duality_suite(g: PLQFunction, rng, n_cases: int = 200,
                                  n_dirs: int = 100, tol: float = 1e-9):
    """v in subdiff(z) iff <v, w> <= dg(z)(w) for the sampled directions.

    Subgradients must satisfy the inequality for every direction;
    non-subgradients must violate it along the separating direction.
    """
    failures = 0
    checked = 0
    for _ in range(n_cases):
        z = sample_domain_point(g, rng)
        if z is None:
            continue
        sub = subdifferential(g, z)
        v_in = project(sub, 2.0 * rng.standard_normal(g.m))
        checked += 1
        for _ in range(n_dirs):
            w = rng.standard_normal(g.m)
            dv = subderivative(g, z, w)
            if float(v_in @ w) > dv + tol * (1.0 + abs(dv) if np.isfinite(dv) else 1.0):
                failures += 1
                break
        outside = v_in + rng.standard_normal(g.m)
        gap = np.linalg.norm(outside - project(sub, outside))
        if gap > 1e-6:
            v_out = outside
            sep = v_out - project(sub, v_out)
            dirs = [sep] + [rng.standard_normal(g.m) for _ in range(5)]
            if not any(float(v_out @ w) > subderivative(g, z, w) + tol for w in dirs):
                failures += 1
    return failures, checked, "subdifferential-subderivative duality"


def _value_extended(g: PLQFunction, z):
    """g(z) in extended precision; the t^-2 quotient needs the headroom."""
    z64 = np.asarray(z, dtype=float)
    for p in g.pieces:
        if contains(p.C, z64):
            zl = np.asarray(z, dtype=np.longdouble)
            A = p.A.astype(np.longdouble)
            a = p.a.astype(np.longdouble)
            return 0.5 * (zl @ A @ zl) + a @ zl + np.longdouble(p.alpha)
    return np.longdouble(np.inf)


def second_quotient_suite(g: PLQFunction, rng, n_cases: int = 200, tol: float = 1e-8):
    """Second-order difference quotients equal the second subderivative.

    PLQ functions are exactly quadratic along critical rays near the base
    point, so the parabolic quotient matches d^2 g for every t inside the
    locally exact region (t0 scales it into that region).  The quotient
    is evaluated in extended precision: at t = 1e-4 the division by t^2/2
    amplifies double-rounding of g past the asserted tolerance.
    """
    failures = 0
    checked = 0
    for _ in range(n_cases):
        z = sample_domain_point(g, rng)
        if z is None:
            continue
        v = project(subdifferential(g, z), rng.standard_normal(g.m))
        cones = piece_critical_cones(g, z, v)
        idx = int(rng.integers(len(cones)))
        i, K = cones[idx]
        w = project(K, rng.standard_normal(g.m))
        nw = np.linalg.norm(w)
        if nw <= 1e-10:
            continue
        w = w / nw
        d2 = second_subderivative(g, z, v, w)
        if not np.isfinite(d2):
            continue
        checked += 1
        t0 = 1e-2 * (1.0 + np.linalg.norm(z)) / (1.0 + np.linalg.norm(w))
        # stay inside the locally exact region: cap at the first inactive
        # boundary of the host piece crossed along w
        C = g.pieces[i].C
        t_cross = np.inf
        if C.n_ineq:
            slack = C.b - C.A @ z
            rate = C.A @ w
            for r in range(C.n_ineq):
                if rate[r] > 1e-12 and slack[r] > 1e-12:
                    t_cross = min(t_cross, slack[r] / rate[r])
        zl = z.astype(np.longdouble)
        wl = w.astype(np.longdouble)
        vl = v.astype(np.longdouble)
        gz = _value_extended(g, zl)
        d2_host = float(w @ g.pieces[i].A @ w)
        if abs(d2_host - d2) > tol * (1.0 + abs(d2)):
            failures += 1  # piece quadratic forms disagree on a shared direction
            continue
        for t in (1e-2, 1e-3, 1e-4):
            teff = np.longdouble(min(t, t0, 0.9 * t_cross))
            quot = float((_value_extended(g, zl + teff * wl) - gz - teff * (vl @ wl))
                         / (0.5 * teff * teff))
            if not np.isfinite(quot) or abs(quot - d2) > tol * (1.0 + abs(d2)):
                failures += 1
                break
    return failures, checked, "second-order difference quotient equality"


def projection_suite(P: Polyhedron, rng, n_cases: int = 200, tol: float = 1e-9):
    """Idempotency and the variational inequality of the nearest-point map."""
    failures = 0
    inner = interior_point(P)
    if inner is None:
        return 0, 0, "projection properties (empty set skipped)"
    for _ in range(n_cases):
        z = inner + 3.0 * rng.standard_normal(P.dim)
        pz = project(P, z)
        if np.linalg.norm(project(P, pz) - pz) > tol:
            failures += 1
            continue
        x = project(P, inner + rng.standard_normal(P.dim))
        if float((z - pz) @ (x - pz)) > tol * (1.0 + np.linalg.norm(z)):
            failures += 1
    return failures, n_cases, "projection idempotency + variational inequality"


def tangent_localization_suite(P: Polyhedron, rng, n_cases: int = 100, tol: float = 1e-9):
    """w in T_P(x) iff x + w in P, for steps below the inactive-row slack."""
    failures = 0
    checked = 0
    base = interior_point(P)
    if base is None:
        return 0, 0, "tangent localization (empty set skipped)"
    for _ in range(n_cases):
        x = project(P, base + rng.standard_normal(P.dim))
        T = tangent_cone(P, x)
        act = set(active_rows(P, x))
        eps0 = 1.0
        for i in range(P.n_ineq):
            if i in act:
                continue
            slack = float(P.b[i] - P.A[i] @ x)
            eps0 = min(eps0, 0.5 * slack / max(np.linalg.norm(P.A[i]), 1e-12))
        w = rng.standard_normal(P.dim)
        w = eps0 * float(rng.uniform(0.05, 1.0)) * w / np.linalg.norm(w)
        checked += 1
        if contains(T, w, tol) != contains(P, x + w, tol):
            failures += 1
    return failures, checked, "tangent cone localization"


def moreau_polarity_suite(C, rng, n_cases: int = 100, tol: float = 1e-9):
    """<P_C v, v - P_C v> = 0 for cone projections."""
    failures = 0
    for _ in range(n_cases):
        v = 2.0 * rng.standard_normal(C.dim)
        p = project(C, v)
        if abs(float(p @ (v - p))) > tol * (1.0 + np.linalg.norm(v) ** 2):
            failures += 1
    return failures, n_cases, "Moreau polarity of cone projections"


def run_calculus_suites(g, Theta, rng, n_cases: int = 200):
    """All suites for one instance; list of (name, failures, checked)."""
    from .polyhedral import tangent_cone as _tc
    results = []
    for fn, args in [
        (prox_resolvent_suite, (g, rng, n_cases)),
        (subdifferential_duality_suite, (g, rng, max(50, n_cases // 4))),
        (second_quotient_suite, (g, rng, n_cases)),
    ]:
        failures, checked, name = fn(*args)
        results.append((name, failures, checked))
    failures, checked, name = projection_suite(Theta, rng, n_cases)
    results.append((name, failures, checked))
    failures, checked, name = tangent_localization_suite(Theta, rng, max(50, n_cases // 2))
    results.append((name, failures, checked))
    base = interior_point(Theta)
    if base is not None:
        cone = _tc(Theta, project(Theta, base))
        failures, checked, name = moreau_polarity_suite(cone, rng, max(50, n_cases // 2))
        results.append((name, failures, checked))
    return results

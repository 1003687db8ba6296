"""Residual suites, invariance tests, 2-form calculus, and the classifier.

Each check evaluates one structural identity of the Moebius invariants at a
set of sample points and reports the worst absolute residual against a pinned
tolerance.  The universal suite holds for *every* generic immersion; the flat
suites hold only on conformally flat inputs (and the negative controls are
required to violate them).  Everything frame-dependent converts coordinate
tensors to the pointwise principal orthonormal frame; eigen-decompositions
happen on plain numbers only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import dsl, moebius, riemann
from .errors import (FrameAlignmentError, GeometryError, InconsistentSignError,
                     MoebiusFormNotClosedError, NonGenericError,
                     NotConformallyFlatError, RankDeficientError)

TOL = {
    "universal": 1e-7,
    "exact": 1e-9,
    "route": 1e-7,
    "dxi": 1e-8,
    "flat": 1e-7,
    "negative": 1e-3,
    "invariance": 1e-7,
    "pointwise": 1e-7,
    "forms_rel": 2e-2,
    "forms_abs": 1e-4,
    "q": 1e-6,
    "b_degenerate": 1e-8,
}


@dataclass
class CheckRecord:
    name: str
    points_evaluated: int
    max_abs_residual: float
    tolerance: float
    passed: bool
    mode: str = "abs"

    def to_dict(self):
        return {
            "check_name": self.name,
            "points_evaluated": self.points_evaluated,
            "max_abs_residual": self.max_abs_residual,
            "tolerance": self.tolerance,
            "mode": self.mode,
            "pass": self.passed,
        }


@dataclass
class ResidualReport:
    suite: str
    checks: list = field(default_factory=list)
    skipped: list = field(default_factory=list)  # (point, reason)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def record(self, name, residuals, tol, mode="abs"):
        residuals = np.atleast_1d(np.asarray(residuals, dtype=float))
        worst = float(np.abs(residuals).max()) if residuals.size else 0.0
        self.checks.append(CheckRecord(name, int(residuals.size), worst,
                                       float(tol), worst <= tol, mode))
        return self.checks[-1]

    def to_dict(self):
        return {
            "suite": self.suite,
            "pass": self.passed,
            "checks": [c.to_dict() for c in self.checks],
            "skipped": [{"point": list(p), "reason": r}
                        for p, r in self.skipped],
        }


def sample_points(spec, n, seed, margin=0.05):
    """Deterministic uniform samples in the (slightly shrunk) box."""
    rng = np.random.default_rng(seed)
    lo = np.array([l for l, _ in spec.box])
    hi = np.array([h for _, h in spec.box])
    span = hi - lo
    return rng.uniform(lo + margin * span, hi - margin * span,
                       size=(n, len(spec.box)))


def collect(spec, points, order=5, deep=True):
    """Invariant bundles at the given points; non-generic points are skipped
    and reported, never averaged."""
    bundles, skipped = [], []
    for p in points:
        try:
            bundles.append(moebius.moebius_invariants(spec, p, order,
                                                      deep=deep))
        except (NonGenericError, RankDeficientError) as exc:
            skipped.append((tuple(float(x) for x in p), str(exc)))
    return bundles, skipped


# --- universal integrability -------------------------------------------------

def integrability_residuals(inv):
    """Pointwise residuals of the six structure relations, coordinates.

    The frame Kronecker delta transcribes to the metric; contractions raise
    indices with g.  The Ricci-structure relation and the Blaschke trace use
    the independent dN-oracle A so the checks are not vacuous.
    """
    g = inv.g.values()
    ginv = np.linalg.inv(g)
    B = riemann.tensor_values(inv.B)
    A = riemann.tensor_values(inv.A)
    C = riemann.tensor_values(inv.C)
    gB = riemann.tensor_values(inv.gradB)
    gA = riemann.tensor_values(inv.gradA)
    gC = riemann.tensor_values(inv.gradC)
    R = riemann.tensor_values(inv.pack.riem)

    out = {}
    r1 = gA - np.einsum("ikj->ijk", gA) \
        - (np.einsum("ik,j->ijk", B, C) - np.einsum("ij,k->ijk", B, C))
    out["blaschke_codazzi"] = np.abs(r1).max()

    BA = B @ ginv @ A
    r2 = gC - gC.T - (BA - BA.T)
    out["moebius_form_curl"] = np.abs(r2).max()

    r3 = gB - np.einsum("ikj->ijk", gB) \
        - (np.einsum("ij,k->ijk", g, C) - np.einsum("ik,j->ijk", g, C))
    out["b_codazzi"] = np.abs(r3).max()

    gauss = (np.einsum("ik,jl->ijkl", B, B) - np.einsum("il,jk->ijkl", B, B)
             + np.einsum("ik,jl->ijkl", g, A) + np.einsum("jl,ik->ijkl", g, A)
             - np.einsum("il,jk->ijkl", g, A) - np.einsum("jk,il->ijkl", g, A))
    out["gauss"] = np.abs(R - gauss).max()

    # frame comparison against the oracle route
    A_or = inv.oracle.A_frame
    ric_f = inv.to_frame(riemann.tensor_values(inv.pack.ric))
    Bf = np.diag(inv.b)
    trA_or = np.trace(A_or)
    r5 = ric_f - (-Bf @ Bf + trA_or * np.eye(3) + A_or)
    out["ricci_structure"] = np.abs(r5).max()

    out["trace_b"] = abs(np.einsum("ij,ij->", ginv, B))
    nb = np.einsum("ik,jl,ij,kl->", ginv, ginv, B, B)
    out["norm_b"] = abs(nb - 2.0 / 3.0)
    out["trace_a"] = abs(trA_or - (1.0 + 1.5 * inv.r_scalar) / 6.0)
    return out


def ricci_identity_residual(inv):
    """Commutator of second covariant derivatives of B against the curvature
    contraction."""
    g = inv.g.values()
    ginv = np.linalg.inv(g)
    B = riemann.tensor_values(inv.B)
    ggB = riemann.tensor_values(inv.gradgradB)
    R = riemann.tensor_values(inv.pack.riem)
    Braised = ginv @ B
    lhs = ggB - np.einsum("ijlk->ijkl", ggB)
    rhs = (np.einsum("pj,pikl->ijkl", Braised, R)
           + np.einsum("pi,pjkl->ijkl", Braised, R))
    return np.abs(lhs - rhs).max()


def check_integrability(spec, points=None, order=5, n=10, seed=0,
                        bundles=None, tol=None):
    tol = TOL["universal"] if tol is None else tol
    report = ResidualReport("integrability")
    if bundles is None:
        points = sample_points(spec, n, seed) if points is None else points
        bundles, report.skipped = collect(spec, points, order)
    per_check = {}
    for inv in bundles:
        for name, val in integrability_residuals(inv).items():
            per_check.setdefault(name, []).append(val)
    for name in ("blaschke_codazzi", "moebius_form_curl", "b_codazzi",
                 "gauss", "ricci_structure", "trace_b", "norm_b", "trace_a"):
        report.record(name, per_check.get(name, []), tol)
    return report


def check_ricci_identity(spec, points=None, order=5, n=10, seed=0,
                         bundles=None, tol=None):
    tol = TOL["universal"] if tol is None else tol
    report = ResidualReport("ricci_identity")
    if bundles is None:
        points = sample_points(spec, n, seed) if points is None else points
        bundles, report.skipped = collect(spec, points, order)
    vals = [ricci_identity_residual(inv) for inv in bundles]
    report.record("b_second_derivative_commutator", vals, tol)
    return report


# --- frames ------------------------------------------------------------------

def frame_residuals(inv):
    orc = inv.oracle
    return {
        "null_frame_relations": orc.null_frame_residual,
        "blaschke_route_agreement": np.abs(orc.A_frame - inv.A_frame).max(),
        "moebius_form_route_agreement":
            np.abs(orc.C_frame - inv.C_frame).max(),
        "moebius_form_sphere_route":
            np.abs(orc.C_frame_xi - inv.C_frame).max(),
        "b_from_sphere_derivative":
            np.abs(orc.B_frame - np.diag(inv.b)).max(),
    }


def check_frames(spec, points=None, order=5, n=10, seed=0, bundles=None):
    report = ResidualReport("frames")
    if bundles is None:
        points = sample_points(spec, n, seed) if points is None else points
        bundles, report.skipped = collect(spec, points, order)
    per_check = {}
    for inv in bundles:
        for name, val in frame_residuals(inv).items():
            per_check.setdefault(name, []).append(val)
    report.record("null_frame_relations", per_check.get(
        "null_frame_relations", []), TOL["exact"])
    report.record("blaschke_route_agreement", per_check.get(
        "blaschke_route_agreement", []), TOL["route"])
    report.record("moebius_form_route_agreement", per_check.get(
        "moebius_form_route_agreement", []), TOL["route"])
    report.record("moebius_form_sphere_route", per_check.get(
        "moebius_form_sphere_route", []), TOL["route"])
    report.record("b_from_sphere_derivative", per_check.get(
        "b_from_sphere_derivative", []), TOL["dxi"])
    return report


# --- conformal flatness --------------------------------------------------------

def schouten_codazzi_residual(inv):
    gS = riemann.tensor_values(inv.gradS)
    return np.abs(gS - np.einsum("ikj->ijk", gS)).max()


def schouten_gradient_via_b(inv):
    g = inv.g.values()
    ginv = np.linalg.inv(g)
    B = riemann.tensor_values(inv.B)
    gB = riemann.tensor_values(inv.gradB)
    gA = riemann.tensor_values(inv.gradA)
    return (-np.einsum("ilk,lm,mj->ijk", gB, ginv, B)
            - np.einsum("il,lm,mjk->ijk", B, ginv, gB) + gA)


def conformal_flatness_residuals(inv):
    gS = riemann.tensor_values(inv.gradS)
    gS_b = schouten_gradient_via_b(inv)
    return {
        "schouten_codazzi": np.abs(gS - np.einsum("ikj->ijk", gS)).max(),
        "schouten_codazzi_b_route":
            np.abs(gS_b - np.einsum("ikj->ijk", gS_b)).max(),
        "schouten_route_agreement": np.abs(gS - gS_b).max(),
    }


def check_conformal_flatness(spec, points=None, order=5, n=10, seed=0,
                             bundles=None, tol=None):
    """Codazzi test of the Schouten tensor of the Moebius metric, with the
    independent gradient route through B and A.  Returns the report; its
    first check carries the flat / non-flat verdict."""
    tol = TOL["flat"] if tol is None else tol
    report = ResidualReport("conformal_flatness")
    if bundles is None:
        points = sample_points(spec, n, seed) if points is None else points
        bundles, report.skipped = collect(spec, points, order)
    per_check = {}
    for inv in bundles:
        for name, val in conformal_flatness_residuals(inv).items():
            per_check.setdefault(name, []).append(val)
    report.record("schouten_codazzi", per_check.get("schouten_codazzi", []),
                  tol)
    report.record("schouten_codazzi_b_route",
                  per_check.get("schouten_codazzi_b_route", []), tol)
    report.record("schouten_route_agreement",
                  per_check.get("schouten_route_agreement", []), TOL["route"])
    return report


# --- flat relations -------------------------------------------------------------

def flat_relations_residuals(inv, extended=False):
    """Frame residuals of the identities specific to conformally flat
    hypersurfaces with diagonalizable structure."""
    b = inv.b
    gBf = inv.gradB_frame
    Cf = inv.C_frame
    Af = inv.A_frame
    gCf = inv.gradC_frame
    Bf = np.diag(b)
    out = {}

    res9 = []
    for i in range(3):
        for j in range(3):
            for k in range(3):
                res9.append(b[k] * gBf[i, k, j] - b[j] * gBf[i, j, k]
                            - 2.0 * (Bf[i, j] * Cf[k] - Bf[i, k] * Cf[j]))
    out["weighted_b_codazzi"] = np.abs(res9).max()

    distinct = [(i, j, k) for i in range(3) for j in range(3) for k in range(3)
                if len({i, j, k}) == 3]
    out["offdiag_b_gradient"] = max(abs(gBf[i, j, k]) for i, j, k in distinct)

    res_bji = []
    res_bii = []
    for i, j, k in distinct:
        res_bji.append(gBf[i, j, i] - 3.0 * b[i] / (b[j] - b[i]) * Cf[j])
        res_bii.append(gBf[i, i, j] - (b[i] - b[k]) / (b[j] - b[i]) * Cf[j])
    out["mixed_b_gradient_vs_c"] = np.abs(res_bji).max()
    out["eigen_b_gradient_vs_c"] = np.abs(res_bii).max()

    out["blaschke_offdiagonal"] = max(
        abs(Af[i, j]) for i in range(3) for j in range(3) if i != j)

    res18 = [b[k] * gCf[i, j] + Cf[i] * Cf[j] for i, j, k in distinct]
    out["c_gradient_product"] = np.abs(res18).max()

    out["dc_direct"] = np.abs(gCf - gCf.T).max()
    comm = Bf @ Af - Af @ Bf
    out["dc_commutator"] = np.abs(comm).max()

    if extended:
        ggC = riemann.covariant_derivative(inv.gradC, inv.g, inv.pack.gamma)
        ggCf = inv.to_frame(riemann.tensor_values(ggC))
        out["c_second_gradient"] = max(
            abs(ggCf[i, j, k]) for i, j, k in distinct)
    return out


_FLAT_CHECKS = ("weighted_b_codazzi", "offdiag_b_gradient",
                "mixed_b_gradient_vs_c", "eigen_b_gradient_vs_c",
                "blaschke_offdiagonal", "c_gradient_product",
                "dc_direct", "dc_commutator")


def check_flat_relations(spec, points=None, order=5, n=10, seed=0,
                         bundles=None, extended=False, require_flat=True):
    report = ResidualReport("flat_relations")
    if bundles is None:
        points = sample_points(spec, n, seed) if points is None else points
        bundles, report.skipped = collect(spec, points, order)
    if require_flat:
        worst = max((conformal_flatness_residuals(inv)["schouten_codazzi"]
                     for inv in bundles), default=0.0)
        if worst > TOL["flat"]:
            raise NotConformallyFlatError(
                f"flat relations need a conformally flat input; "
                f"Schouten-Codazzi residual {worst:.3e}")
    per_check = {}
    for inv in bundles:
        for name, val in flat_relations_residuals(inv, extended).items():
            per_check.setdefault(name, []).append(val)
    names = _FLAT_CHECKS + (("c_second_gradient",) if extended else ())
    for name in names:
        report.record(name, per_check.get(name, []), TOL["flat"])
    return report


# --- Moebius invariance -----------------------------------------------------------

def check_moebius_invariance(spec, T, points=None, order=5, n=10, seed=0,
                             tol=None):
    """Componentwise equality of g and of the orientation-canonicalized,
    sorted Moebius principal curvatures at matched parameters."""
    tol = TOL["invariance"] if tol is None else tol
    report = ResidualReport("invariance")
    points = sample_points(spec, n, seed) if points is None else points
    transformed = moebius.moebius_transform(spec, T)
    g_res, b_res = [], []
    for p in points:
        try:
            inv0 = moebius.moebius_invariants(spec, p, order, deep=False)
            inv1 = moebius.moebius_invariants(transformed, p, order,
                                              deep=False)
        except (NonGenericError, RankDeficientError) as exc:
            report.skipped.append((tuple(float(x) for x in p), str(exc)))
            continue
        g0, g1 = inv0.g.values(), inv1.g.values()
        g_res.append(np.abs(g0 - g1).max() / max(1.0, np.abs(g0).max()))
        b1 = inv1.b
        if T.orientation_reversing:
            b1 = np.sort(-b1)
        b_res.append(np.abs(inv0.b - b1).max())
    report.record("metric_matched_points", g_res, tol, mode="rel")
    report.record("principal_curvatures_matched_points", b_res, tol)
    return report


# --- pointwise identities ------------------------------------------------------------

def pointwise_identity_residuals(inv):
    """Both sides of the diagonal-frame scalar identities relating the
    weighted sectional sum to Blaschke data, Ricci norm and scalar curvature."""
    b = inv.b
    a = inv.a
    Rf = inv.riem_frame
    trA = inv.trA_value
    A2 = inv.A_norm2
    ric2 = inv.ric_norm2
    R = inv.r_scalar
    pairs = [(0, 1), (1, 2), (0, 2)]
    lhs = sum(((b[i] - b[j]) ** 2 - 2.0) * Rf[i, j, i, j] for i, j in pairs)
    ba = float(np.dot(b ** 2, a))
    out = {
        "weighted_sectional_vs_blaschke":
            lhs - (2.0 / 9.0 - (10.0 / 3.0) * trA + 3.0 * ba),
        "ricci_norm_expansion":
            ric2 - (2.0 / 9.0 + 5.0 * trA ** 2 + A2 - (4.0 / 3.0) * trA
                    - 2.0 * ba),
        "weighted_sectional_vs_norms":
            lhs - (5.0 / 9.0 - (16.0 / 3.0) * trA + 7.5 * trA ** 2
                   + 1.5 * A2 - 1.5 * ric2),
        "weighted_sectional_vs_tracefree":
            lhs - (1.5 * inv.A_tilde_norm2 - 1.5 * (ric2 - R ** 2 / 3.0)
                   - 1.0 / 9.0),
    }
    gaps = [2.0 - (b[i] - b[j]) ** 2 for i, j in pairs]
    out["eigen_gap_margin"] = min(gaps)          # must stay >= 1e-3
    out["cauchy_schwarz_ricci"] = ric2 - R ** 2 / 3.0  # must stay >= -1e-10
    return out


def check_pointwise_identities(spec, points=None, order=5, n=10, seed=0,
                               bundles=None, require_flat=True):
    report = ResidualReport("pointwise_identities")
    if bundles is None:
        points = sample_points(spec, n, seed) if points is None else points
        bundles, report.skipped = collect(spec, points, order)
    if require_flat:
        worst_flat = max((conformal_flatness_residuals(inv)["schouten_codazzi"]
                          for inv in bundles), default=0.0)
        if worst_flat > TOL["flat"]:
            raise NotConformallyFlatError(
                f"pointwise identities assume conformal flatness; residual "
                f"{worst_flat:.3e}")
        worst_dc = max((np.abs(inv.gradC_frame - inv.gradC_frame.T).max()
                        for inv in bundles), default=0.0)
        if worst_dc > TOL["flat"]:
            raise MoebiusFormNotClosedError(
                f"pointwise identities assume a closed Moebius form; dC "
                f"residual {worst_dc:.3e}")
    per_check = {}
    for inv in bundles:
        for name, val in pointwise_identity_residuals(inv).items():
            per_check.setdefault(name, []).append(val)
    for name in ("weighted_sectional_vs_blaschke", "ricci_norm_expansion",
                 "weighted_sectional_vs_norms",
                 "weighted_sectional_vs_tracefree"):
        report.record(name, per_check.get(name, []), TOL["pointwise"])
    margins = np.asarray(per_check.get("eigen_gap_margin", []))
    rec = CheckRecord("eigen_gap_margin", margins.size,
                      float(margins.min()) if margins.size else np.inf,
                      1e-3, bool(margins.size == 0 or margins.min() >= 1e-3),
                      mode="min")
    report.checks.append(rec)
    cs = np.asarray(per_check.get("cauchy_schwarz_ricci", []))
    rec = CheckRecord("cauchy_schwarz_ricci", cs.size,
                      float(cs.min()) if cs.size else np.inf, -1e-10,
                      bool(cs.size == 0 or cs.min() >= -1e-10), mode="min")
    report.checks.append(rec)
    return report


# --- finite-difference 2-form calculus --------------------------------------------

def _canonical_signs(E):
    E = E.copy()
    for i in range(3):
        j = int(np.argmax(np.abs(E[:, i])))
        if E[j, i] < 0:
            E[:, i] = -E[:, i]
    if np.linalg.det(E) < 0:
        E[:, 0] = -E[:, 0]
    return E


def _align_to(E_ref, E_new, g_new):
    M = E_ref.T @ g_new @ E_new
    E = E_new.copy()
    for i in range(3):
        if abs(M[i, i]) < 0.7:
            raise FrameAlignmentError(
                f"principal frame cannot be continued (overlap matrix "
                f"diagonal {np.diag(M)})")
        if M[i, i] < 0:
            E[:, i] = -E[:, i]
    return E


def _forms_at_point(inv):
    """Coordinate components of the two invariant 2-forms, the single
    ruled term, and the pointwise right-hand sides of their derivatives."""
    b = inv.b
    E = inv.E
    g = inv.g.values()
    gBf = inv.gradB_frame
    Cf = inv.C_frame
    Rf = inv.riem_frame

    coframe = E.T @ g                     # rows are the frame covectors
    w = np.zeros((3, 3, 3))               # connection forms on frame vectors
    for i in range(3):
        for j in range(3):
            if i == j:
                continue
            w[i, j] = gBf[i, j] / (b[i] - b[j])
    w_coord = np.einsum("ijk,ka->ija", w, coframe)

    def wedge(alpha, beta):
        return np.einsum("a,b->ab", alpha, beta) \
            - np.einsum("b,a->ab", alpha, beta)

    single = wedge(w_coord[0, 1], coframe[2])
    phi = (single + wedge(w_coord[1, 2], coframe[0])
           + wedge(w_coord[2, 0], coframe[1]))
    psi = ((b[0] - b[1]) ** 2 * wedge(w_coord[0, 1], coframe[2])
           + (b[1] - b[2]) ** 2 * wedge(w_coord[1, 2], coframe[0])
           + (b[0] - b[2]) ** 2 * wedge(w_coord[2, 0], coframe[1]))

    dv = np.sqrt(np.linalg.det(g))
    R1212, R2323, R1313 = Rf[0, 1, 0, 1], Rf[1, 2, 1, 2], Rf[0, 2, 0, 2]
    c_terms = np.array([
        b[1] * b[2] * Cf[0] ** 2 / ((b[0] - b[1]) ** 2 * (b[0] - b[2]) ** 2),
        b[0] * b[2] * Cf[1] ** 2 / ((b[0] - b[1]) ** 2 * (b[1] - b[2]) ** 2),
        b[0] * b[1] * Cf[2] ** 2 / ((b[0] - b[2]) ** 2 * (b[1] - b[2]) ** 2),
    ])
    rhs_phi = (-(R1212 + R1313 + R2323) + 9.0 * c_terms.sum()) * dv
    rhs_psi = (-((b[0] - b[1]) ** 2 * R1212 + (b[1] - b[2]) ** 2 * R2323
                 + (b[0] - b[2]) ** 2 * R1313) + 18.0 * c_terms.sum()) * dv
    rhs_single = (-R1212 - 9.0 * c_terms[2] + 9.0 * c_terms[0]
                  + 9.0 * c_terms[1]) * dv
    rhs_combo = (((b[0] - b[1]) ** 2 - 2.0) * R1212
                 + ((b[1] - b[2]) ** 2 - 2.0) * R2323
                 + ((b[0] - b[2]) ** 2 - 2.0) * R1313) * dv
    return phi, psi, single, rhs_phi, rhs_psi, rhs_single, rhs_combo


def fd_exterior(spec, center=None, n=9, h=1e-3, order=4, mode="relative",
                tol=None, seed=0):
    """Exterior derivatives of the invariant 2-forms by central finite
    differences on an n^3 coordinate patch, against the pointwise right-hand
    sides.

    The principal frame is aligned across the grid by maximal overlap with
    the already-aligned neighbor (sign fixed, eigenvalue crossings raise
    :class:`FrameAlignmentError`), oriented positively at the first corner.
    """
    if tol is None:
        tol = TOL["forms_rel"] if mode == "relative" else TOL["forms_abs"]
    report = ResidualReport("fd_exterior")
    if center is None:
        center = np.array([(lo + hi) / 2.0 for lo, hi in spec.box])
    center = np.asarray(center, dtype=float)
    offsets = (np.arange(n) - (n - 1) / 2.0) * h
    for dim, (lo, hi) in enumerate(spec.box):
        if center[dim] + offsets[0] < lo or center[dim] + offsets[-1] > hi:
            raise GeometryError("fd patch leaves the sample box")

    phi = np.zeros((n, n, n, 3, 3))
    psi = np.zeros((n, n, n, 3, 3))
    single = np.zeros((n, n, n, 3, 3))
    rhs = np.zeros((n, n, n, 4))
    aligned = {}
    for i in range(n):
        for j in range(n):
            for k in range(n):
                p = center + np.array([offsets[i], offsets[j], offsets[k]])
                inv = moebius.moebius_invariants(spec, p, order, deep=False)
                if (i, j, k) == (0, 0, 0):
                    E = _canonical_signs(inv.E)
                else:
                    ref = aligned[(i, j, k - 1) if k else
                                  ((i, j - 1, k) if j else (i - 1, j, k))]
                    E = _align_to(ref, inv.E, inv.g.values())
                aligned[(i, j, k)] = E
                inv.E = E
                (phi[i, j, k], psi[i, j, k], single[i, j, k],
                 *rhs[i, j, k]) = _forms_at_point(inv)

    def d_component(F):
        # (dF)_{123} = d1 F_23 - d2 F_13 + d3 F_12, central differences
        d1 = (F[2:, 1:-1, 1:-1, 1, 2] - F[:-2, 1:-1, 1:-1, 1, 2]) / (2 * h)
        d2 = (F[1:-1, 2:, 1:-1, 0, 2] - F[1:-1, :-2, 1:-1, 0, 2]) / (2 * h)
        d3 = (F[1:-1, 1:-1, 2:, 0, 1] - F[1:-1, 1:-1, :-2, 0, 1]) / (2 * h)
        return d1 - d2 + d3

    interior = (slice(1, -1),) * 3
    lhs = {
        "form_trace_derivative": d_component(phi),
        "form_weighted_derivative": d_component(psi),
        "form_combination_derivative": 2 * d_component(phi) - d_component(psi),
        "form_single_term_derivative": d_component(single),
    }
    rhs_map = {
        "form_trace_derivative": rhs[interior + (0,)],
        "form_weighted_derivative": rhs[interior + (1,)],
        "form_single_term_derivative": rhs[interior + (2,)],
        "form_combination_derivative": rhs[interior + (3,)],
    }
    for name in ("form_trace_derivative", "form_weighted_derivative",
                 "form_combination_derivative", "form_single_term_derivative"):
        diff = np.abs(lhs[name] - rhs_map[name])
        if mode == "relative":
            scale = np.abs(rhs_map[name]).max()
            report.record(name, diff.max() / max(scale, 1e-30), tol,
                          mode="rel")
        else:
            report.record(name, diff.max(), tol, mode="abs")
    return report


# --- classifier ------------------------------------------------------------------

@dataclass
class Classification:
    verdict: str                      # Cylinder | Cone | Rotational
    Q_values: list
    special_indices: list
    degenerate_b: bool
    preconditions: dict
    points: list

    @property
    def Q_stats(self):
        q = np.asarray(self.Q_values)
        return {"min": float(q.min()), "max": float(q.max()),
                "mean": float(q.mean())}

    @property
    def special_index_histogram(self):
        return [int((np.asarray(self.special_indices) == i).sum())
                for i in range(3)]

    def to_dict(self):
        return {
            "verdict": self.verdict,
            "Q_stats": self.Q_stats,
            "special_index_histogram": self.special_index_histogram,
            "degenerate_b": self.degenerate_b,
            "preconditions": self.preconditions,
            "points": [list(p) for p in self.points],
            "Q_values": self.Q_values,
        }


def _special_index(inv):
    """Index of the stationary curvature sphere: argmin over the principal
    directions of the derivative of b_i Y + xi along its own direction.  When
    all three vanish (parallel B, C = 0) the zero eigenvalue takes over."""
    Yv = moebius.vec_values(inv.Y)
    dxi = np.stack([moebius.vec_derivative_values(inv.xi, k)
                    for k in range(3)])
    dxiE = inv.E.T @ dxi
    Yi = inv.oracle.Yi if inv.oracle is not None else None
    if Yi is None:
        dY = np.stack([moebius.vec_derivative_values(inv.Y, k)
                       for k in range(3)])
        Yi = inv.E.T @ dY
    gBf = inv.gradB_frame
    norms = np.empty(3)
    for i in range(3):
        D = gBf[i, i, i] * Yv + inv.b[i] * Yi[i] + dxiE[i]
        norms[i] = np.linalg.norm(D)
    scale = 1e-7 * (1.0 + np.linalg.norm(Yv))
    if np.all(norms < scale):
        return int(np.argmin(np.abs(inv.b))), norms
    return int(np.argmin(norms)), norms


def classify(spec, points=None, order=5, n=30, seed=0, tol_q=None):
    """Cylinder / cone / rotational trichotomy via the sign of Q.

    Preconditions: conformal flatness (Schouten-Codazzi) and closed Moebius
    form; violations raise rather than guess.  Mixed Q signs across the
    sampled points raise :class:`InconsistentSignError`.
    """
    tol_q = TOL["q"] if tol_q is None else tol_q
    points = sample_points(spec, n, seed) if points is None else points
    bundles, skipped = collect(spec, points, order)
    if not bundles:
        raise NonGenericError(tuple(points[0]), 0.0,
                              "no generic points to classify")
    flat_res = max(conformal_flatness_residuals(inv)["schouten_codazzi"]
                   for inv in bundles)
    if flat_res > TOL["flat"]:
        raise NotConformallyFlatError(
            f"classification needs conformal flatness; Schouten-Codazzi "
            f"residual {flat_res:.3e}")
    dc_res = max(np.abs(inv.gradC_frame - inv.gradC_frame.T).max()
                 for inv in bundles)
    if dc_res > TOL["flat"]:
        raise MoebiusFormNotClosedError(
            f"classification needs a closed Moebius form; dC residual "
            f"{dc_res:.3e}")

    Qs, specials, degenerate = [], [], False
    for inv in bundles:
        s, _ = _special_index(inv)
        b, a, gBf = inv.b, inv.a, inv.gradB_frame
        Q = 2.0 * a[s] + b[s] ** 2 + sum(
            (gBf[s, j, s] / (b[s] - b[j])) ** 2 for j in range(3) if j != s)
        Qs.append(float(Q))
        specials.append(s)
        if np.abs(b).min() <= TOL["b_degenerate"]:
            degenerate = True

    q = np.asarray(Qs)
    if np.all(np.abs(q) <= tol_q):
        verdict = "Cylinder"
    elif np.all(q < -tol_q):
        verdict = "Cone"
    elif np.all(q > tol_q):
        verdict = "Rotational"
    else:
        raise InconsistentSignError(
            f"mixed Q signs across sampled points: min {q.min():.3e}, "
            f"max {q.max():.3e}")
    return Classification(
        verdict=verdict, Q_values=Qs, special_indices=specials,
        degenerate_b=degenerate,
        preconditions={"flatness_residual": float(flat_res),
                       "dC_residual": float(dc_res),
                       "pass": True},
        points=[tuple(float(x) for x in p) for p in points[:len(bundles)]])


# --- suite runner ---------------------------------------------------------------

def run_suite(spec, suite, n=10, seed=0, order=5, tol_overrides=None):
    """Run one named suite (or 'all'); returns the list of reports.

    Precondition failures inside a suite are reported as failing checks, not
    exceptions, so a full report is always emitted.
    """
    tol_overrides = tol_overrides or {}
    reports = []
    points = sample_points(spec, n, seed)
    if suite in ("universal", "all"):
        bundles, skipped = collect(spec, points, order)
        r = check_integrability(spec, bundles=bundles,
                                tol=tol_overrides.get("universal"))
        r.skipped = skipped
        reports.append(r)
        reports.append(check_ricci_identity(spec, bundles=bundles,
                                            tol=tol_overrides.get("universal")))
        reports.append(check_frames(spec, bundles=bundles))
    if suite in ("frames",) and suite != "all":
        bundles, skipped = collect(spec, points, order)
        r = check_frames(spec, bundles=bundles)
        r.skipped = skipped
        reports.append(r)
    if suite in ("flat", "all"):
        bundles, skipped = collect(spec, points, order)
        r = check_conformal_flatness(spec, bundles=bundles,
                                     tol=tol_overrides.get("flat"))
        r.skipped = skipped
        reports.append(r)
        if r.checks[0].passed:
            reports.append(check_flat_relations(spec, bundles=bundles,
                                                require_flat=False))
        else:
            failed = ResidualReport("flat_relations")
            failed.checks.append(CheckRecord(
                "precondition_conformally_flat", len(bundles),
                r.checks[0].max_abs_residual, TOL["flat"], False))
            reports.append(failed)
    if suite in ("invariance", "all"):
        rng = np.random.default_rng(seed)
        T = moebius.random_conformal_map(rng)
        reports.append(check_moebius_invariance(
            spec, T, points=points, order=order,
            tol=tol_overrides.get("invariance")))
    if suite in ("pointwise", "all"):
        bundles, skipped = collect(spec, points, order)
        try:
            r = check_pointwise_identities(spec, bundles=bundles)
        except (NotConformallyFlatError, MoebiusFormNotClosedError) as exc:
            r = ResidualReport("pointwise_identities")
            r.checks.append(CheckRecord("precondition", len(bundles),
                                        np.inf, TOL["flat"], False))
            r.skipped.append(((), str(exc)))
        reports.append(r)
    if suite in ("forms",):
        reports.append(fd_exterior(spec))
    if suite not in ("universal", "flat", "frames", "invariance", "pointwise",
                     "forms", "all"):
        raise ValueError(f"unknown suite {suite!r}")
    return reports

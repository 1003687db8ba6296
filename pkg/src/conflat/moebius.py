"""Moebius invariants of an umbilic-free immersion f: M^3 -> R^4.

The pipeline lifts Euclidean first/second fundamental form data into the
Lorentz space R^6_1: the conformal density rho, the null position lift Y, the
mean curvature sphere xi, the conformal position N, the Moebius metric
g = rho^2 df.df, the trace-free second fundamental form B, the Blaschke
tensor A and the Moebius form C.  All tensors are kept in coordinate
components as jets; frames (principal directions) appear only at evaluation
points as plain numbers, so no jet-valued eigenproblems occur.

Closed forms used for the primary route (each guarded by residual contracts
and by the independent dN/dxi frame oracle):

* ``rho^2 = (3/2) (|II|^2 - 3 H^2)``
* ``B = rho (II - H I)`` which gives ``tr_g B = 0`` and ``|B|_g^2 = 2/3``
* ``tr A = (1 + (3/2) R) / 6`` and ``A = Ric + B g^{-1} B - tr A * g``
* ``C_k = -(1/2) g^{ij} (grad B)[i, k, j]``
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import dsl, jets, riemann
from .errors import (JetOrderError, NonGenericError, RankDeficientError,
                     TransformDomainError, UmbilicPointError)
from .jets import Jet

GAP_TOL = 1e-6        # genericity: min |k_i - k_j| below this is NonGeneric
UMBILIC_TOL = 1e-12   # |II|^2 - 3 H^2 below this has no conformal gauge
PLANE_TOL = 1e-8      # curvature sphere counts as a hyperplane below this

#: Lorentz signature (-,+,+,+,+,+) weights for R^6_1.
_SIGN = np.array([-1.0, 1.0, 1.0, 1.0, 1.0, 1.0])


def lorentz_dot(x, y):
    """Inner product -x0 y0 + sum_{k>=1} x_k y_k; works on jets or floats."""
    out = None
    for s, a, b in zip(_SIGN, x, y):
        term = s * (a * b)
        out = term if out is None else out + term
    return out


def vec_values(x):
    return np.array([c.value if isinstance(c, Jet) else float(c) for c in x])


def vec_derivative_values(x, k):
    return np.array([c.derivative(k).value for c in x])


def _cross4(v1, v2, v3):
    """Generalized cross product: cofactors of a fourth row, so the frame
    (v1, v2, v3, result) is positively oriented."""
    out = []
    cols = list(range(4))
    for d in range(4):
        keep = [c for c in cols if c != d]
        a, b, c = ([v[keep[0]], v[keep[1]], v[keep[2]]] for v in (v1, v2, v3))
        det = (a[0] * (b[1] * c[2] - b[2] * c[1])
               - a[1] * (b[0] * c[2] - b[2] * c[0])
               + a[2] * (b[0] * c[1] - b[1] * c[0]))
        out.append(det if (3 + d) % 2 == 0 else -det)
    return out


@dataclass
class EuclideanInvariants:
    """First/second fundamental form data of the immersion in R^4."""

    point: tuple
    fjets: list            # 4 jets, full order
    df: list               # df[i][a] jets, order - 1
    I: np.ndarray          # (3,3) jets, order - 1
    II: np.ndarray         # (3,3) jets, order - 2
    normal: list           # unit normal, 4 jets, order - 1
    H: Jet                 # mean curvature, order - 2
    k: np.ndarray          # principal curvatures ascending (values)
    principal_dirs: np.ndarray  # columns, I-orthonormal (values)


def euclidean_invariants(fjets, point=None):
    """Induced metric, unit normal, second fundamental form and principal
    curvatures of f at one point.

    Raises :class:`RankDeficientError` for degenerate differentials,
    :class:`UmbilicPointError` when all principal curvatures coincide and
    :class:`NonGenericError` when only two do (gap below ``GAP_TOL``).
    """
    order = fjets[0].order
    point = tuple(point) if point is not None else ()
    df = [[fjets[a].derivative(i) for a in range(4)] for i in range(3)]
    I = riemann.tensor((3, 3))
    for i in range(3):
        for j in range(i + 1):
            s = None
            for a in range(4):
                term = df[i][a] * df[j][a]
                s = term if s is None else s + term
            I[i, j] = I[j, i] = s
    Ival = riemann.tensor_values(I)
    eig_min = np.linalg.eigvalsh(Ival).min()
    if eig_min < 1e-10:
        raise RankDeficientError(
            f"differential rank-deficient at {point}: min metric eigenvalue "
            f"{eig_min:.3e}")

    n = _cross4(df[0], df[1], df[2])
    norm2 = None
    for a in range(4):
        term = n[a] * n[a]
        norm2 = term if norm2 is None else norm2 + term
    inv_len = 1.0 / jets.sqrt(norm2)
    normal = [n[a] * inv_len for a in range(4)]

    ddf = [[None] * 3 for _ in range(3)]
    for i in range(3):
        for j in range(i + 1):
            ddf[i][j] = ddf[j][i] = [df[i][a].derivative(j) for a in range(4)]
    II = riemann.tensor((3, 3))
    for i in range(3):
        for j in range(i + 1):
            s = None
            for a in range(4):
                term = ddf[i][j][a] * normal[a].truncate(order - 2)
                s = term if s is None else s + term
            II[i, j] = II[j, i] = s

    Iinv = riemann.truncate_tensor(riemann.MetricJets(I).inverse(), order - 2)
    H = None
    for i in range(3):
        for j in range(3):
            term = Iinv[i, j] * II[i, j]
            H = term if H is None else H + term
    H = H / 3.0

    IIval = riemann.tensor_values(II)
    k, dirs = scipy.linalg.eigh(IIval, Ival)
    gap = np.diff(k).min()
    if gap < GAP_TOL:
        if k[-1] - k[0] < GAP_TOL:
            raise UmbilicPointError(point)
        raise NonGenericError(point, gap)
    return EuclideanInvariants(point=point, fjets=fjets, df=df, I=I, II=II,
                               normal=normal, H=H, k=k, principal_dirs=dirs)


def moebius_density(e: EuclideanInvariants):
    """Conformal density rho^2 = (3/2)(|II|^2 - 3 H^2) and the null lift Y."""
    order = e.fjets[0].order
    m2 = order - 2
    Iinv = riemann.truncate_tensor(riemann.MetricJets(e.I).inverse(), m2)
    ii2 = None
    for i in range(3):
        for j in range(3):
            for kk in range(3):
                for l in range(3):
                    term = Iinv[i, kk] * Iinv[j, l] * e.II[i, j] * e.II[kk, l]
                    ii2 = term if ii2 is None else ii2 + term
    rho2 = 1.5 * (ii2 - 3.0 * e.H * e.H)
    if rho2.value <= UMBILIC_TOL:
        raise UmbilicPointError(e.point)
    rho = jets.sqrt(rho2)
    f = [c.truncate(m2) for c in e.fjets]
    F = None
    for a in range(4):
        term = f[a] * f[a]
        F = term if F is None else F + term
    Y = [rho * (1.0 + F) * 0.5, rho * (1.0 - F) * 0.5]
    Y += [rho * f[a] for a in range(4)]
    return rho2, Y


def moebius_metric_and_B(e: EuclideanInvariants, rho2: Jet):
    """Moebius metric g = rho^2 I and trace-free form B = rho (II - H I)."""
    order = e.fjets[0].order
    m2 = order - 2
    rho = jets.sqrt(rho2)
    g = riemann.tensor((3, 3))
    B = riemann.tensor((3, 3))
    for i in range(3):
        for j in range(3):
            Iij = e.I[i, j].truncate(m2)
            g[i, j] = rho2 * Iij
            B[i, j] = rho * (e.II[i, j] - e.H * Iij)
    return riemann.MetricJets(g), B


def blaschke_and_C(g: riemann.MetricJets, B, pack: riemann.CurvaturePack):
    """Blaschke tensor and Moebius form from the curvature of g.

    ``tr A`` comes from the scalar normalization, ``A`` from the Ricci
    structure relation, and ``C`` from the trace of the Codazzi-type relation
    for B (so the full relation stays available as a residual check).
    """
    ord_pack = pack.ric[0, 0].order
    trA = (1.0 + 1.5 * pack.r_scalar) / 6.0
    ginv = riemann.truncate_tensor(g.inverse(), ord_pack)
    Bp = riemann.truncate_tensor(B, ord_pack)
    A = riemann.tensor((3, 3))
    for i in range(3):
        for j in range(3):
            bb = None
            for kk in range(3):
                for l in range(3):
                    term = Bp[i, kk] * ginv[kk, l] * Bp[l, j]
                    bb = term if bb is None else bb + term
            A[i, j] = pack.ric[i, j] + bb - trA * pack.metric.g[i, j].truncate(ord_pack)
    gradB = riemann.covariant_derivative(B, g, pack.gamma)
    ordB = gradB[0, 0, 0].order
    ginvB = riemann.truncate_tensor(g.inverse(), ordB)
    C = riemann.tensor((3,))
    for kk in range(3):
        s = None
        for i in range(3):
            for j in range(3):
                term = ginvB[i, j] * gradB[i, kk, j]
                s = term if s is None else s + term
        C[kk] = -0.5 * s
    return A, C, gradB, trA


def mean_curvature_sphere(e: EuclideanInvariants):
    """Mean curvature sphere xi as a vector of jets; <xi, xi> = 1."""
    order = e.fjets[0].order
    m2 = order - 2
    f = [c.truncate(m2) for c in e.fjets]
    nrm = [c.truncate(m2) for c in e.normal]
    F = None
    fn = None
    for a in range(4):
        tF = f[a] * f[a]
        tn = f[a] * nrm[a]
        F = tF if F is None else F + tF
        fn = tn if fn is None else fn + tn
    xi = [(1.0 + F) * 0.5 * e.H + fn, (1.0 - F) * 0.5 * e.H - fn]
    xi += [e.H * f[a] + nrm[a] for a in range(4)]
    return xi


def conformal_position_N(Y, g: riemann.MetricJets, pack: riemann.CurvaturePack):
    """Conformal position N = -Lap(Y)/3 - <Lap Y, Lap Y> Y / 18."""
    ordY = Y[0].order
    lap_order = ordY - 2
    if lap_order < 0:
        raise JetOrderError("order exhausted computing N")
    lap_order = min(lap_order, pack.gamma[0, 0, 0].order)
    ginv = riemann.truncate_tensor(g.inverse(), lap_order)
    gam = riemann.truncate_tensor(pack.gamma, lap_order)
    lap = []
    for a in range(6):
        s = None
        dY = [Y[a].derivative(kk) for kk in range(3)]
        for i in range(3):
            for j in range(3):
                hess = dY[i].derivative(j).truncate(lap_order)
                for kk in range(3):
                    hess = hess - gam[kk, i, j] * dY[kk].truncate(lap_order)
                term = ginv[i, j] * hess
                s = term if s is None else s + term
        lap.append(s)
    lap2 = lorentz_dot(lap, lap)
    Yt = [c.truncate(lap_order) for c in Y]
    return [-(1.0 / 3.0) * lap[a] - (1.0 / 18.0) * (lap2 * Yt[a])
            for a in range(6)]


def principal_frame(B, g: riemann.MetricJets):
    """g-orthonormal eigenframe of B: eigenvalues ascending, columns are
    coordinate components of the frame vectors."""
    Bval = riemann.tensor_values(B)
    gval = g.values()
    b, E = scipy.linalg.eigh(Bval, gval)
    return b, E


@dataclass
class FrameOracle:
    """Structure-equation projections, an independent route to A, B, C."""

    Yi: np.ndarray        # (3,6) frame derivatives of Y
    A_frame: np.ndarray   # <dN(E_i), Y_j>
    C_frame: np.ndarray   # <dN(E_i), xi>
    B_frame: np.ndarray   # -<dxi(E_i), Y_j>
    C_frame_xi: np.ndarray  # -<dxi(E_i), N>
    null_frame_residual: float


def frame_oracle(Y, N, xi, E):
    """Project the moving-frame derivatives onto the Lorentz frame.

    Returns A, C from dN and B, C from dxi, plus the worst deviation of the
    frame from its null-frame relations (<Y,Y>, <N,N>, <N,Y>-1, ...).
    """
    Yv, Nv, xv = vec_values(Y), vec_values(N), vec_values(xi)
    dY = np.stack([vec_derivative_values(Y, k) for k in range(3)])
    dN = np.stack([vec_derivative_values(N, k) for k in range(3)])
    dxi = np.stack([vec_derivative_values(xi, k) for k in range(3)])
    Yi = E.T @ dY          # rows: Y_i = dY(E_i)
    dNE = E.T @ dN
    dxiE = E.T @ dxi

    def ldot(a, b):
        return a @ (_SIGN * b)

    A_frame = np.array([[ldot(dNE[i], Yi[j]) for j in range(3)]
                        for i in range(3)])
    C_frame = np.array([ldot(dNE[i], xv) for i in range(3)])
    B_frame = -np.array([[ldot(dxiE[i], Yi[j]) for j in range(3)]
                         for i in range(3)])
    C_frame_xi = -np.array([ldot(dxiE[i], Nv) for i in range(3)])

    res = [ldot(Yv, Yv), ldot(Nv, Nv), ldot(Nv, Yv) - 1.0,
           ldot(xv, xv) - 1.0, ldot(xv, Yv), ldot(xv, Nv)]
    for i in range(3):
        res.append(ldot(Yi[i], Yv))
        res.append(ldot(Yi[i], Nv))
        res.append(ldot(Yi[i], xv))
        for j in range(3):
            res.append(ldot(Yi[i], Yi[j]) - (1.0 if i == j else 0.0))
    return FrameOracle(Yi=Yi, A_frame=A_frame, C_frame=C_frame,
                       B_frame=B_frame, C_frame_xi=C_frame_xi,
                       null_frame_residual=float(np.abs(res).max()))


# --- per-point bundle --------------------------------------------------------


@dataclass
class MoebiusInvariants:
    """Everything the verification suites consume, at one generic point."""

    point: tuple
    order: int
    euclidean: EuclideanInvariants
    rho2: Jet
    Y: list
    xi: list
    N: list | None
    g: riemann.MetricJets
    pack: riemann.CurvaturePack
    B: np.ndarray
    A: np.ndarray
    C: np.ndarray
    trA: Jet
    gradB: np.ndarray
    gradA: np.ndarray | None
    gradC: np.ndarray | None
    gradgradB: np.ndarray | None
    gradS: np.ndarray | None
    b: np.ndarray          # Moebius principal curvatures, ascending
    E: np.ndarray          # principal frame, columns, g-orthonormal
    oracle: FrameOracle | None

    # -- frame-converted values --

    def to_frame(self, T):
        vals = riemann.tensor_values(T) if T.dtype == object else T
        return riemann.frame_components(vals, self.E)

    @property
    def A_frame(self):
        return self.to_frame(self.A)

    @property
    def C_frame(self):
        return self.E.T @ riemann.tensor_values(self.C)

    @property
    def a(self):
        return np.diag(self.A_frame)

    @property
    def trA_value(self):
        return self.trA.value

    @property
    def r_scalar(self):
        return self.pack.r_scalar.value

    @property
    def ric_norm2(self):
        ric = riemann.tensor_values(self.pack.ric)
        ginv = np.linalg.inv(self.g.values())
        return float(np.einsum("ik,jl,ij,kl->", ginv, ginv, ric, ric))

    @property
    def A_norm2(self):
        Av = riemann.tensor_values(self.A)
        ginv = np.linalg.inv(self.g.values())
        return float(np.einsum("ik,jl,ij,kl->", ginv, ginv, Av, Av))

    @property
    def A_tilde_norm2(self):
        return self.A_norm2 - self.trA.value ** 2 / 3.0

    @property
    def riem_frame(self):
        return self.to_frame(self.pack.riem)

    @property
    def gradB_frame(self):
        return self.to_frame(self.gradB)

    @property
    def gradC_frame(self):
        return self.to_frame(self.gradC) if self.gradC is not None else None

    def curvature_sphere(self, i):
        """Sphere congruence of the i-th principal direction, plus whether it
        is a hyperplane (its Lorentz pairing with (1,-1,0,...) vanishes)."""
        xi_i = self.b[i] * vec_values(self.Y) + vec_values(self.xi)
        pairing = -xi_i[0] - xi_i[1]
        return xi_i, bool(abs(pairing) < PLANE_TOL)

    @property
    def plane_flags(self):
        return [self.curvature_sphere(i)[1] for i in range(3)]


def moebius_invariants(spec, point, order=5, deep=True, want_oracle=True):
    """Run the whole pipeline at one parameter point.

    With ``deep=False`` only the data needed for the 2-form calculus is
    produced (no N, no second gradients, no Schouten gradient), which lets the
    finite-difference grids run at order 4.
    """
    fjets = dsl.evaluate_jets(spec, point, order)
    e = euclidean_invariants(fjets, point)
    rho2, Y = moebius_density(e)
    g, B = moebius_metric_and_B(e, rho2)
    pack = riemann.curvature(g)
    A, C, gradB, trA = blaschke_and_C(g, B, pack)
    xi = mean_curvature_sphere(e)
    b, E = principal_frame(B, g)

    N = None
    gradA = gradC = gradgradB = gradS = None
    oracle = None
    if deep:
        N = conformal_position_N(Y, g, pack)
        if A[0, 0].order >= 1:
            gradA = riemann.covariant_derivative(A, g, pack.gamma)
        if C[0].order >= 1:
            gradC = riemann.covariant_derivative(C, g, pack.gamma)
        if gradB[0, 0, 0].order >= 1:
            gradgradB = riemann.covariant_derivative(gradB, g, pack.gamma)
        if pack.schouten[0, 0].order >= 1:
            gradS = riemann.covariant_derivative(pack.schouten, g, pack.gamma)
        if want_oracle:
            oracle = frame_oracle(Y, N, xi, E)
    else:
        if C[0].order >= 1:
            gradC = riemann.covariant_derivative(C, g, pack.gamma)

    return MoebiusInvariants(point=tuple(float(x) for x in point), order=order,
                             euclidean=e, rho2=rho2, Y=Y, xi=xi, N=N, g=g,
                             pack=pack, B=B, A=A, C=C, trA=trA, gradB=gradB,
                             gradA=gradA, gradC=gradC, gradgradB=gradgradB,
                             gradS=gradS, b=b, E=E, oracle=oracle)


# --- conformal transformations of R^4 -----------------------------------------


@dataclass(frozen=True)
class ConformalMap:
    """Finite composition of translations, rotations, dilations and unit
    inversions of R^4, applied left to right."""

    ops: tuple

    @staticmethod
    def identity():
        return ConformalMap(())

    def translate(self, v):
        return ConformalMap(self.ops + (("translate", tuple(float(x) for x in v)),))

    def rotate(self, R):
        R = np.asarray(R, dtype=float)
        if np.abs(R @ R.T - np.eye(4)).max() > 1e-10:
            raise TransformDomainError("rotation matrix is not orthogonal")
        return ConformalMap(self.ops + (("rotate", R),))

    def dilate(self, lam):
        if lam <= 0:
            raise TransformDomainError("dilation factor must be positive")
        return ConformalMap(self.ops + (("dilate", float(lam)),))

    def invert(self):
        return ConformalMap(self.ops + (("invert", None),))

    @property
    def orientation_reversing(self):
        parity = 0
        for op, data in self.ops:
            if op == "invert":
                parity ^= 1
            elif op == "rotate" and np.linalg.det(data) < 0:
                parity ^= 1
        return bool(parity)

    def apply_point(self, x):
        x = np.asarray(x, dtype=float)
        for op, data in self.ops:
            if op == "translate":
                x = x + np.asarray(data)
            elif op == "rotate":
                x = np.asarray(data) @ x
            elif op == "dilate":
                x = data * x
            elif op == "invert":
                n2 = float(x @ x)
                if n2 < 1e-14:
                    raise TransformDomainError("inversion at the origin")
                x = x / n2
        return x

    def apply_components(self, comps):
        comps = list(comps)
        for op, data in self.ops:
            if op == "translate":
                comps = [dsl.Binary("+", c, dsl.Const(v))
                         for c, v in zip(comps, data)]
            elif op == "rotate":
                new = []
                for a in range(4):
                    expr = None
                    for bb in range(4):
                        coeff = float(data[a, bb])
                        if coeff == 0.0:
                            continue
                        term = dsl.Binary("*", dsl.Const(coeff), comps[bb])
                        expr = term if expr is None else dsl.Binary("+", expr, term)
                    new.append(expr if expr is not None else dsl.Const(0.0))
                comps = new
            elif op == "dilate":
                comps = [dsl.Binary("*", dsl.Const(data), c) for c in comps]
            elif op == "invert":
                norm2 = None
                for c in comps:
                    sq = dsl.Binary("*", c, c)
                    norm2 = sq if norm2 is None else dsl.Binary("+", norm2, sq)
                comps = [dsl.Binary("/", c, norm2) for c in comps]
        return comps


def moebius_transform(spec, T: ConformalMap):
    """Compose a conformal map of R^4 with an EUC4 immersion spec.

    Inversion steps are guarded by sampling: the image of the box must stay
    away from the inversion center (best effort, grid plus corners).
    """
    if spec.ambient != "EUC4":
        raise TransformDomainError("conformal transforms act on EUC4 immersions")
    prefix = ConformalMap(())
    for op, data in T.ops:
        if op == "invert":
            for p in dsl._sample_grid(spec, n=4):
                img = prefix.apply_point(dsl.evaluate_values(spec, p))
                if float(img @ img) < 1e-8:
                    raise TransformDomainError(
                        f"inversion center meets the image near parameter "
                        f"{tuple(p)}")
        prefix = ConformalMap(prefix.ops + ((op, data),))
    comps = T.apply_components(list(spec.components))
    return dsl.make_immersion(f"{spec.name}_transformed", spec.domain_dim,
                              spec.ambient, comps, spec.box, spec.params,
                              validate=False)


def random_conformal_map(rng, shift=3.0):
    """Seeded generic composition: shift away from the origin, invert, rotate,
    dilate, translate.  Always contains exactly one inversion."""
    v0 = rng.normal(size=4)
    v0 = shift * v0 / np.linalg.norm(v0)
    M = rng.normal(size=(4, 4))
    Q, _ = np.linalg.qr(M)
    if np.linalg.det(Q) < 0:
        Q[:, 0] = -Q[:, 0]
    lam = float(rng.uniform(0.5, 2.0))
    v1 = rng.normal(size=4)
    return (ConformalMap.identity()
            .translate(v0)
            .invert()
            .rotate(Q)
            .dilate(lam)
            .translate(v1))

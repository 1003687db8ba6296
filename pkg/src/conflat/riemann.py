"""Curvature engine on jet-valued metrics.

Everything here works on coordinate components stored as numpy object arrays
of :class:`~conflat.jets.Jet`.  Derivatives consume jet orders, so a metric
usable to order ``m`` yields Christoffel symbols usable to ``m - 1`` and
curvature tensors usable to ``m - 2``; the shrinking order is tracked by the
jets themselves.

Conventions (pinned by the calibration tests):

* ``R^l_{ijk}`` components of ``R(e_i, e_j) e_k`` with
  ``R(X,Y) = [nabla_X, nabla_Y] - nabla_[X,Y]``;
* fully lowered tensor ``Riem[a,b,c,d] = g(R(e_a, e_b) e_d, e_c)``, so that
  ``Riem[a,b,a,b]`` is the (unnormalized) sectional numerator and the round
  unit sphere comes out positively curved;
* ``Ric[i,j] = g^{kl} Riem[i,k,j,l]`` and ``R_scalar = g^{ij} Ric[i,j]``;
* Schouten ``S = Ric - R g / (2 (dim - 1))``;
* covariant derivatives append the differentiation index last:
  ``(∇T)[i..., k] = ∇_k T_{i...}``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import JetShapeError, SingularMetricError
from .jets import Jet

_LEADING_MINOR_TOL = 1e-12


def tensor(shape):
    return np.empty(shape, dtype=object)


def tensor_values(T):
    """Value part of a jet tensor as a float array."""
    out = np.empty(T.shape)
    for idx in np.ndindex(*T.shape):
        entry = T[idx]
        out[idx] = entry.value if isinstance(entry, Jet) else float(entry)
    return out


def truncate_tensor(T, order):
    out = tensor(T.shape)
    for idx in np.ndindex(*T.shape):
        out[idx] = T[idx].truncate(order)
    return out


@dataclass
class MetricJets:
    """Symmetric jet-valued metric with a positive definite value part."""

    g: np.ndarray  # (dim, dim) object array of Jet

    def __post_init__(self):
        dim = self.g.shape[0]
        if self.g.shape != (dim, dim):
            raise JetShapeError(f"metric must be square, got {self.g.shape}")
        vals = tensor_values(self.g)
        if np.abs(vals - vals.T).max() > 1e-12 * (1 + np.abs(vals).max()):
            raise SingularMetricError(f"metric value part not symmetric:\n{vals}")
        for k in range(1, dim + 1):
            if np.linalg.det(vals[:k, :k]) <= _LEADING_MINOR_TOL:
                raise SingularMetricError(
                    f"metric not positive definite (leading minor {k}):\n{vals}")

    @property
    def dim(self):
        return self.g.shape[0]

    @property
    def usable_order(self):
        return self.g[0, 0].order

    def values(self):
        return tensor_values(self.g)

    def inverse(self):
        """Jet-valued inverse via the adjugate (dim <= 3)."""
        g = self.g
        d = self.dim
        if d == 1:
            inv = tensor((1, 1))
            inv[0, 0] = 1.0 / g[0, 0]
            return inv
        if d == 2:
            det = g[0, 0] * g[1, 1] - g[0, 1] * g[1, 0]
            inv = tensor((2, 2))
            inv[0, 0] = g[1, 1] / det
            inv[1, 1] = g[0, 0] / det
            inv[0, 1] = -g[0, 1] / det
            inv[1, 0] = -g[1, 0] / det
            return inv
        if d == 3:
            cof = tensor((3, 3))
            for i in range(3):
                for j in range(3):
                    r = [k for k in range(3) if k != i]
                    c = [k for k in range(3) if k != j]
                    minor = (g[r[0], c[0]] * g[r[1], c[1]]
                             - g[r[0], c[1]] * g[r[1], c[0]])
                    cof[i, j] = minor if (i + j) % 2 == 0 else -minor
            det = (g[0, 0] * cof[0, 0] + g[0, 1] * cof[0, 1]
                   + g[0, 2] * cof[0, 2])
            inv = tensor((3, 3))
            for i in range(3):
                for j in range(3):
                    inv[i, j] = cof[j, i] / det
            return inv
        raise JetShapeError(f"unsupported metric dimension {d}")


@dataclass
class CurvaturePack:
    """Curvature data of one metric; component jets shrink in order as noted."""

    metric: MetricJets
    gamma: np.ndarray       # (d,d,d) Gamma^k_{ij}, usable order - 1
    riem: np.ndarray        # (d,d,d,d) fully lowered, usable order - 2
    ric: np.ndarray         # (d,d), order - 2
    r_scalar: Jet           # order - 2
    schouten: np.ndarray    # (d,d), order - 2
    weyl: np.ndarray | None  # (d,d,d,d) for dim 3 (vanishes identically), else None
    ginv: np.ndarray        # (d,d) jet inverse at full metric order


def christoffel(m: MetricJets):
    """Levi-Civita symbols Gamma^k_{ij} = g^{kl}(d_i g_jl + d_j g_il - d_l g_ij)/2."""
    d = m.dim
    order = m.usable_order
    if order < 1:
        raise JetShapeError("christoffel needs metric jets usable to order >= 1")
    dg = tensor((d, d, d))  # dg[i, j, l] = d_l g_ij
    for i in range(d):
        for j in range(d):
            for l in range(d):
                dg[i, j, l] = m.g[i, j].derivative(l)
    ginv = truncate_tensor(m.inverse(), order - 1)
    gamma = tensor((d, d, d))
    for k in range(d):
        for i in range(d):
            for j in range(i + 1):
                s = None
                for l in range(d):
                    term = ginv[k, l] * (dg[j, l, i] + dg[i, l, j] - dg[i, j, l])
                    s = term if s is None else s + term
                gamma[k, i, j] = 0.5 * s
                gamma[k, j, i] = gamma[k, i, j]
    return gamma


def curvature(m: MetricJets):
    """Full curvature pack (Riemann, Ricci, scalar, Schouten, Weyl residual)."""
    d = m.dim
    if m.usable_order < 2:
        raise JetShapeError("curvature needs metric jets usable to order >= 2")
    gamma = christoffel(m)
    dgamma = tensor((d, d, d, d))  # dgamma[l, j, k, i] = d_i Gamma^l_{jk}
    for l in range(d):
        for j in range(d):
            for k in range(d):
                for i in range(d):
                    dgamma[l, j, k, i] = gamma[l, j, k].derivative(i)
    ord2 = m.usable_order - 2
    gam = truncate_tensor(gamma, ord2)
    # R^l_{ijk} = d_i G^l_jk - d_j G^l_ik + G^l_im G^m_jk - G^l_jm G^m_ik
    riem_up = tensor((d, d, d, d))
    for l in range(d):
        for i in range(d):
            for j in range(i):
                for k in range(d):
                    s = dgamma[l, j, k, i] - dgamma[l, i, k, j]
                    for mm in range(d):
                        s = s + gam[l, i, mm] * gam[mm, j, k] \
                              - gam[l, j, mm] * gam[mm, i, k]
                    riem_up[l, i, j, k] = s
                    riem_up[l, j, i, k] = -s
            for k in range(d):
                riem_up[l, i, i, k] = Jet.constant(0.0, m.g[0, 0].nvars, ord2)
    g2 = truncate_tensor(m.g, ord2)
    ginv2 = truncate_tensor(m.inverse(), ord2)
    # Riem[a,b,c,d'] = g(R(e_a,e_b) e_d', e_c) = g_{c l} R^l_{a b d'}
    riem = tensor((d, d, d, d))
    for a in range(d):
        for b in range(d):
            for c in range(d):
                for dd in range(d):
                    s = None
                    for l in range(d):
                        term = g2[c, l] * riem_up[l, a, b, dd]
                        s = term if s is None else s + term
                    riem[a, b, c, dd] = s
    ric = tensor((d, d))
    for i in range(d):
        for j in range(d):
            s = None
            for k in range(d):
                for l in range(d):
                    term = ginv2[k, l] * riem[i, k, j, l]
                    s = term if s is None else s + term
            ric[i, j] = s
    r_scalar = None
    for i in range(d):
        for j in range(d):
            term = ginv2[i, j] * ric[i, j]
            r_scalar = term if r_scalar is None else r_scalar + term
    schouten = tensor((d, d))
    for i in range(d):
        for j in range(d):
            schouten[i, j] = ric[i, j] - (r_scalar * g2[i, j]) / (2.0 * (d - 1))
    weyl = _weyl(riem, ric, r_scalar, g2, ginv2) if d == 3 else None
    return CurvaturePack(metric=m, gamma=gamma, riem=riem, ric=ric,
                         r_scalar=r_scalar, schouten=schouten, weyl=weyl,
                         ginv=m.inverse())


def _weyl(riem, ric, r_scalar, g, ginv):
    d = g.shape[0]
    n = d
    weyl = tensor((d, d, d, d))
    for i in range(d):
        for j in range(d):
            for k in range(d):
                for l in range(d):
                    corr = (ric[i, k] * g[j, l] - ric[j, k] * g[i, l]
                            + g[i, k] * ric[j, l] - g[j, k] * ric[i, l]
                            - (r_scalar / (n - 1))
                            * (g[i, k] * g[j, l] - g[j, k] * g[i, l]))
                    weyl[i, j, k, l] = riem[i, j, k, l] - corr / (n - 2)
    return weyl


def covariant_derivative(T, m: MetricJets, gamma=None, rank=None):
    """Covariant derivative of an all-covariant jet tensor.

    ``(∇T)[i_1..i_p, k] = d_k T - sum_s Gamma^q_{k i_s} T[..q..]``; the output
    gains one covariant slot (appended last) and loses one jet order.
    Scalars (rank 0) are passed as 0-d object arrays or bare jets.
    """
    if isinstance(T, Jet):
        T = np.array(T, dtype=object).reshape(())
    p = T.ndim if rank is None else rank
    d = m.dim
    if gamma is None:
        gamma = christoffel(m)
    sample = T[(0,) * p] if p else T[()]
    out_order = min(sample.order - 1, gamma[0, 0, 0].order)
    if out_order < 0:
        raise JetShapeError("order exhausted in covariant_derivative")
    gam = truncate_tensor(gamma, out_order)
    Tt = np.empty(T.shape, dtype=object)
    for idx in np.ndindex(*T.shape):
        Tt[idx] = T[idx].truncate(out_order)
    out = tensor(T.shape + (d,))
    for idx in np.ndindex(*T.shape):
        for k in range(d):
            s = T[idx].derivative(k).truncate(out_order)
            for slot in range(p):
                for q in range(d):
                    jdx = idx[:slot] + (q,) + idx[slot + 1:]
                    s = s - gam[q, k, idx[slot]] * Tt[jdx]
            out[idx + (k,)] = s
    return out


# --- conformal product oracle ------------------------------------------------

@dataclass
class FrameCurvature:
    """Curvature components in an explicit orthonormal frame."""

    frame: np.ndarray  # columns are frame vectors in coordinates
    riem: np.ndarray   # (d,d,d,d) float components in that frame


def orthonormal_frame(values):
    """Coordinate components of a g-orthonormal frame (columns).

    Cholesky-based, so the first frame vector is parallel to the first
    coordinate direction; for product metrics the frame respects the blocks.
    """
    L = np.linalg.cholesky(values)
    return np.linalg.inv(L).T  # columns E_a satisfy E^T g E = I


def frame_components(T, frame):
    """Convert an all-covariant float tensor to frame components."""
    out = np.asarray(T, dtype=float)
    r = out.ndim
    for axis in range(r):
        out = np.tensordot(out, frame, axes=([0], [0]))
        # tensordot moved the contracted slot to the end; rotation keeps order
    return out


def conformal_product_curvature_oracle(rho: Jet, base: MetricJets):
    """Frame curvature of the conformally scaled metric ``rho^2 * base``.

    Independent of :func:`curvature` applied to the scaled metric: uses the
    conformal-change identity.  With ``sigma = 1/rho``, base-orthonormal frame
    ``E_a`` and the scaled-orthonormal frame ``E_a / rho``::

        R[a,b,c,d] = sigma^2 Rbase[a,b,c,d]
                     + sigma * (KN(delta, Hess sigma))[a,b,c,d]
                     - |grad sigma|^2 (KN(delta, delta))[a,b,c,d] / 2

    where ``KN`` is the Kulkarni-Nomizu product and Hessian/gradient are taken
    in the base metric.  Diagonal components reduce to
    ``sigma^2 Rb_abab + sigma sig_aa + sigma sig_bb - |grad sigma|^2`` and the
    mixed ones to ``sigma^2 Rb_abac + sigma sig_bc``.
    """
    if rho.value <= 0.0:
        raise SingularMetricError(f"conformal factor must be positive, "
                                  f"got {rho.value!r}")
    d = base.dim
    sigma = 1.0 / rho
    gamma = christoffel(base)
    # covariant Hessian of sigma in the base metric (values)
    grad = np.array([sigma.derivative(k) for k in range(d)], dtype=object)
    hess = np.empty((d, d))
    for i in range(d):
        for j in range(d):
            h = sigma.derivative(i).derivative(j)
            val = h.value
            for k in range(d):
                val -= gamma[k, i, j].value * grad[k].value
            hess[i, j] = val
    gvals = base.values()
    ginv_vals = np.linalg.inv(gvals)
    grad_vals = np.array([g.value for g in grad])
    grad_norm2 = grad_vals @ ginv_vals @ grad_vals

    E = orthonormal_frame(gvals)
    base_pack = curvature(base)
    rb = frame_components(tensor_values(base_pack.riem), E)
    hf = frame_components(hess, E)
    s = sigma.value

    delta = np.eye(d)

    def kn(h, k):
        return (np.einsum("ac,bd->abcd", h, k)
                + np.einsum("bd,ac->abcd", h, k)
                - np.einsum("ad,bc->abcd", h, k)
                - np.einsum("bc,ad->abcd", h, k))

    r = s * s * rb + s * kn(delta, hf) - 0.5 * grad_norm2 * kn(delta, delta)
    return FrameCurvature(frame=E / rho.value, riem=r)

"""Built-in surfaces, hypersurface constructions, and controls.

Surfaces with constant Gaussian curvature in the three ambient geometries
(pseudosphere in R^3, Clifford torus in S^3, equidistant cone in upper
half-space H^3) feed the cylinder / cone / rotational constructions, which
produce the standard generic conformally flat hypersurfaces in R^4.  A torus
of revolution provides the non-flat negative control, and seeded trigonometric
graphs provide generic immersions for the universal identity suites.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import dsl, jets, riemann
from .errors import NonGenericError, RankDeficientError, SpecError

_ROOT2_INV = 1.0 / math.sqrt(2.0)


# --- surface invariants -------------------------------------------------------

@dataclass
class SurfaceInvariants:
    """First/second fundamental form data of a surface in R^3, S^3 or H^3."""

    I: np.ndarray    # (2,2) values
    II: np.ndarray   # (2,2) values
    H: float
    K: float         # intrinsic Gaussian curvature (space-form Gauss equation)
    k: np.ndarray    # principal curvatures, ascending


def _surface_jets(u: dsl.ImmersionSpec, point, order=2):
    return dsl.evaluate_jets(u, point, order)


def surface_invariants(u: dsl.ImmersionSpec, point):
    """Fundamental forms, mean and Gaussian curvature of a catalog surface.

    The Gaussian curvature is the intrinsic one: ``K = eps + det II / det I``
    with ``eps = 0, 1, -1`` for EUC3, SPH3, HYP3.
    """
    if u.domain_dim != 2:
        raise SpecError("surface_invariants needs a 2-dimensional domain")
    if u.ambient == "EUC3":
        return _surface_euc3(u, point)
    if u.ambient == "SPH3":
        return _surface_sph3(u, point)
    if u.ambient == "HYP3":
        return _surface_hyp3(u, point)
    raise SpecError(f"no surface geometry for ambient {u.ambient}")


def _principal(I, II, point):
    det = np.linalg.det(I)
    if det < 1e-14:
        raise RankDeficientError(f"surface rank-deficient at {tuple(point)}")
    k, _ = scipy.linalg.eigh(II, I)
    return k


def _surface_euc3(u, point):
    js = _surface_jets(u, point)
    d = [[js[a].derivative(i) for a in range(3)] for i in range(2)]
    I = np.array([[sum(d[i][a].value * d[j][a].value for a in range(3))
                   for j in range(2)] for i in range(2)])
    n = np.cross([c.value for c in d[0]], [c.value for c in d[1]])
    n = n / np.linalg.norm(n)
    II = np.array([[sum(d[i][a].derivative(j).value * n[a] for a in range(3))
                    for j in range(2)] for i in range(2)])
    k = _principal(I, II, point)
    H = 0.5 * np.trace(np.linalg.solve(I, II))
    K = np.linalg.det(II) / np.linalg.det(I)
    return SurfaceInvariants(I=I, II=II, H=float(H), K=float(K), k=k)


def _cross4_values(v1, v2, v3):
    out = np.empty(4)
    for dcol in range(4):
        keep = [c for c in range(4) if c != dcol]
        M = np.array([[v[c] for c in keep] for v in (v1, v2, v3)])
        out[dcol] = np.linalg.det(M) * (1.0 if (3 + dcol) % 2 == 0 else -1.0)
    return out


def _surface_sph3(u, point):
    js = _surface_jets(u, point)
    uval = np.array([c.value for c in js])
    d = [[js[a].derivative(i) for a in range(4)] for i in range(2)]
    dv = np.array([[c.value for c in row] for row in d])
    I = dv @ dv.T
    # normal inside S^3: orthogonal to the position and both tangents
    eta = _cross4_values(uval, dv[0], dv[1])
    eta = eta / np.linalg.norm(eta)
    II = np.array([[sum(d[i][a].derivative(j).value * eta[a] for a in range(4))
                    for j in range(2)] for i in range(2)])
    k = _principal(I, II, point)
    H = 0.5 * np.trace(np.linalg.solve(I, II))
    K = 1.0 + np.linalg.det(II) / np.linalg.det(I)
    return SurfaceInvariants(I=I, II=II, H=float(H), K=float(K), k=k)


def _surface_hyp3(u, point):
    # upper half-space model: metric delta_ij / x3^2, closed-form connection
    js = _surface_jets(u, point)
    x3 = js[2].value
    d = [[js[a].derivative(i) for a in range(3)] for i in range(2)]
    dv = np.array([[c.value for c in row] for row in d])
    I = (dv @ dv.T) / x3 ** 2
    ne = np.cross(dv[0], dv[1])
    eta = x3 * ne / np.linalg.norm(ne)  # hyperbolic unit normal
    II = np.empty((2, 2))
    for i in range(2):
        for j in range(2):
            dd = np.array([d[i][a].derivative(j).value for a in range(3)])
            # ambient covariant correction for the conformal metric
            corr = (-dv[i] * dv[j][2] - dv[j] * dv[i][2]
                    + np.array([0.0, 0.0, dv[i] @ dv[j]])) / x3
            II[i, j] = (dd + corr) @ eta / x3 ** 2
    k = _principal(I, II, point)
    H = 0.5 * np.trace(np.linalg.solve(I, II))
    K = -1.0 + np.linalg.det(II) / np.linalg.det(I)
    return SurfaceInvariants(I=I, II=II, H=float(H), K=float(K), k=k)


def surface_normal_jets_hyp3(u: dsl.ImmersionSpec, point, order=2):
    """Hyperbolic-unit normal as jets (for the dx.deta cross-check)."""
    js = _surface_jets(u, point, order)
    d = [[js[a].derivative(i) for a in range(3)] for i in range(2)]
    ne = [d[0][(a + 1) % 3] * d[1][(a + 2) % 3]
          - d[0][(a + 2) % 3] * d[1][(a + 1) % 3] for a in range(3)]
    norm2 = ne[0] * ne[0] + ne[1] * ne[1] + ne[2] * ne[2]
    inv_len = 1.0 / jets.sqrt(norm2)
    x3 = js[2].truncate(order - 1)
    return js, [x3 * ne[a] * inv_len for a in range(3)]


# --- hypersurface builders ------------------------------------------------------

def build_cylinder(u: dsl.ImmersionSpec, t_box=(0.0, 1.0)):
    """Cylinder (t, x) -> (t, u(x)) over a surface in R^3."""
    if u.ambient != "EUC3":
        raise SpecError("build_cylinder needs an EUC3 surface")
    comps = [dsl.Var(0)] + [dsl.shift_variables(c, 1) for c in u.components]
    return dsl.make_immersion(f"cylinder_{u.name}", 3, "EUC4", comps,
                              (tuple(t_box),) + u.box, u.params)


def build_cone(u: dsl.ImmersionSpec, t_box=(0.8, 1.2)):
    """Cone (t, x) -> t u(x) over a surface in the unit 3-sphere."""
    if u.ambient != "SPH3":
        raise SpecError("build_cone needs an SPH3 surface")
    if t_box[0] <= 0.0:
        raise SpecError("cone parameter interval must avoid the vertex t = 0")
    comps = [dsl.Binary("*", dsl.Var(0), dsl.shift_variables(c, 1))
             for c in u.components]
    return dsl.make_immersion(f"cone_{u.name}", 3, "EUC4", comps,
                              (tuple(t_box),) + u.box, u.params)


def build_rotational(u: dsl.ImmersionSpec, angle_box=(0.2, 1.0)):
    """Rotational hypersurface (phi, x) -> (x1, x2, x3 cos phi, x3 sin phi)
    over a surface in upper half-space."""
    if u.ambient != "HYP3":
        raise SpecError("build_rotational needs an HYP3 surface")
    c1, c2, c3 = (dsl.shift_variables(c, 1) for c in u.components)
    comps = [c1, c2,
             dsl.Binary("*", c3, dsl.Unary("cos", dsl.Var(0))),
             dsl.Binary("*", c3, dsl.Unary("sin", dsl.Var(0)))]
    return dsl.make_immersion(f"rotational_{u.name}", 3, "EUC4", comps,
                              (tuple(angle_box),) + u.box, u.params)


# --- named surfaces ---------------------------------------------------------------

def pseudosphere():
    """Tractroid in R^3 with K = -1, parametrized away from its rim."""
    return dsl.make_immersion(
        "pseudosphere", 2, "EUC3",
        "(cos(u2)/cosh(u1), sin(u2)/cosh(u1), u1 - tanh(u1))",
        [(0.5, 1.5), (0.1, 1.2)])


def clifford_torus(a=_ROOT2_INV):
    """Flat torus in S^3 with constant principal curvatures."""
    if not 0.0 < a < 1.0:
        raise SpecError(f"clifford_torus radius must be in (0,1), got {a}")
    b = math.sqrt(1.0 - a * a)
    return dsl.make_immersion(
        "clifford_torus", 2, "SPH3",
        "(a*cos(u1), a*sin(u1), b*cos(u2), b*sin(u2))",
        [(0.1, 1.3), (0.1, 1.3)], {"a": a, "b": b})


def hyperbolic_cone(alpha=math.pi / 4):
    """Equidistant cone around a vertical geodesic of upper half-space;
    intrinsically flat (principal curvatures sin(alpha), 1/sin(alpha))."""
    if not 0.0 < alpha < math.pi / 2:
        raise SpecError(f"hyperbolic_cone angle must be in (0, pi/2), got {alpha}")
    return dsl.make_immersion(
        "hyperbolic_cone", 2, "HYP3",
        "(exp(u1)*sa*cos(u2), exp(u1)*sa*sin(u2), exp(u1)*ca)",
        [(-0.5, 0.5), (0.3, 1.2)],
        {"sa": math.sin(alpha), "ca": math.cos(alpha)})


def hyperbolic_flat_front(a=0.5, b=1.0):
    """Flat (K = 0) surface of revolution around the vertical geodesic of
    upper half-space with non-constant principal curvatures.

    With sigma the hyperbolic arclength of the profile, flatness forces the
    Euclidean slope r/h to be linear, ``rho(sigma) = a sigma + b``; the
    profile height then integrates in closed form,
    ``h = (1+rho^2)^(-1/2) exp(asinh(rho/c)/a - artanh(a rho / sqrt(c^2+rho^2)))``
    with ``c = sqrt(1-a^2)``.  Unlike the equidistant cone, the principal
    curvatures vary, so the rotational hypersurface over it is a genuine
    rotational-class example rather than a disguised cone.
    """
    if not 0.0 < a < 1.0:
        raise SpecError(f"flat front slope must be in (0,1), got {a}")
    c2 = 1.0 - a * a
    c = math.sqrt(c2)
    rho = f"({a!r}*u1 + {b!r})"
    S = f"sqrt({rho}^2 + {c2!r})"
    asinh_t = f"log(({rho} + {S})/{c!r})"
    artanh_t = f"(0.5*log(({S} + {a!r}*{rho})/({S} - {a!r}*{rho})))"
    h = f"((1 + {rho}^2)^(-0.5) * exp((1/{a!r})*{asinh_t} - {artanh_t}))"
    r = f"({rho}*{h})"
    return dsl.make_immersion(
        "hyperbolic_flat_front", 2, "HYP3",
        f"({r}*cos(u2), {r}*sin(u2), {h})",
        [(0.1, 0.9), (0.2, 1.2)])


def torus_control(R=2.0, r=0.7):
    """Torus of revolution in R^3: non-constant K, the negative control."""
    return dsl.make_immersion(
        "torus_control", 2, "EUC3",
        "((R + r*cos(u1))*cos(u2), (R + r*cos(u1))*sin(u2), r*sin(u1))",
        [(0.3, 1.2), (0.2, 1.4)], {"R": R, "r": r})


def round_sphere(radius=1.0):
    """Round sphere patch in R^3 (umbilic: the cylinder over it is a guard
    case, not a usable example)."""
    return dsl.make_immersion(
        "round_sphere", 2, "EUC3",
        "(r*cos(u1)*cos(u2), r*cos(u1)*sin(u2), r*sin(u1))",
        [(0.2, 1.0), (0.2, 1.2)], {"r": radius})


def random_graph(seed=0, max_attempts=40):
    """Seeded generic graph immersion (u1, u2, u3, h(u)) with a trigonometric
    polynomial height; seeds whose box contains a point with principal
    curvature gap below 1e-4 are rejected deterministically."""
    for attempt in range(max_attempts):
        rng = np.random.default_rng([int(seed), attempt])
        terms = []
        for _ in range(3):
            amp = rng.uniform(0.15, 0.4)
            freqs = rng.uniform(0.6, 1.3, size=3)
            phase = rng.uniform(0.0, 2.0 * math.pi)
            trig = rng.choice(["sin", "cos"])
            arg = " + ".join(f"{freqs[i]:.6f}*u{i + 1}" for i in range(3))
            terms.append(f"{amp:.6f}*{trig}({arg} + {phase:.6f})")
        h = " + ".join(terms)
        spec = dsl.make_immersion(f"random_graph_{seed}", 3, "EUC4",
                                  f"(u1, u2, u3, {h})",
                                  [(-0.4, 0.4)] * 3)
        if _screen_generic(spec):
            return spec
    raise SpecError(f"random_graph: no generic seed found from {seed}")


def _screen_generic(spec, gap_tol=1e-4):
    from .moebius import euclidean_invariants  # local import, cycle-free

    axes = [np.linspace(lo, hi, 3) for lo, hi in spec.box]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1)
    extra = np.random.default_rng(12345).uniform(
        [lo for lo, _ in spec.box], [hi for _, hi in spec.box], size=(8, 3))
    for p in np.vstack([pts, extra]):
        try:
            e = euclidean_invariants(dsl.evaluate_jets(spec, p, 3), p)
        except (NonGenericError, RankDeficientError):
            return False
        if np.diff(e.k).min() < gap_tol:
            return False
    return True


# --- registry ----------------------------------------------------------------------

def cylinder_pseudosphere():
    return build_cylinder(pseudosphere())


def cone_clifford(a=_ROOT2_INV):
    return build_cone(clifford_torus(a))


def rotational_hyperbolic(a=0.5, b=1.0):
    """Rotational hypersurface over the flat front: the genuine
    rotational-class (Q > 0) example.

    The rotational hypersurface over the equidistant cone is scale invariant
    (it coincides with the cone over a Clifford-type torus), so it classifies
    as a cone; the flat front avoids that degeneracy."""
    return build_rotational(hyperbolic_flat_front(a, b))


def rotational_cone_degenerate(alpha=math.pi / 4):
    """Rotational hypersurface over the equidistant cone.  Scale invariant,
    hence cone-class (Q = -1/3) despite the rotational construction; kept as
    a documented degenerate instance."""
    return build_rotational(hyperbolic_cone(alpha))


def cylinder_torus(R=2.0, r=0.7):
    return build_cylinder(torus_control(R, r))


def cylinder_sphere(radius=1.0):
    return build_cylinder(round_sphere(radius))


#: Named factories addressable from the CLI as ``name(param=value, ...)``.
LIBRARY = {
    "pseudosphere": pseudosphere,
    "clifford_torus": clifford_torus,
    "hyperbolic_cone": hyperbolic_cone,
    "hyperbolic_flat_front": hyperbolic_flat_front,
    "torus_control": torus_control,
    "round_sphere": round_sphere,
    "random_graph": random_graph,
    "cylinder_pseudosphere": cylinder_pseudosphere,
    "cone_clifford": cone_clifford,
    "rotational_hyperbolic": rotational_hyperbolic,
    "rotational_cone_degenerate": rotational_cone_degenerate,
    "cylinder_torus": cylinder_torus,
    "cylinder_sphere": cylinder_sphere,
}


def builtin_library():
    """Names of all registered immersions."""
    return sorted(LIBRARY)


def get_immersion(name, **params):
    try:
        factory = LIBRARY[name]
    except KeyError:
        raise SpecError(f"unknown immersion {name!r}; known: "
                        f"{', '.join(builtin_library())}")
    return factory(**params)


def conformal_factor(surface: SurfaceInvariants, ambient):
    """Conformal factor 4 H^2 - 3 (K - eps) of the product-form metric."""
    eps = {"EUC3": 0.0, "SPH3": 1.0, "HYP3": -1.0}[ambient]
    return 4.0 * surface.H ** 2 - 3.0 * (surface.K - eps)

"""Moebius-geometric invariants of hypersurfaces in R^4.

Computes the conformally invariant data of an immersed hypersurface
f: M^3 -> R^4 (Moebius metric, second fundamental form, Blaschke tensor,
Moebius form, curvature spheres) on truncated Taylor jets, verifies the
structure identities and conformal-flatness criteria numerically, and
classifies conformally flat hypersurfaces with closed Moebius form into
cylinder / cone / rotational type.
"""

__version__ = "0.1.0"

from . import jets  # noqa: F401
from .errors import ConflatError  # noqa: F401

"""Phase-field potentials and the conductivity interpolation function.

The phase field v marks sound material at v=1 and defect at v=0.  The
conductivity coefficient interpolates between a small floor eps^2 (so the
state problem stays elliptic) and 1 through a clamped cubic smoothstep.
Two wells are supported: a single well centered at 1, which penalizes any
departure from sound material and favors thin crack-like sets, and a
symmetric double well with minima at 0 and 1, which favors two bulk
phases separated by an interface and suits cavities.  The double well is
normalized so that 2*int_0^1 sqrt(W) = 1, making the interface energy per
unit length equal to the weight c in front of the well term.

All functions accept scalars or arrays.
"""

import enum

import numpy as np


class PotentialKind(enum.Enum):
    SINGLE_WELL = "single-well"
    DOUBLE_WELL = "double-well"


def smoothstep(t):
    """Clamped cubic -2t^3 + 3t^2: 0 for t<=0, 1 for t>=1, C1 at the joints."""
    s = np.clip(t, 0.0, 1.0)
    return s * s * (3.0 - 2.0 * s)


def smoothstep_prime(t):
    s = np.clip(t, 0.0, 1.0)
    return 6.0 * s * (1.0 - s)


def conductivity(t, eps):
    """Regularized interpolation (1 - eps^2)*smoothstep(t) + eps^2 in [eps^2, 1]."""
    e2 = eps * eps
    return (1.0 - e2) * smoothstep(t) + e2

def conductivity_prime(t, eps):
    return (1.0 - eps * eps) * smoothstep_prime(t)


def single_well(t):
    """(t-1)^2 / 4, minimum at 1.  Defined globally, no clamping."""
    d = np.asarray(t, dtype=float) - 1.0
    return 0.25 * d * d


def single_well_prime(t):
    return 0.5 * (np.asarray(t, dtype=float) - 1.0)


def double_well(t):
    """9 t^2 (t-1)^2, minima at 0 and 1, normalized so 2*int_0^1 sqrt(W) = 1."""
    t = np.asarray(t, dtype=float)
    d = t - 1.0
    return 9.0 * t * t * d * d


def double_well_prime(t):
    t = np.asarray(t, dtype=float)
    return 18.0 * t * (t - 1.0) * (2.0 * t - 1.0)


def well(kind, t):
    if kind is PotentialKind.SINGLE_WELL:
        return single_well(t)
    if kind is PotentialKind.DOUBLE_WELL:
        return double_well(t)
    raise ValueError(f"unknown potential kind {kind!r}")


def well_prime(kind, t):
    if kind is PotentialKind.SINGLE_WELL:
        return single_well_prime(t)
    if kind is PotentialKind.DOUBLE_WELL:
        return double_well_prime(t)
    raise ValueError(f"unknown potential kind {kind!r}")

"""Power-law communication kernels.

The communication weight is

    psi(r) = |r|^(-beta),   0 < beta < 1,

singular at contact and strictly decreasing in |r|.  Its odd antiderivative

    Psi(x) = sgn(x) |x|^(1-beta) / (1-beta)

is bounded on bounded sets and Hoelder continuous, which is what makes the
first-order form of the alignment dynamics globally well behaved.  The even
pair potential with K' = Psi,

    K(x) = |x|^(2-beta) / ((2-beta)(1-beta)),

generates the interaction energy of the continuum gradient-flow formulation.

beta = 1/2 is evaluated through square roots; every other exponent goes
through floating-point powers.  The special casing is not observable in
results beyond floating-point noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

__all__ = ["CommunicationKernel"]


def _match(out: np.ndarray, like) -> "np.ndarray | float":
    """Return a bare float when the input was scalar."""
    return out.item() if out.ndim == 0 else out


@dataclass(frozen=True)
class CommunicationKernel:
    """Alignment weight family indexed by the singularity exponent ``beta``.

    Invariants enforced at construction: 0 < beta < 1.  ``psi`` is positive
    and strictly decreasing on (0, inf), ``antiderivative`` is odd, strictly
    increasing and vanishes at 0, ``potential`` is even, nonnegative and
    vanishes at 0.
    """

    beta: float

    def __post_init__(self):
        b = float(self.beta)
        if not np.isfinite(b) or not 0.0 < b < 1.0:
            raise ValidationError(f"beta must lie in (0,1), got {self.beta!r}")
        object.__setattr__(self, "beta", b)

    def psi(self, r):
        """Communication weight |r|^(-beta); returns inf at r = 0."""
        a = np.abs(np.asarray(r, dtype=np.float64))
        with np.errstate(divide="ignore"):
            if self.beta == 0.5:
                out = 1.0 / np.sqrt(a)
            else:
                out = a ** (-self.beta)
        return _match(out, r)

    def antiderivative(self, x):
        """Odd primitive of psi: sgn(x) |x|^(1-beta) / (1-beta)."""
        arr = np.asarray(x, dtype=np.float64)
        a = np.abs(arr)
        if self.beta == 0.5:
            mag = np.sqrt(a)
        else:
            mag = a ** (1.0 - self.beta)
        out = np.sign(arr) * mag / (1.0 - self.beta)
        return _match(out, x)

    def antiderivative_inv(self, y):
        """Inverse of ``antiderivative``: sgn(y) ((1-beta)|y|)^(1/(1-beta))."""
        arr = np.asarray(y, dtype=np.float64)
        a = (1.0 - self.beta) * np.abs(arr)
        if self.beta == 0.5:
            mag = a * a
        else:
            mag = a ** (1.0 / (1.0 - self.beta))
        out = np.sign(arr) * mag
        return _match(out, y)

    def potential(self, x):
        """Even pair potential |x|^(2-beta) / ((2-beta)(1-beta)); K' = Psi."""
        a = np.abs(np.asarray(x, dtype=np.float64))
        if self.beta == 0.5:
            mag = a * np.sqrt(a)
        else:
            mag = a ** (2.0 - self.beta)
        out = mag / ((2.0 - self.beta) * (1.0 - self.beta))
        return _match(out, x)

"""Log-probability bundles fed to preference objectives.

Fields are float arrays of shape (batch,) so one bundle carries a whole batch; scalars are promoted to shape (1,).
"""

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray

Array = NDArray[np.float64]


def _vector(values: ArrayLike) -> Array:
    return np.atleast_1d(np.asarray(values, dtype=np.float64))


@dataclass(frozen=True)
class LogProbBundle:
    """Policy and reference log-probabilities of the chosen and rejected responses.

    Attributes:
        lp_w: log pi_theta(y_w | x).
        lp_l: log pi_theta(y_l | x).
        ref_lp_w: log pi_ref(y_w | x).
        ref_lp_l: log pi_ref(y_l | x).
        len_w: Chosen response length.
        len_l: Rejected response length.
        extra_lp: Policy log-probabilities of extra negatives, shape (batch, n).
        extra_ref_lp: Reference log-probabilities of extra negatives, shape (batch, n).
    """

    lp_w: Array
    lp_l: Array
    ref_lp_w: Array
    ref_lp_l: Array
    len_w: Array
    len_l: Array
    extra_lp: Array = field(default_factory=lambda: np.zeros((1, 0)))
    extra_ref_lp: Array = field(default_factory=lambda: np.zeros((1, 0)))

    @classmethod
    def of(
        cls,
        lp_w: ArrayLike,
        lp_l: ArrayLike,
        ref_lp_w: ArrayLike,
        ref_lp_l: ArrayLike,
        len_w: ArrayLike = 1.0,
        len_l: ArrayLike = 1.0,
        extra_negatives: ArrayLike | None = None,
    ) -> "LogProbBundle":
        """Build a bundle from scalars or arrays.

        Args:
            lp_w: Policy chosen log-probabilities.
            lp_l: Policy rejected log-probabilities.
            ref_lp_w: Reference chosen log-probabilities.
            ref_lp_l: Reference rejected log-probabilities.
            len_w: Chosen lengths.
            len_l: Rejected lengths.
            extra_negatives: Pairs of (lp, ref_lp) per extra negative, shape (batch, n, 2) or (n, 2).

        Returns:
            Bundle with every field promoted to arrays.
        """
        lp_w_array = _vector(lp_w)
        batch = lp_w_array.shape[0]
        if extra_negatives is None:
            extra = np.zeros((batch, 0, 2))
        else:
            extra = np.asarray(extra_negatives, dtype=np.float64)
            if extra.ndim == 2:
                extra = extra[None]
        return cls(
            lp_w=lp_w_array,
            lp_l=_vector(lp_l),
            ref_lp_w=_vector(ref_lp_w),
            ref_lp_l=_vector(ref_lp_l),
            len_w=np.broadcast_to(_vector(len_w), (batch,)).copy(),
            len_l=np.broadcast_to(_vector(len_l), (batch,)).copy(),
            extra_lp=extra[..., 0],
            extra_ref_lp=extra[..., 1],
        )

    def swapped(self) -> "LogProbBundle":
        """Bundle with the chosen and rejected roles exchanged."""
        return LogProbBundle(
            self.lp_l,
            self.lp_w,
            self.ref_lp_l,
            self.ref_lp_w,
            self.len_l,
            self.len_w,
            self.extra_lp,
            self.extra_ref_lp,
        )


@dataclass(frozen=True)
class BundleGrad:
    """Loss gradient with respect to the policy log-probabilities (reference terms are constants)."""

    d_lp_w: Array
    d_lp_l: Array
    d_extra_lp: Array

"""Pure numpy implementations of the hot kernels (fallback for ``_ckernels``)."""
import numpy as np
from scipy.special import betaln


def folded_log_lr(p, a, b):
    """|log f_Beta(a,b)(p)| elementwise; the null density is uniform."""
    p = np.asarray(p, dtype=np.float64)
    out = np.full(p.shape, -betaln(a, b))
    with np.errstate(divide="ignore", invalid="ignore"):
        if a != 1.0:
            out += (a - 1.0) * np.log(p)
        if b != 1.0:
            out += (b - 1.0) * np.log1p(-p)
    return np.abs(out)


def tolerance_accumulate(dist, loss, taus):
    """Count, sum and sum of squares of ``loss`` over ``dist <= tau`` for each tau.

    ``taus`` must be sorted ascending.  Each element lands in the bin of the
    smallest tau that accepts it; cumulative sums over bins give the totals,
    so every tau is served by a single pass over the data.
    """
    dist = np.asarray(dist, dtype=np.float64)
    loss = np.asarray(loss, dtype=np.float64)
    taus = np.asarray(taus, dtype=np.float64)
    nt = len(taus)
    bins = np.searchsorted(taus, dist, side="left")
    counts = np.bincount(bins, minlength=nt + 1)[:nt].astype(np.int64)
    sums = np.bincount(bins, weights=loss, minlength=nt + 1)[:nt]
    sumsq = np.bincount(bins, weights=loss * loss, minlength=nt + 1)[:nt]
    return np.cumsum(counts), np.cumsum(sums), np.cumsum(sumsq)

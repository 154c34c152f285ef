"""Convergence-slope and dof-for-error fitting rules.

Slope rule, so two implementations agree given the same error table:

* Rates are positive for converging data: ``rate = -d ln(error) / d ln(cells)``.
* Local rates use successive points, ``-(ln e_i - ln e_{i-1}) / (ln n_i - ln n_{i-1})``.
* The pre-saturation range starts at the first point and grows while the error
  stays above ``floor`` (default 1e-11) and the local rate into the new point
  is at least half the largest local rate seen so far.
* The fitted slope is the ordinary least-squares slope of ``-ln(error)`` on
  ``ln(cells)`` over that range (``nan`` when fewer than two points remain).
"""

import math

import numpy as np

SATURATION_FLOOR = 1e-11


def local_slopes(cells, errors):
    n = np.log(np.asarray(cells, dtype=float))
    e = np.log(np.asarray(errors, dtype=float))
    return -(np.diff(e) / np.diff(n))


def presaturation_count(cells, errors, floor=SATURATION_FLOOR):
    """Number of leading points belonging to the pre-saturation range."""
    errors = np.asarray(errors, dtype=float)
    if errors.size == 0 or not errors[0] > floor:
        return 0
    rates = local_slopes(cells, errors)
    count, best = 1, -math.inf
    for i, rate in enumerate(rates, start=1):
        if not errors[i] > floor or not np.isfinite(rate):
            break
        if best > 0 and rate < 0.5 * best:
            break
        best = max(best, rate)
        count += 1
    return count


def fit_slope(cells, errors, floor=SATURATION_FLOOR):
    """Least-squares convergence rate over the pre-saturation range."""
    k = presaturation_count(cells, errors, floor)
    if k < 2:
        return math.nan
    x = np.log(np.asarray(cells[:k], dtype=float))
    y = -np.log(np.asarray(errors[:k], dtype=float))
    xm = x.mean()
    return float(np.sum((x - xm) * (y - y.mean())) / np.sum((x - xm) ** 2))


def max_presaturation_rate(cells, errors, floor=SATURATION_FLOOR):
    """Largest local rate within the pre-saturation range (``nan`` if none)."""
    k = presaturation_count(cells, errors, floor)
    if k < 2:
        return math.nan
    return float(np.max(local_slopes(cells[:k], errors[:k])))


def dof_for_error(dofs, errors, target, floor=SATURATION_FLOOR):
    """Log-log interpolated dof at which the error curve crosses ``target``.

    Only the pre-saturation range is used.  Returns ``None`` when the target
    lies outside the measured errors.
    """
    k = presaturation_count(dofs, errors, floor)
    dofs = np.asarray(dofs[:k], dtype=float)
    errors = np.asarray(errors[:k], dtype=float)
    for i in range(1, k):
        hi, lo = errors[i - 1], errors[i]
        if hi >= target >= lo and hi > lo:
            s = (math.log(hi) - math.log(target)) / (math.log(hi) - math.log(lo))
            return float(math.exp(math.log(dofs[i - 1]) + s * (math.log(dofs[i]) - math.log(dofs[i - 1]))))
    if k and errors[0] == target:
        return float(dofs[0])
    return None


def kreiss_oliger_constant(dof, error, order):
    """``c`` in ``dof = c (1/error)^(1/order)``."""
    return dof * error ** (1.0 / order)

"""Finite-horizon probability bounds from barrier and simulation functions."""
from __future__ import annotations

import warnings

from .errors import InvalidParameterError
from .gains import GainFn


class VacuousBoundWarning(UserWarning):
    """The requested bound is 1 and carries no information."""


def _check(gamma, lam, kappa, psi, T):
    if not lam > 0:
        raise InvalidParameterError(f"level lambda must be > 0, got {lam}")
    if not 0 < kappa < 1:
        raise InvalidParameterError(f"kappa must lie in (0,1), got {kappa}")
    if not (gamma >= 0 and psi >= 0):
        raise InvalidParameterError("gamma and psi must be >= 0")
    if int(T) != T or T < 0:
        raise InvalidParameterError(f"horizon must be a nonnegative integer, got {T}")


def delta_branch(lam: float, kappa: float, psi: float) -> int:
    """1 when ``lam >= psi/kappa`` (ties go to branch 1), else 2."""
    return 1 if lam >= psi / kappa else 2


def _level_bound(g: float, lam: float, kappa: float, psi: float, T: int) -> float:
    if delta_branch(lam, kappa, psi) == 1:
        val = 1.0 - (1.0 - g / lam) * (1.0 - psi / lam) ** T
    else:
        val = (g / lam) * (1.0 - kappa) ** T + (psi / (kappa * lam)) * (1.0 - (1.0 - kappa) ** T)
    return min(max(val, 0.0), 1.0)


def exit_probability_delta(gamma: float, lam: float, kappa: float, psi: float, T: int) -> float:
    """Upper bound on reaching the unsafe set within ``T`` steps."""
    _check(gamma, lam, kappa, psi, T)
    if gamma > lam:
        warnings.warn(f"gamma={gamma} exceeds lambda={lam}: the exit bound is vacuous", VacuousBoundWarning, 2)
        return 1.0
    d = _level_bound(gamma, lam, kappa, psi, int(T))
    if d >= 1.0:
        warnings.warn("exit bound evaluates to 1", VacuousBoundWarning, 2)
    return d


def estimation_accuracy_theta(phi0: float, eps_gain: GainFn, eps: float, mu: float, c: float, T: int) -> float:
    """Upper bound on ``sup_k ||x(k) - xh(k)|| >= eps`` within ``T`` steps."""
    if eps_gain.is_zero:
        raise InvalidParameterError("the accuracy gain must be strictly increasing")
    if not phi0 >= 0:
        raise InvalidParameterError(f"initial simulation-function value must be >= 0, got {phi0}")
    if not eps >= 0:
        raise InvalidParameterError(f"accuracy radius must be >= 0, got {eps}")
    level = float(eps_gain(eps))
    if level <= 0:
        warnings.warn("accuracy radius 0 gives a vacuous bound", VacuousBoundWarning, 2)
        return 1.0
    _check(phi0, level, mu, c, T)
    if phi0 > level:
        warnings.warn(f"phi0={phi0} exceeds eps_gain(eps)={level}: the bound is vacuous", VacuousBoundWarning, 2)
        return 1.0
    return _level_bound(phi0, level, mu, c, int(T))


def combined_bound(delta: float, theta: float) -> float:
    for nm, v in (("delta", delta), ("theta", theta)):
        if not 0 <= v <= 1:
            raise InvalidParameterError(f"{nm} must lie in [0,1], got {v}")
    return min(delta + theta, 1.0)

"""Viscosity laws and the kinematic quantities they depend on.

All tensor functions accept stacked inputs: ``grad_u`` has shape (..., 2, 2)
with ``grad_u[..., i, j] = d u_i / d x_j``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, MaterialRangeError


def strain_rate(grad_u):
    g = np.asarray(grad_u, dtype=float)
    return 0.5 * (g + np.swapaxes(g, -1, -2))


def shear_rate(grad_u):
    eps = strain_rate(grad_u)
    return np.sqrt(2.0 * np.einsum("...ij,...ij->...", eps, eps))


def viscous_dissipation(grad_u, eta):
    """``2 eta grad(u) : eps(u)``, non-negative since it equals ``2 eta eps:eps``."""
    g = np.asarray(grad_u, dtype=float)
    return 2.0 * eta * np.einsum("...ij,...ij->...", g, strain_rate(g))


def cauchy_stress(grad_u, p, eta):
    eps = strain_rate(grad_u)
    p = np.asarray(p, dtype=float)
    eta = np.asarray(eta, dtype=float)
    return -p[..., None, None] * np.eye(2) + 2.0 * eta[..., None, None] * eps


@dataclass(frozen=True)
class Newtonian:
    eta: float

    def __post_init__(self):
        if self.eta <= 0:
            raise ConfigurationError("eta must be positive")

    def viscosity(self, gamma_dot, T=None):
        return np.full(np.shape(gamma_dot), float(self.eta))


@dataclass(frozen=True)
class Carreau:
    eta0: float
    eta_inf: float
    lam: float
    n: float

    def __post_init__(self):
        if not (self.eta0 >= self.eta_inf >= 0.0):
            raise ConfigurationError("Carreau needs eta0 >= eta_inf >= 0")
        if self.lam < 0.0 or not (0.0 < self.n <= 1.0):
            raise ConfigurationError("Carreau needs lambda >= 0 and 0 < n <= 1")

    def viscosity(self, gamma_dot, T=None):
        g = np.asarray(gamma_dot, dtype=float)
        return self.eta_inf + (self.eta0 - self.eta_inf) * (
            1.0 + (self.lam * g) ** 2) ** (0.5 * (self.n - 1.0))


@dataclass(frozen=True)
class CrossWLF:
    """Cross law with a WLF shift of the zero-shear viscosity.

    Temperatures must satisfy ``T - T_ref > -A2 + window`` (default 1 K);
    the WLF expression has a pole at ``T - T_ref = -A2``.
    """

    D1: float
    tau_star: float
    n: float
    A1: float
    A2: float
    T_ref: float
    window: float = 1.0

    def __post_init__(self):
        if self.D1 <= 0.0 or self.A2 <= 0.0 or self.tau_star <= 0.0:
            raise ConfigurationError("CrossWLF needs D1 > 0, A2 > 0, tau_star > 0")
        if not (0.0 < self.n <= 1.0):
            raise ConfigurationError("CrossWLF needs 0 < n <= 1")

    def log_zero_shear_viscosity(self, T):
        dT = np.asarray(T, dtype=float) - self.T_ref
        if np.any(dT <= -self.A2 + self.window):
            raise MaterialRangeError(
                f"temperature outside WLF range: need T - T_ref > {-self.A2 + self.window}, "
                f"got min {float(np.min(dT))}")
        return np.log(self.D1) - self.A1 * dT / (self.A2 + dT)

    def zero_shear_viscosity(self, T):
        return np.exp(self.log_zero_shear_viscosity(T))

    def viscosity(self, gamma_dot, T):
        # log form: eta0 alone may overflow near the WLF pole while eta does not
        log_eta0 = self.log_zero_shear_viscosity(T)
        g = np.asarray(gamma_dot, dtype=float)
        with np.errstate(divide="ignore"):
            z = (1.0 - self.n) * (log_eta0 + np.log(g) - np.log(self.tau_star))
        return np.exp(log_eta0 - np.logaddexp(0.0, z))


def viscosity(model, gamma_dot, T=None):
    if np.any(np.asarray(gamma_dot) < 0.0):
        raise MaterialRangeError("shear rate must be non-negative")
    return model.viscosity(gamma_dot, T)


@dataclass(frozen=True)
class PhysicalParams:
    rho: float = 1.0
    cp: float = 1.0
    kappa: float = 1.0
    b: tuple = (0.0, 0.0)

    def __post_init__(self):
        if self.rho <= 0.0 or self.cp <= 0.0 or self.kappa < 0.0:
            raise ConfigurationError("need rho > 0, cp > 0, kappa >= 0")


MODELS = {"newtonian": Newtonian, "carreau": Carreau, "cross_wlf": CrossWLF}


def model_from_dict(d):
    """Build a viscosity model from config keys named after the usual symbols."""
    d = dict(d)
    kind = d.pop("model", None)
    names = {"etaInf": "eta_inf", "lambda": "lam", "tauStar": "tau_star", "Tref": "T_ref"}
    d = {names.get(k, k): v for k, v in d.items()}
    if kind not in MODELS:
        raise ConfigurationError(f"material.model: unknown model {kind!r}")
    try:
        return MODELS[kind](**d)
    except TypeError as exc:
        raise ConfigurationError(f"material: {exc}") from None

"""Exponential-family definitions: link functions, variance functions,
log-likelihoods, and support checks for the three supported families.
"""
from __future__ import annotations

import numpy as np
from scipy import special

from .errors import ConfigError, DataError


class Family:
    """One exponential family with its canonical link.

    ``loglik`` returns the summed log-likelihood of observations ``z``
    given linear predictors ``eta``; for the Gaussian family ``scale``
    is the residual variance (ignored otherwise).
    """

    name: str = ""
    aliases: tuple = ()

    def link(self, mu):
        raise NotImplementedError

    def inv_link(self, eta):
        raise NotImplementedError

    def variance(self, mu):
        raise NotImplementedError

    def loglik(self, z, eta, scale=1.0):
        raise NotImplementedError

    def check_support(self, values):
        """Raise DataError (with the first offending flat index) if any
        value lies outside the family's support."""
        raise NotImplementedError

    def working_weights(self, eta, scale=1.0):
        """IRLS weights for the canonical link, clipped away from zero."""
        raise NotImplementedError

    def __repr__(self):
        return f"Family({self.name})"


class Binomial(Family):
    name = "binomial"
    aliases = ("binomial-logit", "bernoulli")

    def link(self, mu):
        return special.logit(mu)

    def inv_link(self, eta):
        return special.expit(eta)

    def variance(self, mu):
        return mu * (1.0 - mu)

    def loglik(self, z, eta, scale=1.0):
        # z*eta - log(1 + e^eta), stable through logaddexp
        return float(np.sum(z * eta - np.logaddexp(0.0, eta)))

    def check_support(self, values):
        bad = (values != 0) & (values != 1)
        if np.any(bad):
            idx = int(np.argmax(bad.ravel()))
            raise DataError(
                f"binomial values must be 0 or 1; offending entry at flat index {idx}"
            )

    def working_weights(self, eta, scale=1.0):
        mu = special.expit(eta)
        return np.clip(mu * (1.0 - mu), 1e-10, None)


class Poisson(Family):
    name = "poisson"
    aliases = ("poisson-log",)

    def link(self, mu):
        return np.log(mu)

    def inv_link(self, eta):
        return np.exp(eta)

    def variance(self, mu):
        return mu

    def loglik(self, z, eta, scale=1.0):
        return float(np.sum(z * eta - np.exp(eta) - special.gammaln(z + 1.0)))

    def check_support(self, values):
        bad = (values < 0) | (values != np.floor(values))
        if np.any(bad):
            idx = int(np.argmax(bad.ravel()))
            raise DataError(
                f"poisson values must be nonnegative integers; offending entry at flat index {idx}"
            )

    def working_weights(self, eta, scale=1.0):
        return np.clip(np.exp(np.minimum(eta, 30.0)), 1e-10, None)


class Gaussian(Family):
    name = "gaussian"
    aliases = ("gaussian-identity", "normal")

    def link(self, mu):
        return np.asarray(mu, dtype=float)

    def inv_link(self, eta):
        return np.asarray(eta, dtype=float)

    def variance(self, mu):
        return np.ones_like(np.asarray(mu, dtype=float))

    def loglik(self, z, eta, scale=1.0):
        r = z - eta
        n = r.size
        return float(-0.5 * (np.sum(r * r) / scale + n * np.log(2.0 * np.pi * scale)))

    def check_support(self, values):
        if not np.all(np.isfinite(values)):
            idx = int(np.argmax(~np.isfinite(values).ravel()))
            raise DataError(f"gaussian values must be finite; offending entry at flat index {idx}")

    def working_weights(self, eta, scale=1.0):
        return np.full(np.shape(eta), 1.0 / scale)


_FAMILIES = (Binomial(), Poisson(), Gaussian())
_BY_NAME = {}
for _f in _FAMILIES:
    _BY_NAME[_f.name] = _f
    for _a in _f.aliases:
        _BY_NAME[_a] = _f

# integer codes shared with the compiled quadrature kernel
FAMILY_CODES = {"binomial": 0, "poisson": 1, "gaussian": 2}


def get_family(name) -> Family:
    """Look a family up by name ('binomial', 'poisson', 'gaussian' or
    the long forms 'binomial-logit', 'poisson-log', 'gaussian-identity')."""
    if isinstance(name, Family):
        return name
    key = str(name).strip().lower()
    if key not in _BY_NAME:
        raise ConfigError(
            f"unknown family {name!r}; expected one of binomial, poisson, gaussian"
        )
    return _BY_NAME[key]

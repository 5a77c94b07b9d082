"""One-term Ogden hyperelastic contact law for the tissue channel.

Each contact point acts as a nonlinear lateral spring. Unconfined
uniaxial compression is assumed: the principal stretch lambda2 is mapped
from the needle's lateral deflection at the contact, and incompressibility
gives lambda1 = lambda3 = lambda2**(-1/2).

Units: mu in Pa, lengths in mm. Energy densities are Pa (= J/m^3); the
line force returned by ``contact_force`` is the restoring force per unit
needle length in the internal Pa*mm force system.
"""

from __future__ import annotations

import numpy as np

# Stretch clamp used only inside the equilibrium solver so that Newton
# iterates that momentarily overshoot the valid range do not blow up.
_LAMBDA_FLOOR = 0.05


def energy_density(lam2, mu, alpha):
    """Ogden energy density W(lambda2) = (2 mu / alpha^2)(2 lam^(-a/2) + lam^a - 3)."""
    lam2 = np.asarray(lam2, dtype=float)
    return (2.0 * mu / alpha**2) * (2.0 * lam2 ** (-alpha / 2.0) + lam2**alpha - 3.0)


def energy_density_grad(lam2, mu, alpha):
    """dW/dlambda2. Negative for lambda2 < 1 (compression)."""
    lam2 = np.asarray(lam2, dtype=float)
    return (2.0 * mu / alpha) * (lam2 ** (alpha - 1.0) - lam2 ** (-alpha / 2.0 - 1.0))


def energy_density_hess(lam2, mu, alpha):
    """d2W/dlambda2^2. Positive around lambda2 = 1 (equals 3 mu there)."""
    lam2 = np.asarray(lam2, dtype=float)
    return (2.0 * mu / alpha) * (
        (alpha - 1.0) * lam2 ** (alpha - 2.0)
        + (alpha / 2.0 + 1.0) * lam2 ** (-alpha / 2.0 - 2.0)
    )


def stretch_from_deflection(deflection, t_char):
    """Principal stretch lambda2 = 1 - |deflection| / t_char.

    Raises ValueError when |deflection| >= t_char (stretch would hit zero).
    """
    deflection = np.asarray(deflection, dtype=float)
    if np.any(np.abs(deflection) >= t_char):
        raise ValueError(
            f"contact deflection magnitude >= characteristic thickness {t_char} mm"
        )
    return 1.0 - np.abs(deflection) / t_char


def contact_energy(deflection, mu, alpha, t_char, weight=1.0):
    """Weighted Ogden energy density at a contact, w * W(lambda2(d))."""
    lam2 = stretch_from_deflection(deflection, t_char)
    return weight * energy_density(lam2, mu, alpha)


def contact_force(deflection, mu, alpha, t_char, weight=1.0):
    """Restoring lateral line force at a contact.

    F(d) = w * sign(d) * dW/dlambda2 evaluated at lambda2(d), which equals
    -d/dd [t_char * w * W(lambda2(d))]: the exact negative gradient of the
    contact's energy per unit needle length. Zero at zero deflection, odd
    in the deflection, and always opposing it (dW/dlambda2 < 0 in
    compression).
    """
    deflection = np.asarray(deflection, dtype=float)
    lam2 = stretch_from_deflection(deflection, t_char)
    return weight * np.sign(deflection) * energy_density_grad(lam2, mu, alpha)


def contact_stiffness(deflection, mu, alpha, t_char, weight=1.0):
    """dF/dd of ``contact_force``; continuous, equals -3 mu w / t_char at d = 0."""
    deflection = np.asarray(deflection, dtype=float)
    lam2 = stretch_from_deflection(deflection, t_char)
    return -weight * energy_density_hess(lam2, mu, alpha) / t_char


def _force_and_stiffness_clamped(deflection, mu, alpha, t_char, weight):
    """Solver-internal variant: clamps lambda2 away from zero instead of raising."""
    deflection = np.asarray(deflection, dtype=float)
    lam2 = np.maximum(1.0 - np.abs(deflection) / t_char, _LAMBDA_FLOOR)
    force = weight * np.sign(deflection) * energy_density_grad(lam2, mu, alpha)
    stiff = -weight * energy_density_hess(lam2, mu, alpha) / t_char
    return force, stiff

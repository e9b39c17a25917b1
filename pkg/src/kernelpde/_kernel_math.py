"""Closed-form radial derivatives shared by both pairing backends."""
from __future__ import annotations

import math

import numpy as np

MAX_PSI_ORDER = 4


class UnsupportedOrderError(ValueError):
    """Requested derivative pairing exceeds the kernel's differentiability."""


def matern_poly_coeffs(p: int) -> np.ndarray:
    """Coefficients (ascending powers of rho) of the half-integer Matern polynomial.

    ``k(rho) = exp(-rho) * sum_m c_m rho**m`` with ``rho = sqrt(2 nu) r`` and
    ``k(0) = 1``.
    """
    return np.array(
        [
            math.factorial(p) / math.factorial(2 * p)
            * math.factorial(2 * p - m) / (math.factorial(p - m) * math.factorial(m))
            * 2.0**m
            for m in range(p + 1)
        ]
    )


# exp(rho) * rho**(2j-1) * E_j(rho), E_j = ((1/rho) d/drho)^j exp(-rho); j = 1..4
_E_NUMERATORS = {
    1: (-1.0,),
    2: (1.0, 1.0),
    3: (-3.0, -3.0, -1.0),
    4: (15.0, 15.0, 6.0, 1.0),
}


def psi_derivatives(family_code: int, param: float, t, order: int):
    t = np.asarray(t, dtype=float)
    if order > MAX_PSI_ORDER:
        raise UnsupportedOrderError(f"psi derivatives above order {MAX_PSI_ORDER} are not implemented")
    out = np.empty((order + 1,) + t.shape)
    if family_code == 0:
        e = np.exp(-0.5 * t)
        for k in range(order + 1):
            out[k] = (-0.5) ** k * e
        return out
    if family_code == 2:
        c = param
        base = 1.0 / (1.0 + c * t)
        for k in range(order + 1):
            out[k] = (-c) ** k * math.factorial(k) * base ** (k + 1)
        return out
    p = int(param)
    nu = p + 0.5
    rho = np.sqrt(2.0 * nu * t)
    e = np.exp(-rho)
    zero = rho == 0.0
    safe = np.where(zero, 1.0, rho)
    # psi^(k) for k <= p is (-nu)^k f_{p-k}(rho) / ((2p-1)(2p-3)...(2p-2k+1))
    denom = 1.0
    for k in range(order + 1):
        if k <= p:
            if k > 0:
                denom *= 2 * (p - k) + 1
            coeffs = matern_poly_coeffs(p - k)
            out[k] = (-nu) ** k / denom * np.polynomial.polynomial.polyval(rho, coeffs) * e
        else:
            # singular at rho = 0; every such term is multiplied by a polynomial
            # in the difference vector that vanishes faster, so the limit is 0
            j = k - p
            cp = (-nu) ** p / denom
            num = np.polynomial.polynomial.polyval(rho, _E_NUMERATORS[j])
            val = nu**j * cp * num * e / safe ** (2 * j - 1)
            out[k] = np.where(zero, 0.0, val)
    return out




def combine_pairs(psi, ca, cb, q):
    """Assemble pairings from radial derivatives and difference contractions.

    With ``u = 2 A (x_a - x_b)`` the keys of ``q`` are ``ga = u.g_a``,
    ``gb = u.g_b``, ``gg = g_a' A g_b``, ``ha = u' H_a u``, ``hb = u' H_b u``,
    ``Ta = tr(A H_a)``, ``Tb = tr(A H_b)``, ``hag = (A g_b)' H_a u``,
    ``hbg = (A g_a)' H_b u``, ``hh = (H_a u)' A (H_b u)`` and
    ``tt = tr(A H_a A H_b)``.  Derivatives on the second argument pick up a
    sign ``(-1)**order``.  Missing keys mean the corresponding part is zero.
    """
    ca = np.asarray(ca)[:, None]
    cb = np.asarray(cb)[None, :]
    out = ca * cb * psi[0]
    ga, gb = q.get("ga"), q.get("gb")
    ha, hb = q.get("ha"), q.get("hb")
    Ta = None if ha is None else q["Ta"][:, None]
    Tb = None if hb is None else q["Tb"][None, :]
    if ga is not None:
        out += cb * psi[1] * ga
    if gb is not None:
        out -= ca * psi[1] * gb
    if ha is not None:
        out += cb * (psi[2] * ha + 2.0 * psi[1] * Ta)
    if hb is not None:
        out += ca * (psi[2] * hb + 2.0 * psi[1] * Tb)
    if ga is not None and gb is not None:
        out -= psi[2] * ga * gb + 2.0 * psi[1] * q["gg"]
    if ha is not None and gb is not None:
        out -= psi[3] * gb * ha + psi[2] * (2.0 * Ta * gb + 4.0 * q["hag"])
    if hb is not None and ga is not None:
        out += psi[3] * ga * hb + psi[2] * (2.0 * Tb * ga + 4.0 * q["hbg"])
    if ha is not None and hb is not None:
        out += (
            psi[4] * ha * hb
            + psi[3] * (2.0 * Ta * hb + 2.0 * Tb * ha + 8.0 * q["hh"])
            + psi[2] * (4.0 * Ta * Tb + 8.0 * q["tt"])
        )
    return out

"""Independent reference computations used as test oracles.

These deliberately avoid the package's own assembly and eigen paths: the
second-order system is written out longhand and its characteristic quartic
det(M s^2 + C s + K) is expanded by hand and solved with ``np.roots``.
"""

import math

import numpy as np


def rayleigh_closed_form(xi, w_i, w_j):
    """Equal-ratio Rayleigh coefficients: a0 = 2 xi wi wj / (wi + wj), a1 = 2 xi / (wi + wj)."""
    return 2 * xi * w_i * w_j / (w_i + w_j), 2 * xi / (w_i + w_j)


def wind_off_closed_form(m, I, c, x_a, k_h, k_a):
    """Roots of det(K - w^2 M) = 0 by the quadratic formula."""
    s = m * c * x_a / 2
    qa = m * I - s * s
    qb = -(m * k_a + I * k_h)
    qc = k_h * k_a
    disc = math.sqrt(qb * qb - 4 * qa * qc)
    return math.sqrt((-qb - disc) / (2 * qa)), math.sqrt((-qb + disc) / (2 * qa))


def longhand_matrices(p, U):
    m, I, c, x_a, a = p.m, p.I_EA, p.c, p.x_alpha, p.a_h
    s = m * c * x_a / 2
    M = np.array([[m, s], [s, I]])
    Ks = np.array([[p.k_h, 0.0], [0.0, p.k_alpha]])
    w_i, w_j = wind_off_closed_form(m, I, c, x_a, p.k_h, p.k_alpha)
    # general (unequal xi) Rayleigh solve by Cramer's rule
    det = 0.25 * (w_j / w_i - w_i / w_j)
    a0 = 0.5 * (w_j * p.xi_1 - w_i * p.xi_2) / det
    a1 = 0.5 * (p.xi_2 / w_i - p.xi_1 / w_j) / det
    q = p.rho * U * U
    sp = p.span if p.apply_span_scaling else 1.0
    K = Ks + sp * np.array([[0.0, q * c * math.pi],
                            [0.0, -q * c * c * math.pi / 2 * (0.5 + a)]])
    Ca = np.array([
        [p.rho * U * c * math.pi, p.rho * U / 2 * c * c * math.pi * (0.5 - a)],
        [-p.rho * U / 2 * c * c * math.pi * (0.5 + a),
         -p.rho * U * c * math.pi * (c * c * (0.5 - a) * (0.5 + a) / 4 - c * c / 16)],
    ])
    C = a0 * M + a1 * Ks + sp * Ca
    return M, C, K


def characteristic_roots(p, U):
    """Roots of det(M s^2 + C s + K) via its explicit quartic coefficients."""
    M, C, K = longhand_matrices(p, U)
    P = [np.array([K[i, j], C[i, j], M[i, j]]) for i in range(2) for j in range(2)]
    mul = np.polynomial.polynomial.polymul
    coeffs = np.polynomial.polynomial.polysub(mul(P[0], P[3]), mul(P[1], P[2]))
    return np.roots(coeffs[::-1])


def modal_oracle(p, U):
    """(omega_1, beta_1, omega_2, beta_2) sorted by frequency."""
    r = characteristic_roots(p, U)
    up = sorted((z for z in r if z.imag > 0), key=lambda z: z.imag)
    assert len(up) == 2
    return np.array([up[0].imag, -up[0].real, up[1].imag, -up[1].real])


def flutter_speed_oracle(p, lo=10.0, hi=80.0):
    from scipy.optimize import brentq

    def g(U):
        w1, b1, w2, b2 = modal_oracle(p, U)
        return min(b1, b2)

    return brentq(g, lo, hi, xtol=1e-12, rtol=1e-14)


def margin_longhand(w1, b1, w2, b2):
    """Zimmerman-Weissenburger margin, written from the defining formula."""
    A = (w2**2 - w1**2) / 2 + (b2**2 - b1**2) / 2
    B = 4 * b1 * b2 * ((w1**2 + w2**2) / 2 + 2 * ((b1 + b2) / 2) ** 2)
    ratio = (b2 - b1) / (b2 + b1)
    Cc = ratio * (w2**2 - w1**2) / 2 + 2 * ((b1 + b2) / 2) ** 2
    return A**2 + B - Cc**2

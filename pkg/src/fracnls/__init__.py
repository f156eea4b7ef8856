"""Numerical experiments for the cubic fractional Schroedinger equation on the line.

    i u_t - |D|^alpha u = c |u|^2 u,   1/3 < alpha < 1.

Fourier convention: u_hat(xi) = int u(x) exp(-i xi x) dx, inverse with 1/(2 pi).
"""

__version__ = "0.1.0"

"""Independent reference computations shared by the test modules."""
import numpy as np


def quadrature_drift(a, c1, N_out, extra=64):
    """Brute-force int_0^1 c1 v v' e_k dx by Gauss-Legendre, independent of any transform."""
    N = len(a)
    x, w = np.polynomial.legendre.leggauss(max(4 * N + 8, 8 * max(N, N_out) + extra))
    x, w = (x + 1) / 2, w / 2
    n = np.arange(1, N + 1)
    v = np.sqrt(2) * np.sin(np.pi * np.outer(x, n)) @ a
    dv = np.sqrt(2) * np.pi * np.cos(np.pi * np.outer(x, n)) @ (n * a)
    k = np.arange(1, N_out + 1)
    ek = np.sqrt(2) * np.sin(np.pi * np.outer(x, k))
    return c1 * (w * v * dv) @ ek

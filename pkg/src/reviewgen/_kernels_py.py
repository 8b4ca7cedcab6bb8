"""Pure-Python/numpy versions of the hot kernels.

Signatures mirror ``_kernels.pyx`` exactly; ``reviewgen.kernels`` picks one.
"""
import numpy as np


def lcs_length(a, b):
    """Length of the longest common subsequence of two int sequences."""
    n, m = len(a), len(b)
    if n == 0 or m == 0:
        return 0
    prev = [0] * (m + 1)
    for i in range(n):
        cur = [0] * (m + 1)
        ai = a[i]
        for j in range(m):
            if ai == b[j]:
                cur[j + 1] = prev[j] + 1
            else:
                cur[j + 1] = cur[j] if cur[j] > prev[j + 1] else prev[j + 1]
        prev = cur
    return prev[m]


def gru_combine_forward(z, h, pre_h, mask):
    """hc = tanh(pre_h); h' = h + m * z * (hc - h)."""
    hc = np.tanh(pre_h)
    h_out = h + mask[:, None] * (z * (hc - h))
    return hc, h_out


def gru_combine_backward(g, mask, z, h, hc):
    """Returns (d_pre_z, d_pre_h, dh) for the combine step."""
    gm = g * mask[:, None]
    d_pre_z = gm * (hc - h) * z * (1.0 - z)
    d_pre_h = gm * z * (1.0 - hc * hc)
    dh = g - gm * z
    return d_pre_z, d_pre_h, dh


def gru_reset_backward(d_rh, h, r):
    """Returns (d_pre_r, dh) through rh = r * h."""
    return d_rh * h * r * (1.0 - r), d_rh * r

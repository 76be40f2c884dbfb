"""Pure-numpy implementations of the hot kernels.

These mirror ``_kernels.pyx`` function by function and are used whenever the
compiled extension is unavailable (or when ``SPDE_HMM_PURE_PYTHON=1``).
"""

import numpy as np

PHILOX_M0 = np.uint64(0xD2E7470EE14C6C93)
PHILOX_M1 = np.uint64(0xCA5A826395121157)
PHILOX_W0 = np.uint64(0x9E3779B97F4A7C15)
PHILOX_W1 = np.uint64(0xBB67AE8584CAA73B)
KEY_SALT = 0x5350444548_4D4D  # second key word, fixed

_MASK32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_S11 = np.uint64(11)
_TWO_M53 = 2.0 ** -53
_TWO_PI = 2.0 * np.pi


def _mulhilo(a, b):
    """64x64 -> 128 bit product of uint64 arrays, returned as (hi, lo)."""
    a_lo = a & _MASK32
    a_hi = a >> _S32
    b_lo = b & _MASK32
    b_hi = b >> _S32
    ll = a_lo * b_lo
    lh = a_lo * b_hi
    hl = a_hi * b_lo
    hh = a_hi * b_hi
    mid = (ll >> _S32) + (lh & _MASK32) + (hl & _MASK32)
    hi = hh + (lh >> _S32) + (hl >> _S32) + (mid >> _S32)
    lo = a * b
    return hi, lo


def philox4x64(counters, key0, key1=KEY_SALT):
    """Philox4x64-10 block function.

    counters: uint64 array of shape (..., 4). Returns an array of the same shape.
    """
    c = np.asarray(counters, dtype=np.uint64)
    c0, c1, c2, c3 = (c[..., i].copy() for i in range(4))
    k0 = np.uint64(key0)
    k1 = np.uint64(key1)
    with np.errstate(over="ignore"):
        for r in range(10):
            if r:
                k0 = k0 + PHILOX_W0
                k1 = k1 + PHILOX_W1
            hi0, lo0 = _mulhilo(PHILOX_M0, c0)
            hi1, lo1 = _mulhilo(PHILOX_M1, c2)
            c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return np.stack([c0, c1, c2, c3], axis=-1)


def _box_muller(bits):
    # bits (..., 4) -> 4 standard normals
    u = ((bits >> _S11).astype(np.float64) + 0.5) * _TWO_M53
    out = np.empty(bits.shape, dtype=np.float64)
    for a, b in ((0, 1), (2, 3)):
        r = np.sqrt(-2.0 * np.log(u[..., a]))
        ang = _TWO_PI * u[..., b]
        out[..., a] = r * np.cos(ang)
        out[..., b] = r * np.sin(ang)
    return out


def gaussians(seed, replicas, role, step0, n_steps, n_modes):
    """Standard normals of shape (len(replicas), n_steps, n_modes).

    Entry [k, s, n] depends only on (seed, replicas[k], role, step0 + s, n).
    """
    rep = np.asarray(replicas, dtype=np.uint64)
    n_blocks = (n_modes + 3) // 4
    ctr = np.empty((rep.size, n_steps, n_blocks, 4), dtype=np.uint64)
    ctr[..., 0] = np.arange(n_blocks, dtype=np.uint64)
    ctr[..., 1] = (np.uint64(step0) + np.arange(n_steps, dtype=np.uint64))[None, :, None]
    ctr[..., 2] = rep[:, None, None]
    ctr[..., 3] = np.uint64(role)
    z = _box_muller(philox4x64(ctr, seed))
    return z.reshape(rep.size, n_steps, 4 * n_blocks)[..., :n_modes]


def micro_chain(y0, decay, scale, seed, replicas, role, step0, n_steps, n_window):
    """Run y <- decay * y + scale * Z for n_steps steps on every replica.

    Returns (y_final, window) where window holds the last n_window states,
    shape (K, n_window, N). Step s uses the normals of counter step0 + s.
    """
    y = np.array(y0, dtype=np.float64, copy=True)
    k, n = y.shape
    window = np.empty((k, n_window, n), dtype=np.float64)
    noise = gaussians(seed, replicas, role, step0, n_steps, n) * scale
    first = n_steps - n_window
    for s in range(n_steps):
        y *= decay
        y += noise[:, s, :]
        if s >= first:
            window[:, s - first, :] = y
    return y, window

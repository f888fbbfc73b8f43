"""Vectorized numpy implementation of the trial kernel.

Bit-for-bit equivalent to the compiled ``_kernel`` extension; used when the
extension is not built.  All uint64 arithmetic wraps modulo 2**64.
"""

import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK = (1 << 64) - 1
_INV53 = 2.0**-53

N_DRAWS = 6
HERALD, QRNG, SIGNAL, SIGNAL_TIME, DARK, DARK_TIME = range(N_DRAWS)
NONE, SIGNAL_KIND, DARK_KIND = 0, 1, 2


def mix64(z):
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def stream_key(master_seed: int) -> int:
    return int(mix64(np.uint64((master_seed + int(GOLDEN)) & _MASK)))


def trial_uniforms(key: int, indices, draws=range(N_DRAWS)):
    """Uniforms in [0, 1) for each trial index, one row per draw slot."""
    idx = np.asarray(indices, dtype=np.uint64)
    with np.errstate(over="ignore"):
        state = mix64(np.uint64(key) + (idx + np.uint64(1)) * GOLDEN)
        rows = []
        for k in draws:
            x = mix64(state + np.uint64(k + 1) * GOLDEN)
            rows.append((x >> np.uint64(11)).astype(np.float64) * _INV53)
    return np.stack(rows)


def _lookup(table, u):
    m = table.shape[0]
    pos = u * (m - 1)
    j = np.minimum(pos.astype(np.int64), m - 2)
    frac = pos - j
    lo = table[j]
    return lo + frac * (table[j + 1] - lo)


def simulate_block(key, start, n, herald_p, xi, p_in, p_out, dark_p, gate, q_in, q_out):
    """Simulate trials ``start .. start+n-1``.

    Returns ``(herald, qrng_in, kind, time)`` arrays; ``kind`` is 0 for no
    detection, 1 for a signal click and 2 for a dark count; ``time`` is NaN
    when there is no detection.
    """
    q_in = np.ascontiguousarray(q_in, dtype=np.float64)
    q_out = np.ascontiguousarray(q_out, dtype=np.float64)
    u = trial_uniforms(key, np.arange(start, start + n, dtype=np.uint64))
    herald = u[HERALD] < herald_p
    qrng_in = u[QRNG] < xi
    p_sig = np.where(qrng_in, p_in, p_out)
    sig = herald & (u[SIGNAL] < p_sig)
    t_sig = np.where(qrng_in, _lookup(q_in, u[SIGNAL_TIME]), _lookup(q_out, u[SIGNAL_TIME]))
    dark = u[DARK] < dark_p
    t_dark = u[DARK_TIME] * gate

    sig_wins = sig & (~dark | (t_sig <= t_dark))
    dark_wins = dark & ~sig_wins
    kind = np.zeros(n, dtype=np.int8)
    kind[sig_wins] = SIGNAL_KIND
    kind[dark_wins] = DARK_KIND
    time = np.full(n, np.nan)
    time[sig_wins] = t_sig[sig_wins]
    time[dark_wins] = t_dark[dark_wins]
    return herald.astype(np.uint8), qrng_in.astype(np.uint8), kind, time

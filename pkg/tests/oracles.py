"""Independent reference computations used as test oracles."""

import numpy as np


def enumerate_sizes(law, num_events):
    """Exact joint pmf of (#C_1, ..., #C_N) by listing every inclusion pattern.

    Returns ``(sizes, probs)``: sizes has shape (2^(L N), N).
    """
    L, N = law.L, num_events
    codes = np.arange(2 ** (L * N), dtype=np.int64)
    bits = ((codes[:, None] >> np.arange(L * N)) & 1).reshape(-1, N, L).astype(bool)
    probs = np.ones(codes.size)
    m = np.zeros((codes.size, L), dtype=int)
    for n in range(1, N + 1):
        F = np.append(law.prob(n, np.arange(n)), 0.0)[m]
        x = bits[:, n - 1, :]
        probs *= np.where(x, F, 1.0 - F).prod(axis=1)
        m += x
    return bits.sum(axis=2), probs


def brute_force_pair(law, n1, n2):
    """Joint pmf of (#C_n1, #C_n2) from :func:`enumerate_sizes`."""
    sizes, probs = enumerate_sizes(law, n2)
    out = np.zeros((law.L + 1, law.L + 1))
    np.add.at(out, (sizes[:, n1 - 1], sizes[:, n2 - 1]), probs)
    return out


def random_table(rng, n_max):
    """F_n(k) uniform on [0, 1] for n <= n_max, k < n (rows n, columns k)."""
    return rng.uniform(0, 1, size=(n_max, n_max))

"""Seeded small networks and batches shared by the loss tests and the acceptance suite."""

import numpy as np

from rcgan import nn
from rcgan.losses import Batch

K = 4


def small_nets(seed: int, variant: str = "relaxed", hidden: int = 8) -> dict:
    rng = np.random.default_rng(seed)
    g_in = 2 if variant == "relaxed" else 2 + K
    return {
        "g_st": nn.init_mlp([g_in, hidden, hidden, 2], ["relu", "relu", "identity"], rng),
        "g_ts": nn.init_mlp([g_in, hidden, hidden, 2], ["relu", "relu", "identity"], rng),
        "d_t": nn.init_mlp([2 + K + 1, hidden, hidden, 1], ["relu", "relu", "sigmoid"], rng, spectral=True),
        "d_s": nn.init_mlp([2, hidden, hidden, 1], ["relu", "relu", "sigmoid"], rng, spectral=True),
        "c": nn.init_mlp([2, hidden, hidden, K], ["relu", "relu", "softmax"], rng),
    }


def small_batch(seed: int, ns: int = 6, nt: int = 3, nu: int = 5) -> Batch:
    rng = np.random.default_rng(seed + 1000)
    return Batch(K, rng.standard_normal((ns, 2)) * 2, rng.integers(0, K, ns), rng.standard_normal((nt, 2)) * 2,
                 rng.integers(0, K, nt), rng.standard_normal((nu, 2)) * 2)

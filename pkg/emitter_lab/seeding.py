"""Seed splitting.

Every stochastic step draws from a generator derived from the experiment seed and
a tuple key naming the step, so results never depend on execution order or on
how work is spread over workers:

    rng = derive_rng(seed, STAGE, emitter_id, preamble_index, ...)

Keys used across the lab (first element is the stage tag):

    (IMPAIRMENT, emitter_id, preamble_index)          phase-noise walk
    (NOISE, emitter_id, snr_index, realization)       AWGN block for one cell
    (SPLIT, emitter_id)                               train/test permutation
    (EPOCH, epoch)                                    minibatch shuffling
    (AUGMENT, epoch, step)                            online augmentation
    (INIT, layer_index)                               parameter initialization
    (HOLDOUT,)                                        classifier validation holdout
    (LABEL, width)                                    label-channel head initialization
"""
import numpy as np

IMPAIRMENT = 0
NOISE = 1
SPLIT = 2
EPOCH = 3
AUGMENT = 4
INIT = 5
HOLDOUT = 6
LABEL = 7


def derive_seed(seed, *key):
    """Return a 64-bit integer seed for ``key`` under ``seed``."""
    sequence = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def derive_rng(seed, *key):
    """Return an independent ``numpy.random.Generator`` for ``key`` under ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key)))

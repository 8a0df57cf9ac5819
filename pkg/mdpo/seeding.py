"""
Named seed derivation.

Every random stream in a run is derived from the single experiment seed and a
(component, index...) path, so results do not depend on worker scheduling.
"""
import zlib

import numpy as np


def _component_key(component):
    return zlib.crc32(component.encode('utf-8'))


def seed_sequence(root, component, *index):
    key = (_component_key(component),) + tuple(int(i) for i in index)
    return np.random.SeedSequence(entropy=int(root), spawn_key=key)


def derive_seed(root, component, *index):
    return int(seed_sequence(root, component, *index).generate_state(1, dtype=np.uint32)[0])


def derive_rng(root, component, *index):
    return np.random.default_rng(seed_sequence(root, component, *index))

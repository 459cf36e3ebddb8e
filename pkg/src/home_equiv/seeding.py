"""Deterministic RNG streams derived from a master seed.

Child streams are keyed by (seed, namespace, index) through numpy's
SeedSequence, so parallel generation and component initialization are
order-independent and reproducible.
"""

import numpy as np

NS_SAMPLE = 0
NS_VIEW = 1
NS_ENCODER = 2
NS_VN = 3
NS_DECODER = 4
NS_SHUFFLE = 5


def child_rng(seed: int, namespace: int, index: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(
        np.random.SeedSequence([int(seed), int(namespace), int(index)])))


def rng_state_to_array(rng: np.random.Generator) -> np.ndarray:
    """Serialize PCG64 state as 10 exact float64 values (32-bit limbs)."""
    st = rng.bit_generator.state
    limbs = []
    for key in ("state", "inc"):
        v = int(st["state"][key])
        for _ in range(4):
            limbs.append(float(v & 0xFFFFFFFF))
            v >>= 32
    limbs.append(float(st["has_uint32"]))
    limbs.append(float(st["uinteger"]))
    return np.array(limbs, dtype=np.float64)


def rng_state_from_array(arr) -> np.random.Generator:
    limbs = [int(round(x)) for x in np.asarray(arr, dtype=np.float64)]
    if len(limbs) != 10:
        raise ValueError(f"expected 10 limbs, got {len(limbs)}")
    def join(parts):
        v = 0
        for i, p in enumerate(parts):
            v |= p << (32 * i)
        return v
    gen = np.random.Generator(np.random.PCG64())
    gen.bit_generator.state = {
        "bit_generator": "PCG64",
        "state": {"state": join(limbs[0:4]), "inc": join(limbs[4:8])},
        "has_uint32": limbs[8],
        "uinteger": limbs[9],
    }
    return gen

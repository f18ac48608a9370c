"""Reference implementation of the builtin hashing embedder for one token.

Prints the token vector as comma-separated floats so the C++ tests can pin
golden coordinates:  python3 ref_embed.py aspirin 16 0
"""
import struct
import sys

import numpy as np

MASK = (1 << 64) - 1


def fnv1a(data: bytes, h: int = 0xCBF29CE484222325) -> int:
    for b in data:
        h = ((h ^ b) * 0x100000001B3) & MASK
    return h


def mix(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    return z ^ (z >> 31)


def feature_hash(feature: str, seed: int, salt: int) -> int:
    h = fnv1a(struct.pack("<Q", salt))
    h = fnv1a(struct.pack("<Q", seed), h)
    return mix(fnv1a(feature.encode("utf-8"), h))


def token_vector(token: str, dim: int, seed: int) -> np.ndarray:
    low = token.lower()
    feats = ["T:" + low]
    padded = "<" + low + ">"
    for n in (3, 4, 5):
        feats += ["G:" + padded[i:i + n] for i in range(len(padded) - n + 1)]
    v = np.zeros(dim)
    for f in feats:
        sign = -1.0 if feature_hash(f, seed, 0x5349474E) >> 63 else 1.0
        v[feature_hash(f, seed, 0x494E444558) % dim] += sign
    n = np.linalg.norm(v)
    if n == 0:
        v[feature_hash(feats[0], seed, 0x494E444558) % dim] = 1.0
        n = 1.0
    return (v / n).astype(np.float32)


if __name__ == "__main__":
    tok, dim, seed = sys.argv[1], int(sys.argv[2]), int(sys.argv[3])
    print(", ".join(repr(float(x)) for x in token_vector(tok, dim, seed)))

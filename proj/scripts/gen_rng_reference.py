#!/usr/bin/env python3
"""Reference vectors for the RNG unit tests.

Implements splitmix64 and xoshiro256++ directly from the published
algorithms and prints the sequences frozen into tests/test_rng.cpp.
"""

M = (1 << 64) - 1


def splitmix64(state):
    state = (state + 0x9E3779B97F4A7C15) & M
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & M
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & M
    return state, z ^ (z >> 31)


def rotl(x, k):
    return ((x << k) | (x >> (64 - k))) & M


class Xoshiro256pp:
    def __init__(self, seed):
        s = seed
        self.s = []
        for _ in range(4):
            s, z = splitmix64(s)
            self.s.append(z)
        if all(v == 0 for v in self.s):
            self.s[0] = 1

    def next(self):
        s0, s1, s2, s3 = self.s
        result = (rotl((s0 + s3) & M, 23) + s0) & M
        t = (s1 << 17) & M
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = rotl(s3, 45)
        self.s = [s0, s1, s2, s3]
        return result


def mix_one(v):
    _, z = splitmix64(v)
    return z


def main():
    s = 0
    outs = []
    for _ in range(4):
        s, z = splitmix64(s)
        outs.append(z)
    print("splitmix64 seed 0:", [hex(v) for v in outs])

    s = 0xDEADBEEFCAFE
    outs = []
    for _ in range(3):
        s, z = splitmix64(s)
        outs.append(z)
    print("splitmix64 seed 0xDEADBEEFCAFE:", [hex(v) for v in outs])

    x = Xoshiro256pp(42)
    print("xoshiro256++ seed 42:", [hex(x.next()) for _ in range(5)])

    master, stream = 1234, 7
    x = Xoshiro256pp(mix_one(master) ^ mix_one((stream + 0x9E3779B97F4A7C15) & M))
    print("stream(1234, 7):", [hex(x.next()) for _ in range(3)])


if __name__ == "__main__":
    main()

#!/usr/bin/env python3
"""Independent recomputation of the seeded random high-pass kernel.

Pure-Python mt19937_64, 53-bit uniforms and Box-Muller normals (cosine
first, sine kept as a spare), then the zero-mean projection.

    random_high_pass.py [--seed 42] [--rows 3] [--cols 3]   print the transcript
    random_high_pass.py --check FILE                        compare against FILE
"""
import argparse
import math
import sys

MASK = (1 << 64) - 1


class MT19937_64:
    N, M = 312, 156

    def __init__(self, seed):
        self.mt = [seed & MASK]
        for i in range(1, self.N):
            prev = self.mt[-1]
            self.mt.append((6364136223846793005 * (prev ^ (prev >> 62)) + i) & MASK)
        self.index = self.N

    def _twist(self):
        upper, lower = 0xFFFFFFFF80000000, 0x7FFFFFFF
        for i in range(self.N):
            x = (self.mt[i] & upper) | (self.mt[(i + 1) % self.N] & lower)
            xa = x >> 1
            if x & 1:
                xa ^= 0xB5026F5AA96619E9
            self.mt[i] = self.mt[(i + self.M) % self.N] ^ xa
        self.index = 0

    def next(self):
        if self.index >= self.N:
            self._twist()
        x = self.mt[self.index]
        self.index += 1
        x ^= (x >> 29) & 0x5555555555555555
        x ^= (x << 17) & 0x71D67FFFEDA60000
        x ^= (x << 37) & 0xFFF7EEE000000000
        x ^= x >> 43
        return x & MASK


def normals(seed, count):
    gen = MT19937_64(seed)
    uniform = lambda: (gen.next() >> 11) * 2.0**-53
    out = []
    while len(out) < count:
        u1 = 1.0 - uniform()
        u2 = uniform()
        r = math.sqrt(-2.0 * math.log(u1))
        theta = 2.0 * math.pi * u2
        out.append(r * math.cos(theta))
        out.append(r * math.sin(theta))
    return out[:count]


def transcript(seed, rows, cols):
    a = normals(seed, rows * cols)
    mean = sum(a) / len(a)
    return [v - mean for v in a]


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--rows", type=int, default=3)
    p.add_argument("--cols", type=int, default=3)
    p.add_argument("--check", metavar="FILE")
    args = p.parse_args()

    if args.check:
        header, values = None, []
        with open(args.check) as f:
            for line in f:
                if line.startswith("#"):
                    header = line.split()
                    continue
                values += [float(t) for t in line.split()]
        seed, rows, cols = (int(header[i]) for i in (2, 4, 6))
        expected = transcript(seed, rows, cols)
        worst = max(abs(x - y) for x, y in zip(values, expected))
        if len(values) != len(expected) or worst > 1e-15:
            print(f"mismatch: max |diff| {worst}", file=sys.stderr)
            return 1
        print(f"transcript ok ({len(values)} values, max |diff| {worst})")
        return 0

    values = transcript(args.seed, args.rows, args.cols)
    print(f"# seed {args.seed} rows {args.rows} cols {args.cols}")
    for r in range(args.rows):
        print(" ".join(repr(v) for v in values[r * args.cols:(r + 1) * args.cols]))
    return 0


if __name__ == "__main__":
    sys.exit(main())

/**
 * Deterministic 64-bit PRNG (splitmix64) with uniform doubles in [0, 1).
 *
 * Sampling must be byte-reproducible across runs and platforms, so the
 * generator is fixed here rather than delegated to Math.random.
 */

const MASK64 = (1n << 64n) - 1n;

export class Rng {
  private state: bigint;

  constructor(seed: bigint | number) {
    this.state = BigInt(seed) & MASK64;
  }

  /** Next raw 64-bit value. */
  nextU64(): bigint {
    this.state = (this.state + 0x9e3779b97f4a7c15n) & MASK64;
    let z = this.state;
    z = ((z ^ (z >> 30n)) * 0xbf58476d1ce4e5b9n) & MASK64;
    z = ((z ^ (z >> 27n)) * 0x94d049bb133111ebn) & MASK64;
    return z ^ (z >> 31n);
  }

  /** Uniform double in [0, 1) with 53 random bits. */
  uniform(): number {
    return Number(this.nextU64() >> 11n) / 2 ** 53;
  }
}

/** Per-mesh sub-seed: dataset seed XOR running mesh index. */
export function meshSeed(datasetSeed: bigint | number, index: number): bigint {
  return (BigInt(datasetSeed) ^ BigInt(index)) & MASK64;
}

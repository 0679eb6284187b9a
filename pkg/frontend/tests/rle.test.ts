// Cross-component contract: the client decoder must agree bit-for-bit with
// the backend encoder on the shared vector file.

import { readFileSync } from 'node:fs';
import { join } from 'node:path';
import { describe, expect, it } from 'vitest';

import { decodeRle, MalformedRle, maskArea, type RleMask } from '../src/rle.js';

interface Vector {
  size: [number, number];
  counts: number[];
  bits: string; // row-major 0/1 string
}

const VECTORS: Vector[] = JSON.parse(
  readFileSync(join(__dirname, '..', '..', 'tests', 'fixtures', 'rle_vectors.json'), 'utf-8'),
);

describe('decodeRle', () => {
  it('matches the backend on all shared vectors', () => {
    expect(VECTORS.length).toBe(200);
    for (const vector of VECTORS) {
      const bits = decodeRle({ size: vector.size, counts: vector.counts });
      expect(Array.from(bits).join('')).toBe(vector.bits);
    }
  });

  it('decodes the single-pixel example column-major', () => {
    // 2x2 with only (row 0, col 0) set
    const bits = decodeRle({ size: [2, 2], counts: [0, 1, 3] });
    expect(Array.from(bits)).toEqual([1, 0, 0, 0]);
  });

  it('decodes all-ones and all-zeros', () => {
    expect(maskArea(decodeRle({ size: [2, 2], counts: [0, 4] }))).toBe(4);
    expect(maskArea(decodeRle({ size: [2, 2], counts: [4] }))).toBe(0);
  });

  it('rejects counts that do not sum to the size', () => {
    expect(() => decodeRle({ size: [2, 2], counts: [0, 1, 4] })).toThrow(MalformedRle);
  });

  it('rejects interior zero runs and negative runs', () => {
    expect(() => decodeRle({ size: [2, 2], counts: [1, 0, 3] })).toThrow(MalformedRle);
    expect(() => decodeRle({ size: [2, 2], counts: [-1, 5] })).toThrow(MalformedRle);
  });

  it('rejects bad sizes', () => {
    expect(() => decodeRle({ size: [0, 2], counts: [0] } as unknown as RleMask)).toThrow(
      MalformedRle,
    );
  });
});

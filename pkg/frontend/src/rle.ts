// COCO-style uncompressed RLE: column-major scan, alternating zero/one runs,
// first count is leading zeros. Decoded client-side so the API ships a few
// integers instead of rendered overlays.

export interface RleMask {
  size: [number, number]; // [height, width]
  counts: number[];
}

export class MalformedRle extends Error {}

/**
 * Decode an RLE object into a row-major Uint8Array (1 = masked pixel).
 * Must agree bit-for-bit with the backend encoder; the shared vector file
 * in tests/fixtures pins that contract.
 */
export function decodeRle(rle: RleMask): Uint8Array {
  const [height, width] = rle.size;
  if (!Number.isInteger(height) || !Number.isInteger(width) || height < 1 || width < 1) {
    throw new MalformedRle(`bad size ${JSON.stringify(rle.size)}`);
  }
  const total = height * width;
  let sum = 0;
  for (let i = 0; i < rle.counts.length; i++) {
    const c = rle.counts[i];
    if (!Number.isInteger(c) || c < 0) {
      throw new MalformedRle(`bad run length ${c}`);
    }
    if (c === 0 && i > 0) {
      throw new MalformedRle(`zero-length run at position ${i}`);
    }
    sum += c;
  }
  if (sum !== total) {
    throw new MalformedRle(`counts sum ${sum} != ${height}x${width} = ${total}`);
  }
  const bits = new Uint8Array(total); // row-major output
  let flat = 0; // position in column-major order
  let value = 0;
  for (const count of rle.counts) {
    if (value === 1) {
      for (let k = 0; k < count; k++) {
        const pos = flat + k;
        const col = Math.floor(pos / height);
        const row = pos % height;
        bits[row * width + col] = 1;
      }
    }
    flat += count;
    value = 1 - value;
  }
  return bits;
}

export function maskArea(bits: Uint8Array): number {
  let area = 0;
  for (let i = 0; i < bits.length; i++) area += bits[i];
  return area;
}

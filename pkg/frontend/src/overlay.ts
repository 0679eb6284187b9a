// Overlay pixel construction, kept free of canvas so it is testable in jsdom.

export interface OverlayColor {
  r: number;
  g: number;
  b: number;
}

export const DEFAULT_COLOR: OverlayColor = { r: 66, g: 133, b: 244 };

/**
 * RGBA buffer for a mask overlay: masked pixels get the tint at the given
 * opacity, everything else stays fully transparent.
 */
export function buildOverlayRgba(
  bits: Uint8Array,
  height: number,
  width: number,
  opacity: number,
  color: OverlayColor = DEFAULT_COLOR,
): Uint8ClampedArray {
  if (bits.length !== height * width) {
    throw new Error(`bits length ${bits.length} != ${height}x${width}`);
  }
  const alpha = Math.round(Math.min(Math.max(opacity, 0), 1) * 255);
  const rgba = new Uint8ClampedArray(height * width * 4);
  for (let i = 0; i < bits.length; i++) {
    if (bits[i]) {
      const o = i * 4;
      rgba[o] = color.r;
      rgba[o + 1] = color.g;
      rgba[o + 2] = color.b;
      rgba[o + 3] = alpha;
    }
  }
  return rgba;
}

/** Count of tinted (non-transparent) pixels in an RGBA buffer. */
export function tintedPixels(rgba: Uint8ClampedArray): number {
  let count = 0;
  for (let i = 3; i < rgba.length; i += 4) {
    if (rgba[i] > 0) count++;
  }
  return count;
}

/** Frame payload decoding: base64 of little-endian float32, H*W*C. */

export function decodeFrame(b64: string, expectLen?: number): Float32Array {
  const bin = typeof atob === "function" ? atob(b64) : bufferDecode(b64);
  const bytes = new Uint8Array(bin.length);
  for (let i = 0; i < bin.length; i++) bytes[i] = bin.charCodeAt(i);
  if (bytes.length % 4 !== 0) {
    throw new Error(`frame payload length ${bytes.length} is not a multiple of 4`);
  }
  const out = new Float32Array(bytes.buffer);
  if (expectLen !== undefined && out.length !== expectLen) {
    throw new Error(`expected ${expectLen} pixels, got ${out.length}`);
  }
  return out;
}

function bufferDecode(b64: string): string {
  // Node fallback for tests; browsers always have atob
  const buffer = (globalThis as Record<string, any>)["Buffer"];
  return buffer.from(b64, "base64").toString("binary");
}

/** Grayscale [0,1] floats -> RGBA bytes for a canvas ImageData buffer. */
export function frameToRgba(
  pixels: Float32Array,
  h: number,
  w: number,
  c: number,
): Uint8ClampedArray<ArrayBuffer> {
  const rgba = new Uint8ClampedArray(new ArrayBuffer(h * w * 4));
  for (let i = 0; i < h * w; i++) {
    const v = Math.round(Math.max(0, Math.min(1, pixels[i * c])) * 255);
    rgba[i * 4] = v;
    rgba[i * 4 + 1] = v;
    rgba[i * 4 + 2] = v;
    rgba[i * 4 + 3] = 255;
  }
  return rgba;
}

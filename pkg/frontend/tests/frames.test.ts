import { describe, expect, it } from "vitest";

import { decodeFrame, frameToRgba } from "../src/frames.js";

function encode(values: number[]): string {
  const f = new Float32Array(values);
  return Buffer.from(f.buffer).toString("base64");
}

describe("decodeFrame", () => {
  it("round-trips little-endian float32", () => {
    const values = [0, 0.25, 0.5, 1, 0.125, 0.875];
    const out = decodeFrame(encode(values), 6);
    expect(Array.from(out)).toEqual(values);
  });

  it("rejects truncated payloads", () => {
    const b64 = Buffer.from(new Uint8Array(7)).toString("base64");
    expect(() => decodeFrame(b64)).toThrow(/multiple of 4/);
  });

  it("rejects wrong pixel counts", () => {
    expect(() => decodeFrame(encode([1, 2]), 4)).toThrow(/expected 4/);
  });
});

describe("frameToRgba", () => {
  it("maps [0,1] grayscale to opaque RGBA", () => {
    const rgba = frameToRgba(new Float32Array([0, 0.5, 1, 0.25]), 2, 2, 1);
    expect(rgba.length).toBe(16);
    expect([rgba[0], rgba[1], rgba[2], rgba[3]]).toEqual([0, 0, 0, 255]);
    expect(rgba[4]).toBe(128);
    expect(rgba[8]).toBe(255);
    expect(rgba[15]).toBe(255);
  });

  it("clamps out-of-range values", () => {
    const rgba = frameToRgba(new Float32Array([-0.5, 1.5]), 1, 2, 1);
    expect(rgba[0]).toBe(0);
    expect(rgba[4]).toBe(255);
  });

  it("reads channel 0 of multi-channel frames", () => {
    const rgba = frameToRgba(new Float32Array([1, 0, 0, 1]), 1, 2, 2);
    expect(rgba[0]).toBe(255);
    expect(rgba[4]).toBe(0);
  });
});

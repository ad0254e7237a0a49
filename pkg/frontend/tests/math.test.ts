import { describe, expect, it } from "vitest";

import {
  canonicalize,
  eulerToQuat,
  Quat,
  quatDistance,
  quatToEuler,
} from "../src/math.js";

function randomAngles(seed: number): number[] {
  // deterministic pseudo-random angles in (-pi/2, pi/2)
  const out: number[] = [];
  let x = seed;
  for (let i = 0; i < 3; i++) {
    x = (x * 1103515245 + 12345) % 2147483648;
    out.push(((x / 2147483648) * 2 - 1) * (Math.PI / 2 - 0.05));
  }
  return out;
}

describe("euler <-> quaternion", () => {
  it("produces canonical unit quaternions", () => {
    for (let s = 1; s <= 50; s++) {
      const [roll, pitch, yaw] = randomAngles(s);
      const q = eulerToQuat({ roll, pitch, yaw });
      const norm = Math.hypot(...q);
      expect(norm).toBeCloseTo(1, 10);
      expect(q[0]).toBeGreaterThanOrEqual(0);
    }
  });

  it("round-trips within 1e-4 rad", () => {
    for (let s = 1; s <= 200; s++) {
      const [roll, pitch, yaw] = randomAngles(s);
      const q = eulerToQuat({ roll, pitch, yaw });
      const back = quatToEuler(q);
      const again = eulerToQuat(back);
      expect(quatDistance(q, again)).toBeLessThan(1e-4);
      expect(back.roll).toBeCloseTo(roll, 6);
      expect(back.pitch).toBeCloseTo(pitch, 6);
      expect(back.yaw).toBeCloseTo(yaw, 6);
    }
  });

  it("matches known single-axis cases", () => {
    const q = eulerToQuat({ roll: Math.PI / 2, pitch: 0, yaw: 0 });
    expect(q[0]).toBeCloseTo(Math.SQRT1_2, 10);
    expect(q[1]).toBeCloseTo(Math.SQRT1_2, 10);
    expect(q[2]).toBeCloseTo(0, 10);
    expect(q[3]).toBeCloseTo(0, 10);
    expect(eulerToQuat({ roll: 0, pitch: 0, yaw: 0 })).toEqual([1, 0, 0, 0]);
  });
});

describe("quaternion distance", () => {
  it("collapses the double cover", () => {
    const q: Quat = eulerToQuat({ roll: 0.4, pitch: -0.2, yaw: 0.1 });
    const neg: Quat = [-q[0], -q[1], -q[2], -q[3]];
    expect(quatDistance(q, neg)).toBeCloseTo(0, 7);
  });

  it("gives pi/2 for a quarter turn", () => {
    const q = eulerToQuat({ roll: Math.PI / 2, pitch: 0, yaw: 0 });
    expect(quatDistance([1, 0, 0, 0], q)).toBeCloseTo(Math.PI / 2, 10);
  });
});

describe("canonicalize", () => {
  it("flips the sign so w >= 0 and normalizes", () => {
    const c = canonicalize([-2, 0, 0, 0]);
    expect(c).toEqual([1, -0, -0, -0]);
  });
});

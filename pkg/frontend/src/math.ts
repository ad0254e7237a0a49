/** Quaternion helpers matching the server: wxyz order, canonical w >= 0. */

export type Quat = [number, number, number, number];

export interface Euler {
  roll: number; // about x
  pitch: number; // about y
  yaw: number; // about z
}

export function normalize(q: Quat): Quat {
  const n = Math.hypot(q[0], q[1], q[2], q[3]);
  if (n < 1e-12) throw new Error("cannot normalize a near-zero quaternion");
  return [q[0] / n, q[1] / n, q[2] / n, q[3] / n];
}

export function canonicalize(q: Quat): Quat {
  const u = normalize(q);
  return u[0] < 0 ? [-u[0], -u[1], -u[2], -u[3]] : u;
}

export function multiply(a: Quat, b: Quat): Quat {
  const [aw, ax, ay, az] = a;
  const [bw, bx, by, bz] = b;
  return [
    aw * bw - ax * bx - ay * by - az * bz,
    aw * bx + ax * bw + ay * bz - az * by,
    aw * by - ax * bz + ay * bw + az * bx,
    aw * bz + ax * by - ay * bx + az * bw,
  ];
}

function axisAngle(x: number, y: number, z: number, angle: number): Quat {
  const h = angle / 2;
  const s = Math.sin(h);
  return [Math.cos(h), s * x, s * y, s * z];
}

/** Intrinsic x-y-z Euler angles -> canonical unit quaternion (server order). */
export function eulerToQuat(e: Euler): Quat {
  const qx = axisAngle(1, 0, 0, e.roll);
  const qy = axisAngle(0, 1, 0, e.pitch);
  const qz = axisAngle(0, 0, 1, e.yaw);
  return canonicalize(multiply(multiply(qx, qy), qz));
}

/** Inverse of eulerToQuat (pitch in (-pi/2, pi/2) away from gimbal lock). */
export function quatToEuler(q: Quat): Euler {
  const [w, x, y, z] = normalize(q);
  // rotation matrix entries of Rx(roll)*Ry(pitch)*Rz(yaw)
  const m00 = 1 - 2 * (y * y + z * z);
  const m01 = 2 * (x * y - z * w);
  const m02 = 2 * (x * z + y * w);
  const m12 = 2 * (y * z - x * w);
  const m22 = 1 - 2 * (x * x + y * y);
  const pitch = Math.asin(Math.max(-1, Math.min(1, m02)));
  return {
    roll: Math.atan2(-m12, m22),
    pitch,
    yaw: Math.atan2(-m01, m00),
  };
}

/** Geodesic rotation distance 2*acos(|<p, q>|), radians. */
export function quatDistance(p: Quat, q: Quat): number {
  const pn = normalize(p);
  const qn = normalize(q);
  const d = Math.abs(
    pn[0] * qn[0] + pn[1] * qn[1] + pn[2] * qn[2] + pn[3] * qn[3],
  );
  return 2 * Math.acos(Math.min(d, 1));
}

"""Demonstration datasets: scripted probe trajectories rendered on the
phantom and labeled by the quality oracle.

Samples are stored column-wise (arrays over the whole set) for training
speed; ScanSample is a per-record view. Files use the "USGD1" container
with a crc32 over the record payload.
"""

from dataclasses import dataclass, field
import os
import zlib

import numpy as np

from . import phantom, quat
from .errors import (
    BalancingError,
    ChecksumError,
    EmptyDatasetError,
    FileFormatError,
    InvalidPolicyError,
    SplitError,
    TruncatedFileError,
    VersionError,
)

FORMAT_VERSION = 1
_MAGIC = b"USGD1"

MAX_STEP_ROT = 0.1   # rad, per-step pose change bound
MAX_STEP_FZ = 1.0    # N, per-step normal-force change bound


@dataclass(frozen=True)
class DemoPolicy:
    kind: str  # expert_sweep | novice_jitter | uniform_random
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("expert_sweep", "novice_jitter", "uniform_random"):
            raise InvalidPolicyError(f"unknown policy kind {self.kind!r}")


@dataclass(frozen=True)
class ScanSample:
    frame: phantom.UltrasoundFrame
    state: phantom.ProbeState
    label: int
    trajectory_id: int
    step_index: int


class Dataset:
    """Column-wise sample storage plus generation provenance."""

    def __init__(self, poses, wrenches, labels, traj_ids, steps, pixels,
                 phantom_config, generation_seed):
        self.poses = np.asarray(poses, dtype=np.float32).reshape(-1, 4)
        self.wrenches = np.asarray(wrenches, dtype=np.float32).reshape(-1, 6)
        self.labels = np.asarray(labels, dtype=np.uint8).reshape(-1)
        self.traj_ids = np.asarray(traj_ids, dtype=np.uint32).reshape(-1)
        self.steps = np.asarray(steps, dtype=np.uint32).reshape(-1)
        self.pixels = np.asarray(pixels, dtype=np.float32)
        self.phantom_config = phantom_config
        self.generation_seed = int(generation_seed)
        self.format_version = FORMAT_VERSION
        n = len(self.labels)
        if not (len(self.poses) == len(self.wrenches) == len(self.traj_ids)
                == len(self.steps) == len(self.pixels) == n):
            raise FileFormatError("inconsistent dataset column lengths")

    def __len__(self):
        return len(self.labels)

    def sample(self, i) -> ScanSample:
        rseed = _render_seed(self.generation_seed, int(self.traj_ids[i]),
                             int(self.steps[i]))
        return ScanSample(
            frame=phantom.UltrasoundFrame(self.pixels[i], rseed),
            state=phantom.ProbeState(self.poses[i].astype(np.float64),
                                     self.wrenches[i].astype(np.float64)),
            label=int(self.labels[i]),
            trajectory_id=int(self.traj_ids[i]),
            step_index=int(self.steps[i]),
        )

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices)
        return Dataset(self.poses[idx], self.wrenches[idx], self.labels[idx],
                       self.traj_ids[idx], self.steps[idx], self.pixels[idx],
                       self.phantom_config, self.generation_seed)

    def equals_bitwise(self, other) -> bool:
        return (
            np.array_equal(self.poses, other.poses)
            and np.array_equal(self.wrenches, other.wrenches)
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.traj_ids, other.traj_ids)
            and np.array_equal(self.steps, other.steps)
            and np.array_equal(self.pixels.view(np.uint32),
                               other.pixels.view(np.uint32))
        )


def _render_seed(base_seed, traj_id, step):
    return zlib.crc32(np.array([base_seed, traj_id, step], dtype=np.int64).tobytes())


def _tilt_quat(rng, max_tilt):
    angle = rng.uniform(0.0, max_tilt)
    phi = rng.uniform(0.0, 2 * np.pi)
    return quat.from_axis_angle([np.cos(phi), np.sin(phi), 0.0], angle)


def _small_rotation(rng, max_angle):
    phi = rng.uniform(0.0, 2 * np.pi)
    angle = rng.uniform(0.0, max_angle)
    return quat.from_axis_angle([np.cos(phi), np.sin(phi), 0.0], angle)


def _reflect(x, lo, hi):
    if x < lo:
        return 2 * lo - x
    if x > hi:
        return 2 * hi - x
    return x


def _expert_sweep_states(policy, config, n_steps, rng):
    p = policy.params
    amp = p.get("sweep_amplitude", 0.25)
    famp = p.get("force_amplitude", 2.0)
    period = p.get("period", 40)
    if config.f_nominal - famp < 0:
        raise InvalidPolicyError("force_amplitude would drive Fz below zero")
    if amp * 2 * np.pi / period > MAX_STEP_ROT:
        raise InvalidPolicyError("sweep too fast for the per-step pose bound")
    ph = rng.uniform(0, 2 * np.pi, size=4)
    states = []
    for t in range(n_steps):
        roll = amp * np.sin(2 * np.pi * t / period + ph[0])
        pitch = 0.3 * amp * np.sin(2 * np.pi * t / (1.7 * period) + ph[1])
        pose = quat.from_euler(roll, pitch, 0.0)
        fz = config.f_nominal + famp * np.sin(2 * np.pi * t / period + ph[2])
        fx = 0.5 * np.sin(2 * np.pi * t / period + ph[3])
        fy = 0.5 * np.cos(2 * np.pi * t / period + ph[3])
        torque = 2.0 * np.sin(2 * np.pi * t / period + ph[:3])
        states.append((pose, np.array([fx, fy, fz, *torque])))
    return states


def _walk_states(config, n_steps, rng, start_tilt, start_fz_range, fz_cap,
                 rot_step, fz_step):
    pose = _tilt_quat(rng, start_tilt)
    fz = rng.uniform(*start_fz_range)
    others = rng.uniform(-1, 1, size=5)  # fx, fy, tx, ty, tz
    states = []
    for _ in range(n_steps):
        wrench = np.array([others[0], others[1], fz, others[2], others[3], others[4]])
        states.append((pose, wrench))
        pose = quat.canonicalize(quat.multiply(_small_rotation(rng, rot_step), pose))
        fz = _reflect(fz + rng.uniform(-fz_step, fz_step), 0.0, fz_cap)
        others = others + rng.uniform(-0.2, 0.2, size=5)
    return states


def _policy_states(policy, config, n_steps, rng):
    if policy.kind == "expert_sweep":
        return _expert_sweep_states(policy, config, n_steps, rng)
    p = policy.params
    if policy.kind == "novice_jitter":
        jitter = p.get("jitter_rot", 0.05)
        fj = p.get("jitter_force", 0.8)
        if jitter > MAX_STEP_ROT or fj > MAX_STEP_FZ:
            raise InvalidPolicyError("jitter exceeds per-step smoothness bounds")
        return _walk_states(config, n_steps, rng,
                            start_tilt=p.get("start_tilt", 0.7),
                            start_fz_range=(1.0, config.f_max + 2.0),
                            fz_cap=config.f_max + 4.0,
                            rot_step=jitter, fz_step=fj)
    return _walk_states(config, n_steps, rng,
                        start_tilt=p.get("tilt_max", 1.2),
                        start_fz_range=(0.0, p.get("fz_max", 20.0)),
                        fz_cap=p.get("fz_max", 20.0),
                        rot_step=MAX_STEP_ROT, fz_step=MAX_STEP_FZ)


def record_demonstration(policy, config, n_steps, seed, trajectory_id=0,
                         base_seed=None):
    """One smooth scripted trajectory, rendered and oracle-labeled."""
    if n_steps < 1:
        raise InvalidPolicyError(f"n_steps must be >= 1, got {n_steps}")
    rng = np.random.default_rng(seed)
    states = _policy_states(policy, config, n_steps, rng)
    base = seed if base_seed is None else base_seed
    samples = []
    prev = None
    for step, (pose, wrench) in enumerate(states):
        wrench = np.asarray(wrench, dtype=np.float64)
        wrench[2] = max(wrench[2], 0.0)
        state = phantom.ProbeState(pose, wrench)
        if prev is not None:
            assert quat.distance(prev.pose, state.pose) <= MAX_STEP_ROT + 1e-9
            assert abs(prev.fz - state.fz) <= MAX_STEP_FZ + 1e-9
        rseed = _render_seed(base, trajectory_id, step)
        frame = phantom.render(state, config, rseed)
        oracle = phantom.oracle_quality(state, config)
        samples.append(ScanSample(frame, state, oracle["label"], trajectory_id, step))
        prev = state
    return samples


def _samples_to_columns(samples):
    poses = np.stack([s.state.pose for s in samples]).astype(np.float32)
    wrenches = np.stack([s.state.wrench for s in samples]).astype(np.float32)
    labels = np.array([s.label for s in samples], dtype=np.uint8)
    traj = np.array([s.trajectory_id for s in samples], dtype=np.uint32)
    steps = np.array([s.step_index for s in samples], dtype=np.uint32)
    pixels = np.stack([s.frame.pixels for s in samples])
    return poses, wrenches, labels, traj, steps, pixels


def build_dataset(policy_counts, config, n_steps, seed,
                  target_positive_fraction=None, tolerance=0.01):
    """Concatenate scripted trajectories into a Dataset.

    policy_counts: list of (DemoPolicy, n_trajectories). With a target
    positive fraction, generation repeats the requested mix and greedily
    selects whole trajectories until the fraction lands within the
    tolerance; the budget is 100x the requested sample count.
    """
    for _, count in policy_counts:
        if count < 1:
            raise InvalidPolicyError("trajectory counts must be >= 1")
    rng = np.random.default_rng(seed)
    requested = sum(c for _, c in policy_counts) * n_steps

    def gen_round(next_id):
        out = []
        for policy, count in policy_counts:
            for _ in range(count):
                tseed = int(rng.integers(2**31))
                out.append(record_demonstration(policy, config, n_steps, tseed,
                                                trajectory_id=next_id,
                                                base_seed=seed))
                next_id += 1
        return out, next_id

    trajectories, next_id = gen_round(0)

    if target_positive_fraction is None:
        samples = [s for traj in trajectories for s in traj]
        return Dataset(*_samples_to_columns(samples), config, seed)

    budget = 100 * requested
    generated = requested
    while True:
        chosen = _select_trajectories(trajectories, requested, n_steps,
                                      target_positive_fraction)
        if chosen is not None:
            n_pos = sum(sum(s.label for s in t) for t in chosen)
            n_tot = sum(len(t) for t in chosen)
            if abs(n_pos / n_tot - target_positive_fraction) <= tolerance:
                samples = [s for t in chosen for s in t]
                return Dataset(*_samples_to_columns(samples), config, seed)
        if generated + requested > budget:
            raise BalancingError(
                f"could not reach positive fraction {target_positive_fraction} "
                f"within a {budget}-sample generation budget"
            )
        more, next_id = gen_round(next_id)
        trajectories.extend(more)
        generated += requested


def _select_trajectories(trajectories, n_samples, n_steps, target):
    """Greedy whole-trajectory pick keeping the running fraction on target."""
    pool = list(range(len(trajectories)))
    frac = [sum(s.label for s in trajectories[i]) / len(trajectories[i])
            for i in pool]
    need = n_samples // n_steps
    if len(pool) < need:
        return None
    chosen, pos, tot = [], 0, 0
    for _ in range(need):
        best, best_err = None, None
        for i in pool:
            ni = len(trajectories[i])
            err = abs((pos + frac[i] * ni) / (tot + ni) - target)
            if best_err is None or err < best_err:
                best, best_err = i, err
        pool.remove(best)
        chosen.append(trajectories[best])
        pos += frac[best] * len(trajectories[best])
        tot += len(trajectories[best])
    return chosen


def split(dataset: Dataset, val_fraction, seed):
    """Stratified train/val split on whole trajectories."""
    if not 0 < val_fraction < 1:
        raise SplitError(f"val_fraction must be in (0, 1), got {val_fraction}")
    ids = np.unique(dataset.traj_ids)
    if len(ids) < 2:
        raise SplitError("need at least 2 trajectories to split")
    n_val = max(1, round(val_fraction * len(ids)))
    if n_val >= len(ids):
        raise SplitError("val_fraction leaves no training trajectories")
    # order by positive fraction so evenly spaced picks stratify by label
    fracs = np.array([
        dataset.labels[dataset.traj_ids == t].mean() for t in ids
    ])
    order = np.lexsort((ids, fracs))
    rng = np.random.default_rng(seed)
    offset = rng.uniform(0.0, 1.0)
    picks = np.floor((np.arange(n_val) + offset) * len(ids) / n_val).astype(int)
    val_ids = set(ids[order[picks]].tolist())
    val_mask = np.isin(dataset.traj_ids, list(val_ids))
    return dataset.subset(np.nonzero(~val_mask)[0]), dataset.subset(np.nonzero(val_mask)[0])


def stats(dataset: Dataset) -> dict:
    if len(dataset) == 0:
        raise EmptyDatasetError("stats of an empty dataset")
    n = len(dataset)
    n_pos = int(dataset.labels.sum())
    return {
        "n": n,
        "n_pos": n_pos,
        "n_neg": n - n_pos,
        "pos_fraction": n_pos / n,
        "pose_mean": dataset.poses.mean(axis=0).tolist(),
        "pose_std": dataset.poses.std(axis=0).tolist(),
        "wrench_mean": dataset.wrenches.mean(axis=0).tolist(),
        "wrench_std": dataset.wrenches.std(axis=0).tolist(),
        "n_trajectories": int(len(np.unique(dataset.traj_ids))),
    }


def norm_stats(dataset: Dataset) -> dict:
    """Per-dimension normalization constants for model inputs."""
    s = stats(dataset)
    return {
        "pose_mean": s["pose_mean"],
        "pose_std": [max(v, 1e-6) for v in s["pose_std"]],
        "wrench_mean": s["wrench_mean"],
        "wrench_std": [max(v, 1e-6) for v in s["wrench_std"]],
    }


def save(dataset: Dataset, path):
    """USGD1 container, written atomically (temp + rename)."""
    h, w, c = dataset.phantom_config.image_size
    n = len(dataset)
    records = bytearray()
    for i in range(n):
        records += dataset.poses[i].astype("<f4").tobytes()
        records += dataset.wrenches[i].astype("<f4").tobytes()
        records += bytes([int(dataset.labels[i])])
        records += np.uint32(dataset.traj_ids[i]).tobytes()
        records += np.uint32(dataset.steps[i]).tobytes()
        records += dataset.pixels[i].astype("<f4").tobytes()
    cfg_blob = phantom.config_to_text(dataset.phantom_config).encode("utf-8")
    header = bytearray()
    header += _MAGIC
    header += np.uint32(FORMAT_VERSION).tobytes()
    header += np.uint64(n).tobytes()
    header += np.array([h, w, c], dtype="<u4").tobytes()
    header += np.uint64(dataset.generation_seed & 0xFFFFFFFFFFFFFFFF).tobytes()
    header += np.uint64(len(cfg_blob)).tobytes()
    header += cfg_blob
    header += np.uint32(zlib.crc32(bytes(records))).tobytes()
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as f:
        f.write(bytes(header))
        f.write(bytes(records))
    os.replace(tmp, path)


def load(path) -> Dataset:
    with open(path, "rb") as f:
        data = f.read()
    if data[:5] != _MAGIC:
        raise VersionError(f"bad dataset magic {data[:5]!r}")
    off = 5

    def take(nbytes):
        nonlocal off
        if off + nbytes > len(data):
            raise TruncatedFileError("dataset file ends before declared payload")
        chunk = data[off : off + nbytes]
        off += nbytes
        return chunk

    version = int(np.frombuffer(take(4), "<u4")[0])
    if version != FORMAT_VERSION:
        raise VersionError(f"unsupported dataset format version {version}")
    n = int(np.frombuffer(take(8), "<u8")[0])
    h, w, c = (int(v) for v in np.frombuffer(take(12), "<u4"))
    gen_seed = int(np.frombuffer(take(8), "<u8")[0])
    cfg_len = int(np.frombuffer(take(8), "<u8")[0])
    config = phantom.config_from_text(take(cfg_len).decode("utf-8"))
    expect_crc = int(np.frombuffer(take(4), "<u4")[0])
    stride = 4 * 4 + 6 * 4 + 1 + 4 + 4 + h * w * c * 4
    records = take(n * stride)
    if zlib.crc32(records) != expect_crc:
        raise ChecksumError("dataset payload checksum mismatch")

    poses = np.empty((n, 4), np.float32)
    wrenches = np.empty((n, 6), np.float32)
    labels = np.empty(n, np.uint8)
    traj = np.empty(n, np.uint32)
    steps = np.empty(n, np.uint32)
    pixels = np.empty((n, h, w, c), np.float32)
    for i in range(n):
        r = records[i * stride : (i + 1) * stride]
        poses[i] = np.frombuffer(r[0:16], "<f4")
        wrenches[i] = np.frombuffer(r[16:40], "<f4")
        labels[i] = r[40]
        traj[i] = np.frombuffer(r[41:45], "<u4")[0]
        steps[i] = np.frombuffer(r[45:49], "<u4")[0]
        pixels[i] = np.frombuffer(r[49:], "<f4").reshape(h, w, c)
    return Dataset(poses, wrenches, labels, traj, steps, pixels, config, gen_seed)

"""Sampling-based scanning guidance.

Candidates for the next (pose, wrench) are drawn from demonstrated
experience, filtered by per-step bounds around the current state, scored
by the quality model against the current image, and the best-scoring
candidate wins (ties to the lowest draw index). No global optimality is
claimed; the point is a cheap, model-free improvement step.
"""

from dataclasses import dataclass, field
import time

import numpy as np

from . import model as qm
from . import phantom, quat
from .dataset import Dataset
from .errors import EmptyDatasetError, GuidanceInfeasibleError, InvalidStateError
from .nn import softmax_probs


@dataclass(frozen=True)
class Experience:
    """(pose, wrench) pairs harvested from a dataset."""

    poses: np.ndarray     # (m, 4) canonical unit quaternions
    wrenches: np.ndarray  # (m, 6)
    source_filter: str = "all"
    paired_sampling: bool = True

    def __len__(self):
        return len(self.poses)


@dataclass(frozen=True)
class GuidanceConfig:
    n_samples: int = 1000
    pose_bound: float = 0.2          # rad
    force_bound: tuple = (2.0, 2.0, 2.0, 20.0, 20.0, 20.0)  # N / N*mm per step
    accept_threshold: float = 0.8
    early_exit: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 1:
            raise InvalidStateError("n_samples must be >= 1")
        if self.pose_bound <= 0 or any(b <= 0 for b in self.force_bound):
            raise InvalidStateError("bounds must be positive")
        if not 0 < self.accept_threshold <= 1:
            raise InvalidStateError("accept_threshold must be in (0, 1]")


@dataclass(frozen=True)
class GuidanceSuggestion:
    pose: np.ndarray
    wrench: np.ndarray
    q_best: float
    n_evaluated: int
    n_feasible: int
    elapsed_ms: float
    candidate_index: int


def harvest(dataset: Dataset, source_filter="all", paired_sampling=True) -> Experience:
    """Empirical (pose, wrench) distribution; duplicates retained."""
    if source_filter not in ("all", "positives_only"):
        raise InvalidStateError(f"unknown experience filter {source_filter!r}")
    if source_filter == "positives_only":
        sel = dataset.labels == 1
    else:
        sel = np.ones(len(dataset), dtype=bool)
    if not sel.any():
        raise EmptyDatasetError(f"no samples left after filter {source_filter!r}")
    poses = dataset.poses[sel].astype(np.float64)
    # stored poses are canonical; renormalize against float32 rounding
    poses = np.stack([quat.canonicalize(p) for p in poses])
    return Experience(poses, dataset.wrenches[sel].astype(np.float64),
                      source_filter, paired_sampling)


def feasible(cand_pose, cand_wrench, cur_pose, cur_wrench,
             cfg: GuidanceConfig) -> bool:
    """Within the per-step pose/force bounds (closed) and Fz >= 0."""
    if cand_wrench[2] < 0:
        return False
    if np.any(np.abs(np.asarray(cand_wrench) - np.asarray(cur_wrench))
              > np.asarray(cfg.force_bound)):
        return False
    return quat.distance(cand_pose, cur_pose) <= cfg.pose_bound


def _draw_indices(experience, cfg, rng):
    if experience.paired_sampling:
        return rng.integers(0, len(experience), size=cfg.n_samples), None
    # independent pose/force draws (paper-style D_P x D_F product sets)
    return (rng.integers(0, len(experience), size=cfg.n_samples),
            rng.integers(0, len(experience), size=cfg.n_samples))


def _nearest_entry_diagnostics(experience, state):
    dots = np.abs(experience.poses @ state.pose)
    pose_d = 2 * np.arccos(np.clip(dots, -1.0, 1.0))
    force_d = np.abs(experience.wrenches - state.wrench).max(axis=1)
    i = int(np.argmin(pose_d + 0.01 * force_d))
    return {
        "nearest_pose_distance": float(pose_d[i]),
        "nearest_force_distance": float(force_d[i]),
        "nearest_index": i,
    }


def suggest(model: qm.QualityModel, experience: Experience,
            frame: phantom.UltrasoundFrame, state: phantom.ProbeState,
            cfg: GuidanceConfig) -> GuidanceSuggestion:
    """Best-of-N candidate from experience, scored against the current image.

    The image feature is computed once; candidates are scored one at a
    time in draw order so the argmax (ties to lowest index) is exactly
    reproducible by exhaustive re-scoring.
    """
    if len(experience) == 0:
        raise EmptyDatasetError("experience is empty")
    t0 = time.monotonic()
    rng = np.random.default_rng(cfg.seed)
    idx_p, idx_f = _draw_indices(experience, cfg, rng)

    pixels = np.asarray(frame.pixels, np.float32)[None]
    img_feat = model.image_net.forward(model.store, pixels, keep_cache=False)

    best = None
    n_feasible = 0
    n_evaluated = 0
    for k in range(cfg.n_samples):
        pose = experience.poses[idx_p[k]]
        wrench = experience.wrenches[idx_f[k] if idx_f is not None else idx_p[k]]
        n_evaluated += 1
        if not feasible(pose, wrench, state.pose, state.wrench, cfg):
            continue
        n_feasible += 1
        q = _score(model, img_feat, pose, wrench)
        if best is None or q > best[0]:
            best = (q, k, pose, wrench)
        if cfg.early_exit and q >= cfg.accept_threshold:
            break
    if best is None:
        raise GuidanceInfeasibleError(
            f"no feasible candidate among {cfg.n_samples} draws",
            diagnostics=_nearest_entry_diagnostics(experience, state))
    q, k, pose, wrench = best
    return GuidanceSuggestion(
        pose=pose.copy(), wrench=wrench.copy(), q_best=float(q),
        n_evaluated=n_evaluated, n_feasible=n_feasible,
        elapsed_ms=(time.monotonic() - t0) * 1000.0, candidate_index=k)


def _score(model, img_feat, pose, wrench):
    pf_inputs = model._pf_inputs(pose.astype(np.float32)[None],
                                 wrench.astype(np.float32)[None])
    pf_feats = [net.forward(model.store, x, keep_cache=False)
                for net, x in zip(model.pf_nets, pf_inputs)]
    fused = np.concatenate([img_feat, *pf_feats], axis=1)
    vt = model.fuse_net.forward(model.store, fused, keep_cache=False)
    logits = model.out_net.forward(model.store, vt, keep_cache=False)
    return float(softmax_probs(logits)[0, 1])


def rollout(model: qm.QualityModel, config: phantom.PhantomConfig,
            experience: Experience, start: phantom.ProbeState, steps: int,
            cfg: GuidanceConfig, render_seed: int = 0) -> dict:
    """Closed loop on the phantom: render, suggest, move, log."""
    if steps < 1:
        raise InvalidStateError("steps must be >= 1")
    state = start
    log = []
    truncated = False
    for step in range(steps):
        frame = phantom.render(state, config, render_seed + step)
        conf = qm.forward(model, frame, state)["confidence"]
        oracle = phantom.oracle_quality(state, config)
        step_cfg = GuidanceConfig(
            n_samples=cfg.n_samples, pose_bound=cfg.pose_bound,
            force_bound=cfg.force_bound, accept_threshold=cfg.accept_threshold,
            early_exit=cfg.early_exit, seed=cfg.seed + step)
        try:
            sug = suggest(model, experience, frame, state, step_cfg)
        except GuidanceInfeasibleError:
            log.append({"step": step, "state": state, "confidence": conf,
                        "oracle_score": oracle["score"],
                        "oracle_label": oracle["label"],
                        "n_feasible": 0, "elapsed_ms": 0.0})
            truncated = True
            break
        log.append({"step": step, "state": state, "confidence": conf,
                    "oracle_score": oracle["score"],
                    "oracle_label": oracle["label"],
                    "n_feasible": sug.n_feasible, "elapsed_ms": sug.elapsed_ms})
        state = phantom.ProbeState(sug.pose, sug.wrench)
    return {"log": log, "final_state": state, "truncated": truncated}


def rollout_csv(result: dict) -> str:
    header = ("step,pose_w,pose_x,pose_y,pose_z,fx,fy,fz,tx,ty,tz,"
              "model_confidence,oracle_score,n_feasible,elapsed_ms")
    lines = [header]
    for row in result["log"]:
        st = row["state"]
        vals = [row["step"], *st.pose, *st.wrench, row["confidence"],
                row["oracle_score"], row["n_feasible"], row["elapsed_ms"]]
        lines.append(",".join(
            f"{v:.6f}" if isinstance(v, float) else str(v) for v in vals))
    return "\n".join(lines) + "\n"

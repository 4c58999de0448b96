"""Parametric moving-shape scenes with ground truth, plus an ideal event simulator.

Scenes are flat-shaded rectangles and disks on a uniform background, each
following per-axis polynomial trajectories of normalized time t in [0, 1].
Rendering uses 4x4 supersampling (per-subsample topmost-shape resolution),
which both anti-aliases edges and resolves occlusion exactly.

Ground-truth flow at a pixel owned by shape k at time tau is the shape's
center displacement toward the keyframe, F_{tau->0} = pos_k(0) - pos_k(tau)
(and likewise toward t=1), so backward-warping a keyframe by the flow
reproduces the tau frame wherever the content is visible in that keyframe.

The event simulator is a per-pixel contrast-threshold model: reference
log-intensities track log(I + 1e-4); between consecutive substeps the log
signal is linearly interpolated and one event is emitted per crossing of
reference +/- C, advancing the reference by polarity * C each time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .events import EventStream

LOG_EPS = 1e-4        # stabilizer added to intensity before log
SUPERSAMPLE = 4       # per-axis subsamples for anti-aliased coverage
CROSSING_EPS = 1e-9   # tolerance when counting threshold crossings


@dataclass
class Shape:
    """One moving shape.

    ``size`` is (height, width) for rectangles and a radius for disks.
    ``traj_x`` / ``traj_y`` are polynomial coefficients in ascending order,
    evaluated at normalized time to give the center position in pixels.
    Larger ``z_order`` is drawn on top.
    """

    kind: str  # "rectangle" | "disk"
    size: object
    intensity: float
    traj_x: tuple
    traj_y: tuple
    z_order: int = 0

    def position(self, t):
        cx = sum(c * t**i for i, c in enumerate(self.traj_x))
        cy = sum(c * t**i for i, c in enumerate(self.traj_y))
        return cx, cy

    def contains(self, t, xs, ys):
        """Boolean membership of points (xs, ys) at normalized time t."""
        cx, cy = self.position(t)
        if self.kind == "rectangle":
            sh, sw = self.size
            return (np.abs(xs - cx) <= sw / 2) & (np.abs(ys - cy) <= sh / 2)
        if self.kind == "disk":
            r = float(self.size)
            return (xs - cx) ** 2 + (ys - cy) ** 2 <= r * r
        raise ValueError(f"unknown shape kind {self.kind!r}")

    def bbox_inside_canvas_ever(self, h, w, times):
        for t in times:
            cx, cy = self.position(t)
            if self.kind == "rectangle":
                sh, sw = self.size
                rx, ry = sw / 2, sh / 2
            else:
                rx = ry = float(self.size)
            if cx + rx >= 0 and cx - rx < w and cy + ry >= 0 and cy - ry < h:
                return True
        return False


@dataclass
class SceneSpec:
    """Canvas, background intensity, shapes, and the generation seed."""

    height: int
    width: int
    background: float
    shapes: list
    seed: int = 0

    def sorted_shapes(self):
        return sorted(self.shapes, key=lambda s: s.z_order)


@dataclass
class Sample:
    """A rendered training/evaluation sample with full ground truth."""

    i0: np.ndarray          # (3, H, W) float32 in [0, 1]
    i1: np.ndarray
    i_gt: np.ndarray        # frame at tau
    tau: float
    events: EventStream
    flow_to0: np.ndarray    # (2, H, W) float32, x then y displacement
    flow_to1: np.ndarray
    occlusion: np.ndarray   # (H, W) bool: visible in neither keyframe
    visible_in_i0: np.ndarray
    visible_in_i1: np.ndarray


def _subsample_coords(n):
    # pixel i covers [i - 0.5, i + 0.5); centers of SUPERSAMPLE sub-cells
    offs = (np.arange(SUPERSAMPLE) + 0.5) / SUPERSAMPLE - 0.5
    return (np.arange(n)[:, None] + offs[None, :]).reshape(-1)


def render_frame(spec: SceneSpec, t):
    """Anti-aliased grayscale frame (H, W) float32 at normalized time t."""
    ys = _subsample_coords(spec.height)
    xs = _subsample_coords(spec.width)
    gx, gy = np.meshgrid(xs, ys)
    val = np.full(gx.shape, spec.background, dtype=np.float64)
    for shape in spec.sorted_shapes():
        mask = shape.contains(t, gx, gy)
        val[mask] = shape.intensity
    s = SUPERSAMPLE
    val = val.reshape(spec.height, s, spec.width, s).mean(axis=(1, 3))
    return val.astype(np.float32)


def owner_map(spec: SceneSpec, t):
    """Topmost shape index at each pixel center (-1 for background)."""
    gx, gy = np.meshgrid(np.arange(spec.width, dtype=np.float64),
                         np.arange(spec.height, dtype=np.float64))
    own = np.full(gx.shape, -1, dtype=np.int64)
    order = np.argsort([s.z_order for s in spec.shapes], kind="stable")
    for idx in order:
        own[spec.shapes[idx].contains(t, gx, gy)] = idx
    return own


def _point_owner_visible(spec, shape_idx, t, px, py):
    """True where continuous points (px, py) show shape_idx (or background
    for shape_idx == -1) at time t: inside the canvas and not covered by a
    shape drawn above."""
    inside = (px >= -0.5) & (px <= spec.width - 0.5) & \
             (py >= -0.5) & (py <= spec.height - 0.5)
    vis = inside.copy()
    if shape_idx >= 0:
        me = spec.shapes[shape_idx]
        vis &= me.contains(t, px, py)
        my_z = me.z_order
    else:
        my_z = -math.inf
    for j, other in enumerate(spec.shapes):
        if j == shape_idx:
            continue
        above = other.z_order > my_z or (other.z_order == my_z and shape_idx >= 0 and j > shape_idx)
        if above:
            vis &= ~other.contains(t, px, py)
    return vis


def ground_truth_motion(spec: SceneSpec, tau):
    """Analytic flow to both keyframes plus per-keyframe visibility maps."""
    h, w = spec.height, spec.width
    own = owner_map(spec, tau)
    flow_to0 = np.zeros((2, h, w), dtype=np.float32)
    flow_to1 = np.zeros((2, h, w), dtype=np.float32)
    gx, gy = np.meshgrid(np.arange(w, dtype=np.float64),
                         np.arange(h, dtype=np.float64))
    vis0 = np.zeros((h, w), dtype=bool)
    vis1 = np.zeros((h, w), dtype=bool)
    for idx in [-1] + list(range(len(spec.shapes))):
        pix = own == idx
        if not pix.any():
            continue
        if idx >= 0:
            shape = spec.shapes[idx]
            cx_t, cy_t = shape.position(tau)
            d0 = np.subtract(shape.position(0.0), (cx_t, cy_t))
            d1 = np.subtract(shape.position(1.0), (cx_t, cy_t))
        else:
            d0 = d1 = (0.0, 0.0)
        flow_to0[0][pix], flow_to0[1][pix] = d0[0], d0[1]
        flow_to1[0][pix], flow_to1[1][pix] = d1[0], d1[1]
        vis0[pix] = _point_owner_visible(spec, idx, 0.0, gx[pix] + d0[0], gy[pix] + d0[1])
        vis1[pix] = _point_owner_visible(spec, idx, 1.0, gx[pix] + d1[0], gy[pix] + d1[1])
    return flow_to0, flow_to1, vis0, vis1


def simulate_events(frames, contrast, t_end_us, threshold_sigma=0.0, seed=0):
    """Contrast-threshold event simulation over high-rate grayscale frames.

    ``frames`` is (N, H, W) in [0, 1], uniformly spaced over [0, t_end_us].
    Per pixel, a reference log-intensity starts at the first frame's value;
    each linear log-intensity segment emits one event per crossing of
    reference + j * C (or - j * C), timestamped at the interpolated crossing
    instant and rounded to integer microseconds.  Optional Gaussian jitter
    (``threshold_sigma``, in units of C) draws a fixed per-pixel threshold.
    """
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 3 or frames.shape[0] < 2:
        raise ValueError("need at least 2 frames of shape (N, H, W)")
    if contrast <= 0:
        raise ValueError(f"contrast threshold must be positive, got {contrast}")
    n, h, w = frames.shape
    if threshold_sigma > 0:
        rng = np.random.default_rng(seed)
        c_pix = contrast * (1.0 + threshold_sigma * rng.standard_normal((h, w)))
        c_pix = np.maximum(c_pix, 0.05 * contrast)
    else:
        c_pix = np.full((h, w), contrast)

    log_frames = np.log(frames + LOG_EPS)
    ref = log_frames[0].copy()
    times = np.linspace(0.0, float(t_end_us), n)
    gx, gy = np.meshgrid(np.arange(w), np.arange(h))

    out_x, out_y, out_p, out_t = [], [], [], []
    for i in range(n - 1):
        la, lb = log_frames[i], log_frames[i + 1]
        ta, tb = times[i], times[i + 1]
        delta = lb - ref
        sign = np.sign(delta).astype(np.int64)
        count = np.floor(np.abs(delta) / c_pix + CROSSING_EPS).astype(np.int64)
        count[sign == 0] = 0
        k_max = int(count.max()) if count.size else 0
        slope = lb - la
        for j in range(1, k_max + 1):
            fire = count >= j
            if not fire.any():
                continue
            level = ref[fire] + sign[fire] * j * c_pix[fire]
            frac = (level - la[fire]) / slope[fire]
            t_ev = ta + np.clip(frac, 0.0, 1.0) * (tb - ta)
            out_x.append(gx[fire])
            out_y.append(gy[fire])
            out_p.append(sign[fire])
            out_t.append(t_ev)
        ref = ref + sign * count * c_pix

    if out_x:
        xs = np.concatenate(out_x)
        ys = np.concatenate(out_y)
        ps = np.concatenate(out_p).astype(np.int8)
        ts = np.rint(np.clip(np.concatenate(out_t), 0, t_end_us)).astype(np.int64)
        order = np.lexsort((ps, xs, ys, ts))
        xs, ys, ps, ts = xs[order], ys[order], ps[order], ts[order]
    else:
        xs = ys = ts = np.zeros(0, dtype=np.int64)
        ps = np.zeros(0, dtype=np.int8)
    return EventStream(xs, ys, ps, ts, 0, int(t_end_us), h, w)


def render_sequence(spec: SceneSpec, n_sub, tau, contrast=0.2, duration_us=100_000,
                    threshold_sigma=0.0, warn=None):
    """Render keyframes, the tau frame, ground truth, and simulated events.

    Returns ``(sample, highrate_frames, times)`` where ``highrate_frames``
    holds the two keyframes plus ``n_sub`` intermediate frames, uniformly
    spaced over [0, 1].
    """
    if n_sub < 8:
        raise ValueError(f"need at least 8 substeps, got {n_sub}")
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must lie strictly inside (0, 1), got {tau}")
    times = np.linspace(0.0, 1.0, n_sub + 2)
    for i, shape in enumerate(spec.shapes):
        if not shape.bbox_inside_canvas_ever(spec.height, spec.width, times):
            msg = f"shape {i} ({shape.kind}) never intersects the canvas"
            if warn is not None:
                warn(msg)
            else:
                import warnings
                warnings.warn(msg, stacklevel=2)
    frames = np.stack([render_frame(spec, t) for t in times])
    i_gt_gray = render_frame(spec, tau)
    events = simulate_events(frames, contrast, duration_us,
                             threshold_sigma=threshold_sigma, seed=spec.seed)
    flow_to0, flow_to1, vis0, vis1 = ground_truth_motion(spec, tau)

    def rgb(gray):
        return np.repeat(gray[None], 3, axis=0).astype(np.float32)

    sample = Sample(
        i0=rgb(frames[0]), i1=rgb(frames[-1]), i_gt=rgb(i_gt_gray), tau=float(tau),
        events=events, flow_to0=flow_to0, flow_to1=flow_to1,
        occlusion=~(vis0 | vis1), visible_in_i0=vis0, visible_in_i1=vis1,
    )
    return sample, frames, times


@dataclass
class SceneDistribution:
    """Sampling ranges for random scene specs.

    ``occluders=True`` routes every shape's trajectory through the canvas
    center at mid-clip so that later-drawn shapes pass over earlier ones.
    """

    height: int = 64
    width: int = 64
    min_shapes: int = 1
    max_shapes: int = 3
    size_range: tuple = (8.0, 22.0)
    speed_range: tuple = (2.0, 7.0)
    background_range: tuple = (0.08, 0.32)
    intensity_range: tuple = (0.55, 0.95)
    quadratic_prob: float = 0.3
    occluders: bool = False

    def sample(self, rng) -> SceneSpec:
        n = int(rng.integers(self.min_shapes, self.max_shapes + 1))
        if self.occluders:
            n = max(n, 2)
        bg = float(rng.uniform(*self.background_range))
        shapes = []
        for k in range(n):
            kind = "rectangle" if rng.random() < 0.5 else "disk"
            s = float(rng.uniform(*self.size_range))
            size = (s, float(rng.uniform(*self.size_range))) if kind == "rectangle" else s / 2
            speed = rng.uniform(*self.speed_range)
            angle = rng.uniform(0, 2 * np.pi)
            vx, vy = speed * np.cos(angle), speed * np.sin(angle)
            if self.occluders:
                # pass near the center at t=0.5 so overlapping-order matters
                cx = self.width / 2 + rng.uniform(-6, 6) - 0.5 * vx
                cy = self.height / 2 + rng.uniform(-6, 6) - 0.5 * vy
            else:
                cx = rng.uniform(0.2 * self.width, 0.8 * self.width)
                cy = rng.uniform(0.2 * self.height, 0.8 * self.height)
            traj_x = [float(cx), float(vx)]
            traj_y = [float(cy), float(vy)]
            if rng.random() < self.quadratic_prob:
                traj_x.append(float(rng.uniform(-2.0, 2.0)))
                traj_y.append(float(rng.uniform(-2.0, 2.0)))
            shapes.append(Shape(
                kind=kind, size=size,
                intensity=float(rng.uniform(*self.intensity_range)),
                traj_x=tuple(traj_x), traj_y=tuple(traj_y), z_order=k,
            ))
        return SceneSpec(self.height, self.width, bg, shapes,
                         seed=int(rng.integers(0, 2**31)))


DISTRIBUTION_PRESETS = {
    "default": SceneDistribution(),
    "occlusion": SceneDistribution(min_shapes=2, max_shapes=3, occluders=True),
}

"""End-to-end texturing runs: anchors, fine-tuning, adaptive view walk,
projection, exports, and the desk-scale view-consistency metric."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

import textailor
from textailor import images
from textailor.atlas import TextureAtlas, coverage_stats, project, texel_faces
from textailor.denoisers import (AnalyticGaussianDenoiser, ClampedDenoiser,
                                 Conditioning, RemoteDenoiser, ToyDenoiser,
                                 prompt_to_token)
from textailor.finetune import (ANCHOR_VIEWPOINTS, AnchorSample, FinetuneConfig,
                                finetune_loop, write_training_log)
from textailor.geometry import (Mesh, load_mesh, rasterize, render_textured,
                                viewpoint_to_camera, Viewpoint)
from textailor.geometry.mesh import save_obj
from textailor.regions import Label, classify_regions
from textailor.schedule import ResampleConfig, make_schedule, resample_loop
from textailor.viewsched import SchedulerConfig, coverage_ratio, view_sequence

log = logging.getLogger("textailor")

__all__ = ["RunConfig", "RunResult", "default_view_sequence", "run_texturing",
           "eval_consistency", "dry_run_schedule", "normalized_depth"]

CONFIG_SCHEMA = "textailor-run/1"


def default_view_sequence() -> tuple:
    """Anchors first, then an azimuth ring at 15 degrees plus polar views."""
    ring = tuple(Viewpoint(theta, 15.0, 1.0) for theta in (60, 120, 180, 240, 300))
    poles = (Viewpoint(0.0, 85.0, 1.0), Viewpoint(0.0, -85.0, 1.0))
    return tuple(ANCHOR_VIEWPOINTS) + ring + poles


@dataclass
class RunConfig:
    """Everything a texturing run needs; seeded runs are deterministic for
    the analytic and toy backends."""

    mesh_path: str
    out_dir: str
    prompt: str = "a mesh"
    backend: str = "analytic"           # analytic | toy | remote
    endpoint: str | None = None         # remote backend URL
    seed: int = 0
    image_size: int = 128
    latent_factor: int = 4
    atlas_size: int = 64
    fov_deg: float = 45.0
    bg_color: tuple = (0.2, 0.2, 0.2)
    schedule_T: int = 1000
    schedule_kind: str = "linear"
    resample_r: int = 3
    ddim_steps: int = 30
    lam: float = 2.5
    finetune_steps: int = 400
    finetune_lr: float = 1e-5
    finetune_enabled: bool = False
    beta: float = 0.5
    gamma: float = 0.5
    max_insert_depth: int = 3
    views: tuple = field(default_factory=default_view_sequence)
    analytic_mu: tuple = (0.0, 1.0, 0.0)
    analytic_sigma0: float = 0.005
    toy_params_path: str | None = None
    guidance: float | None = None
    eval_cameras: int = 25
    eval_elevations: tuple = (30.0, -30.0)
    phase_order: str = "anchors,finetune,schedule"

    def resample_config(self) -> ResampleConfig:
        return ResampleConfig(repetitions=self.resample_r, steps=self.ddim_steps)

    def to_json_dict(self) -> dict:
        d = asdict(self)
        d["views"] = [[v.azimuth, v.elevation, v.radius] for v in self.views]
        d["schema"] = CONFIG_SCHEMA
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        schema = d.pop("schema", CONFIG_SCHEMA)
        if schema != CONFIG_SCHEMA:
            raise ValueError(f"unsupported config schema {schema!r}")
        if "views" in d:
            d["views"] = tuple(Viewpoint(*v) for v in d["views"])
        for key in ("bg_color", "analytic_mu", "eval_elevations"):
            if key in d and isinstance(d[key], list):
                d[key] = tuple(d[key])
        return cls(**d)


@dataclass
class RunResult:
    report: dict
    atlas: TextureAtlas
    out_dir: Path
    denoiser: object = None


def normalized_depth(buffers) -> np.ndarray:
    """Foreground depth flipped and scaled into (0, 1], background 0."""
    fg = buffers.foreground
    norm = np.zeros(buffers.depth.shape)
    if fg.any():
        d = buffers.depth[fg]
        span = d.max() - d.min()
        norm[fg] = 1.0 if span < 1e-9 else (d.max() - d) / span * 0.9 + 0.1
    return norm


def _view_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def _make_backend(cfg: RunConfig, sched, latent_hw, toy: ToyDenoiser | None):
    if cfg.backend == "analytic":
        mu = np.empty((3,) + latent_hw)
        mu[:] = np.asarray(cfg.analytic_mu)[:, None, None]
        return AnalyticGaussianDenoiser(schedule=sched, mu=mu, sigma0=cfg.analytic_sigma0)
    if cfg.backend == "toy":
        if toy is None:
            if cfg.toy_params_path:
                toy = ToyDenoiser.load(cfg.toy_params_path)
            else:
                log.warning("toy backend starting from random init; expect noise textures")
                toy = ToyDenoiser(seed=cfg.seed)
        # weak predictors need the implied-z0 clamp to sample stably
        return ClampedDenoiser(inner=toy, schedule=sched)
    if cfg.backend == "remote":
        if not cfg.endpoint:
            raise ValueError("remote backend requires an endpoint")
        return RemoteDenoiser(endpoint=cfg.endpoint, prompt=cfg.prompt, guidance=cfg.guidance)
    raise ValueError(f"unknown backend {cfg.backend!r}")


def _paint_view(mesh, atlas, cfg, sched, backend, cond_token, view, seed):
    """Rasterize, classify, inpaint, and project one viewpoint.

    Returns (region counts, coverage ratio p, anchor sample) for reporting.
    """
    res = (cfg.image_size, cfg.image_size)
    cam = viewpoint_to_camera(view, res, cfg.fov_deg)
    buffers = rasterize(mesh, cam)
    masks = classify_regions(buffers, atlas, cam, latent_factor=cfg.latent_factor)
    p = coverage_ratio(masks)

    rendered = render_textured(mesh, atlas, cam, cfg.bg_color, buffers)
    depth_latent = images.downsample(normalized_depth(buffers), cfg.latent_factor)
    cond = Conditioning(prompt_token=cond_token, depth=np.clip(depth_latent, 0.0, 1.0))
    z0_known = images.downsample(rendered, cfg.latent_factor).transpose(2, 0, 1)

    if masks.latent_mask.any():
        z0_gen = resample_loop(backend, z0_known, masks.latent_mask, cond,
                               sched, cfg.resample_config(), seed)
    else:
        z0_gen = z0_known

    decoded = np.clip(images.upsample(z0_gen.transpose(1, 2, 0), cfg.latent_factor), 0.0, 1.0)
    # UPDATE pixels re-project their current rendered colors at the better
    # angle; only NEW pixels take generated content.
    proj_img = decoded.copy()
    upd = masks.label == Label.UPDATE
    proj_img[upd] = rendered[upd]
    project(proj_img, buffers, masks, cam, atlas)

    anchor = AnchorSample(z0=z0_gen, cond=cond, viewpoint=view)
    return masks.counts(), p, anchor, cam, buffers


def run_texturing(cfg: RunConfig, toy: ToyDenoiser | None = None) -> RunResult:
    """Run the full texturing procedure and write all outputs to out_dir."""
    t_start = time.time()
    out = Path(cfg.out_dir)
    (out / "views").mkdir(parents=True, exist_ok=True)

    mesh = load_mesh(cfg.mesh_path)
    atlas = TextureAtlas(size=cfg.atlas_size)
    sched = make_schedule(cfg.schedule_T, cfg.schedule_kind, steps=cfg.ddim_steps)
    latent_hw = (cfg.image_size // cfg.latent_factor,) * 2
    backend = _make_backend(cfg, sched, latent_hw, toy)
    token = prompt_to_token(cfg.prompt)

    finetune_due = cfg.finetune_enabled and cfg.backend == "toy"
    if cfg.finetune_enabled and cfg.backend != "toy":
        log.info("fine-tuning skipped: backend %s has no trainable parameters", cfg.backend)
    n_fixed = len(ANCHOR_VIEWPOINTS) if finetune_due else 1
    sched_cfg = SchedulerConfig(predefined=cfg.views, beta=cfg.beta, gamma=cfg.gamma,
                                max_insert_depth=cfg.max_insert_depth,
                                fixed_prefix=min(n_fixed, len(cfg.views)))

    def masks_fn(view):
        cam = viewpoint_to_camera(view, (cfg.image_size, cfg.image_size), cfg.fov_deg)
        buffers = rasterize(mesh, cam)
        return classify_regions(buffers, atlas, cam, latent_factor=cfg.latent_factor)

    records = []
    anchors: list[AnchorSample] = []
    anchor_target = sched_cfg.fixed_prefix if finetune_due else 0
    finetune_summary = None

    for idx, sv in enumerate(view_sequence(masks_fn, sched_cfg, log=log)):
        t0 = time.time()
        counts, p, anchor, cam, buffers = _paint_view(
            mesh, atlas, cfg, sched, backend, token, sv.viewpoint, _view_seed(cfg.seed, idx))
        if not sv.inserted and len(anchors) < anchor_target:
            anchors.append(anchor)
        images.save_png(render_textured(mesh, atlas, cam, cfg.bg_color, buffers),
                        out / "views" / f"view_{idx:03d}.png")
        records.append({
            "index": idx,
            "viewpoint": [sv.viewpoint.azimuth, sv.viewpoint.elevation, sv.viewpoint.radius],
            "inserted": sv.inserted,
            "depth_limited": sv.depth_limited,
            "p": None if np.isnan(sv.p) else float(sv.p),
            "p_at_paint": float(p),
            "regions": counts,
            "seconds": time.time() - t0,
        })

        if finetune_due and len(anchors) == anchor_target:
            finetune_due = False
            trainable = backend.inner if isinstance(backend, ClampedDenoiser) else backend
            ft_cfg = FinetuneConfig(batch=anchors, lam=cfg.lam, steps=cfg.finetune_steps,
                                    lr=cfg.finetune_lr, seed=_view_seed(cfg.seed, 10_000))
            _, train_log = finetune_loop(trainable, anchors, ft_cfg, sched)
            write_training_log(train_log, out / "finetune_log.csv", out / "finetune_summary.json")
            finetune_summary = train_log.summary()

    if anchors:
        payload = {"count": np.array(len(anchors))}
        for i, a in enumerate(anchors):
            payload[f"z0_{i}"] = a.z0
            payload[f"depth_{i}"] = a.cond.depth
            payload[f"token_{i}"] = np.array(a.cond.prompt_token)
        np.savez(out / "anchors.npz", **payload)

    stats = coverage_stats(atlas, mesh)
    uncovered = []
    if stats["painted_texel_fraction"] < 0.99:
        owner, _ = texel_faces(mesh, atlas.size)
        bad = np.unique(owner[(owner >= 0) & ~atlas.painted])
        uncovered = [int(f) for f in bad[:20]]
        log.warning("coverage %.1f%% below 99%%; first uncovered faces: %s",
                    100 * stats["painted_texel_fraction"], uncovered)

    score = eval_consistency(mesh, atlas, cfg.eval_cameras, cfg.eval_elevations,
                             image_size=cfg.image_size, bg=cfg.bg_color)

    images.save_png(atlas.texels * atlas.painted[:, :, None]
                    + np.asarray(atlas.sentinel) * ~atlas.painted[:, :, None],
                    out / "atlas.png")
    save_obj(mesh, out / "mesh.obj", mtl_name="mesh.mtl")
    with open(out / "mesh.mtl", "w", encoding="utf-8") as fh:
        fh.write("newmtl textailor_material\nKa 1.0 1.0 1.0\nKd 1.0 1.0 1.0\nmap_Kd atlas.png\n")

    report = {
        "schema": "textailor-report/1",
        "config": cfg.to_json_dict(),
        "views": records,
        "consistency_score": float(score),
        "coverage": stats,
        "uncovered_faces": uncovered,
        "finetune": finetune_summary,
        "versions": {"textailor": textailor.__version__, "numpy": np.__version__},
        "total_seconds": time.time() - t_start,
    }
    with open(out / "report.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)

    return RunResult(report=report, atlas=atlas, out_dir=out, denoiser=backend)


def dry_run_schedule(cfg: RunConfig) -> list[dict]:
    """Walk the view schedule marking visibility only; no diffusion, no colors.

    Painting is simulated by projecting a constant image, which flips the
    same painted flags and cosine caches the real run would flip.
    """
    mesh = load_mesh(cfg.mesh_path)
    atlas = TextureAtlas(size=cfg.atlas_size)
    res = (cfg.image_size, cfg.image_size)
    sched_cfg = SchedulerConfig(predefined=cfg.views, beta=cfg.beta, gamma=cfg.gamma,
                                max_insert_depth=cfg.max_insert_depth, fixed_prefix=1)

    def masks_fn(view):
        cam = viewpoint_to_camera(view, res, cfg.fov_deg)
        buffers = rasterize(mesh, cam)
        return classify_regions(buffers, atlas, cam, latent_factor=cfg.latent_factor)

    records = []
    blank = np.ones(res[::-1] + (3,))
    for sv in view_sequence(masks_fn, sched_cfg, log=log):
        cam = viewpoint_to_camera(sv.viewpoint, res, cfg.fov_deg)
        buffers = rasterize(mesh, cam)
        masks = classify_regions(buffers, atlas, cam, latent_factor=cfg.latent_factor)
        project(blank, buffers, masks, cam, atlas)
        records.append({
            "viewpoint": [sv.viewpoint.azimuth, sv.viewpoint.elevation, sv.viewpoint.radius],
            "inserted": sv.inserted,
            "depth_limited": sv.depth_limited,
            "p": None if np.isnan(sv.p) else float(sv.p),
        })
    return records


def _patch_descriptor(image: np.ndarray, foreground: np.ndarray, grid: int = 8):
    """Per-patch mean color over foreground pixels; NaN for empty patches."""
    h, w = foreground.shape
    ph, pw = h // grid, w // grid
    img = image[:grid * ph, :grid * pw].reshape(grid, ph, grid, pw, 3)
    fg = foreground[:grid * ph, :grid * pw].reshape(grid, ph, grid, pw)
    weight = fg.sum(axis=(1, 3)).astype(np.float64)
    sums = (img * fg[:, :, :, :, None]).sum(axis=(1, 3))
    with np.errstate(invalid="ignore", divide="ignore"):
        means = sums / weight[:, :, None]
    return means, weight > 0


def eval_consistency(mesh: Mesh, atlas: TextureAtlas, n_per_hemisphere: int = 25,
                     elevations: tuple = (30.0, -30.0), radius: float = 1.5,
                     image_size: int = 128, bg=(0.2, 0.2, 0.2), fov: float = 45.0) -> float:
    """Mean pairwise descriptor distance over a two-ring camera sweep.

    Cameras sit at equal azimuth spacing on an upper and a lower ring, all
    aimed at the origin.  Each render is reduced to an 8x8 grid of
    foreground patch-mean colors; the score is the mean L2 distance between
    descriptors over all unordered camera pairs, scaled by 1/sqrt(3) into
    [0, 1].  Background pixels are excluded throughout.
    """
    views = [Viewpoint(360.0 * k / n_per_hemisphere, psi, radius)
             for psi in elevations for k in range(n_per_hemisphere)]
    descriptors = []
    for v in views:
        cam = viewpoint_to_camera(v, (image_size, image_size), fov)
        buffers = rasterize(mesh, cam)
        img = render_textured(mesh, atlas, cam, bg, buffers)
        descriptors.append(_patch_descriptor(img, buffers.foreground))

    dists = []
    for i in range(len(descriptors)):
        mi, vi = descriptors[i]
        for j in range(i + 1, len(descriptors)):
            mj, vj = descriptors[j]
            both = vi & vj
            if not both.any():
                continue
            d = np.linalg.norm(mi[both] - mj[both], axis=-1)
            dists.append(d.mean() / np.sqrt(3.0))
    return float(np.mean(dists)) if dists else 0.0

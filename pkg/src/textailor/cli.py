"""Command-line front end: run, render, eval, finetune, schedule."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from textailor import images
from textailor.atlas import TextureAtlas
from textailor.denoisers import Conditioning, ToyDenoiser, prompt_to_token
from textailor.finetune import AnchorSample, FinetuneConfig, finetune_loop, write_training_log
from textailor.geometry import Viewpoint, load_mesh, rasterize, render_textured, viewpoint_to_camera
from textailor.pipeline import (RunConfig, dry_run_schedule, eval_consistency,
                                run_texturing)
from textailor.schedule import make_schedule

__all__ = ["cli_entry", "main"]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="textailor",
                                     description="Text-to-texture synthesis at desk scale")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--mesh", help="input OBJ path")
    common.add_argument("--config", help="JSON run config (flags override it)")
    common.add_argument("--seed", type=int, help="master RNG seed")
    common.add_argument("--out", help="output directory")

    run = sub.add_parser("run", parents=[common], help="full texturing pipeline")
    run.add_argument("--prompt", help="texture description")
    run.add_argument("--backend", choices=["analytic", "toy", "remote"])
    run.add_argument("--endpoint", help="denoise service URL for the remote backend")
    run.add_argument("--resample", type=int, dest="resample_r", metavar="R",
                     help="resampling repetitions per timestep")
    run.add_argument("--steps", type=int, dest="ddim_steps", metavar="S",
                     help="DDIM step count")
    run.add_argument("--lambda", type=float, dest="lam", help="preservation loss weight")
    run.add_argument("--beta", type=float, help="view insertion threshold")
    run.add_argument("--gamma", type=float, help="view interpolation parameter")
    run.add_argument("--finetune", action="store_true", dest="finetune_enabled",
                     default=None, help="fine-tune the toy denoiser after the anchors")
    run.add_argument("--toy-params", dest="toy_params_path", help="toy denoiser checkpoint")

    render = sub.add_parser("render", parents=[common], help="render an atlas to view images")
    render.add_argument("--atlas", required=True, help="atlas PNG to render with")
    render.add_argument("--view", action="append", metavar="THETA,PSI,RHO",
                        help="viewpoint to render (repeatable); default is an azimuth ring")
    render.add_argument("--size", type=int, default=128, help="image resolution")

    ev = sub.add_parser("eval", parents=[common], help="view-consistency score for a run")
    ev.add_argument("--atlas", help="atlas PNG (defaults to <out>/atlas.png)")
    ev.add_argument("--cameras", type=int, default=25, help="cameras per hemisphere")

    ft = sub.add_parser("finetune", parents=[common], help="fine-tune on saved anchor latents")
    ft.add_argument("--anchors", required=True, help="anchors .npz produced by a run")
    ft.add_argument("--toy-params", dest="toy_params_path", help="toy checkpoint to start from")
    ft.add_argument("--lambda", type=float, dest="lam")
    ft.add_argument("--steps", type=int, dest="finetune_steps")
    ft.add_argument("--lr", type=float, dest="finetune_lr")

    sched = sub.add_parser("schedule", parents=[common],
                           help="dry-run the view scheduler, printing p values")
    sched.add_argument("--beta", type=float)
    sched.add_argument("--gamma", type=float)

    return parser


def _load_config(args, require_mesh: bool = True) -> RunConfig:
    base: dict = {}
    if getattr(args, "config", None):
        with open(args.config, "r", encoding="utf-8") as fh:
            base = json.load(fh)
        if base.get("schema", "textailor-run/1") != "textailor-run/1":
            raise ValueError(f"unsupported config schema {base.get('schema')!r}")
        base.pop("schema", None)
    overrides = {
        "mesh_path": getattr(args, "mesh", None),
        "out_dir": getattr(args, "out", None),
        "seed": getattr(args, "seed", None),
        "prompt": getattr(args, "prompt", None),
        "backend": getattr(args, "backend", None),
        "endpoint": getattr(args, "endpoint", None),
        "resample_r": getattr(args, "resample_r", None),
        "ddim_steps": getattr(args, "ddim_steps", None),
        "lam": getattr(args, "lam", None),
        "beta": getattr(args, "beta", None),
        "gamma": getattr(args, "gamma", None),
        "finetune_enabled": getattr(args, "finetune_enabled", None),
        "toy_params_path": getattr(args, "toy_params_path", None),
    }
    base.update({k: v for k, v in overrides.items() if v is not None})
    base.setdefault("out_dir", "textailor_out")
    if require_mesh and not base.get("mesh_path"):
        raise ValueError("a mesh is required (--mesh or config mesh_path)")
    base.setdefault("mesh_path", "")
    overrides2 = {"finetune_steps": getattr(args, "finetune_steps", None),
                  "finetune_lr": getattr(args, "finetune_lr", None)}
    base.update({k: v for k, v in overrides2.items() if v is not None})
    return RunConfig.from_json_dict({**base, "schema": "textailor-run/1"})


def _cmd_run(args) -> int:
    cfg = _load_config(args)
    result = run_texturing(cfg)
    print(f"textured {cfg.mesh_path} -> {result.out_dir}")
    print(f"consistency score: {result.report['consistency_score']:.6f}")
    print(f"painted texels: {100 * result.report['coverage']['painted_texel_fraction']:.1f}%")
    return 0


def _parse_view(spec: str) -> Viewpoint:
    theta, psi, rho = (float(x) for x in spec.split(","))
    return Viewpoint(theta, psi, rho)


def _atlas_from_png(path: str | Path) -> TextureAtlas:
    tex = images.load_png(path)
    atlas = TextureAtlas(size=tex.shape[0])
    atlas.texels = tex
    sentinel = np.asarray(atlas.sentinel)
    atlas.painted = ~np.all(np.abs(tex - sentinel) < 1e-6, axis=-1)
    atlas.best_cos = atlas.painted.astype(np.float64)
    return atlas


def _cmd_render(args) -> int:
    cfg = _load_config(args)
    mesh = load_mesh(cfg.mesh_path)
    atlas = _atlas_from_png(args.atlas)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    specs = ([_parse_view(s) for s in args.view] if args.view
             else [Viewpoint(theta, 15.0, 1.5) for theta in range(0, 360, 45)])
    for i, view in enumerate(specs):
        cam = viewpoint_to_camera(view, (args.size, args.size), cfg.fov_deg)
        images.save_png(render_textured(mesh, atlas, cam, cfg.bg_color), out / f"render_{i:03d}.png")
    print(f"wrote {len(specs)} renders to {out}")
    return 0


def _cmd_eval(args) -> int:
    cfg = _load_config(args)
    atlas_path = args.atlas or str(Path(cfg.out_dir) / "atlas.png")
    mesh = load_mesh(cfg.mesh_path)
    atlas = _atlas_from_png(atlas_path)
    score = eval_consistency(mesh, atlas, args.cameras, cfg.eval_elevations,
                             image_size=cfg.image_size, bg=cfg.bg_color, fov=cfg.fov_deg)
    print(f"{score:.6f}")
    return 0


def _cmd_finetune(args) -> int:
    cfg = _load_config(args, require_mesh=False)
    data = np.load(args.anchors)
    n = int(data["count"])
    toy = (ToyDenoiser.load(cfg.toy_params_path) if cfg.toy_params_path
           else ToyDenoiser(seed=cfg.seed))
    anchors = [AnchorSample(z0=data[f"z0_{i}"],
                            cond=Conditioning(prompt_token=int(data[f"token_{i}"]),
                                              depth=data[f"depth_{i}"]))
               for i in range(n)]
    sched = make_schedule(cfg.schedule_T, cfg.schedule_kind, steps=cfg.ddim_steps)
    ft = FinetuneConfig(batch=anchors, lam=cfg.lam, steps=cfg.finetune_steps,
                        lr=cfg.finetune_lr, seed=cfg.seed)
    _, train_log = finetune_loop(toy, anchors, ft, sched)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_training_log(train_log, out / "finetune_log.csv", out / "finetune_summary.json")
    toy.save(out / "toy_params.npz")
    summary = train_log.summary()
    print(f"fine-tuned {ft.steps} steps: L_Final {summary['initial_loss_final']:.4f}"
          f" -> {summary['final_loss_final']:.4f}")
    return 0


def _cmd_schedule(args) -> int:
    cfg = _load_config(args)
    records = dry_run_schedule(cfg)
    print(f"{'view':>24}  {'inserted':>8}  {'p':>8}")
    for rec in records:
        theta, psi, rho = rec["viewpoint"]
        p = "-" if rec["p"] is None else f"{rec['p']:.4f}"
        flag = "yes" if rec["inserted"] else ""
        warn = " (depth-limited)" if rec["depth_limited"] else ""
        print(f"({theta:7.2f},{psi:7.2f},{rho:5.2f})  {flag:>8}  {p:>8}{warn}")
    return 0


def cli_entry(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    handlers = {
        "run": _cmd_run,
        "render": _cmd_render,
        "eval": _cmd_eval,
        "finetune": _cmd_finetune,
        "schedule": _cmd_schedule,
    }
    try:
        return handlers[args.command](args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_entry())

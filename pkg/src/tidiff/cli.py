"""Command-line interface tying the pipeline together.

Subcommands: preprocess, toy-data, pretrain-denoiser, train-embedding,
generate, compose, interpolate, inpaint, fid, sweep-inference,
sweep-embedding, train-classifier, report.

Every command resolves its configuration (defaults < config file < flags),
writes the resolved copy plus its hash into the output directory, and exits
nonzero on any pipeline error.  ``TIDIFF_DATA_ROOT`` anchors relative data
paths.
"""
from __future__ import annotations

import functools
import json
import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click
import numpy as np

from . import config as cfgmod
from .classifier import ClassifierConfig, MixSpec, build_mix, train_classifier
from .composition import build_guidance, interpolation_sweep, parse_prompt
from .datasets import (
    DatasetManifest,
    SliceRecord,
    ToyDataConfig,
    chexpert_preprocess,
    pcam_preprocess,
    picai_extract,
    split_manifest,
    toy_generate,
)
from .datasets.picai import VolumeCase
from .errors import TidiffError
from .evaluation import ToyFeatureExtractor, fid as compute_fid
from .images import load_image, save_image, save_raw, to_model_space, to_unit_range
from .inpainting import InpaintMask, inpaint
from .inversion import (
    EmbeddingRegistry,
    TIConfig,
    load_embedding,
    save_embedding,
    train_embedding,
)
from .pretrain import PretrainConfig, load_denoiser, pretrain_denoiser, save_denoiser
from .reporting import (
    auc_summary_rows,
    build_report,
    plot_metric_curve,
    save_image_grid,
    write_csv,
)
from .sampler import sample_many
from .schedule import build_schedule
from .utils import stable_hash

DATA_ROOT_ENV = "TIDIFF_DATA_ROOT"


def _friendly_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (TidiffError, ValueError, FileNotFoundError, OSError) as err:
            raise click.ClickException(str(err)) from err

    return wrapper


def _data_path(path: str) -> Path:
    p = Path(path)
    root = os.environ.get(DATA_ROOT_ENV)
    if not p.is_absolute() and root and (Path(root) / p).exists():
        return Path(root) / p
    return p


def _parse_int_list(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()]


def _parse_float_list(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def _parse_seeds(text: str) -> list[int]:
    """Seed spec: comma list and/or inclusive ranges, e.g. '0..49' or '1,5,7'."""
    seeds: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if ".." in part:
            lo, hi = part.split("..", 1)
            seeds.extend(range(int(lo), int(hi) + 1))
        else:
            seeds.append(int(part))
    if not seeds:
        raise ValueError(f"no seeds in spec {text!r}")
    return seeds


def _parse_kv_counts(text: str) -> dict[str, int]:
    out = {}
    for part in text.split(","):
        key, value = part.split("=", 1)
        out[key.strip()] = int(value)
    return out


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.option("--config", "config_file", type=click.Path(exists=True), default=None,
              help="JSON or key=value config file layered over the defaults.")
@click.option("--paper-scale", is_flag=True,
              help="Restore full-scale step counts (50k inversion steps, 6250 classifier batches).")
@click.pass_context
def main(ctx, config_file, paper_scale):
    """Concept-embedding diffusion toolkit (toy backend included)."""
    ctx.obj = {"config_file": config_file, "paper_scale": paper_scale}


def _resolved(ctx, overrides: dict | None = None) -> dict:
    return cfgmod.resolve_config(
        config_file=ctx.obj.get("config_file"),
        overrides=overrides,
        paper_scale=ctx.obj.get("paper_scale", False),
    )


# ---------------------------------------------------------------------------
# data commands

@main.command("toy-data")
@click.option("--out", required=True, type=click.Path())
@click.option("--n-per-class", default=100, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--splits", default=None,
              help="Per-class split sizes, e.g. 'train=100,val=100,test=100'.")
@click.pass_context
@_friendly_errors
def cmd_toy_data(ctx, out, n_per_class, seed, splits):
    """Render the synthetic toy dataset (and optionally assign splits)."""
    cfg = _resolved(ctx, {"toy_data": {"n_per_class": n_per_class, "seed": seed}})
    out_dir = Path(out)
    manifest = toy_generate(n_per_class, seed, out_dir)
    if splits:
        manifest = split_manifest(manifest, _parse_kv_counts(splits), seed)
        manifest.write(out_dir / "manifest.jsonl")
    cfgmod.write_run_config(out_dir, cfg)
    click.echo(f"wrote {len(manifest.records)} records to {out_dir / 'manifest.jsonl'}")


@main.command("preprocess")
@click.option("--kind", type=click.Choice(["picai", "chexpert", "pcam"]), required=True)
@click.option("--input", "input_dir", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.pass_context
@_friendly_errors
def cmd_preprocess(ctx, kind, input_dir, out):
    """Run a preprocessing pipeline over a source directory.

    picai expects .npz case files (t2w, adc, dwi, spacing, label, and the
    relevant segmentation); chexpert/pcam expect <label>/<name>.png trees.
    """
    cfg = _resolved(ctx, {"preprocess": {"kind": kind}})
    input_dir, out_dir = _data_path(input_dir), Path(out)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    records = []
    cfg_hash = cfgmod.config_hash(cfg)

    if kind == "picai":
        for npz_path in sorted(input_dir.glob("*.npz")):
            case = _load_volume_case(npz_path)
            packed = picai_extract(case)
            rel = f"images/{npz_path.stem}.png"
            save_image(packed.astype(np.float32) / 255.0, out_dir / rel)
            records.append(SliceRecord(
                id=npz_path.stem, path=rel,
                label="diseased" if case.label == "positive" else "healthy",
                dataset="picai", config_hash=cfg_hash,
                extra={"modality_packing": "R=t2w,G=adc,B=dwi"},
            ))
    else:
        process = chexpert_preprocess if kind == "chexpert" else pcam_preprocess
        for img_path in sorted(input_dir.glob("*/*.png")):
            arr = load_image(img_path)
            source = (arr[0] if kind == "chexpert" else arr.transpose(1, 2, 0)) * 255.0
            result = process(source.astype(np.float32))
            rel = f"images/{img_path.parent.name}_{img_path.stem}.png"
            if result.ndim == 2:
                save_image(result[None] / 255.0, out_dir / rel)
            else:
                save_image(result.transpose(2, 0, 1) / 255.0, out_dir / rel)
            records.append(SliceRecord(
                id=f"{img_path.parent.name}_{img_path.stem}", path=rel,
                label=img_path.parent.name, dataset=kind, config_hash=cfg_hash,
            ))

    if not records:
        raise ValueError(f"no source files found under {input_dir}")
    manifest = DatasetManifest(records=records, dataset=kind, config_hash=cfg_hash, root=out_dir)
    manifest.write(out_dir / "manifest.jsonl")
    cfgmod.write_run_config(out_dir, cfg)
    click.echo(f"preprocessed {len(records)} cases to {out_dir}")


def _load_volume_case(path: Path) -> VolumeCase:
    with np.load(path, allow_pickle=False) as z:
        modalities = {m: z[m] for m in ("t2w", "adc", "dwi") if m in z}
        return VolumeCase(
            modalities=modalities,
            spacing=tuple(float(s) for s in z["spacing"]),
            label=str(z["label"]),
            prostate_seg=z["prostate_seg"] if "prostate_seg" in z else None,
            tumor_seg=z["tumor_seg"] if "tumor_seg" in z else None,
            case_id=path.stem,
        )


# ---------------------------------------------------------------------------
# training commands

@main.command("pretrain-denoiser")
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--steps", default=None, type=int)
@click.option("--batch-size", default=None, type=int)
@click.option("--lr", default=None, type=float)
@click.option("--seed", default=None, type=int)
@click.option("--split", default=None, help="Train on one split only (default: all records).")
@click.pass_context
@_friendly_errors
def cmd_pretrain_denoiser(ctx, manifest_path, out, steps, batch_size, lr, seed, split):
    """Train the built-in toy denoiser on a toy corpus."""
    overrides = {"pretrain": {k: v for k, v in {
        "steps": steps, "batch_size": batch_size, "learning_rate": lr, "seed": seed,
    }.items() if v is not None}}
    cfg = _resolved(ctx, overrides)
    p = cfg["pretrain"]
    pre_cfg = PretrainConfig(
        steps=p["steps"], batch_size=p["batch_size"], learning_rate=p["learning_rate"],
        seed=p["seed"], hidden=p["hidden"], cond_dim=p["cond_dim"],
        sigma_min=cfg["schedule"]["sigma_min"], sigma_max=cfg["schedule"]["sigma_max"],
        rho=cfg["schedule"]["rho"],
    )
    manifest = DatasetManifest.read(_data_path(manifest_path))
    denoiser, conditioner, log = pretrain_denoiser(manifest, pre_cfg, split=split, progress=True)
    out_path = Path(out)
    save_denoiser(out_path, denoiser, conditioner, log)
    cfgmod.write_run_config(out_path.parent, cfg)
    click.echo(f"saved toy denoiser to {out_path} (final loss EMA {log['final_loss_ema']:.4f})")


@main.command("train-embedding")
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--name", required=True, help="Concept token, e.g. '<healthy-toy>'.")
@click.option("--vectors", default=None, type=int, help="Vectors per token.")
@click.option("--steps", default=None, type=int)
@click.option("--lr", default=None, type=float)
@click.option("--seed", default=None, type=int)
@click.option("--denoiser", "denoiser_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--split", default="train", show_default=True)
@click.option("--label", default=None, help="Train only on records with this label.")
@click.option("--max-cases", default=None, type=int, help="Cap the number of training images.")
@click.option("--init", "init_source", default="random-normal", show_default=True)
@click.option("--checkpoint-dir", default=None, type=click.Path())
@click.pass_context
@_friendly_errors
def cmd_train_embedding(ctx, manifest_path, name, vectors, steps, lr, seed,
                        denoiser_path, out, split, label, max_cases, init_source,
                        checkpoint_dir):
    """Optimize a concept embedding against a frozen denoiser."""
    overrides = {"ti": {k: v for k, v in {
        "n_vectors": vectors, "steps": steps, "learning_rate": lr, "seed": seed,
    }.items() if v is not None}}
    cfg = _resolved(ctx, overrides)
    t = cfg["ti"]
    ti_cfg = TIConfig(
        learning_rate=t["learning_rate"], steps=t["steps"], batch_size=t["batch_size"],
        n_vectors=t.get("n_vectors", 64), seed=t["seed"],
    )
    manifest = DatasetManifest.read(_data_path(manifest_path))
    records = manifest.subset(split=split if split != "all" else None, label=label)
    if max_cases is not None:
        records = records[:max_cases]
    if not records:
        raise ValueError(f"no records for split={split!r} label={label!r}")
    images = [to_model_space(load_image(manifest.resolve_path(r))) for r in records]
    denoiser, conditioner = load_denoiser(_data_path(denoiser_path))
    schedule = build_schedule(
        cfg["sampler"]["steps"], cfg["schedule"]["sigma_min"],
        cfg["schedule"]["sigma_max"], cfg["schedule"]["rho"],
    )
    embedding = train_embedding(
        images, ti_cfg, denoiser, conditioner, name=name, schedule=schedule,
        init_source=init_source, checkpoint_dir=checkpoint_dir,
    )
    embedding.metadata["training_records"] = [r.id for r in records]
    out_path = Path(out)
    save_embedding(embedding, out_path)
    cfgmod.write_run_config(out_path.parent, cfg)
    click.echo(
        f"trained {name} on {len(images)} images "
        f"(final loss EMA {embedding.metadata['final_loss_ema']:.4f}) -> {out_path}"
    )


# ---------------------------------------------------------------------------
# generation commands

def _load_registry(embeddings_dir) -> EmbeddingRegistry:
    registry = EmbeddingRegistry.from_dir(_data_path(embeddings_dir))
    if not registry.names():
        raise ValueError(f"no embeddings (*.tiemb) found in {embeddings_dir}")
    return registry


def _generate(denoiser, conditioner, registry, prompt_text, cfg, seeds, out_dir,
              cfg_scale=None, raw=False, batch_size=16):
    prompt = parse_prompt(prompt_text, registry)
    guidance = build_guidance(prompt, registry, conditioner,
                              default_cfg_scale=cfg["sampler"]["cfg_scale"])
    if cfg_scale is not None:
        guidance = build_guidance(prompt, registry, conditioner, default_cfg_scale=cfg_scale)
    schedule = build_schedule(
        cfg["sampler"]["steps"], cfg["schedule"]["sigma_min"],
        cfg["schedule"]["sigma_max"], cfg["schedule"]["rho"],
    )
    shape = (denoiser.channels, 64, 64)
    images = []
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    for i in range(0, len(seeds), batch_size):
        chunk = seeds[i : i + batch_size]
        latents = sample_many(denoiser, schedule, guidance, chunk, shape)
        for seed, latent in zip(chunk, latents):
            img = to_unit_range(latent)
            images.append(img)
            save_image(img, out_dir / "images" / f"seed{seed:05d}.png")
            if raw:
                save_raw(latent, out_dir / "images" / f"seed{seed:05d}.npy")
    return prompt, images


@main.command("generate")
@click.option("--denoiser", "denoiser_path", required=True, type=click.Path(exists=True))
@click.option("--embeddings-dir", required=True, type=click.Path(exists=True))
@click.option("--prompt", required=True, help="Concept prompt, e.g. '<healthy-toy>'.")
@click.option("--steps", default=None, type=int)
@click.option("--cfg-scale", default=None, type=float)
@click.option("--seeds", default="0..15", show_default=True)
@click.option("--raw", is_flag=True, help="Also dump float32 .npy latents.")
@click.option("--out", required=True, type=click.Path())
@click.pass_context
@_friendly_errors
def cmd_generate(ctx, denoiser_path, embeddings_dir, prompt, steps, cfg_scale, seeds, raw, out):
    """Sample images for a prompt across a list of seeds."""
    overrides = {"sampler": {k: v for k, v in
                             {"steps": steps, "cfg_scale": cfg_scale}.items() if v is not None}}
    cfg = _resolved(ctx, overrides)
    denoiser, conditioner = load_denoiser(_data_path(denoiser_path))
    registry = _load_registry(embeddings_dir)
    seed_list = _parse_seeds(seeds)
    out_dir = Path(out)
    _, images = _generate(denoiser, conditioner, registry, prompt, cfg, seed_list, out_dir, raw=raw)
    save_image_grid(images[:64], out_dir / "grid.png", ncols=8, title=prompt)
    cfgmod.write_run_config(out_dir, cfg)
    click.echo(f"wrote {len(images)} samples to {out_dir}")


@main.command("compose")
@click.option("--denoiser", "denoiser_path", required=True, type=click.Path(exists=True))
@click.option("--embeddings-dir", required=True, type=click.Path(exists=True))
@click.option("--prompt", required=True,
              help="Weighted AND prompt, e.g. '0.5*<a> AND 0.5*<b>'.")
@click.option("--seed", "seeds", default="0", show_default=True,
              help="Seed or seed spec.")
@click.option("--steps", default=None, type=int)
@click.option("--cfg-scale", default=None, type=float,
              help="Override the cfg scale (default: 2, or 3 for >= 3 terms).")
@click.option("--out", required=True, type=click.Path())
@click.pass_context
@_friendly_errors
def cmd_compose(ctx, denoiser_path, embeddings_dir, prompt, seeds, steps, cfg_scale, out):
    """Sample a weighted multi-concept composition."""
    overrides = {"sampler": {k: v for k, v in {"steps": steps}.items() if v is not None}}
    cfg = _resolved(ctx, overrides)
    denoiser, conditioner = load_denoiser(_data_path(denoiser_path))
    registry = _load_registry(embeddings_dir)
    seed_list = _parse_seeds(seeds)
    out_dir = Path(out)
    parsed, images = _generate(denoiser, conditioner, registry, prompt, cfg, seed_list,
                               out_dir, cfg_scale=cfg_scale)
    save_image_grid(images[:64], out_dir / "grid.png", ncols=min(8, len(images)), title=prompt)
    cfgmod.write_run_config(out_dir, cfg)
    click.echo(f"composed {len(parsed.terms)} concepts over {len(images)} seeds -> {out_dir}")


@main.command("interpolate")
@click.option("--denoiser", "denoiser_path", required=True, type=click.Path(exists=True))
@click.option("--embeddings-dir", required=True, type=click.Path(exists=True))
@click.option("--from", "from_concept", required=True, help="Healthy-side concept name.")
@click.option("--to", "to_concept", required=True, help="Diseased-side concept name.")
@click.option("--alphas", default="0,0.25,0.5,0.75,1.0", show_default=True)
@click.option("--seeds", default="0..3", show_default=True)
@click.option("--steps", default=None, type=int)
@click.option("--out", required=True, type=click.Path())
@click.pass_context
@_friendly_errors
def cmd_interpolate(ctx, denoiser_path, embeddings_dir, from_concept, to_concept,
                    alphas, seeds, steps, out):
    """Sweep the blend weight between two concepts (same seed per row)."""
    overrides = {"sampler": {k: v for k, v in {"steps": steps}.items() if v is not None}}
    cfg = _resolved(ctx, overrides)
    denoiser, conditioner = load_denoiser(_data_path(denoiser_path))
    registry = _load_registry(embeddings_dir)
    alpha_list = _parse_float_list(alphas)
    seed_list = _parse_seeds(seeds)
    schedule = build_schedule(
        cfg["sampler"]["steps"], cfg["schedule"]["sigma_min"],
        cfg["schedule"]["sigma_max"], cfg["schedule"]["rho"],
    )
    prompts = interpolation_sweep(from_concept, to_concept, alpha_list)
    out_dir = Path(out)
    grid_images = []
    for seed in seed_list:
        for alpha, prompt in zip(alpha_list, prompts):
            guidance = build_guidance(prompt, registry, conditioner,
                                      default_cfg_scale=cfg["sampler"]["cfg_scale"])
            latent = sample_many(denoiser, schedule, guidance, [seed],
                                 (denoiser.channels, 64, 64))[0]
            img = to_unit_range(latent)
            grid_images.append(img)
            save_image(img, out_dir / "images" / f"seed{seed:05d}_alpha{alpha:.2f}.png")
    save_image_grid(
        grid_images, out_dir / "grid.png", ncols=len(alpha_list),
        col_labels=[f"{a:.0%} diseased" for a in alpha_list],
        row_labels=[f"seed {s}" for s in seed_list],
    )
    cfgmod.write_run_config(out_dir, cfg)
    click.echo(f"interpolated {from_concept} -> {to_concept} over {len(seed_list)} seeds -> {out_dir}")


@main.command("inpaint")
@click.option("--denoiser", "denoiser_path", required=True, type=click.Path(exists=True))
@click.option("--embeddings-dir", required=True, type=click.Path(exists=True))
@click.option("--reference", required=True, type=click.Path(exists=True))
@click.option("--mask", "mask_path", required=True, type=click.Path(exists=True),
              help="8-bit grayscale mask; >= 128 marks the region to regenerate.")
@click.option("--concept", required=True, help="Concept prompt for the masked region.")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--steps", default=None, type=int)
@click.option("--cfg-scale", default=None, type=float)
@click.option("--out", required=True, type=click.Path())
@click.pass_context
@_friendly_errors
def cmd_inpaint(ctx, denoiser_path, embeddings_dir, reference, mask_path, concept,
                seed, steps, cfg_scale, out):
    """Regenerate the masked part of a reference image under a concept."""
    overrides = {"sampler": {k: v for k, v in
                             {"steps": steps, "cfg_scale": cfg_scale}.items() if v is not None}}
    cfg = _resolved(ctx, overrides)
    denoiser, conditioner = load_denoiser(_data_path(denoiser_path))
    registry = _load_registry(embeddings_dir)
    ref = to_model_space(load_image(_data_path(reference)))
    from PIL import Image

    mask_u8 = np.asarray(Image.open(_data_path(mask_path)).convert("L"))
    ipmask = InpaintMask.from_array(mask_u8, ref)
    prompt = parse_prompt(concept, registry)
    guidance = build_guidance(prompt, registry, conditioner,
                              default_cfg_scale=cfg["sampler"]["cfg_scale"])
    schedule = build_schedule(
        cfg["sampler"]["steps"], cfg["schedule"]["sigma_min"],
        cfg["schedule"]["sigma_max"], cfg["schedule"]["rho"],
    )
    result = inpaint(denoiser, schedule, guidance, ipmask, seed)
    out_dir = Path(out)
    img = to_unit_range(result)
    save_image(img, out_dir / "inpainted.png")
    save_image_grid(
        [to_unit_range(ref), ipmask.mask.float().numpy()[None], img],
        out_dir / "grid.png", ncols=3, col_labels=["reference", "mask", "inpainted"],
    )
    cfgmod.write_run_config(out_dir, cfg)
    click.echo(f"inpainted {concept} into {reference} -> {out_dir / 'inpainted.png'}")


# ---------------------------------------------------------------------------
# evaluation commands

@main.command("fid")
@click.option("--real", "real_manifest", required=True, type=click.Path(exists=True))
@click.option("--generated", required=True, type=click.Path(exists=True))
@click.option("--extractor", default="toy", show_default=True)
@click.option("--split", default=None, help="Restrict the real set to one split.")
@click.option("--max-real", default=None, type=int)
@click.option("--channels", default=1, show_default=True)
@click.option("--out", required=True, type=click.Path())
@click.pass_context
@_friendly_errors
def cmd_fid(ctx, real_manifest, generated, extractor, split, max_real, channels, out):
    """Frechet distance between a real manifest and a directory of samples."""
    cfg = _resolved(ctx, {"fid": {"extractor": extractor}})
    if extractor != "toy":
        raise ValueError(f"unknown extractor {extractor!r} (available: toy)")
    ext = ToyFeatureExtractor(channels=channels)
    manifest = DatasetManifest.read(_data_path(real_manifest))
    report = compute_fid(manifest, _data_path(generated), ext,
                         max_real=max_real, real_split=split)
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(json.dumps(report.to_dict(), indent=2))
    cfgmod.write_run_config(out_dir, cfg)
    click.echo(f"FID = {report.value:.3f} "
               f"(n_real={report.n_real}, n_generated={report.n_generated}, "
               f"extractor={report.extractor_id})")


# ---------------------------------------------------------------------------
# sweeps and the study

@main.command("sweep-inference")
@click.option("--denoiser", "denoiser_path", required=True, type=click.Path(exists=True))
@click.option("--embeddings-dir", required=True, type=click.Path(exists=True))
@click.option("--concept", required=True)
@click.option("--real", "real_manifest", required=True, type=click.Path(exists=True))
@click.option("--real-split", default="test", show_default=True)
@click.option("--steps-list", default="25,50,75,100", show_default=True)
@click.option("--cfg-list", default="1,2,3,4,5", show_default=True)
@click.option("--mode", type=click.Choice(["union", "product"]), default="union",
              show_default=True,
              help="union: vary steps at the default cfg and cfg at the default steps.")
@click.option("--n-samples", default=None, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--workers", default=1, show_default=True)
@click.option("--out", required=True, type=click.Path())
@click.pass_context
@_friendly_errors
def cmd_sweep_inference(ctx, denoiser_path, embeddings_dir, concept, real_manifest,
                        real_split, steps_list, cfg_list, mode, n_samples, seed,
                        workers, out):
    """FID over a grid of sampling steps x guidance scales."""
    cfg = _resolved(ctx, {})
    n_samples = n_samples if n_samples is not None else cfg["fid"]["n_samples"]
    steps_values = _parse_int_list(steps_list)
    cfg_values = _parse_float_list(cfg_list)
    if not steps_values or not cfg_values:
        raise ValueError("empty sweep grid")
    default_steps = cfg["sampler"]["steps"]
    default_cfg = cfg["sampler"]["cfg_scale"]
    if mode == "union":
        cells = [(s, default_cfg) for s in steps_values]
        cells += [(default_steps, c) for c in cfg_values if (default_steps, c) not in cells]
    else:
        cells = [(s, c) for s in steps_values for c in cfg_values]

    denoiser, conditioner = load_denoiser(_data_path(denoiser_path))
    registry = _load_registry(embeddings_dir)
    manifest = DatasetManifest.read(_data_path(real_manifest))
    extractor = ToyFeatureExtractor(channels=denoiser.channels)
    out_dir = Path(out)
    seeds = list(range(seed, seed + n_samples))

    def run_cell(cell):
        cell_steps, cell_cfg = cell
        cell_dir = out_dir / f"steps{cell_steps}_cfg{cell_cfg:g}"
        cell_conf = _resolved(ctx, {"sampler": {"steps": cell_steps, "cfg_scale": cell_cfg}})
        _, images = _generate(denoiser, conditioner, registry, concept, cell_conf,
                              seeds, cell_dir)
        report = compute_fid(manifest, images, extractor,
                             max_real=n_samples, real_split=real_split)
        cfgmod.write_run_config(cell_dir, cell_conf)
        return cell_steps, cell_cfg, report.value, images[0]

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        results = list(pool.map(run_cell, cells))

    rows = [(s, c, f"{v:.4f}", n_samples) for s, c, v, _ in results]
    write_csv(out_dir / "fid_table.csv", ["steps", "cfg_scale", "fid", "n_samples"], rows)
    by_steps = [(s, v) for s, c, v, _ in results if c == default_cfg]
    by_cfg = [(c, v) for s, c, v, _ in results if s == default_steps]
    if len(by_steps) > 1:
        plot_metric_curve(out_dir / "fid_vs_steps.png", [s for s, _ in by_steps],
                          {"FID": [v for _, v in by_steps]}, "sampling steps", "FID")
    if len(by_cfg) > 1:
        plot_metric_curve(out_dir / "fid_vs_cfg.png", [c for c, _ in by_cfg],
                          {"FID": [v for _, v in by_cfg]}, "guidance scale", "FID")
    save_image_grid(
        [img for _, _, _, img in results], out_dir / "grid.png", ncols=len(results),
        col_labels=[f"s={s} cfg={c:g}" for s, c, _, _ in results],
        title=f"{concept}, seed {seed}",
    )
    cfgmod.write_run_config(out_dir, cfg)
    click.echo(f"swept {len(cells)} cells -> {out_dir / 'fid_table.csv'}")


@main.command("sweep-embedding")
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--denoiser", "denoiser_path", required=True, type=click.Path(exists=True))
@click.option("--label", default="healthy", show_default=True)
@click.option("--split", default="train", show_default=True)
@click.option("--real-split", default="test", show_default=True)
@click.option("--sizes", default="8,16,32,64", show_default=True)
@click.option("--case-counts", default="5,10,50,100", show_default=True)
@click.option("--ti-steps", default=None, type=int)
@click.option("--n-samples", default=None, type=int)
@click.option("--out", required=True, type=click.Path())
@click.pass_context
@_friendly_errors
def cmd_sweep_embedding(ctx, manifest_path, denoiser_path, label, split, real_split,
                        sizes, case_counts, ti_steps, n_samples, out):
    """Train embeddings over vector sizes and case counts, evaluating FID."""
    overrides = {"ti": {k: v for k, v in {"steps": ti_steps}.items() if v is not None}}
    cfg = _resolved(ctx, overrides)
    n_samples = n_samples if n_samples is not None else cfg["fid"]["n_samples"]
    size_values = _parse_int_list(sizes)
    count_values = _parse_int_list(case_counts)
    if not size_values and not count_values:
        raise ValueError("empty sweep grid")

    manifest = DatasetManifest.read(_data_path(manifest_path))
    denoiser, conditioner = load_denoiser(_data_path(denoiser_path))
    extractor = ToyFeatureExtractor(channels=denoiser.channels)
    records = manifest.subset(split=split, label=label)
    images = [to_model_space(load_image(manifest.resolve_path(r))) for r in records]
    schedule = build_schedule(
        cfg["sampler"]["steps"], cfg["schedule"]["sigma_min"],
        cfg["schedule"]["sigma_max"], cfg["schedule"]["rho"],
    )
    out_dir = Path(out)
    seeds = list(range(n_samples))

    def evaluate(n_vectors: int, n_cases: int, tag: str) -> float:
        ti_cfg = TIConfig(
            learning_rate=cfg["ti"]["learning_rate"], steps=cfg["ti"]["steps"],
            batch_size=cfg["ti"]["batch_size"], n_vectors=n_vectors, seed=cfg["ti"]["seed"],
        )
        emb = train_embedding(images[:n_cases], ti_cfg, denoiser, conditioner,
                              name=f"<sweep-{tag}>", schedule=schedule)
        registry = EmbeddingRegistry([emb])
        cell_dir = out_dir / tag
        _, sample_images = _generate(denoiser, conditioner, registry, emb.name,
                                     cfg, seeds, cell_dir)
        save_embedding(emb, cell_dir / f"{tag}.tiemb")
        report = compute_fid(manifest, sample_images, extractor,
                             max_real=n_samples, real_split=real_split)
        cfgmod.write_run_config(cell_dir, cfg)
        return report.value

    default_vectors = cfg["ti"].get("n_vectors", 64)
    max_cases = len(images)
    if size_values:
        rows = [(n, f"{evaluate(n, max_cases, f'size{n}'):.4f}") for n in size_values]
        write_csv(out_dir / "embedding_size_fid.csv", ["n_vectors", "fid"], rows)
    if count_values:
        rows = [(c, f"{evaluate(default_vectors, c, f'cases{c}'):.4f}") for c in count_values]
        write_csv(out_dir / "case_count_fid.csv", ["n_cases", "fid"], rows)
    cfgmod.write_run_config(out_dir, cfg)
    click.echo(f"embedding sweeps written to {out_dir}")


@main.command("train-classifier")
@click.option("--mix", required=True, help="Total case counts, e.g. 'real=200,synth=2000'.")
@click.option("--real-manifest", required=True, type=click.Path(exists=True))
@click.option("--synth-manifest", default=None, type=click.Path(exists=True))
@click.option("--repeats", default=10, show_default=True)
@click.option("--batches", default=None, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", required=True, type=click.Path())
@click.pass_context
@_friendly_errors
def cmd_train_classifier(ctx, mix, real_manifest, synth_manifest, repeats, batches, seed, out):
    """Train repeated classifiers on a real/synthetic mix and summarize AUC."""
    overrides = {"classifier": {k: v for k, v in
                                {"total_batches": batches}.items() if v is not None}}
    cfg = _resolved(ctx, overrides)
    counts = _parse_kv_counts(mix)
    n_real_total = counts.get("real", 0)
    n_synth_total = counts.get("synth", 0)
    if n_real_total % 2 or n_synth_total % 2:
        raise ValueError("mix counts are totals over two balanced classes; use even numbers")

    real = DatasetManifest.read(_data_path(real_manifest))
    synth = DatasetManifest.read(_data_path(synth_manifest)) if synth_manifest else None
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)

    aucs = []
    for rep in range(repeats):
        rep_seed = seed + rep
        spec = MixSpec(n_real=n_real_total // 2, n_synthetic=n_synth_total // 2,
                       real_manifest=real, synthetic_manifest=synth)
        mix_manifest = build_mix(spec, seed=rep_seed)
        c = cfg["classifier"]
        clf_cfg = ClassifierConfig(
            learning_rate=c["learning_rate"], total_batches=c["total_batches"],
            batch_size=c["batch_size"], eval_every=c["eval_every"], seed=rep_seed,
            backbone=c["backbone"],
        )
        report = train_classifier(mix_manifest, clf_cfg, real, real,
                                  report_path=out_dir / f"repeat{rep:02d}.json")
        aucs.append(report.test_auc)
        click.echo(f"repeat {rep}: test AUC {report.test_auc:.3f} "
                   f"(best val {report.best_val_auc:.3f} @ batch {report.best_batch})")

    mean = float(np.mean(aucs))
    std = float(np.std(aucs, ddof=1)) if len(aucs) > 1 else 0.0
    summary = {
        "mix": {"real": n_real_total, "synthetic": n_synth_total},
        "repeats": repeats,
        "test_auc_mean": mean,
        "test_auc_std": std,
        "test_aucs": aucs,
        "synthetic_seeds": "sequential 0..N-1 at generation time",
    }
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2))
    write_csv(out_dir / "auc_table.csv",
              ["real_cases", "synthetic_cases", "auc_mean", "auc_std", "repeats"],
              auc_summary_rows({f"{n_real_total}+{n_synth_total}": aucs}))
    cfgmod.write_run_config(out_dir, cfg)
    click.echo(f"mix real={n_real_total} synth={n_synth_total}: "
               f"AUC {mean:.3f} +/- {std:.3f} over {repeats} repeats")


@main.command("report")
@click.argument("run_dirs", nargs=-1, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@_friendly_errors
def cmd_report(run_dirs, out):
    """Consolidate completed run directories into one markdown report."""
    digest = build_report(list(run_dirs), out)
    click.echo(f"report hash {digest} -> {Path(out) / 'report.md'}")


if __name__ == "__main__":
    main()

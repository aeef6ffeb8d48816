"""Command-line pipeline driver.

Subcommands: gen-data, metrics, mmds, train, invert, eval, select. Global
flags --config/--seed/--threads/--preset; flag values override config-file
fields. Every command echoes its resolved configuration and seed into its
outputs and writes an artifacts-<command>.json sidecar, so identical inputs
and seeds give byte-identical results.

Exit codes: 0 success, 2 validation error, 3 numerical failure, 4 I/O error.
Heavy imports happen after --threads is applied: thread pools must be pinned
before the first numpy import for deterministic reductions.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

PRESETS = {
    "desk": {
        "gen": {"n_subjects": 20, "grid": "12x6", "bins": 85},
        "train": {
            "latent_dim": 16,
            "epochs": 100,
            "hidden_units": 96,
            "lr_weights": 1e-3,
        },
        "mmds_dim": 16,
    }
}

_CONFIG_KEYS = {"seed", "preset", "metric", "paths", "preprocess", "train", "gen", "mmds_dim"}


def _apply_threads(argv) -> None:
    threads = None
    for i, arg in enumerate(argv):
        if arg == "--threads" and i + 1 < len(argv):
            threads = argv[i + 1]
        elif arg.startswith("--threads="):
            threads = arg.split("=", 1)[1]
    if threads is not None:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(threads)


def _load_config(path):
    from .containers import ValidationError

    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ValidationError(f"malformed config JSON: {e}") from e
    if not isinstance(doc, dict):
        raise ValidationError("config must be a JSON object")
    unknown = set(doc) - _CONFIG_KEYS
    if unknown:
        raise ValidationError(f"unknown config keys: {sorted(unknown)}")
    return doc


def _require_seed(args):
    from .containers import ValidationError

    if args.seed is None:
        raise ValidationError("--seed is required for this command")
    return int(args.seed)


def _write_artifacts(command: str, primary_output, outputs, seed, config_echo) -> None:
    from .reporting import emit_report

    directory = Path(primary_output).parent
    directory.mkdir(parents=True, exist_ok=True)

    def rel(p):
        try:
            return str(Path(p).relative_to(directory))
        except ValueError:
            return str(p)

    emit_report(
        {
            "command": command,
            "outputs": [rel(p) for p in outputs],
            "seed": seed,
            "config": config_echo,
        },
        directory / f"artifacts-{command}.json",
    )


def _train_config(args, config, seed):
    from .training import TrainConfig

    merged = {}
    merged.update(PRESETS.get(args.preset, {}).get("train", {}) if args.preset else {})
    merged.update(config.get("train", {}))
    for field in (
        "latent_dim",
        "epochs",
        "locations_per_step",
        "lr_weights",
        "lr_latents",
        "align_weight",
        "pbc_weight",
        "hidden_units",
        "num_octaves",
        "ref_level_db",
        "holdout_every",
        "holdout_steps",
    ):
        value = getattr(args, field, None)
        if value is not None:
            merged[field] = value
    if getattr(args, "loss_flags", None) is not None:
        merged["loss_flags"] = tuple(f for f in args.loss_flags.split(",") if f)
    if "loss_flags" in merged:
        merged["loss_flags"] = tuple(merged["loss_flags"])
    merged["seed"] = seed
    return TrainConfig(**merged)


def _load_sets(manifest, base_dir, ids):
    from .htf_io import read_htf

    return [read_htf(manifest.resolve(sid, base_dir)) for sid in ids]


# ------------------------------------------------------------------ commands


def cmd_gen_data(args, config):
    from .containers import DatasetManifest, save_manifest
    from .htf_io import write_htf
    from .synthetic import default_bins, default_grid, synth_population

    seed = _require_seed(args)
    gen = dict(PRESETS.get(args.preset, {}).get("gen", {}) if args.preset else {})
    gen.update(config.get("gen", {}))
    n = args.n_subjects if args.n_subjects is not None else gen.get("n_subjects", 20)
    grid_spec = args.grid if args.grid is not None else gen.get("grid", "12x6")
    n_bins = args.bins if args.bins is not None else gen.get("bins", 85)

    n_az, n_el = (int(v) for v in grid_spec.lower().split("x"))
    grid = default_grid(n_az, n_el)
    bins = default_bins(n_bins)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    sets, train_ids, test_ids = synth_population(seed, n, grid, bins)
    subjects = []
    for subject in sets:
        write_htf(subject, out_dir / f"{subject.subject_id}.htf")
        subjects.append((subject.subject_id, f"{subject.subject_id}.htf"))

    manifest = DatasetManifest(
        name=args.name,
        subjects=subjects,
        split={"train": train_ids, "test": test_ids},
    )
    manifest_path = out_dir / "manifest.json"
    save_manifest(manifest, manifest_path)
    outputs = [manifest_path] + [out_dir / p for _, p in subjects]
    _write_artifacts(
        "gen-data",
        manifest_path,
        outputs,
        seed,
        {"n_subjects": n, "grid": grid_spec, "bins": n_bins},
    )
    print(manifest_path)
    return 0


def cmd_metrics(args, config):
    from .containers import load_manifest
    from .metrics import pairwise_matrix, store_matrix

    manifest_path = Path(args.manifest)
    manifest = load_manifest(manifest_path)
    ids = list(manifest.split["train"])
    if args.include_test:
        ids += list(manifest.split["test"])
    sets = _load_sets(manifest, manifest_path.parent, ids)
    metric = args.metric or config.get("metric", "pbc")
    matrix = pairwise_matrix(sets, metric)
    store_matrix(matrix, args.out)
    _write_artifacts(
        "metrics",
        args.out,
        [args.out],
        args.seed,
        {"metric": metric, "subjects": ids, "include_test": bool(args.include_test)},
    )
    print(args.out)
    return 0


def cmd_mmds(args, config):
    from .metrics import load_matrix
    from .mmds import embed, save_embedding

    dim = args.dim if args.dim is not None else config.get(
        "mmds_dim", PRESETS.get(args.preset, {}).get("mmds_dim") if args.preset else None
    )
    if dim is None:
        from .containers import ValidationError

        raise ValidationError("--dim is required (or set mmds_dim in config/preset)")
    matrix = load_matrix(args.matrix)
    embedding = embed(matrix, int(dim))
    save_embedding(embedding, args.out)
    _write_artifacts(
        "mmds",
        args.out,
        [args.out],
        args.seed,
        {"matrix": str(args.matrix), "dim": int(dim), "fidelity": embedding.fidelity},
    )
    print(args.out)
    return 0


def cmd_train(args, config):
    from dataclasses import asdict

    from .checkpoint import save_checkpoint
    from .containers import load_manifest
    from .mmds import load_embedding
    from .training import train_glo

    seed = _require_seed(args)
    cfg = _train_config(args, config, seed)
    manifest_path = Path(args.manifest)
    manifest = load_manifest(manifest_path)
    train_sets = _load_sets(manifest, manifest_path.parent, manifest.split["train"])
    holdout = None
    if not args.no_holdout and manifest.split["test"]:
        holdout = _load_sets(manifest, manifest_path.parent, manifest.split["test"])
    embedding = None
    if cfg.align_enabled:
        if args.mmds is None:
            from .containers import ValidationError

            raise ValidationError("--mmds embedding CSV required when align flag is set")
        embedding = load_embedding(args.mmds)

    checkpoint = train_glo(train_sets, embedding, cfg, holdout=holdout)
    save_checkpoint(checkpoint, args.out)
    echo = asdict(cfg)
    echo["loss_flags"] = list(cfg.loss_flags)
    _write_artifacts(
        "train",
        args.out,
        [args.out],
        seed,
        {"train": echo, "manifest": str(args.manifest), "selected_epoch": checkpoint.selected_epoch},
    )
    print(args.out)
    return 0


def cmd_invert(args, config):
    import numpy as np

    from .checkpoint import load_checkpoint
    from .htf_io import read_htf
    from .network import forward
    from .reporting import emit_report
    from .training import invert_latent

    seed = _require_seed(args)
    checkpoint = load_checkpoint(args.checkpoint)
    subject = read_htf(args.subject)
    z = invert_latent(checkpoint, subject, steps=args.steps, lr=args.lr)
    prediction, _ = forward(
        checkpoint.params,
        z,
        subject.grid.directions.astype(np.float64),
        checkpoint.train_config.encoding(),
    )
    l2 = float(((prediction - subject.data.astype(np.float64)) ** 2).mean())
    emit_report(
        {
            "command": "invert",
            "subject_id": subject.subject_id,
            "latent": [float(v) for v in z],
            "reconstruction_l2": l2,
            "steps": args.steps,
            "lr": args.lr,
            "seed": seed,
            "checkpoint": str(args.checkpoint),
        },
        args.out,
    )
    _write_artifacts("invert", args.out, [args.out], seed, {"steps": args.steps, "lr": args.lr})
    print(args.out)
    return 0


def _correlation_block(checkpoint, matrix, manifest, base_dir, args):
    """Anchored-correlation tables for one checkpoint against one matrix."""
    from .evaluation import anchored_correlation, reconstruction_report
    from .metrics import pairwise_matrix
    from .training import LatentTable, invert_latent

    train_ids = list(manifest.split["train"])
    test_ids = list(manifest.split["test"])
    train_sets = _load_sets(manifest, base_dir, train_ids)
    test_sets = _load_sets(manifest, base_dir, test_ids) if test_ids else []

    anchors = checkpoint.latents
    base_metric = matrix.metric_name.removesuffix("-proxy")
    covered = set(matrix.subject_ids)
    block = {"metric": matrix.metric_name}

    block["train_gt"] = anchored_correlation(
        anchors, checkpoint.latents, matrix, partition="train", target_label="GT"
    ).as_dict()

    from .evaluation import reconstruct_all

    train_recons = [r for r, _ in reconstruct_all(checkpoint, train_sets)]
    recon_matrix = pairwise_matrix(train_recons, base_metric)
    block["train_reconstructed"] = anchored_correlation(
        anchors, checkpoint.latents, recon_matrix, partition="train",
        target_label="reconstructed",
    ).as_dict()

    recon = {"train": reconstruction_report(checkpoint, train_sets)}

    if test_sets and covered.issuperset(test_ids):
        test_latents = LatentTable(
            subject_ids=test_ids,
            z=[
                invert_latent(checkpoint, s, steps=args.invert_steps)
                for s in test_sets
            ],
        )
        block["test_gt"] = anchored_correlation(
            anchors, test_latents, matrix, partition="test", target_label="GT"
        ).as_dict()
        all_recons = train_recons + [
            r for r, _ in reconstruct_all(checkpoint, test_sets, invert_steps=args.invert_steps)
        ]
        full_recon_matrix = pairwise_matrix(all_recons, base_metric)
        block["test_reconstructed"] = anchored_correlation(
            anchors, test_latents, full_recon_matrix, partition="test",
            target_label="reconstructed",
        ).as_dict()
        recon["test"] = reconstruction_report(
            checkpoint, test_sets, invert_steps=args.invert_steps
        )
    return block, recon


def cmd_eval(args, config):
    from .checkpoint import load_checkpoint
    from .containers import load_manifest
    from .metrics import load_matrix
    from .reporting import emit_report

    manifest_path = Path(args.manifest)
    manifest = load_manifest(manifest_path)
    matrices = [load_matrix(p) for p in args.matrix]
    report = {"command": "eval", "seed": args.seed, "manifest": str(args.manifest), "models": {}}
    for ckpt_path in args.checkpoint:
        checkpoint = load_checkpoint(ckpt_path)
        entry = {
            "loss_flags": list(checkpoint.train_config.loss_flags),
            "selected_epoch": checkpoint.selected_epoch,
            "correlation": {},
            "reconstruction": {},
        }
        for matrix in matrices:
            block, recon = _correlation_block(
                checkpoint, matrix, manifest, manifest_path.parent, args
            )
            entry["correlation"][matrix.metric_name] = block
            for part, rep in recon.items():
                entry["reconstruction"].setdefault(part, rep)
        report["models"][str(ckpt_path)] = entry
    emit_report(report, args.out)
    _write_artifacts(
        "eval", args.out, [args.out], args.seed,
        {"checkpoints": [str(p) for p in args.checkpoint], "matrices": [str(m) for m in args.matrix]},
    )
    print(args.out)
    return 0


def cmd_select(args, config):
    import numpy as np

    from .checkpoint import load_checkpoint
    from .containers import load_manifest
    from .evaluation import selection_report
    from .reporting import emit_report

    checkpoint = load_checkpoint(args.checkpoint)
    manifest_path = Path(args.manifest)
    manifest = load_manifest(manifest_path)
    metric = args.metric or config.get("metric", "pbc")
    pool_sets = _load_sets(manifest, manifest_path.parent, manifest.split["train"])
    test_sets = _load_sets(manifest, manifest_path.parent, manifest.split["test"])
    if not test_sets:
        from .containers import ValidationError

        raise ValidationError("manifest has no test subjects to personalize for")

    rows = [
        selection_report(
            checkpoint, subject, pool_sets, args.k, metric=metric,
            invert_steps=args.invert_steps,
        )
        for subject in test_sets
    ]
    report = {
        "command": "select",
        "seed": args.seed,
        "metric": metric,
        "k": args.k,
        "per_subject": rows,
        "best": {
            "metric_mean": float(np.mean([r["best_metric"] for r in rows])),
            "sde_db_mean": float(np.mean([r["best_sde_db"] for r in rows])),
        },
        "topk": {
            "metric_mean": float(np.mean([r["topk_metric"] for r in rows])),
            "sde_db_mean": float(np.mean([r["topk_sde_db"] for r in rows])),
        },
    }
    emit_report(report, args.out)
    _write_artifacts("select", args.out, [args.out], args.seed, {"metric": metric, "k": args.k})
    print(args.out)
    return 0


# ------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hrtfspace",
        description="Perception-informed HRTF latent representations: experiment pipeline",
    )
    parser.add_argument("--config", help="JSON config file; flags override its fields")
    parser.add_argument("--seed", type=int, help="random seed (required for gen-data/train/invert)")
    parser.add_argument("--threads", type=int, help="thread-pool size for numeric kernels")
    parser.add_argument("--preset", choices=sorted(PRESETS), help="named parameter preset")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic HTF dataset + manifest")
    p.add_argument("--n-subjects", type=int)
    p.add_argument("--grid", help="AZxEL, e.g. 12x6")
    p.add_argument("--bins", type=int)
    p.add_argument("--name", default="synthetic")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("metrics", help="pairwise perceptual distance matrix")
    p.add_argument("--manifest", required=True)
    p.add_argument("--metric", choices=["pbc", "aep", "drmsp"])
    p.add_argument("--include-test", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("mmds", help="embed a distance matrix")
    p.add_argument("--matrix", required=True)
    p.add_argument("--dim", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mmds)

    p = sub.add_parser("train", help="train the latent-optimization model")
    p.add_argument("--manifest", required=True)
    p.add_argument("--mmds", help="embedding CSV (required with the align flag)")
    p.add_argument("--out", required=True)
    p.add_argument("--loss-flags", help="comma list from {align,pbc}; empty for baseline")
    p.add_argument("--no-holdout", action="store_true", help="keep the final epoch")
    for field, kind in (
        ("latent_dim", int), ("epochs", int), ("locations_per_step", int),
        ("lr_weights", float), ("lr_latents", float), ("align_weight", float),
        ("pbc_weight", float), ("hidden_units", int), ("num_octaves", int),
        ("ref_level_db", float), ("holdout_every", int), ("holdout_steps", int),
    ):
        p.add_argument(f"--{field.replace('_', '-')}", dest=field, type=kind)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("invert", help="recover a latent for a subject file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--subject", required=True)
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_invert)

    p = sub.add_parser("eval", help="correlation + reconstruction report")
    p.add_argument("--checkpoint", action="append", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--matrix", action="append", required=True)
    p.add_argument("--invert-steps", type=int, default=500)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("select", help="personalization by nearest latents")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("-k", type=int, default=5)
    p.add_argument("--metric", choices=["pbc", "aep", "drmsp"])
    p.add_argument("--invert-steps", type=int, default=500)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_select)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    _apply_threads(argv)
    parser = build_parser()
    args = parser.parse_args(argv)

    from .containers import NumericalError, ValidationError
    from .htf_io import HtfError

    try:
        config = _load_config(args.config)
        if args.seed is None and "seed" in config:
            args.seed = int(config["seed"])
        if args.preset is None and "preset" in config:
            args.preset = config["preset"]
        return args.func(args, config)
    except (ValidationError, HtfError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 3
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end.

Subcommands cover the whole pipeline: ``generate`` samples and solves
snapshot datasets, ``offline`` trains a model bundle, ``online`` predicts
fields for stored samples or a custom domain, ``eval`` scores a bundle
against a labeled dataset, ``gridsearch`` sweeps regressor
hyperparameters against frozen autoencoders, and ``sensitivity`` tracks
the error under hole-shape perturbations.

Exit codes: 0 on success, 1 for usage errors, 2 for unreadable or
inconsistent inputs, 3 for numerical failures (solver divergence,
non-finite training loss, sampling budget exhaustion).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import autoenc, fom, geometry, metrics, rom, storage
from . import nnkernel as nk

USAGE_ERROR = 1
DATA_ERROR = 2
NUMERICAL_ERROR = 3


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; the contract here is 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE_ERROR, f"{self.prog}: error: {message}\n")


def _csv_floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip() != ""]


def _csv_ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(",") if v.strip() != "")


# path-valued arguments stay out of artifacts so reruns into different
# directories produce byte-identical files
_PATH_ARGS = {"func", "out", "train", "data", "bundle", "config",
              "domain_data", "reuse", "menus", "spec", "domain_json"}


def _write_run_config(out_dir: Path, args: argparse.Namespace) -> None:
    doc = {k: v for k, v in vars(args).items() if k not in _PATH_ARGS}
    storage.write_json(out_dir / "config.json", doc)


def _resolve_config(cls, section: dict | None, overrides: dict):
    """Dataclass from config-file section plus CLI overrides (CLI wins)."""
    kwargs = dict(section or {})
    for key, value in overrides.items():
        if value is not None:
            kwargs[key] = value
    for key, value in list(kwargs.items()):
        if isinstance(value, list):
            kwargs[key] = tuple(value)
    return cls(**kwargs)


# ---------------------------------------------------------------------------
# commands


def cmd_generate(args) -> int:
    out = Path(args.out)
    if args.bitmaps_only:
        ds = fom.generate_bitmap_dataset(args.problem, args.count, args.grid,
                                         args.seed)
    else:
        config = fom.FomConfig(grid_n=args.grid, tol=args.tol)
        ds = fom.generate_dataset(args.problem, args.count, args.grid,
                                  args.seed, config)
    storage.save_dataset(ds, out)
    _write_run_config(out, args)
    kind = "bitmaps" if args.bitmaps_only else "snapshots"
    print(f"wrote {ds.count} {args.problem} {kind} at {ds.grid_hw[0]}x"
          f"{ds.grid_hw[1]} to {out}")
    return 0


def _offline_configs(args):
    file_cfg = storage.read_json(args.config) if args.config else {}
    sol = _resolve_config(
        autoenc.SolutionAEConfig, file_cfg.get("solution_ae"),
        {
            "latent_dim": args.sol_latent,
            "channels": _csv_ints(args.sol_channels) if args.sol_channels else None,
            "strides": _csv_ints(args.sol_strides) if args.sol_strides else None,
            "epochs": args.sol_epochs,
            "batch_size": args.sol_batch,
            "max_lr": args.sol_lr,
            "augment_flips": args.sol_augment_flips,
        },
    )
    dom = _resolve_config(
        autoenc.DomainAEConfig, file_cfg.get("domain_ae"),
        {
            "latent_dim": args.dom_latent,
            "channels": _csv_ints(args.dom_channels) if args.dom_channels else None,
            "strides": _csv_ints(args.dom_strides) if args.dom_strides else None,
            "epochs": args.dom_epochs,
            "batch_size": args.dom_batch,
            "max_lr": args.dom_lr,
        },
    )
    phi = _resolve_config(
        rom.MlpConfig, file_cfg.get("phi"),
        {
            "hidden_layers": args.phi_layers,
            "neurons": args.phi_neurons,
            "dropout": args.phi_dropout,
            "max_lr": args.phi_lr,
            "batch_size": args.phi_batch,
            "epochs": args.phi_epochs,
        },
    )
    return sol, dom, phi


def cmd_offline(args) -> int:
    dataset = storage.load_dataset(args.train)
    domain_dataset = (
        storage.load_dataset(args.domain_data) if args.domain_data else None
    )
    reuse = rom.load_reuse(args.reuse) if args.reuse else None
    sol_cfg, dom_cfg, phi_cfg = _offline_configs(args)
    result = rom.offline(
        dataset, args.mode, sol_cfg, dom_cfg, phi_cfg, args.seed,
        domain_dataset=domain_dataset,
        reuse=reuse,
        strict_stats=args.strict_stats,
        phi_val_fraction=args.phi_val_fraction,
        phi_restore_best=args.phi_restore_best,
    )
    out = Path(args.out)
    rom.save_bundle(result, out)
    _write_run_config(out, args)
    for stage, report in result.reports.items():
        best = ("" if report.best_val_loss is None
                else f", best val {report.best_val_loss:.6g}")
        print(f"{stage}: {report.epochs} epochs, final train loss "
              f"{report.final_train_loss:.6g}{best}")
    print(f"bundle ({args.mode}, feature dim {result.bundle.feature_dim}) "
          f"written to {out}")
    return 0


def cmd_online(args) -> int:
    bundle = rom.load_bundle(args.bundle)
    if args.data:
        dataset = storage.load_dataset(args.data)
        if tuple(dataset.param_schema) != tuple(bundle.param_schema):
            raise rom.DimensionMismatch(
                f"dataset schema {dataset.param_schema} does not match "
                f"bundle schema {bundle.param_schema}"
            )
        indices = list(range(dataset.count)) if args.index is None else [args.index]
        if args.index is not None and not 0 <= args.index < dataset.count:
            raise IndexError(
                f"index {args.index} outside dataset of {dataset.count}"
            )
        params = dataset.params[indices]
        masks = dataset.masks[indices]
        source = {"dataset": dataset.fingerprint()}
    else:
        spec = geometry.DomainSpec.from_dict(storage.read_json(args.domain_json))
        lam = np.asarray(_csv_floats(args.params), dtype=np.float32)
        if lam.size != len(bundle.param_schema):
            raise rom.DimensionMismatch(
                f"--params needs {len(bundle.param_schema)} values "
                f"({','.join(bundle.param_schema)}), got {lam.size}"
            )
        h, w = bundle.grid_hw
        masks = geometry.rasterize(spec, h, w).pixels[None]
        params = lam[None]
        indices = [0]
        source = {"domain_spec": spec.to_dict()}
    preds = rom.online_batch(bundle, params, masks)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    raw = np.ascontiguousarray(preds, dtype="<f4")
    (out / "predictions.f32le").write_bytes(raw.tobytes())
    manifest = {
        "format": "romforge-predictions",
        "version": 1,
        "count": len(indices),
        "grid": [bundle.grid_hw[0], bundle.grid_hw[1]],
        "indices": indices,
        "mode": bundle.mode,
        "sha256": {"predictions.f32le": storage.sha256_array(raw)},
        "source": source,
    }
    storage.write_json(out / "manifest.json", manifest)
    _write_run_config(out, args)
    print(f"wrote {len(indices)} predicted field(s) to {out}")
    return 0


def cmd_eval(args) -> int:
    bundle = rom.load_bundle(args.bundle)
    dataset = storage.load_dataset(args.data)
    report = metrics.evaluate(bundle, dataset)
    report.fingerprints["bundle"] = storage.sha256_file(
        Path(args.bundle) / "bundle.json"
    )
    storage.write_json(args.out, report.to_dict())
    print(f"mean relative error {report.mean:.6g} over {report.count} samples "
          f"(median {report.median:.6g}, worst {report.worst:.6g})")
    return 0


def cmd_gridsearch(args) -> int:
    dataset = storage.load_dataset(args.data)
    reuse = rom.load_reuse(args.reuse)
    feats_std, sol_codes, _ = rom.prepare_regression_data(
        dataset, reuse, args.mode
    )
    menus = rom.GridMenus()
    if args.menus:
        doc = storage.read_json(args.menus)
        menus = rom.GridMenus(**{k: tuple(v) for k, v in doc.items()})
    result = rom.grid_search(
        feats_std, sol_codes,
        epochs=args.epochs, seed=args.seed, menus=menus, budget=args.budget,
        val_fraction=args.val_fraction,
    )
    doc = result.to_dict()
    doc["mode"] = args.mode
    doc["fingerprints"] = {"dataset": dataset.fingerprint()}
    storage.write_json(args.out, doc)
    shown = [c for c in result.ranking[:3]]
    print(f"evaluated {result.evaluated} of {result.total_candidates} candidates")
    for c in shown:
        val = "failed" if c.status != "ok" else f"val mse {c.val_mse:.6g}"
        cfg = c.config
        print(f"  #{c.index}: layers {cfg.hidden_layers}, neurons {cfg.neurons}, "
              f"dropout {cfg.dropout}, lr {cfg.max_lr:g}, batch "
              f"{cfg.batch_size}: {val}")
    return 0


def cmd_sensitivity(args) -> int:
    bundle = rom.load_bundle(args.bundle)
    spec = None
    if args.spec:
        spec = geometry.DomainSpec.from_dict(storage.read_json(args.spec))
    equation = None
    if args.phi is not None or args.beta is not None:
        if args.phi is None or args.beta is None:
            raise ValueError("--phi and --beta must be given together")
        equation = geometry.EquationParams(phi=args.phi, beta=args.beta,
                                           hole_value=2.0)
    report = metrics.sensitivity_sweep(
        bundle, spec=spec, equation=equation, ratios=_csv_floats(args.ratios)
    )
    report.fingerprints["bundle"] = storage.sha256_file(
        Path(args.bundle) / "bundle.json"
    )
    storage.write_json(args.out, report.to_dict())
    for ratio, err in zip(report.ratios, report.errors):
        print(f"ratio {ratio:g}: relative error {err:.6g}")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="romforge",
                     description="domain-aware reduced order models")
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    p = sub.add_parser("generate", help="sample and solve a snapshot dataset")
    p.add_argument("--problem", required=True, choices=["ellipse", "holes"])
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--grid", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--tol", type=float, default=1e-8,
                   help="linear solver relative residual tolerance")
    p.add_argument("--bitmaps-only", action="store_true",
                   help="sample and rasterize domains without solving")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("offline", help="train a model bundle from snapshots")
    p.add_argument("--train", required=True, help="training dataset directory")
    p.add_argument("--out", required=True, help="bundle output directory")
    p.add_argument("--mode", default="learned_only", choices=rom.FEATURE_MODES)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--domain-data", help="bitmap dataset for the domain "
                   "autoencoder (defaults to the training bitmaps)")
    p.add_argument("--reuse", help="bundle directory whose autoencoders are "
                   "reused frozen")
    p.add_argument("--config", help="JSON file with solution_ae / domain_ae "
                   "/ phi sections; command-line flags win")
    p.add_argument("--strict-stats", action="store_true",
                   help="fail on constant feature columns")
    p.add_argument("--phi-val-fraction", type=float, default=0.1)
    p.add_argument("--phi-restore-best", action="store_true",
                   help="keep the regressor weights of the best validation epoch")
    for prefix in ("sol", "dom"):
        p.add_argument(f"--{prefix}-latent", type=int)
        p.add_argument(f"--{prefix}-channels", help="comma-separated")
        p.add_argument(f"--{prefix}-strides", help="comma-separated")
        p.add_argument(f"--{prefix}-epochs", type=int)
        p.add_argument(f"--{prefix}-batch", type=int)
        p.add_argument(f"--{prefix}-lr", type=float)
    p.add_argument("--sol-augment-flips", action=argparse.BooleanOptionalAction,
                   help="also train the solution autoencoder on mirrored "
                        "copies of every field")
    p.add_argument("--phi-layers", type=int)
    p.add_argument("--phi-neurons", type=int)
    p.add_argument("--phi-dropout", type=float)
    p.add_argument("--phi-lr", type=float)
    p.add_argument("--phi-batch", type=int)
    p.add_argument("--phi-epochs", type=int)
    p.set_defaults(func=cmd_offline)

    p = sub.add_parser("online", help="predict fields with a trained bundle")
    p.add_argument("--bundle", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", help="dataset directory to predict for")
    src.add_argument("--domain-json", help="JSON domain spec for one custom "
                     "prediction (needs --params)")
    p.add_argument("--index", type=int, help="single sample index of --data")
    p.add_argument("--params", help="comma-separated parameter row for "
                   "--domain-json, in schema order")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_online)

    p = sub.add_parser("eval", help="score a bundle against labeled snapshots")
    p.add_argument("--bundle", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="report JSON path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gridsearch", help="sweep regressor hyperparameters "
                       "against frozen autoencoders")
    p.add_argument("--data", required=True, help="labeled dataset directory")
    p.add_argument("--reuse", required=True,
                   help="bundle directory supplying the autoencoders")
    p.add_argument("--mode", default="learned_only", choices=rom.FEATURE_MODES)
    p.add_argument("--epochs", type=int, default=1500)
    p.add_argument("--budget", type=int, help="evaluate only this many "
                   "candidates (seeded subsample)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--val-fraction", type=float, default=0.1)
    p.add_argument("--menus", help="JSON file overriding the candidate menus")
    p.add_argument("--out", required=True, help="report JSON path")
    p.set_defaults(func=cmd_gridsearch)

    p = sub.add_parser("sensitivity", help="error under hole-shape "
                       "perturbations of a circle domain")
    p.add_argument("--bundle", required=True)
    p.add_argument("--ratios", default="1,0.95,0.9,0.8",
                   help="comma-separated aspect ratios")
    p.add_argument("--spec", help="JSON domain spec (defaults to the fixed "
                   "four-hole reference domain)")
    p.add_argument("--phi", type=float, help="transport angle")
    p.add_argument("--beta", type=float, help="boundary flux magnitude")
    p.add_argument("--out", required=True, help="report JSON path")
    p.set_defaults(func=cmd_sensitivity)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (fom.SolverDiverged, fom.DegenerateDomain, nk.NonFiniteLoss,
            metrics.ZeroDenominator, geometry.SamplingBudgetExceeded) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return NUMERICAL_ERROR
    except (OSError, KeyError, IndexError, ValueError) as exc:
        # covers malformed artifacts, schema clashes and bad settings
        print(f"error: {exc}", file=sys.stderr)
        return DATA_ERROR


if __name__ == "__main__":
    sys.exit(main())

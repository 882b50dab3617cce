"""Reduced-order-model orchestration.

The offline stage turns a snapshot dataset into a deployable bundle:

1. mask the training solutions with their domain bitmaps, standardize by
   the scalar solution statistics, and train the solution autoencoder;
2. encode every training solution into its latent vector;
3. in the modes that use learned geometry, train the domain-bitmap
   autoencoder (on the training bitmaps or on a separate, larger bitmap
   set) and encode the training bitmaps;
4. concatenate equation/geometry parameters with the domain encodings
   into feature vectors, standardize them per column;
5. train the regressor that maps standardized features to solution
   encodings;
6. pack decoder, domain encoder, regressor and both standardizations
   into a RomBundle.

The online stage inverts the pipeline for an unseen sample: encode the
bitmap, build and standardize the feature vector, regress the solution
encoding, decode it and undo the solution standardization.

Feature modes
-------------
``exact_only``
    Features are the full parameter row (7 entries for the one-ellipse
    family). No domain autoencoder.
``exact_plus_learned``
    Full parameter row concatenated with the domain encoding.
``learned_only``
    Only the equation parameters (phi, beta) concatenated with the domain
    encoding; the geometry enters through the bitmap alone. This is the
    only mode that works for families whose geometry has no finite
    parametrization.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
from pathlib import Path

import numpy as np

from . import autoenc, nnkernel as nk, storage
from .autoenc import ConfigError, DomainAEConfig, SolutionAEConfig, StandardizationStats
from .fom import EQUATION_PARAM_NAMES
from .storage import SnapshotDataset

FEATURE_MODES = ("exact_only", "exact_plus_learned", "learned_only")


class ModeMismatch(ValueError):
    """Inputs inconsistent with the requested feature mode."""


class DimensionMismatch(ValueError):
    """Array dimensions inconsistent with the bundle or each other."""


@dataclass(frozen=True)
class MlpConfig:
    """Regressor settings: ``hidden_layers`` equally wide hidden layers of
    ``neurons`` units, leaky-relu activations, optional dropout after each
    activation."""

    hidden_layers: int = 2
    neurons: int = 256
    dropout: float = 0.0
    max_lr: float = 1e-3
    batch_size: int = 32
    epochs: int = 1500

    def __post_init__(self):
        if self.hidden_layers < 1:
            raise ConfigError(
                f"at least one hidden layer is required, got {self.hidden_layers}"
            )
        if self.neurons < 1:
            raise ConfigError(f"neurons must be positive, got {self.neurons}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.max_lr <= 0.0 or self.batch_size < 1 or self.epochs < 1:
            raise ConfigError("max_lr, batch_size and epochs must be positive")


def build_mlp(in_dim: int, out_dim: int, config: MlpConfig, seed: int) -> nk.Sequential:
    rng = np.random.default_rng(seed)
    layers: list[nk.Layer] = []
    prev = in_dim
    for _ in range(config.hidden_layers):
        layers += [nk.Linear(prev, config.neurons, rng=rng), nk.LeakyReLU()]
        if config.dropout > 0.0:
            layers.append(nk.Dropout(config.dropout))
        prev = config.neurons
    layers.append(nk.Linear(prev, out_dim, rng=rng))
    return nk.Sequential(layers)


def equation_columns(param_schema: tuple[str, ...],
                     equation_params: tuple[str, ...]) -> list[int]:
    missing = [n for n in equation_params if n not in param_schema]
    if missing:
        raise ModeMismatch(
            f"schema {param_schema} lacks equation parameters {missing}"
        )
    return [param_schema.index(n) for n in equation_params]


def feature_dim(mode: str, param_schema: tuple[str, ...],
                equation_params: tuple[str, ...],
                domain_latent: int | None) -> int:
    if mode == "exact_only":
        return len(param_schema)
    if domain_latent is None:
        raise ModeMismatch(f"mode {mode!r} needs a domain latent size")
    if mode == "exact_plus_learned":
        return len(param_schema) + domain_latent
    if mode == "learned_only":
        return len(equation_params) + domain_latent
    raise ModeMismatch(f"unknown mode {mode!r}; choose from {FEATURE_MODES}")


def build_features(
    params: np.ndarray,
    param_schema: tuple[str, ...],
    mode: str,
    domain_encodings: np.ndarray | None = None,
    equation_params: tuple[str, ...] = EQUATION_PARAM_NAMES,
) -> np.ndarray:
    """Assemble the regressor input matrix for one feature mode.

    ``params`` is (n, k) with columns named by ``param_schema``;
    ``domain_encodings`` is (n, latent) and must be present exactly for
    the modes that use it.
    """
    if params.ndim != 2 or params.shape[1] != len(param_schema):
        raise DimensionMismatch(
            f"parameter matrix {params.shape} does not match schema "
            f"{param_schema}"
        )
    if mode not in FEATURE_MODES:
        raise ModeMismatch(f"unknown mode {mode!r}; choose from {FEATURE_MODES}")
    if mode == "exact_only":
        if domain_encodings is not None:
            raise ModeMismatch("exact_only takes no domain encodings")
        return params.astype(np.float32, copy=True)
    if domain_encodings is None:
        raise ModeMismatch(f"mode {mode!r} needs domain encodings")
    if domain_encodings.ndim != 2 or domain_encodings.shape[0] != params.shape[0]:
        raise DimensionMismatch(
            f"encodings {domain_encodings.shape} do not pair with params "
            f"{params.shape}"
        )
    if mode == "exact_plus_learned":
        left = params
    else:
        left = params[:, equation_columns(param_schema, equation_params)]
    return np.hstack([left, domain_encodings]).astype(np.float32, copy=False)


def train_phi(
    features_std: np.ndarray,
    encodings: np.ndarray,
    config: MlpConfig,
    seed: int,
    val_fraction: float = 0.1,
    restore_best: bool = False,
) -> tuple[nk.Sequential, nk.TrainReport]:
    """Train the feature-to-encoding regressor.

    Features arrive already standardized. A validation share of
    ``val_fraction`` is split off by a seeded permutation (seed), and the
    fit itself uses seed + 1.
    """
    n = features_std.shape[0]
    if encodings.shape[0] != n:
        raise DimensionMismatch(
            f"features ({n}) and encodings ({encodings.shape[0]}) disagree"
        )
    mlp = build_mlp(features_std.shape[1], encodings.shape[1], config, seed)
    if val_fraction > 0.0:
        # at least one sample on each side of the split
        n_val = min(max(int(round(val_fraction * n)), 1), n - 1)
    else:
        n_val = 0
    if n_val > 0:
        perm = np.random.default_rng(seed).permutation(n)
        val_idx, train_idx = perm[:n_val], perm[n_val:]
        val_in, val_tgt = features_std[val_idx], encodings[val_idx]
        train_in, train_tgt = features_std[train_idx], encodings[train_idx]
    else:
        val_in = val_tgt = None
        train_in, train_tgt = features_std, encodings
    report = nk.fit(
        mlp, train_in, train_tgt,
        loss="mse", epochs=config.epochs, batch_size=config.batch_size,
        max_lr=config.max_lr, seed=seed + 1,
        val_inputs=val_in, val_targets=val_tgt,
        restore_best=restore_best and val_in is not None,
    )
    return mlp, report


# ---------------------------------------------------------------------------
# bundles


@dataclass
class RomBundle:
    """Everything the online stage needs."""

    mode: str
    problem: str
    param_schema: tuple[str, ...]
    equation_params: tuple[str, ...]
    grid_hw: tuple[int, int]
    solution_latent: int
    domain_latent: int | None
    decoder: nk.Sequential
    phi: nk.Sequential
    domain_encoder: nk.Sequential | None
    stats: StandardizationStats
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in FEATURE_MODES:
            raise ModeMismatch(f"unknown mode {self.mode!r}")
        if (self.domain_encoder is None) != (self.mode == "exact_only"):
            raise ModeMismatch(
                f"mode {self.mode!r} and domain encoder presence disagree"
            )
        expect = feature_dim(self.mode, self.param_schema, self.equation_params,
                             self.domain_latent)
        phi_in = self.phi.layers[0].in_features
        if phi_in != expect:
            raise DimensionMismatch(
                f"regressor expects {phi_in} features, mode {self.mode!r} "
                f"builds {expect}"
            )
        if self.stats.feat_mean.shape != (expect,):
            raise DimensionMismatch(
                f"feature stats cover {self.stats.feat_mean.shape[0]} columns, "
                f"expected {expect}"
            )

    @property
    def feature_dim(self) -> int:
        return self.phi.layers[0].in_features


def online(bundle: RomBundle, lam: np.ndarray, bitmap: np.ndarray) -> np.ndarray:
    """Predict one solution field from a parameter row and a domain bitmap."""
    lam = np.asarray(lam)
    if lam.ndim != 1:
        raise DimensionMismatch(f"parameter row must be 1d, got shape {lam.shape}")
    if bitmap.shape != bundle.grid_hw:
        raise DimensionMismatch(
            f"bitmap {bitmap.shape} does not match bundle grid {bundle.grid_hw}"
        )
    return online_batch(bundle, lam[None, :], bitmap[None, :, :])[0]


def online_batch(bundle: RomBundle, params: np.ndarray,
                 masks: np.ndarray) -> np.ndarray:
    """Vectorized online stage: (n, k) parameter rows and (n, h, w)
    bitmaps to (n, h, w) predicted fields."""
    params = np.asarray(params, dtype=np.float32)
    if params.ndim != 2 or params.shape[1] != len(bundle.param_schema):
        raise DimensionMismatch(
            f"parameter matrix {params.shape} does not match schema "
            f"{bundle.param_schema}"
        )
    if masks.shape != (params.shape[0],) + bundle.grid_hw:
        raise DimensionMismatch(
            f"bitmap stack {masks.shape} does not match "
            f"{(params.shape[0],) + bundle.grid_hw}"
        )
    encodings = None
    if bundle.mode != "exact_only":
        encodings = autoenc.encode(bundle.domain_encoder,
                                   autoenc.as_net_input(masks))
    feats = build_features(params, bundle.param_schema, bundle.mode,
                           encodings, bundle.equation_params)
    feats = autoenc.standardize(feats, bundle.stats.feat_mean.astype(np.float32),
                                bundle.stats.feat_std.astype(np.float32))
    codes = autoenc.encode(bundle.phi, feats)
    fields = autoenc.encode(bundle.decoder, codes)[:, 0, :, :]
    return autoenc.destandardize(
        fields, np.float32(bundle.stats.sol_mean), np.float32(bundle.stats.sol_std)
    )


# ---------------------------------------------------------------------------
# offline stage


@dataclass
class ReusedNets:
    """Frozen networks carried over from an earlier offline run.

    The solution autoencoder always travels with its scalar statistics:
    its weights only make sense on data standardized the same way.
    """

    sol_mean: float
    sol_std: float
    solution_encoder: nk.Sequential
    solution_decoder: nk.Sequential
    domain_encoder: nk.Sequential | None = None
    domain_decoder: nk.Sequential | None = None
    domain_latent: int | None = None


@dataclass
class OfflineResult:
    bundle: RomBundle
    solution_encoder: nk.Sequential
    domain_decoder: nk.Sequential | None
    reports: dict[str, nk.TrainReport]


def offline(
    dataset: SnapshotDataset,
    mode: str,
    solution_config: SolutionAEConfig,
    domain_config: DomainAEConfig,
    phi_config: MlpConfig,
    seed: int,
    domain_dataset: SnapshotDataset | None = None,
    reuse: ReusedNets | None = None,
    strict_stats: bool = False,
    phi_val_fraction: float = 0.1,
    phi_restore_best: bool = False,
) -> OfflineResult:
    """Run the full offline stage on a training dataset.

    ``domain_dataset`` optionally supplies a larger bitmap-only set for the
    domain autoencoder; the training-set encodings are still computed on
    ``dataset``'s own bitmaps. ``reuse`` carries frozen autoencoders from
    an earlier run so only the regressor is retrained. Sub-seeds are
    derived from ``seed`` at fixed offsets (solution AE +11, domain AE
    +21, regressor +31).
    """
    if mode not in FEATURE_MODES:
        raise ModeMismatch(f"unknown mode {mode!r}; choose from {FEATURE_MODES}")
    if not dataset.has_solutions:
        raise ValueError("offline stage needs a dataset with solutions")
    h, w = dataset.grid_hw
    reports: dict[str, nk.TrainReport] = {}

    masked = dataset.solutions * dataset.masks
    if reuse is not None:
        sol_mean, sol_std = reuse.sol_mean, reuse.sol_std
        sol_enc, sol_dec = reuse.solution_encoder, reuse.solution_decoder
    else:
        sol_mean, sol_std = autoenc.solution_stats(masked)
    sol_data = autoenc.as_net_input(
        autoenc.standardize(masked, np.float32(sol_mean), np.float32(sol_std))
    )
    if reuse is None:
        sol_enc, sol_dec = autoenc.build_solution_ae(
            solution_config, (h, w), seed + 11
        )
        sol_train = sol_data
        if solution_config.augment_flips:
            sol_train = autoenc.with_flips(sol_data)
        reports["solution_ae"] = autoenc.train_autoencoder(
            sol_enc, sol_dec, sol_train, "mse",
            epochs=solution_config.epochs,
            batch_size=solution_config.batch_size,
            max_lr=solution_config.max_lr,
            seed=seed + 12,
        )
    sol_codes = autoenc.encode(sol_enc, sol_data)

    dom_enc = dom_dec = None
    dom_codes = None
    domain_latent = None
    if mode != "exact_only":
        if reuse is not None and reuse.domain_encoder is not None:
            dom_enc, dom_dec = reuse.domain_encoder, reuse.domain_decoder
            domain_latent = reuse.domain_latent
            if domain_latent is None:
                raise ModeMismatch("reused domain encoder needs its latent size")
        else:
            dom_source = domain_dataset if domain_dataset is not None else dataset
            if dom_source.grid_hw != dataset.grid_hw:
                raise DimensionMismatch(
                    f"domain dataset grid {dom_source.grid_hw} differs from "
                    f"training grid {dataset.grid_hw}"
                )
            dom_enc, dom_dec = autoenc.build_domain_ae(
                domain_config, (h, w), seed + 21
            )
            reports["domain_ae"] = autoenc.train_autoencoder(
                dom_enc, dom_dec,
                autoenc.as_net_input(dom_source.masks), "bce",
                epochs=domain_config.epochs,
                batch_size=domain_config.batch_size,
                max_lr=domain_config.max_lr,
                seed=seed + 22,
            )
            domain_latent = domain_config.latent_dim
        dom_codes = autoenc.encode(dom_enc, autoenc.as_net_input(dataset.masks))

    feats = build_features(dataset.params, dataset.param_schema, mode, dom_codes)
    feat_mean, feat_std = autoenc.feature_stats(feats, strict=strict_stats)
    feats_std = autoenc.standardize(
        feats, feat_mean.astype(np.float32), feat_std.astype(np.float32)
    )
    phi, reports["phi"] = train_phi(
        feats_std, sol_codes, phi_config, seed + 31,
        val_fraction=phi_val_fraction, restore_best=phi_restore_best,
    )

    stats = StandardizationStats(
        sol_mean=sol_mean, sol_std=sol_std,
        feat_mean=feat_mean, feat_std=feat_std,
    )
    bundle = RomBundle(
        mode=mode,
        problem=dataset.problem,
        param_schema=dataset.param_schema,
        equation_params=EQUATION_PARAM_NAMES,
        grid_hw=dataset.grid_hw,
        solution_latent=sol_codes.shape[1],
        domain_latent=domain_latent,
        decoder=sol_dec,
        phi=phi,
        domain_encoder=dom_enc,
        stats=stats,
        meta={
            "seed": seed,
            "dataset_fingerprint": dataset.fingerprint(),
            "domain_dataset_fingerprint": (
                domain_dataset.fingerprint() if domain_dataset is not None else None
            ),
            "config": {
                "solution_ae": _cfg_dict(solution_config),
                "domain_ae": _cfg_dict(domain_config) if mode != "exact_only" else None,
                "phi": _cfg_dict(phi_config),
            },
            "reports": {k: _report_summary(r) for k, r in reports.items()},
            "reused_autoencoders": reuse is not None,
        },
    )
    return OfflineResult(
        bundle=bundle,
        solution_encoder=sol_enc,
        domain_decoder=dom_dec,
        reports=reports,
    )


def prepare_regression_data(
    dataset: SnapshotDataset,
    reuse: ReusedNets,
    mode: str,
    strict_stats: bool = False,
) -> tuple[np.ndarray, np.ndarray, StandardizationStats]:
    """Standardized features and solution encodings under frozen networks.

    Mirrors the corresponding offline steps, for sweeps that retrain only
    the regressor against fixed autoencoders.
    """
    if not dataset.has_solutions:
        raise ValueError("regression data needs a dataset with solutions")
    masked = dataset.solutions * dataset.masks
    sol_data = autoenc.as_net_input(
        autoenc.standardize(masked, np.float32(reuse.sol_mean),
                            np.float32(reuse.sol_std))
    )
    sol_codes = autoenc.encode(reuse.solution_encoder, sol_data)
    dom_codes = None
    if mode != "exact_only":
        if reuse.domain_encoder is None:
            raise ModeMismatch(f"mode {mode!r} needs a reused domain encoder")
        dom_codes = autoenc.encode(reuse.domain_encoder,
                                   autoenc.as_net_input(dataset.masks))
    feats = build_features(dataset.params, dataset.param_schema, mode, dom_codes)
    feat_mean, feat_std = autoenc.feature_stats(feats, strict=strict_stats)
    feats_std = autoenc.standardize(
        feats, feat_mean.astype(np.float32), feat_std.astype(np.float32)
    )
    stats = StandardizationStats(
        sol_mean=reuse.sol_mean, sol_std=reuse.sol_std,
        feat_mean=feat_mean, feat_std=feat_std,
    )
    return feats_std, sol_codes, stats


def reuse_from_result(result: OfflineResult) -> ReusedNets:
    """Package an offline result's autoencoders for a follow-up run."""
    b = result.bundle
    return ReusedNets(
        sol_mean=b.stats.sol_mean,
        sol_std=b.stats.sol_std,
        solution_encoder=result.solution_encoder,
        solution_decoder=b.decoder,
        domain_encoder=b.domain_encoder,
        domain_decoder=result.domain_decoder,
        domain_latent=b.domain_latent,
    )


def _cfg_dict(cfg) -> dict:
    out = {}
    for name in cfg.__dataclass_fields__:
        value = getattr(cfg, name)
        out[name] = list(value) if isinstance(value, tuple) else value
    return out


def _report_summary(report: nk.TrainReport) -> dict:
    return {
        "epochs": report.epochs,
        "final_train_loss": report.final_train_loss,
        "best_val_loss": report.best_val_loss,
        "best_val_epoch": report.best_val_epoch,
    }


# ---------------------------------------------------------------------------
# bundle persistence


def save_bundle(result: OfflineResult, path) -> None:
    """Write a bundle directory: bundle.json plus checkpoints.

    decoder.ckpt, phi.ckpt and stats.ckpt always exist;
    domain_encoder.ckpt only in the modes that use it. The solution
    encoder and domain decoder ride along so later runs can reuse the
    autoencoders.
    """
    d = Path(path)
    d.mkdir(parents=True, exist_ok=True)
    b = result.bundle
    nets = {
        "decoder.ckpt": b.decoder,
        "phi.ckpt": b.phi,
        "solution_encoder.ckpt": result.solution_encoder,
    }
    if b.domain_encoder is not None:
        nets["domain_encoder.ckpt"] = b.domain_encoder
    if result.domain_decoder is not None:
        nets["domain_decoder.ckpt"] = result.domain_decoder
    files = {}
    for name, net in nets.items():
        storage.write_checkpoint(
            d / name, net.state_dict(), {"architecture": net.architecture()}
        )
        files[name] = storage.sha256_file(d / name)
    storage.write_checkpoint(d / "stats.ckpt", b.stats.to_arrays(), {})
    files["stats.ckpt"] = storage.sha256_file(d / "stats.ckpt")
    doc = {
        "format": "romforge-bundle",
        "version": 1,
        "mode": b.mode,
        "problem": b.problem,
        "param_schema": list(b.param_schema),
        "equation_params": list(b.equation_params),
        "grid": [b.grid_hw[0], b.grid_hw[1]],
        "solution_latent": b.solution_latent,
        "domain_latent": b.domain_latent,
        "feature_dim": b.feature_dim,
        "files": files,
        "meta": b.meta,
    }
    storage.write_json(d / "bundle.json", doc)


def _load_net(path) -> nk.Sequential:
    arrays, meta = storage.read_checkpoint(path)
    net = nk.Sequential.from_architecture(meta["architecture"])
    net.load_state_dict(arrays)
    return net


def load_bundle(path) -> RomBundle:
    d = Path(path)
    doc = storage.read_json(d / "bundle.json")
    if doc.get("format") != "romforge-bundle":
        raise storage.StorageError(f"{d} is not a bundle directory")
    stats_arrays, _ = storage.read_checkpoint(d / "stats.ckpt")
    dom_enc = None
    if (d / "domain_encoder.ckpt").exists():
        dom_enc = _load_net(d / "domain_encoder.ckpt")
    return RomBundle(
        mode=doc["mode"],
        problem=doc["problem"],
        param_schema=tuple(doc["param_schema"]),
        equation_params=tuple(doc["equation_params"]),
        grid_hw=(int(doc["grid"][0]), int(doc["grid"][1])),
        solution_latent=int(doc["solution_latent"]),
        domain_latent=(
            int(doc["domain_latent"]) if doc["domain_latent"] is not None else None
        ),
        decoder=_load_net(d / "decoder.ckpt"),
        phi=_load_net(d / "phi.ckpt"),
        domain_encoder=dom_enc,
        stats=StandardizationStats.from_arrays(stats_arrays),
        meta=doc.get("meta", {}),
    )


def load_reuse(path) -> ReusedNets:
    """Load a bundle directory as frozen autoencoders for a new run."""
    d = Path(path)
    doc = storage.read_json(d / "bundle.json")
    stats_arrays, _ = storage.read_checkpoint(d / "stats.ckpt")
    stats = StandardizationStats.from_arrays(stats_arrays)
    dom_enc = dom_dec = None
    if (d / "domain_encoder.ckpt").exists():
        dom_enc = _load_net(d / "domain_encoder.ckpt")
    if (d / "domain_decoder.ckpt").exists():
        dom_dec = _load_net(d / "domain_decoder.ckpt")
    return ReusedNets(
        sol_mean=stats.sol_mean,
        sol_std=stats.sol_std,
        solution_encoder=_load_net(d / "solution_encoder.ckpt"),
        solution_decoder=_load_net(d / "decoder.ckpt"),
        domain_encoder=dom_enc,
        domain_decoder=dom_dec,
        domain_latent=(
            int(doc["domain_latent"]) if doc.get("domain_latent") is not None else None
        ),
    )


# ---------------------------------------------------------------------------
# hyperparameter grid search


@dataclass(frozen=True)
class GridMenus:
    """Candidate menus for the regressor sweep. The full product of the
    stock menus enumerates 4 * 6 * 5 * 7 * 5 = 4200 configurations."""

    hidden_layers: tuple[int, ...] = (1, 2, 3, 4)
    neurons: tuple[int, ...] = (64, 128, 256, 512, 1024, 2048)
    dropout: tuple[float, ...] = (0.0, 0.025, 0.05, 0.1, 0.2)
    max_lr: tuple[float, ...] = (1e-5, 3.16e-5, 1e-4, 3.16e-4, 1e-3, 3.16e-3, 1e-2)
    batch_size: tuple[int, ...] = (8, 16, 32, 64, 128)

    def size(self) -> int:
        return (
            len(self.hidden_layers) * len(self.neurons) * len(self.dropout)
            * len(self.max_lr) * len(self.batch_size)
        )


def enumerate_candidates(menus: GridMenus, epochs: int) -> list[MlpConfig]:
    """Fixed enumeration order: layers, neurons, dropout, max_lr, batch,
    with the last menu varying fastest."""
    return [
        MlpConfig(hidden_layers=l, neurons=n, dropout=d, max_lr=lr,
                  batch_size=b, epochs=epochs)
        for l, n, d, lr, b in product(
            menus.hidden_layers, menus.neurons, menus.dropout,
            menus.max_lr, menus.batch_size,
        )
    ]


@dataclass
class GridCandidate:
    index: int
    config: MlpConfig
    status: str  # "ok" or "failed"
    val_mse: float | None = None
    final_train_mse: float | None = None
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "config": _cfg_dict(self.config),
            "status": self.status,
            "val_mse": self.val_mse,
            "final_train_mse": self.final_train_mse,
            "note": self.note,
        }


@dataclass
class GridSearchResult:
    """Candidates ranked best-first: successful runs by validation MSE,
    failed runs last, ties by enumeration index."""

    ranking: list[GridCandidate]
    total_candidates: int
    evaluated: int
    budget: int | None
    seed: int

    def to_dict(self) -> dict:
        return {
            "total_candidates": self.total_candidates,
            "evaluated": self.evaluated,
            "budget": self.budget,
            "seed": self.seed,
            "ranking": [c.to_dict() for c in self.ranking],
        }


def grid_search(
    features_std: np.ndarray,
    encodings: np.ndarray,
    epochs: int,
    seed: int,
    menus: GridMenus | None = None,
    budget: int | None = None,
    val_fraction: float = 0.1,
) -> GridSearchResult:
    """Sweep regressor configurations against one standardized feature set.

    Candidates come from ``enumerate_candidates``; when ``budget`` is
    smaller than the menu product, a seeded uniform subsample (without
    replacement) of enumeration indices is evaluated. Every candidate
    trains with the same data split and seed. A candidate whose training
    loss leaves the finite range is recorded as failed and ranked behind
    every successful one; it never aborts the sweep.
    """
    menus = menus or GridMenus()
    candidates = enumerate_candidates(menus, epochs)
    total = len(candidates)
    picked = list(range(total))
    if budget is not None and budget < total:
        if budget < 1:
            raise ValueError(f"budget must be positive, got {budget}")
        rng = np.random.default_rng(seed)
        picked = sorted(int(i) for i in rng.choice(total, size=budget, replace=False))
    rows: list[GridCandidate] = []
    for idx in picked:
        cfg = candidates[idx]
        try:
            _, report = train_phi(
                features_std, encodings, cfg, seed, val_fraction=val_fraction
            )
            rows.append(GridCandidate(
                index=idx, config=cfg, status="ok",
                val_mse=report.best_val_loss,
                final_train_mse=report.final_train_loss,
            ))
        except nk.NonFiniteLoss as exc:
            rows.append(GridCandidate(
                index=idx, config=cfg, status="failed", note=str(exc),
            ))
    rows.sort(key=lambda c: (
        0 if c.status == "ok" else 1,
        c.val_mse if c.val_mse is not None else float("inf"),
        c.index,
    ))
    return GridSearchResult(
        ranking=rows,
        total_candidates=total,
        evaluated=len(rows),
        budget=budget,
        seed=seed,
    )

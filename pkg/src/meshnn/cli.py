"""Command-line interface: dataset generation, training, evaluation,
gradient checking and decision-region rendering.

Exit codes: 0 success, 1 runtime failure, 2 usage error. All commands
are deterministic for a fixed --seed.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import data as datamod
from .gradcheck import compare, finite_diff_gradient
from .network import (
    ACTIVATION_CODES,
    Model,
    NetworkShape,
    activation_codes,
    build_model,
    default_mask,
    forward_outputs,
)
from .training import Metrics, TrainConfig, batch_gradient, evaluate, train
from .fop import error_gradient, forward_with_grad
from .data import LabeledDataset, Scaler

MODEL_FORMAT_VERSION = 1


def save_model(model: Model, scaler: Scaler | None, path) -> None:
    """Serialize a model (and optionally its feature scaler) as JSON."""
    activation = model.activation
    payload = {
        "format_version": MODEL_FORMAT_VERSION,
        "shape": {
            "input_count": model.shape.input_count,
            "hidden_count": model.shape.hidden_count,
            "output_count": model.shape.output_count,
            "ticks": model.shape.ticks,
        },
        "activation": activation if isinstance(activation, str) else list(activation),
        "clamp_inputs": model.clamp_inputs,
        "mask": [int(v) for v in model.mask.ravel()],
        "weights": [float(v) for v in model.weights.ravel()],
        "scaler": scaler.as_dict() if scaler is not None else None,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")


def load_model(path) -> tuple[Model, Scaler | None]:
    """Load a model file, rejecting version or invariant violations."""
    with open(path) as fh:
        payload = json.load(fh)
    version = payload.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise ValueError(
            f"{path}: unsupported format_version {version!r} "
            f"(expected {MODEL_FORMAT_VERSION})"
        )
    sh = payload["shape"]
    shape = NetworkShape(
        input_count=int(sh["input_count"]),
        hidden_count=int(sh["hidden_count"]),
        output_count=int(sh["output_count"]),
        ticks=int(sh["ticks"]),
    )
    n = shape.total
    mask = np.asarray(payload["mask"], dtype=np.uint8)
    weights = np.asarray(payload["weights"], dtype=np.float64)
    if mask.shape != (n * n,):
        raise ValueError(f"{path}: mask must hold {n * n} entries, got {mask.shape[0]}")
    if weights.shape != (n * n,):
        raise ValueError(f"{path}: weights must hold {n * n} entries, got {weights.shape[0]}")
    try:
        model = Model(
            shape=shape,
            weights=weights.reshape(n, n),
            mask=mask.reshape(n, n),
            act_codes=activation_codes(payload["activation"], n),
            clamp_inputs=bool(payload["clamp_inputs"]),
        )
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from None
    scaler = payload.get("scaler")
    return model, (Scaler.from_dict(scaler) if scaler is not None else None)


@dataclass
class RegionGrid:
    """Predicted class labels on a regular grid over the input plane.

    ``labels[iy, ix]`` is the class at (xs[ix], ys[iy]) with both axes
    ascending; bounds are (xmin, xmax, ymin, ymax).
    """

    bounds: tuple[float, float, float, float]
    resolution: int
    labels: np.ndarray


def decision_region_grid(
    model: Model,
    scaler: Scaler | None,
    data: LabeledDataset,
    resolution: int,
) -> RegionGrid:
    """Classify a grid spanning the data's bounding box expanded 10% per side."""
    if data.feature_count != 2:
        raise ValueError(
            f"decision regions need 2-feature data, got {data.feature_count} features"
        )
    if resolution < 2:
        raise ValueError(f"resolution must be >= 2, got {resolution}")
    mins = data.features.min(axis=0)
    maxs = data.features.max(axis=0)
    pad = 0.1 * (maxs - mins)
    lo, hi = mins - pad, maxs + pad
    xs = np.linspace(lo[0], hi[0], resolution)
    ys = np.linspace(lo[1], hi[1], resolution)
    gx, gy = np.meshgrid(xs, ys)
    points = np.column_stack([gx.ravel(), gy.ravel()])
    if scaler is not None:
        points = scaler.transform(points)
    outputs = forward_outputs(model, points)
    labels = np.argmax(outputs, axis=1).reshape(resolution, resolution)
    return RegionGrid(
        bounds=(float(lo[0]), float(hi[0]), float(lo[1]), float(hi[1])),
        resolution=resolution,
        labels=labels,
    )


def _gray_levels(class_count: int) -> np.ndarray:
    if class_count < 2:
        return np.zeros(max(class_count, 1), dtype=np.uint8)
    spacing = 255.0 / (class_count - 1)
    return np.round(np.arange(class_count) * spacing).astype(np.uint8)


def write_pgm(grid: RegionGrid, class_count: int, path) -> None:
    """Binary PGM (P5) raster, one gray level per class, top row = max y."""
    levels = _gray_levels(class_count)
    image = levels[grid.labels[::-1, :]]
    with open(path, "wb") as fh:
        fh.write(f"P5\n{grid.resolution} {grid.resolution}\n255\n".encode("ascii"))
        fh.write(image.tobytes())


def write_region_csv(grid: RegionGrid, path) -> None:
    """Label grid as CSV, same row order as the PGM (top row = max y)."""
    with open(path, "w") as fh:
        for row in grid.labels[::-1, :]:
            fh.write(",".join(str(int(v)) for v in row))
            fh.write("\n")


def _generate(args: argparse.Namespace) -> LabeledDataset:
    kind = args.dataset
    if kind == "moons":
        return datamod.gen_moons(args.n, args.noise, seed=args.seed)
    if kind == "circles":
        return datamod.gen_circles(args.n, args.noise, args.inner_factor, seed=args.seed)
    if kind == "spirals":
        return datamod.gen_spirals(args.n, args.noise, args.turns, seed=args.seed)
    if kind == "blobs":
        return datamod.gen_single_blobs(args.n, seed=args.seed)
    if kind == "double-blobs":
        return datamod.gen_double_blobs(args.n, seed=args.seed)
    raise ValueError(f"unknown dataset {kind!r}")


def _cmd_gen(args: argparse.Namespace) -> int:
    dataset = _generate(args)
    datamod.save_csv(dataset, args.out)
    print(f"wrote {len(dataset)} samples to {args.out}")
    return 0


def _load_mask(path, shape: NetworkShape) -> np.ndarray:
    mask = np.loadtxt(path, delimiter=",", dtype=np.int64, ndmin=2)
    if mask.shape != (shape.total, shape.total):
        raise ValueError(
            f"{path}: mask must be {shape.total}x{shape.total}, got {mask.shape}"
        )
    return mask.astype(np.uint8)


def _merged_train_config(args: argparse.Namespace) -> TrainConfig:
    # precedence: command-line flag > config file value > TrainConfig default
    values: dict = {}
    if args.config:
        with open(args.config) as fh:
            loaded = json.load(fh)
        allowed = set(TrainConfig.__dataclass_fields__)
        unknown = set(loaded) - allowed
        if unknown:
            raise ValueError(f"{args.config}: unknown config keys {sorted(unknown)}")
        values.update(loaded)
    for key, flag in [
        ("epochs", args.epochs),
        ("learning_rate", args.lr),
        ("optimizer", args.optimizer),
        ("seed", args.seed),
    ]:
        if flag is not None:
            values[key] = flag
    if args.no_clamp:
        values["clamp_inputs"] = False
    if "epochs" not in values:
        raise ValueError("epochs not set (use --epochs or a config file)")
    return TrainConfig(**values)


def _cmd_train(args: argparse.Namespace) -> int:
    cfg = _merged_train_config(args)
    dataset = datamod.load_csv(args.data)
    train_ds, test_ds, scaler = split_standardize_for_cli(dataset, args.train_fraction, cfg.seed)
    shape = NetworkShape(
        input_count=dataset.feature_count + 1,
        hidden_count=args.hidden,
        output_count=dataset.class_count,
        ticks=args.ticks,
    )
    mask = _load_mask(args.mask, shape) if args.mask else default_mask(shape)
    model = build_model(
        shape,
        mask,
        init="uniform",
        seed=cfg.seed,
        activation=args.activation,
        clamp_inputs=cfg.clamp_inputs,
    )
    trained, metrics = train(model, train_ds, cfg)
    save_model(trained, scaler, args.out)
    if args.metrics:
        metrics.write_csv(args.metrics)
    train_acc = metrics.accuracy[-1] if cfg.epochs else evaluate(trained, train_ds)
    print(f"train accuracy: {train_acc:.6f}")
    print(f"test accuracy: {evaluate(trained, test_ds):.6f}")
    return 0


def split_standardize_for_cli(dataset, train_fraction, seed):
    return datamod.split_standardize(dataset, train_fraction, seed)


def _cmd_eval(args: argparse.Namespace) -> int:
    model, scaler = load_model(args.model)
    dataset = datamod.load_csv(args.data)
    if args.split == "none":
        features = scaler.transform(dataset.features) if scaler else dataset.features
        subset = LabeledDataset(features, dataset.labels, dataset.class_count)
    else:
        train_ds, test_ds, _ = split_standardize_for_cli(
            dataset, args.train_fraction, args.seed
        )
        subset = train_ds if args.split == "train" else test_ds
    print(f"{evaluate(model, subset):.6f}")
    return 0


def _cmd_gradcheck(args: argparse.Namespace) -> int:
    if args.n < 6:
        raise ValueError("need --n >= 6 (3 inputs, 2 outputs, at least 1 hidden)")
    shape = NetworkShape(
        input_count=3, hidden_count=args.n - 5, output_count=2, ticks=args.ticks
    )
    model = build_model(
        shape, default_mask(shape), init="uniform", seed=args.seed, activation=args.activation
    )
    rng = np.random.default_rng(args.seed)
    x = rng.normal(0.0, 1.0, size=shape.feature_count)
    label = int(rng.integers(0, shape.output_count))
    trace, d = forward_with_grad(model, x)
    from .training import softmax_cross_entropy

    y = trace.states[-1, shape.total - shape.output_count :]
    _, dEdy = softmax_cross_entropy(y, label)
    g = error_gradient(dEdy, d, shape, mask=model.mask)
    g_fd = finite_diff_gradient(model, x, label, h=args.h)
    report = compare(g, g_fd, rel_tol=args.tol)
    if args.json:
        print(json.dumps(report.as_dict(), sort_keys=True))
    else:
        status = "PASS" if report.passed else "FAIL"
        print(
            f"{status} max_rel_err={report.max_rel_err:.3e} "
            f"worst_index={report.worst_index} tol={report.rel_tol:g}"
        )
    return 0 if report.passed else 1


def _cmd_plot(args: argparse.Namespace) -> int:
    if not args.out and not args.csv:
        raise ValueError("need --out (PGM) and/or --csv")
    model, scaler = load_model(args.model)
    dataset = datamod.load_csv(args.data)
    grid = decision_region_grid(model, scaler, dataset, args.resolution)
    if args.out:
        write_pgm(grid, model.shape.output_count, args.out)
        print(f"wrote {args.out}")
    if args.csv:
        write_region_csv(grid, args.csv)
        print(f"wrote {args.csv}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="meshnn",
        description="Mesh networks with forward-only gradient propagation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic dataset CSV")
    p.add_argument(
        "--dataset",
        required=True,
        choices=["moons", "circles", "spirals", "blobs", "double-blobs"],
    )
    p.add_argument("--n", type=int, default=1000)
    p.add_argument(
        "--noise", type=float, default=0.1, help="noise std (moons/circles/spirals)"
    )
    p.add_argument("--inner-factor", type=float, default=0.5, help="circles inner radius")
    p.add_argument("--turns", type=float, default=1.75, help="spiral turns")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("train", help="train a model on a dataset CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--hidden", type=int, default=5)
    p.add_argument("--ticks", type=int, default=3)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--optimizer", choices=["adam", "sgd"], default=None)
    p.add_argument("--activation", choices=sorted(ACTIVATION_CODES), default="relu")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--train-fraction", type=float, default=0.7)
    p.add_argument("--mask", default=None, help="CSV file with a 0/1 adjacency mask")
    p.add_argument("--config", default=None, help="JSON file with TrainConfig fields")
    p.add_argument("--no-clamp", action="store_true", help="disable input re-clamping")
    p.add_argument("--out", required=True, help="model JSON output path")
    p.add_argument("--metrics", default=None, help="metrics CSV output path")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="print accuracy of a saved model on a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument(
        "--split",
        choices=["none", "train", "test"],
        default="none",
        help="evaluate the whole file or reproduce a train/test split",
    )
    p.add_argument("--train-fraction", type=float, default=0.7)
    p.add_argument("--seed", type=int, default=0, help="split seed (match train)")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("gradcheck", help="compare propagated gradients to finite differences")
    p.add_argument("--n", type=int, default=8, help="total neuron count (>= 6)")
    p.add_argument("--ticks", type=int, default=4)
    p.add_argument("--activation", choices=sorted(ACTIVATION_CODES), default="tanh")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--h", type=float, default=1e-6, help="finite-difference step")
    p.add_argument("--tol", type=float, default=1e-5, help="relative tolerance")
    p.add_argument("--json", action="store_true", help="machine-readable report")
    p.set_defaults(func=_cmd_gradcheck)

    p = sub.add_parser("plot", help="rasterize a model's decision regions")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="2-feature dataset CSV for the bounds")
    p.add_argument("--resolution", type=int, default=200)
    p.add_argument("--out", default=None, help="PGM output path")
    p.add_argument("--csv", default=None, help="CSV output path")
    p.set_defaults(func=_cmd_plot)

    return parser


def dispatch(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()

"""Command line front-end: ingest, encode, train, eval, scan, serve.

Exit codes: 0 success, 1 operational error, 2 usage error.
"""

from __future__ import annotations

import functools
import json
import sys

import click

from . import __version__
from .errors import ByteHueError


def operational_errors(fn):
    """Convert operational failures to exit code 1 with a clean message."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (ByteHueError, OSError) as exc:
            raise click.ClickException(f"{type(exc).__name__}: {exc}") from exc

    return wrapper


@click.group()
@click.version_option(__version__, prog_name="bytehue")
def cli():
    """Scan EVM bytecode for compiler bugs via RGB encoding and a small CNN."""


@cli.command()
@click.option("--pages", default="1", help="Page range, e.g. 1 or 1-5.")
@click.option("--page-size", default=10, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--base-url", default="https://api.etherscan.io/api", show_default=True)
@click.option("--api-key", default=None, help="Defaults to $BYTEHUE_ETHERSCAN_KEY.")
@click.option("--rps", default=4.0, show_default=True, help="Request rate cap.")
@operational_errors
def ingest(pages, page_size, out_path, base_url, api_key, rps):
    """Crawl verified contracts into a dataset file (labels left empty)."""
    from .ingest import DEFAULT_VOCABULARY, DatasetManifest, EtherscanClient, save_dataset

    if "-" in pages:
        lo, hi = pages.split("-", 1)
        page_range = range(int(lo), int(hi) + 1)
    else:
        page_range = range(int(pages), int(pages) + 1)
    client = EtherscanClient(api_key=api_key, base_url=base_url, requests_per_second=rps)
    records = tuple(client.crawl_verified(page_range, page_size=page_size))
    manifest = DatasetManifest(records, DEFAULT_VOCABULARY)
    save_dataset(manifest, out_path)
    click.echo(f"wrote {len(records)} records to {out_path}")


def _parse_target(value: str) -> tuple[int, int]:
    h, _, w = value.partition("x")
    return int(h), int(w)


@cli.command()
@click.option("--in", "in_path", required=True, type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--width", default=None, type=int, help="Fixed-width layout.")
@click.option("--square", "square", is_flag=True, default=False)
@click.option("--target", default=None, help="Resize target, e.g. 224x224.")
@click.option("--filter", "resize_filter", default="nearest",
              type=click.Choice(["nearest", "bilinear"]), show_default=True)
@operational_errors
def encode(in_path, out_path, width, square, target, resize_filter):
    """Encode a hex bytecode file into a PNG color image."""
    from .encoder import (
        EncodingConfig, bytes_to_pixels, image_to_png, pixels_to_image, resize,
    )
    from .ingest import parse_hex

    if width is not None and square:
        raise click.UsageError("--width and --square are mutually exclusive")
    cfg = EncodingConfig(
        layout="fixed_width" if width else "square",
        fixed_width=width,
        target_size=_parse_target(target) if target else (224, 224),
        resize_filter=resize_filter,
    )
    with open(in_path) as fh:
        code = parse_hex(fh.read())
    img = pixels_to_image(bytes_to_pixels(code, cfg), cfg)
    if target:
        img = resize(img, cfg)
    image_to_png(img, out_path)
    click.echo(f"wrote {img.width}x{img.height} image to {out_path}")


@cli.command()
@click.option("--dataset", "dataset_path", required=True, type=click.Path())
@click.option("--net", "net_path", default=None, type=click.Path(),
              help="Network config JSON; defaults to bytehue-micro.")
@click.option("--stage", type=click.Choice(["binary", "multilabel"]), default="binary",
              show_default=True)
@click.option("--from", "from_bundle", default=None, type=click.Path(),
              help="Existing bundle to transfer-learn from (multilabel stage).")
@click.option("--freeze-features", is_flag=True, default=False)
@click.option("--epochs", default=100, show_default=True)
@click.option("--lr", default=0.001, show_default=True)
@click.option("--batch-size", default=32, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--input-size", default=224, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--log-csv", default=None, type=click.Path())
@operational_errors
def train(dataset_path, net_path, stage, from_bundle, freeze_features, epochs, lr,
          batch_size, seed, input_size, out_path, log_csv):
    """Train the binary gate, or transfer-learn the multi-label head.

    The binary stage writes a bundle whose multi-label half is a fresh
    (untrained) head; the multilabel stage reads that bundle back with
    --from and replaces the multi-label half with the transfer-learned one.
    """
    from .bundle import ModelBundle, load_bundle, save_bundle
    from .encoder import EncodingConfig
    from .ingest import load_dataset
    from .nn import Conv, Dense, NetworkConfig, init_params, micro_network
    from .training import TrainConfig, train as run_train, transfer_learn

    manifest = load_dataset(dataset_path)
    arity = len(manifest.vocabulary)
    encoding = EncodingConfig(target_size=(input_size, input_size))
    cfg = TrainConfig(
        epochs=epochs, learning_rate=lr, batch_size=batch_size, seed=seed,
        stage=stage, label_weighting="inverse_frequency",
    )

    if stage == "binary":
        if net_path:
            with open(net_path) as fh:
                net = NetworkConfig.from_json_dict(json.load(fh))
        else:
            net = micro_network(input_size=input_size)
        params, log = run_train(manifest, net, cfg, encoding)
        ml_net = NetworkConfig(
            name=net.name + "-multilabel",
            input_shape=net.input_shape,
            layers=net.layers[:-1] + (Dense(arity),),
            head=("sigmoid", arity),
        )
        bundle = ModelBundle(
            binary_net=net, binary_params=params,
            multilabel_net=ml_net, multilabel_params=init_params(ml_net, seed + 1),
            vocabulary=manifest.vocabulary, encoding=encoding,
        )
    else:
        if not from_bundle:
            raise click.UsageError("--stage multilabel requires --from <bundle>")
        base = load_bundle(from_bundle)
        freeze = ()
        if freeze_features:
            freeze = tuple(
                i for i, l in enumerate(base.binary_net.layers[:-1])
                if isinstance(l, (Conv, Dense))
            )
        ml_net, ml_params, log = transfer_learn(
            base.binary_params, base.binary_net, arity, freeze, manifest, cfg,
            base.encoding,
        )
        bundle = ModelBundle(
            binary_net=base.binary_net, binary_params=base.binary_params,
            multilabel_net=ml_net, multilabel_params=ml_params,
            vocabulary=manifest.vocabulary, encoding=base.encoding,
        )

    save_bundle(bundle, out_path)
    if log_csv:
        with open(log_csv, "w") as fh:
            fh.write(log.to_csv())
    last = log.epochs[-1]
    click.echo(
        f"trained {stage} stage: {len(log.epochs)} epochs, "
        f"final loss {last.mean_loss:.4f}, train acc {last.train_accuracy:.4f}; "
        f"bundle -> {out_path}"
    )


@cli.command("eval")
@click.option("--bundle", "bundle_path", required=True, type=click.Path())
@click.option("--dataset", "dataset_path", required=True, type=click.Path())
@click.option("--split", default="test", show_default=True)
@click.option("--stage", type=click.Choice(["binary", "multilabel"]), default="binary",
              show_default=True)
@click.option("--threshold", default=0.5, show_default=True)
@click.option("--json", "as_json", is_flag=True, default=False)
@operational_errors
def eval_cmd(bundle_path, dataset_path, split, stage, threshold, as_json):
    """Evaluate a bundle stage on a dataset split."""
    from .bundle import load_bundle
    from .ingest import load_dataset
    from .training import evaluate

    bundle = load_bundle(bundle_path)
    manifest = load_dataset(dataset_path)
    net = bundle.binary_net if stage == "binary" else bundle.multilabel_net
    params = bundle.binary_params if stage == "binary" else bundle.multilabel_params
    m = evaluate(params, net, manifest, split, threshold, bundle.encoding)
    if as_json:
        payload = {
            "accuracy": m.accuracy, "precision": m.precision, "recall": m.recall,
            "loss": m.loss, "tp": m.tp, "fp": m.fp, "fn": m.fn, "tn": m.tn,
        }
        if m.subset_accuracy is not None:
            payload["subset_accuracy"] = m.subset_accuracy
            payload["micro_accuracy"] = m.accuracy
        click.echo(json.dumps(payload))
    else:
        click.echo(f"accuracy={m.accuracy:.4f} precision={m.precision:.4f} "
                   f"recall={m.recall:.4f} loss={m.loss:.4f}")
        if m.subset_accuracy is not None:
            click.echo(f"subset_accuracy={m.subset_accuracy:.4f} "
                       "(accuracy above is per-label micro)")


@cli.command()
@click.option("--bundle", "bundle_path", required=True, type=click.Path())
@click.option("--hex", "hex_input", default=None, help="Bytecode hex (0x optional).")
@click.option("--hex-file", default=None, type=click.Path())
@click.option("--address", default=None)
@click.option("--network", default="mainnet", show_default=True)
@click.option("--threshold", default=0.5, show_default=True)
@click.option("--json", "as_json", is_flag=True, default=False)
@operational_errors
def scan(bundle_path, hex_input, hex_file, address, network, threshold, as_json):
    """Scan one contract (hex or address) with a trained bundle."""
    from .bundle import load_bundle
    from .service import ScanRequest, scan as run_scan

    if hex_file:
        with open(hex_file) as fh:
            hex_input = fh.read()
    sources = [s for s in (hex_input, address) if s]
    if len(sources) != 1:
        raise click.UsageError("provide exactly one of --hex/--hex-file/--address")
    bundle = load_bundle(bundle_path)
    report = run_scan(
        bundle,
        ScanRequest(bytecode=hex_input, address=address, network=network),
        threshold=threshold,
    )
    if as_json:
        click.echo(json.dumps(report.to_json_dict()))
        return
    click.echo(f"input_digest: {report.input_digest}")
    click.echo(f"is_buggy:     {report.is_buggy:.4f}")
    for l in report.labels:
        mark = "FLAGGED" if l.flagged else "ok"
        click.echo(f"  {l.name}: {l.confidence:.4f} [{mark}]")
    click.echo(f"model {report.model_version}, {report.elapsed_ms:.1f} ms")


@cli.command()
@click.option("--bundle", "bundle_path", required=True, type=click.Path())
@click.option("--bind", default="127.0.0.1:8330", show_default=True)
@click.option("--threshold", default=0.5, show_default=True)
@operational_errors
def serve(bundle_path, bind, threshold):
    """Serve the REST API for a trained bundle."""
    from .bundle import load_bundle
    from .service import serve as run_serve

    run_serve(load_bundle(bundle_path), bind_address=bind, threshold=threshold)


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=True)
    except SystemExit as exc:
        return int(exc.code or 0)
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Command-line surface wiring the library into reproducible runs.

Every subcommand is deterministic given its inputs and seeds: re-running
overwrites outputs with identical bytes. Exit codes: 0 success, 1 usage
error, 2 input/format error, 3 numerical/training failure. All failures
print one machine-parseable line ``error: <code>: <message>`` to stderr.
"""

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import data, energy, gda, metrics, nda, ppm, tails, training
from .errors import (
    ConfigError,
    EstimationError,
    FormatError,
    InputError,
    NumericalError,
    TrainingError,
)
from .seeding import derive_seed, make_rng


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _thread_count() -> int:
    raw = os.environ.get("OODK_THREADS", "")
    if raw:
        try:
            n = int(raw)
        except ValueError as exc:
            raise InputError(f"OODK_THREADS must be an integer, got {raw!r}") from exc
        if n < 1:
            raise InputError("OODK_THREADS must be >= 1")
        return n
    return os.cpu_count() or 1


def _load_config(path) -> data.RunConfig:
    if path is None:
        return data.config_from_dict({})
    return data.load_config(path)


def _cmd_gen_data(args) -> int:
    config = _load_config(args.config)
    bundle = data.gen_synthetic(config.synthetic)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    data.write_embeddings(out / "train.oode", bundle.train_x, bundle.train_y)
    data.write_embeddings(out / "test_id.oode", bundle.test_id_x, bundle.test_id_y)
    data.write_embeddings(
        out / "test_semantic.oode", bundle.test_semantic_x, bundle.test_semantic_y
    )
    data.write_embeddings(out / "test_modality.oode", bundle.test_modality_x)
    meta = dataclasses.asdict(config.synthetic)
    meta["k_known"] = bundle.k_known
    with open(out / "meta.json", "w", encoding="utf-8") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")
    print(f"wrote dataset bundle to {out}")
    return 0


def _cmd_train(args) -> int:
    config = _load_config(args.config)
    cfg = dataclasses.replace(config.train, mode=args.mode)
    x, y = data.read_embeddings(Path(args.data) / "train.oode")
    if y is None:
        raise FormatError("training data must carry labels")
    params, history = training.train(
        (x, y),
        cfg,
        tail_cfg=config.tails,
        queue_capacity=args.queue_capacity,
    )
    training.save_checkpoint(args.out, params, cfg)
    history_path = Path(args.out).with_suffix("").as_posix() + ".history.csv"
    training.write_history_csv(history_path, history)
    print(f"wrote {args.out} and {history_path}")
    return 0


def _cmd_score(args) -> int:
    params, cfg_dict = training.load_checkpoint(args.model)
    temperature = float(cfg_dict.get("temperature", 1.0))
    x, _ = data.read_embeddings(args.data)
    if x.shape[1] != params.in_dim:
        raise InputError(
            f"data dimension {x.shape[1]} does not match model input {params.in_dim}"
        )
    _, logits = training.forward(params, x)
    scores = -energy.free_energy_values(logits, temperature)
    energy.write_scores(
        args.out, range(len(scores)), scores, [args.label] * len(scores)
    )
    print(f"wrote {args.out}")
    return 0


def _cmd_eval(args) -> int:
    _, id_scores, _ = energy.read_scores(args.id)
    _, ood_scores, _ = energy.read_scores(args.ood)
    report = metrics.evaluate(id_scores, ood_scores, bins=args.bins)
    metrics.write_report_json(args.out, report)
    if args.hist:
        metrics.write_hist_csv(args.hist, report.histogram)
    if args.svg:
        metrics.write_hist_svg(args.svg, report.histogram)
    print(f"auroc={report.auroc:.6f} aupr_in={report.aupr_in:.6f}")
    return 0


def _cmd_nda(args) -> int:
    config = _load_config(args.config)
    in_dir = Path(getattr(args, "in"))
    out_dir = Path(args.out)
    if not in_dir.is_dir():
        raise InputError(f"{in_dir} is not a directory")
    names = sorted(
        p.name for p in in_dir.iterdir() if p.suffix in (".ppm", ".pgm") and p.is_file()
    )
    if not names:
        raise InputError(f"no .ppm/.pgm images found in {in_dir}")
    out_dir.mkdir(parents=True, exist_ok=True)

    def corrupt_one(index_name):
        index, name = index_name
        img = ppm.read_image(in_dir / name)
        rng = make_rng(derive_seed(args.seed, index))
        out = nda.nda_sample(img, config.nda, rng)
        target = out_dir / (Path(name).stem + ".nda.ppm")
        ppm.write_image(target, out)

    items = list(enumerate(names))  # index = rank in sorted name order
    threads = _thread_count()
    if threads > 1 and len(items) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(corrupt_one, items))
    else:
        for item in items:
            corrupt_one(item)
    print(f"corrupted {len(items)} images into {out_dir}")
    return 0


def _cmd_fit_gda(args) -> int:
    x, y = data.read_embeddings(args.embeddings)
    if y is None:
        raise FormatError("embeddings file must carry labels to fit class Gaussians")
    model = gda.fit(x, y, int(y.max()) + 1)
    gda.save_model(model, args.out)
    print(f"wrote {args.out} (K={model.k_classes}, d={model.dim})")
    return 0


def _cmd_sample_tails(args) -> int:
    model = gda.load_model(args.gda)
    cfg = tails.TailSamplerConfig(draws_n_total=args.big_n, rank_n=args.n)
    samples = tails.sample_tails(model, args.class_id, cfg, make_rng(args.seed))
    vectors = np.stack([s.vector for s in samples])
    labels = np.full(len(samples), args.class_id, dtype=np.int64)
    data.write_embeddings(args.out, vectors, labels)
    print(
        f"wrote {len(samples)} tail samples to {args.out} "
        f"(delta_log={samples[0].implied_delta_log!r})"
    )
    return 0


def _cmd_hist(args) -> int:
    _, scores, labels = energy.read_scores(args.scores)
    labels = np.array(labels)
    id_scores = scores[labels == "ID"]
    ood_scores = scores[labels == "OOD"]
    hist = metrics.histogram(id_scores, ood_scores, args.bins)
    metrics.write_hist_csv(args.out, hist)
    print(f"wrote {args.out}")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="oodkit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate the synthetic benchmark bundle")
    p.add_argument("--config", help="JSON run configuration (defaults apply if omitted)")
    p.add_argument("--out", required=True, help="output directory for .oode files")
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("train", help="train a detector on a dataset bundle")
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--data", required=True, help="bundle directory with train.oode")
    p.add_argument(
        "--mode",
        required=True,
        choices=training.MODES,
        help="training mode (objective composition)",
    )
    p.add_argument("--out", required=True, help="output checkpoint path (.oodm)")
    p.add_argument(
        "--queue-capacity",
        type=int,
        default=1000,
        help="per-class embedding queue capacity (default 1000)",
    )
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("score", help="score a dataset with a trained checkpoint")
    p.add_argument("--model", required=True, help="checkpoint path (.oodm)")
    p.add_argument("--data", required=True, help=".oode file to score")
    p.add_argument("--out", required=True, help="output score CSV")
    p.add_argument(
        "--label",
        default="ID",
        choices=("ID", "OOD"),
        help="label column value for these rows (default ID)",
    )
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("eval", help="compute detection metrics from score CSVs")
    p.add_argument("--id", required=True, help="score CSV for in-distribution samples")
    p.add_argument("--ood", required=True, help="score CSV for out-of-distribution samples")
    p.add_argument("--out", required=True, help="output report.json")
    p.add_argument("--hist", help="optional histogram CSV output")
    p.add_argument("--bins", type=int, default=20, help="histogram bin count (default 20)")
    p.add_argument("--svg", help="optional histogram SVG output")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("nda", help="corrupt a directory of .ppm images")
    p.add_argument("--in", required=True, help="input directory of .ppm/.pgm images")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, required=True, help="base corruption seed")
    p.add_argument("--config", help="JSON run configuration (nda section)")
    p.set_defaults(func=_cmd_nda)

    p = sub.add_parser("fit-gda", help="fit class Gaussians to labeled embeddings")
    p.add_argument("--embeddings", required=True, help="labeled .oode file")
    p.add_argument("--out", required=True, help="output model path (.gda1)")
    p.set_defaults(func=_cmd_fit_gda)

    p = sub.add_parser("sample-tails", help="sample low-density tails of one class")
    p.add_argument("--gda", required=True, help="fitted .gda1 model")
    p.add_argument("--class", dest="class_id", type=int, required=True, help="class id")
    p.add_argument("--n", type=int, default=64, help="tail rank to keep (default 64)")
    p.add_argument(
        "--N", dest="big_n", type=int, default=10000, help="total draws (default 10000)"
    )
    p.add_argument("--seed", type=int, required=True, help="sampling seed")
    p.add_argument("--out", required=True, help="output .oode file")
    p.set_defaults(func=_cmd_sample_tails)

    p = sub.add_parser("hist", help="histogram a mixed ID/OOD score CSV")
    p.add_argument("--scores", required=True, help="score CSV with ID and OOD rows")
    p.add_argument("--bins", type=int, default=20, help="bin count (default 20)")
    p.add_argument("--out", required=True, help="output histogram CSV")
    p.set_defaults(func=_cmd_hist)

    return parser


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _UsageError as exc:
        print(f"error: 1: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # argparse --help
        return int(exc.code or 0)
    except (ConfigError, InputError, FormatError, EstimationError, OSError) as exc:
        print(f"error: 2: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, TrainingError) as exc:
        print(f"error: 3: {exc}", file=sys.stderr)
        return 3


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()

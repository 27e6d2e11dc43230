"""Command-line interface.

Subcommands: gen-data, train, eval, grad-check, score. Every command is
deterministic given its flags. A JSON config file passed via --config
supplies flag defaults; explicit flags win. Exit codes: 0 success, 1 usage
error, 2 numeric or validation failure.
"""

import argparse
import csv
import json
import os
import sys

from periagg import aggregator, encoder, evaluation, gradcheck, scorers, synthdata
from periagg import dataio, training
from periagg.errors import DataFormatError, NumericError, ScoringError, ShapeError

USAGE_ERROR = 1
FAILURE = 2


class CliError(Exception):
    def __init__(self, message, code=FAILURE):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; the CLI contract wants 1
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE_ERROR, f"{self.prog}: error: {message}\n")


def _resolve(args, defaults):
    """Fill unset flags from --config (if given), then from defaults."""
    config = {}
    if getattr(args, "config", None):
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                config = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(f"cannot read config file: {exc}", USAGE_ERROR)
        if not isinstance(config, dict):
            raise CliError("config file must hold a JSON object", USAGE_ERROR)
    for key, default in defaults.items():
        if getattr(args, key, None) is None:
            setattr(args, key, config.get(key, default))
    return args


GEN_DEFAULTS = {
    "subjects": 120,
    "frames": 8,
    "dim": 32,
    "still_sigma": 0.1,
    "frame_sigma": 0.3,
    "corrupt_fraction": 0.0,
    "corrupt_mode": "off-identity",
    "seed": 0,
}


def cmd_gen_data(args):
    _resolve(args, GEN_DEFAULTS)
    try:
        cfg = synthdata.GenConfig(
            num_subjects=args.subjects,
            frames_per_video=args.frames,
            dim=args.dim,
            still_noise_sigma=args.still_sigma,
            frame_noise_sigma=args.frame_sigma,
            corrupt_fraction=args.corrupt_fraction,
            corrupt_mode=args.corrupt_mode,
            seed=args.seed,
        )
    except ValueError as exc:
        raise CliError(str(exc), USAGE_ERROR)
    subjects = synthdata.generate(cfg)
    dataio.write_dataset(args.out, subjects)
    print(f"wrote {len(subjects)} subjects to {args.out}")
    return 0


TRAIN_DEFAULTS = {
    # model defaults follow the reference training setup
    "heads": 16,
    "layers": 4,
    "mlp_hidden": 0,
    "dim": 0,  # 0: take the dataset's dimension
    "lr": 1e-5,
    "weight_decay": 1e-1,
    "batch_size": 16,
    "epochs": 10,
    "margin": 0.5,
    "impostors": 15,
    "seed": 0,
}


def cmd_train(args):
    _resolve(args, TRAIN_DEFAULTS)
    subjects = dataio.read_dataset(args.dataset)
    data_dim = subjects[0].still.shape[0]
    if args.dim and args.dim != data_dim:
        raise CliError(
            f"dataset dimension {data_dim} does not match configured dim {args.dim}"
        )
    enc_cfg = encoder.EncoderConfig(
        dim=data_dim,
        heads=args.heads,
        layers=args.layers,
        mlp_hidden=args.mlp_hidden,
    )
    train_cfg = training.TrainConfig(
        margin=args.margin,
        learning_rate=args.lr,
        weight_decay=args.weight_decay,
        batch_size=args.batch_size,
        epochs=args.epochs,
        impostors_per_genuine=args.impostors,
        seed=args.seed,
    )
    params, trace = training.train(subjects, enc_cfg, train_cfg)
    dataio.save_checkpoint(args.out, params, train_cfg, trace, args.seed)
    print(f"trained {len(subjects)} subjects for {len(trace)} epochs")
    for epoch, loss in enumerate(trace, start=1):
        print(f"epoch {epoch}: mean loss {loss:.6f}")
    print(f"checkpoint written to {args.out}")
    return 0


EVAL_DEFAULTS = {
    "seed": 0,
    "max_impostors": 0,  # 0: exhaustive
    "max_rank": 5,
}

_FARS = (1e-3, 1e-2, 1e-1)


def _fmt(x):
    # repr of a float round-trips exactly
    return repr(float(x))


def cmd_eval(args):
    _resolve(args, EVAL_DEFAULTS)
    subjects = dataio.read_dataset(args.dataset)
    params, _ = dataio.load_checkpoint(args.checkpoint)
    cfg = params.config
    all_scorers = {"transformer": scorers.transformer_scorer(params, cfg)}
    if args.reverse_frames:
        all_scorers["transformer-reversed"] = scorers.transformer_scorer(
            params, cfg, reverse_frames=True
        )
    all_scorers.update(scorers.baseline_scorers(args.seed))
    reports = evaluation.evaluate_v2s(
        subjects,
        all_scorers,
        fars=_FARS,
        max_rank=args.max_rank,
        max_impostors=args.max_impostors or None,
        seed=args.seed,
    )
    os.makedirs(args.out_dir, exist_ok=True)
    summary_path = os.path.join(args.out_dir, "summary.csv")
    with open(summary_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["method", "far_0.001", "far_0.01", "far_0.1", "rank_1", f"rank_{args.max_rank}"]
        )
        for label, rep in reports.items():
            writer.writerow(
                [label]
                + [_fmt(rep.tar_at_far[f][0]) for f in _FARS]
                + [_fmt(rep.rank_accuracies[1]), _fmt(rep.rank_accuracies[args.max_rank])]
            )
        for label, rep in reports.items():
            with open(
                os.path.join(args.out_dir, f"det_{label}.csv"),
                "w",
                newline="",
                encoding="utf-8",
            ) as det_fh:
                w = csv.writer(det_fh)
                w.writerow(["far", "frr"])
                for far, frr in rep.det_points:
                    w.writerow([_fmt(far), _fmt(frr)])
            with open(
                os.path.join(args.out_dir, f"cmc_{label}.csv"),
                "w",
                newline="",
                encoding="utf-8",
            ) as cmc_fh:
                w = csv.writer(cmc_fh)
                w.writerow(["rank", "accuracy"])
                for rank, acc in rep.cmc_points:
                    w.writerow([rank, _fmt(acc)])
    print(f"{'method':<22}{'TAR@1e-3':>10}{'TAR@1e-2':>10}{'TAR@1e-1':>10}{'Rank-1':>9}{'Rank-5':>9}")
    for label, rep in reports.items():
        tars = [rep.tar_at_far[f][0] for f in _FARS]
        print(
            f"{label:<22}{tars[0]:>10.3f}{tars[1]:>10.3f}{tars[2]:>10.3f}"
            f"{rep.rank_accuracies[1]:>9.3f}{rep.rank_accuracies[args.max_rank]:>9.3f}"
        )
    print(f"reports written to {args.out_dir}")
    return 0


GRAD_DEFAULTS = {"seed": 0, "pipeline_seeds": 5, "tolerance": 1e-4}


def cmd_grad_check(args):
    _resolve(args, GRAD_DEFAULTS)
    groups = {}
    for name, err in gradcheck.check_kernels(args.seed).items():
        groups[f"kernel.{name}"] = err
    for name, err in gradcheck.check_encoder(args.seed).items():
        groups[f"encoder.{name}"] = err
    for s in range(args.pipeline_seeds):
        for name, err in gradcheck.check_pipeline(args.seed + s).items():
            key = f"pipeline.{name}"
            groups[key] = max(groups.get(key, 0.0), err)
    if args.inject_fault:
        if args.inject_fault not in groups:
            raise CliError(f"unknown parameter group {args.inject_fault!r}", USAGE_ERROR)
        groups[args.inject_fault] += 1.0  # test hook: force a failure
    failed = []
    for name in sorted(groups):
        status = "ok" if groups[name] < args.tolerance else "FAIL"
        print(f"{status:<5} {name:<40} max rel err {groups[name]:.3e}")
        if status == "FAIL":
            failed.append(name)
    if failed:
        print(f"gradient check failed for: {', '.join(failed)}")
        return FAILURE
    print(f"all {len(groups)} parameter groups within tolerance {args.tolerance:g}")
    return 0


SCORE_DEFAULTS = {"still_subject": ""}


def cmd_score(args):
    _resolve(args, SCORE_DEFAULTS)
    subjects = dataio.read_dataset(args.dataset)
    by_id = {s.subject_id: s for s in subjects}
    if args.subject not in by_id:
        raise CliError(f"subject {args.subject!r} not in dataset")
    video_subj = by_id[args.subject]
    still_id = args.still_subject or args.subject
    if still_id not in by_id:
        raise CliError(f"subject {still_id!r} not in dataset")
    params, _ = dataio.load_checkpoint(args.checkpoint)
    ts = aggregator.TokenSet(
        still=by_id[still_id].still,
        frames=video_subj.frames,
        subject_id_still=still_id,
        subject_id_video=args.subject,
    )
    out = aggregator.aggregate(params, params.config, ts)
    score = aggregator.cosine_similarity(out.video_rep, out.still_rep)
    ranked = aggregator.export_attention_weights(out)
    corrupted = set(video_subj.corrupted)
    if args.out:
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["frame_index", "weight", "corrupted"])
            for idx, weight in ranked:
                writer.writerow([idx, _fmt(weight), int(idx in corrupted)])
    kind = "genuine" if still_id == args.subject else "impostor"
    print(f"{kind} pairing video={args.subject} still={still_id}: score {score:.6f}")
    for idx, weight in ranked:
        marker = " (corrupted)" if idx in corrupted else ""
        print(f"frame {idx}: weight {weight:.6f}{marker}")
    return 0


def build_parser():
    parser = _Parser(prog="periagg", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic embedding dataset")
    p.add_argument("--subjects", type=int)
    p.add_argument("--frames", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--still-sigma", dest="still_sigma", type=float)
    p.add_argument("--frame-sigma", dest="frame_sigma", type=float)
    p.add_argument("--corrupt-fraction", dest="corrupt_fraction", type=float)
    p.add_argument("--corrupt-mode", dest="corrupt_mode",
                   choices=synthdata._CORRUPT_MODES)
    p.add_argument("--seed", type=int)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train the aggregation encoder")
    p.add_argument("--dataset", required=True)
    p.add_argument("--heads", type=int)
    p.add_argument("--layers", type=int)
    p.add_argument("--mlp-hidden", dest="mlp_hidden", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--weight-decay", dest="weight_decay", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--margin", type=float)
    p.add_argument("--impostors", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint against the baselines")
    p.add_argument("--dataset", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--reverse-frames", action="store_true")
    p.add_argument("--max-impostors", dest="max_impostors", type=int)
    p.add_argument("--max-rank", dest="max_rank", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--config")
    p.add_argument("--out-dir", dest="out_dir", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("grad-check", help="finite-difference gradient verification")
    p.add_argument("--seed", type=int)
    p.add_argument("--pipeline-seeds", dest="pipeline_seeds", type=int)
    p.add_argument("--tolerance", type=float)
    p.add_argument("--inject-fault", dest="inject_fault",
                   help="test hook: perturb one gradient group to force a failure")
    p.add_argument("--config")
    p.set_defaults(func=cmd_grad_check)

    p = sub.add_parser("score", help="score one pairing and dump attention weights")
    p.add_argument("--dataset", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--subject", required=True, help="query video subject id")
    p.add_argument("--still-subject", dest="still_subject",
                   help="still subject id (defaults to --subject)")
    p.add_argument("--out", help="CSV path for ranked attention weights")
    p.add_argument("--config")
    p.set_defaults(func=cmd_score)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits; keep main() returning an int
        return int(exc.code or 0)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"periagg: error: {exc}", file=sys.stderr)
        return exc.code
    except (DataFormatError, NumericError, ScoringError, ShapeError, ValueError, OSError) as exc:
        print(f"periagg: error: {exc}", file=sys.stderr)
        return FAILURE


def entry():
    raise SystemExit(main())


if __name__ == "__main__":
    entry()

"""Command-line entry point: ``spoofcm <subcommand> [options]``."""

from __future__ import annotations

import argparse
import dataclasses
import datetime
import hashlib
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional

from . import __version__
from .config import RunConfig
from .errors import ConfigError, SpoofCMError

SUBCOMMANDS = ("extract-features", "synth-data", "train", "score", "evaluate", "det", "fuse",
               "gradcheck")


# manifests -------------------------------------------------------------------

def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def hash_inputs(paths) -> dict:
    """sha256 of every input file; directories hash their sorted file listing."""
    out = {}
    for p in paths:
        if p is None:
            continue
        p = Path(p)
        if p.is_file():
            out[str(p)] = _sha256(p)
        elif p.is_dir():
            h = hashlib.sha256()
            for f in sorted(x for x in p.rglob("*") if x.is_file()):
                h.update(f.relative_to(p).as_posix().encode() + b"\0" + _sha256(f).encode())
            out[str(p)] = h.hexdigest()
    return out


def write_manifest(path, command: str, argv, cfg: RunConfig, inputs) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "argv": list(argv),
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "inputs": hash_inputs(inputs),
        "version": __version__,
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _manifest_next_to(output, command: str) -> Path:
    if output is None:
        return Path(f"spoofcm-{command}.manifest.json")
    output = Path(output)
    if output.is_dir():
        return output / "manifest.json"
    return output.with_name(output.name + ".manifest.json")


# subcommands -----------------------------------------------------------------

def _records(path, partition: Optional[str] = None):
    from .evaluation.protocol import parse_protocol, select

    return select(parse_protocol(path), partition)


def _extract_one(job):
    from .lfcc import LfccConfig, extract, feature_path, read_wav, write_features

    wav, out_dir, utt, cfg_dict = job
    try:
        feats = extract(read_wav(wav), LfccConfig.from_dict(cfg_dict), utt)
        write_features(feature_path(out_dir, utt), feats.values)
        return utt, None
    except SpoofCMError as exc:
        return utt, str(exc)


def cmd_extract_features(args, cfg: RunConfig) -> int:
    audio_dir = Path(args.audio_dir)
    out_dir = Path(args.out_dir)
    if args.protocol:
        utts = [r.utt_id for r in _records(args.protocol)]
    else:
        utts = sorted(p.stem for p in audio_dir.glob("*.wav"))
    missing = [u for u in utts if not (audio_dir / f"{u}.wav").is_file()]
    if missing:
        raise SpoofCMError(f"{len(missing)} audio files missing: {' '.join(missing[:20])}")
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs = [(str(audio_dir / f"{u}.wav"), str(out_dir), u, cfg.lfcc.to_dict()) for u in utts]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_extract_one, jobs, chunksize=8))
    else:
        results = [_extract_one(j) for j in jobs]
    failed = [(u, err) for u, err in results if err]
    for u, err in failed:
        print(f"error: {u}: {err}", file=sys.stderr)
    print(f"extracted {len(results) - len(failed)} of {len(results)} files into {out_dir}")
    write_manifest(out_dir / "manifest.json", "extract-features", args.argv, cfg,
                   [args.protocol, audio_dir])
    return 1 if failed else 0


def cmd_synth_data(args, cfg: RunConfig) -> int:
    from .synth import synth_dataset

    ds = synth_dataset(args.n_per_class, cfg.seed, args.out, args.amplitude, args.frames)
    print(f"wrote {len(ds.records)} trials: {ds.protocol}")
    write_manifest(Path(args.out) / "manifest.json", "synth-data", args.argv, cfg, [])
    return 0


def cmd_train(args, cfg: RunConfig) -> int:
    from .model import build_model
    from .training import FeatureStore, train

    records = _records(args.protocol)
    train_recs = [r for r in records if r.partition == "train"]
    dev_recs = [r for r in records if r.partition == "dev"]
    if not train_recs:
        raise ConfigError("protocol has no train-partition trials", "--protocol")
    model = build_model(cfg.model, seed=cfg.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = train(model, FeatureStore(args.features), train_recs, cfg.train, out, dev_recs,
                   progress=None if args.quiet else print)
    print(f"best epoch {result.best_epoch}; checkpoint {result.best_checkpoint}")
    write_manifest(out / "manifest.json", "train", args.argv, cfg, [args.protocol, args.features])
    return 0


def cmd_score(args, cfg: RunConfig) -> int:
    from .evaluation.scores import write_scores
    from .model import load_checkpoint
    from .training import FeatureStore, score_utterances

    model, _ = load_checkpoint(args.checkpoint)
    recs = _records(args.protocol, None if args.partition == "all" else args.partition)
    store = FeatureStore(args.features)
    store.require([r.utt_id for r in recs])
    scores = score_utterances(model, store, [r.utt_id for r in recs], cfg.train.score_batch_size)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_scores(args.out, scores)
    print(f"scored {len(scores)} trials into {args.out}")
    write_manifest(_manifest_next_to(args.out, "score"), "score", args.argv, cfg,
                   [args.checkpoint, args.protocol, args.features])
    return 0


def _keyed_scores(args):
    from .evaluation.scores import read_scores

    scores = read_scores(args.scores)
    return scores.split(_records(args.protocol))


def cmd_evaluate(args, cfg: RunConfig) -> int:
    from .evaluation.metrics import TdcfParams, asv_error_rates
    from .evaluation.scores import metric_report, read_asv_scores, write_report

    params = cfg.tdcf
    if args.tdcf:
        params = TdcfParams.from_dict({**params.to_dict(),
                                       **json.loads(Path(args.tdcf).read_text())})
    if args.asv_scores:
        params = params.with_asv_rates(asv_error_rates(*read_asv_scores(args.asv_scores)))
    cfg.tdcf = params  # manifest records the parameters actually used
    bona, spoof = _keyed_scores(args)
    report = metric_report(bona, spoof, params)
    text = json.dumps(report, indent=2, sort_keys=True)
    print(text)
    if args.out:
        write_report(args.out, report)
    write_manifest(_manifest_next_to(args.out, "evaluate"), "evaluate", args.argv, cfg,
                   [args.scores, args.protocol, args.tdcf, args.asv_scores])
    return 0


def cmd_det(args, cfg: RunConfig) -> int:
    from .evaluation.scores import write_det_csv

    n = write_det_csv(args.out, *_keyed_scores(args))
    print(f"wrote {n} operating points to {args.out}")
    write_manifest(_manifest_next_to(args.out, "det"), "det", args.argv, cfg,
                   [args.scores, args.protocol])
    return 0


def cmd_fuse(args, cfg: RunConfig) -> int:
    from .evaluation.scores import fuse_scores, read_scores, write_scores

    fused = fuse_scores([read_scores(p) for p in args.inputs])
    write_scores(args.out, fused)
    print(f"fused {len(args.inputs)} score files ({len(fused)} trials) into {args.out}")
    write_manifest(_manifest_next_to(args.out, "fuse"), "fuse", args.argv, cfg, args.inputs)
    return 0


def cmd_gradcheck(args, cfg: RunConfig) -> int:
    from .gradsuite import format_report, run_suite

    results = run_suite(cfg.seed, tol=args.tol)
    for name, rep in results:
        print(format_report(name, rep))
    failed = sum(not rep.passed for _, rep in results)
    print(f"{len(results) - failed}/{len(results)} gradient checks passed")
    write_manifest(_manifest_next_to(args.manifest_dir, "gradcheck"), "gradcheck", args.argv,
                   cfg, [])
    return 1 if failed else 0


# parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration JSON")
    common.add_argument("--seed", type=int, help="overrides the config seed")
    common.add_argument("--jobs", type=int, default=1, help="worker processes (extract-features)")

    parser = argparse.ArgumentParser(prog="spoofcm", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", metavar="SUBCOMMAND")
    sub.required = True

    p = sub.add_parser("extract-features", parents=[common], help="WAV -> .lfcc feature files")
    p.add_argument("--audio-dir", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--protocol", help="restrict to the utterances in this protocol")
    p.set_defaults(func=cmd_extract_features)

    p = sub.add_parser("synth-data", parents=[common], help="write a synthetic feature corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--n-per-class", type=int, default=256)
    p.add_argument("--amplitude", type=float, default=1.0)
    p.add_argument("--frames", type=int, default=400)
    p.set_defaults(func=cmd_synth_data)

    p = sub.add_parser("train", parents=[common], help="train a countermeasure model")
    p.add_argument("--protocol", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("score", parents=[common], help="score trials with a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--protocol", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--partition", default="eval", choices=("train", "dev", "eval", "all"))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("evaluate", parents=[common], help="EER and min-tDCF report")
    p.add_argument("--scores", required=True)
    p.add_argument("--protocol", required=True)
    p.add_argument("--tdcf", help="JSON file with t-DCF parameters")
    p.add_argument("--asv-scores", help="organizer ASV score file (key and score last)")
    p.add_argument("--out", help="also write the report JSON here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("det", parents=[common], help="DET operating points as CSV")
    p.add_argument("--scores", required=True)
    p.add_argument("--protocol", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_det)

    p = sub.add_parser("fuse", parents=[common], help="average several score files")
    p.add_argument("--in", dest="inputs", action="append", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("gradcheck", parents=[common], help="run the gradient-check suite")
    p.add_argument("--tol", type=float, default=1e-5)
    p.add_argument("--manifest-dir", help="where to write the run manifest")
    p.set_defaults(func=cmd_gradcheck)
    return parser


def load_config(args) -> RunConfig:
    cfg = RunConfig.from_json(args.config) if args.config else RunConfig()
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("must be a non-negative integer", "--seed")
        cfg.seed = args.seed
    if cfg.seed != cfg.train.seed:
        cfg.train = dataclasses.replace(cfg.train, seed=cfg.seed)
    cfg.validate_paths()
    return cfg


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    args.argv = argv
    try:
        cfg = load_config(args)
        return args.func(args, cfg)
    except SpoofCMError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()

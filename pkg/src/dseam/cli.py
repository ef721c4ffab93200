"""Command line front end: synth, seam, train, eval, bench."""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import bench as benchmod
from .corpus import Pair, load_corpus, load_pair, suite_corpus, write_corpus
from .imgcore import MaskPair, compose, derive_valid_mask, load_image, load_mask, region_partition, save_image, save_mask
from .loss import LossSpace, LossWeights, SelectionConsistencyLoss, prepare_loss_space
from .metrics import SWEEP_SIZES, extract_seam, quality_sweep
from .synth import suite_specs


class CliError(RuntimeError):
    pass


def read_config(path) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment. Keys may use - or _."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise CliError(f"{path}:{lineno}: expected 'key = value'")
            k, v = (s.strip() for s in line.split("=", 1))
            out[k.replace("-", "_")] = v
    return out


def _add_loss_flags(p):
    p.add_argument("--space", choices=[s.value for s in LossSpace], default="edge")
    p.add_argument("--m", type=int, default=9, help="box filter size (odd)")
    p.add_argument("--w1", type=float, default=200.0)
    p.add_argument("--w2", type=float, default=100.0)


def _add_corpus_flags(p):
    p.add_argument("--corpus", help="corpus directory (default: generated synthetic suite)")
    p.add_argument("--n", type=int, default=20, help="synthetic suite size")
    p.add_argument("--size", type=int, default=128, help="synthetic canvas size")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.01)
    p.add_argument("--exposure", type=float, default=0.1)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dseam", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    _add_corpus_flags(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("seam", help="seam for one pair")
    p.add_argument("method", choices=benchmod.METHODS)
    p.add_argument("--pair", help="DIR/ID of a corpus pair")
    p.add_argument("--a")
    p.add_argument("--b")
    p.add_argument("--a-mask")
    p.add_argument("--b-mask")
    p.add_argument("--weights")
    p.add_argument("--baseline-space", choices=[s.value for s in LossSpace], default="rgb")
    _add_loss_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train the mask network")
    _add_corpus_flags(p)
    _add_loss_flags(p)
    p.add_argument("--input-size", type=int, default=128, help="network input size")
    p.add_argument("--widths", default="8,16,32")
    p.add_argument("--iterations", type=int, default=20000)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--weights", help="output weight file (default OUT/net.bin)")
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="quality sweep for given masks")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--mask", required=True, help="A-side mask PNG")
    p.add_argument("--a-mask")
    p.add_argument("--b-mask")
    p.add_argument("--label", default="masks")
    p.add_argument("--pair-id", default="000")
    p.add_argument("--out", required=True, help="output CSV")

    p = sub.add_parser("bench", help="benchmark methods over a corpus")
    _add_corpus_flags(p)
    _add_loss_flags(p)
    p.add_argument("--methods", default="dp,gc,dseam-opt")
    p.add_argument("--weights")
    p.add_argument("--baseline-space", choices=[s.value for s in LossSpace], default="rgb")
    p.add_argument("--work-size", type=int)
    p.add_argument("--no-figures", action="store_true")
    p.add_argument("--no-artifacts", action="store_true")
    p.add_argument("--out", required=True)

    for p in sub.choices.values():
        p.add_argument("--config", help="key = value file; command-line flags override it")
    return ap


def _apply_config(parser, argv):
    args = parser.parse_args(argv)
    if not getattr(args, "config", None):
        return args
    cfg = read_config(args.config)
    sp = parser._subparsers._group_actions[0].choices[args.command]
    actions = {a.dest: a for a in sp._actions}
    defaults = {}
    for k, v in cfg.items():
        if k not in actions or k in ("config", "help"):
            raise CliError(f"unknown config key {k!r} for '{args.command}'")
        act = actions[k]
        if isinstance(act, argparse._StoreTrueAction):
            defaults[k] = v.lower() in ("1", "true", "yes", "on")
        else:
            defaults[k] = act.type(v) if act.type else v
        if act.choices is not None and defaults[k] not in act.choices:
            raise CliError(f"config {k} = {v!r} is not one of {list(act.choices)}")
    sp.set_defaults(**defaults)
    return parser.parse_args(argv)


def _weights(args) -> LossWeights:
    return LossWeights(args.w1, args.w2, args.m)


def _corpus(args) -> list[Pair]:
    if args.corpus:
        return load_corpus(args.corpus)
    return suite_corpus(args.n, seed=args.seed, size=args.size, noise=args.noise, exposure=args.exposure)


def _input_pair(args) -> Pair:
    if args.pair:
        root, pid = Path(args.pair).parent, Path(args.pair).name
        return load_pair(root, pid)
    if not (args.a and args.b):
        raise CliError("give --pair DIR/ID or both --a and --b")
    a, b = load_image(args.a), load_image(args.b)
    va = load_mask(args.a_mask) if args.a_mask else derive_valid_mask(a)
    vb = load_mask(args.b_mask) if args.b_mask else derive_valid_mask(b)
    return Pair(Path(args.a).stem, a, b, va, vb)


def cmd_synth(args) -> None:
    specs = suite_specs(args.n, seed=args.seed, size=args.size, noise=args.noise, exposure=args.exposure)
    from .corpus import synthetic_corpus
    write_corpus(synthetic_corpus(specs), args.out, specs)


def cmd_seam(args) -> None:
    from .net import load_weights
    from .optimizer import OptimConfig

    pair = _input_pair(args)
    part = region_partition(pair.valid_a, pair.valid_b)
    cfg = benchmod.BenchConfig(methods=(args.method,), space=args.space, baseline_space=args.baseline_space,
                               weights=_weights(args), optim=OptimConfig(seed=args.seed))
    net = load_weights(args.weights) if args.method == "dseam-net" else None
    masks = benchmod.run_method(args.method, pair, part, cfg, net)
    masks.check(part.valid_a, part.valid_b)
    seam = extract_seam(masks, part)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_mask(masks.mask_a, out / "mask_a.png")
    save_mask(masks.mask_b, out / "mask_b.png")
    comp = compose(pair.img_a, pair.img_b, masks.mask_a, masks.mask_b)
    save_image(comp, out / "composite.png")
    save_image(benchmod.seam_overlay(comp, seam), out / "seam_overlay.png")
    with open(out / "seam.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "y", "x"])
        w.writerows((i, y, x) for i, (y, x) in enumerate(seam.pixels))
    la, lb = prepare_loss_space(pair.img_a, pair.img_b, args.space, part.valid_a, part.valid_b)
    br = SelectionConsistencyLoss(la, lb, part, _weights(args))(masks.mask_a.astype(float))
    (out / "loss.json").write_text(br.to_json() + "\n")


def cmd_train(args) -> None:
    from .net import NetConfig, TrainConfig, TrainingPair, save_weights, train
    from .plotting import plot_loss_curve

    widths = tuple(int(x) for x in args.widths.split(","))
    ncfg = NetConfig(args.input_size, args.input_size, widths, seed=args.seed)
    tcfg = TrainConfig(lr=args.lr, iterations=args.iterations, seed=args.seed, space=args.space)
    pairs = [TrainingPair.build(p.img_a, p.img_b, p.valid_a, p.valid_b, ncfg, _weights(args), args.space)
             for p in _corpus(args)]
    res = train(pairs, ncfg, tcfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_weights(res.weights, args.weights or out / "net.bin")
    res.write_curve(out / "loss_curve.csv")
    plot_loss_curve([b.total for b in res.curve], out / "loss_curve.png")


def cmd_eval(args) -> None:
    a, b = load_image(args.a), load_image(args.b)
    va = load_mask(args.a_mask) if args.a_mask else derive_valid_mask(a)
    vb = load_mask(args.b_mask) if args.b_mask else derive_valid_mask(b)
    part = region_partition(va, vb)
    mask_a = load_mask(args.mask) & part.union
    masks = MaskPair(mask_a, part.union & ~mask_a)
    masks.check(va, vb)
    seam = extract_seam(masks, part)
    rows = quality_sweep(a, b, seam, SWEEP_SIZES, part.r12)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "pair", "N", "q_seam"])
        w.writerows((args.label, args.pair_id, n, repr(q)) for n, q in rows)


def cmd_bench(args) -> None:
    from .net import load_weights
    from .optimizer import OptimConfig

    methods = tuple(m for m in args.methods.split(",") if m)
    net = load_weights(args.weights) if args.weights else None
    if "dseam-net" in methods and net is None:
        raise CliError("dseam-net needs --weights")
    cfg = benchmod.BenchConfig(methods=methods, space=args.space, baseline_space=args.baseline_space,
                               weights=_weights(args), optim=OptimConfig(seed=args.seed),
                               work_size=args.work_size)
    corpus = _corpus(args)
    report = benchmod.run_benchmark(corpus, cfg, net)
    benchmod.emit_report(report, args.out, None if args.no_artifacts else corpus, figures=not args.no_figures)
    for s in report.summary():
        print(f"{s.method:10s} pairs={s.n_pairs} failed={s.n_failed} median_time_s={s.median_time_s:.4f} "
              f"fps={s.fps:.2f} q@15={s.mean_q.get(15, float('nan')):.5f}")


COMMANDS = {"synth": cmd_synth, "seam": cmd_seam, "train": cmd_train, "eval": cmd_eval, "bench": cmd_bench}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        COMMANDS[args.command](args)
    except SystemExit:
        raise
    except Exception as exc:  # noqa: BLE001 - reported as a machine-readable line
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point ``mmwave-dl``.

Every subcommand accepts ``--config``, ``--preset``, ``--seed`` and
``--out``.  On failure the last line on stderr is a JSON object
``{"error": <type>, "message": <text>}`` and the exit status is 1.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

from . import harness
from .checks import run_checks
from .nn import save_network

log = logging.getLogger("mmwave_dl")


def _common(p):
    p.add_argument("--config", type=Path, help="YAML experiment config")
    p.add_argument("--preset", choices=harness.PRESETS,
                   help="shipped config to start from (the file overrides it)")
    p.add_argument("--seed", type=int, help="override the experiment seed")
    p.add_argument("--out", type=Path, help="output path")
    p.add_argument("-v", "--verbose", action="store_true", help="log training progress")


def _point(p):
    p.add_argument("--snr", default=None,
                   help="SNR in dB (or 'mixed'); defaults to the first configured SNR")
    p.add_argument("--slots", type=int, default=None,
                   help="pilot slots K; defaults to the first configured value")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mmwave-dl",
        description="Learned channel estimation and quantized hybrid precoding for mmWave MIMO.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="simulate a training dataset file")
    _common(p)
    _point(p)
    p.add_argument("--kind", choices=("cenn", "thpnn"), required=True)
    p.add_argument("--count", type=int, help="number of records")
    p.add_argument("--cenn", type=Path, help="estimator checkpoint (precoder data only)")

    p = sub.add_parser("train-cenn", help="train the amplitude-estimation network")
    _common(p)
    _point(p)
    p.add_argument("--data", type=Path, help="dataset file (simulated when omitted)")

    p = sub.add_parser("train-thpnn", help="train the precoder network")
    _common(p)
    _point(p)
    p.add_argument("--data", type=Path, help="dataset file (simulated when omitted)")
    p.add_argument("--cenn", type=Path, help="estimator checkpoint (default: checkpoint dir)")

    for name, text in (("eval-nmse", "NMSE and ZF rate of the estimation schemes"),
                       ("eval-se", "spectral efficiency of the precoding schemes"),
                       ("sweep", "every configured scheme over the sweep grid")):
        p = sub.add_parser(name, help=text)
        _common(p)
        p.add_argument("--trials", type=int, help="override the Monte-Carlo trial count")
        p.add_argument("--train-missing", action="store_true",
                       help="train and save any model missing from the checkpoint dir")

    p = sub.add_parser("check", help="run the invariant self-checks")
    _common(p)
    return parser


def _experiment(args):
    exp = harness.load_config(args.config, args.preset)
    if args.seed is not None:
        exp = exp.replace(seed=args.seed)
    return exp


def _snr(args, exp):
    if args.snr is None:
        return exp.snr_db[0]
    return "mixed" if args.snr == "mixed" else float(args.snr)


def _slots(args, exp):
    return exp.k_slots[0] if args.slots is None else args.slots


def _progress(epoch, train, val, lr):
    log.info("epoch %d  train %.6g  val %.6g  lr %.3g", epoch, train, val, lr)


def cmd_gen_data(args, exp):
    cenn = None
    if args.kind == "thpnn":
        path = args.cenn or harness.cenn_path(exp, _snr(args, exp), _slots(args, exp))
        cenn = harness.load_model(path)[0]
    ds = harness.generate_dataset(exp, args.kind, _snr(args, exp), _slots(args, exp),
                                  count=args.count, cenn=cenn)
    out = args.out or Path(f"{args.kind}.data")
    harness.save_dataset(ds, out)
    print(f"wrote {ds.header['count']} records to {out}")


def cmd_train_cenn(args, exp):
    snr, K = _snr(args, exp), _slots(args, exp)
    if snr == "mixed":
        exp = exp.replace(mixed_snr=True)
    ds = harness.load_dataset(args.data) if args.data else None
    net, hist, meta = harness.train_cenn_model(exp, snr, K, dataset=ds, log=_progress)
    out = args.out or harness.cenn_path(exp, snr, K)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_network(net, out, meta)
    print(f"saved {out} (final val loss {hist.val_loss[-1]:.6g})")


def cmd_train_thpnn(args, exp):
    snr, K = _snr(args, exp), _slots(args, exp)
    if snr == "mixed":
        exp = exp.replace(mixed_snr=True)
    cenn_file = args.cenn or harness.cenn_path(exp, snr, K)
    cenn = harness.load_model(cenn_file)[0]
    ds = harness.load_dataset(args.data) if args.data else None
    net, hist, meta = harness.train_thpnn_model(exp, snr, K, cenn, dataset=ds, log=_progress)
    out = args.out or harness.thpnn_path(exp, snr, K)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_network(net, out, meta)
    print(f"saved {out} (final val loss {hist.val_loss[-1]:.6g})")


def _evaluate(args, exp, keep):
    schemes = tuple(s for s in exp.schemes if keep(s))
    if not schemes:
        raise ValueError("no matching schemes configured")
    exp = exp.replace(schemes=schemes)
    if args.trials is not None:
        exp = exp.replace(n_trials=args.trials)
    rows = harness.run_sweep(exp, train_missing=args.train_missing, log=_progress)
    out = args.out or Path(exp.out)
    harness.write_csv(rows, out)
    print(f"wrote {len(rows)} rows to {out}")


def cmd_check(args, exp):
    if not run_checks(sys.stdout):
        raise RuntimeError("invariant checks failed")


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train-cenn": cmd_train_cenn,
    "train-thpnn": cmd_train_thpnn,
    "eval-nmse": lambda a, e: _evaluate(a, e, lambda s: s in harness.ESTIMATION_SCHEMES),
    "eval-se": lambda a, e: _evaluate(a, e, lambda s: s not in harness.ESTIMATION_SCHEMES),
    "sweep": lambda a, e: _evaluate(a, e, lambda s: True),
    "check": cmd_check,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    try:
        exp = _experiment(args)
        COMMANDS[args.command](args, exp)
    except Exception as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

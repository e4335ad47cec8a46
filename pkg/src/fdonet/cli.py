"""Command-line entry point: ``fdonet generate|train|eval|sweep|ablate``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

Any flag can also come from a ``--config`` file of ``key = value`` lines
(keys are flag names without the leading dashes); explicit flags win.
Setting ``FDONET_DETERMINISTIC=1`` pins BLAS to one thread so reruns are
bitwise identical.
"""

from __future__ import annotations

import os

DETERMINISTIC_ENV = "FDONET_DETERMINISTIC"
if os.environ.get(DETERMINISTIC_ENV, "") not in ("", "0"):
    # must happen before numpy loads its BLAS
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[_var] = "1"

import argparse  # noqa: E402
import csv  # noqa: E402
import dataclasses  # noqa: E402
import logging  # noqa: E402
import sys  # noqa: E402

from . import dataset as ds  # noqa: E402
from .autograd.checkpoint import CheckpointError  # noqa: E402
from .metrics import aggregate  # noqa: E402
from .model import ConfigError, FdonConfig, VanillaConfig  # noqa: E402
from .sim import SimulationError  # noqa: E402
from . import train as tr  # noqa: E402

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
log = logging.getLogger("fdonet")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def deterministic_mode():
    return os.environ.get(DETERMINISTIC_ENV, "") not in ("", "0")


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def build_parser():
    p = _Parser(prog="fdonet", description="Seismic inversion workbench")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    g = sub.add_parser("generate", help="simulate a dataset")
    g.add_argument("--config")
    g.add_argument("--kind", required=True, choices=[k.value for k in ds.DatasetKind])
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--family", default="flat", choices=sorted(ds.FAMILY_TAGS))
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--grid", default="default", choices=["default", "toy"])
    g.add_argument("--workers", type=int, default=1)
    g.add_argument("--out", required=True)

    t = sub.add_parser("train", help="train a model on a dataset")
    t.add_argument("--config")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--model", default="fdon", choices=["fdon", "vanilla"])
    t.add_argument("--preset", default="full", choices=["full", "toy"])
    t.add_argument("--merger", choices=["multiply", "add", "concat"])
    t.add_argument("--layer-mix", choices=["F1U3", "F4", "U4"])
    t.add_argument("--channels", type=int)
    t.add_argument("--modes", type=int, nargs=2)
    t.add_argument("--epochs", type=int, default=20)
    t.add_argument("--batch-size", type=int, default=32)
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--lr-gamma", type=float, default=1.0)
    t.add_argument("--lr-step", type=int, default=1)
    t.add_argument("--val-fraction", type=float, default=0.125)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--zero-xi", action="store_true")
    t.add_argument("--resume")

    e = sub.add_parser("eval", help="evaluate a checkpoint, optionally on corrupted inputs")
    e.add_argument("--config")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--noise", type=float, default=0.0)
    e.add_argument("--missing", type=int, default=0)
    e.add_argument("--source-noise", type=float, default=0.0)
    e.add_argument("--seed", type=int, default=0)

    s = sub.add_parser("sweep", help="aggregate metrics along one axis")
    s.add_argument("--config")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--axis", required=True, choices=list(tr.SWEEP_AXES))
    s.add_argument("--grid", type=_floats)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)

    a = sub.add_parser("ablate", help="train and evaluate architecture variants")
    a.add_argument("--config")
    a.add_argument("--data", required=True)
    a.add_argument("--test-data")
    a.add_argument("--axis", required=True, choices=["merger", "layer-mix", "model"])
    a.add_argument("--out", required=True)
    a.add_argument("--preset", default="full", choices=["full", "toy"])
    a.add_argument("--epochs", type=int, default=20)
    a.add_argument("--batch-size", type=int, default=32)
    a.add_argument("--lr", type=float, default=1e-3)
    a.add_argument("--seed", type=int, default=0)
    return p


def _config_target(argv):
    """Subcommand name and ``--config`` path found in ``argv`` (either may be None)."""
    command = path = None
    for i, a in enumerate(argv):
        if command is None and a in COMMANDS:
            command = a
        if a == "--config" and i + 1 < len(argv):
            path = argv[i + 1]
        elif a.startswith("--config="):
            path = a.split("=", 1)[1]
    return command, path


def _apply_config_file(parser, argv):
    """Parse ``argv`` with defaults taken from ``--config`` when present."""
    argv = list(sys.argv[1:] if argv is None else argv)
    command, path = _config_target(argv)
    if command is None or path is None:
        return parser.parse_args(argv)
    try:
        values = ds.read_kv(path)
    except OSError as exc:
        raise ds.DatasetError(f"cannot read config file: {exc}") from None
    sub = parser._subparsers._group_actions[0].choices[command]
    dests = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, raw in values.items():
        dest = key.replace("-", "_")
        if dest not in dests or dest == "config":
            raise UsageError(f"unknown key {key!r} in config file {path}")
        action = dests[dest]
        if isinstance(action, argparse._StoreTrueAction):
            defaults[dest] = raw.lower() in ("1", "true", "yes")
        elif action.nargs == 2:
            defaults[dest] = [action.type(v) for v in raw.replace(",", " ").split()]
        elif action.type is not None:
            defaults[dest] = action.type(raw)
        else:
            defaults[dest] = raw
        if action.choices is not None and defaults[dest] not in action.choices:
            raise UsageError(f"invalid value {raw!r} for {key!r} in config file {path}")
        action.required = False
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def _grid(name):
    return ds.toy_grid() if name == "toy" else ds.default_grid()


def cmd_generate(args):
    os.makedirs(args.out, exist_ok=True)
    m = ds.build_dataset(args.kind, args.n, args.family, _grid(args.grid), args.seed, args.out,
                         workers=args.workers)
    print(f"wrote {m['n_samples']} samples ({m['n_skipped']} skipped) to {args.out}")
    print(f"kind={m['kind']} family={m['family']} seed={m['seed']} "
          f"seismic={m['file.seismic.shape']} velocity={m['file.velocity.shape']} "
          f"xi={m['file.xi.shape']}")
    return EXIT_OK


def model_config_for(data: ds.Dataset, model, preset, merger=None, layer_mix=None,
                     channels=None, modes=None):
    t, r = data.seismic.shape[1:3]
    if model == "vanilla":
        return VanillaConfig(n_time=t, n_receivers=r, map_shape=data.velocity.shape[1:],
                             xi_len=data.kind.xi_len)
    over = {k: v for k, v in dict(merger=merger, layer_mix=layer_mix, channels=channels).items()
            if v is not None}
    if modes is not None:
        over["modes"] = tuple(modes)
    if preset == "toy":
        if "channels" in over:
            c = over["channels"]
            over.setdefault("concat_split", (c - c // 4, c // 4))
        return tr.toy_model_config(t, r, data.kind.xi_len, **over)
    kw = dict(n_time=t, n_receivers=r, xi_len=data.kind.xi_len)
    if (t, r) != (1000, 70):
        kw["time_reduction"] = (t, t // 2, t // 4, r)
    if "channels" in over and "concat_split" not in over:
        c = over["channels"]
        over["concat_split"] = (c - c // 4, c // 4)
    cfg = FdonConfig(**kw, **over)
    cfg.validate()
    return cfg


def _train_arrays(data, cfg: tr.TrainConfig):
    arrays = tr.Arrays.from_dataset(data, zero_xi=cfg.zero_xi)
    tr_idx, va_idx = tr.split_indices(len(data), cfg.val_fraction, cfg.seed)
    return arrays.take(tr_idx), arrays.take(va_idx)


def cmd_train(args):
    data = ds.load_dataset(args.data)
    cfg = tr.TrainConfig(epochs=args.epochs, batch_size=args.batch_size, lr=args.lr,
                         lr_gamma=args.lr_gamma, lr_step=args.lr_step, seed=args.seed,
                         val_fraction=args.val_fraction, zero_xi=args.zero_xi)
    if args.resume:
        trainer = tr.Trainer.resume(args.resume, dataclasses.replace(
            tr.TrainConfig(**_ckpt_train_cfg(args.resume)), epochs=args.epochs))
        cfg = trainer.cfg
    else:
        mcfg = model_config_for(data, args.model, args.preset, args.merger, args.layer_mix,
                                args.channels, args.modes)
        model = tr.build_model(args.model, mcfg, args.seed)
        trainer = tr.Trainer(model, args.model, cfg, meta=dict(
            norm=dataclasses.asdict(data.stats), kind=data.kind.value, zero_xi=cfg.zero_xi))
    train, val = _train_arrays(data, cfg)
    try:
        trainer.fit(train, val, out_dir=args.out, log_csv=os.path.join(args.out, "train_log.csv"))
    finally:
        if trainer.history:
            tr.write_history(os.path.join(args.out, "train_log.csv"), trainer.history)
    last = trainer.history[-1] if trainer.history else None
    print(f"trained {trainer.model.num_parameters()} parameters for {trainer.epoch} epochs"
          + (f"; final train loss {last['train_loss']:.6g}, val loss {last['val_loss']:.6g}"
             if last else ""))
    return EXIT_OK


def _ckpt_train_cfg(path):
    from .autograd import load_checkpoint

    _, meta = load_checkpoint(path)
    return meta["train"]


def _load_for_eval(args):
    model, meta = tr.load_model(args.checkpoint)
    data = ds.load_dataset(args.data)
    return model, meta, data


def cmd_eval(args):
    model, meta, data = _load_for_eval(args)
    c = tr.Corruption(noise=args.noise, missing=args.missing, source_noise=args.source_noise,
                      seed=args.seed)
    reports = tr.evaluate_model(model, data, c, zero_xi=bool(meta.get("zero_xi", False)))
    tr.write_eval_csv(args.out, data, reports)
    agg = aggregate(reports)
    print(f"mae={agg.mae:.6g} rmse={agg.rmse:.6g} ssim={agg.ssim:.6g} l2rel={agg.l2rel:.6g}")
    return EXIT_OK


def cmd_sweep(args):
    model, meta, data = _load_for_eval(args)
    grid = args.grid
    if grid is not None and args.axis == "missing":
        grid = [int(v) for v in grid]
    rows = tr.sweep(model, data, args.axis, grid, seed=args.seed,
                    zero_xi=bool(meta.get("zero_xi", False)))
    tr.write_sweep_csv(args.out, args.axis, rows)
    print(f"wrote {len(rows)} rows to {args.out}")
    return EXIT_OK


def cmd_ablate(args):
    data = ds.load_dataset(args.data)
    test = ds.load_dataset(args.test_data) if args.test_data else None
    variants = {"merger": [("multiply", {}), ("add", {}), ("concat", {})],
                "layer-mix": [("F1U3", {}), ("F4", {}), ("U4", {})],
                "model": [("fdon", {}), ("vanilla", {})]}[args.axis]
    cfg = tr.TrainConfig(epochs=args.epochs, batch_size=args.batch_size, lr=args.lr,
                         seed=args.seed)
    train, val = _train_arrays(data, cfg)
    rows = []
    for name, _ in variants:
        kw = {"merger": dict(merger=name), "layer-mix": dict(layer_mix=name), "model": {}}[args.axis]
        model_kind = name if args.axis == "model" else "fdon"
        model = tr.build_model(model_kind, model_config_for(data, model_kind, args.preset, **kw),
                               args.seed)
        trainer = tr.Trainer(model, model_kind, cfg)
        trainer.fit(train, val)
        eval_data = test if test is not None else data.subset(
            tr.split_indices(len(data), cfg.val_fraction, cfg.seed)[1])
        agg = aggregate(tr.evaluate_model(model, eval_data))
        rows.append([name, model.num_parameters(), *dataclasses.astuple(agg)])
        print(f"{name}: l2rel={agg.l2rel:.6g} ssim={agg.ssim:.6g}")
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["variant", "parameters", "mae", "rmse", "ssim", "l2rel"])
        for r in rows:
            w.writerow([r[0], r[1], *(repr(float(v)) for v in r[2:])])
    return EXIT_OK


COMMANDS = {"generate": cmd_generate, "train": cmd_train, "eval": cmd_eval,
            "sweep": cmd_sweep, "ablate": cmd_ablate}


def main(argv=None):
    parser = build_parser()
    try:
        args = _apply_config_file(parser, argv)
        if args.command is None:
            raise UsageError("fdonet: a command is required (generate, train, eval, sweep, ablate)")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(message)s")
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except (tr.TrainingDiverged, SimulationError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ds.DatasetError, CheckpointError, ConfigError, OSError, KeyError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

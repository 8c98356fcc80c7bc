"""Command-line entry point: ``evireg {synth-data,train,eval,grad-audit,ood-eval}``.

Configuration is a flat JSON object with dotted keys (``train.epochs``).
Resolution order: built-in defaults, ``--config`` file, ``--seed``, then
each ``--set key=value`` (values parsed as JSON, falling back to strings).
The resolved config is written to ``<out>/config.json``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 audit failure.
"""

import argparse
import csv
from dataclasses import replace
import json
import logging
from pathlib import Path
import sys

import numpy as np

from . import audit
from .data import DataError, Normalization, gen_synthetic, load_csv, make_ood_inputs, write_csv, zscore_fit_apply
from .experiment import ood_report, region_rmse
from .losses import AuxLossKind, LossPartials, nll_partials
from .net import NetConfig, load_checkpoint, save_checkpoint
from .train import TrainConfig, evaluate, train

log = logging.getLogger("evireg")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_AUDIT = 0, 1, 2, 3

DEFAULTS = {
    "seed": 0,
    "data.seed": None,
    "data.train_csv": None,
    "data.test_csv": None,
    "data.target_column": "y",
    "data.normalize": True,
    "net.hidden_sizes": [100, 100, 100],
    "net.activation": "tanh",
    "net.seed": None,
    "train.learning_rate": 0.01,
    "train.weight_decay": 1e-3,
    "train.reg_coeff": 1e-2,
    "train.batch_size": 128,
    "train.epochs": 500,
    "train.aux": "lipschitz_mse",
    "train.seed": None,
    "train.conflict_window": 500,
    "checkpoint": None,
    "ood.n": 1000,
    "ood.seed": None,
    "ood.bins": 40,
    "audit.seed": 0,
    "audit.perturb_d_alpha": 0.0,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def resolve_config(config_path=None, seed=None, overrides=()):
    config = dict(DEFAULTS)
    if config_path:
        try:
            loaded = json.loads(Path(config_path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise UsageError(f"config file not found: {config_path}") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file {config_path} is not valid JSON: {exc}") from None
        if not isinstance(loaded, dict):
            raise UsageError("config file must hold a flat JSON object")
        config.update(loaded)
    if seed is not None:
        config["seed"] = seed
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise UsageError(f"--set expects key=value, got {item!r}")
        config[key.strip()] = parse_value(value.strip())
    unknown = sorted(set(config) - set(DEFAULTS))
    if unknown:
        raise UsageError(f"unknown config keys: {unknown}")
    for part in ("data", "net", "train", "ood"):
        if config[f"{part}.seed"] is None:
            config[f"{part}.seed"] = config["seed"]
    return config


def _net_config(config, input_dim):
    return NetConfig(
        input_dim=input_dim,
        hidden_sizes=tuple(config["net.hidden_sizes"]),
        activation=config["net.activation"],
        seed=int(config["net.seed"]),
    )


def _train_config(config):
    return TrainConfig(
        learning_rate=float(config["train.learning_rate"]),
        weight_decay=float(config["train.weight_decay"]),
        reg_coeff=float(config["train.reg_coeff"]),
        batch_size=int(config["train.batch_size"]),
        epochs=int(config["train.epochs"]),
        aux=AuxLossKind(config["train.aux"]),
        seed=int(config["train.seed"]),
        conflict_window=int(config["train.conflict_window"]),
    )


def _raw_splits(config):
    """Raw (train, test) datasets: CSV files when configured, else the synthetic benchmark."""
    train_csv, test_csv = config["data.train_csv"], config["data.test_csv"]
    target = config["data.target_column"]
    synth_train, synth_test = (None, None)
    if train_csv is None or test_csv is None:
        synth_train, synth_test = gen_synthetic(int(config["data.seed"]))
    train_ds = load_csv(train_csv, target) if train_csv else synth_train
    test_ds = load_csv(test_csv, target) if test_csv else synth_test
    return train_ds, test_ds


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _fmt(v):
    return "" if v is None else repr(float(v))


def cmd_synth_data(config, out):
    train_ds, test_ds = gen_synthetic(int(config["data.seed"]))
    write_csv(out / "synth_train.csv", train_ds)
    write_csv(out / "synth_test.csv", test_ds)
    log.info("wrote %d train / %d test rows to %s", len(train_ds), len(test_ds), out)
    return EXIT_OK


def cmd_train(config, out):
    train_ds, _ = _raw_splits(config)
    meta = {}
    if config["data.normalize"]:
        (train_ds,) = zscore_fit_apply(train_ds)
        meta = train_ds.normalization.as_meta()
    net_config = _net_config(config, train_ds.inputs.shape[1])
    train_config = _train_config(config)
    result = train(train_ds, net_config, train_config)

    with (out / "trace.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["iteration", "cosine", "moving_avg"])
        tr = result.trace
        for it, c, ma in zip(tr.iterations, tr.cosines, tr.moving_avg):
            writer.writerow([it, _fmt(c), _fmt(ma)])
    with (out / "losses.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "nll", "aux", "reg", "total"])
        for row in result.losses:
            writer.writerow([row.epoch, _fmt(row.nll), _fmt(row.aux), _fmt(row.reg), _fmt(row.total)])
    save_checkpoint(out / "checkpoint", net_config, result.params, meta)
    log.info("trained %d epochs; final total loss %.5f", train_config.epochs, result.losses[-1].total)
    return EXIT_OK


def _load_model(config, out):
    path = Path(config["checkpoint"] or out / "checkpoint")
    if not path.is_file():
        raise DataError(f"checkpoint not found: {path}")
    net_config, params, meta = load_checkpoint(path)
    norm = Normalization.from_meta(meta) if "y_mean" in meta else None
    return net_config, params, norm


def _apply_norm(dataset, norm):
    if norm is None:
        return dataset
    return replace(dataset, inputs=norm.apply_inputs(dataset.inputs),
                   targets=norm.apply_targets(dataset.targets), normalization=norm)


def cmd_eval(config, out):
    net_config, params, norm = _load_model(config, out)
    _, test_ds = _raw_splits(config)
    test_ds = _apply_norm(test_ds, norm)
    report = evaluate(params, test_ds, net_config)
    result = json.loads(report.to_json())
    if test_ds.region_tags is not None:
        result["region_rmse"] = region_rmse(params, test_ds, net_config)
    _write_json(out / "metrics.json", result)
    print(json.dumps(result, sort_keys=True))
    return EXIT_OK


def _perturbed_partials(delta):
    def partials(y, m):
        p = nll_partials(y, m)
        return LossPartials(p.d_gamma, p.d_nu, np.asarray(p.d_alpha) + delta, p.d_beta)

    return partials


def cmd_grad_audit(config, out):
    delta = float(config["audit.perturb_d_alpha"])
    partials_fn = _perturbed_partials(delta) if delta else nll_partials
    result = audit.run_all(seed=int(config["audit.seed"]), partials_fn=partials_fn)
    _write_json(out / "audit.json", result)
    for suite in result["suites"]:
        print(f"{suite['suite']}: {'PASS' if suite['passed'] else 'FAIL'}")
    return EXIT_OK if result["passed"] else EXIT_AUDIT


def cmd_ood_eval(config, out):
    net_config, params, norm = _load_model(config, out)
    _, test_ds = _raw_splits(config)
    id_ds = _apply_norm(test_ds, norm)
    ood_x = make_ood_inputs(int(config["ood.seed"]), int(config["ood.n"]))
    rep = ood_report(params, net_config, id_ds, ood_x)
    result = {
        "epistemic_auroc": rep.epistemic_auroc,
        "aleatoric_auroc": rep.aleatoric_auroc,
        "n_id": int(rep.id_epistemic.size),
        "n_ood": int(rep.ood_epistemic.size),
    }
    _write_json(out / "ood.json", result)

    with (out / "ood_scores.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["split", "x", "epistemic", "aleatoric"])
        raw_id_x = test_ds.inputs[:, 0]
        for split, xs, epi, ale in (("id", raw_id_x, rep.id_epistemic, rep.id_aleatoric),
                                    ("ood", rep.ood_inputs[:, 0], rep.ood_epistemic, rep.ood_aleatoric)):
            for x, e, a in zip(xs, epi, ale):
                writer.writerow([split, _fmt(x), _fmt(e), _fmt(a)])

    with (out / "ood_histogram.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["kind", "bin_left", "bin_right", "id_count", "ood_count"])
        for kind, a, b in (("log_epistemic", rep.id_epistemic, rep.ood_epistemic),
                           ("log_aleatoric", rep.id_aleatoric, rep.ood_aleatoric)):
            la, lb = np.log(a), np.log(b)
            edges = np.histogram_bin_edges(np.concatenate([la, lb]), bins=int(config["ood.bins"]))
            ca, _ = np.histogram(la, edges)
            cb, _ = np.histogram(lb, edges)
            for i in range(len(ca)):
                writer.writerow([kind, _fmt(edges[i]), _fmt(edges[i + 1]), int(ca[i]), int(cb[i])])
    print(json.dumps(result, sort_keys=True))
    return EXIT_OK


COMMANDS = {
    "synth-data": cmd_synth_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "grad-audit": cmd_grad_audit,
    "ood-eval": cmd_ood_eval,
}


def build_parser():
    parser = _Parser(prog="evireg", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="flat JSON config file")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="config override (repeatable)")
    parser.add_argument("--seed", type=int, help="default seed for data, net, train and ood")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = resolve_config(args.config, args.seed, args.overrides)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "config.json", config)
        return COMMANDS[args.command](config, out)
    except UsageError as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except DataError as exc:
        log.error("%s", exc)
        return EXIT_DATA
    except (ValueError, TypeError, KeyError) as exc:
        log.error("invalid configuration: %s", exc)
        return EXIT_USAGE
    except OSError as exc:
        log.error("%s", exc)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

"""Command-line driver: ``smoothcert <subcommand> --config c.json [overrides]``.

Exit status: 0 on success, 1 for usage or configuration errors, 2 for runtime
or training failures.
"""
import argparse
import csv
import io
import json
import logging
import math
import os
import sys

import numpy as np

from . import datasets
from .classifier import Classifier, ConfigError, Regime, TrainConfig, accuracy, train_classifier
from .diffusion import (
    TrainingError,
    build_schedule,
    load_denoiser,
    save_denoiser,
    select_tstar,
    single_shot_denoise,
    train_denoiser,
)
from .numerics.nets import FormatError, load_net, save_net
from .numerics.rng import Rng, Stream, context_id, permutation
from .numerics.stats import DomainError
from .shiftattack import AttackError, AttackParams, find_extreme_shift
from .shiftmeter import shift_study
from .smoothing import (
    DEFAULT_RADII,
    CertificationRecord,
    CertifyParams,
    SmoothedPipeline,
    acr_and_table,
    evaluate_certification,
    predict_smoothed,
)

log = logging.getLogger("smoothcert")

DEFAULTS = {
    "seed": 0,
    "output_dir": "smoothcert-out",
    "threads": 1,
    # data
    "dataset": "synthetic",
    "classes": 8,
    "side": 12,
    "contrast": 0.2,
    "jitter": 0.1,
    "n_train_per_class": 100,
    "n_test_per_class": 25,
    "idx_images": None,
    "idx_labels": None,
    "idx_test_images": None,
    "idx_test_labels": None,
    "max_train": 2000,
    "max_test": 500,
    # diffusion
    "T": 1000,
    "beta_start": 1e-4,
    "beta_end": 0.02,
    "denoiser_hidden": [256, 256],
    "denoiser_epochs": 30,
    "denoiser_batch": 64,
    "denoiser_lr": 1e-3,
    # classifier
    "classifier_hidden": [128, 64],
    "regime": "clean",
    "sigma": 0.5,
    "eta": 0.1,
    "M": 1,
    "r_adv": "inf",
    "epochs": 30,
    "finetune_epochs": 20,
    "batch": 64,
    "lr": 1e-3,
    "init": "auto",
    "denoised": "auto",
    # certification
    "n0": 100,
    "n": 1000,
    "alpha": 0.001,
    "num_samples": 200,
    "radii": list(DEFAULT_RADII),
    "wall_clock": False,
    # studies
    "sigmas": [0.25, 0.5, 1.0],
    "shift_samples": 200,
    "attack_samples": 8,
}

SUBCOMMANDS = ("gen-data", "train-denoiser", "train-classifier", "attack-dump",
               "shift-report", "certify", "predict", "report")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def build_parser():
    p = _Parser(prog="smoothcert", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=SUBCOMMANDS)
    p.add_argument("--config", help="flat JSON key/value file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config key (value parsed as JSON when possible)")
    p.add_argument("--output-dir", dest="output_dir")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--synthetic", action="store_const", const="synthetic", dest="dataset")
    p.add_argument("--idx-images", dest="idx_images")
    p.add_argument("--idx-labels", dest="idx_labels")
    p.add_argument("--regime", choices=[r.value for r in Regime])
    p.add_argument("--sigma", type=float)
    p.add_argument("--eta", type=float)
    p.add_argument("--M", type=int, dest="M")
    p.add_argument("--r-adv", dest="r_adv")
    p.add_argument("--epochs", type=int)
    p.add_argument("--init", help="'auto', 'scratch' or a SCN1 path to fine-tune from")
    p.add_argument("--denoised", choices=["auto", "on", "off"])
    p.add_argument("--n0", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--num-samples", type=int, dest="num_samples")
    p.add_argument("--wall-clock", action="store_const", const=True, dest="wall_clock",
                   help="write measured seconds into the certification CSV")
    return p


def load_config(args):
    cfg = dict(DEFAULTS)
    if "SMOOTHCERT_THREADS" in os.environ:
        cfg["threads"] = int(os.environ["SMOOTHCERT_THREADS"])
    if args.config:
        if not os.path.isfile(args.config):
            raise UsageError(f"config file not found: {args.config}")
        with open(args.config) as f:
            try:
                user = json.load(f)
            except json.JSONDecodeError as exc:
                raise UsageError(f"config file {args.config} is not valid JSON: {exc}") from None
        if not isinstance(user, dict):
            raise UsageError(f"config file {args.config} must hold a JSON object")
        unknown = sorted(set(user) - set(DEFAULTS))
        if unknown:
            raise UsageError(f"unknown config keys in {args.config}: {', '.join(unknown)}")
        cfg.update(user)
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep or key not in DEFAULTS:
            raise UsageError(f"bad --set {item!r}; expected KEY=VALUE with a known key")
        cfg[key] = _parse_value(value)
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    if cfg["dataset"] not in ("synthetic", "idx"):
        raise UsageError("dataset must be 'synthetic' or 'idx'")
    if args.idx_images or args.idx_labels:
        cfg["dataset"] = "idx"
    if not float(cfg["sigma"]) > 0 or any(not float(s) > 0 for s in cfg["sigmas"]):
        raise UsageError("every sigma must be positive")
    return cfg


def _r_adv(cfg):
    value = cfg["r_adv"]
    if value in (None, "inf", "unbounded", "UNBOUNDED"):
        return math.inf
    return float(value)


def _fmt_sigma(sigma):
    return f"{float(sigma):g}"


def _path(cfg, name):
    return os.path.join(cfg["output_dir"], name)


def _require(path, what):
    if not os.path.exists(path):
        raise UsageError(f"{what} not found: {path} (run the producing subcommand first)")
    return path


def _write_text(path, text):
    with open(path, "w", newline="") as f:
        f.write(text)


def _dump_json(obj):
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _echo_config(cfg, command):
    _write_text(_path(cfg, f"config.{command}.json"), _dump_json(cfg))


# --- subcommands -------------------------------------------------------------

def cmd_gen_data(cfg):
    if cfg["dataset"] == "synthetic":
        kw = dict(num_classes=int(cfg["classes"]), side=int(cfg["side"]),
                  jitter=float(cfg["jitter"]), contrast=float(cfg["contrast"]))
        train = datasets.gen_synthetic(int(cfg["n_train_per_class"]), seed=cfg["seed"] * 2 + 1, **kw)
        test = datasets.gen_synthetic(int(cfg["n_test_per_class"]), seed=cfg["seed"] * 2 + 2, **kw)
    else:
        for key in ("idx_images", "idx_labels"):
            if not cfg[key]:
                raise UsageError(f"idx dataset needs '{key}'")
            _require(cfg[key], key)
        train = datasets.load_idx(cfg["idx_images"], cfg["idx_labels"], cfg["max_train"])
        if cfg["idx_test_images"] and cfg["idx_test_labels"]:
            test = datasets.load_idx(cfg["idx_test_images"], cfg["idx_test_labels"], cfg["max_test"])
        else:
            # hold out the tail of the training file
            n_test = min(int(cfg["max_test"]), len(train) // 5)
            test = train.subset(np.arange(len(train) - n_test, len(train)))
            train = train.subset(np.arange(len(train) - n_test))
    datasets.save_split(train, _path(cfg, "train.scd"))
    datasets.save_split(test, _path(cfg, "test.scd"))
    log.info("wrote %d train / %d test samples (d=%d, C=%d)", len(train), len(test), train.dim, train.num_classes)


def _load_split(cfg, name):
    return datasets.load_split(_require(_path(cfg, f"{name}.scd"), f"{name} split"))


def _schedule(cfg):
    return build_schedule(int(cfg["T"]), float(cfg["beta_start"]), float(cfg["beta_end"]))


def cmd_train_denoiser(cfg):
    train = _load_split(cfg, "train")
    den = train_denoiser(train, _schedule(cfg), tuple(cfg["denoiser_hidden"]), int(cfg["denoiser_epochs"]),
                         int(cfg["denoiser_batch"]), float(cfg["denoiser_lr"]), cfg["seed"])
    save_denoiser(den, _path(cfg, "denoiser.scn"), _path(cfg, "schedule.sch"))
    _write_text(_path(cfg, "denoiser_loss.json"), _dump_json({"epoch_mean_loss": den.loss_trace}))
    log.info("denoiser loss %.4f -> %.4f", den.loss_trace[0] if den.loss_trace else float("nan"),
             den.loss_trace[-1] if den.loss_trace else float("nan"))


def _load_denoiser(cfg):
    return load_denoiser(_require(_path(cfg, "denoiser.scn"), "denoiser"), _path(cfg, "schedule.sch"))


def _classifier_path(cfg, regime=None):
    return _path(cfg, f"classifier_{regime or cfg['regime']}.scn")


def cmd_train_classifier(cfg):
    train = _load_split(cfg, "train")
    regime = Regime(cfg["regime"])
    init = None
    if cfg["init"] not in ("auto", "scratch"):
        init = Classifier(load_net(_require(cfg["init"], "initial weights")))
    elif cfg["init"] == "auto" and regime in (Regime.NTD_AUG, Regime.ADV_EPS):
        # fine-tune from the clean model when one exists
        clean = _classifier_path(cfg, Regime.CLEAN.value)
        if os.path.exists(clean):
            init = Classifier(load_net(clean))
    epochs = int(cfg["finetune_epochs"] if init is not None else cfg["epochs"])
    config = TrainConfig(regime, float(cfg["sigma"]) if regime != Regime.CLEAN else 0.0, float(cfg["eta"]),
                         int(cfg["M"]), _r_adv(cfg), epochs, int(cfg["batch"]), float(cfg["lr"]),
                         cfg["seed"], tuple(cfg["classifier_hidden"]))
    den = sch = None
    if regime in (Regime.NTD_AUG, Regime.ADV_EPS):
        den = _load_denoiser(cfg)
        sch = den.schedule
    clf = train_classifier(train, config, den, sch, init=init)
    save_net(clf.net, _classifier_path(cfg))
    summary = {"regime": regime.value, "epochs": epochs, "finetuned": init is not None,
               "epoch_mean_loss": clf.loss_trace, "train_accuracy": accuracy(clf, train)}
    _write_text(_path(cfg, f"classifier_{regime.value}.json"), _dump_json(summary))
    log.info("trained %s classifier, train accuracy %.4f", regime.value, summary["train_accuracy"])


def _pipeline(cfg, clf):
    regime = Regime(cfg["regime"])
    denoised = cfg["denoised"]
    if denoised == "auto":
        denoised = "off" if regime == Regime.GAUSS_AUG else "on"
    if denoised == "on":
        den = _load_denoiser(cfg)
        return SmoothedPipeline(clf, float(cfg["sigma"]), den, den.schedule)
    return SmoothedPipeline(clf, float(cfg["sigma"]))


def _selected_indices(cfg, n_total):
    k = min(int(cfg["num_samples"]), n_total)
    return np.sort(permutation(cfg["seed"], context_id(Stream.SELECT), n_total)[:k])


def _tag(cfg):
    return f"{cfg['regime']}_sigma{_fmt_sigma(cfg['sigma'])}"


def _records_csv(records, wall_clock):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["index", "label", "prediction", "radius", "correct", "seconds"])
    for r in records:
        w.writerow([r.index, r.label, r.prediction, repr(float(r.radius)), int(r.correct),
                    repr(float(r.seconds)) if wall_clock else "0.0"])
    return buf.getvalue()


def cmd_certify(cfg):
    test = _load_split(cfg, "test")
    clf = Classifier(load_net(_require(_classifier_path(cfg), f"{cfg['regime']} classifier")))
    pipe = _pipeline(cfg, clf)
    params = CertifyParams(int(cfg["n0"]), int(cfg["n"]), float(cfg["alpha"]), cfg["seed"])
    ids = _selected_indices(cfg, len(test))
    radii = [float(r) for r in cfg["radii"]]
    records, acr, table = evaluate_certification(pipe, test.subset(ids), params, radii,
                                                 threads=int(cfg["threads"]), indices=ids)
    tag = _tag(cfg)
    _write_text(_path(cfg, f"certify_{tag}.csv"), _records_csv(records, cfg["wall_clock"]))
    summary = {
        "regime": cfg["regime"], "sigma": float(cfg["sigma"]), "denoised": pipe.denoiser is not None,
        "t_star": pipe.t_star, "params": {"n0": params.n0, "n": params.n, "alpha": params.alpha},
        "selection_seed": cfg["seed"], "split": "test", "indices": [int(i) for i in ids],
        "acr": acr, "certified_accuracy": {f"{r:g}": v for r, v in zip(radii, table)},
    }
    _write_text(_path(cfg, f"certify_{tag}.json"), _dump_json(summary))
    with open(_path(cfg, f"certify_{tag}.timing.log"), "w") as f:
        for r in records:
            f.write(f"{r.index} {r.seconds:.6f}\n")
    log.info("certified %d samples: ACR %.4f", len(records), acr)


def cmd_predict(cfg):
    test = _load_split(cfg, "test")
    clf = Classifier(load_net(_require(_classifier_path(cfg), f"{cfg['regime']} classifier")))
    pipe = _pipeline(cfg, clf)
    params = CertifyParams(int(cfg["n0"]), int(cfg["n"]), float(cfg["alpha"]), cfg["seed"])
    ids = _selected_indices(cfg, len(test))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["index", "label", "prediction", "correct"])
    hits = 0
    for i in ids:
        pred = predict_smoothed(pipe, test.inputs[i], params, int(i))
        hits += pred == test.labels[i]
        w.writerow([int(i), int(test.labels[i]), pred, int(pred == test.labels[i])])
    _write_text(_path(cfg, f"predict_{_tag(cfg)}.csv"), buf.getvalue())
    log.info("smoothed accuracy %.4f over %d samples", hits / len(ids), len(ids))


def write_pgm(path, x, side):
    """Binary PGM (P5, maxval 255) of a [-1, 1] raster, clamped."""
    pix = np.clip(np.rint((np.asarray(x) + 1.0) * 127.5), 0, 255).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P5\n{side} {side}\n255\n".encode("ascii"))
        f.write(pix.reshape(side, side).tobytes())


def cmd_attack_dump(cfg):
    test = _load_split(cfg, "test")
    if not test.side:
        raise UsageError("attack-dump needs square rasters")
    den = _load_denoiser(cfg)
    clf = Classifier(load_net(_require(_classifier_path(cfg), f"{cfg['regime']} classifier")))
    out = _path(cfg, "attack")
    os.makedirs(out, exist_ok=True)
    t_star = select_tstar(float(cfg["sigma"]), den.schedule)
    a, s = den.schedule.coefficients(t_star)
    rows = []
    for k in range(min(int(cfg["attack_samples"]), len(test))):
        x, y = test.inputs[k], int(test.labels[k])
        params = AttackParams(float(cfg["sigma"]), float(cfg["eta"]), int(cfg["M"]), _r_adv(cfg), cfg["seed"])
        eps0 = Rng(cfg["seed"], context_id(Stream.ATTACK, k)).gaussian(x.shape)
        x_adv, _, trace = find_extreme_shift(x, y, clf, den, den.schedule, params, eps0=eps0)
        baseline = single_shot_denoise(a * x + s * eps0, t_star, den, den.schedule)
        write_pgm(os.path.join(out, f"{k:04d}_clean.pgm"), x, test.side)
        write_pgm(os.path.join(out, f"{k:04d}_eps0.pgm"), baseline, test.side)
        write_pgm(os.path.join(out, f"{k:04d}_adv.pgm"), x_adv, test.side)
        rows.append({"index": k, "label": y, "loss_trace": [float(v) for v in trace]})
    _write_text(os.path.join(out, "losses.json"), _dump_json(rows))


def cmd_shift_report(cfg):
    test = _load_split(cfg, "test")
    den = _load_denoiser(cfg)
    n = min(int(cfg["shift_samples"]), len(test))
    report = shift_study(test, den, den.schedule, [float(s) for s in cfg["sigmas"]], n, cfg["seed"])
    for block in report.blocks:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["index", "l2_delta", "l2_denoised"])
        for i, a, b in zip(report.indices, block.l2_delta, block.l2_denoised):
            w.writerow([int(i), repr(float(a)), repr(float(b))])
        _write_text(_path(cfg, f"shift_sigma{_fmt_sigma(block.sigma)}.csv"), buf.getvalue())
    summary = {"split": "test", "seed": cfg["seed"], "blocks": [b.summary() for b in report.blocks]}
    _write_text(_path(cfg, "shift_summary.json"), _dump_json(summary))


def read_certify_csv(path):
    records = []
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            records.append(CertificationRecord(int(row["index"]), int(row["label"]), int(row["prediction"]),
                                               float(row["radius"]), float(row["seconds"])))
    return records


def cmd_report(cfg):
    out = cfg["output_dir"]
    names = sorted(f for f in os.listdir(out) if f.startswith("certify_") and f.endswith(".csv"))
    if not names:
        raise UsageError(f"no certify_*.csv files in {out}")
    radii = [float(r) for r in cfg["radii"]]
    rows = []
    for name in names:
        records = read_certify_csv(os.path.join(out, name))
        acr, table = acr_and_table(records, radii)
        rows.append({"run": name[len("certify_"):-len(".csv")], "samples": len(records), "acr": acr,
                     "certified_accuracy": {f"{r:g}": v for r, v in zip(radii, table)}})
    _write_text(os.path.join(out, "report.json"), _dump_json({"radii": radii, "rows": rows}))
    width = max(len(r["run"]) for r in rows)
    lines = [f"{'run':<{width}}  {'ACR':>6}  " + "  ".join(f"{r:>5.2f}" for r in radii)]
    for row in rows:
        cells = "  ".join(f"{100 * v:5.1f}" for v in row["certified_accuracy"].values())
        lines.append(f"{row['run']:<{width}}  {row['acr']:6.3f}  {cells}")
    _write_text(os.path.join(out, "report.txt"), "\n".join(lines) + "\n")
    print("\n".join(lines))


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train-denoiser": cmd_train_denoiser,
    "train-classifier": cmd_train_classifier,
    "attack-dump": cmd_attack_dump,
    "shift-report": cmd_shift_report,
    "certify": cmd_certify,
    "predict": cmd_predict,
    "report": cmd_report,
}


def run_subcommand(argv):
    logging.basicConfig(level=logging.INFO, format="%(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
        cfg = load_config(args)
        os.makedirs(cfg["output_dir"], exist_ok=True)
        _echo_config(cfg, args.command)
        COMMANDS[args.command](cfg)
    except (UsageError, ConfigError, FormatError, DomainError, ValueError) as exc:
        print(f"smoothcert: error: {exc}", file=sys.stderr)
        return 1
    except (TrainingError, AttackError, FloatingPointError, RuntimeError) as exc:
        print(f"smoothcert: runtime error: {exc}", file=sys.stderr)
        return 2
    return 0


def main():
    sys.exit(run_subcommand(sys.argv[1:]))


if __name__ == "__main__":
    main()

"""Command-line surface: train / evaluate / explain / perturb /
freqscale / synth.

Usage: ``audiolrp <command> --config <file> [--seed N] [--out DIR] ...``

The config file is plain ``key = value`` text (``#`` comments). Every
randomized stage draws from a child seed of the single top-level seed,
so a full train -> explain -> perturb run is byte-reproducible. Exit
codes: 0 success, 2 config error, 3 data error, 4 numeric failure.
"""

import argparse
import hashlib
import json
import os
import sys
import tempfile
from dataclasses import dataclass, fields, replace

import numpy as np

from . import checkpoint as ckpt
from . import dataset, evaluation, heatmap, lrp, nn, pipeline
from .errors import AudioLrpError, ConfigError, DataError

DEFAULT_FRACTIONS = (0.0, 0.01, 0.05, 0.1, 0.2, 0.4, 0.6, 0.8, 1.0)
DEFAULT_FACTORS = (1.5, 0.66)

ENV_DATA_ROOT = "AUDIOLRP_DATA"


@dataclass(frozen=True)
class RunConfig:
    task: str = "digit"
    model: str = "audionet"
    data: str = "synthetic"
    width: float = 1.0
    dropout: float = 0.5
    iterations: int = 0  # 0 -> preset value
    batch_size: int = 100
    lr: float = 0.0  # 0 -> preset value
    momentum: float = 0.9
    clip: float = 5.0
    halving: int = 0  # 0 -> preset value
    seed: int = 0
    rotation: int = 0
    train_per_class: int = 50
    val_per_class: int = 10
    test_per_class: int = 10
    epsilon: float = 1e-6
    bias_mode: str = "absorb"
    init_mode: str = "logit"
    fractions: tuple = DEFAULT_FRACTIONS
    factors: tuple = DEFAULT_FACTORS
    eval_every: int = 100
    out: str = "."

    @property
    def classes(self) -> int:
        return 10 if self.task == "digit" else 2

    @property
    def chance(self) -> float:
        return 1.0 / self.classes


def preset_train_config(model, task, cfg: RunConfig = None) -> nn.TrainConfig:
    """Reference training recipes for each (model, task) pair."""
    if model == "audionet":
        lr, halving = 1e-4, 10000
        iterations = 50000
        if task == "gender":
            halving, iterations = 5000, 10000
    elif model == "alexnet":
        lr, halving, iterations = 1e-3, 2500, 10000
    else:
        raise ConfigError(f"unknown model {model!r}")
    if cfg is not None:
        lr = cfg.lr or lr
        halving = cfg.halving or halving
        iterations = cfg.iterations or iterations
        return nn.TrainConfig(learning_rate=lr, momentum=cfg.momentum,
                              clip=cfg.clip, batch_size=cfg.batch_size,
                              iterations=iterations, halving_interval=halving,
                              seed=cfg.seed)
    return nn.TrainConfig(learning_rate=lr, iterations=iterations,
                          halving_interval=halving)


def parse_config_file(path) -> dict:
    values = {}
    try:
        with open(path) as f:
            lines = f.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for ln, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{ln}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = value
    return values


_TUPLE_KEYS = ("fractions", "factors")


def build_run_config(file_values: dict, overrides: dict) -> RunConfig:
    known = {f.name: f.type for f in fields(RunConfig)}
    kwargs = {}
    for key, raw in file_values.items():
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
        kwargs[key] = _coerce(key, raw)
    cfg = RunConfig(**kwargs)
    cfg = replace(cfg, **{k: v for k, v in overrides.items() if v is not None})
    if cfg.task not in ("digit", "gender"):
        raise ConfigError(f"task must be digit or gender, got {cfg.task!r}")
    if cfg.model not in ("audionet", "alexnet"):
        raise ConfigError(f"model must be audionet or alexnet, got {cfg.model!r}")
    return cfg


def _coerce(key, raw):
    defaults = RunConfig()
    current = getattr(defaults, key)
    if key in _TUPLE_KEYS:
        return tuple(float(v) for v in raw.split(","))
    if isinstance(current, bool):
        return raw.lower() in ("1", "true", "yes")
    if isinstance(current, int):
        return int(raw)
    if isinstance(current, float):
        return float(raw)
    return raw


def config_hash(cfg: RunConfig) -> str:
    payload = json.dumps({f.name: getattr(cfg, f.name) for f in fields(cfg)},
                         sort_keys=True, default=list)
    return hashlib.sha256(payload.encode()).hexdigest()[:12]


def _write_text(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-out-")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _manifest(cfg: RunConfig, command, filename, model_hash="-"):
    os.makedirs(cfg.out, exist_ok=True)
    line = (f"command={command} config={config_hash(cfg)} model={model_hash} "
            f"seed={cfg.seed} file={filename}\n")
    with open(os.path.join(cfg.out, "manifest.txt"), "a") as f:
        f.write(line)


def _seed_tree(seed):
    ss = np.random.SeedSequence(seed)
    names = ("synth_train", "synth_val", "synth_test", "pad", "init",
             "fit", "perturb")
    return dict(zip(names, ss.spawn(len(names))))


def build_model_spec(cfg: RunConfig) -> nn.ModelSpec:
    if cfg.model == "audionet":
        return nn.build_audionet(cfg.classes, width_scale=cfg.width)
    return nn.build_alexnet_variant(cfg.classes, width_scale=cfg.width,
                                    dropout_p=cfg.dropout)


def _record_label(rec, task):
    if task == "gender":
        return 0 if rec.gender == "male" else 1
    return rec.digit


def _load_record_waveform(rec):
    if rec.samples is not None:
        return pipeline.Waveform(rec.samples, rec.rate or pipeline.RATE)
    wave = pipeline.read_wav(rec.path)
    if wave.rate == pipeline.RATE_IN:
        wave = pipeline.resample_to_8k(wave)
    elif wave.rate != pipeline.RATE:
        raise DataError(f"{rec.path}: unsupported sample rate {wave.rate}")
    return wave


def _padded_signals(records, task, rng):
    signals = np.empty((len(records), pipeline.TARGET_LEN))
    labels = np.empty(len(records), dtype=np.int64)
    for i, rec in enumerate(records):
        signals[i] = pipeline.pad_random(_load_record_waveform(rec), rng).samples
        labels[i] = _record_label(rec, task)
    return signals, labels


def _spectrogram_batch(signals):
    out = np.empty((signals.shape[0], pipeline.CROP, pipeline.CROP))
    for i in range(signals.shape[0]):
        out[i] = pipeline.spectrogram_input(signals[i])
    return out


def load_dataset(cfg: RunConfig, seeds):
    """Returns dict with padded signals and labels for train/val/test."""
    if cfg.data == "synthetic":
        splits = {}
        n_per = {"train": cfg.train_per_class, "val": cfg.val_per_class,
                 "test": cfg.test_per_class}
        for split in ("train", "val", "test"):
            rng = np.random.default_rng(seeds[f"synth_{split}"])
            records = dataset.synth_generate(cfg.classes, n_per[split], rng)
            splits[split] = records
    else:
        root = cfg.data or os.environ.get(ENV_DATA_ROOT, "")
        records = dataset.scan_audiomnist(root)
        plan = dataset.make_folds(records, cfg.task,
                                  np.random.default_rng(seeds["synth_train"]))
        if cfg.task == "gender":
            keep = {s for split in plan.splits for s in split}
            records = [r for r in records if r.speaker in keep]
        splits = {"train": [], "val": [], "test": []}
        role_map = {"train": "train", "validation": "val", "test": "test"}
        for rec in records:
            role = plan.role_of(cfg.rotation, rec.speaker)
            splits[role_map[role]].append(rec)
    pad_rng = np.random.default_rng(seeds["pad"])
    out = {}
    for split, records in splits.items():
        signals, labels = _padded_signals(records, cfg.task, pad_rng)
        out[split] = (signals, labels)
    return out


def prepare_inputs(cfg: RunConfig, data):
    """Model-ready inputs per split; returns (inputs, labels, train_mean)."""
    if cfg.model == "audionet":
        return {k: (v[0][..., None], v[1]) for k, v in data.items()}, None
    specs = {k: _spectrogram_batch(v[0]) for k, v in data.items()}
    mean = pipeline.fit_mean(list(specs["train"]),
                             roles=["train"] * len(specs["train"]))
    out = {k: ((specs[k] - mean[None])[..., None], data[k][1]) for k in specs}
    return out, mean


def cmd_train(cfg: RunConfig) -> int:
    seeds = _seed_tree(cfg.seed)
    data = load_dataset(cfg, seeds)
    inputs, mean = prepare_inputs(cfg, data)
    spec = build_model_spec(cfg)
    model = nn.Model.initialize(spec, seed=np.random.default_rng(seeds["init"]))
    tcfg = preset_train_config(cfg.model, cfg.task, cfg)
    x_train, y_train = inputs["train"]
    x_val, y_val = inputs.get("val", (None, None))
    history = nn.fit(model, x_train, y_train, tcfg, x_val=x_val, y_val=y_val,
                     rng=np.random.default_rng(seeds["fit"]),
                     eval_every=cfg.eval_every)
    os.makedirs(cfg.out, exist_ok=True)
    lines = ["iteration,lr,loss,val_accuracy\n"]
    for it, lr_val, loss, val in history:
        lines.append(f"{it},{lr_val!r},{loss!r},{val!r}\n")
    _write_text(os.path.join(cfg.out, "train_log.csv"), "".join(lines))
    extras = {"train_mean": mean} if mean is not None else None
    path = os.path.join(cfg.out, "model.ckpt")
    ckpt.save_checkpoint(model, path, extras=extras)
    mh = ckpt.architecture_hash(spec)[:12]
    _manifest(cfg, "train", "train_log.csv", mh)
    _manifest(cfg, "train", "model.ckpt", mh)
    x_test, y_test = inputs["test"]
    acc = evaluation.evaluate_accuracy(model, x_test, y_test)
    print(f"train: done, test accuracy {acc:.4f}")
    return 0


def _load_model(cfg: RunConfig, path):
    model, extras = ckpt.load_checkpoint(path)
    mean = extras.get("train_mean")
    is_spectro = tuple(model.spec.input_shape) == (227, 227, 1)
    return model, mean, is_spectro


def cmd_evaluate(cfg: RunConfig, checkpoint_path) -> int:
    seeds = _seed_tree(cfg.seed)
    model, mean, is_spectro = _load_model(cfg, checkpoint_path)
    data = load_dataset(cfg, seeds)
    signals, labels = data["test"]
    if is_spectro:
        x = (_spectrogram_batch(signals) - mean[None])[..., None]
    else:
        x = signals[..., None]
    acc = evaluation.evaluate_accuracy(model, x, labels)
    text = (f"task,fold,accuracy,n\n"
            f"{cfg.task},test,{acc!r},{labels.size}\n")
    _write_text(os.path.join(cfg.out, "accuracy.csv"), text)
    _manifest(cfg, "evaluate", "accuracy.csv",
              ckpt.architecture_hash(model.spec)[:12])
    print(f"evaluate: test accuracy {acc:.4f}")
    return 0


def _explain_input(cfg, seeds, model, mean, is_spectro, input_path, index):
    if input_path is not None:
        wave = pipeline.read_wav(input_path)
        if wave.rate == pipeline.RATE_IN:
            wave = pipeline.resample_to_8k(wave)
        elif wave.rate != pipeline.RATE:
            raise DataError(f"{input_path}: unsupported sample rate {wave.rate}")
        padded = pipeline.pad_random(wave, np.random.default_rng(seeds["pad"]))
        signal = padded.samples
    else:
        data = load_dataset(cfg, seeds)
        signals, _ = data["test"]
        if not 0 <= index < signals.shape[0]:
            raise ConfigError(f"--index {index} out of range")
        signal = signals[index]
    if is_spectro:
        spec_vals = pipeline.spectrogram_input(signal)
        return signal, spec_vals, (spec_vals - mean)[..., None]
    return signal, None, signal[..., None]


def cmd_explain(cfg: RunConfig, checkpoint_path, input_path, index, target) -> int:
    seeds = _seed_tree(cfg.seed)
    model, mean, is_spectro = _load_model(cfg, checkpoint_path)
    signal, spec_vals, x = _explain_input(cfg, seeds, model, mean, is_spectro,
                                          input_path, index)
    if tuple(x.shape) != tuple(model.spec.input_shape):
        raise ConfigError(
            f"input representation {x.shape} does not match model input "
            f"{model.spec.input_shape}")
    logits, trace = nn.forward(model, x, record_trace=True)
    tgt = int(np.argmax(logits)) if target is None else int(target)
    lcfg = lrp.LrpConfig(epsilon=cfg.epsilon, bias_mode=cfg.bias_mode,
                         init_mode=cfg.init_mode)
    rmap = lrp.explain(model, trace, tgt, lcfg)
    os.makedirs(cfg.out, exist_ok=True)
    ckpt.save_tensor(rmap.values, os.path.join(cfg.out, "relevance.bin"))
    mh = ckpt.architecture_hash(model.spec)
    _write_text(os.path.join(cfg.out, "relevance.txt"),
                f"target {tgt}\nepsilon {lcfg.epsilon!r}\n"
                f"model_hash {mh}\n"
                f"zero_denominators {rmap.zero_denominators}\n")
    img = os.path.join(cfg.out, "heatmap.ppm")
    if is_spectro:
        heatmap.render_heatmap(rmap.values[..., 0], img, base=spec_vals)
    else:
        heatmap.render_waveform_heatmap(signal, rmap.values, img)
    for name in ("relevance.bin", "relevance.txt", "heatmap.ppm"):
        _manifest(cfg, "explain", name, mh[:12])
    print(f"explain: target {tgt}, total relevance {rmap.total:.5f}")
    return 0


def cmd_perturb(cfg: RunConfig, checkpoint_path) -> int:
    seeds = _seed_tree(cfg.seed)
    model, mean, is_spectro = _load_model(cfg, checkpoint_path)
    if is_spectro:
        raise ConfigError("perturb requires a waveform (audionet) checkpoint")
    data = load_dataset(cfg, seeds)
    signals, labels = data["test"]
    perturb_seed = int(np.random.default_rng(seeds["perturb"]).integers(2**31))
    strategies = [evaluation.SelectionStrategy(kind, seed=perturb_seed)
                  for kind in evaluation.STRATEGIES]
    lcfg = lrp.LrpConfig(epsilon=cfg.epsilon, bias_mode=cfg.bias_mode,
                         init_mode=cfg.init_mode)
    curve, audit = evaluation.perturbation_sweep(
        model, signals, labels, strategies, cfg.fractions, lcfg, task=cfg.task)
    _write_text(os.path.join(cfg.out, "curve.csv"),
                curve.to_csv(chance=cfg.chance))
    _write_text(os.path.join(cfg.out, "audit.jsonl"),
                "".join(json.dumps(row, sort_keys=True) + "\n" for row in audit))
    mh = ckpt.architecture_hash(model.spec)[:12]
    _manifest(cfg, "perturb", "curve.csv", mh)
    _manifest(cfg, "perturb", "audit.jsonl", mh)
    print(f"perturb: {len(curve.rows)} curve rows over {labels.size} examples")
    return 0


def cmd_freqscale(cfg: RunConfig, checkpoint_path, factors) -> int:
    seeds = _seed_tree(cfg.seed)
    model, mean, is_spectro = _load_model(cfg, checkpoint_path)
    if not is_spectro:
        raise ConfigError("freqscale requires a spectrogram (alexnet) checkpoint")
    if cfg.task != "gender":
        raise ConfigError("freqscale is defined for the gender task")
    data = load_dataset(cfg, seeds)
    signals, labels = data["test"]
    specs = _spectrogram_batch(signals)
    factors = factors or cfg.factors
    rows = ["task,factor,accuracy,n\n"]
    clean = evaluation.evaluate_accuracy(model, (specs - mean[None])[..., None],
                                         labels)
    rows.append(f"{cfg.task},1,{clean!r},{labels.size}\n")
    for factor in factors:
        scaled = np.stack([evaluation.scale_frequency_axis(s, factor)
                           for s in specs])
        acc = evaluation.evaluate_accuracy(model, (scaled - mean[None])[..., None],
                                           labels)
        rows.append(f"{cfg.task},{factor:g},{acc!r},{labels.size}\n")
    paired = evaluation.gender_flip_accuracy(
        model, specs, labels, low_class=0,
        factor_low=max(factors), factor_high=min(factors), mean=mean)
    rows.append(f"{cfg.task},paired,{paired!r},{labels.size}\n")
    _write_text(os.path.join(cfg.out, "freqscale.csv"), "".join(rows))
    _manifest(cfg, "freqscale", "freqscale.csv",
              ckpt.architecture_hash(model.spec)[:12])
    print(f"freqscale: clean {clean:.4f}, paired flip {paired:.4f}")
    return 0


def cmd_synth(cfg: RunConfig) -> int:
    seeds = _seed_tree(cfg.seed)
    rng = np.random.default_rng(seeds["synth_train"])
    records = dataset.synth_generate(cfg.classes, cfg.train_per_class, rng)
    meta = {}
    takes = {}
    for rec in records:
        meta.setdefault(rec.speaker, {"gender": rec.gender})
        spk_dir = os.path.join(cfg.out, rec.speaker)
        os.makedirs(spk_dir, exist_ok=True)
        take = takes.get((rec.speaker, rec.digit), 0)
        takes[(rec.speaker, rec.digit)] = take + 1
        pipeline.write_wav(
            os.path.join(spk_dir, f"{rec.digit}_{rec.speaker}_{take}.wav"),
            rec.samples, rec.rate)
    _write_text(os.path.join(cfg.out, "audioMNIST_meta.txt"),
                json.dumps(meta, indent=2, sort_keys=True))
    _manifest(cfg, "synth", "audioMNIST_meta.txt")
    print(f"synth: wrote {len(records)} recordings to {cfg.out}")
    return 0


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="audiolrp",
        description="Train small audio CNNs, explain them with relevance "
                    "propagation, and stress-test the explanations.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_ckpt=False):
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None, help="output directory")
        if needs_ckpt:
            p.add_argument("--checkpoint", required=True)

    common(sub.add_parser("train", help="train a model"))
    common(sub.add_parser("evaluate", help="test-set accuracy"), needs_ckpt=True)
    p = sub.add_parser("explain", help="relevance map + heatmap for one input")
    common(p, needs_ckpt=True)
    p.add_argument("--input", default=None, help="WAV file to explain")
    p.add_argument("--index", type=int, default=0,
                   help="index into the synthetic test set")
    p.add_argument("--target", type=int, default=None,
                   help="class to explain (default: predicted class)")
    common(sub.add_parser("perturb", help="three-strategy zeroing sweep"),
           needs_ckpt=True)
    p = sub.add_parser("freqscale", help="frequency-axis scaling accuracy")
    common(p, needs_ckpt=True)
    p.add_argument("--factors", default=None, help="comma list, e.g. 1.5,0.66")
    common(sub.add_parser("synth", help="write a synthetic AudioMNIST-layout tree"))
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        file_values = parse_config_file(args.config) if args.config else {}
        cfg = build_run_config(file_values, {"seed": args.seed, "out": args.out})
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "evaluate":
            return cmd_evaluate(cfg, args.checkpoint)
        if args.command == "explain":
            return cmd_explain(cfg, args.checkpoint, args.input, args.index,
                               args.target)
        if args.command == "perturb":
            return cmd_perturb(cfg, args.checkpoint)
        if args.command == "freqscale":
            factors = None
            if args.factors:
                factors = tuple(float(v) for v in args.factors.split(","))
            return cmd_freqscale(cfg, args.checkpoint, factors)
        if args.command == "synth":
            return cmd_synth(cfg)
        raise ConfigError(f"unknown command {args.command!r}")
    except AudioLrpError as exc:
        print(f"audiolrp: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"audiolrp: error: {exc}", file=sys.stderr)
        return DataError.exit_code


if __name__ == "__main__":
    sys.exit(main())

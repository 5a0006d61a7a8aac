"""Command line front end: ``gpsl {train,predict,eval,synth}``.

Every flag can also be given in a JSON config file (``--config run.json``)
under the flag's name with dashes or underscores; flags on the command line
win. Exit status is 0 on success, 1 on numerical failure and 2 on usage or
I/O errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path
from typing import Any, Sequence

from . import corpus as corpus_mod
from . import decode, evaluation, inference
from . import model as model_mod
from .errors import GPSLError, NumericalError
from .kernel import KernelSpec

log = logging.getLogger("gpsl")

DEFAULTS: dict[str, dict[str, Any]] = {
    "common": {"seed": 0, "verbose": False},
    "train": {
        "template": None, "deps": "-1", "kernel": "linear", "sigma_f2": 1.0, "kappa": 1.0,
        "jitter": None, "inner_tol": 1e-5, "outer_tol": 1e-4, "max_outer": 20,
        "mask_fraction": 0.0, "trace": None, "no_hypers": False, "learn_linear_scale": False,
    },
    "predict": {"out": None, "decoder": "rns", "rns_tol": 1e-6, "rns_max_iter": 100,
                "confidence": False},
    "eval": {
        "pred": None, "gold": None, "model": None, "test": None, "decoder": "rns",
        "rns_tol": 1e-6, "rns_max_iter": 100, "sweep": False, "data": None, "template": None,
        "mask_fractions": "0,0.1,0.3,0.5", "deps_variants": "-1;-1,1;-2,-1,1,2",
        "kernel": "linear", "sigma_f2": 1.0, "kappa": 1.0, "jitter": None,
        "inner_tol": 1e-5, "outer_tol": 1e-4, "max_outer": 20, "no_hypers": False,
        "learn_linear_scale": False, "out": None,
    },
    "synth": {"labels": 3, "length": 10, "count": 100, "strength": 3.0, "emission_dim": 5,
              "emission_noise": 0.5},
}

REQUIRED = {"train": ("data", "out"), "predict": ("model", "test"), "synth": ("out",)}


class UsageError(Exception):
    pass


def _kernel_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--kernel", choices=["linear", "se"], help="covariance family (default linear)")
    p.add_argument("--sigma-f2", type=float, help="signal variance (default 1)")
    p.add_argument("--kappa", type=float, help="inverse squared length-scale for se (default 1)")
    p.add_argument("--jitter", type=float, help="diagonal jitter (default 1e-6 * sigma_f2)")
    p.add_argument("--inner-tol", type=float, help="relative bound tolerance of the inner loop")
    p.add_argument("--outer-tol", type=float, help="relative bound tolerance of the outer loop")
    p.add_argument("--max-outer", type=int, help="maximum outer (hyperparameter) iterations")
    p.add_argument("--no-hypers", action="store_true", help="keep kernel hyperparameters fixed")
    p.add_argument("--learn-linear-scale", action="store_true",
                   help="also learn sigma_f2 of the linear kernel (fixed by default)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gpsl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help, argument_default=argparse.SUPPRESS)
        p.add_argument("--config", help="JSON file with default values for any flag")
        p.add_argument("--seed", type=int, help="random seed (default 0)")
        p.add_argument("-v", "--verbose", action="store_true")
        return p

    p = add("train", "train a model on a CoNLL file")
    p.add_argument("--data", help="training CoNLL file")
    p.add_argument("--template", help="CRF++ unigram template file (default: word unigram)")
    p.add_argument("--deps", help="comma separated signed offsets, e.g. -1 or -2,-1,1,2")
    _kernel_flags(p)
    p.add_argument("--mask-fraction", type=float, help="hide this fraction of training labels")
    p.add_argument("--out", help="model file to write")
    p.add_argument("--trace", help="write the bound trace as CSV to this file")

    p = add("predict", "label a CoNLL file with a trained model")
    p.add_argument("--model", help="model file")
    p.add_argument("--test", help="CoNLL file to label (last column: gold label or ?)")
    p.add_argument("--out", help="prediction file (default stdout)")
    p.add_argument("--decoder", choices=["rns", "viterbi"])
    p.add_argument("--rns-tol", type=float)
    p.add_argument("--rns-max-iter", type=int)
    p.add_argument("--confidence", action="store_true", help="append the max RNS probability")

    p = add("eval", "Hamming loss of predictions, of a model, or a missing-label sweep")
    p.add_argument("--pred", help="prediction file (predicted label in the last column)")
    p.add_argument("--gold", help="gold CoNLL file")
    p.add_argument("--model", help="model file (evaluate directly on --test)")
    p.add_argument("--test", help="gold CoNLL test file")
    p.add_argument("--decoder", choices=["rns", "viterbi"])
    p.add_argument("--rns-tol", type=float)
    p.add_argument("--rns-max-iter", type=int)
    p.add_argument("--sweep", action="store_true", help="run the missing-label sweep")
    p.add_argument("--data", help="training CoNLL file for --sweep")
    p.add_argument("--template", help="template file for --sweep")
    p.add_argument("--mask-fractions", help="comma separated mask fractions for --sweep")
    p.add_argument("--mask-fraction", type=float, help="single mask fraction for --sweep")
    p.add_argument("--deps-variants", help="';' separated dependency sets for --sweep")
    p.add_argument("--deps", help="single dependency set for --sweep")
    _kernel_flags(p)
    p.add_argument("--out", help="write the report table here (default stdout)")

    p = add("synth", "write a synthetic CoNLL corpus")
    p.add_argument("--labels", type=int, help="number of labels J")
    p.add_argument("--length", type=int, help="sentence length L")
    p.add_argument("--count", type=int, help="number of sentences N")
    p.add_argument("--strength", type=float, help="transition strength")
    p.add_argument("--emission-dim", type=int, help="words per label")
    p.add_argument("--emission-noise", type=float, help="probability of a uniformly random word")
    p.add_argument("--out", help="output CoNLL file")
    return parser


def resolve_config(ns: argparse.Namespace) -> dict[str, Any]:
    cfg = dict(DEFAULTS["common"])
    cfg.update(DEFAULTS[ns.command])
    given = vars(ns)
    if "config" in given:
        try:
            loaded = json.loads(Path(given["config"]).read_text(encoding="utf-8"))
        except OSError as exc:
            raise UsageError(f"cannot read config file {given['config']}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file {given['config']} is not valid JSON: {exc}") from exc
        if not isinstance(loaded, dict):
            raise UsageError("config file must hold a JSON object")
        cfg.update({k.replace("-", "_"): v for k, v in loaded.items()})
    cfg.update({k: v for k, v in given.items() if k != "config"})
    for key in REQUIRED.get(ns.command, ()):
        if cfg.get(key) is None:
            raise UsageError(f"--{key.replace('_', '-')} is required for {ns.command}")
    return cfg


def _read_file(path: str | None, what: str) -> Path:
    if path is None:
        raise UsageError(f"missing {what} path")
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{what} file not found: {p}")
    return p


def _kernel(cfg: dict) -> KernelSpec:
    return KernelSpec(cfg["kernel"], float(cfg["sigma_f2"]), float(cfg["kappa"]),
                      None if cfg["jitter"] is None else float(cfg["jitter"]))


def _opts(cfg: dict) -> inference.TrainOptions:
    return inference.TrainOptions(
        inner_tol=float(cfg["inner_tol"]), outer_tol=float(cfg["outer_tol"]),
        max_outer=int(cfg["max_outer"]), learn_hypers=not cfg["no_hypers"],
        learn_linear_scale=bool(cfg["learn_linear_scale"]), seed=int(cfg["seed"]),
    )


def _templates(cfg: dict) -> corpus_mod.TemplateSet:
    if cfg.get("template") is None:
        return corpus_mod.DEFAULT_TEMPLATES
    return corpus_mod.TemplateSet.read(_read_file(cfg["template"], "template"))


def _deps(text) -> model_mod.DependencySet:
    try:
        return model_mod.DependencySet.parse(str(text))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def cmd_train(cfg: dict) -> int:
    data = _read_file(cfg["data"], "training data")
    tset = _templates(cfg)
    deps = _deps(cfg["deps"])
    c = corpus_mod.apply_templates(corpus_mod.read_conll(data), tset)
    if cfg["mask_fraction"]:
        c = corpus_mod.mask_labels(c, float(cfg["mask_fraction"]), int(cfg["seed"]))
    t0 = time.perf_counter()
    m = inference.train(c, deps, _kernel(cfg), _opts(cfg))
    wall = time.perf_counter() - t0
    model_mod.save(m, cfg["out"])
    if cfg.get("trace"):
        inference.write_trace(cfg["trace"], m.trace)
    print(f"final bound: {m.meta['final_bound']:.6f}")
    print(f"outer iterations: {m.meta['outer_iterations']}")
    print(f"wall time: {wall:.3f} s")
    return 0


def _load_test(m: model_mod.TrainedModel, path: str) -> corpus_mod.Corpus:
    raw = corpus_mod.read_conll(_read_file(path, "test data"))
    return corpus_mod.apply_templates(raw, m.templates, freeze=True,
                                      feature_alphabet=m.feature_alphabet,
                                      label_alphabet=m.label_alphabet)


def cmd_predict(cfg: dict) -> int:
    m = model_mod.load(_read_file(cfg["model"], "model"))
    if cfg["decoder"] == "viterbi" and cfg["confidence"]:
        raise UsageError("--confidence is only available with the rns decoder")
    c = _load_test(m, cfg["test"])
    results = decode.decode_corpus(m, c, cfg["decoder"], float(cfg["rns_tol"]), int(cfg["rns_max_iter"]))
    text = decode.format_predictions(m, c, results, bool(cfg["confidence"]))
    if cfg["out"]:
        Path(cfg["out"]).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    if cfg["decoder"] == "rns":
        mean_it = sum(r.iterations for r in results) / len(results)
        print(f"mean RNS iterations: {mean_it:.3f}", file=sys.stderr if not cfg["out"] else sys.stdout)
    return 0


def _emit(cfg: dict, text: str) -> None:
    if cfg.get("out"):
        Path(cfg["out"]).write_text(text, encoding="utf-8")
    sys.stdout.write(text)


def cmd_eval(cfg: dict) -> int:
    if cfg["sweep"]:
        return _eval_sweep(cfg)
    if cfg["model"] is not None:
        m = model_mod.load(_read_file(cfg["model"], "model"))
        c = _load_test(m, cfg["test"])
        r = evaluation.evaluate(m, c, cfg["decoder"], float(cfg["rns_tol"]), int(cfg["rns_max_iter"]))
        name = Path(cfg["test"]).name
        _emit(cfg, evaluation.REPORT_HEADER + "\n"
              + f"{name},{r.decoder},0,\"{m.deps}\",{r.loss_percent},{r.accuracy:.6f},"
                f"{r.mean_iterations:.3f},{r.wall_time:.3f}\n")
        return 0
    if cfg["pred"] is None or cfg["gold"] is None:
        raise UsageError("eval needs --pred and --gold, --model and --test, or --sweep")
    pred = corpus_mod.read_conll(_read_file(cfg["pred"], "prediction"))
    gold = corpus_mod.read_conll(_read_file(cfg["gold"], "gold"))
    if [len(s) for s in pred.sentences] != [len(s) for s in gold.sentences]:
        raise UsageError("prediction and gold files have different sentence structure")
    # prediction files repeat the input columns, then the label, then optional confidence
    col = gold.n_columns if pred.n_columns > gold.n_columns else -1
    loss = count = 0
    for ps, gs in zip(pred.sentences, gold.sentences):
        for pc, gc in zip(ps, gs):
            if gc[-1] == corpus_mod.MISSING_LABEL:
                continue
            count += 1
            loss += pc[col] != gc[-1]
    if count == 0:
        raise UsageError("gold file has no labeled tokens")
    frac = loss / count
    _emit(cfg, f"hamming loss: {evaluation.format_percent(frac)}%\n"
               f"accuracy: {1.0 - frac:.6f}\ntokens: {count}\n")
    return 0


def _eval_sweep(cfg: dict) -> int:
    tset = _templates(cfg)
    tr = corpus_mod.apply_templates(corpus_mod.read_conll(_read_file(cfg["data"], "training data")), tset)
    te = corpus_mod.apply_templates(corpus_mod.read_conll(_read_file(cfg["test"], "test data")), tset,
                                    freeze=True, feature_alphabet=tr.feature_alphabet,
                                    label_alphabet=tr.label_alphabet)
    if cfg.get("mask_fraction") is not None:
        fractions = [float(cfg["mask_fraction"])]
    else:
        fractions = [float(f) for f in str(cfg["mask_fractions"]).split(",") if f.strip()]
    if cfg.get("deps") is not None:
        variants = [_deps(cfg["deps"])]
    else:
        variants = [_deps(v) for v in str(cfg["deps_variants"]).split(";")]
    table = evaluation.missing_sweep(tr, te, fractions, variants, int(cfg["seed"]),
                                     _kernel(cfg), _opts(cfg), cfg["decoder"])
    _emit(cfg, table.csv(Path(cfg["test"]).name))
    return 0


def cmd_synth(cfg: dict) -> int:
    raw = corpus_mod.synth_raw(int(cfg["labels"]), int(cfg["length"]), int(cfg["count"]),
                               float(cfg["strength"]), int(cfg["emission_dim"]), int(cfg["seed"]),
                               float(cfg["emission_noise"]))
    corpus_mod.write_conll(cfg["out"], raw.sentences)
    return 0


COMMANDS = {"train": cmd_train, "predict": cmd_predict, "eval": cmd_eval, "synth": cmd_synth}


_OFFSET_FLAGS = ("--deps", "--deps-variants")


def _glue_offsets(argv: Sequence[str]) -> list[str]:
    """``--deps -2,-1`` -> ``--deps=-2,-1`` so argparse does not read it as a flag."""
    out, it = [], iter(argv)
    for a in it:
        if a in _OFFSET_FLAGS:
            nxt = next(it, None)
            out.append(a if nxt is None else f"{a}={nxt}")
        else:
            out.append(a)
    return out


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    ns = parser.parse_args(_glue_offsets(sys.argv[1:] if argv is None else argv))
    try:
        cfg = resolve_config(ns)
        logging.basicConfig(level=logging.INFO if cfg["verbose"] else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[ns.command](cfg)
    except NumericalError as exc:
        print(f"gpsl {ns.command}: numerical failure: {exc}", file=sys.stderr)
        return 1
    except (UsageError, GPSLError, OSError, ValueError) as exc:
        print(f"gpsl {ns.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Command-line pipeline driver.

Every subcommand writes into an artifact directory (``--out``) holding its
outputs and exactly one ``manifest.json`` with the resolved configuration.
Options can also come from a flat JSON file (``--config``); flags win.
Paths of the form ``toy:NAME`` refer to the bundled toy data files.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable

from . import __version__
from .align import (SentenceAlignment, TranslationTable, read_pharaoh, train_ibm1,
                    viterbi_align, write_pharaoh)
from .corpus import (ParallelPair, read_corpus, read_parallel, tokenize, write_corpus,
                     write_parallel)
from .ecgen import EcGenConfig, generate_ec
from .fusion import EmissionSequence, FusionConfig, fused_beam_decode
from .lm import (STRATEGY_CELLS, GenSource, LanguageModel, LMConfig, Strategy, eval_ppl,
                 run_strategy_matrix, train_lm)
from .metrics import corpus_report, edit_distance, normalize_for_cer
from .neural import NumericalError, TrainerConfig
from .pointer_gen import (PointerGenConfig, PointerGenerator, build_pg_vocab, export_trace,
                          train as train_pg)
from .toy import data_path

log = logging.getLogger("codeswitch")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# Defaults per subcommand; the keys are also the accepted config-file keys.
DEFAULTS: dict[str, dict] = {
    "tokenize": {"input": None, "parallel": False},
    "align-train": {"parallel": None, "iterations": 5, "diagonal_bias": 0.0},
    "align": {"parallel": None, "table": None},
    "ec-generate": {"parallel": None, "alignments": None, "table": None, "max_switches": 2,
                    "samples_per_pair": 3},
    "pg-train": {"parallel": None, "targets": None, "valid_parallel": None,
                 "valid_targets": None, "hidden_size": 64, "embed_size": 32,
                 "vocab_cap": 2000, "epochs": 20, "lr": 1.0, "decay": 0.5, "clip": 5.0},
    "pg-generate": {"model": None, "parallel": None, "beams": 5, "n_best": 3,
                    "max_len": 40, "traces": True},
    "lm-train": {"train": None, "generated": None, "valid": None, "strategy": "RealOnly",
                 "hidden_size": 200, "unroll": 35, "batch_size": 20, "dropout": 0.2,
                 "max_epochs": 40, "patience": 5, "lr": 20.0, "decay": 0.75, "clip": 0.25,
                 "fine_tune_lr": 1.0, "vocab_cap": 50000},
    "lm-eval": {"model": None, "corpus": None},
    "strategy-matrix": {"train": None, "valid": None, "test": None, "ec": None,
                        "pointer_gen": None, "external": None, "cells": None,
                        "hidden_size": 200, "unroll": 35, "batch_size": 20, "dropout": 0.2,
                        "max_epochs": 40, "patience": 5, "lr": 20.0, "decay": 0.75,
                        "clip": 0.25, "fine_tune_lr": 1.0, "vocab_cap": 50000},
    "metrics": {"corpus": None, "reference": None, "cer_ref": None, "cer_hyp": None},
    "fuse-decode": {"emissions": None, "lm": None, "alpha": 1.0, "beta": 0.0, "gamma": 0.0,
                    "beams": 8, "n_best": 5},
    "trace-export": {"model": None, "parallel": None, "max_len": 40},
}
GLOBAL_DEFAULTS = {"seed": 0, "threads": 1, "format": "both"}
REQUIRED = {
    "tokenize": ["input"], "align-train": ["parallel"], "align": ["parallel", "table"],
    "ec-generate": ["parallel"], "pg-train": ["parallel", "targets"],
    "pg-generate": ["model", "parallel"], "lm-train": ["train"], "lm-eval": ["model", "corpus"],
    "strategy-matrix": ["train", "valid", "test"], "metrics": ["corpus"],
    "fuse-decode": ["emissions"], "trace-export": ["model", "parallel"],
}


def _bool(text: str) -> bool:
    if text.lower() in ("1", "true", "yes"):
        return True
    if text.lower() in ("0", "false", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="codeswitch", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, defaults in DEFAULTS.items():
        p = sub.add_parser(name)
        p.add_argument("--out", required=True, help="artifact directory")
        p.add_argument("--config", help="flat JSON file of option values")
        p.add_argument("--force", action="store_true", help="overwrite an existing artifact dir")
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=int)
        p.add_argument("--format", choices=["json", "csv", "both"])
        p.add_argument("-v", "--verbose", action="store_true")
        for key, default in defaults.items():
            flag = "--" + key.replace("_", "-")
            if isinstance(default, bool):
                p.add_argument(flag, dest=key, type=_bool, metavar="BOOL")
            elif isinstance(default, float):
                p.add_argument(flag, dest=key, type=float)
            elif isinstance(default, int):
                p.add_argument(flag, dest=key, type=int)
            else:
                p.add_argument(flag, dest=key)
    return parser


def resolve_config(args: argparse.Namespace) -> dict:
    known = {**GLOBAL_DEFAULTS, **DEFAULTS[args.command]}
    cfg = dict(known)
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise UsageError(f"config {args.config}: invalid JSON ({exc})") from None
        if not isinstance(data, dict):
            raise UsageError(f"config {args.config}: expected a JSON object")
        for key, value in data.items():
            if key not in known:
                raise UsageError(f"config {args.config}: unknown field {key!r}")
            if known[key] is not None and value is not None \
                    and not isinstance(value, type(known[key])) \
                    and not (isinstance(known[key], float) and isinstance(value, int)):
                raise UsageError(f"config {args.config}: field {key!r} should be "
                                 f"{type(known[key]).__name__}")
            cfg[key] = value
    for key in known:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    for key in REQUIRED[args.command]:
        if cfg.get(key) is None:
            raise UsageError(f"missing required option --{key.replace('_', '-')}")
    return cfg


def _path(value: str) -> Path:
    if value.startswith("toy:"):
        return data_path(value[4:])
    path = Path(value)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {value}")
    return path


class Run:
    def __init__(self, command: str, out: Path, cfg: dict):
        self.command, self.out, self.cfg = command, out, cfg
        self.outputs: list[str] = []
        self.summary: dict = {}

    def write_text(self, name: str, text: str) -> Path:
        path = self.out / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
        self.outputs.append(name)
        return path

    def file(self, name: str) -> Path:
        path = self.out / name
        path.parent.mkdir(parents=True, exist_ok=True)
        self.outputs.append(name)
        return path

    def report(self, stem: str, json_text: str, csv_text: str | None) -> None:
        fmt = self.cfg["format"]
        if fmt in ("json", "both"):
            self.write_text(stem + ".json", json_text)
        if fmt in ("csv", "both") and csv_text is not None:
            self.write_text(stem + ".csv", csv_text)

    def manifest(self) -> None:
        data = {"command": self.command, "version": __version__, "config": self.cfg,
                "outputs": sorted(self.outputs), "summary": self.summary,
                "created": time.strftime("%Y-%m-%dT%H:%M:%S%z")}
        (self.out / "manifest.json").write_text(
            json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
            encoding="utf-8")


def _map(cfg: dict, fn: Callable, items: list) -> list:
    if cfg["threads"] > 1:
        with ThreadPoolExecutor(cfg["threads"]) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


# --- subcommands ----------------------------------------------------------------


def cmd_tokenize(run: Run, cfg: dict) -> None:
    src = _path(cfg["input"])
    lines = src.read_text(encoding="utf-8").splitlines()
    if cfg["parallel"]:
        pairs = read_parallel(src)
        write_parallel(run.file("parallel.tsv"), pairs)
        run.summary["pairs"] = len(pairs)
    else:
        sents = [tokenize(ln) for ln in lines if ln.strip()]
        write_corpus(run.file("corpus.txt"), sents)
        run.summary["sentences"] = len(sents)


def cmd_align_train(run: Run, cfg: dict) -> None:
    pairs = read_parallel(_path(cfg["parallel"]))
    table = train_ibm1(pairs, cfg["iterations"], cfg["diagonal_bias"])
    table.save(run.file("ttable.tsv"))
    run.report("report", _dump({"log_likelihood": table.log_likelihood, "pairs": len(pairs)}),
               None)
    run.summary["pairs"] = len(pairs)


def _alignments(cfg: dict, pairs: list[ParallelPair]) -> list[SentenceAlignment]:
    if cfg.get("alignments"):
        return read_pharaoh(_path(cfg["alignments"]), pairs)
    if cfg.get("table"):
        table = TranslationTable.load(_path(cfg["table"]))
        return _map(cfg, lambda p: viterbi_align(p, table), pairs)
    raise UsageError("need --alignments or --table")


def cmd_align(run: Run, cfg: dict) -> None:
    pairs = read_parallel(_path(cfg["parallel"]))
    aligns = _alignments(cfg, pairs)
    write_pharaoh(run.file("alignments.txt"), aligns)
    run.summary["pairs"] = len(pairs)


def cmd_ec_generate(run: Run, cfg: dict) -> None:
    import numpy as np

    pairs = read_parallel(_path(cfg["parallel"]))
    aligns = _alignments(cfg, pairs)
    ec = EcGenConfig(cfg["max_switches"], cfg["samples_per_pair"], cfg["seed"])
    jobs = list(enumerate(zip(pairs, aligns)))
    outs = _map(cfg, lambda job: generate_ec(job[1][0], job[1][1], ec,
                                             np.random.default_rng([ec.rng_seed, job[0]])), jobs)
    sents = [s for group in outs for s in group]
    write_corpus(run.file("generated.txt"), sents)
    counts = {"pairs": len(pairs), "sentences": len(sents),
              "pairs_without_output": sum(not g for g in outs)}
    run.write_text("generated.json", _dump({"seed": ec.rng_seed, "config": vars(ec),
                                            "counts": counts}))
    run.summary.update(counts)


def cmd_pg_train(run: Run, cfg: dict) -> None:
    def examples(par, tgt):
        pairs = read_parallel(_path(par))
        targets = read_corpus(_path(tgt))
        if len(pairs) != len(targets):
            raise ValueError(f"{len(pairs)} parallel pairs but {len(targets)} targets")
        return list(zip(pairs, targets))

    train = examples(cfg["parallel"], cfg["targets"])
    valid = None
    if cfg["valid_parallel"] and cfg["valid_targets"]:
        valid = examples(cfg["valid_parallel"], cfg["valid_targets"])
    pgc = PointerGenConfig(hidden_size=cfg["hidden_size"], embed_size=cfg["embed_size"],
                           vocab_cap=cfg["vocab_cap"], epochs=cfg["epochs"],
                           trainer=TrainerConfig(cfg["lr"], cfg["decay"], cfg["clip"],
                                                 cfg["seed"]))
    model = PointerGenerator(build_pg_vocab(train, pgc.vocab_cap), pgc)
    result = train_pg(model, train, pgc, valid=valid)
    model.save(run.file("model.ckpt"))
    run.report("report", _dump(vars(result)), None)
    run.summary["examples"] = len(train)


def cmd_pg_generate(run: Run, cfg: dict) -> None:
    model = PointerGenerator.load(_path(cfg["model"]))
    pairs = read_parallel(_path(cfg["parallel"]))
    if cfg["beams"] < cfg["n_best"]:
        raise UsageError("--beams must be >= --n-best")
    results = _map(cfg, lambda p: model.beam_decode(p, cfg["beams"], cfg["n_best"],
                                                    cfg["max_len"]), pairs)
    sents, scores = [], []
    for k, hyps in enumerate(results):
        for rank, h in enumerate(hyps):
            sents.append(h.sentence)
            scores.append({"pair": k, "rank": rank, "log_score": h.log_score})
            if cfg["traces"]:
                export_trace(h.trace, run.file(f"traces/{k:06d}_{rank}.csv"))
    write_corpus(run.file("generated.txt"), sents)
    distinct = len({tuple(s.surfaces) for s in sents})
    counts = {"pairs": len(pairs), "sentences": len(sents), "distinct": distinct,
              "duplicates": len(sents) - distinct}
    run.write_text("generated.json", _dump({"seed": cfg["seed"], "config": {
        "beams": cfg["beams"], "n_best": cfg["n_best"], "max_len": cfg["max_len"]},
        "counts": counts, "scores": scores}))
    run.summary.update(counts)


def _lm_config(cfg: dict) -> LMConfig:
    return LMConfig(hidden_size=cfg["hidden_size"], unroll_steps=cfg["unroll"],
                    batch_size=cfg["batch_size"], dropout=cfg["dropout"],
                    max_epochs=cfg["max_epochs"], early_stop_patience=cfg["patience"],
                    fine_tune_lr=cfg["fine_tune_lr"], vocab_cap=cfg["vocab_cap"],
                    trainer=TrainerConfig(cfg["lr"], cfg["decay"], cfg["clip"], cfg["seed"]))


def cmd_lm_train(run: Run, cfg: dict) -> None:
    strategy = cfg["strategy"]
    if strategy in STRATEGY_CELLS:
        run.summary["cell"] = strategy
        strategy = STRATEGY_CELLS[strategy][0]
    try:
        strategy = Strategy(strategy)
    except ValueError:
        raise UsageError(f"unknown strategy {cfg['strategy']!r}") from None
    real = read_corpus(_path(cfg["train"]))
    gen = read_corpus(_path(cfg["generated"])) if cfg["generated"] else None
    valid = read_corpus(_path(cfg["valid"])) if cfg["valid"] else None
    phase1 = run.file("phase1.ckpt") if strategy is Strategy.TWO_STEP else None
    model, hist = train_lm(real, gen, strategy, _lm_config(cfg), valid=valid,
                           phase1_checkpoint=phase1)
    model.save(run.file("lm.ckpt"), {"strategy": strategy.value})
    run.report("report", _dump(vars(hist)), None)
    run.summary.update({"strategy": strategy.value, "epochs": len(hist.phase)})


def cmd_lm_eval(run: Run, cfg: dict) -> None:
    import csv
    import io

    model = LanguageModel.load(_path(cfg["model"]))
    report = eval_ppl(model, read_corpus(_path(cfg["corpus"])))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["bucket", "tokens", "ppl"])
    w.writerow(["overall", report.token_count, repr(report.overall)])
    for b, (n, p) in report.buckets.items():
        w.writerow([b, n, "" if p is None else repr(p)])
    run.report("report", _dump(report.as_dict()), buf.getvalue())
    run.summary["overall_ppl"] = report.overall


def cmd_strategy_matrix(run: Run, cfg: dict) -> None:
    real = {s: read_corpus(_path(cfg[s])) for s in ("train", "valid", "test")}
    gen = {}
    for key, src in (("ec", GenSource.EC), ("pointer_gen", GenSource.POINTER_GEN),
                     ("external", GenSource.EXTERNAL)):
        if cfg[key]:
            gen[src] = read_corpus(_path(cfg[key]))
    cells = cfg["cells"].split(",") if cfg["cells"] else None
    try:
        matrix = run_strategy_matrix(real, gen, _lm_config(cfg), cells)
    except RuntimeError as exc:
        if isinstance(exc.__cause__, NumericalError):
            raise exc.__cause__
        raise ValueError(str(exc)) from exc
    run.report("report", matrix.to_json(), matrix.to_csv())
    run.summary["cells"] = sorted({r.cell for r in matrix.rows})


def cmd_metrics(run: Run, cfg: dict) -> None:
    corpus = read_corpus(_path(cfg["corpus"]))
    ref = read_corpus(_path(cfg["reference"])) if cfg["reference"] else None
    report = corpus_report(corpus, ref)
    if cfg["cer_ref"] and cfg["cer_hyp"]:
        refs = _path(cfg["cer_ref"]).read_text(encoding="utf-8").splitlines()
        hyps = _path(cfg["cer_hyp"]).read_text(encoding="utf-8").splitlines()
        if len(refs) != len(hyps):
            raise ValueError("CER reference and hypothesis files differ in length")
        # corpus CER: total edits over total reference characters
        edits = sum(edit_distance(normalize_for_cer(r), normalize_for_cer(h))
                    for r, h in zip(refs, hyps))
        chars = sum(len(normalize_for_cer(r)) for r in refs)
        if chars == 0:
            raise ValueError("CER reference is empty")
        report.cer = edits / chars
    run.report("report", report.to_json(), report.to_csv())
    run.summary.update({"sentences": len(corpus), "cmi": report.cmi, "spf": report.spf,
                        "statistics_on": "tokens after CJK character splitting"})


def cmd_fuse_decode(run: Run, cfg: dict) -> None:
    emissions = EmissionSequence.load(_path(cfg["emissions"]))
    lm = None
    if cfg["lm"]:
        lm = LanguageModel.load(_path(cfg["lm"]))
    fc = FusionConfig(cfg["alpha"], cfg["beta"], cfg["gamma"], cfg["beams"])
    result = fused_beam_decode(emissions, lm, fc, cfg["n_best"])

    def row(h):
        return {"text": h.text, "words": h.words, "trans_score": h.trans_score,
                "lm_score": h.lm_score, "word_count": h.word_count,
                "fused_score": h.fused_score}

    run.report("result", _dump({"best": row(result.best),
                                "n_best": [row(h) for h in result.n_best],
                                "lm_policy": "word-level, applied at word completion"}), None)
    run.summary["best"] = result.best.text


def cmd_trace_export(run: Run, cfg: dict) -> None:
    model = PointerGenerator.load(_path(cfg["model"]))
    pairs = read_parallel(_path(cfg["parallel"]))
    for k, p in enumerate(pairs):
        h = model.greedy_decode(p, cfg["max_len"])
        export_trace(h.trace, run.file(f"traces/{k:06d}.csv"))
    run.summary["traces"] = len(pairs)


COMMANDS = {
    "tokenize": cmd_tokenize, "align-train": cmd_align_train, "align": cmd_align,
    "ec-generate": cmd_ec_generate, "pg-train": cmd_pg_train, "pg-generate": cmd_pg_generate,
    "lm-train": cmd_lm_train, "lm-eval": cmd_lm_eval, "strategy-matrix": cmd_strategy_matrix,
    "metrics": cmd_metrics, "fuse-decode": cmd_fuse_decode, "trace-export": cmd_trace_export,
}


def run(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = resolve_config(args)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        out = Path(args.out)
        if (out / "manifest.json").exists() and not args.force:
            raise UsageError(f"{out} already holds an artifact; pass --force to overwrite")
        out.mkdir(parents=True, exist_ok=True)
        r = Run(args.command, out, cfg)
        COMMANDS[args.command](r, cfg)
        r.manifest()
        return EXIT_OK
    except UsageError as exc:
        print(f"codeswitch: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"codeswitch: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, KeyError, OSError, IndexError) as exc:
        print(f"codeswitch: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main() -> None:
    sys.exit(run())

"""Command-line entry point: ``atoss <command> ...``.

Every command exits 0 on success.  On failure it prints one JSON error record
(``{"error": ..., "message": ..., "command": ...}``) to stderr and exits
nonzero: 2 for bad configuration or usage, 1 for everything else.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import yaml

from . import synthetic
from .backends import LexiconBackend, memoized
from .complexity import classify, format_ratio_table, ratio_report
from .data import Task, atomic_write_text, load_examples, read_records, write_records
from .evaluation import (
    corpus_oracle_curve,
    curve_to_csv,
    evaluate,
    format_report_table,
    report_record,
    reports_to_csv,
)
from .pipeline import (
    STAGES,
    ConfigInvalid,
    MissingUpstream,
    _dataclass_from,
    full_pipeline,
    predictions_from_records,
    read_candidates,
    run_stage,
    write_candidates,
)
from .preference import DpoConfig, build_pairs, pair_from_record, train_dpo
from .splitter.core import SftConfig, generate_splits, load_checkpoint, save_checkpoint, split, train_sft
from .splitter.tiny import TinySeq2Seq
from .teacher.clients import RemoteTeacher, ReplayCacheTeacher
from .teacher.filtering import FilterConfig, filter_top_k, generate_for_examples
from .teacher.prompts import FEW_SHOT, ZERO_SHOT

log = logging.getLogger("atoss")

_MODES = {"zero": ZERO_SHOT, "few": FEW_SHOT, ZERO_SHOT: ZERO_SHOT, FEW_SHOT: FEW_SHOT}


def _backend(name: str):
    """``lexicon`` (bundled synthetic lexicon) or ``lexicon:<path.json>``."""
    if name == "lexicon":
        return memoized(synthetic.lexicon_backend())
    if name.startswith("lexicon:"):
        return memoized(LexiconBackend.from_file(name.split(":", 1)[1]))
    raise ConfigInvalid(f"unknown backend {name!r}; use 'lexicon' or 'lexicon:<file>'")


def _yaml_section(path, section):
    if not path:
        return {}
    raw = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    if not isinstance(raw, dict):
        raise ConfigInvalid(f"{path} must hold a mapping")
    return raw.get(section, raw)


def _pairs(path):
    return [(r["source"], r["target"]) for r in read_records(path)]


# -- commands ----------------------------------------------------------------------------

def cmd_categorize(args):
    reports = []
    for path in args.inputs:
        examples = load_examples(path, args.task)
        reports.append(ratio_report(examples, args.split or Path(path).stem, Path(path).parent.name))
    print(format_ratio_table(reports))
    if args.out:
        write_records(args.out, [r.as_record() for r in reports])


def cmd_gen_splits(args):
    examples = load_examples(args.inputs, args.task)
    if args.teacher == "synthetic":
        inner = synthetic.SyntheticTeacher()
    elif args.teacher == "remote":
        if not (args.endpoint and args.model):
            raise ConfigInvalid("--teacher remote needs --endpoint and --model")
        inner = RemoteTeacher(args.endpoint, args.model, args.api_key_env)
    else:
        inner = None
    teacher = ReplayCacheTeacher(args.cache, inner)
    config = FilterConfig(k=args.k, n_candidates=args.n)
    cands = generate_for_examples(teacher, examples, _MODES[args.mode], config, parallelism=args.parallelism)
    write_candidates(args.out, cands)
    if args.pairs_out:
        recs = [{"id": ex.id, "source": ex.text, "target": c.text, "criteria_score": c.criteria_score}
                for ex in examples if cands.get(ex.id) for c in filter_top_k(cands[ex.id], ex, config)]
        write_records(args.pairs_out, recs)
    log.info("%d candidates for %d sentences (cache hits %d, misses %d)",
             sum(map(len, cands.values())), len(examples), teacher.hits, teacher.misses)


def cmd_train_sft(args):
    config = _dataclass_from(SftConfig, _yaml_section(args.config, "sft"), "sft")
    pairs = _pairs(args.data)
    val = _pairs(args.val) if args.val else None
    vocab = list(pairs) + (val or [])
    for extra in args.vocab or ():
        vocab += [(e.text, e.text) for e in load_examples(extra)]
    model = TinySeq2Seq.from_corpus(vocab, dim=args.dim, seed=args.seed)
    best, history = train_sft(model, pairs, config, val=val, seed=args.seed)
    save_checkpoint(best, args.out, config, history.best_epoch, history.best_val_loss)
    print(json.dumps({"best_epoch": history.best_epoch, "best_val_loss": history.best_val_loss,
                      "epochs_run": len(history.epochs), "stopped_early": history.stopped_early}))


def cmd_split(args):
    model, _ = load_checkpoint(args.ckpt)
    examples = load_examples(args.inputs, args.task)
    recs, beams = [], {}
    for ex in examples:
        gate = None if args.no_gate else classify(ex)
        recs.append({"id": ex.id, "text": ex.text, "split": split(model, ex, gate=gate, width=args.beams)})
        if args.candidates:
            beams[ex.id] = generate_splits(model, ex.text, args.beams, ex.id)
    write_records(args.out, recs)
    if args.candidates:
        write_candidates(args.candidates, beams)


def cmd_build_prefs(args):
    examples = load_examples(args.data, args.task)
    pairs = build_pairs(examples, read_candidates(args.fewshot), read_candidates(args.beams),
                        _backend(args.backend))
    write_records(args.out, [p.as_record() for p in pairs])
    print(json.dumps({"pairs": len(pairs), "examples": len(examples)}))


def cmd_train_dpo(args):
    config = _dataclass_from(DpoConfig, _yaml_section(args.config, "dpo"), "dpo")
    policy, _ = load_checkpoint(args.ckpt)
    pairs = [pair_from_record(r) for r in read_records(args.pairs)]
    aligned, history = train_dpo(policy, pairs, config, seed=args.seed)
    save_checkpoint(aligned, args.out, config, config.epochs, None)
    print(json.dumps({"steps": len(history.step_losses), "final_loss": history.final_loss}))


def cmd_evaluate(args):
    golds = {e.id: e for e in load_examples(args.gold, args.task)}
    report = evaluate(predictions_from_records(read_records(args.pred)), golds)
    record = report_record(report, Task.parse(args.task).value, Path(args.gold).stem, args.backend_name,
                           args.splitter_name)
    print(format_report_table([record]))
    if args.out:
        write_records(args.out, [record])
    if args.csv:
        atomic_write_text(args.csv, reports_to_csv([record]))


def cmd_oracle_vote(args):
    examples = load_examples(args.gold, args.task)
    cands = read_candidates(args.candidates)
    curve = corpus_oracle_curve(examples, cands, _backend(args.backend), args.max_m, args.pool)
    for m, f1 in curve.points:
        print(f"{m:>3}  {100 * f1:6.2f}")
    if args.plot:
        atomic_write_text(args.plot, curve_to_csv({args.pool: curve}))


def cmd_run(args):
    manifest = run_stage(args.stage, args.config)
    print(manifest.to_json())


def cmd_pipeline(args):
    summary = full_pipeline(args.config)
    print(summary["table"])


# -- parser --------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="atoss", description="Aspect-term oriented sentence splitting for ABSA.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def task_flag(sp):
        sp.add_argument("--task", default="ASQP", help="ASQP, ACOS, TASD or ASTE (default ASQP)")

    sp = sub.add_parser("categorize", help="Simple/Compound ratios per dataset file")
    sp.add_argument("inputs", nargs="+", help="dataset files (#### format or .jsonl records)")
    sp.add_argument("--split", default="", help="split name to report (default: file stem)")
    sp.add_argument("--out", help="write ratio records here")
    task_flag(sp)
    sp.set_defaults(func=cmd_categorize)

    sp = sub.add_parser("gen-splits", help="prompt a teacher for split candidates")
    sp.add_argument("--mode", choices=["zero", "few"], default="zero", help="zero-shot or few-shot prompt")
    sp.add_argument("--n", type=int, default=10, help="candidates per sentence")
    sp.add_argument("--k", type=int, default=2, help="top-k kept for --pairs-out")
    sp.add_argument("--in", dest="inputs", required=True, help="dataset file")
    sp.add_argument("--out", required=True, help="candidate records")
    sp.add_argument("--pairs-out", help="also write the top-k filtered (source, target) SFT pairs")
    sp.add_argument("--teacher", choices=["synthetic", "remote", "replay"], default="replay",
                    help="synthetic fake, OpenAI-compatible endpoint, or cache replay only")
    sp.add_argument("--cache", default=".atoss-cache/teacher", help="prompt cache directory")
    sp.add_argument("--endpoint", help="base URL of an OpenAI-compatible API")
    sp.add_argument("--model", help="teacher model name")
    sp.add_argument("--api-key-env", default="OPENAI_API_KEY", help="environment variable holding the key")
    sp.add_argument("--parallelism", type=int, default=1, help="concurrent teacher requests")
    task_flag(sp)
    sp.set_defaults(func=cmd_gen_splits)

    sp = sub.add_parser("train-sft", help="fine-tune the splitter on (source, target) records")
    sp.add_argument("--data", required=True, help="records with source/target fields")
    sp.add_argument("--val", help="validation records (default: training records)")
    sp.add_argument("--config", help="YAML file with an 'sft' section (or flat SftConfig keys)")
    sp.add_argument("--out", required=True, help="checkpoint directory")
    sp.add_argument("--vocab", nargs="*", help="extra dataset files whose words join the vocabulary")
    sp.add_argument("--dim", type=int, default=16, help="embedding width of the tiny model")
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_train_sft)

    sp = sub.add_parser("split", help="split sentences with a trained checkpoint")
    sp.add_argument("--ckpt", required=True, help="checkpoint directory")
    sp.add_argument("--in", dest="inputs", required=True, help="dataset file")
    sp.add_argument("--out", required=True, help="records {id, text, split}")
    sp.add_argument("--beams", type=int, default=1, help="beam width (default 1)")
    sp.add_argument("--candidates", help="also write all beams as candidate records")
    sp.add_argument("--no-gate", action="store_true", help="split Simple sentences too")
    task_flag(sp)
    sp.set_defaults(func=cmd_split)

    sp = sub.add_parser("build-prefs", help="preference pairs from backend feedback")
    sp.add_argument("--data", required=True, help="annotated dataset file")
    sp.add_argument("--fewshot", required=True, help="few-shot teacher candidate records")
    sp.add_argument("--beams", required=True, help="splitter beam candidate records")
    sp.add_argument("--backend", default="lexicon", help="'lexicon' or 'lexicon:<file>'")
    sp.add_argument("--out", required=True, help="pair records")
    task_flag(sp)
    sp.set_defaults(func=cmd_build_prefs)

    sp = sub.add_parser("train-dpo", help="align a splitter checkpoint on preference pairs")
    sp.add_argument("--ckpt", required=True, help="SFT checkpoint directory")
    sp.add_argument("--pairs", required=True, help="pair records")
    sp.add_argument("--config", help="YAML file with a 'dpo' section (or flat DpoConfig keys)")
    sp.add_argument("--out", required=True, help="aligned checkpoint directory")
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_train_dpo)

    sp = sub.add_parser("evaluate", help="micro P/R/F1 of prediction records against gold")
    sp.add_argument("--pred", required=True, help="records {id, quads}")
    sp.add_argument("--gold", required=True, help="gold dataset file")
    sp.add_argument("--out", help="write the report record here")
    sp.add_argument("--csv", help="write the report table as CSV")
    sp.add_argument("--backend-name", default="", help="label for the report")
    sp.add_argument("--splitter-name", default="", help="label for the report")
    task_flag(sp)
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("oracle-vote", help="best-of-m F1 curve over split candidates")
    sp.add_argument("--candidates", required=True, help="candidate records")
    sp.add_argument("--gold", required=True, help="gold dataset file")
    sp.add_argument("--backend", default="lexicon", help="'lexicon' or 'lexicon:<file>'")
    sp.add_argument("--max-m", type=int, default=10)
    sp.add_argument("--pool", default="", help="name recorded for this candidate pool")
    sp.add_argument("--plot", help="write the curve as CSV")
    task_flag(sp)
    sp.set_defaults(func=cmd_oracle_vote)

    sp = sub.add_parser("run", help="run one pipeline stage from a YAML config")
    sp.add_argument("stage", choices=STAGES)
    sp.add_argument("--config", required=True)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("pipeline", help="run every stage from a YAML config")
    sp.add_argument("--config", required=True)
    sp.set_defaults(func=cmd_pipeline)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except Exception as exc:  # every failure becomes one machine-readable record
        record = {"error": type(exc).__name__, "message": str(exc), "command": args.command}
        cause = getattr(exc, "cause", None)
        if cause is not None:
            record["cause"] = type(cause).__name__
        print(json.dumps(record), file=sys.stderr)
        return 2 if isinstance(exc, (ConfigInvalid, MissingUpstream, ValueError)) else 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

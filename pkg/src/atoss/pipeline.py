"""Stage orchestration: YAML run config, artifacts under a run directory, manifests.

A run directory looks like::

    data/{train,val,test}.jsonl        prepare
    reports/ratios.{jsonl,csv,txt}     categorize
    candidates/<split>_<mode>.jsonl    gen_splits, build_prefs (train_beam)
    sft/pairs.jsonl                    filter
    checkpoints/{sft,dpo}/             train_sft, train_dpo
    prefs/pairs.jsonl                  build_prefs
    predictions/<splitter>.jsonl       infer
    reports/eval.{jsonl,csv,txt}       evaluate
    reports/oracle.{json,csv}          oracle_vote
    manifests/<stage>.json             every stage
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import shutil
import time
import uuid
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from . import synthetic
from .backends import LexiconBackend, RemoteLLMBackend, memoized
from .complexity import format_ratio_table, ratio_report
from .data import (
    AnnotatedExample,
    Task,
    atomic_write_text,
    example_from_record,
    example_to_record,
    load_examples,
    quad_from_list,
    quad_to_list,
    read_records,
    write_records,
)
from .evaluation import (
    corpus_oracle_curve,
    curve_to_csv,
    evaluate,
    format_report_table,
    plug_and_play,
    report_record,
    reports_to_csv,
)
from .preference import DpoConfig, build_pairs, pair_from_record, train_dpo
from .splitter.core import (
    IdentitySplitter,
    SftConfig,
    generate_splits,
    load_checkpoint,
    save_checkpoint,
    train_sft,
)
from .splitter.tiny import TinySeq2Seq
from .teacher.clients import RemoteTeacher, ReplayCacheTeacher
from .teacher.filtering import FilterConfig, SplitCandidate, filter_top_k, generate_for_examples
from .teacher.prompts import FEW_SHOT, ZERO_SHOT

log = logging.getLogger(__name__)

STAGES = ("prepare", "categorize", "gen_splits", "filter", "train_sft", "build_prefs", "train_dpo", "infer",
          "evaluate", "oracle_vote")
SPLITS = ("train", "val", "test")
MODES = (ZERO_SHOT, FEW_SHOT)


class ConfigInvalid(ValueError):
    pass


class MissingUpstream(FileNotFoundError):
    pass


class StageFailed(RuntimeError):
    def __init__(self, stage, cause):
        super().__init__(f"stage {stage} failed: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class RunManifest:
    run_id: str
    stage: str
    config_digest: str
    input_digests: dict = field(default_factory=dict)
    output_paths: list = field(default_factory=list)
    seed: int = 0
    timestamps: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        return cls(**json.loads(text))


# -- config --------------------------------------------------------------------------

_REQUIRED = {
    "prepare": ("data",),
    "gen_splits": ("teacher",),
    "build_prefs": ("backend",),
    "infer": ("backend",),
    "oracle_vote": ("backend",),
}


def _dataclass_from(cls, section, name):
    section = section or {}
    if not isinstance(section, dict):
        raise ConfigInvalid(f"{name} must be a mapping")
    known = {f.name for f in fields(cls)}
    unknown = set(section) - known
    if unknown:
        raise ConfigInvalid(f"unknown keys in {name}: {sorted(unknown)}")
    try:
        return cls(**section)
    except (TypeError, ValueError) as exc:
        raise ConfigInvalid(f"{name}: {exc}") from exc


class RunConfig:
    """Parsed and validated run configuration."""

    def __init__(self, raw: dict, base_dir: Path, digest: str):
        if not isinstance(raw, dict):
            raise ConfigInvalid("config must be a mapping")
        self.raw = raw
        self.base_dir = base_dir
        self.digest = digest
        if "run_dir" not in raw:
            raise ConfigInvalid("config needs run_dir")
        self.run_dir = self.resolve(raw["run_dir"])
        self.seed = int(raw.get("seed", 0))
        try:
            self.task = Task.parse(raw.get("task", "ASQP"))
        except ValueError as exc:
            raise ConfigInvalid(str(exc)) from exc
        self.filter = _dataclass_from(FilterConfig, raw.get("filter"), "filter")
        self.sft = _dataclass_from(SftConfig, raw.get("sft"), "sft")
        self.dpo = _dataclass_from(DpoConfig, raw.get("dpo"), "dpo")
        self.splitter = dict(raw.get("splitter") or {})
        self.inference = {"beam_width": 1, "mode": "concat", **(raw.get("inference") or {})}
        self.oracle = {"max_m": 10, "pools": list(MODES), **(raw.get("oracle") or {})}
        self.pref_beams = int(raw.get("pref_beams", 10))

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigInvalid(f"cannot read config {path}: {exc}") from exc
        try:
            raw = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigInvalid(f"config is not valid YAML: {exc}") from exc
        return cls(raw, path.parent, hashlib.sha256(text.encode("utf-8")).hexdigest())

    def resolve(self, p) -> Path:
        p = Path(os.path.expandvars(str(p)))
        return (p if p.is_absolute() else self.base_dir / p).resolve()

    def require(self, stage):
        for key in _REQUIRED.get(stage, ()):
            if not self.raw.get(key):
                raise ConfigInvalid(f"stage {stage} needs a '{key}' section")

    def path(self, *parts) -> Path:
        return self.run_dir.joinpath(*parts)

    # -- factories

    def make_teacher(self):
        spec = self.raw["teacher"]
        kind = spec.get("kind")
        cache = self.resolve(spec.get("cache_dir", self.path("cache", "teacher")))
        if kind == "synthetic":
            inner = synthetic.SyntheticTeacher()
        elif kind == "remote":
            inner = RemoteTeacher(spec["endpoint"], spec["model"], spec.get("api_key_env", "OPENAI_API_KEY"),
                                  max_retries=int(spec.get("max_retries", 3)))
        elif kind == "replay":
            inner = None
        else:
            raise ConfigInvalid(f"unknown teacher kind {kind!r} (synthetic, remote, replay)")
        return ReplayCacheTeacher(cache, inner)

    def make_backend(self):
        spec = self.raw["backend"]
        kind = spec.get("kind")
        if kind == "lexicon":
            lexicon = spec.get("lexicon", "synthetic")
            backend = synthetic.lexicon_backend() if lexicon == "synthetic" else \
                LexiconBackend.from_file(self.resolve(lexicon))
        elif kind == "remote":
            client = ReplayCacheTeacher(self.resolve(spec.get("cache_dir", self.path("cache", "backend"))),
                                        RemoteTeacher(spec["endpoint"], spec["model"],
                                                      spec.get("api_key_env", "OPENAI_API_KEY")))
            backend = RemoteLLMBackend(client)
        else:
            raise ConfigInvalid(f"unknown backend kind {kind!r} (lexicon, remote)")
        return memoized(backend, int(spec.get("parallelism", 1)))

    @property
    def backend_name(self) -> str:
        return str((self.raw.get("backend") or {}).get("kind", ""))


# -- artifact helpers ------------------------------------------------------------------

def file_digest(path) -> str:
    path = Path(path)
    h = hashlib.sha256()
    if path.is_dir():
        for p in sorted(q for q in path.rglob("*") if q.is_file()):
            h.update(p.relative_to(path).as_posix().encode("utf-8"))
            h.update(p.read_bytes())
    else:
        h.update(path.read_bytes())
    return h.hexdigest()


def candidate_to_record(c: SplitCandidate) -> dict:
    return {"id": c.source_id, "text": c.text, "origin": c.origin, "criteria_score": c.criteria_score,
            "model_score": c.model_score}


def candidate_from_record(r: dict) -> SplitCandidate:
    return SplitCandidate(r["id"], r["text"], r.get("origin", ZERO_SHOT), float(r.get("criteria_score", 0.0)),
                          r.get("model_score"))


def write_candidates(path, by_id: dict) -> None:
    write_records(path, [candidate_to_record(c) for cands in by_id.values() for c in cands])


def read_candidates(path) -> dict[str, list[SplitCandidate]]:
    out: dict[str, list[SplitCandidate]] = {}
    for r in read_records(path):
        out.setdefault(r["id"], []).append(candidate_from_record(r))
    return out


def _read_examples(path) -> list[AnnotatedExample]:
    return [example_from_record(r) for r in read_records(path)]


def _write_examples(path, examples) -> None:
    write_records(path, [example_to_record(e) for e in examples])


def _save_checkpoint_atomic(model, directory: Path, config, epoch, val_loss) -> None:
    tmp = directory.with_name(f".{directory.name}.tmp")
    if tmp.exists():
        shutil.rmtree(tmp)
    save_checkpoint(model, tmp, config, epoch, val_loss)
    if directory.exists():
        shutil.rmtree(directory)
    os.replace(tmp, directory)


def prediction_record(ex_id: str, split_text: str, quads) -> dict:
    return {"id": ex_id, "split": split_text, "quads": [quad_to_list(q) for q in quads]}


def predictions_from_records(records) -> dict:
    return {r["id"]: [quad_from_list(q) for q in r["quads"]] for r in records}


# -- stages ------------------------------------------------------------------------------
# Each returns (inputs, outputs) as lists of paths.

def _stage_prepare(cfg: RunConfig):
    data = cfg.raw["data"]
    outputs, inputs = [], []
    if "synthetic" in data:
        syn = data["synthetic"] or {}
        for name in SPLITS:
            if name not in syn:
                continue
            opts = syn[name] or {}
            examples, _ = synthetic.make_corpus(int(opts.get("n", 100)), int(opts.get("seed", cfg.seed)),
                                                prefix=name)
            out = cfg.path("data", f"{name}.jsonl")
            _write_examples(out, examples)
            outputs.append(out)
    else:
        for name in SPLITS:
            if name not in data:
                continue
            src = cfg.resolve(data[name])
            if not src.exists():
                raise MissingUpstream(f"dataset file {src} not found")
            examples = load_examples(src, cfg.task)
            out = cfg.path("data", f"{name}.jsonl")
            _write_examples(out, examples)
            inputs.append(src)
            outputs.append(out)
    if not any(p.name == "train.jsonl" for p in outputs) or not any(p.name == "test.jsonl" for p in outputs):
        raise ConfigInvalid("data needs at least train and test")
    return inputs, outputs


def _data_inputs(cfg, *names):
    return [cfg.path("data", f"{n}.jsonl") for n in names]


def _stage_categorize(cfg: RunConfig):
    inputs = [p for p in _data_inputs(cfg, *SPLITS) if p.exists() or p.name != "val.jsonl"]
    _require(inputs)
    name = str((cfg.raw.get("data") or {}).get("name", "synthetic"))
    reports = [ratio_report(_read_examples(p), p.stem, name) for p in inputs]
    recs = [r.as_record() for r in reports]
    out_jsonl, out_csv, out_txt = (cfg.path("reports", f"ratios.{ext}") for ext in ("jsonl", "csv", "txt"))
    write_records(out_jsonl, recs)
    cols = sorted(recs[0])
    atomic_write_text(out_csv, ",".join(cols) + "\n" + "".join(",".join(str(r[c]) for c in cols) + "\n"
                                                              for r in recs))
    atomic_write_text(out_txt, format_ratio_table(reports) + "\n")
    return inputs, [out_jsonl, out_csv, out_txt]


def _stage_gen_splits(cfg: RunConfig):
    teacher = cfg.make_teacher()
    parallelism = int(cfg.raw["teacher"].get("parallelism", 1))
    temperature = float(cfg.raw["teacher"].get("temperature", 1.0))
    jobs = [("train", ZERO_SHOT), ("train", FEW_SHOT)] + [("test", m) for m in cfg.oracle["pools"]]
    inputs = _data_inputs(cfg, "train", "test")
    _require(inputs)
    if cfg.path("data", "val.jsonl").exists():
        jobs.append(("val", ZERO_SHOT))
        inputs.append(cfg.path("data", "val.jsonl"))
    outputs = []
    for split_name, mode in jobs:
        examples = _read_examples(cfg.path("data", f"{split_name}.jsonl"))
        cands = generate_for_examples(teacher, examples, mode, cfg.filter, temperature=temperature,
                                      parallelism=parallelism)
        out = cfg.path("candidates", f"{split_name}_{mode}.jsonl")
        write_candidates(out, cands)
        outputs.append(out)
    log.info("gen_splits: %d cache hits, %d misses", teacher.hits, teacher.misses)
    return inputs, outputs


def _top_k_records(cfg, examples, cands):
    recs = []
    for ex in examples:
        if not cands.get(ex.id):
            continue
        for c in filter_top_k(cands[ex.id], ex, cfg.filter):
            recs.append({"id": ex.id, "source": ex.text, "target": c.text, "criteria_score": c.criteria_score,
                         "quads": [quad_to_list(q) for q in ex.quads]})
    return recs


def _stage_filter(cfg: RunConfig):
    inputs, outputs = [], []
    for name, out_name in (("train", "pairs.jsonl"), ("val", "val_pairs.jsonl")):
        data, cands = cfg.path("data", f"{name}.jsonl"), cfg.path("candidates", f"{name}_{ZERO_SHOT}.jsonl")
        if name == "val" and not cands.exists():
            continue
        _require([data, cands])
        out = cfg.path("sft", out_name)
        write_records(out, _top_k_records(cfg, _read_examples(data), read_candidates(cands)))
        inputs += [data, cands]
        outputs.append(out)
    return inputs, outputs


def _vocab_texts(cfg):
    texts = []
    for name in SPLITS:
        p = cfg.path("data", f"{name}.jsonl")
        if p.exists():
            texts += [(e.text, e.text) for e in _read_examples(p)]
    return texts


def _stage_train_sft(cfg: RunConfig):
    src = cfg.path("sft", "pairs.jsonl")
    _require([src])
    pairs = [(r["source"], r["target"]) for r in read_records(src)]
    inputs = [src]
    backend = cfg.splitter.get("backend", TinySeq2Seq.backend_name)
    if backend != TinySeq2Seq.backend_name:
        raise ConfigInvalid(f"unknown splitter backend {backend!r}")
    # vocabulary spans every split so inference never meets unseen source words
    model = TinySeq2Seq.from_corpus(pairs + _vocab_texts(cfg), dim=int(cfg.splitter.get("dim", 16)),
                                    seed=cfg.seed)
    val = None
    val_pairs_path = cfg.path("sft", "val_pairs.jsonl")
    if val_pairs_path.exists():
        val = [(r["source"], r["target"]) for r in read_records(val_pairs_path)]
        inputs.append(val_pairs_path)
    best, history = train_sft(model, pairs, cfg.sft, val=val, seed=cfg.seed)
    out = cfg.path("checkpoints", "sft")
    _save_checkpoint_atomic(best, out, cfg.sft, history.best_epoch, history.best_val_loss)
    log_path = cfg.path("sft", "train_log.json")
    atomic_write_text(log_path, json.dumps(asdict(history), indent=2, sort_keys=True))
    return inputs + [p for p in _data_inputs(cfg, *SPLITS) if p.exists()], [out, log_path]


def _stage_build_prefs(cfg: RunConfig):
    ckpt = cfg.path("checkpoints", "sft")
    few = cfg.path("candidates", f"train_{FEW_SHOT}.jsonl")
    inputs = _data_inputs(cfg, "train") + [few, ckpt]
    _require(inputs)
    examples = _read_examples(inputs[0])
    model, _ = load_checkpoint(ckpt)
    beams = {ex.id: generate_splits(model, ex.text, cfg.pref_beams, ex.id) for ex in examples}
    beam_out = cfg.path("candidates", "train_beam.jsonl")
    write_candidates(beam_out, beams)
    pairs = build_pairs(examples, read_candidates(few), beams, cfg.make_backend())
    out = cfg.path("prefs", "pairs.jsonl")
    write_records(out, [p.as_record() for p in pairs])
    return inputs, [beam_out, out]


def _stage_train_dpo(cfg: RunConfig):
    ckpt = cfg.path("checkpoints", "sft")
    src = cfg.path("prefs", "pairs.jsonl")
    _require([ckpt, src])
    policy, _ = load_checkpoint(ckpt)
    pairs = [pair_from_record(r) for r in read_records(src)]
    aligned, history = train_dpo(policy, pairs, cfg.dpo, seed=cfg.seed)
    out = cfg.path("checkpoints", "dpo")
    _save_checkpoint_atomic(aligned, out, cfg.dpo, cfg.dpo.epochs, None)
    log_path = cfg.path("prefs", "dpo_log.json")
    atomic_write_text(log_path, json.dumps(asdict(history), indent=2, sort_keys=True))
    return [ckpt, src], [out, log_path]


def _splitters(cfg):
    """(name, checkpoint-or-None) for every splitter variant worth evaluating."""
    return [("none", None), ("sft", cfg.path("checkpoints", "sft")), ("atoss", cfg.path("checkpoints", "dpo"))]


def _stage_infer(cfg: RunConfig):
    test = cfg.path("data", "test.jsonl")
    _require([test])
    examples = _read_examples(test)
    backend = cfg.make_backend()
    inputs, outputs = [test], []
    width, mode = int(cfg.inference["beam_width"]), cfg.inference["mode"]
    for name, ckpt in _splitters(cfg):
        if ckpt is None:
            model = IdentitySplitter()
        elif ckpt.exists():
            model, _ = load_checkpoint(ckpt)
            inputs.append(ckpt)
        else:
            continue
        recs = [prediction_record(ex.id, *plug_and_play(model, backend, ex, mode=mode, width=width))
                for ex in examples]
        out = cfg.path("predictions", f"{name}.jsonl")
        write_records(out, recs)
        outputs.append(out)
    return inputs, outputs


def _stage_evaluate(cfg: RunConfig):
    test = cfg.path("data", "test.jsonl")
    _require([test])
    golds = {e.id: e for e in _read_examples(test)}
    records, inputs = [], [test]
    dataset = str((cfg.raw.get("data") or {}).get("name", "synthetic"))
    for name, _ in _splitters(cfg):
        p = cfg.path("predictions", f"{name}.jsonl")
        if not p.exists():
            continue
        inputs.append(p)
        report = evaluate(predictions_from_records(read_records(p)), golds)
        records.append(report_record(report, cfg.task.value, dataset, cfg.backend_name, name))
    if not records:
        raise MissingUpstream("no predictions to evaluate; run infer first")
    outs = [cfg.path("reports", f"eval.{ext}") for ext in ("jsonl", "csv", "txt")]
    write_records(outs[0], records)
    atomic_write_text(outs[1], reports_to_csv(records))
    atomic_write_text(outs[2], format_report_table(records) + "\n")
    return inputs, outs


def _stage_oracle_vote(cfg: RunConfig):
    test = cfg.path("data", "test.jsonl")
    inputs = [test] + [cfg.path("candidates", f"test_{m}.jsonl") for m in cfg.oracle["pools"]]
    _require(inputs)
    examples = _read_examples(test)
    backend = cfg.make_backend()
    curves = {}
    for pool, path in zip(cfg.oracle["pools"], inputs[1:]):
        curves[pool] = corpus_oracle_curve(examples, read_candidates(path), backend, int(cfg.oracle["max_m"]),
                                           pool)
    out_json, out_csv = cfg.path("reports", "oracle.json"), cfg.path("reports", "oracle.csv")
    atomic_write_text(out_json, json.dumps({k: v.points for k, v in curves.items()}, indent=2, sort_keys=True))
    atomic_write_text(out_csv, curve_to_csv(curves))
    return inputs, [out_json, out_csv]


_STAGE_FNS = {
    "prepare": _stage_prepare, "categorize": _stage_categorize, "gen_splits": _stage_gen_splits,
    "filter": _stage_filter, "train_sft": _stage_train_sft, "build_prefs": _stage_build_prefs,
    "train_dpo": _stage_train_dpo, "infer": _stage_infer, "evaluate": _stage_evaluate,
    "oracle_vote": _stage_oracle_vote,
}


def _require(paths):
    for p in paths:
        if not Path(p).exists():
            raise MissingUpstream(f"missing upstream artifact {p}")


def _now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())


def _run(stage: str, cfg: RunConfig) -> RunManifest:
    if stage not in _STAGE_FNS:
        raise ConfigInvalid(f"unknown stage {stage!r}; choose from {', '.join(STAGES)}")
    cfg.require(stage)
    started = _now()
    try:
        inputs, outputs = _STAGE_FNS[stage](cfg)
    except (ConfigInvalid, MissingUpstream):
        raise
    except Exception as exc:
        raise StageFailed(stage, exc) from exc
    manifest = RunManifest(
        run_id=f"{cfg.digest[:12]}-{uuid.uuid4().hex[:8]}",
        stage=stage,
        config_digest=cfg.digest,
        input_digests={str(p): file_digest(p) for p in inputs},
        output_paths=[str(p) for p in outputs],
        seed=cfg.seed,
        timestamps={"started": started, "finished": _now()},
    )
    atomic_write_text(cfg.path("manifests", f"{stage}.json"), manifest.to_json())
    log.info("stage %s done: %d outputs", stage, len(outputs))
    return manifest


def run_stage(stage: str, config_path) -> RunManifest:
    return _run(stage, RunConfig.load(config_path))


def full_pipeline(config_path) -> dict:
    """Run every stage in order; returns the manifests and the evaluation records.

    The config is checked for every stage up front, so a missing section fails
    before any work is done.  A failing stage aborts the run; manifests of the
    stages already finished stay on disk.
    """
    cfg = RunConfig.load(config_path)
    for stage in STAGES:
        cfg.require(stage)
    manifests = [_run(stage, cfg) for stage in STAGES]
    records = read_records(cfg.path("reports", "eval.jsonl"))
    by_name = {r["splitter"]: r for r in records}
    return {"run_dir": str(cfg.run_dir), "manifests": [asdict(m) for m in manifests],
            "baseline": by_name.get("none"), "sft": by_name.get("sft"), "atoss": by_name.get("atoss"),
            "table": format_report_table(records)}

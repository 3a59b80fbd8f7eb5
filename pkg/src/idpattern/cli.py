"""Command-line entry point: ``idpattern {kb-ingest,diagnose,baseline,eval}``.

Exit codes: 0 success, 2 input or configuration error, 3 run or parse failure.

The main config is a JSON document; relative input paths inside it resolve
against the config file's directory (``output_dir`` against the working
directory). Unset paths fall back to the bundled sample data.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

from .agents import DEFAULT_TEST_PROMPT, load_roster
from .errors import (
    ConfigurationError,
    DimensionError,
    GatewayError,
    IdPatternError,
    IntegrityError,
    MalformedOutputError,
    RunFailure,
    TaxonomyParseError,
)
from .evaluation import (
    aggregate,
    emit_report,
    load_corpus,
    match_findings,
    per_image_summary,
)
from .gateway import (
    Effort,
    MockBackend,
    OpenAICompatibleBackend,
    PriceTable,
    UsageLedger,
    embed_text,
    format_cost,
    ledger_totals,
)
from .orchestrator import CaseInput, Orchestrator, RunConfig, encode_prediction, run_baseline
from .rag import (
    DEFAULT_OVERLAP_TOKENS,
    DEFAULT_TARGET_TOKENS,
    DEFAULT_TOP_K,
    EmbeddedChunk,
    VectorStore,
    chunk_document,
    load_store,
    save_store,
)
from .records import ZERO_TIMESTAMP, Finding, decode_ref, read_json, write_json
from .taxonomy import load_taxonomy, normalize_label

logger = logging.getLogger("idpattern")

EXIT_OK, EXIT_INPUT, EXIT_RUN = 0, 2, 3


def data_path(name: str) -> Path:
    """Path of a file shipped in ``idpattern/data``."""
    return Path(str(resources.files("idpattern") / "data" / name))


@dataclass
class MainConfig:
    mode: str = "mock"
    endpoint: str = "https://api.openai.com"
    model_id: str = "o4-mini"
    effort: Optional[str] = "high"
    embedding_model_id: str = "text-embedding-3-small"
    embedding_dimension: int = 64
    api_key_env: str = "OPENAI_API_KEY"
    price_table: PriceTable = field(default_factory=PriceTable)
    transcript: Optional[Path] = None
    taxonomy: Path = field(default_factory=lambda: data_path("taxonomy.jsonl"))
    roster: Path = field(default_factory=lambda: data_path("roster.json"))
    kb: Optional[Path] = None
    retrieval_enabled: bool = True
    k: int = DEFAULT_TOP_K
    target_tokens: int = DEFAULT_TARGET_TOKENS
    overlap_tokens: int = DEFAULT_OVERLAP_TOKENS
    specialist_temperature: float = 0.2
    coordinator_temperature: float = 0.0
    retry_limit: int = 1
    phase2_order: Optional[tuple[str, ...]] = None
    output_dir: Path = Path("runs")
    concurrency: int = 1

    def validate(self) -> None:
        if self.mode not in ("mock", "live"):
            raise ConfigurationError(f"backend mode must be 'mock' or 'live', got {self.mode!r}")
        if self.mode == "mock" and self.transcript is None:
            raise ConfigurationError("mock mode needs a transcript path (--mock-transcript)")
        if self.mode == "live" and not self.endpoint:
            raise ConfigurationError("live mode needs an endpoint")
        if self.concurrency < 1:
            raise ConfigurationError("concurrency must be at least 1")


def load_config(path: Optional[str | Path]) -> MainConfig:
    if path is None:
        return MainConfig()
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid JSON at line {exc.lineno}") from None
    base = path.parent

    def resolve(value):
        return None if value is None else (base / value)

    backend = data.get("backend", {})
    retrieval = data.get("retrieval", {})
    temps = data.get("temperatures", {})
    cfg = MainConfig()
    cfg.mode = backend.get("mode", cfg.mode)
    cfg.endpoint = backend.get("endpoint", cfg.endpoint)
    cfg.model_id = backend.get("model_id", cfg.model_id)
    cfg.effort = backend.get("effort", cfg.effort)
    cfg.embedding_model_id = backend.get("embedding_model_id", cfg.embedding_model_id)
    cfg.embedding_dimension = int(backend.get("embedding_dimension", cfg.embedding_dimension))
    cfg.api_key_env = backend.get("api_key_env", cfg.api_key_env)
    cfg.price_table = PriceTable.from_dict(backend.get("price_table", {}))
    cfg.transcript = resolve(backend.get("transcript"))
    if "taxonomy" in data:
        cfg.taxonomy = resolve(data["taxonomy"])
    if "roster" in data:
        cfg.roster = resolve(data["roster"])
    cfg.kb = resolve(data.get("kb"))
    cfg.retrieval_enabled = bool(retrieval.get("enabled", True))
    cfg.k = int(retrieval.get("k", cfg.k))
    cfg.target_tokens = int(retrieval.get("target_tokens", cfg.target_tokens))
    cfg.overlap_tokens = int(retrieval.get("overlap_tokens", cfg.overlap_tokens))
    cfg.specialist_temperature = float(temps.get("specialist", cfg.specialist_temperature))
    cfg.coordinator_temperature = float(temps.get("coordinator", cfg.coordinator_temperature))
    cfg.retry_limit = int(data.get("retry_limit", cfg.retry_limit))
    order = data.get("phase2_order")
    cfg.phase2_order = tuple(order) if order else None
    cfg.output_dir = Path(data.get("output_dir", "runs"))
    cfg.concurrency = int(data.get("concurrency", 1))
    return cfg


def apply_flags(cfg: MainConfig, args: argparse.Namespace) -> MainConfig:
    if getattr(args, "agents", None):
        cfg.roster = Path(args.agents)
    if getattr(args, "kb", None):
        cfg.kb = Path(args.kb)
    if getattr(args, "mock_transcript", None):
        cfg.transcript = Path(args.mock_transcript)
        cfg.mode = "mock"
    if getattr(args, "out", None):
        cfg.output_dir = Path(args.out)
    if getattr(args, "k", None) is not None:
        cfg.k = args.k
    if getattr(args, "order", None):
        cfg.phase2_order = tuple(x.strip() for x in args.order.split(",") if x.strip())
    if getattr(args, "concurrency", None) is not None:
        cfg.concurrency = args.concurrency
    if getattr(args, "no_retrieval", False):
        cfg.retrieval_enabled = False
    return cfg


def make_backend(cfg: MainConfig):
    if cfg.mode == "mock":
        if cfg.transcript is None:
            return MockBackend(dimension=cfg.embedding_dimension)
        return MockBackend.from_file(cfg.transcript, cfg.embedding_dimension)
    return OpenAICompatibleBackend(cfg.endpoint, cfg.embedding_model_id, cfg.api_key_env)


def run_stamp(backend) -> str:
    if backend.deterministic:
        return "19700101T000000Z"
    return datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%SZ")


def _effort(cfg: MainConfig) -> Optional[Effort]:
    return Effort(cfg.effort) if cfg.effort else None


def _cases(args, cfg: MainConfig) -> list[CaseInput]:
    prompt = args.prompt or DEFAULT_TEST_PROMPT
    if args.corpus:
        corpus_path = Path(args.corpus)
        cases = []
        for truth in load_corpus(corpus_path):
            if not truth.image:
                raise ConfigurationError(f"corpus case {truth.case_id} has no image")
            image = corpus_path.parent / truth.image
            cases.append(CaseInput(truth.case_id, image, case_prompt=args.prompt or truth.prompt or prompt))
    elif args.image:
        image = Path(args.image)
        cases = [CaseInput(args.case_id or image.stem, image, case_prompt=prompt)]
    else:
        raise ConfigurationError("give an image path or --corpus")
    for case in cases:
        if not case.image_path.is_file():
            raise FileNotFoundError(f"image not found: {case.image_path}")
    return cases


# -- commands --------------------------------------------------------------


def cmd_kb_ingest(cfg: MainConfig, args) -> int:
    if not args.kb:
        raise ConfigurationError("kb-ingest needs --kb <store file> as destination")
    backend = make_backend(cfg)
    texts = []
    for doc in args.documents:
        path = Path(doc)
        try:
            texts.append((path.name, path.read_text(encoding="utf-8")))
        except (OSError, UnicodeDecodeError) as exc:
            raise FileNotFoundError(f"cannot read document {path}: {exc}") from None
    created = ZERO_TIMESTAMP if backend.deterministic else datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    store = None
    tokens = 0
    for source_id, text in texts:
        for chunk in chunk_document(source_id, text, cfg.target_tokens, cfg.overlap_tokens):
            vector = embed_text(backend, chunk.text)
            if store is None:
                store = VectorStore(len(vector), backend.embedding_model_id, created)
            store.upsert(EmbeddedChunk(chunk, vector))
            tokens += chunk.approx_tokens
    if store is None:
        store = VectorStore(cfg.embedding_dimension, backend.embedding_model_id, created)
    Path(args.kb).parent.mkdir(parents=True, exist_ok=True)
    save_store(store, args.kb)
    print(f"ingested {len(texts)} documents: {len(store)} chunks, ~{tokens} tokens -> {args.kb}")
    return EXIT_OK


def _run_config(cfg: MainConfig, backend) -> RunConfig:
    taxonomy = load_taxonomy(cfg.taxonomy)
    roster = load_roster(cfg.roster)
    store = load_store(cfg.kb) if cfg.kb and cfg.retrieval_enabled else None
    return RunConfig(
        roster=roster,
        taxonomy=taxonomy,
        store=store,
        retrieval_enabled=cfg.retrieval_enabled,
        k=cfg.k,
        model_id=cfg.model_id,
        effort=_effort(cfg),
        specialist_temperature=cfg.specialist_temperature,
        coordinator_temperature=cfg.coordinator_temperature,
        retry_limit=cfg.retry_limit,
        phase2_order=cfg.phase2_order,
    )


def _parallel(fn, items, limit: int):
    if limit <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=limit) as pool:
        futures = [pool.submit(fn, x) for x in items]
    return [f.result() for f in futures]


def cmd_diagnose(cfg: MainConfig, args) -> int:
    backend = make_backend(cfg)
    cases = _cases(args, cfg)
    ledger = UsageLedger(cfg.price_table)
    orchestrator = Orchestrator(backend, _run_config(cfg, backend), ledger)
    stamp = run_stamp(backend)

    def run(case: CaseInput):
        out = cfg.output_dir / f"{case.case_id}_{stamp}"
        try:
            return case, orchestrator.run_case(case, out), out, None
        except RunFailure as exc:
            return case, None, out, exc

    failed = False
    for case, result, out, error in _parallel(run, cases, cfg.concurrency):
        if error is not None:
            failed = True
            print(f"[{case.case_id}] FAILED: {error.cause}  (incomplete log: {out / 'log.json'})", file=sys.stderr)
            continue
        d = result.diagnosis
        totals = ledger_totals(result.ledger)
        print(f"[{case.case_id}] confidence: {d.confidence.value}")
        print(f"  {d.description}")
        for i, f in enumerate(d.findings):
            support = ", ".join(sorted(d.provenance.get(i, ()))) or "coordinator"
            print(f"  - {f.pattern} @ {f.location}  [{support}]")
        print(f"  tokens: {totals.prompt_tokens} prompt + {totals.completion_tokens} completion, "
              f"cost {format_cost(totals.cost)}  -> {out}")
    totals = ledger_totals(ledger)
    print(f"total: {totals.prompt_tokens + totals.completion_tokens} tokens, cost {format_cost(totals.cost)}")
    return EXIT_RUN if failed else EXIT_OK


def cmd_baseline(cfg: MainConfig, args) -> int:
    backend = make_backend(cfg)
    cases = _cases(args, cfg)
    taxonomy = load_taxonomy(cfg.taxonomy)
    ledger = UsageLedger(cfg.price_table)
    stamp = run_stamp(backend)

    def run(case: CaseInput):
        try:
            return case, run_baseline(backend, case, taxonomy, cfg.model_id, _effort(cfg), cfg.coordinator_temperature,
                                      cfg.retry_limit, ledger), None
        except (MalformedOutputError, GatewayError) as exc:
            return case, None, exc

    failed = False
    for case, prediction, error in _parallel(run, cases, cfg.concurrency):
        if error is not None:
            failed = True
            print(f"[{case.case_id}] FAILED: {error}", file=sys.stderr)
            continue
        out = cfg.output_dir / f"{case.case_id}_{stamp}"
        out.mkdir(parents=True, exist_ok=True)
        write_json(out / "prediction.json", encode_prediction(prediction))
        print(f"[{case.case_id}] {len(prediction.findings)} findings -> {out / 'prediction.json'}")
    totals = ledger_totals(ledger)
    print(f"total: {totals.prompt_tokens + totals.completion_tokens} tokens, cost {format_cost(totals.cost)}")
    return EXIT_RUN if failed else EXIT_OK


def find_prediction(directory: Path, case_id: str) -> Optional[Path]:
    """``<dir>/<case_id>.json``, else the latest ``<dir>/<case_id>_<stamp>/`` run output."""
    direct = directory / f"{case_id}.json"
    if direct.is_file():
        return direct
    runs = sorted(p for p in directory.glob(f"{case_id}_*") if p.is_dir())
    for run in reversed(runs):
        for name in ("diagnosis.json", "prediction.json"):
            if (run / name).is_file():
                return run / name
    return None


def load_prediction_findings(path: Path, taxonomy):
    data = read_json(path)
    findings = []
    for item in data["findings"]:
        ref = decode_ref(item["pattern"])
        if isinstance(ref, str) and ref not in taxonomy:
            ref = normalize_label(ref, taxonomy)
        findings.append(Finding(ref, item["location"], item.get("rationale", "")))
    return findings


def cmd_eval(cfg: MainConfig, args) -> int:
    taxonomy = load_taxonomy(cfg.taxonomy)
    corpus = load_corpus(args.corpus)
    systems = []
    for spec in args.predictions:
        name, sep, directory = spec.partition("=")
        if not sep:
            name, directory = Path(spec).name, spec
        systems.append((name, Path(directory)))

    problems = []
    outcomes_by_system = []
    for name, directory in systems:
        outcomes = []
        for truth in corpus:
            path = find_prediction(directory, truth.case_id)
            if path is None:
                problems.append(f"{name}: missing prediction for {truth.case_id}")
                continue
            try:
                findings = load_prediction_findings(path, taxonomy)
            except (OSError, ValueError, KeyError, TypeError) as exc:
                problems.append(f"{name}: malformed prediction {path}: {exc}")
                continue
            outcomes.append(match_findings(findings, truth, taxonomy))
        outcomes_by_system.append((name, outcomes))
    if problems:
        for p in problems:
            print(p, file=sys.stderr)
        return EXIT_INPUT

    rows = [(name, aggregate(outcomes)) for name, outcomes in outcomes_by_system]
    per_image = [(name, per_image_summary(outcomes)) for name, outcomes in outcomes_by_system]
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.txt").write_text(emit_report(rows, per_image, "table-text"), encoding="utf-8")
    (out / "report.csv").write_text(emit_report(rows, per_image, "delimited-values"), encoding="utf-8")
    print(emit_report(rows), end="")
    for name, summaries in per_image:
        met = sum(s.met_half for s in summaries)
        print(f"{name}: >=50% of patterns found in {met} of {len(summaries)} images")
    print(f"reports written to {out}")
    return EXIT_OK


# -- argument parsing ------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="idpattern", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="main config (JSON)")
        p.add_argument("--out", help="output directory")
        return p

    def run_flags(p):
        p.add_argument("--agents", help="roster file (JSON)")
        p.add_argument("--kb", help="vector store file")
        p.add_argument("--mock-transcript", help="use the mock backend with this transcript")
        p.add_argument("--k", type=int, help="retrieved chunks per agent")
        p.add_argument("--order", help="comma-separated phase-2 agent order")
        p.add_argument("--concurrency", type=int, help="cases run in parallel")
        p.add_argument("--no-retrieval", action="store_true")
        p.add_argument("--prompt", help="override the test prompt")
        p.add_argument("--case-id", help="case id for a single image (default: file stem)")
        p.add_argument("--corpus", help="ground-truth corpus (JSONL) whose images to run")
        p.add_argument("image", nargs="?", help="image file (PNG or JPEG)")
        return p

    ingest = common(sub.add_parser("kb-ingest", help="chunk, embed and store knowledge documents"))
    ingest.add_argument("--kb", help="destination store file")
    ingest.add_argument("--mock-transcript")
    ingest.add_argument("documents", nargs="+")

    run_flags(common(sub.add_parser("diagnose", help="run the multi-agent workflow")))
    run_flags(common(sub.add_parser("baseline", help="single-shot foundational-model arm")))

    ev = common(sub.add_parser("eval", help="score prediction sets against ground truth"))
    ev.add_argument("corpus", help="ground-truth corpus (JSONL)")
    ev.add_argument("predictions", nargs="+", help="prediction directory, optionally NAME=DIR")
    return parser


COMMANDS = {"kb-ingest": cmd_kb_ingest, "diagnose": cmd_diagnose, "baseline": cmd_baseline, "eval": cmd_eval}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = apply_flags(load_config(args.config), args)
        if args.command in ("diagnose", "baseline"):
            cfg.validate()
        return COMMANDS[args.command](cfg, args)
    except (ConfigurationError, TaxonomyParseError, IntegrityError, DimensionError, FileNotFoundError,
            ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except IdPatternError as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_RUN
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

from __future__ import annotations

import json

import pytest

from idpattern.agents import DEFAULT_TEST_PROMPT
from idpattern.cli import main
from idpattern.evaluation import COLUMNS
from idpattern.rag import load_store
from idpattern.records import read_json


@pytest.fixture
def docs(tmp_path):
    a = tmp_path / "a.md"
    b = tmp_path / "b.md"
    a.write_text("Black crust forms in sheltered zones of carbonate stone. " * 40)
    b.write_text("Alveolization is a honeycomb of cavities in porous sandstone near the sea. " * 10)
    return [str(a), str(b)]


def test_kb_ingest_deterministic(docs, tmp_path, capsys):
    assert main(["kb-ingest", "--kb", str(tmp_path / "one.store"), *docs]) == 0
    assert main(["kb-ingest", "--kb", str(tmp_path / "two.store"), *docs]) == 0
    assert (tmp_path / "one.store").read_bytes() == (tmp_path / "two.store").read_bytes()
    store = load_store(tmp_path / "one.store")
    assert {e.chunk.source_id for e in store.entries} == {"a.md", "b.md"}
    assert store.created_at == "1970-01-01T00:00:00Z"
    assert "2 documents" in capsys.readouterr().out


def test_kb_ingest_unreadable(tmp_path, capsys):
    missing = tmp_path / "nope.md"
    assert main(["kb-ingest", "--kb", str(tmp_path / "x.store"), str(missing)]) == 2
    assert str(missing) in capsys.readouterr().err


def diagnose(fixtures_dir, out, *extra):
    return main(["diagnose", "--config", str(fixtures_dir / "config.json"), "--out", str(out),
                 str(fixtures_dir / "images" / "case01.png"), *extra])


def test_diagnose_single_image(fixtures_dir, tmp_path, capsys):
    assert diagnose(fixtures_dir, tmp_path / "a") == 0
    printed = capsys.readouterr().out
    assert "confidence: High" in printed and "BLACK_CRUST" in printed and "cost $" in printed
    run_dir = tmp_path / "a" / "case01_19700101T000000Z"
    diagnosis = read_json(run_dir / "diagnosis.json")
    assert [f["pattern"] for f in diagnosis["findings"]] == [
        "BLACK_CRUST", "GRANULAR_DISINTEGRATION", "EFFLORESCENCE", "DELAMINATION"]
    assert read_json(run_dir / "log.json")["case_prompt"] == DEFAULT_TEST_PROMPT
    assert diagnose(fixtures_dir, tmp_path / "b") == 0
    for name in ("diagnosis.json", "log.json"):
        assert (run_dir / name).read_bytes() == (tmp_path / "b" / run_dir.name / name).read_bytes()


def test_diagnose_without_retrieval(fixtures_dir, tmp_path):
    assert diagnose(fixtures_dir, tmp_path, "--no-retrieval", "--order",
                    "conservator,environmental,pathologist,lithologist") == 0
    log = read_json(tmp_path / "case01_19700101T000000Z" / "log.json")
    assert [e["agent_id"] for e in log["entries"][4:8]] == ["conservator", "environmental", "pathologist",
                                                            "lithologist"]


def test_diagnose_missing_image(fixtures_dir, tmp_path, capsys):
    assert main(["diagnose", "--config", str(fixtures_dir / "config.json"), "--out", str(tmp_path),
                 str(tmp_path / "missing.png")]) == 2
    assert "missing.png" in capsys.readouterr().err


def test_diagnose_bad_order_is_config_error(fixtures_dir, tmp_path):
    assert diagnose(fixtures_dir, tmp_path, "--order", "pathologist") == 2


def test_mock_without_transcript(fixtures_dir, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"backend": {"mode": "mock"}}))
    assert main(["diagnose", "--config", str(cfg), str(fixtures_dir / "images" / "case01.png")]) == 2


def test_invalid_config_json(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text("{oops")
    assert main(["diagnose", "--config", str(cfg), "x.png"]) == 2
    assert "invalid JSON" in capsys.readouterr().err


def test_unscripted_case_is_run_failure(fixtures_dir, tmp_path, capsys):
    assert diagnose(fixtures_dir, tmp_path, "--case-id", "case99") == 3
    assert "FAILED" in capsys.readouterr().err
    log = read_json(tmp_path / "case99_19700101T000000Z" / "log.json")
    assert log["complete"] is False and log["entries"] == []


def test_baseline_writes_prediction(fixtures_dir, tmp_path):
    code = main(["baseline", "--config", str(fixtures_dir / "config.json"), "--out", str(tmp_path),
                 str(fixtures_dir / "images" / "case02.png")])
    assert code == 0
    prediction = read_json(tmp_path / "case02_19700101T000000Z" / "prediction.json")
    assert [f["pattern"] for f in prediction["findings"]] == ["BIOCOLONIZATION", "CRACK"]


def test_baseline_malformed_after_retry(fixture_copy, tmp_path):
    transcript = fixture_copy / "transcript.jsonl"
    records = [json.loads(line) for line in transcript.read_text().splitlines()]
    for r in records:
        if r["phase"] == "baseline" and r["case_id"] == "case01":
            r["reply"] = "I see a black crust."
    records.append({"case_id": "case01", "agent_id": "foundational", "phase": "baseline", "attempt": 1,
                    "reply": "Still no block.", "prompt_tokens": 1, "completion_tokens": 1})
    transcript.write_text("".join(json.dumps(r) + "\n" for r in records))
    code = main(["baseline", "--config", str(fixture_copy / "config.json"), "--out", str(tmp_path / "o"),
                 str(fixture_copy / "images" / "case01.png")])
    assert code == 3


def write_predictions(directory, case_id, patterns):
    directory.mkdir(parents=True, exist_ok=True)
    findings = [{"pattern": p, "location": "x", "rationale": ""} for p in patterns]
    (directory / f"{case_id}.json").write_text(json.dumps({"case_id": case_id, "findings": findings}))


def synthetic_eval(tmp_path, name, tp, fp, fn):
    """Corpus and predictions with exactly the given micro counts.

    Each case has four CRACK/MOSS/LICHEN/PATINA truths; correct calls name a
    truth, false alarms use free text that matches no pattern.
    """
    ids = ["CRACK", "MOSS", "LICHEN", "PATINA"]
    truths = tp + fn
    n_cases = -(-truths // 4)
    corpus, remaining_tp = [], tp
    for i in range(n_cases):
        expected = ids[: min(4, truths - 4 * i)]
        hits = min(remaining_tp, len(expected))
        remaining_tp -= hits
        noise = fp // n_cases + (1 if i < fp % n_cases else 0)
        write_predictions(tmp_path / name, f"c{i:03d}", expected[:hits] + [f"zz noise {j}" for j in range(noise)])
        corpus.append(json.dumps({"case_id": f"c{i:03d}", "expected": expected}))
    path = tmp_path / f"{name}.jsonl"
    path.write_text("\n".join(corpus) + "\n")
    return path


@pytest.mark.parametrize("name, counts, row", [
    ("Foundational", (73, 51, 126), "73  51  126  58.9%  36.7%  45.2%"),
    ("Id-Pattern", (149, 51, 65), "149  51   65  74.5%  69.6%  72.0%"),
])
def test_eval_reproduces_published_rows(tmp_path, capsys, name, counts, row):
    corpus = synthetic_eval(tmp_path, name, *counts)
    assert main(["eval", str(corpus), f"{name}={tmp_path / name}", "--out", str(tmp_path / "rep")]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert tuple(lines[0].split()) == COLUMNS
    assert lines[1].split() == [name, *row.split()]


def test_eval_missing_prediction(fixtures_dir, tmp_path, capsys):
    write_predictions(tmp_path / "sys", "case01", ["BLACK_CRUST"])
    code = main(["eval", "--config", str(fixtures_dir / "config.json"), str(fixtures_dir / "corpus.jsonl"),
                 f"S={tmp_path / 'sys'}", "--out", str(tmp_path / "rep")])
    assert code == 2
    assert "case02" in capsys.readouterr().err


def test_eval_malformed_prediction(fixtures_dir, tmp_path):
    (tmp_path / "sys").mkdir()
    for c in ("case01", "case02", "case03"):
        (tmp_path / "sys" / f"{c}.json").write_text('{"findings": [{"pattern": "CRACK"}]}')
    code = main(["eval", "--config", str(fixtures_dir / "config.json"), str(fixtures_dir / "corpus.jsonl"),
                 f"S={tmp_path / 'sys'}", "--out", str(tmp_path / "rep")])
    assert code == 2

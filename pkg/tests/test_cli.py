"""CLI pipeline walkthrough and exit-code contract.

Exit codes under test: 0 success, 2 config/input error, 3 isolation
violation, 4 provider failure.
"""

import json

import pytest
from click.testing import CliRunner

from sva_rag.cli import main

from conftest import make_records, write_jsonl

DIMS = ["--code-dim", "64", "--desc-dim", "64"]


@pytest.fixture()
def runner():
    return CliRunner()


@pytest.fixture()
def raw_dataset(tmp_path):
    return write_jsonl(tmp_path / "raw.jsonl", make_records(32, seed=11))


def _invoke(runner, args):
    result = runner.invoke(main, args)
    if result.exception and not isinstance(result.exception, SystemExit):
        raise result.exception
    return result


def test_help_lists_all_commands(runner):
    result = _invoke(runner, ["--help"])
    assert result.exit_code == 0
    for command in ("build-kb", "enrich", "embed", "split", "assess", "evaluate", "report", "sweep"):
        assert command in result.output


def test_full_pipeline(tmp_path, runner, raw_dataset):
    splits = tmp_path / "splits"
    result = _invoke(runner, ["split", "--input", raw_dataset, "--out-dir", str(splits), "--seed", "3"])
    assert result.exit_code == 0
    for name in ("knowledge", "validation", "test"):
        assert (splits / f"{name}.jsonl").exists()

    store = tmp_path / "store.jsonl"
    result = _invoke(
        runner, ["build-kb", "--input", str(splits / "knowledge.jsonl"), "--out", str(store)]
    )
    assert result.exit_code == 0
    assert "malformed" in result.output

    embedded = tmp_path / "embedded.jsonl"
    result = _invoke(runner, ["embed", "--store", str(store), "--out", str(embedded), *DIMS])
    assert result.exit_code == 0
    assert "fallback-ngram3" in result.output

    manifest = tmp_path / "run.jsonl"
    result = _invoke(
        runner,
        [
            "assess",
            "--test", str(splits / "test.jsonl"),
            "--store", str(embedded),
            "--out", str(manifest),
            "--top-k", "3",
            *DIMS,
        ],
    )
    assert result.exit_code == 0
    lines = manifest.read_text(encoding="utf-8").splitlines()
    header = json.loads(lines[0])
    assert header["type"] == "header" and header["k"] == 3
    n_test = len((splits / "test.jsonl").read_text().splitlines())
    assert len(lines) == 1 + n_test

    report_json = tmp_path / "report.json"
    result = _invoke(runner, ["report", "--manifest", str(manifest), "--out", str(report_json)])
    assert result.exit_code == 0
    assert "accuracy:" in result.output
    bundle = json.loads(report_json.read_text())
    assert set(bundle) == {"config", "metrics", "token_stats", "errors"}

    eval_json = tmp_path / "eval.json"
    eval_csv = tmp_path / "eval.csv"
    result = _invoke(
        runner,
        [
            "evaluate",
            "--predictions", str(manifest),
            "--truth", str(splits / "test.jsonl"),
            "--out", str(eval_json),
            "--csv", str(eval_csv),
        ],
    )
    assert result.exit_code == 0
    payload = json.loads(eval_json.read_text())
    assert 0.0 <= payload["accuracy"] <= 1.0
    assert payload == bundle["metrics"]  # same pairs, same arithmetic
    assert eval_csv.read_text().splitlines()[0] == "accuracy_pct,macro_f1_pct,macro_mcc_pct"

    sweep_json = tmp_path / "sweep.json"
    result = _invoke(
        runner,
        [
            "sweep",
            "--store", str(embedded),
            "--eval", str(splits / "validation.jsonl"),
            "--out", str(sweep_json),
            "--phi-sweep", "0,0.5,1",
            "--k-sweep", "0,2",
            "--top-k", "2",
            *DIMS,
        ],
    )
    assert result.exit_code == 0
    tables = json.loads(sweep_json.read_text())
    assert [row["code_weight_pct"] for row in tables["phi_table"]] == [0, 50, 100]
    assert [row["setting"] for row in tables["k_table"]] == ["zero-shot", "2-shot"]
    assert "fusion-weight sweep" in result.output


def test_split_is_deterministic(tmp_path, runner, raw_dataset):
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    for out in (out_a, out_b):
        result = _invoke(runner, ["split", "--input", raw_dataset, "--out-dir", str(out), "--seed", "42"])
        assert result.exit_code == 0
    for name in ("knowledge", "validation", "test"):
        assert (out_a / f"{name}.jsonl").read_bytes() == (out_b / f"{name}.jsonl").read_bytes()


def test_build_kb_reports_skipped_lines(tmp_path, runner):
    raw = tmp_path / "mixed.jsonl"
    good = make_records(8, seed=2)
    rows = [json.dumps(good[0].to_dict()), "{\"cve_id\": \"nope\"}", json.dumps(good[1].to_dict())]
    raw.write_text("\n".join(rows) + "\n")
    result = _invoke(runner, ["build-kb", "--input", str(raw), "--out", str(tmp_path / "kb.jsonl")])
    assert result.exit_code == 0
    assert "ingested 2 records (1 malformed lines skipped)" in result.output


def test_exit_2_on_empty_dataset(tmp_path, runner):
    raw = tmp_path / "junk.jsonl"
    raw.write_text("not json\n{\"cve_id\": 5}\n")
    result = _invoke(runner, ["build-kb", "--input", str(raw), "--out", str(tmp_path / "kb.jsonl")])
    assert result.exit_code == 2


def test_exit_2_on_bad_ratios(tmp_path, runner, raw_dataset):
    result = _invoke(
        runner,
        ["split", "--input", raw_dataset, "--out-dir", str(tmp_path / "s"), "--ratios", "0.9,0.3,0.1"],
    )
    assert result.exit_code == 2
    result = _invoke(
        runner,
        ["split", "--input", raw_dataset, "--out-dir", str(tmp_path / "s"), "--ratios", "oops"],
    )
    assert result.exit_code == 2


def test_exit_2_on_provider_mismatch(tmp_path, runner, raw_dataset):
    store = tmp_path / "store.jsonl"
    embedded = tmp_path / "embedded.jsonl"
    assert _invoke(runner, ["build-kb", "--input", raw_dataset, "--out", str(store)]).exit_code == 0
    assert _invoke(runner, ["embed", "--store", str(store), "--out", str(embedded), *DIMS]).exit_code == 0
    # assessing with different fallback dimensions is a config error, not a
    # silent similarity mismatch
    result = _invoke(
        runner,
        [
            "assess",
            "--test", raw_dataset,
            "--store", str(embedded),
            "--out", str(tmp_path / "m.jsonl"),
            "--code-dim", "32",
            "--desc-dim", "32",
        ],
    )
    assert result.exit_code == 2


def test_exit_2_on_missing_predictions(tmp_path, runner, raw_dataset):
    preds = tmp_path / "preds.jsonl"
    records = make_records(8, seed=3)
    preds.write_text(json.dumps({"cve_id": records[0].cve_id, "parsed_label": "LOW"}) + "\n")
    truth = write_jsonl(tmp_path / "truth.jsonl", records)
    result = _invoke(
        runner,
        ["evaluate", "--predictions", str(preds), "--truth", truth, "--out", str(tmp_path / "e.json")],
    )
    assert result.exit_code == 2


def test_exit_3_on_planted_test_id(tmp_path, runner):
    records = make_records(24, seed=5)
    knowledge, test = records[:20], records[20:]
    store = tmp_path / "store.jsonl"
    embedded = tmp_path / "embedded.jsonl"
    kb_path = write_jsonl(tmp_path / "kb.jsonl", knowledge)
    assert _invoke(runner, ["build-kb", "--input", kb_path, "--out", str(store)]).exit_code == 0
    assert _invoke(runner, ["embed", "--store", str(store), "--out", str(embedded), *DIMS]).exit_code == 0

    # plant one knowledge record into the test file
    leaked = write_jsonl(tmp_path / "test.jsonl", test + [knowledge[0]])
    result = _invoke(
        runner,
        [
            "assess",
            "--test", leaked,
            "--store", str(embedded),
            "--out", str(tmp_path / "m.jsonl"),
            *DIMS,
        ],
    )
    assert result.exit_code == 3
    assert not (tmp_path / "m.jsonl").exists() or not (tmp_path / "m.jsonl").read_text()

    clean = write_jsonl(tmp_path / "clean.jsonl", test)
    result = _invoke(
        runner,
        [
            "assess",
            "--test", clean,
            "--store", str(embedded),
            "--out", str(tmp_path / "m2.jsonl"),
            *DIMS,
        ],
    )
    assert result.exit_code == 0


def test_exit_4_on_rejected_credentials(tmp_path, runner, raw_dataset, fixture_server):
    records = make_records(24, seed=5)
    store = tmp_path / "store.jsonl"
    embedded = tmp_path / "embedded.jsonl"
    kb_path = write_jsonl(tmp_path / "kb.jsonl", records[:20])
    test_path = write_jsonl(tmp_path / "test.jsonl", records[20:])
    assert _invoke(runner, ["build-kb", "--input", kb_path, "--out", str(store)]).exit_code == 0
    assert _invoke(runner, ["embed", "--store", str(store), "--out", str(embedded), *DIMS]).exit_code == 0

    fixture_server.route("/v1/chat/completions", {"error": "invalid api key"}, status=401)
    result = _invoke(
        runner,
        [
            "assess",
            "--test", test_path,
            "--store", str(embedded),
            "--out", str(tmp_path / "m.jsonl"),
            "--llm", "http",
            "--llm-base-url", f"{fixture_server.base_url}/v1",
            "--llm-model", "test-model",
            *DIMS,
        ],
    )
    assert result.exit_code == 4


def test_exit_4_on_unreachable_embedding_service(tmp_path, runner, raw_dataset):
    store = tmp_path / "store.jsonl"
    assert _invoke(runner, ["build-kb", "--input", raw_dataset, "--out", str(store)]).exit_code == 0
    result = _invoke(
        runner,
        [
            "embed",
            "--store", str(store),
            "--out", str(tmp_path / "embedded.jsonl"),
            "--provider", "remote",
            "--endpoint", "http://127.0.0.1:9",
        ],
    )
    assert result.exit_code == 4


def test_assess_resume_flag(tmp_path, runner):
    records = make_records(26, seed=5)
    store = tmp_path / "store.jsonl"
    embedded = tmp_path / "embedded.jsonl"
    kb_path = write_jsonl(tmp_path / "kb.jsonl", records[:20])
    test_path = write_jsonl(tmp_path / "test.jsonl", records[20:])
    assert _invoke(runner, ["build-kb", "--input", kb_path, "--out", str(store)]).exit_code == 0
    assert _invoke(runner, ["embed", "--store", str(store), "--out", str(embedded), *DIMS]).exit_code == 0

    manifest = tmp_path / "m.jsonl"
    base = [
        "assess",
        "--test", test_path,
        "--store", str(embedded),
        "--out", str(manifest),
        *DIMS,
    ]
    assert _invoke(runner, [*base, "--max-samples", "2"]).exit_code == 0
    assert len(manifest.read_text().splitlines()) == 1 + 2
    assert _invoke(runner, [*base, "--resume"]).exit_code == 0
    assert len(manifest.read_text().splitlines()) == 1 + 6

import json
import random

import pytest

from fedbroker.errors import DanglingReference, ParseError
from fedbroker.ingest import (
    DatasetManifest,
    build_manifest,
    load_dataset,
    persist_jsonl,
    read_jsonl,
)

from synth import build_federation, write_federation


@pytest.fixture
def data_dir(tmp_path):
    federation = build_federation(n_resources=4, n_logged=3, n_test=2, snippets_per_pair=4)
    return write_federation(federation, tmp_path / "data"), federation


class TestPersist:
    def test_write_then_read_roundtrip(self, tmp_path):
        records = [{"id": f"r{i}", "value": i} for i in range(10)]
        path = tmp_path / "out.jsonl"
        entry = persist_jsonl(records, path)
        assert entry.count == 10
        loaded = [record for _, record in read_jsonl(path)]
        assert loaded == records

    def test_interrupted_write_leaves_no_partial_file(self, tmp_path):
        path = tmp_path / "out.jsonl"
        persist_jsonl([{"id": "keep"}], path)

        def exploding():
            yield {"id": "a"}
            raise RuntimeError("interrupted")

        with pytest.raises(RuntimeError):
            persist_jsonl(exploding(), path)
        # Original content intact, no temp files left behind.
        assert [r for _, r in read_jsonl(path)] == [{"id": "keep"}]
        assert list(tmp_path.glob("*.tmp")) == []

    def test_identical_content_identical_checksum(self, tmp_path):
        records = [{"id": "a", "x": 1}, {"id": "b", "x": 2}]
        first = persist_jsonl(records, tmp_path / "one.jsonl")
        second = persist_jsonl(records, tmp_path / "two.jsonl")
        assert first.sha256 == second.sha256

    def test_malformed_line_reports_line_number(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"ok": 1}\nnot json\n', encoding="utf-8")
        with pytest.raises(ParseError) as excinfo:
            list(read_jsonl(path))
        assert excinfo.value.line == 2

    def test_non_object_line_rejected(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text("[1, 2]\n", encoding="utf-8")
        with pytest.raises(ParseError):
            list(read_jsonl(path))


class TestLoadDataset:
    def test_counts_match(self, data_dir):
        directory, federation = data_dir
        dataset = load_dataset(directory)
        assert len(dataset.registry) == 4
        assert len(dataset.queries) == 5
        assert len(dataset.snippets) == len(federation.snippets)
        assert len(dataset.logged_queries()) == 3
        assert len(dataset.test_queries()) == 2
        assert dataset.qrels is not None

    def test_query_log_covers_logged_queries_only(self, data_dir):
        directory, federation = data_dir
        dataset = load_dataset(directory)
        assert {q.id for q in dataset.query_log.queries} == {
            q.id for q in federation.logged_queries
        }
        group = dataset.query_log.snippets_for("lq00", "e00")
        assert [s.rank for s in group] == [1, 2, 3, 4]

    def test_order_independence(self, data_dir, tmp_path):
        directory, _ = data_dir
        shuffled_dir = tmp_path / "shuffled"
        shuffled_dir.mkdir()
        rng = random.Random(5)
        for name in ("resources", "queries", "snippets", "qrels"):
            lines = (directory / f"{name}.jsonl").read_text().splitlines()
            rng.shuffle(lines)
            (shuffled_dir / f"{name}.jsonl").write_text("\n".join(lines) + "\n")
        original = load_dataset(directory)
        shuffled = load_dataset(shuffled_dir)
        assert shuffled.queries == original.queries
        assert shuffled.snippets == original.snippets
        assert shuffled.registry.ids() == original.registry.ids()
        assert shuffled.qrels == original.qrels

    def test_dangling_snippet_resource(self, data_dir):
        directory, _ = data_dir
        with open(directory / "snippets.jsonl", "a", encoding="utf-8") as handle:
            handle.write(json.dumps({
                "resource_id": "ghost", "query_id": "lq00", "rank": 1,
                "title": "t", "body": "b",
            }) + "\n")
        with pytest.raises(DanglingReference) as excinfo:
            load_dataset(directory)
        assert excinfo.value.kind == "resource"
        assert excinfo.value.ref_id == "ghost"

    def test_dangling_qrels_query(self, data_dir):
        directory, _ = data_dir
        with open(directory / "qrels.jsonl", "a", encoding="utf-8") as handle:
            handle.write(json.dumps({
                "query_id": "ghost", "resource_id": "e00", "gain": 50,
            }) + "\n")
        with pytest.raises(DanglingReference):
            load_dataset(directory)

    def test_non_contiguous_ranks_rejected(self, data_dir):
        directory, _ = data_dir
        with open(directory / "snippets.jsonl", "a", encoding="utf-8") as handle:
            handle.write(json.dumps({
                "resource_id": "e00", "query_id": "tq0", "rank": 7,
                "title": "t", "body": "b",
            }) + "\n")
        with pytest.raises(ParseError):
            load_dataset(directory)

    def test_bad_record_reports_line(self, data_dir):
        directory, _ = data_dir
        with open(directory / "queries.jsonl", "a", encoding="utf-8") as handle:
            handle.write(json.dumps({"id": "broken"}) + "\n")  # no text field
        with pytest.raises(ParseError):
            load_dataset(directory)

    def test_duplicate_query_id_rejected(self, data_dir):
        directory, _ = data_dir
        with open(directory / "queries.jsonl", "a", encoding="utf-8") as handle:
            handle.write(json.dumps({
                "id": "tq0", "text": "again", "kind": "adhoc", "origin": "test",
            }) + "\n")
        with pytest.raises(ParseError):
            load_dataset(directory)


class TestFullCollectionShape:
    def test_production_sized_layout(self, tmp_path):
        # 157 engines, 50 test queries, logged queries with top-10 snippets:
        # groups in the log never exceed 10 per (query, resource).
        directory = tmp_path / "big"
        directory.mkdir()
        with open(directory / "resources.jsonl", "w", encoding="utf-8") as handle:
            for i in range(157):
                handle.write(json.dumps({
                    "id": f"e{i:03d}", "name": f"Engine {i}",
                    "url": f"https://e{i}.example.com", "discontinued": False,
                }) + "\n")
        with open(directory / "queries.jsonl", "w", encoding="utf-8") as handle:
            for i in range(50):
                handle.write(json.dumps({
                    "id": f"tq{i:02d}", "text": f"test topic {i}",
                    "kind": "adhoc", "origin": "test",
                }) + "\n")
            for i in range(5):
                handle.write(json.dumps({
                    "id": f"lq{i:02d}", "text": f"logged topic {i}",
                    "kind": "adhoc", "origin": "logged",
                }) + "\n")
        with open(directory / "snippets.jsonl", "w", encoding="utf-8") as handle:
            for q in range(5):
                for r in range(157):
                    for rank in range(1, 11):
                        handle.write(json.dumps({
                            "resource_id": f"e{r:03d}", "query_id": f"lq{q:02d}",
                            "rank": rank, "title": f"t{rank}", "body": f"b{rank}",
                        }) + "\n")
        dataset = load_dataset(directory)
        assert len(dataset.registry) == 157
        assert len(dataset.test_queries()) == 50
        for key, group in dataset.query_log.groups.items():
            assert len(group) <= 10


class TestManifest:
    def test_build_and_verify(self, data_dir):
        directory, _ = data_dir
        manifest = build_manifest(directory)
        assert set(manifest.entries) == {"resources", "queries", "snippets", "qrels"}
        manifest.verify()
        assert manifest.entries["resources"].count == 4

    def test_roundtrip(self, data_dir, tmp_path):
        directory, _ = data_dir
        manifest = build_manifest(directory)
        path = tmp_path / "manifest.json"
        manifest.write(path)
        assert DatasetManifest.read(path) == manifest

    def test_verify_detects_tampering(self, data_dir):
        directory, _ = data_dir
        manifest = build_manifest(directory)
        with open(directory / "queries.jsonl", "a", encoding="utf-8") as handle:
            handle.write(json.dumps({
                "id": "qx", "text": "late addition", "kind": "adhoc", "origin": "test",
            }) + "\n")
        with pytest.raises(ValueError):
            manifest.verify()

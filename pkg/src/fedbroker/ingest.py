"""Dataset loading and artifact persistence.

The canonical exchange format is JSONL: ``resources.jsonl``,
``queries.jsonl``, ``snippets.jsonl`` and optionally ``judgments.jsonl``
and ``qrels.jsonl`` inside one data directory. Native collection formats
are converted to this layout by out-of-repo adapters, keeping the core
dataset-agnostic.

All writes are atomic (temp file + rename) and checksummed so pipeline
reruns are auditable.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

from .errors import DanglingReference, ParseError
from .evaluation import ResourceQrels
from .model import (
    Judgment,
    Query,
    QueryLog,
    QueryOrigin,
    ResourceRegistry,
    Snippet,
    judgment_from_record,
    query_from_record,
    resource_from_record,
    snippet_from_record,
    validate_registry,
)

DATA_FILES = ("resources", "queries", "snippets", "judgments", "qrels")
MANIFEST_NAME = "manifest.json"


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    count: int
    sha256: str

    def to_record(self) -> dict:
        return {"path": self.path, "count": self.count, "sha256": self.sha256}


@dataclass(frozen=True)
class DatasetManifest:
    entries: dict[str, ManifestEntry]

    def path_for(self, name: str) -> Path:
        return Path(self.entries[name].path)

    def __contains__(self, name: str) -> bool:
        return name in self.entries

    def to_json_dict(self) -> dict:
        return {name: entry.to_record() for name, entry in sorted(self.entries.items())}

    def write(self, path: Path | str) -> None:
        content = json.dumps(self.to_json_dict(), indent=2) + "\n"
        _atomic_write_text(Path(path), content)

    @classmethod
    def read(cls, path: Path | str) -> "DatasetManifest":
        with open(path, encoding="utf-8") as handle:
            data = json.load(handle)
        return cls(
            entries={
                name: ManifestEntry(
                    path=record["path"], count=int(record["count"]), sha256=record["sha256"]
                )
                for name, record in data.items()
            }
        )

    def verify(self) -> None:
        """Check that every referenced file exists and matches its checksum."""
        for name, entry in self.entries.items():
            path = Path(entry.path)
            if not path.exists():
                raise FileNotFoundError(f"manifest entry {name!r}: missing file {path}")
            actual = _sha256_file(path)
            if actual != entry.sha256:
                raise ValueError(
                    f"manifest entry {name!r}: checksum mismatch for {path} "
                    f"({actual} != {entry.sha256})"
                )


def _sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _atomic_write_text(path: Path, content: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, temp_name = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as handle:
            handle.write(content)
            handle.flush()
            os.fsync(handle.fileno())
        os.replace(temp_name, path)
    except BaseException:
        if os.path.exists(temp_name):
            os.unlink(temp_name)
        raise


def persist_jsonl(records: Iterable[dict], path: Path | str) -> ManifestEntry:
    """Atomically write records as JSONL and return a checksummed entry.

    An interrupted write leaves no partial file at the target path. The
    line encoding is deterministic (no key sorting: callers emit dicts in
    declared field order), so identical content re-checksums identically.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    digest = hashlib.sha256()
    fd, temp_name = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as handle:
            for record in records:
                line = json.dumps(record, ensure_ascii=False) + "\n"
                handle.write(line)
                digest.update(line.encode("utf-8"))
                count += 1
            handle.flush()
            os.fsync(handle.fileno())
        os.replace(temp_name, path)
    except BaseException:
        if os.path.exists(temp_name):
            os.unlink(temp_name)
        raise
    return ManifestEntry(path=str(path), count=count, sha256=digest.hexdigest())


def read_jsonl(path: Path | str) -> Iterator[tuple[int, dict]]:
    """Yield (line_number, record); malformed lines raise ParseError."""
    with open(path, encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as error:
                raise ParseError(f"invalid JSON in {path}: {error}", line=line_number) from None
            if not isinstance(record, dict):
                raise ParseError(f"expected an object in {path}", line=line_number)
            yield line_number, record


@dataclass
class LoadedDataset:
    registry: ResourceRegistry
    queries: tuple[Query, ...]
    snippets: tuple[Snippet, ...]
    query_log: QueryLog
    judgments: tuple[Judgment, ...]
    qrels: ResourceQrels | None

    def test_queries(self) -> list[Query]:
        return [q for q in self.queries if q.origin is QueryOrigin.TEST]

    def logged_queries(self) -> list[Query]:
        return [q for q in self.queries if q.origin is QueryOrigin.LOGGED]

    def snippets_for(self, query_id: str, resource_id: str) -> list[Snippet]:
        group = [
            s for s in self.snippets if s.query_id == query_id and s.resource_id == resource_id
        ]
        group.sort(key=lambda s: s.rank)
        return group


def _parse_file(path: Path, parser, kind: str) -> list:
    items = []
    for line_number, record in read_jsonl(path):
        try:
            items.append(parser(record))
        except (KeyError, ValueError, TypeError) as error:
            raise ParseError(f"bad {kind} record in {path}: {error}", line=line_number) from None
    return items


def load_dataset(
    data_dir: Path | str,
    max_snippets_per_group: int = 10,
) -> LoadedDataset:
    """Load and cross-validate a canonical data directory.

    Loading is order-independent: records are sorted on ingest, so
    shuffled input files produce the same in-memory dataset. Snippets and
    judgments must reference known resources and queries; within a
    (query, resource) group snippet ranks must be contiguous from 1.
    """
    data_dir = Path(data_dir)
    resources = _parse_file(data_dir / "resources.jsonl", resource_from_record, "resource")
    registry = validate_registry(resources)
    queries = _parse_file(data_dir / "queries.jsonl", query_from_record, "query")
    queries.sort(key=lambda q: q.id)
    query_ids: set[str] = set()
    for query in queries:
        if query.id in query_ids:
            raise ParseError(f"duplicate query id {query.id!r}")
        query_ids.add(query.id)

    snippets = _parse_file(data_dir / "snippets.jsonl", snippet_from_record, "snippet")
    snippets.sort(key=lambda s: (s.query_id, s.resource_id, s.rank))
    groups: dict[tuple[str, str], list[Snippet]] = {}
    for snippet in snippets:
        if snippet.resource_id not in registry:
            raise DanglingReference("resource", snippet.resource_id)
        if snippet.query_id not in query_ids:
            raise DanglingReference("query", snippet.query_id)
        groups.setdefault((snippet.query_id, snippet.resource_id), []).append(snippet)
    for key, group in groups.items():
        ranks = [s.rank for s in group]
        if ranks != list(range(1, len(group) + 1)):
            raise ParseError(f"snippet ranks for {key} not contiguous from 1: {ranks}")

    judgments: list[Judgment] = []
    judgments_path = data_dir / "judgments.jsonl"
    if judgments_path.exists():
        judgments = _parse_file(judgments_path, judgment_from_record, "judgment")
        judgments.sort(key=lambda j: (j.query_id, j.resource_id, j.snippet_rank))
        for judgment in judgments:
            if judgment.resource_id not in registry:
                raise DanglingReference("resource", judgment.resource_id)
            if judgment.query_id not in query_ids:
                raise DanglingReference("query", judgment.query_id)

    qrels: ResourceQrels | None = None
    qrels_path = data_dir / "qrels.jsonl"
    if qrels_path.exists():
        records = [record for _, record in read_jsonl(qrels_path)]
        qrels = ResourceQrels.from_records(records)
        for query_id, table in qrels.gains.items():
            if query_id not in query_ids:
                raise DanglingReference("query", query_id)
            for resource_id in table:
                if resource_id not in registry:
                    raise DanglingReference("resource", resource_id)

    logged = [q for q in queries if q.origin is QueryOrigin.LOGGED]
    logged_ids = {q.id for q in logged}
    logged_snippets = [s for s in snippets if s.query_id in logged_ids]
    query_log = QueryLog.build(logged, logged_snippets, max_per_group=max_snippets_per_group)

    return LoadedDataset(
        registry=registry,
        queries=tuple(queries),
        snippets=tuple(snippets),
        query_log=query_log,
        judgments=tuple(judgments),
        qrels=qrels,
    )


def build_manifest(data_dir: Path | str) -> DatasetManifest:
    """Checksum every canonical file present in the directory."""
    data_dir = Path(data_dir)
    entries: dict[str, ManifestEntry] = {}
    for name in DATA_FILES:
        path = data_dir / f"{name}.jsonl"
        if not path.exists():
            continue
        count = sum(1 for _ in read_jsonl(path))
        entries[name] = ManifestEntry(path=str(path), count=count, sha256=_sha256_file(path))
    return DatasetManifest(entries=entries)

from __future__ import annotations

import pytest

from fedbroker.model import Query, QueryKind, QueryOrigin, Resource, Snippet


@pytest.fixture
def resource() -> Resource:
    return Resource(
        id="e1",
        name="PubMed",
        url="https://pubmed.ncbi.nlm.nih.gov",
        description="Biomedical literature search.",
    )


@pytest.fixture
def query() -> Query:
    return Query(id="q1", text="emu habitat", kind=QueryKind.AD_HOC, origin=QueryOrigin.TEST)


@pytest.fixture
def snippets(resource, query) -> list[Snippet]:
    return [
        Snippet(
            resource_id=resource.id,
            query_id=query.id,
            rank=rank,
            title=f"Title {rank}",
            body=f"Body text {rank} about emus.",
        )
        for rank in (1, 2, 3)
    ]

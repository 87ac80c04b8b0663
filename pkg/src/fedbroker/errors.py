"""Domain errors shared across the package.

Every error raised on purpose by fedbroker derives from FedbrokerError so
callers (CLI, HTTP service) can map domain failures to exit code 1 / HTTP
status codes without catching unrelated exceptions.
"""


class FedbrokerError(Exception):
    """Base class for all fedbroker domain errors."""


class DuplicateId(FedbrokerError):
    def __init__(self, resource_id: str):
        super().__init__(f"duplicate resource id: {resource_id!r}")
        self.resource_id = resource_id


class EmptyField(FedbrokerError):
    def __init__(self, kind: str, object_id: str, field: str):
        super().__init__(f"{kind} {object_id!r} has empty required field {field!r}")
        self.kind = kind
        self.object_id = object_id
        self.field = field


class MissingDescription(FedbrokerError):
    """Representation requests the description but the resource has none."""


class MissingSnippets(FedbrokerError):
    """Representation requests similar snippets but none were supplied."""


class EmptySnippet(FedbrokerError):
    """Judging prompt requires a snippet with a non-empty body."""


class WrongSnippetCount(FedbrokerError):
    """Query generation requires exactly three navigational snippets."""


class BackendUnavailable(FedbrokerError):
    """The inference backend could not be reached after the retry."""


class ContextOverflow(FedbrokerError):
    """Prompt exceeds the backend's context window."""


class EmptyRegistry(FedbrokerError):
    """Ranking over an empty resource registry."""


class AllFiltered(FedbrokerError):
    """Every resource scored below zero under the non-negative filter."""


class ResourceWithoutSnippets(FedbrokerError):
    def __init__(self, resource_id: str):
        super().__init__(f"resource {resource_id!r} has no logged snippets")
        self.resource_id = resource_id


class UnknownResource(FedbrokerError):
    def __init__(self, resource_id: str):
        super().__init__(f"unknown resource id: {resource_id!r}")
        self.resource_id = resource_id


class Unparseable(FedbrokerError):
    """No usable JSON score object found in a judging completion."""


class OutOfRange(FedbrokerError):
    """Numeric argument outside its documented domain."""


class LengthMismatch(FedbrokerError):
    """Paired label lists have different lengths."""


class EmptyLabels(FedbrokerError):
    """Agreement statistics need at least one label pair."""


class ParseError(FedbrokerError):
    def __init__(self, message: str, line: int | None = None):
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)
        self.line = line


class DanglingReference(FedbrokerError):
    def __init__(self, kind: str, ref_id: str):
        super().__init__(f"reference to unknown {kind}: {ref_id!r}")
        self.kind = kind
        self.ref_id = ref_id


class MissingQrels(FedbrokerError):
    def __init__(self, query_id: str):
        super().__init__(f"no qrels for query {query_id!r}")
        self.query_id = query_id


class InsufficientNavigationalSnippets(FedbrokerError):
    """Fewer than three snippets judged navigational for the query."""

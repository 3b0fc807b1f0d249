"""Exception hierarchy shared by every module.

Each class carries the CLI exit code it maps to: 2 for configuration problems,
3 for network failures and 4 for data problems.
"""


class WikiMemoryError(Exception):
    exit_code = 4


class ConfigError(WikiMemoryError, ValueError):
    exit_code = 2


# network side
class NetworkError(WikiMemoryError):
    exit_code = 3


class TransportError(NetworkError):
    """HTTP or socket failure, or an API response that could not be understood."""


class RateLimited(NetworkError):
    """The retry budget ran out while the server kept answering 429."""


class Truncated(NetworkError):
    """A continuation chain broke off before the server reported completion."""


class PageMissing(WikiMemoryError):
    def __init__(self, lang: str, title: str):
        super().__init__(f"page not found: {lang}:{title}")
        self.lang = lang
        self.title = title


# cache / snapshots
class CacheMiss(WikiMemoryError):
    pass


class CorruptRecord(WikiMemoryError):
    pass


class NoRevisionInSpan(WikiMemoryError):
    pass


class MissingContent(WikiMemoryError):
    """A snapshot revision was cached without its wikitext."""


# analysis
class DegenerateInput(WikiMemoryError, ValueError):
    pass


class MissingArticle(WikiMemoryError):
    pass


class ShapeMismatch(WikiMemoryError, ValueError):
    pass


class NothingToReport(WikiMemoryError):
    pass

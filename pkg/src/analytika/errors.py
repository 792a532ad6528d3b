"""Exception types shared across the framework."""


class AnalytikaError(Exception):
    """Base class for all framework errors."""


# -- archive container ------------------------------------------------------

class MalformedArchiveError(AnalytikaError):
    """Input is not a structurally valid ZIP archive."""


class EntryNotFoundError(AnalytikaError, KeyError):
    """Requested entry name is absent from the archive index."""


class DecompressionError(AnalytikaError):
    """Entry data could not be decompressed (corrupt or unsupported stream)."""


class SizeMismatchError(AnalytikaError):
    """Inflated entry length differs from the declared uncompressed size."""


# -- binary manifest --------------------------------------------------------

class MalformedManifestError(AnalytikaError):
    """Input is not a structurally valid binary XML document."""


class MissingPackageNameError(AnalytikaError):
    """Manifest has no usable package attribute."""


# -- bytecode ----------------------------------------------------------------

class MalformedDexError(AnalytikaError):
    """Input is not a structurally valid DEX file."""


class InvalidPlanError(AnalytikaError):
    """Fixture plan contains names that cannot be encoded into a DEX file."""


# -- matching ----------------------------------------------------------------

class PatternParseError(AnalytikaError):
    """Pattern file row is malformed."""


# -- pipeline / fetching -----------------------------------------------------

class AnalysisTimeout(AnalytikaError):
    """Cooperative per-app deadline expired; analysis was abandoned."""


class NetworkError(AnalytikaError):
    """Transport-level failure while fetching an APK."""


class HttpStatusError(AnalytikaError):
    """Non-success HTTP status from the download endpoint."""

    def __init__(self, code: int, message: str = ""):
        super().__init__(message or f"HTTP status {code}")
        self.code = code


class HashMismatchError(AnalytikaError):
    """Downloaded bytes do not digest to the requested hash."""


# -- aggregation -------------------------------------------------------------

class DuplicateSha256Error(AnalytikaError):
    """Corpus metadata contains the same sha256 more than once."""

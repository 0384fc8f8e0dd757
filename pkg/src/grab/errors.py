"""Exception hierarchy shared across the engine."""


class GrabError(Exception):
    """Base class for all engine errors."""


class InputError(GrabError):
    """Malformed or inconsistent caller input (bad dimensions, bad hashes, ...)."""


class IngestError(GrabError):
    """A video could not be ingested; message names the video and field."""

    def __init__(self, video_id: str, field: str, message: str):
        self.video_id = video_id
        self.field = field
        super().__init__(f"video {video_id!r}, field {field!r}: {message}")


class LoadError(GrabError):
    """Corpus manifest or embedding blob failed validation at load time."""


class NotFoundError(GrabError):
    """Referenced video / frame / row does not exist."""


class CapabilityError(GrabError):
    """The operation needs data the corpus does not carry (e.g. sequence embeddings)."""


class ProviderError(GrabError):
    """Remote embedding provider failed or returned an unusable response."""

    def __init__(self, message: str, *, bad_dimension: bool = False):
        self.bad_dimension = bad_dimension
        super().__init__(message)


class IndexFormatError(GrabError):
    """Persisted index file is corrupt or has an unsupported version."""

"""Exception types shared across the ctxprobe package."""


class CtxprobeError(Exception):
    """Base class for all ctxprobe errors."""


class TemplateError(CtxprobeError):
    """A cloze or question template is malformed or cannot be instantiated."""


class MissingTemplateError(TemplateError):
    """A fact's relation has no template of the requested kind."""


class MissingEvidenceError(CtxprobeError):
    """A fact has no oracle evidence snippet."""


class NoDonorError(CtxprobeError):
    """No eligible donor fact exists for an adversarial context."""


class IndexBuildError(CtxprobeError):
    """The paragraph corpus cannot be turned into a usable index."""


class IndexFormatError(CtxprobeError):
    """An index file is truncated, corrupt, or has the wrong magic/version."""


class QueryTooLongError(CtxprobeError):
    """The cloze query alone exceeds the 512-token budget."""


class ScorerError(CtxprobeError):
    """A scorer cannot produce a valid prediction for a request."""


class ProtocolError(ScorerError):
    """The remote scorer violated the wire protocol; not retryable."""


class TransportError(ScorerError):
    """A network-level failure talking to the remote scorer; retryable."""


class PairingError(CtxprobeError):
    """Paired evaluation records do not line up by fact uuid."""


class ConfigError(CtxprobeError):
    """A run configuration is invalid; maps to exit code 2."""

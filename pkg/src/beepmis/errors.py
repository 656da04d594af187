"""Exception types carrying a stable machine-readable error code."""


class BeepMISError(ValueError):
    """Base error. ``code`` is one of the documented error identifiers."""

    def __init__(self, code, message=""):
        self.code = code
        super().__init__(f"{code}: {message}" if message else code)


class GraphError(BeepMISError):
    pass


class ProtocolError(BeepMISError):
    pass


class ConfigError(BeepMISError):
    pass


class TraceError(BeepMISError):
    pass

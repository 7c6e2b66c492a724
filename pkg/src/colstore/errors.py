"""Exception hierarchy.

Every error carries an ``exit_code`` so the CLI and the HTTP service can map
failures without inspecting messages: 1 usage, 2 data/format, 3 store.
"""


class ColstoreError(Exception):
    exit_code = 2


class ConfigError(ColstoreError):
    """Invalid user-supplied configuration (page sizes, flags, cost model)."""

    exit_code = 1


class SchemaError(ColstoreError):
    pass


class ConsistencyError(ColstoreError):
    pass


class IntegrityError(ColstoreError):
    """Checksum, size or decompression failure on stored bytes."""


class FormatError(ColstoreError):
    pass


class ReportError(ColstoreError):
    pass


class StoreError(ColstoreError):
    exit_code = 3


class OpenError(StoreError):
    pass


class SessionError(StoreError):
    pass


class RequestError(StoreError):
    pass


class NotFoundError(StoreError):
    pass


class StorageError(StoreError):
    pass

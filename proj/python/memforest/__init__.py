"""MemForest: persistent agent memory with scoped temporal trees."""

from _memforest import (  # noqa: F401
    ConfigError,
    InputError,
    PreconditionError,
    Store,
    bench_migration,
    canonical_key,
    __version__,
)

__all__ = [
    "ConfigError",
    "InputError",
    "PreconditionError",
    "Store",
    "bench_migration",
    "canonical_key",
    "__version__",
]

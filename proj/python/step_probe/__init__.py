"""Python access to the feature container, manifest and checkpoint formats.

A frame-feature exporter writes one container per clip with `write_features`
and lists the clips in a manifest; the C++ tools train and evaluate probes on
that directory.
"""

from ._core import (
    CHECKPOINT_VERSION,
    FEATURE_VERSION,
    BadMagicError,
    ChecksumError,
    ClipRecord,
    ConfigError,
    ContractError,
    DataError,
    FormatError,
    Manifest,
    NumericError,
    Probe,
    ShapeError,
    Split,
    StepError,
    TruncatedError,
    VersionMismatchError,
    check_dataset,
    corruption_permutation,
    count_params,
    decode_features,
    encode_features,
    format_manifest,
    load_manifest,
    parse_manifest,
    read_features,
    write_features,
    write_manifest,
)

__all__ = [name for name in dir() if not name.startswith("_")]

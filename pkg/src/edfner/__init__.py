"""Zero-shot clinical NER via entity decomposition with filtering.

The pipeline decomposes a target entity type into sub-types, retrieves
sub-type entities from an open-NER backend, unions them, and filters the
union with a yes/no classifier. Exact-match metrics plus threshold sweeps,
fully-absent, and polarity analyses cover evaluation.
"""

__version__ = "0.1.0"

from .types import (  # noqa: F401
    Document,
    EntityTypeSpec,
    FilterVerdict,
    GoldEntity,
    Mention,
    NormalizationConfig,
    SubTypeSet,
    normalize,
)

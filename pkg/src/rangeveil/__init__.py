"""Encrypted Boolean range queries over spatial data, dual-server style.

Objects live at grid points and carry keywords.  A query asks for every
object inside a spatial range that also carries all the query keywords.
Two non-colluding servers each hold half of a label-addressed encrypted
index; between queries they jointly re-encrypt, re-randomize, and
permute both halves so that repeated queries and repeated touches of
the same rows cannot be correlated across time.

Typical use goes through the simulation harness:

    from rangeveil import SimConfig, Simulation

    sim = Simulation(SimConfig(seed="demo"))
    sim.setup()
    sim.ingest([{"id": 0, "x": 0.2, "y": 0.7, "keywords": ["cafe"]}])
    sim.build()
    result = sim.query(rect=(0.0, 0.5, 0.5, 1.0), keywords=("cafe",))
"""

from .analysis import (
    LinkageReport,
    PatternMatrix,
    adversary_linkage,
    min_cover_oracle,
    pattern_matrices,
    plaintext_query_oracle,
)
from .bitmap import Bitmap, combine_shares, split_shares
from .errors import (
    CiphertextError,
    EpochMismatchError,
    GroupElementError,
    ParameterError,
    ProtocolError,
    RangeVeilError,
    SealError,
    ShareIndexError,
    SlotOverflowError,
    StorageError,
)
from .harness.fabric import ActorId, Envelope, Fabric, Transcript
from .harness.simulation import SimConfig, Simulation
from .index import SpatioTextualObject
from .protocol.query import (
    MODE_CORRECTED,
    MODE_LITERAL,
    BooleanRangeQuery,
    ResultSet,
)
from .rng import RandomSource
from .spatial import (
    GridSpec,
    PrefixElement,
    SpatialRange,
    hilbert_decode,
    hilbert_encode,
    min_prefix_cover,
    prefix_family,
    prefix_universe,
)

__version__ = "0.1.0"

__all__ = [
    "ActorId",
    "Bitmap",
    "BooleanRangeQuery",
    "CiphertextError",
    "Envelope",
    "EpochMismatchError",
    "Fabric",
    "GridSpec",
    "GroupElementError",
    "LinkageReport",
    "MODE_CORRECTED",
    "MODE_LITERAL",
    "ParameterError",
    "PatternMatrix",
    "PrefixElement",
    "ProtocolError",
    "RandomSource",
    "RangeVeilError",
    "ResultSet",
    "SealError",
    "ShareIndexError",
    "SimConfig",
    "Simulation",
    "SlotOverflowError",
    "SpatialRange",
    "SpatioTextualObject",
    "StorageError",
    "Transcript",
    "adversary_linkage",
    "combine_shares",
    "hilbert_decode",
    "hilbert_encode",
    "min_cover_oracle",
    "min_prefix_cover",
    "pattern_matrices",
    "plaintext_query_oracle",
    "prefix_family",
    "prefix_universe",
    "split_shares",
    "__version__",
]

"""Interactive video-corpus moment retrieval engine."""

from .errors import (
    CapabilityError,
    GrabError,
    IndexFormatError,
    IngestError,
    InputError,
    LoadError,
    NotFoundError,
    ProviderError,
)
from .hashing import (
    DedupConfig,
    PerceptualHash,
    compute_phash,
    hamming_distance,
    is_near_duplicate,
)
from .index import ExactIndex, GraphIndex, SearchHit, build_index, load_index, save_index
from .ingest import (
    Catalog,
    KeyframeRecord,
    ShotBoundary,
    deduplicate_shot,
    ingest_video,
    select_keyframe_indices,
)
from .rerank import RerankedHit, RerankParams, expand_query, gem_pool, rerank
from .store import CorpusManifest, EmbeddingStore, load_corpus
from .temporal import (
    MomentResult,
    PivotRef,
    TemporalSearchParams,
    adaptive_search,
    similarity,
    split_query,
    stability,
    temporal_search,
)

__version__ = "0.1.0"

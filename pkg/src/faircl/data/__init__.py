from .augment import AugmentConfig, augment, augment_batch, augment_features
from .manifest import ManifestError, load_manifest, write_manifest
from .samples import (
    Arrays,
    Episode,
    Sample,
    concat,
    domain_counts,
    split_episodes,
    stack,
    stratified_split,
)
from .synth import SynthConfig, domain_sizes, synth_generate

__all__ = [
    "Arrays", "AugmentConfig", "Episode", "ManifestError", "Sample", "SynthConfig", "augment", "augment_batch",
    "augment_features", "concat", "domain_counts", "domain_sizes", "load_manifest", "split_episodes", "stack",
    "stratified_split", "synth_generate", "write_manifest",
]

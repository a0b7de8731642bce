"""Temporal action proposal toolkit: python bindings for the C++ core."""

from ._tapkit import (
    ArAnCurve,
    GroundTruthSet,
    Proposal,
    Stage,
    TapError,
    TemporalSegment,
    average_pool,
    box_iou,
    compact_bilinear_pool,
    consensus_rerank,
    count_sketch,
    decode_deltas,
    encode_deltas,
    evaluate_proposals,
    fuse_actionness,
    lexical_similarity,
    load_ground_truth,
    load_proposals,
    nms,
    tiou,
    watershed_tag,
)

__all__ = [
    "ArAnCurve",
    "GroundTruthSet",
    "Proposal",
    "Stage",
    "TapError",
    "TemporalSegment",
    "average_pool",
    "box_iou",
    "compact_bilinear_pool",
    "consensus_rerank",
    "count_sketch",
    "decode_deltas",
    "encode_deltas",
    "evaluate_proposals",
    "fuse_actionness",
    "lexical_similarity",
    "load_ground_truth",
    "load_proposals",
    "nms",
    "tiou",
    "watershed_tag",
]

#include "vl/common/error.h"

namespace vl {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::behind_camera: return "BehindCamera";
    case ErrorCode::non_positive_depth: return "NonPositiveDepth";
    case ErrorCode::dimension_mismatch: return "DimensionMismatch";
    case ErrorCode::empty_database: return "EmptyDatabase";
    case ErrorCode::io: return "Io";
    case ErrorCode::format_version_mismatch: return "FormatVersionMismatch";
    case ErrorCode::checksum_mismatch: return "ChecksumMismatch";
    case ErrorCode::unknown_keyframe: return "UnknownKeyframe";
    case ErrorCode::image_too_small: return "ImageTooSmall";
    case ErrorCode::empty_set: return "EmptySet";
    case ErrorCode::too_few_samples: return "TooFewSamples";
    case ErrorCode::no_sources: return "NoSources";
    case ErrorCode::no_overlap: return "NoOverlap";
    case ErrorCode::empty_mask: return "EmptyMask";
    case ErrorCode::missing_student: return "MissingStudent";
    case ErrorCode::shape_mismatch: return "ShapeMismatch";
    case ErrorCode::empty_corpus: return "EmptyCorpus";
    case ErrorCode::empty_feature_set: return "EmptyFeatureSet";
    case ErrorCode::degenerate_configuration: return "DegenerateConfiguration";
    case ErrorCode::too_few_correspondences: return "TooFewCorrespondences";
    case ErrorCode::no_model_found: return "NoModelFound";
    case ErrorCode::invalid_params: return "InvalidParams";
    case ErrorCode::id_mismatch: return "IdMismatch";
    case ErrorCode::usage: return "Usage";
    case ErrorCode::config: return "Config";
  }
  return "Unknown";
}

}  // namespace vl

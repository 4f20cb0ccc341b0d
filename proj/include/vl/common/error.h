#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace vl {

enum class ErrorCode {
  // geometry
  behind_camera,
  non_positive_depth,
  // scene_db
  dimension_mismatch,
  empty_database,
  io,
  format_version_mismatch,
  checksum_mismatch,
  unknown_keyframe,
  // features
  image_too_small,
  empty_set,
  too_few_samples,
  // virtual_view
  no_sources,
  no_overlap,
  empty_mask,
  missing_student,
  // distill
  shape_mismatch,
  // retrieval
  empty_corpus,
  // matching
  empty_feature_set,
  // pose_solver
  degenerate_configuration,
  too_few_correspondences,
  no_model_found,
  // synth_eval
  invalid_params,
  id_mismatch,
  // cli
  usage,
  config,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace vl

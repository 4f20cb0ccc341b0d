#pragma once

#include <cstddef>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "vl/cli/config.h"
#include "vl/synth_eval/evaluation.h"

namespace vl::cli {

/// One row of the ablation: accuracy plus how many queries reached the
/// solver (at least four pooled correspondences).
struct AblationRow {
  std::string name;
  AccuracyTriple accuracy;
  std::size_t solvable = 0;
  std::size_t queries = 0;
};

struct Ablation {
  std::vector<AblationRow> rows;
  std::size_t grid_size = 0;
  std::size_t virtual_views = 0;
};

/// Generates the synthetic scene from config.seed and runs baseline, +VA,
/// +VA+PR and VA w/o local. Distilled mode loads config.distill.student or
/// trains a student on the scene's keyframes.
Ablation run_ablation(const RunConfig& config);

/// Report text (table plus the solvable-query line) and CSV.
Report ablation_report(const Ablation& a);

/// args[0] is the program name. Returns 0 on success, 1 on usage or config
/// errors, 2 on data errors; diagnostics go to `err`.
int run(std::span<const std::string> args, std::ostream& out, std::ostream& err);

}  // namespace vl::cli

#include <sstream>

#include <json.hpp>

#include "vl/common/binary_io.h"
#include "vl/common/error.h"
#include "vl/pipeline/pipeline.h"

namespace vl {

namespace {

nlohmann::ordered_json estimate_json(const PoseEstimate& e) {
  nlohmann::ordered_json j;
  j["status"] = to_string(e.status);
  j["stage"] = to_string(e.stage);
  if (!e.ok()) j["reason"] = e.failure;
  j["pose"] = to_pose_string(e.pose);
  j["num_inliers"] = e.inliers.size();
  j["num_correspondences"] = e.num_correspondences;
  j["mean_error_px"] = e.mean_error;
  return j;
}

std::vector<std::string> data_lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

}  // namespace

std::string result_json(const LocalizationResult& r, bool include_timings) {
  const PoseEstimate& final = r.final_estimate();
  nlohmann::ordered_json j;
  j["query_id"] = r.query_id;
  j["status"] = to_string(final.status);
  j["stage"] = to_string(final.stage);
  j["pose"] = to_pose_string(final.pose);
  j["num_inliers"] = final.inliers.size();
  j["pooled_correspondences"] = r.pooled;
  j["coarse"] = estimate_json(r.coarse);
  if (r.refined) j["refined"] = estimate_json(*r.refined);
  auto retrieved = nlohmann::ordered_json::array();
  for (const RetrievedEntry& e : r.retrieved) {
    retrieved.push_back({{"id", e.id}, {"kind", to_string(e.kind)}, {"ref", e.ref}});
  }
  j["retrieved"] = std::move(retrieved);
  if (include_timings) {
    j["timings_ms"] = {{"extract", r.timings.extract_ms},
                       {"coarse", r.timings.coarse_ms},
                       {"refine", r.timings.refine_ms}};
  }
  return j.dump();
}

void write_results(const std::filesystem::path& path, std::span<const LocalizationResult> results,
                   bool include_timings) {
  std::string text;
  for (const LocalizationResult& r : results) text += result_json(r, include_timings) + "\n";
  io::write_text(path, text);
}

std::vector<ResultRecord> to_records(std::span<const LocalizationResult> results) {
  std::vector<ResultRecord> out;
  for (const LocalizationResult& r : results) {
    const PoseEstimate& e = r.final_estimate();
    out.push_back({r.query_id, e.ok(), e.pose});
  }
  return out;
}

std::vector<ResultRecord> read_results(const std::filesystem::path& path) {
  std::vector<ResultRecord> out;
  std::size_t line_no = 0;
  for (const std::string& line : data_lines(io::read_text(path))) {
    ++line_no;
    try {
      const auto j = nlohmann::json::parse(line);
      ResultRecord r;
      r.query_id = j.at("query_id").get<std::uint32_t>();
      r.ok = j.at("status").get<std::string>() == "ok";
      r.pose = parse_pose_string(j.at("pose").get<std::string>());
      out.push_back(r);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::io, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void write_ground_truth(const std::filesystem::path& path, std::span<const GroundTruth> gts) {
  std::string text = "query_id,pose\n";
  for (const GroundTruth& g : gts) text += std::to_string(g.query_id) + "," + to_pose_string(g.pose) + "\n";
  io::write_text(path, text);
}

std::vector<GroundTruth> read_ground_truth(const std::filesystem::path& path) {
  const std::vector<std::string> lines = data_lines(io::read_text(path));
  if (lines.empty() || lines.front() != "query_id,pose") {
    throw Error(ErrorCode::io, path.string() + ": expected header 'query_id,pose'");
  }
  std::vector<GroundTruth> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::string& line = lines[i];
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw Error(ErrorCode::io, path.string() + ": malformed line " + std::to_string(i + 1));
    GroundTruth g;
    try {
      std::size_t used = 0;
      const unsigned long id = std::stoul(line.substr(0, comma), &used);
      if (used != comma || id > 0xFFFFFFFFul) throw std::invalid_argument("id");
      g.query_id = static_cast<std::uint32_t>(id);
    } catch (const std::logic_error&) {
      throw Error(ErrorCode::io, path.string() + ": bad query id on line " + std::to_string(i + 1));
    }
    g.pose = parse_pose_string(std::string_view(line).substr(comma + 1));
    out.push_back(g);
  }
  return out;
}

}  // namespace vl

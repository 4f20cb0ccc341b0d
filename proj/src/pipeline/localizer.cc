#include <chrono>
#include <set>

#include "vl/common/error.h"
#include "vl/common/parallel.h"
#include "vl/common/rng.h"
#include "vl/pipeline/pipeline.h"

namespace vl {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

}  // namespace

std::vector<Correspondence2D3D> unique_correspondences(std::span<const Correspondence2D3D> pooled) {
  std::set<std::pair<std::uint32_t, std::uint64_t>> seen;
  std::vector<Correspondence2D3D> out;
  for (const Correspondence2D3D& c : pooled) {
    if (seen.emplace(c.query_index, c.point).second) out.push_back(c);
  }
  return out;
}

QueryFeatures extract_query(const ColorImage& image, const FeatureParams& params) {
  QueryFeatures q;
  q.local = extract_local(image, params.detector);
  // Same dense-grid pooling as the keyframes so the two are comparable.
  q.global = global_descriptor(describe_grid(image), params.gem_p);
  return q;
}

Localizer::Localizer(const SceneDatabase& db, const RetrievalIndex& index, const VirtualViewStore* store,
                     const Intrinsics& query_intrinsics, LocalizeParams params, const StudentParams* student)
    : db_(db), index_(index), store_(store), k_(query_intrinsics), params_(std::move(params)), student_(student) {}

std::shared_ptr<const VirtualFeatures> Localizer::virtual_local(std::uint32_t ref) const {
  {
    std::lock_guard lock(cache_mutex_);
    const auto it = cache_.find(ref);
    if (it != cache_.end()) return it->second;
  }
  // Rendering is deterministic, so a racing duplicate produces the same value.
  auto f = std::make_shared<const VirtualFeatures>(store_->local_features(db_, ref, params_.local_mode, student_));
  std::lock_guard lock(cache_mutex_);
  return cache_.emplace(ref, std::move(f)).first->second;
}

CoarseResult Localizer::localize_coarse(std::uint32_t query_id, const QueryFeatures& query) const {
  CoarseResult out;
  for (const Ranked& r : index_.query_topk(query.global.values, params_.top_k)) {
    const IndexEntry& e = index_.entry(r.id);
    out.retrieved.push_back({r.id, e.kind, e.ref, r.distance});
  }
  if (query.local.empty()) {
    out.estimate = PoseEstimate::failed_with("NoMatches");
    return out;
  }

  std::vector<std::vector<Correspondence2D3D>> per_entry(out.retrieved.size());
  parallel_for(out.retrieved.size(), [&](std::size_t i) {
    const RetrievedEntry& e = out.retrieved[i];
    if (e.kind == EntryKind::real) {
      const Keyframe& kf = db_.keyframe(e.ref);
      if (!kf.local_features || kf.local_features->empty()) return;
      const MatchSet m = match_descriptors(query.local, *kf.local_features, params_.ratio, e.id);
      per_entry[i] = lift_correspondences(m, query.local, kf);
    } else {
      if (!params_.virtual_local || store_ == nullptr) return;
      const auto vf = virtual_local(e.ref);
      if (vf->local.empty()) return;
      const MatchSet m = match_descriptors(query.local, vf->local, params_.ratio, e.id);
      per_entry[i] = lift_correspondences(m, query.local, *vf);
    }
  });
  std::vector<Correspondence2D3D> all;
  for (auto& c : per_entry) all.insert(all.end(), c.begin(), c.end());
  out.pooled = unique_correspondences(all);

  if (out.pooled.size() < 4) {
    out.estimate = PoseEstimate::failed_with("NoMatches", out.pooled.size());
    return out;
  }
  RansacParams rp = params_.ransac;
  rp.seed = mix64(params_.seed ^ query_id);
  try {
    out.estimate = ransac_pnp(out.pooled, k_, rp);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::no_model_found) throw;
    out.estimate = PoseEstimate::failed_with("NoModelFound", out.pooled.size());
  }
  return out;
}

PoseEstimate Localizer::refine_with_virtual_view(std::uint32_t query_id, const QueryFeatures& query,
                                                 const PoseEstimate& coarse) const {
  if (!coarse.ok() || query.local.empty()) return coarse;
  PoseEstimate current = coarse;
  for (int iter = 0; iter < params_.refine_iters; ++iter) {
    const std::vector<KeyframeId> sources = view_sources(db_, current.pose, params_.view);
    const ProjectedView v = render_projection(db_, current.pose, k_, sources, params_.view.render);
    if (v.keypoints.size() < 4 || v.feature_grid.valid_count() == 0) break;
    VirtualFeatures f;
    try {
      f = render_features(v, params_.local_mode, student_, params_.view.gem_p, {.global = false, .local = true});
    } catch (const Error&) {
      break;
    }
    if (f.local.size() < 4) break;
    const MatchSet m = match_descriptors(query.local, f.local, params_.ratio);
    const std::vector<Correspondence2D3D> corr = lift_correspondences(m, query.local, f);
    if (corr.size() < 4) break;
    RansacParams rp = params_.ransac;
    rp.seed = mix64(params_.seed ^ query_id ^ (static_cast<std::uint64_t>(iter + 1) << 32));
    PoseEstimate next;
    try {
      next = ransac_pnp(corr, k_, rp);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::no_model_found) throw;
      break;
    }
    if (next.inliers.size() < current.inliers.size()) break;
    next.stage = Stage::refined;
    current = std::move(next);
  }
  return current;
}

LocalizationResult Localizer::localize(std::uint32_t query_id, const ColorImage& image) const {
  LocalizationResult r;
  r.query_id = query_id;
  auto t0 = Clock::now();
  QueryFeatures q;
  try {
    q = extract_query(image, params_.features);
  } catch (const Error& e) {
    r.coarse = PoseEstimate::failed_with(std::string(to_string(e.code())));
    return r;
  }
  r.timings.extract_ms = elapsed_ms(t0);

  t0 = Clock::now();
  CoarseResult c = localize_coarse(query_id, q);
  r.timings.coarse_ms = elapsed_ms(t0);
  r.coarse = std::move(c.estimate);
  r.retrieved = std::move(c.retrieved);
  r.pooled = c.pooled.size();

  if (params_.refine && r.coarse.ok()) {
    t0 = Clock::now();
    r.refined = refine_with_virtual_view(query_id, q, r.coarse);
    r.timings.refine_ms = elapsed_ms(t0);
  }
  return r;
}

std::vector<LocalizationResult> Localizer::localize_batch(std::span<const QueryInput> queries) const {
  std::vector<LocalizationResult> out(queries.size());
  parallel_for(queries.size(), [&](std::size_t i) { out[i] = localize(queries[i].id, queries[i].image); });
  return out;
}

}  // namespace vl

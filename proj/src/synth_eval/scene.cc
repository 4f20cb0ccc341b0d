#include "vl/synth_eval/scene.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "vl/common/error.h"
#include "vl/common/parallel.h"
#include "vl/common/rng.h"

namespace vl::synth {

namespace {

constexpr double kHitEpsilon = 1e-12;

double lattice(std::uint64_t seed, std::int64_t i, std::int64_t j) {
  const std::uint64_t h =
      mix64(seed ^ mix64(static_cast<std::uint64_t>(i) * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(j)));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double value_noise(std::uint64_t seed, double x, double y) {
  const double fx = std::floor(x), fy = std::floor(y);
  const auto i = static_cast<std::int64_t>(fx), j = static_cast<std::int64_t>(fy);
  double u = x - fx, v = y - fy;
  u = u * u * (3.0 - 2.0 * u);
  v = v * v * (3.0 - 2.0 * v);
  const double a = lattice(seed, i, j), b = lattice(seed, i + 1, j);
  const double c = lattice(seed, i, j + 1), d = lattice(seed, i + 1, j + 1);
  return (a * (1 - u) + b * u) * (1 - v) + (c * (1 - u) + d * u) * v;
}

double texture_noise(std::uint64_t seed, double s, double t) {
  constexpr std::array<double, 3> kFreq{1.0, 3.0, 7.0};
  constexpr std::array<double, 3> kAmp{0.5, 0.3, 0.2};
  double n = 0;
  for (std::size_t o = 0; o < kFreq.size(); ++o) n += kAmp[o] * value_noise(seed + o * 7919, s * kFreq[o], t * kFreq[o]);
  return n;
}

Eigen::Vector3d axis_unit(int a) {
  Eigen::Vector3d e = Eigen::Vector3d::Zero();
  e[a] = 1.0;
  return e;
}

// Face f of an axis-aligned block, order (-x, +x, -y, +y, -z, +z). `inward`
// flips the normal for room faces, which are seen from inside.
Surface block_face(const Eigen::Vector3d& lo, const Eigen::Vector3d& hi, int f, bool inward) {
  const int a = f / 2;
  const bool high = (f % 2) == 1;
  const int b = (a + 1) % 3, c = (a + 2) % 3;
  Surface s;
  s.origin = lo;
  s.origin[a] = high ? hi[a] : lo[a];
  s.u = axis_unit(b);
  s.v = axis_unit(c);
  s.s_extent = hi[b] - lo[b];
  s.t_extent = hi[c] - lo[c];
  const double sign = (high ? 1.0 : -1.0) * (inward ? -1.0 : 1.0);
  s.normal = sign * axis_unit(a);
  return s;
}

Eigen::Vector3d random_color(SplitMix64& rng, double lo, double hi) {
  Eigen::Vector3d c;
  for (int i = 0; i < 3; ++i) c[i] = rng.uniform(lo, hi);
  return c;
}

void paint(Surface& s, SplitMix64& rng, double density) {
  const double area = s.s_extent * s.t_extent;
  const int count = static_cast<int>(std::lround(area * density));
  for (int r = 0; r < count; ++r) {
    const double w = rng.uniform(0.08, std::min(0.45, s.s_extent));
    const double h = rng.uniform(0.08, std::min(0.45, s.t_extent));
    PaintedRect pr;
    pr.s0 = rng.uniform(0.0, s.s_extent - w);
    pr.t0 = rng.uniform(0.0, s.t_extent - h);
    pr.s1 = pr.s0 + w;
    pr.t1 = pr.t0 + h;
    pr.color = random_color(rng, 0.05, 1.0);
    s.rects.push_back(pr);
  }
}

const Eigen::Vector3d& light_direction() {
  static const Eigen::Vector3d l = Eigen::Vector3d(0.35, 0.55, 0.76).normalized();
  return l;
}

}  // namespace

std::optional<RayHit> SceneGeometry::intersect(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir) const {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  double best = kInf;
  int best_surface = -1;

  for (int a = 0; a < 3; ++a) {
    if (dir[a] > 0) {
      const double t = (room_hi[a] - origin[a]) / dir[a];
      if (t > kHitEpsilon && t < best) best = t, best_surface = 2 * a + 1;
    } else if (dir[a] < 0) {
      const double t = (room_lo[a] - origin[a]) / dir[a];
      if (t > kHitEpsilon && t < best) best = t, best_surface = 2 * a;
    }
  }

  for (std::size_t bi = 0; bi < boxes.size(); ++bi) {
    const Box& box = boxes[bi];
    double t_near = -kInf, t_far = kInf;
    int near_face = -1;
    bool miss = false;
    for (int a = 0; a < 3 && !miss; ++a) {
      if (dir[a] == 0.0) {
        if (origin[a] < box.lo[a] || origin[a] > box.hi[a]) miss = true;
        continue;
      }
      const double t1 = (box.lo[a] - origin[a]) / dir[a];
      const double t2 = (box.hi[a] - origin[a]) / dir[a];
      const double enter = std::min(t1, t2), exit = std::max(t1, t2);
      if (enter > t_near) {
        t_near = enter;
        near_face = dir[a] > 0 ? 2 * a : 2 * a + 1;
      }
      t_far = std::min(t_far, exit);
    }
    if (miss || near_face < 0 || t_near > t_far || t_near <= kHitEpsilon) continue;
    if (t_near < best) {
      best = t_near;
      best_surface = 6 + 6 * static_cast<int>(bi) + near_face;
    }
  }

  if (best_surface < 0) return std::nullopt;
  RayHit hit;
  hit.t = best;
  hit.surface = best_surface;
  hit.point = origin + best * dir;
  return hit;
}

Eigen::Vector3d SceneGeometry::albedo(const RayHit& hit) const {
  const Surface& s = surfaces.at(static_cast<std::size_t>(hit.surface));
  const Eigen::Vector3d rel = hit.point - s.origin;
  const double su = rel.dot(s.u), tv = rel.dot(s.v);
  const double n = texture_noise(s.texture_seed, su, tv);
  for (auto it = s.rects.rbegin(); it != s.rects.rend(); ++it) {
    if (su >= it->s0 && su < it->s1 && tv >= it->t0 && tv < it->t1) return it->color * (0.85 + 0.3 * n);
  }
  return (s.base_color * (0.35 + 1.1 * n)).cwiseMin(1.0);
}

Eigen::Vector3d SceneGeometry::shade(const RayHit& hit) const {
  const Surface& s = surfaces.at(static_cast<std::size_t>(hit.surface));
  const double lambert = std::max(0.0, s.normal.dot(light_direction()));
  return albedo(hit) * (0.45 + 0.55 * lambert);
}

bool SceneGeometry::is_free(const Eigen::Vector3d& p, double margin) const {
  for (int a = 0; a < 3; ++a) {
    if (p[a] < room_lo[a] + margin || p[a] > room_hi[a] - margin) return false;
  }
  for (const Box& b : boxes) {
    bool inside = true;
    for (int a = 0; a < 3; ++a) inside = inside && p[a] > b.lo[a] - margin && p[a] < b.hi[a] + margin;
    if (inside) return false;
  }
  return true;
}

SceneGeometry make_geometry(const Eigen::Vector3d& room_size, const std::vector<Box>& boxes, std::uint64_t seed,
                            double rect_density) {
  SceneGeometry g;
  g.room_lo = Eigen::Vector3d::Zero();
  g.room_hi = room_size;
  g.boxes = boxes;
  SplitMix64 rng(mix64(seed ^ 0x7465787475726573ULL));
  auto add = [&](Surface s) {
    s.base_color = random_color(rng, 0.3, 0.8);
    s.texture_seed = rng.next();
    paint(s, rng, rect_density);
    g.surfaces.push_back(std::move(s));
  };
  for (int f = 0; f < 6; ++f) add(block_face(g.room_lo, g.room_hi, f, true));
  for (const Box& b : boxes) {
    for (int f = 0; f < 6; ++f) add(block_face(b.lo, b.hi, f, false));
  }
  return g;
}

Eigen::Vector3d camera_ray(const Intrinsics& k, const Pose& pose, const Eigen::Vector2d& pixel) {
  const Eigen::Vector3d dc((pixel.x() - k.cx) / k.fx, (pixel.y() - k.cy) / k.fy, 1.0);
  return pose.rotation.transpose() * dc;
}

std::optional<double> exact_depth(const SceneGeometry& g, const Intrinsics& k, const Pose& pose,
                                  const Eigen::Vector2d& pixel) {
  const auto hit = g.intersect(pose.camera_center(), camera_ray(k, pose, pixel));
  if (!hit) return std::nullopt;
  return hit->t;
}

RenderedView render_view(const SceneGeometry& g, const Intrinsics& k, const Pose& pose) {
  RenderedView out{ColorImage(k.width, k.height), DepthMap(k.width, k.height, 0.0f)};
  const Eigen::Vector3d c = pose.camera_center();
  static constexpr std::array<std::array<double, 2>, 4> kSub{{{-0.25, -0.25}, {0.25, -0.25}, {-0.25, 0.25}, {0.25, 0.25}}};
  parallel_for(static_cast<std::size_t>(k.height), [&](std::size_t row) {
    const int y = static_cast<int>(row);
    for (int x = 0; x < k.width; ++x) {
      Eigen::Vector3d color = Eigen::Vector3d::Zero();
      for (const auto& o : kSub) {
        const auto hit = g.intersect(c, camera_ray(k, pose, {x + o[0], y + o[1]}));
        if (hit) color += g.shade(*hit);
      }
      color /= 4.0;
      auto to_byte = [](double v) {
        return static_cast<std::uint8_t>(std::clamp<long>(std::lround(255.0 * v), 0, 255));
      };
      out.image(x, y) = Rgb{to_byte(color[0]), to_byte(color[1]), to_byte(color[2])};
      const auto hit = g.intersect(c, camera_ray(k, pose, {static_cast<double>(x), static_cast<double>(y)}));
      if (hit) out.depth(x, y) = static_cast<float>(hit->t);
    }
  });
  return out;
}

double frustum_overlap(const SceneGeometry& g, const Intrinsics& k, const Pose& query, const Pose& other,
                       int samples) {
  if (samples <= 0) throw Error(ErrorCode::invalid_params, "overlap samples must be positive");
  const int cols = std::max(1, static_cast<int>(std::lround(std::sqrt(double(samples) * k.width / k.height))));
  const int rows = (samples + cols - 1) / cols;
  const Eigen::Vector3d qc = query.camera_center();
  const Eigen::Vector3d oc = other.camera_center();
  int valid = 0, visible = 0;
  for (int i = 0; i < samples; ++i) {
    const double px = (i % cols + 0.5) * k.width / cols - 0.5;
    const double py = (i / cols + 0.5) * k.height / rows - 0.5;
    const auto hit = g.intersect(qc, camera_ray(k, query, {px, py}));
    if (!hit) continue;
    ++valid;
    const Eigen::Vector3d xc = other.to_camera(hit->point);
    if (xc.z() <= 1e-9) continue;
    const double u = k.fx * xc.x() / xc.z() + k.cx;
    const double v = k.fy * xc.y() / xc.z() + k.cy;
    if (u < -0.5 || v < -0.5 || u >= k.width - 0.5 || v >= k.height - 0.5) continue;
    const auto back = g.intersect(oc, camera_ray(k, other, {u, v}));
    if (back && std::abs(back->t - xc.z()) <= 1e-6 + 1e-9 * xc.z()) ++visible;
  }
  return valid == 0 ? 0.0 : static_cast<double>(visible) / valid;
}

Pose camera_pose(const Eigen::Vector3d& center, double yaw, double pitch) {
  const Eigen::Vector3d forward(std::cos(yaw) * std::cos(pitch), std::sin(yaw) * std::cos(pitch), std::sin(pitch));
  return Pose::look_at(center, forward, -Eigen::Vector3d::UnitZ());
}

namespace {

struct Loop {
  std::array<Eigen::Vector2d, 4> corners;
  double length = 0;

  // Position and unit tangent at arc length s.
  std::pair<Eigen::Vector2d, Eigen::Vector2d> at(double s) const {
    s = std::fmod(s, length);
    if (s < 0) s += length;
    for (int i = 0; i < 4; ++i) {
      const Eigen::Vector2d a = corners[i], b = corners[(i + 1) % 4];
      const double seg = (b - a).norm();
      if (s <= seg || i == 3) {
        const Eigen::Vector2d dir = (b - a) / seg;
        return {a + std::min(s, seg) * dir, dir};
      }
      s -= seg;
    }
    return {corners[0], Eigen::Vector2d::UnitX()};
  }
};

Loop make_loop(const Eigen::Vector3d& room) {
  const double mx = 0.25 * room.x(), my = 0.25 * room.y();
  Loop l;
  l.corners = {Eigen::Vector2d(mx, my), Eigen::Vector2d(room.x() - mx, my), Eigen::Vector2d(room.x() - mx, room.y() - my),
               Eigen::Vector2d(mx, room.y() - my)};
  l.length = 2.0 * (room.x() - 2 * mx) + 2.0 * (room.y() - 2 * my);
  return l;
}

void validate(const SceneParams& p) {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::invalid_params, what); };
  if (p.room_size.x() < 4.0 || p.room_size.y() < 4.0 || p.room_size.z() < 2.5) fail("room must be at least 4x4x2.5 m");
  if (p.num_db < 1) fail("num_db must be >= 1");
  if (p.num_queries < 0) fail("num_queries must be >= 0");
  if (p.num_boxes < 0) fail("num_boxes must be >= 0");
  if (!p.intrinsics.valid()) fail("invalid intrinsics");
  if (!(p.min_overlap >= 0.0 && p.min_overlap < p.max_overlap && p.max_overlap <= 1.0)) fail("invalid overlap band");
  if (p.overlap_samples < 1) fail("overlap_samples must be >= 1");
  if (p.camera_height < 0.3 || p.camera_height > p.room_size.z() - 0.3) fail("camera height outside room");
  if (p.rect_density < 0) fail("rect_density must be >= 0");
}

std::vector<Box> place_boxes(const SceneParams& p, const Loop& loop, SplitMix64& rng) {
  std::vector<Box> boxes;
  const Eigen::Vector3d& room = p.room_size;
  for (int attempt = 0; attempt < 2000 && static_cast<int>(boxes.size()) < p.num_boxes; ++attempt) {
    const double sx = rng.uniform(0.5, 1.2), sy = rng.uniform(0.5, 1.2), sz = rng.uniform(0.4, 1.6);
    Box b;
    b.lo = Eigen::Vector3d(rng.uniform(0.1, room.x() - sx - 0.1), rng.uniform(0.1, room.y() - sy - 0.1), 0.0);
    b.hi = b.lo + Eigen::Vector3d(sx, sy, sz);
    bool ok = true;
    for (double s = 0; s < loop.length && ok; s += 0.1) {
      const Eigen::Vector2d q = loop.at(s).first;
      ok = !(q.x() > b.lo.x() - 0.7 && q.x() < b.hi.x() + 0.7 && q.y() > b.lo.y() - 0.7 && q.y() < b.hi.y() + 0.7);
    }
    for (const Box& o : boxes) {
      if (!ok) break;
      ok = b.hi.x() + 0.2 < o.lo.x() || o.hi.x() + 0.2 < b.lo.x() || b.hi.y() + 0.2 < o.lo.y() ||
           o.hi.y() + 0.2 < b.lo.y();
    }
    if (ok) boxes.push_back(b);
  }
  return boxes;
}

constexpr double kDeg = std::numbers::pi / 180.0;

}  // namespace

SyntheticScene generate_scene(std::uint64_t seed, const SceneParams& params) {
  validate(params);
  SyntheticScene scene;
  scene.seed = seed;
  scene.params = params;
  const Intrinsics& k = params.intrinsics;
  const Loop loop = make_loop(params.room_size);

  SplitMix64 layout_rng(mix64(seed ^ 0x6C61796F7574ULL));
  scene.geometry = make_geometry(params.room_size, place_boxes(params, loop, layout_rng), seed, params.rect_density);
  const SceneGeometry& g = scene.geometry;

  SplitMix64 db_rng(mix64(seed ^ 0x6461746162617365ULL));
  const double start = db_rng.uniform(0.0, loop.length);
  std::vector<Pose> db_poses;
  for (int i = 0; i < params.num_db; ++i) {
    const auto [pos, tangent] = loop.at(start + (i + 0.5) * loop.length / params.num_db);
    const double yaw = std::atan2(tangent.y(), tangent.x()) +
                       db_rng.uniform(-params.db_yaw_jitter_deg, params.db_yaw_jitter_deg) * kDeg;
    const double pitch = db_rng.uniform(-3.0, 3.0) * kDeg;
    const double h = params.camera_height + db_rng.uniform(-0.05, 0.05);
    db_poses.push_back(camera_pose({pos.x(), pos.y(), h}, yaw, pitch));
  }

  std::vector<RenderedView> db_views(db_poses.size());
  for (std::size_t i = 0; i < db_poses.size(); ++i) db_views[i] = render_view(g, k, db_poses[i]);
  for (std::size_t i = 0; i < db_poses.size(); ++i) {
    scene.db.ingest_keyframe(std::move(db_views[i].image), std::move(db_views[i].depth), db_poses[i], k);
  }
  scene.db.name = "synthetic";
  scene.db.creation_params["seed"] = std::to_string(seed);
  scene.db.creation_params["regime"] = params.regime == OverlapRegime::low ? "low" : "high";

  SplitMix64 q_rng(mix64(seed ^ 0x71756572696573ULL));
  const long max_attempts = 20000L * std::max(1, params.num_queries);
  long attempts = 0;
  while (static_cast<int>(scene.queries.size()) < params.num_queries) {
    if (++attempts > max_attempts) throw Error(ErrorCode::invalid_params, "could not place queries in overlap band");
    Eigen::Vector3d c;
    double yaw, pitch;
    if (params.regime == OverlapRegime::low) {
      c = Eigen::Vector3d(q_rng.uniform(0.6, params.room_size.x() - 0.6), q_rng.uniform(0.6, params.room_size.y() - 0.6),
                          params.camera_height + q_rng.uniform(-0.15, 0.15));
      yaw = q_rng.uniform(0.0, 2.0 * std::numbers::pi);
      pitch = q_rng.uniform(-4.0, 4.0) * kDeg;
    } else {
      const Pose& seed_pose = db_poses[q_rng.index(db_poses.size())];
      const Eigen::Vector3d f = seed_pose.rotation.row(2).transpose();
      c = seed_pose.camera_center() +
          Eigen::Vector3d(q_rng.uniform(-0.3, 0.3), q_rng.uniform(-0.3, 0.3), q_rng.uniform(-0.05, 0.05));
      yaw = std::atan2(f.y(), f.x()) + q_rng.uniform(-10.0, 10.0) * kDeg;
      pitch = std::asin(std::clamp(f.z(), -1.0, 1.0)) + q_rng.uniform(-2.0, 2.0) * kDeg;
    }
    if (!g.is_free(c, 0.4)) continue;
    const Pose pose = camera_pose(c, yaw, pitch);

    double best = -1;
    KeyframeId best_id = 0;
    bool reject = false;
    for (std::size_t i = 0; i < db_poses.size(); ++i) {
      const double o = frustum_overlap(g, k, pose, db_poses[i], params.overlap_samples);
      if (o > best) best = o, best_id = static_cast<KeyframeId>(i);
      if (params.regime == OverlapRegime::low && o >= params.max_overlap) {
        reject = true;
        break;
      }
    }
    if (reject || best <= 0.0) continue;
    if (params.regime == OverlapRegime::low && best < params.min_overlap) continue;

    QueryRecord q;
    q.id = static_cast<std::uint32_t>(scene.queries.size());
    RenderedView view = render_view(g, k, pose);
    q.image = std::move(view.image);
    q.depth = std::move(view.depth);
    q.pose = pose;
    q.best_overlap = best;
    q.best_keyframe = best_id;
    scene.queries.push_back(std::move(q));
  }
  return scene;
}

}  // namespace vl::synth

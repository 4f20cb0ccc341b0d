#include "vl/cli/config.h"

#include <algorithm>
#include <charconv>
#include <functional>

#include "vl/cli/toml_lite.h"
#include "vl/common/binary_io.h"
#include "vl/common/error.h"

namespace vl {

FeatureMode parse_feature_mode(std::string_view s) {
  if (s == "deterministic") return FeatureMode::deterministic;
  if (s == "distilled") return FeatureMode::distilled;
  throw Error(ErrorCode::config, "feature mode must be 'deterministic' or 'distilled', got '" + std::string(s) + "'");
}

std::string_view to_string(FeatureMode mode) {
  return mode == FeatureMode::deterministic ? "deterministic" : "distilled";
}

namespace {

[[noreturn]] void type_error(const std::string& key, const toml::Value& v, const char* expected) {
  throw Error(ErrorCode::config, "line " + std::to_string(v.line) + ": '" + key + "' expects " + expected);
}

double as_double(const std::string& key, const toml::Value& v) {
  if (const auto* d = std::get_if<double>(&v.data)) return *d;
  if (const auto* i = std::get_if<std::int64_t>(&v.data)) return static_cast<double>(*i);
  type_error(key, v, "a number");
}

std::int64_t as_int(const std::string& key, const toml::Value& v, std::int64_t lo = 0) {
  const auto* i = std::get_if<std::int64_t>(&v.data);
  if (i == nullptr) type_error(key, v, "an integer");
  if (*i < lo) throw Error(ErrorCode::config, "'" + key + "' must be >= " + std::to_string(lo));
  return *i;
}

bool as_bool(const std::string& key, const toml::Value& v) {
  const auto* b = std::get_if<bool>(&v.data);
  if (b == nullptr) type_error(key, v, "true or false");
  return *b;
}

std::string as_string(const std::string& key, const toml::Value& v) {
  const auto* s = std::get_if<std::string>(&v.data);
  if (s == nullptr) type_error(key, v, "a string");
  return *s;
}

const toml::Array& as_array(const std::string& key, const toml::Value& v) {
  const auto* a = std::get_if<toml::Array>(&v.data);
  if (a == nullptr) type_error(key, v, "an array");
  return *a;
}

using Setter = std::function<void(RunConfig&, const std::string&, const toml::Value&)>;

// One entry per accepted key; dump_config walks the same list.
struct Field {
  const char* key;
  Setter set;
  std::function<std::string(const RunConfig&)> show;
};

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (const char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

std::string num(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, r.ptr);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

#define VL_DOUBLE(k, member)                                                                               \
  Field{k, [](RunConfig& c, const std::string& key, const toml::Value& v) { c.member = as_double(key, v); }, \
        [](const RunConfig& c) { return num(c.member); }}
#define VL_INT(k, member, type, lo)                                                                           \
  Field{k,                                                                                                     \
        [](RunConfig& c, const std::string& key, const toml::Value& v) { c.member = static_cast<type>(as_int(key, v, lo)); }, \
        [](const RunConfig& c) { return std::to_string(c.member); }}
#define VL_BOOL(k, member)                                                                             \
  Field{k, [](RunConfig& c, const std::string& key, const toml::Value& v) { c.member = as_bool(key, v); }, \
        [](const RunConfig& c) { return std::string(c.member ? "true" : "false"); }}
#define VL_PATH(k, member)                                                                               \
  Field{k, [](RunConfig& c, const std::string& key, const toml::Value& v) { c.member = as_string(key, v); }, \
        [](const RunConfig& c) { return quote(c.member.string()); }}

const std::vector<Field>& fields() {
  static const std::vector<Field> all = {
      VL_INT("seed", seed, std::uint64_t, 0),
      VL_INT("threads", threads, unsigned, 0),
      VL_PATH("scene_dir", scene_dir),
      VL_PATH("output_dir", output_dir),

      Field{"scene.room",
            [](RunConfig& c, const std::string& key, const toml::Value& v) {
              const toml::Array& a = as_array(key, v);
              if (a.size() != 3) throw Error(ErrorCode::config, "'scene.room' needs three numbers");
              for (int i = 0; i < 3; ++i) c.scene.room_size(i) = as_double(key, a[i]);
            },
            [](const RunConfig& c) {
              return "[" + num(c.scene.room_size.x()) + ", " + num(c.scene.room_size.y()) + ", " +
                     num(c.scene.room_size.z()) + "]";
            }},
      VL_INT("scene.num_db", scene.num_db, int, 1),
      VL_INT("scene.num_queries", scene.num_queries, int, 0),
      VL_INT("scene.num_boxes", scene.num_boxes, int, 0),
      Field{"scene.regime",
            [](RunConfig& c, const std::string& key, const toml::Value& v) {
              const std::string s = as_string(key, v);
              if (s == "low") {
                c.scene.regime = synth::OverlapRegime::low;
              } else if (s == "high") {
                c.scene.regime = synth::OverlapRegime::high;
              } else {
                throw Error(ErrorCode::config, "'scene.regime' must be 'low' or 'high'");
              }
            },
            [](const RunConfig& c) {
              return quote(c.scene.regime == synth::OverlapRegime::low ? "low" : "high");
            }},
      VL_DOUBLE("scene.min_overlap", scene.min_overlap),
      VL_DOUBLE("scene.max_overlap", scene.max_overlap),
      VL_DOUBLE("scene.rect_density", scene.rect_density),

      Field{"augmentation.offsets",
            [](RunConfig& c, const std::string& key, const toml::Value& v) {
              c.augmentation.offsets.clear();
              for (const toml::Value& e : as_array(key, v)) {
                try {
                  c.augmentation.offsets.push_back(parse_offset_direction(as_string(key, e)));
                } catch (const Error& err) {
                  if (err.code() == ErrorCode::config) throw;
                  throw Error(ErrorCode::config, err.what());
                }
              }
            },
            [](const RunConfig& c) {
              std::string s = "[";
              for (std::size_t i = 0; i < c.augmentation.offsets.size(); ++i) {
                s += (i ? ", " : "") + quote(std::string(to_string(c.augmentation.offsets[i])));
              }
              return s + "]";
            }},
      VL_DOUBLE("augmentation.offset_distance", augmentation.offset_distance),
      VL_INT("augmentation.yaw_steps", augmentation.yaw_steps, int, 1),
      VL_DOUBLE("augmentation.yaw_increment", augmentation.yaw_increment),
      VL_BOOL("augmentation.enabled", augment),
      VL_INT("augmentation.num_sources", augmentation.view.num_sources, std::size_t, 1),
      VL_DOUBLE("augmentation.rotation_weight", augmentation.view.rotation_weight),
      VL_DOUBLE("augmentation.min_coverage", augmentation.view.min_coverage),
      VL_INT("augmentation.min_keypoints", augmentation.view.min_keypoints, std::size_t, 0),
      VL_BOOL("augmentation.free_space_check", augmentation.view.free_space_check),
      VL_DOUBLE("augmentation.occlusion_tolerance", augmentation.view.render.occlusion_tolerance),

      VL_INT("retrieval.k", localize.top_k, std::size_t, 1),
      VL_INT("retrieval.whiten_dims", whiten_dims, int, 0),
      VL_DOUBLE("matching.ratio", localize.ratio),
      VL_BOOL("matching.virtual_local", localize.virtual_local),
      VL_INT("ransac.max_iterations", localize.ransac.max_iterations, std::size_t, 1),
      VL_DOUBLE("ransac.inlier_threshold", localize.ransac.inlier_threshold),
      VL_DOUBLE("ransac.confidence", localize.ransac.confidence),
      VL_BOOL("refine.enabled", localize.refine),
      VL_INT("refine.iters", localize.refine_iters, int, 1),
      Field{"features.mode",
            [](RunConfig& c, const std::string& key, const toml::Value& v) {
              c.feature_mode = parse_feature_mode(as_string(key, v));
            },
            [](const RunConfig& c) { return quote(std::string(to_string(c.feature_mode))); }},
      Field{"features.local_mode",
            [](RunConfig& c, const std::string& key, const toml::Value& v) {
              c.localize.local_mode = parse_feature_mode(as_string(key, v));
            },
            [](const RunConfig& c) { return quote(std::string(to_string(c.localize.local_mode))); }},
      VL_DOUBLE("features.gem_p", localize.features.gem_p),

      VL_PATH("distill.student", distill.student),
      VL_INT("distill.hidden", distill.hidden, int, 1),
      VL_INT("distill.epochs", distill.train.epochs, int, 1),
      VL_INT("distill.batch_size", distill.train.batch_size, int, 1),
      VL_DOUBLE("distill.lr", distill.train.lr),
      VL_INT("distill.lr_decay_epoch", distill.train.lr_decay_epoch, int, 0),
      VL_DOUBLE("distill.lambda", distill.train.lambda),
      VL_BOOL("distill.init_head", distill.train.init_head),
      VL_BOOL("distill.freeze_head", distill.train.freeze_head),
      VL_INT("distill.num_sources", distill.pairs.num_sources, std::size_t, 1),
      VL_INT("distill.gradcheck_inits", distill.gradcheck_inits, int, 1),
  };
  return all;
}

#undef VL_DOUBLE
#undef VL_INT
#undef VL_BOOL
#undef VL_PATH

}  // namespace

void apply_config_text(RunConfig& config, std::string_view text) {
  const toml::Table table = toml::parse(text);
  for (const auto& [key, value] : table) {
    const auto& all = fields();
    const auto it = std::find_if(all.begin(), all.end(), [&](const Field& f) { return key == f.key; });
    if (it == all.end()) {
      throw Error(ErrorCode::config, "line " + std::to_string(value.line) + ": unknown key '" + key + "'");
    }
    it->set(config, key, value);
  }
}

void apply_config_file(RunConfig& config, const std::filesystem::path& path) {
  std::string text;
  try {
    text = io::read_text(path);
  } catch (const Error& e) {
    throw Error(ErrorCode::config, e.what());
  }
  try {
    apply_config_text(config, text);
  } catch (const Error& e) {
    throw Error(ErrorCode::config, path.string() + ": " + e.what());
  }
}

std::string dump_config(const RunConfig& config) {
  std::string out;
  std::string section;
  for (const Field& f : fields()) {
    const std::string key = f.key;
    const auto dot = key.find('.');
    const std::string sec = dot == std::string::npos ? "" : key.substr(0, dot);
    if (sec != section) {
      out += "\n[" + sec + "]\n";
      section = sec;
    }
    out += (dot == std::string::npos ? key : key.substr(dot + 1)) + " = " + f.show(config) + "\n";
  }
  return out;
}

}  // namespace vl

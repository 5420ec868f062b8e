#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "eegline/dataset.hpp"
#include "eegline/errors.hpp"
#include "eegline/nn.hpp"

namespace eegline::io {

using json = nlohmann::json;

inline std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(errc::io_error, "cannot open " + path);
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in),
                                   std::istreambuf_iterator<char>());
}

inline void write_file(const std::string& path,
                       const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(errc::io_error, "cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

namespace detail {

inline void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}
inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
inline void put_f32(std::vector<std::uint8_t>& out, float v) {
  put_u32(out, std::bit_cast<std::uint32_t>(v));
}
inline void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
inline void put_f64(std::vector<std::uint8_t>& out, double v) {
  put_u64(out, std::bit_cast<std::uint64_t>(v));
}

struct Reader {
  const std::vector<std::uint8_t>& b;
  std::size_t pos = 0;

  void need(std::size_t n, const char* what) const {
    if (pos + n > b.size())
      fail(errc::truncated_file, std::string("unexpected end reading ") + what);
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return b[pos++];
  }
  std::uint16_t u16(const char* what) {
    need(2, what);
    std::uint16_t v = static_cast<std::uint16_t>(b[pos]) |
                      (static_cast<std::uint16_t>(b[pos + 1]) << 8);
    pos += 2;
    return v;
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[pos + i]) << (8 * i);
    pos += 8;
    return v;
  }
  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(b.data()) + pos, n);
    pos += n;
    return s;
  }
  bool eof() const { return pos >= b.size(); }
};

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// ModelConfig <-> canonical JSON

inline json config_to_json(const nn::ModelConfig& config) {
  json layers = json::array();
  for (const nn::LayerSpec& l : config.hidden_layers) {
    if (const auto* c = std::get_if<nn::Conv>(&l)) {
      layers.push_back({{"type", "conv"},
                        {"filters", c->filters},
                        {"kh", c->kh},
                        {"kw", c->kw}});
    } else if (const auto* p = std::get_if<nn::Pool>(&l)) {
      layers.push_back({{"type", "pool"},
                        {"kh", p->kh},
                        {"kw", p->kw},
                        {"stride", p->stride}});
    } else if (const auto* f = std::get_if<nn::FC>(&l)) {
      layers.push_back({{"type", "fc"}, {"units", f->units}});
    } else {
      layers.push_back({{"type", "dropout"},
                        {"keep_prob", std::get<nn::Dropout>(l).keep_prob}});
    }
  }
  return {{"hidden_layers", layers}, {"learning_rate", config.learning_rate}};
}

inline nn::ModelConfig config_from_json(const json& j) {
  nn::ModelConfig config;
  config.learning_rate = j.at("learning_rate").get<double>();
  for (const json& l : j.at("hidden_layers")) {
    const std::string type = l.at("type").get<std::string>();
    if (type == "conv") {
      config.hidden_layers.push_back(nn::Conv{l.at("filters").get<int>(),
                                              l.at("kh").get<int>(),
                                              l.at("kw").get<int>()});
    } else if (type == "pool") {
      config.hidden_layers.push_back(nn::Pool{l.at("kh").get<int>(),
                                              l.at("kw").get<int>(),
                                              l.at("stride").get<int>()});
    } else if (type == "fc") {
      config.hidden_layers.push_back(nn::FC{l.at("units").get<int>()});
    } else if (type == "dropout") {
      config.hidden_layers.push_back(
          nn::Dropout{l.at("keep_prob").get<double>()});
    } else {
      fail(errc::io_error, "unknown layer type '" + type + "'");
    }
  }
  return config;
}

// ---------------------------------------------------------------------------
// DatasetManifest <-> JSON (schema eegline-manifest/1)

inline json manifest_to_json(const edf::DatasetManifest& m) {
  json trials = json::array();
  for (const edf::TrialMeta& t : m.trials) {
    trials.push_back({{"subject", t.subject},
                      {"run", t.run},
                      {"event", t.event_label},
                      {"class", edf::trial_class_name(t.klass)},
                      {"onset", t.onset}});
  }
  json excluded = json::array();
  for (const auto& [subject, reason] : m.excluded_subjects)
    excluded.push_back({{"subject", subject}, {"reason", reason}});
  json j = {{"schema", "eegline-manifest/1"},
            {"data_dir", m.data_dir},
            {"included_subjects", m.included_subjects},
            {"excluded_subjects", excluded},
            {"trial_count", m.trial_count},
            {"split_seed", m.split_seed},
            {"split_ratio", m.split_ratio},
            {"trials", trials},
            {"train_indices", m.train_indices},
            {"test_indices", m.test_indices}};
  char id[32];
  std::snprintf(id, sizeof id, "%016llx",
                static_cast<unsigned long long>(detail::fnv1a(j.dump())));
  j["manifest_id"] = id;
  return j;
}

inline std::string manifest_id(const edf::DatasetManifest& m) {
  return manifest_to_json(m).at("manifest_id").get<std::string>();
}

inline edf::DatasetManifest manifest_from_json(const json& j) {
  edf::DatasetManifest m;
  m.data_dir = j.value("data_dir", "");
  m.included_subjects =
      j.at("included_subjects").get<std::vector<std::string>>();
  for (const json& e : j.at("excluded_subjects"))
    m.excluded_subjects.emplace_back(e.at("subject").get<std::string>(),
                                     e.at("reason").get<std::string>());
  m.trial_count = j.at("trial_count").get<std::int64_t>();
  m.split_seed = j.at("split_seed").get<std::uint64_t>();
  m.split_ratio = j.value("split_ratio", 0.7);
  for (const json& t : j.at("trials")) {
    edf::TrialMeta meta;
    meta.subject = t.at("subject").get<std::string>();
    meta.run = t.at("run").get<int>();
    meta.event_label = t.at("event").get<std::string>();
    meta.klass = t.at("class").get<std::string>() == "imagined"
                     ? edf::TrialClass::Imagined
                     : edf::TrialClass::Real;
    meta.onset = t.at("onset").get<double>();
    m.trials.push_back(std::move(meta));
  }
  m.train_indices = j.at("train_indices").get<std::vector<std::size_t>>();
  m.test_indices = j.at("test_indices").get<std::vector<std::size_t>>();
  return m;
}

inline void save_manifest(const std::string& path,
                          const edf::DatasetManifest& m) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(errc::io_error, "cannot write " + path);
  out << manifest_to_json(m).dump(2) << "\n";
}

inline edf::DatasetManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(errc::io_error, "cannot open " + path);
  json j = json::parse(in, nullptr, true);
  return manifest_from_json(j);
}

// ---------------------------------------------------------------------------
// Feature cache: magic "EEGT", version u16, then per record: subject id
// (u32 length + bytes), run u8, class u8, 64*32*67 little-endian f32.

inline constexpr std::uint16_t kCacheVersion = 1;
inline constexpr std::size_t kFeatureNumel =
    static_cast<std::size_t>(64) * 32 * 67;

struct CacheRecord {
  std::string subject;
  std::uint8_t run = 0;
  std::uint8_t klass = 0;  // 0 real, 1 imagined
};

struct FeatureCache {
  std::vector<CacheRecord> records;
  std::vector<float> values;  // records * kFeatureNumel

  std::size_t size() const { return records.size(); }

  nn::Dataset to_dataset() const {
    nn::Dataset d;
    d.x = values;
    d.y.reserve(records.size());
    for (const CacheRecord& r : records) d.y.push_back(r.klass);
    return d;
  }
};

inline void append_cache_record(std::vector<std::uint8_t>& out,
                                const CacheRecord& rec, const float* values) {
  detail::put_u32(out, static_cast<std::uint32_t>(rec.subject.size()));
  out.insert(out.end(), rec.subject.begin(), rec.subject.end());
  out.push_back(rec.run);
  out.push_back(rec.klass);
  for (std::size_t i = 0; i < kFeatureNumel; ++i)
    detail::put_f32(out, values[i]);
}

inline std::vector<std::uint8_t> cache_header() {
  std::vector<std::uint8_t> out = {'E', 'E', 'G', 'T'};
  detail::put_u16(out, kCacheVersion);
  return out;
}

inline void save_cache(const std::string& path, const FeatureCache& cache) {
  std::vector<std::uint8_t> out = cache_header();
  for (std::size_t i = 0; i < cache.records.size(); ++i)
    append_cache_record(out, cache.records[i],
                        cache.values.data() + i * kFeatureNumel);
  write_file(path, out);
}

inline FeatureCache load_cache(const std::string& path) {
  const std::vector<std::uint8_t> bytes = read_file(path);
  detail::Reader r{bytes};
  if (r.str(4, "magic") != "EEGT")
    fail(errc::unsupported_variant, path + " is not a feature cache");
  const std::uint16_t version = r.u16("version");
  if (version != kCacheVersion)
    fail(errc::unsupported_variant,
         "cache version " + std::to_string(version));
  FeatureCache cache;
  while (!r.eof()) {
    CacheRecord rec;
    const std::uint32_t len = r.u32("subject length");
    rec.subject = r.str(len, "subject");
    rec.run = r.u8("run");
    rec.klass = r.u8("class");
    cache.values.reserve(cache.values.size() + kFeatureNumel);
    for (std::size_t i = 0; i < kFeatureNumel; ++i)
      cache.values.push_back(r.f32("features"));
    cache.records.push_back(std::move(rec));
  }
  return cache;
}

// ---------------------------------------------------------------------------
// Checkpoint: magic "EEGM", version u16, config canonical JSON (u32 length +
// bytes), then per parameter: u32 ndim, ndim x u32 dims, f64 LE values.

inline constexpr std::uint16_t kCheckpointVersion = 1;

inline void save_checkpoint(const std::string& path, const nn::Model& model) {
  std::vector<std::uint8_t> out = {'E', 'E', 'G', 'M'};
  detail::put_u16(out, kCheckpointVersion);
  const std::string config = config_to_json(model.config).dump();
  detail::put_u32(out, static_cast<std::uint32_t>(config.size()));
  out.insert(out.end(), config.begin(), config.end());
  for (const nn::Tensor& p : model.params) {
    detail::put_u32(out, static_cast<std::uint32_t>(p.shape.size()));
    for (int d : p.shape) detail::put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : p.v) detail::put_f64(out, v);
  }
  write_file(path, out);
}

inline nn::Model load_checkpoint(const std::string& path) {
  const std::vector<std::uint8_t> bytes = read_file(path);
  detail::Reader r{bytes};
  if (r.str(4, "magic") != "EEGM")
    fail(errc::unsupported_variant, path + " is not a checkpoint");
  const std::uint16_t version = r.u16("version");
  if (version != kCheckpointVersion)
    fail(errc::unsupported_variant,
         "checkpoint version " + std::to_string(version));
  nn::Model model;
  const std::uint32_t clen = r.u32("config length");
  model.config = config_from_json(json::parse(r.str(clen, "config")));
  while (!r.eof()) {
    const std::uint32_t ndim = r.u32("ndim");
    if (ndim == 0 || ndim > 8) fail(errc::io_error, "bad parameter rank");
    std::vector<int> shape;
    for (std::uint32_t i = 0; i < ndim; ++i)
      shape.push_back(static_cast<int>(r.u32("dim")));
    nn::Tensor t(shape);
    for (double& v : t.v) v = r.f64("weights");
    model.params.push_back(std::move(t));
  }
  nn::ShapeCheck check = nn::infer_shapes(model.config);
  if (!check.feasible)
    fail(errc::infeasible_config, "checkpointed config: " + check.reason);
  return model;
}

// Stable identifier for reports: content hash of the checkpoint bytes.
inline std::string model_id_of(const std::string& checkpoint_path) {
  const std::vector<std::uint8_t> bytes = read_file(checkpoint_path);
  std::uint64_t h = 1469598103934665603ULL;
  for (std::uint8_t c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char id[32];
  std::snprintf(id, sizeof id, "%016llx", static_cast<unsigned long long>(h));
  return id;
}

}  // namespace eegline::io

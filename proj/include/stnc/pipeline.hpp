#pragma once

// End-to-end orchestration: config schema, the staged pipeline with its
// on-disk artifacts and content-addressed stage cache, parameter sweeps and
// the encoder comparison.
//
// Run directory layout:
//   dataset/dataset.bin, dataset/dataset.json, folds.json
//   folds/<fold>/codebook/   codebook.bin, codebook.json
//   folds/<fold>/encode/     Y_*.bin, Z_*.bin, STP_*.bin, location_gmm.bin, location_gmm.json
//   folds/<fold>/model/      U.bin, V_train.bin, model.json
//   folds/<fold>/encode_test/V_test.bin, encode_test.json
//   folds/<fold>/classify/   predictions.json, metrics.json
//   metrics.json, confusion.csv, run_report.json

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "stnc/bovw.hpp"
#include "stnc/classify.hpp"
#include "stnc/error.hpp"
#include "stnc/featurestore.hpp"
#include "stnc/io.hpp"
#include "stnc/json_util.hpp"
#include "stnc/stdv.hpp"
#include "stnc/stgnmf.hpp"

#ifndef STNC_VERSION
#define STNC_VERSION "0.0.0"
#endif

namespace stnc::pipeline {

namespace fs = std::filesystem;

inline constexpr int kConfigVersion = 1;

// ---------------------------------------------------------------------------
// Configuration

struct DatasetConfig {
  std::optional<std::string> path;
  std::optional<SynthSpec> synth;
  std::optional<std::uint64_t> seed;
};

struct CodebookConfig {
  Eigen::Index words = 64;
  Eigen::Index k_nn = 5;
  std::optional<double> smoothing;  // empty: estimated from training descriptors
  int max_iter = 100;
  std::optional<std::uint64_t> seed;
};

struct StdvConfig {
  Eigen::Index components = 5;
  double sigma_floor = 0.01;
  double min_count = 10.0;
  bool shared_gmm = false;
  bool normalize_locations = true;
  double power = 0.5;
  bool l2 = true;
  std::optional<std::uint64_t> seed;
};

struct StgnmfConfig {
  Eigen::Index components = 0;
  double lambda = -1.0;
  double beta = 0.6;
  std::optional<double> feature_delta;       // empty: auto
  std::optional<double> distribution_delta;  // empty: auto
  std::optional<Eigen::Index> knn;
  double tol = 1e-6;
  int max_iter = 500;
  double encode_tol = 1e-6;
  int encode_max_iter = 300;
  bool strict_eq15 = false;
  std::optional<std::uint64_t> seed;
};

struct FusionTerm {
  std::string representation;  // stanncr | bovw | stp
  double weight = 1.0;
};

struct ClassifyConfig {
  double c = 10.0;
  std::vector<FusionTerm> fusion{{"stanncr", 1.0}};
};

struct ProtocolConfig {
  std::string kind = "fixed";  // fixed | seeds | logo
  double test_fraction = 0.3;
  std::size_t repeats = 5;     // seeds protocol only
  std::optional<std::uint64_t> seed;
};

struct PipelineConfig {
  std::uint64_t seed = 0;
  DatasetConfig dataset;
  CodebookConfig codebook;
  StdvConfig stdv;
  StgnmfConfig stgnmf;
  ClassifyConfig classify;
  ProtocolConfig protocol;
  std::string output_dir;

  // Stage seeds: explicit values win, otherwise derived from the master seed.
  std::uint64_t dataset_seed() const { return dataset.seed.value_or(mix_seed(seed, 11)); }
  std::uint64_t codebook_seed() const { return codebook.seed.value_or(mix_seed(seed, 12)); }
  std::uint64_t stdv_seed() const { return stdv.seed.value_or(mix_seed(seed, 13)); }
  std::uint64_t stgnmf_seed() const { return stgnmf.seed.value_or(mix_seed(seed, 14)); }
  std::uint64_t protocol_seed() const { return protocol.seed.value_or(mix_seed(seed, 15)); }

  // --seed: replaces the master seed and drops every explicit stage seed.
  void override_seed(std::uint64_t s) {
    seed = s;
    dataset.seed.reset();
    codebook.seed.reset();
    stdv.seed.reset();
    stgnmf.seed.reset();
    protocol.seed.reset();
  }
};

namespace detail {

template <class T>
Json optional_json(const std::optional<T>& v) {
  return v ? Json(*v) : Json(nullptr);
}

template <class T>
std::optional<T> read_optional(StrictObject& o, const std::string& key) {
  if (!o.has(key) || o.at(key).is_null()) return std::nullopt;
  return o.get<T>(key);
}

}  // namespace detail

inline Json dataset_to_json(const DatasetConfig& d) {
  Json j = Json::object();
  if (d.path) j["path"] = *d.path;
  if (d.synth) j["synth"] = to_json(*d.synth);
  j["seed"] = detail::optional_json(d.seed);
  return j;
}

inline Json codebook_to_json(const CodebookConfig& c) {
  return Json{{"words", c.words},
              {"k_nn", c.k_nn},
              {"smoothing", c.smoothing ? Json(*c.smoothing) : Json("auto")},
              {"max_iter", c.max_iter},
              {"seed", detail::optional_json(c.seed)}};
}

inline Json stdv_to_json(const StdvConfig& s) {
  return Json{{"components", s.components},
              {"sigma_floor", s.sigma_floor},
              {"min_count", s.min_count},
              {"shared_gmm", s.shared_gmm},
              {"normalize_locations", s.normalize_locations},
              {"power", s.power},
              {"l2", s.l2},
              {"seed", detail::optional_json(s.seed)}};
}

inline Json stgnmf_to_json(const StgnmfConfig& s) {
  Json delta = Json::object();
  delta["feature"] = s.feature_delta ? Json(*s.feature_delta) : Json("auto");
  delta["distribution"] = s.distribution_delta ? Json(*s.distribution_delta) : Json("auto");
  return Json{{"components", s.components},
              {"lambda", s.lambda},
              {"beta", s.beta},
              {"delta", delta},
              {"knn", detail::optional_json(s.knn)},
              {"tol", s.tol},
              {"max_iter", s.max_iter},
              {"encode_tol", s.encode_tol},
              {"encode_max_iter", s.encode_max_iter},
              {"strict_eq15", s.strict_eq15},
              {"seed", detail::optional_json(s.seed)}};
}

inline Json classify_to_json(const ClassifyConfig& c) {
  Json fusion = Json::array();
  for (const auto& t : c.fusion) fusion.push_back({{"representation", t.representation}, {"weight", t.weight}});
  return Json{{"C", c.c}, {"fusion", fusion}};
}

inline Json protocol_to_json(const ProtocolConfig& p) {
  return Json{{"kind", p.kind},
              {"test_fraction", p.test_fraction},
              {"repeats", p.repeats},
              {"seed", detail::optional_json(p.seed)}};
}

inline Json to_json(const PipelineConfig& c, bool with_output_dir = true) {
  Json j{{"version", kConfigVersion},
         {"seed", c.seed},
         {"dataset", dataset_to_json(c.dataset)},
         {"codebook", codebook_to_json(c.codebook)},
         {"stdv", stdv_to_json(c.stdv)},
         {"stgnmf", stgnmf_to_json(c.stgnmf)},
         {"classify", classify_to_json(c.classify)},
         {"protocol", protocol_to_json(c.protocol)}};
  if (with_output_dir) j["output_dir"] = c.output_dir;
  return j;
}

namespace detail {

// "auto" or a number.
inline std::optional<double> auto_or_number(StrictObject& o, const std::string& key) {
  if (!o.has(key)) return std::nullopt;
  const Json& v = o.at(key);
  if (v.is_string()) {
    require(v.get<std::string>() == "auto", ErrorKind::kValidation,
            o.where() + "." + key + ": expected \"auto\" or a number");
    return std::nullopt;
  }
  require(v.is_number(), ErrorKind::kValidation, o.where() + "." + key + ": expected \"auto\" or a number");
  return v.get<double>();
}

}  // namespace detail

inline void validate(const PipelineConfig& c);

/// Parses and validates a config document. Unknown keys anywhere are errors.
inline PipelineConfig config_from_json(const Json& j) {
  constexpr auto kV = ErrorKind::kValidation;
  PipelineConfig c;
  try {
    StrictObject root(j, "config");
    require(root.get<int>("version") == kConfigVersion, kV,
            "config: unsupported version (expected " + std::to_string(kConfigVersion) + ")");
    c.seed = root.get_or<std::uint64_t>("seed", 0);
    c.output_dir = root.get_or<std::string>("output_dir", "");

    {
      StrictObject o(root.at("dataset"), "config.dataset");
      c.dataset.path = detail::read_optional<std::string>(o, "path");
      if (o.has("synth") && !o.at("synth").is_null()) c.dataset.synth = synth_spec_from_json(o.at("synth"), kV);
      c.dataset.seed = detail::read_optional<std::uint64_t>(o, "seed");
      o.finish();
    }
    if (root.has("codebook")) {
      StrictObject o(root.at("codebook"), "config.codebook");
      auto& cb = c.codebook;
      cb.words = o.get_or<Eigen::Index>("words", cb.words);
      cb.k_nn = o.get_or<Eigen::Index>("k_nn", cb.k_nn);
      cb.smoothing = detail::auto_or_number(o, "smoothing");
      cb.max_iter = o.get_or<int>("max_iter", cb.max_iter);
      cb.seed = detail::read_optional<std::uint64_t>(o, "seed");
      o.finish();
    }
    if (root.has("stdv")) {
      StrictObject o(root.at("stdv"), "config.stdv");
      auto& s = c.stdv;
      s.components = o.get_or<Eigen::Index>("components", s.components);
      s.sigma_floor = o.get_or<double>("sigma_floor", s.sigma_floor);
      s.min_count = o.get_or<double>("min_count", s.min_count);
      s.shared_gmm = o.get_or<bool>("shared_gmm", s.shared_gmm);
      s.normalize_locations = o.get_or<bool>("normalize_locations", s.normalize_locations);
      s.power = o.get_or<double>("power", s.power);
      s.l2 = o.get_or<bool>("l2", s.l2);
      s.seed = detail::read_optional<std::uint64_t>(o, "seed");
      o.finish();
    }
    {
      StrictObject o(root.at("stgnmf"), "config.stgnmf");
      auto& s = c.stgnmf;
      s.components = o.get<Eigen::Index>("components");
      s.lambda = o.get<double>("lambda");
      s.beta = o.get_or<double>("beta", s.beta);
      if (o.has("delta")) {
        const Json& d = o.at("delta");
        if (d.is_string()) {
          require(d.get<std::string>() == "auto", kV, "config.stgnmf.delta: expected \"auto\" or an object");
        } else {
          StrictObject od(d, "config.stgnmf.delta");
          s.feature_delta = detail::auto_or_number(od, "feature");
          s.distribution_delta = detail::auto_or_number(od, "distribution");
          od.finish();
        }
      }
      s.knn = detail::read_optional<Eigen::Index>(o, "knn");
      s.tol = o.get_or<double>("tol", s.tol);
      s.max_iter = o.get_or<int>("max_iter", s.max_iter);
      s.encode_tol = o.get_or<double>("encode_tol", s.encode_tol);
      s.encode_max_iter = o.get_or<int>("encode_max_iter", s.encode_max_iter);
      s.strict_eq15 = o.get_or<bool>("strict_eq15", s.strict_eq15);
      s.seed = detail::read_optional<std::uint64_t>(o, "seed");
      o.finish();
    }
    if (root.has("classify")) {
      StrictObject o(root.at("classify"), "config.classify");
      c.classify.c = o.get_or<double>("C", c.classify.c);
      if (o.has("fusion")) {
        c.classify.fusion.clear();
        for (const Json& jt : o.at("fusion")) {
          StrictObject t(jt, "config.classify.fusion[]");
          c.classify.fusion.push_back({t.get<std::string>("representation"), t.get_or<double>("weight", 1.0)});
          t.finish();
        }
      }
      o.finish();
    }
    if (root.has("protocol")) {
      StrictObject o(root.at("protocol"), "config.protocol");
      auto& p = c.protocol;
      p.kind = o.get_or<std::string>("kind", p.kind);
      p.test_fraction = o.get_or<double>("test_fraction", p.test_fraction);
      p.repeats = o.get_or<std::size_t>("repeats", p.repeats);
      p.seed = detail::read_optional<std::uint64_t>(o, "seed");
      o.finish();
    }
    root.finish();
  } catch (const Json::exception& e) {
    fail(kV, std::string("config: ") + e.what());
  }
  validate(c);
  return c;
}

inline PipelineConfig load_config(const fs::path& path) {
  Json j;
  try {
    j = Json::parse(io::read_text(path));
  } catch (const Json::exception& e) {
    fail(ErrorKind::kValidation, "config '" + path.string() + "': " + e.what());
  } catch (const Error& e) {
    fail(ErrorKind::kValidation, e.what());
  }
  return config_from_json(j);
}

/// Domain checks on every numeric field; throws a validation error naming the field.
inline void validate(const PipelineConfig& c) {
  constexpr auto kV = ErrorKind::kValidation;
  auto check = [&](bool ok, const std::string& msg) { require(ok, kV, "config." + msg); };
  check(c.dataset.path.has_value() != c.dataset.synth.has_value(),
        "dataset: exactly one of 'path' and 'synth' is required");
  if (c.dataset.synth) {
    try {
      c.dataset.synth->validate();
    } catch (const Error& e) {
      fail(kV, std::string("config.dataset.synth: ") + e.what());
    }
  }
  const auto& cb = c.codebook;
  check(cb.words >= 2, "codebook.words must be >= 2");
  check(cb.k_nn >= 1 && cb.k_nn <= cb.words, "codebook.k_nn must lie in [1, words]");
  check(!cb.smoothing || (*cb.smoothing > 0 && std::isfinite(*cb.smoothing)), "codebook.smoothing must be > 0");
  check(cb.max_iter >= 1, "codebook.max_iter must be >= 1");
  const auto& s = c.stdv;
  check(s.components >= 1, "stdv.components must be >= 1");
  check(s.sigma_floor > 0 && std::isfinite(s.sigma_floor), "stdv.sigma_floor must be > 0");
  check(s.min_count >= 0 && std::isfinite(s.min_count), "stdv.min_count must be >= 0");
  check(s.power > 0 && s.power <= 1, "stdv.power must lie in (0, 1]");
  const auto& g = c.stgnmf;
  check(g.components >= 1, "stgnmf.components must be >= 1");
  check(g.lambda >= 0 && std::isfinite(g.lambda), "stgnmf.lambda must be >= 0");
  check(g.beta >= 0 && g.beta <= 1, "stgnmf.beta must lie in [0, 1]");
  check(!g.feature_delta || *g.feature_delta > 0, "stgnmf.delta.feature must be > 0");
  check(!g.distribution_delta || *g.distribution_delta > 0, "stgnmf.delta.distribution must be > 0");
  check(!g.knn || *g.knn >= 1, "stgnmf.knn must be >= 1");
  check(g.tol >= 0 && g.encode_tol >= 0, "stgnmf tolerances must be >= 0");
  check(g.max_iter >= 1 && g.encode_max_iter >= 1, "stgnmf iteration limits must be >= 1");
  check(c.classify.c > 0 && std::isfinite(c.classify.c), "classify.C must be > 0");
  check(!c.classify.fusion.empty(), "classify.fusion must name at least one representation");
  double total = 0;
  for (const auto& t : c.classify.fusion) {
    check(t.representation == "stanncr" || t.representation == "bovw" || t.representation == "stp",
          "classify.fusion: unknown representation '" + t.representation + "'");
    check(t.weight >= 0, "classify.fusion weights must be >= 0");
    total += t.weight;
  }
  check(std::abs(total - 1.0) <= 1e-9, "classify.fusion weights must sum to 1");
  const auto& p = c.protocol;
  check(p.kind == "fixed" || p.kind == "seeds" || p.kind == "logo", "protocol.kind must be fixed, seeds or logo");
  check(p.test_fraction > 0 && p.test_fraction < 1, "protocol.test_fraction must lie in (0, 1)");
  check(p.repeats >= 1, "protocol.repeats must be >= 1");
}

// ---------------------------------------------------------------------------
// Folds

struct Fold {
  std::string name;
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

namespace detail {

// Fisher-Yates with a plain modulo draw, so the permutation does not depend
// on the standard library's distribution implementation.
inline void shuffle(std::vector<std::size_t>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng() % i]);
}

inline std::string fold_name(std::size_t i) {
  std::ostringstream s;
  s << "fold_" << (i < 10 ? "0" : "") << i;
  return s.str();
}

}  // namespace detail

/// Per class, a seeded shuffle puts round(fraction * n_c) samples (at least
/// one, leaving at least one) into the test side.
inline Fold stratified_split(const std::vector<std::size_t>& labels, std::size_t n_classes, double test_fraction,
                             std::uint64_t seed, std::string name) {
  Fold f;
  f.name = std::move(name);
  std::mt19937_64 rng(seed);
  for (std::size_t k = 0; k < n_classes; ++k) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == k) idx.push_back(i);
    require(idx.size() >= 2, ErrorKind::kProtocol,
            "class " + std::to_string(k) + " needs at least two samples for a train/test split");
    detail::shuffle(idx, rng);
    const auto want = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(idx.size())));
    const std::size_t n_test = std::clamp<std::size_t>(want, 1, idx.size() - 1);
    f.test.insert(f.test.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
    f.train.insert(f.train.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_test), idx.end());
  }
  std::sort(f.train.begin(), f.train.end());
  std::sort(f.test.begin(), f.test.end());
  return f;
}

inline std::vector<Fold> make_folds(const Dataset& d, const PipelineConfig& c) {
  const auto labels = d.label_indices();
  std::vector<Fold> folds;
  if (c.protocol.kind == "logo") {
    for (const auto& s : classify::logo_splits(d.groups()))
      folds.push_back({"group_" + std::to_string(s.group), s.train, s.test});
  } else {
    const std::size_t n = c.protocol.kind == "fixed" ? 1 : c.protocol.repeats;
    for (std::size_t r = 0; r < n; ++r)
      folds.push_back(stratified_split(labels, d.classes.size(), c.protocol.test_fraction,
                                       mix_seed(c.protocol_seed(), r), detail::fold_name(r)));
  }
  return folds;
}

inline Json folds_to_json(const std::vector<Fold>& folds) {
  Json j = Json::array();
  for (const auto& f : folds) j.push_back({{"name", f.name}, {"train", f.train}, {"test", f.test}});
  return j;
}

inline std::vector<Fold> folds_from_json(const Json& j) {
  std::vector<Fold> out;
  try {
    for (const auto& jf : j)
      out.push_back({jf.at("name").get<std::string>(), jf.at("train").get<std::vector<std::size_t>>(),
                     jf.at("test").get<std::vector<std::size_t>>()});
  } catch (const Json::exception& e) {
    fail(ErrorKind::kSchema, std::string("folds.json: ") + e.what());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Run context, stage cache and timing

class Run {
 public:
  Run(PipelineConfig config, fs::path out, std::optional<fs::path> cache = std::nullopt)
      : config_(std::move(config)), out_(std::move(out)), cache_(std::move(cache)) {
    validate(config_);
    fs::create_directories(out_);
  }

  const PipelineConfig& config() const { return config_; }
  const fs::path& out() const { return out_; }
  fs::path dataset_file() const { return out_ / "dataset" / "dataset.bin"; }
  fs::path folds_file() const { return out_ / "folds.json"; }
  fs::path fold_dir(const std::string& fold, const std::string& stage) const { return out_ / "folds" / fold / stage; }

  std::vector<Fold> folds() const {
    require(fs::exists(folds_file()), ErrorKind::kStage,
            "no folds.json in '" + out_.string() + "'; run the synth stage first");
    return folds_from_json(Json::parse(io::read_text(folds_file())));
  }

  const Dataset& dataset() {
    if (!dataset_) {
      require(fs::exists(dataset_file()), ErrorKind::kStage,
              "no dataset in '" + out_.string() + "'; run the synth stage first");
      dataset_ = load_dataset(dataset_file());
    }
    return *dataset_;
  }

  /// Runs `body(dir)` unless the cache holds an entry for `key`, in which
  /// case the cached files are copied into `dir`. Errors are re-raised as
  /// stage errors naming the stage and fold.
  template <class F>
  void stage(const std::string& name, const std::string& fold, const fs::path& dir, const std::string& key, F&& body) {
    const auto start = std::chrono::steady_clock::now();
    try {
      fs::create_directories(dir);
      const fs::path entry = cache_ ? *cache_ / (name + "-" + key) : fs::path();
      if (cache_ && fs::exists(entry / ".complete")) {
        for (const auto& f : fs::directory_iterator(entry))
          if (f.path().filename() != ".complete")
            fs::copy_file(f.path(), dir / f.path().filename(), fs::copy_options::overwrite_existing);
        cache_hits_.push_back(name + (fold.empty() ? "" : "/" + fold));
      } else {
        body(dir);
        if (cache_) {
          const fs::path tmp = entry.string() + ".tmp";
          fs::remove_all(tmp);
          fs::create_directories(tmp);
          for (const auto& f : fs::directory_iterator(dir)) fs::copy_file(f.path(), tmp / f.path().filename());
          io::write_text(tmp / ".complete", key);
          fs::remove_all(entry);
          fs::rename(tmp, entry);
        }
      }
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::kStage) throw;
      fail(ErrorKind::kStage, "stage '" + name + "'" + (fold.empty() ? "" : " (" + fold + ")") + " failed: " + e.what());
    } catch (const std::exception& e) {
      fail(ErrorKind::kStage, "stage '" + name + "'" + (fold.empty() ? "" : " (" + fold + ")") + " failed: " + e.what());
    }
    timings_[name] += std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }

  const std::map<std::string, double>& timings() const { return timings_; }
  const std::vector<std::string>& cache_hits() const { return cache_hits_; }

 private:
  PipelineConfig config_;
  fs::path out_;
  std::optional<fs::path> cache_;
  std::optional<Dataset> dataset_;
  std::map<std::string, double> timings_;
  std::vector<std::string> cache_hits_;
};

namespace detail {

inline std::string key_of(std::initializer_list<std::string> parts) {
  io::Hasher h;
  h.str(STNC_VERSION);
  for (const auto& p : parts) h.str(p);
  return h.hex();
}

// Digest of an upstream artifact; a missing file means an earlier stage has not run.
inline std::string digest(const fs::path& p) {
  require(fs::exists(p), ErrorKind::kStage,
          "missing upstream artifact '" + p.string() + "'; run the earlier stages first");
  return io::file_digest(p);
}

inline Eigen::MatrixXd columns(const std::vector<Eigen::VectorXd>& cols, Eigen::Index rows) {
  Eigen::MatrixXd m(rows, static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) m.col(static_cast<Eigen::Index>(j)) = cols[j];
  return m;
}

inline Json read_json(const fs::path& p) {
  try {
    return Json::parse(io::read_text(p));
  } catch (const Json::exception& e) {
    fail(ErrorKind::kSchema, "'" + p.string() + "': " + e.what());
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Stages

/// Ingests or synthesizes the dataset and fixes the folds.
inline void stage_synth(Run& run) {
  const auto& c = run.config();
  const Json dcfg = dataset_to_json(c.dataset);
  if (c.dataset.path)
    require(fs::exists(*c.dataset.path), ErrorKind::kIo, "dataset '" + *c.dataset.path + "' does not exist");
  std::string source_digest = c.dataset.path ? io::file_digest(*c.dataset.path) : "";
  const std::string key = detail::key_of({dcfg.dump(), std::to_string(c.dataset_seed()), source_digest,
                                          protocol_to_json(c.protocol).dump(), std::to_string(c.protocol_seed())});
  run.stage("synth", "", run.out() / "dataset", key, [&](const fs::path& dir) {
    Dataset d = c.dataset.path ? load_dataset(*c.dataset.path) : synth_generate(*c.dataset.synth, c.dataset_seed());
    save_dataset(d, dir / "dataset.bin");
    const auto folds = make_folds(d, c);
    io::write_text(dir / "folds.json", folds_to_json(folds).dump(1));
    Json info{{"name", d.name},
              {"samples", d.samples.size()},
              {"classes", d.classes},
              {"descriptor_dim", d.descriptor_dim},
              {"seed", d.seed},
              {"digest", dataset_digest(d)}};
    io::write_text(dir / "dataset.json", info.dump(2));
  });
  fs::copy_file(run.out() / "dataset" / "folds.json", run.folds_file(), fs::copy_options::overwrite_existing);
}

inline void stage_codebook(Run& run) {
  const auto& c = run.config();
  for (const auto& fold : run.folds()) {
    const std::string key =
        detail::key_of({detail::digest(run.dataset_file()), folds_to_json({fold}).dump(),
                        codebook_to_json(c.codebook).dump(), std::to_string(c.codebook_seed())});
    run.stage("codebook", fold.name, run.fold_dir(fold.name, "codebook"), key, [&](const fs::path& dir) {
      const Dataset& d = run.dataset();
      std::vector<Eigen::VectorXd> descs;
      for (std::size_t i : fold.train)
        for (const auto& f : d.samples[i].features) descs.push_back(f.descriptor);
      bovw::CodebookReport rep;
      const bovw::Codebook cb = bovw::train_codebook(descs, c.codebook.words, c.codebook_seed(),
                                                     bovw::KMeansOptions{c.codebook.max_iter}, &rep);
      const double smoothing = c.codebook.smoothing
                                   ? *c.codebook.smoothing
                                   : bovw::estimate_smoothing(cb, detail::columns(descs, cb.dim()));
      bovw::save_codebook(cb, rep, smoothing, dir / "codebook.bin", dir / "codebook.json");
    });
  }
}

/// Low-level histograms Y, STP vectors and STDVs Z for both sides of every fold.
inline void stage_encode(Run& run) {
  const auto& c = run.config();
  for (const auto& fold : run.folds()) {
    const fs::path cb_dir = run.fold_dir(fold.name, "codebook");
    const std::string key =
        detail::key_of({detail::digest(run.dataset_file()), folds_to_json({fold}).dump(),
                        detail::digest(cb_dir / "codebook.bin"), detail::digest(cb_dir / "codebook.json"),
                        std::to_string(c.codebook.k_nn), stdv_to_json(c.stdv).dump(), std::to_string(c.stdv_seed())});
    run.stage("encode", fold.name, run.fold_dir(fold.name, "encode"), key, [&](const fs::path& dir) {
      const Dataset& d = run.dataset();
      const bovw::Codebook cb = bovw::load_codebook(cb_dir / "codebook.bin");
      const double smoothing = detail::read_json(cb_dir / "codebook.json").at("smoothing").get<double>();
      const Eigen::Index words = cb.words();

      struct Encoded {
        Eigen::VectorXd y, stp;
        std::vector<bovw::WordLocationSet> sets;
        bool degenerate = false;
      };
      auto encode_sample = [&](const VideoSample& s) {
        std::vector<bovw::SoftAssignment> assign;
        assign.reserve(s.features.size());
        for (const auto& f : s.features) assign.push_back(bovw::assign_soft(cb, f.descriptor, c.codebook.k_nn, smoothing));
        Encoded e;
        const auto rep = bovw::pool_histogram(assign, words);
        e.y = rep.y;
        e.degenerate = rep.degenerate;
        e.stp = bovw::stp_pool(s, assign, words);
        e.sets = bovw::collect_word_locations(s, assign, words);
        if (!c.stdv.normalize_locations) e.sets = stdv::scale_locations(std::move(e.sets), s.extent);
        return e;
      };
      std::vector<Encoded> train, test;
      for (std::size_t i : fold.train) train.push_back(encode_sample(d.samples[i]));
      for (std::size_t i : fold.test) test.push_back(encode_sample(d.samples[i]));

      std::vector<std::vector<bovw::WordLocationSet>> corpus;
      for (const auto& e : train) corpus.push_back(e.sets);
      stdv::LocationModelOptions lopts;
      lopts.components = c.stdv.components;
      lopts.sigma_floor = c.stdv.sigma_floor;
      lopts.min_count = c.stdv.min_count;
      lopts.shared_only = c.stdv.shared_gmm;
      const auto model = stdv::fit_location_gmms(corpus, words, c.stdv_seed(), lopts);
      const stdv::Normalization norm{c.stdv.power, c.stdv.l2};

      auto write_side = [&](const std::vector<Encoded>& side, const std::string& suffix) {
        std::vector<Eigen::VectorXd> ys, stps, zs;
        std::size_t degenerate = 0;
        for (const auto& e : side) {
          ys.push_back(e.y);
          stps.push_back(e.stp);
          zs.push_back(stdv::encode_stdv(model, e.sets, norm));
          degenerate += e.degenerate ? 1 : 0;
        }
        io::write_matrix(dir / ("Y_" + suffix + ".bin"), detail::columns(ys, words));
        io::write_matrix(dir / ("STP_" + suffix + ".bin"), detail::columns(stps, 15 * words));
        io::write_matrix(dir / ("Z_" + suffix + ".bin"), detail::columns(zs, words * model.block_size()));
        return degenerate;
      };
      const std::size_t deg_train = write_side(train, "train");
      const std::size_t deg_test = write_side(test, "test");
      stdv::save_location_model(model, dir / "location_gmm.bin");
      std::size_t fallback = 0;
      for (bool b : model.uses_shared) fallback += b ? 1 : 0;
      Json side{{"components", c.stdv.components},
                {"seed", c.stdv_seed()},
                {"sigma_floor", c.stdv.sigma_floor},
                {"min_count", c.stdv.min_count},
                {"shared_gmm", c.stdv.shared_gmm},
                {"fallback_words", fallback},
                {"normalize_locations", c.stdv.normalize_locations},
                {"power", c.stdv.power},
                {"l2", c.stdv.l2},
                {"y_l1_normalized", true},
                {"degenerate_train", deg_train},
                {"degenerate_test", deg_test}};
      io::write_text(dir / "location_gmm.json", side.dump(2));
    });
  }
}

namespace detail {

inline stgnmf::TrainOptions train_options(const PipelineConfig& c) {
  stgnmf::TrainOptions o;
  o.seed = c.stgnmf_seed();
  o.max_iter = c.stgnmf.max_iter;
  o.tol = c.stgnmf.tol;
  if (c.stgnmf.feature_delta) o.feature_bandwidth = graph::Bandwidth::fixed(*c.stgnmf.feature_delta);
  if (c.stgnmf.distribution_delta) o.distribution_bandwidth = graph::Bandwidth::fixed(*c.stgnmf.distribution_delta);
  o.knn = c.stgnmf.knn;
  return o;
}

// Everything the trained factorization depends on.
inline std::string train_key(const Run& run, const Fold& fold) {
  const auto& c = run.config();
  const fs::path enc = run.fold_dir(fold.name, "encode");
  Json s = stgnmf_to_json(c.stgnmf);
  s.erase("encode_tol");
  s.erase("encode_max_iter");
  s.erase("strict_eq15");
  return key_of({digest(enc / "Y_train.bin"), digest(enc / "Z_train.bin"), s.dump(), std::to_string(c.stgnmf_seed())});
}

}  // namespace detail

inline void stage_train(Run& run) {
  const auto& c = run.config();
  for (const auto& fold : run.folds()) {
    const fs::path enc = run.fold_dir(fold.name, "encode");
    run.stage("train", fold.name, run.fold_dir(fold.name, "model"), detail::train_key(run, fold),
              [&](const fs::path& dir) {
                const Eigen::MatrixXd y = io::read_matrix(enc / "Y_train.bin");
                const Eigen::MatrixXd z = io::read_matrix(enc / "Z_train.bin");
                const auto res = stgnmf::train(y, z, c.stgnmf.components, c.stgnmf.lambda, c.stgnmf.beta,
                                               detail::train_options(c));
                stgnmf::save_model(res, dir);
              });
  }
}

inline void stage_encode_test(Run& run) {
  const auto& c = run.config();
  for (const auto& fold : run.folds()) {
    const fs::path enc = run.fold_dir(fold.name, "encode");
    const fs::path mdir = run.fold_dir(fold.name, "model");
    const std::string key = detail::key_of(
        {detail::digest(mdir / "U.bin"), detail::digest(mdir / "V_train.bin"), detail::digest(mdir / "model.json"),
         detail::digest(enc / "Y_train.bin"), detail::digest(enc / "Z_train.bin"), detail::digest(enc / "Y_test.bin"),
         detail::digest(enc / "Z_test.bin"), stgnmf_to_json(c.stgnmf).dump(), std::to_string(c.stgnmf_seed())});
    run.stage("encode-test", fold.name, run.fold_dir(fold.name, "encode_test"), key, [&](const fs::path& dir) {
      const auto trained = stgnmf::load_model(mdir);
      stgnmf::EncodeOptions o;
      o.seed = mix_seed(c.stgnmf_seed(), 1);
      o.max_iter = c.stgnmf.encode_max_iter;
      o.tol = c.stgnmf.encode_tol;
      o.feature_delta = trained.report.feature_delta;
      o.distribution_delta = trained.report.distribution_delta;
      o.knn = trained.report.knn;
      o.strict_test_block = c.stgnmf.strict_eq15;
      const auto res = stgnmf::encode_test(trained.model, trained.v, io::read_matrix(enc / "Y_test.bin"),
                                           io::read_matrix(enc / "Z_test.bin"), io::read_matrix(enc / "Y_train.bin"),
                                           io::read_matrix(enc / "Z_train.bin"), trained.report.lambda,
                                           trained.report.beta, o);
      io::write_matrix(dir / "V_test.bin", res.v);
      std::size_t degenerate = 0;
      for (bool b : res.degenerate) degenerate += b ? 1 : 0;
      Json info{{"iterations", res.iterations},
                {"converged", res.converged},
                {"degenerate", degenerate},
                {"strict_eq15", c.stgnmf.strict_eq15},
                {"final_objective", res.objective_trace.empty() ? 0.0 : res.objective_trace.back()}};
      io::write_text(dir / "encode_test.json", info.dump(2));
    });
  }
}

// ---------------------------------------------------------------------------
// Classification

struct Representation {
  std::string name;
  Eigen::MatrixXd train;  // one column per training sample
  Eigen::MatrixXd test;
  double weight = 1.0;
};

/// Fused RBF-chi2 kernels, one-vs-rest SVM, predictions for the test columns.
inline classify::Prediction classify_representations(const std::vector<Representation>& reps,
                                                     const std::vector<std::size_t>& train_labels,
                                                     std::size_t n_classes, double c) {
  std::vector<classify::KernelMatrix> train_k, test_k;
  std::vector<double> weights;
  for (const auto& r : reps) {
    const double a = classify::mean_train_distance(classify::l1_normalize_columns(r.train));
    train_k.push_back(classify::chi2_kernel_matrix(r.train, r.train, a, true, r.name));
    test_k.push_back(classify::chi2_kernel_matrix(r.test, r.train, a, true, r.name));
    weights.push_back(r.weight);
  }
  const auto ktr = classify::fuse_kernels(train_k, weights);
  const auto kte = classify::fuse_kernels(test_k, weights);
  const auto model = classify::train_ovr_svm(ktr, train_labels, n_classes, c);
  return classify::predict(model, kte.values);
}

struct FoldOutcome {
  std::string fold;
  std::vector<std::size_t> truth;
  std::vector<std::size_t> predicted;
  classify::Metrics metrics;
};

inline std::vector<std::size_t> pick(const std::vector<std::size_t>& labels, const std::vector<std::size_t>& idx) {
  std::vector<std::size_t> out;
  for (std::size_t i : idx) out.push_back(labels[i]);
  return out;
}

inline Representation load_representation(const Run& run, const Fold& fold, const std::string& name, double weight) {
  const fs::path enc = run.fold_dir(fold.name, "encode");
  if (name == "stanncr")
    return {name, io::read_matrix(run.fold_dir(fold.name, "model") / "V_train.bin"),
            io::read_matrix(run.fold_dir(fold.name, "encode_test") / "V_test.bin"), weight};
  const std::string prefix = name == "bovw" ? "Y_" : "STP_";
  return {name, io::read_matrix(enc / (prefix + "train.bin")), io::read_matrix(enc / (prefix + "test.bin")), weight};
}

/// Aggregate metrics: per-fold accuracies, their means, and the pooled
/// confusion over every test prediction.
inline Json aggregate_metrics(const std::vector<FoldOutcome>& outcomes, const Dataset& d, const PipelineConfig& c) {
  std::vector<std::size_t> truth, predicted;
  Json folds = Json::array();
  double acc = 0, macro = 0;
  for (const auto& o : outcomes) {
    truth.insert(truth.end(), o.truth.begin(), o.truth.end());
    predicted.insert(predicted.end(), o.predicted.begin(), o.predicted.end());
    folds.push_back({{"fold", o.fold},
                     {"test_size", o.truth.size()},
                     {"accuracy", o.metrics.accuracy},
                     {"macro_accuracy", o.metrics.macro_accuracy}});
    acc += o.metrics.accuracy;
    macro += o.metrics.macro_accuracy;
  }
  const auto pooled = classify::evaluate(predicted, truth, d.classes.size());
  Json j = classify::metrics_to_json(pooled, d.classes);
  j["folds"] = folds;
  j["mean_accuracy"] = outcomes.empty() ? 0.0 : acc / static_cast<double>(outcomes.size());
  j["mean_macro_accuracy"] = outcomes.empty() ? 0.0 : macro / static_cast<double>(outcomes.size());
  j["protocol"] = c.protocol.kind;
  j["config"] = to_json(c, false);
  return j;
}

inline void stage_classify(Run& run) {
  const auto& c = run.config();
  const auto folds = run.folds();
  for (const auto& fold : folds) {
    std::vector<std::string> parts{detail::digest(run.dataset_file()), folds_to_json({fold}).dump(),
                                   classify_to_json(c.classify).dump()};
    for (const auto& t : c.classify.fusion) {
      const auto r = load_representation(run, fold, t.representation, t.weight);
      parts.push_back(io::Hasher().matrix(r.train).matrix(r.test).hex());
    }
    io::Hasher h;
    for (const auto& p : parts) h.str(p);
    run.stage("classify", fold.name, run.fold_dir(fold.name, "classify"), detail::key_of({h.hex()}),
              [&](const fs::path& dir) {
                const Dataset& d = run.dataset();
                const auto labels = d.label_indices();
                std::vector<Representation> reps;
                for (const auto& t : c.classify.fusion)
                  reps.push_back(load_representation(run, fold, t.representation, t.weight));
                const auto pred = classify_representations(reps, pick(labels, fold.train), d.classes.size(),
                                                           c.classify.c);
                const auto truth = pick(labels, fold.test);
                const auto m = classify::evaluate(pred.labels, truth, d.classes.size());
                Json p{{"test", fold.test}, {"truth", truth}, {"predicted", pred.labels}};
                io::write_text(dir / "predictions.json", p.dump(1));
                io::write_text(dir / "metrics.json", classify::metrics_to_json(m, d.classes).dump(2));
              });
  }
  std::vector<FoldOutcome> outcomes;
  const Dataset& d = run.dataset();
  for (const auto& fold : folds) {
    const Json p = detail::read_json(run.fold_dir(fold.name, "classify") / "predictions.json");
    FoldOutcome o;
    o.fold = fold.name;
    o.truth = p.at("truth").get<std::vector<std::size_t>>();
    o.predicted = p.at("predicted").get<std::vector<std::size_t>>();
    o.metrics = classify::evaluate(o.predicted, o.truth, d.classes.size());
    outcomes.push_back(std::move(o));
  }
  std::vector<std::size_t> truth, predicted;
  for (const auto& o : outcomes) {
    truth.insert(truth.end(), o.truth.begin(), o.truth.end());
    predicted.insert(predicted.end(), o.predicted.begin(), o.predicted.end());
  }
  io::write_text(run.out() / "metrics.json", aggregate_metrics(outcomes, d, c).dump(2));
  io::write_text(run.out() / "confusion.csv",
                 classify::confusion_csv(classify::evaluate(predicted, truth, d.classes.size()), d.classes));
}

// ---------------------------------------------------------------------------
// Whole runs

struct RunReport {
  Json metrics;
  Json report;  // timings, artifacts, train reports, config echo, version, seeds
  double mean_accuracy = 0;
  double mean_macro_accuracy = 0;
};

inline std::vector<std::string> list_artifacts(const fs::path& out) {
  std::vector<std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(out))
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), out).generic_string());
  std::sort(files.begin(), files.end());
  return files;
}

inline RunReport finish_report(Run& run) {
  const auto& c = run.config();
  RunReport r;
  r.metrics = detail::read_json(run.out() / "metrics.json");
  r.mean_accuracy = r.metrics.at("mean_accuracy").get<double>();
  r.mean_macro_accuracy = r.metrics.at("mean_macro_accuracy").get<double>();
  Json trains = Json::array();
  for (const auto& f : run.folds()) {
    Json t = detail::read_json(run.fold_dir(f.name, "model") / "model.json");
    t.erase("objective_trace");
    t["fold"] = f.name;
    trains.push_back(t);
  }
  Json timings = Json::object();
  for (const auto& [k, v] : run.timings()) timings[k] = v;
  r.report = Json{{"tool", "stnc"},
                  {"version", STNC_VERSION},
                  {"config", to_json(c)},
                  {"seeds",
                   {{"master", c.seed},
                    {"dataset", c.dataset_seed()},
                    {"codebook", c.codebook_seed()},
                    {"stdv", c.stdv_seed()},
                    {"stgnmf", c.stgnmf_seed()},
                    {"protocol", c.protocol_seed()}}},
                  {"timings", timings},
                  {"cache_hits", run.cache_hits()},
                  {"train_reports", trains},
                  {"metrics", r.metrics}};
  auto artifacts = list_artifacts(run.out());
  artifacts.push_back("run_report.json");
  std::sort(artifacts.begin(), artifacts.end());
  r.report["artifacts"] = artifacts;
  io::write_text(run.out() / "run_report.json", r.report.dump(2));
  return r;
}

inline RunReport run_pipeline(const PipelineConfig& config, const fs::path& out,
                              const std::optional<fs::path>& cache = std::nullopt) {
  Run run(config, out, cache);
  stage_synth(run);
  stage_codebook(run);
  stage_encode(run);
  stage_train(run);
  stage_encode_test(run);
  stage_classify(run);
  return finish_report(run);
}

// ---------------------------------------------------------------------------
// Sweeps

inline const std::vector<std::string>& sweepable_parameters() {
  static const std::vector<std::string> names{"beta", "lambda", "K_c", "G", "C"};
  return names;
}

inline PipelineConfig with_parameter(PipelineConfig c, const std::string& name, double value) {
  auto whole = [&](const char* what) {
    require(value >= 0 && std::floor(value) == value, ErrorKind::kValidation,
            std::string("sweep: ") + what + " values must be whole numbers");
    return static_cast<Eigen::Index>(value);
  };
  if (name == "beta") {
    c.stgnmf.beta = value;
  } else if (name == "lambda") {
    c.stgnmf.lambda = value;
  } else if (name == "K_c") {
    c.stgnmf.components = whole("K_c");
  } else if (name == "G") {
    c.stdv.components = whole("G");
  } else if (name == "C") {
    c.classify.c = value;
  } else {
    fail(ErrorKind::kValidation, "sweep: unknown parameter '" + name + "' (expected beta, lambda, K_c, G or C)");
  }
  validate(c);
  return c;
}

struct SweepRow {
  double value = 0;
  double macro_accuracy = 0;
  double accuracy = 0;
  std::string run_dir;
};

inline std::string format_value(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

/// One pipeline run per value, sharing seeds and a stage cache. Writes
/// sweep.csv and sweep.json under `out`.
inline std::vector<SweepRow> sweep(const PipelineConfig& config, const std::string& parameter,
                                   const std::vector<double>& values, const fs::path& out,
                                   std::optional<fs::path> cache = std::nullopt) {
  require(!values.empty(), ErrorKind::kValidation, "sweep: no values given");
  std::vector<PipelineConfig> configs;
  for (double v : values) configs.push_back(with_parameter(config, parameter, v));
  fs::create_directories(out);
  if (!cache) cache = out / "stage_cache";
  std::vector<SweepRow> rows;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::string dir = parameter + "_" + format_value(values[i]);
    const auto r = run_pipeline(configs[i], out / dir, cache);
    rows.push_back({values[i], r.mean_macro_accuracy, r.mean_accuracy, dir});
  }
  std::ostringstream csv;
  csv.precision(17);
  csv << "value,macro_accuracy,accuracy\n";
  Json jrows = Json::array();
  std::size_t best = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    csv << format_value(rows[i].value) << ',' << rows[i].macro_accuracy << ',' << rows[i].accuracy << '\n';
    jrows.push_back({{"value", rows[i].value},
                     {"macro_accuracy", rows[i].macro_accuracy},
                     {"accuracy", rows[i].accuracy},
                     {"run_dir", rows[i].run_dir}});
    if (rows[i].macro_accuracy > rows[best].macro_accuracy) best = i;
  }
  io::write_text(out / "sweep.csv", csv.str());
  Json summary{{"parameter", parameter},
               {"rows", jrows},
               {"best_value", rows[best].value},
               {"best_macro_accuracy", rows[best].macro_accuracy},
               {"config", to_json(config, false)}};
  io::write_text(out / "sweep.json", summary.dump(2));
  return rows;
}

// ---------------------------------------------------------------------------
// Encoder comparison

struct CompareRow {
  std::string method;  // bovw | gnmf | stanncr | pseudoinverse
  std::string fold;
  double accuracy = 0;
  double macro_accuracy = 0;
  std::size_t clamped = 0;  // pseudoinverse entries raised to 0
};

/// BoVW histograms, beta = 1 (plain GNMF), the configured beta (STANNCR) and
/// the pseudoinverse encoder over the STANNCR dictionary, on identical folds.
inline std::vector<CompareRow> compare_encoders(const PipelineConfig& config, const fs::path& out,
                                                std::optional<fs::path> cache = std::nullopt) {
  validate(config);
  fs::create_directories(out);
  if (!cache) cache = out / "stage_cache";
  PipelineConfig base = config;
  base.classify.fusion = {{"stanncr", 1.0}};
  PipelineConfig bovw_cfg = base;
  bovw_cfg.classify.fusion = {{"bovw", 1.0}};
  PipelineConfig gnmf_cfg = base;
  gnmf_cfg.stgnmf.beta = 1.0;

  std::vector<CompareRow> rows;
  auto add_rows = [&](const std::string& method, const RunReport& r) {
    for (const auto& f : r.metrics.at("folds"))
      rows.push_back({method, f.at("fold").get<std::string>(), f.at("accuracy").get<double>(),
                      f.at("macro_accuracy").get<double>(), 0});
  };
  add_rows("bovw", run_pipeline(bovw_cfg, out / "bovw", cache));
  add_rows("gnmf", run_pipeline(gnmf_cfg, out / "gnmf", cache));
  add_rows("stanncr", run_pipeline(base, out / "stanncr", cache));

  Run run(base, out / "stanncr", cache);
  const Dataset& d = run.dataset();
  const auto labels = d.label_indices();
  for (const auto& fold : run.folds()) {
    const auto trained = stgnmf::load_model(run.fold_dir(fold.name, "model"));
    Eigen::MatrixXd v_test =
        stgnmf::pseudoinverse_encode(trained.model, io::read_matrix(run.fold_dir(fold.name, "encode") / "Y_test.bin"));
    const auto clamped = static_cast<std::size_t>((v_test.array() < 0.0).count());
    v_test = v_test.cwiseMax(0.0);
    const auto pred = classify_representations({{"pseudoinverse", trained.v, v_test, 1.0}}, pick(labels, fold.train),
                                               d.classes.size(), base.classify.c);
    const auto m = classify::evaluate(pred.labels, pick(labels, fold.test), d.classes.size());
    rows.push_back({"pseudoinverse", fold.name, m.accuracy, m.macro_accuracy, clamped});
  }

  std::ostringstream csv;
  csv.precision(17);
  csv << "method,fold,accuracy,macro_accuracy,clamped\n";
  Json jrows = Json::array();
  for (const auto& r : rows) {
    csv << r.method << ',' << r.fold << ',' << r.accuracy << ',' << r.macro_accuracy << ',' << r.clamped << '\n';
    jrows.push_back({{"method", r.method},
                     {"fold", r.fold},
                     {"accuracy", r.accuracy},
                     {"macro_accuracy", r.macro_accuracy},
                     {"clamped", r.clamped}});
  }
  io::write_text(out / "compare.csv", csv.str());
  io::write_text(out / "compare.json", Json{{"rows", jrows}, {"config", to_json(config, false)}}.dump(2));
  return rows;
}

}  // namespace stnc::pipeline

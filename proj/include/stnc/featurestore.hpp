#pragma once

// Local-feature datasets: in-memory types, JSON and binary persistence,
// location normalization, and the seeded synthetic generator.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "stnc/error.hpp"
#include "stnc/io.hpp"
#include "stnc/json_util.hpp"

namespace stnc {

using Location = Eigen::Vector3d;

struct LocalFeature {
  Location location = Location::Zero();  // (x, y, t); in [0,1]^3 once normalized
  Eigen::VectorXd descriptor;
};

struct Extent {
  double width = 1.0;
  double height = 1.0;
  double frames = 1.0;

  Location as_vector() const { return {width, height, frames}; }
  bool operator==(const Extent&) const = default;
};

struct VideoSample {
  std::string id;
  std::string label;
  std::int64_t group = 0;
  Extent extent;
  std::vector<LocalFeature> features;
};

struct Dataset {
  std::string name;
  std::size_t descriptor_dim = 0;
  std::vector<std::string> classes;
  std::uint64_t seed = 0;
  std::string provenance;
  std::vector<VideoSample> samples;

  std::size_t class_index(const std::string& label) const {
    const auto it = std::find(classes.begin(), classes.end(), label);
    require(it != classes.end(), ErrorKind::kSchema, "label '" + label + "' not in class set");
    return static_cast<std::size_t>(it - classes.begin());
  }

  std::vector<std::size_t> label_indices() const {
    std::vector<std::size_t> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(class_index(s.label));
    return out;
  }

  std::vector<std::int64_t> groups() const {
    std::vector<std::int64_t> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(s.group);
    return out;
  }

  // Checks every type invariant; throws a schema error naming the offending record.
  void validate() const {
    require(descriptor_dim > 0, ErrorKind::kSchema, "descriptor_dim must be positive");
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const auto& s = samples[i];
      const std::string where = "sample " + std::to_string(i) + " ('" + s.id + "')";
      require(std::find(classes.begin(), classes.end(), s.label) != classes.end(), ErrorKind::kSchema,
              where + ": label '" + s.label + "' not in class set");
      require(s.extent.width > 0 && s.extent.height > 0 && s.extent.frames > 0, ErrorKind::kSchema,
              where + ": extent must be strictly positive");
      for (std::size_t f = 0; f < s.features.size(); ++f) {
        const auto& feat = s.features[f];
        require(static_cast<std::size_t>(feat.descriptor.size()) == descriptor_dim, ErrorKind::kSchema,
                where + ", feature " + std::to_string(f) + ": descriptor length " +
                    std::to_string(feat.descriptor.size()) + " != descriptor_dim " + std::to_string(descriptor_dim));
        require(feat.descriptor.allFinite() && feat.location.allFinite(), ErrorKind::kSchema,
                where + ", feature " + std::to_string(f) + ": non-finite value");
        require((feat.location.array() >= 0.0).all() && (feat.location.array() <= 1.0).all(), ErrorKind::kSchema,
                where + ", feature " + std::to_string(f) + ": location outside [0,1]^3");
      }
    }
  }
};

/// Divides each raw location componentwise by the sample extent. Raw
/// locations outside [0,w]x[0,h]x[0,frames] indicate corrupted ingestion.
inline VideoSample normalize_locations(const VideoSample& sample) {
  require(sample.extent.width > 0 && sample.extent.height > 0 && sample.extent.frames > 0, ErrorKind::kRange,
          "sample '" + sample.id + "': extent must be strictly positive");
  const Location extent = sample.extent.as_vector();
  VideoSample out = sample;
  for (std::size_t i = 0; i < out.features.size(); ++i) {
    const Location& raw = sample.features[i].location;
    for (int a = 0; a < 3; ++a) {
      require(raw[a] >= 0.0 && raw[a] <= extent[a], ErrorKind::kRange,
              "sample '" + sample.id + "', feature " + std::to_string(i) + ": coordinate " + std::to_string(a) +
                  " = " + std::to_string(raw[a]) + " outside [0, " + std::to_string(extent[a]) + "]");
    }
    out.features[i].location = raw.cwiseQuotient(extent);
  }
  return out;
}

namespace detail {

inline Json dataset_header(const Dataset& d) {
  return Json{{"format", "stnc-dataset"},
              {"version", 1},
              {"name", d.name},
              {"descriptor_dim", d.descriptor_dim},
              {"classes", d.classes},
              {"seed", d.seed},
              {"provenance", d.provenance},
              {"locations", "normalized"}};
}

// Returns true when the stored locations are raw (pixel/frame units).
inline bool read_dataset_header(const Json& j, Dataset& d) {
  StrictObject h(j, "dataset header", ErrorKind::kSchema);
  if (h.has("format"))
    require(h.get<std::string>("format") == "stnc-dataset", ErrorKind::kSchema, "unexpected format tag");
  if (h.has("version")) require(h.get<int>("version") == 1, ErrorKind::kSchema, "unsupported dataset version");
  d.name = h.get_or<std::string>("name", "");
  d.descriptor_dim = h.get<std::size_t>("descriptor_dim");
  d.classes = h.get<std::vector<std::string>>("classes");
  d.seed = h.get_or<std::uint64_t>("seed", 0);
  d.provenance = h.get_or<std::string>("provenance", "");
  const std::string locations = h.get_or<std::string>("locations", "normalized");
  require(locations == "normalized" || locations == "raw", ErrorKind::kSchema,
          "header.locations must be 'normalized' or 'raw'");
  h.has("samples");
  h.finish();
  return locations == "raw";
}

inline bool is_binary_path(const std::filesystem::path& path) { return path.extension() == ".bin"; }

constexpr std::string_view kDatasetMagic = "STNCDS01";

}  // namespace detail

inline void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  dataset.validate();
  if (detail::is_binary_path(path)) {
    io::BinaryWriter w(path);
    w.raw(detail::kDatasetMagic);
    w.str(detail::dataset_header(dataset).dump());
    w.u64(dataset.samples.size());
    for (const auto& s : dataset.samples) {
      w.str(s.id);
      w.str(s.label);
      w.i64(s.group);
      w.f64(s.extent.width);
      w.f64(s.extent.height);
      w.f64(s.extent.frames);
      w.u64(s.features.size());
      for (const auto& f : s.features) {
        for (int a = 0; a < 3; ++a) w.f64(f.location[a]);
        for (Eigen::Index k = 0; k < f.descriptor.size(); ++k) w.f64(f.descriptor[k]);
      }
    }
    w.close();
    return;
  }
  Json doc = detail::dataset_header(dataset);
  Json samples = Json::array();
  for (const auto& s : dataset.samples) {
    Json features = Json::array();
    for (const auto& f : s.features) {
      features.push_back({{"loc", {f.location[0], f.location[1], f.location[2]}},
                          {"desc", std::vector<double>(f.descriptor.data(), f.descriptor.data() + f.descriptor.size())}});
    }
    samples.push_back({{"id", s.id},
                       {"label", s.label},
                       {"group", s.group},
                       {"extent", {s.extent.width, s.extent.height, s.extent.frames}},
                       {"features", std::move(features)}});
  }
  doc["samples"] = std::move(samples);
  io::write_text(path, doc.dump());
}

inline Dataset load_dataset(const std::filesystem::path& path) {
  require(std::filesystem::exists(path), ErrorKind::kIo, "dataset file '" + path.string() + "' does not exist");
  Dataset d;
  bool raw_locations = false;
  if (detail::is_binary_path(path)) {
    io::BinaryReader r(path);
    require(r.raw(detail::kDatasetMagic.size()) == detail::kDatasetMagic, ErrorKind::kParse,
            "'" + path.string() + "' is not a binary dataset");
    Json header;
    try {
      header = Json::parse(r.str(1ULL << 24));
    } catch (const Json::parse_error& e) {
      fail(ErrorKind::kParse, "binary dataset header: " + std::string(e.what()));
    }
    raw_locations = detail::read_dataset_header(header, d);
    const std::uint64_t n = r.u64();
    for (std::uint64_t i = 0; i < n; ++i) {
      VideoSample s;
      s.id = r.str();
      s.label = r.str();
      s.group = r.i64();
      s.extent.width = r.f64();
      s.extent.height = r.f64();
      s.extent.frames = r.f64();
      const std::uint64_t nf = r.u64();
      s.features.resize(nf);
      for (auto& f : s.features) {
        for (int a = 0; a < 3; ++a) f.location[a] = r.f64();
        f.descriptor.resize(static_cast<Eigen::Index>(d.descriptor_dim));
        for (Eigen::Index k = 0; k < f.descriptor.size(); ++k) f.descriptor[k] = r.f64();
      }
      d.samples.push_back(std::move(s));
    }
    require(r.at_end(), ErrorKind::kParse, "trailing bytes in '" + path.string() + "'");
  } else {
    Json doc;
    try {
      doc = Json::parse(io::read_text(path));
    } catch (const Json::parse_error& e) {
      fail(ErrorKind::kParse, "'" + path.string() + "': " + e.what());
    }
    raw_locations = detail::read_dataset_header(doc, d);
    require(doc.contains("samples") && doc["samples"].is_array(), ErrorKind::kParse,
            "'" + path.string() + "': missing samples array");
    std::size_t index = 0;
    for (const Json& js : doc["samples"]) {
      const std::string where = "sample record " + std::to_string(index);
      try {
        StrictObject so(js, where, ErrorKind::kParse);
        VideoSample s;
        s.id = so.get<std::string>("id");
        s.label = so.get<std::string>("label");
        s.group = so.get<std::int64_t>("group");
        const auto extent = so.get<std::array<double, 3>>("extent");
        s.extent = {extent[0], extent[1], extent[2]};
        std::size_t fi = 0;
        for (const Json& jf : so.at("features")) {
          StrictObject fo(jf, where + ", feature " + std::to_string(fi), ErrorKind::kParse);
          LocalFeature f;
          const auto loc = fo.get<std::array<double, 3>>("loc");
          f.location = {loc[0], loc[1], loc[2]};
          const auto desc = fo.get<std::vector<double>>("desc");
          require(desc.size() == d.descriptor_dim, ErrorKind::kSchema,
                  where + ", feature " + std::to_string(fi) + ": descriptor length " + std::to_string(desc.size()) +
                      " != descriptor_dim " + std::to_string(d.descriptor_dim));
          f.descriptor = Eigen::Map<const Eigen::VectorXd>(desc.data(), static_cast<Eigen::Index>(desc.size()));
          fo.finish();
          s.features.push_back(std::move(f));
          ++fi;
        }
        so.finish();
        d.samples.push_back(std::move(s));
      } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::kParse, where + ": " + e.what());
      }
      ++index;
    }
  }
  if (raw_locations) {
    for (auto& s : d.samples) s = normalize_locations(s);
  }
  d.validate();
  return d;
}

// ---------------------------------------------------------------------------
// Synthetic generation

struct DescriptorProfile {
  std::vector<double> weights;  // mixing weights over the shared descriptor clusters; empty = uniform
};

struct LocationProfile {
  std::vector<Location> means;  // mean for descriptor cluster c is means[c % size]; empty = seeded random
  double spread = 0.05;
};

struct SynthClass {
  std::string name;
  std::size_t descriptor_profile = 0;
  std::size_t location_profile = 0;
};

struct SynthSpec {
  std::string name = "synthetic";
  std::size_t samples_per_class = 0;
  std::size_t features_per_sample = 0;
  std::size_t descriptor_dim = 0;
  std::size_t descriptor_clusters = 8;
  double descriptor_spread = 0.25;
  double sample_jitter = 0.0;  // per-sample shift of every location
  std::size_t groups = 0;      // 0: min(5, sample count)
  Extent extent{320.0, 240.0, 100.0};
  std::vector<DescriptorProfile> descriptor_profiles;
  std::vector<LocationProfile> location_profiles;
  std::vector<SynthClass> classes;

  void validate() const {
    require(samples_per_class > 0 && features_per_sample > 0 && descriptor_dim > 0 && descriptor_clusters > 0,
            ErrorKind::kSpec, "synth counts must be positive");
    require(!classes.empty(), ErrorKind::kSpec, "synth spec declares no classes");
    require(descriptor_spread >= 0 && sample_jitter >= 0, ErrorKind::kSpec, "spreads must be non-negative");
    require(extent.width > 0 && extent.height > 0 && extent.frames > 0, ErrorKind::kSpec, "extent must be positive");
    for (const auto& c : classes) {
      require(c.descriptor_profile < std::max<std::size_t>(descriptor_profiles.size(), 1), ErrorKind::kSpec,
              "class '" + c.name + "' references a missing descriptor profile");
      require(c.location_profile < std::max<std::size_t>(location_profiles.size(), 1), ErrorKind::kSpec,
              "class '" + c.name + "' references a missing location profile");
    }
    for (const auto& p : descriptor_profiles) {
      require(p.weights.empty() || p.weights.size() == descriptor_clusters, ErrorKind::kSpec,
              "descriptor profile weights must have one entry per cluster");
      for (double w : p.weights) require(w >= 0, ErrorKind::kSpec, "descriptor profile weights must be >= 0");
    }
    for (const auto& p : location_profiles) require(p.spread >= 0, ErrorKind::kSpec, "location spread must be >= 0");
  }
};

inline Json to_json(const SynthSpec& s) {
  Json dprof = Json::array();
  for (const auto& p : s.descriptor_profiles) dprof.push_back({{"weights", p.weights}});
  Json lprof = Json::array();
  for (const auto& p : s.location_profiles) {
    Json means = Json::array();
    for (const auto& m : p.means) means.push_back({m[0], m[1], m[2]});
    lprof.push_back({{"means", means}, {"spread", p.spread}});
  }
  Json classes = Json::array();
  for (const auto& c : s.classes)
    classes.push_back(
        {{"name", c.name}, {"descriptor_profile", c.descriptor_profile}, {"location_profile", c.location_profile}});
  return Json{{"name", s.name},
              {"samples_per_class", s.samples_per_class},
              {"features_per_sample", s.features_per_sample},
              {"descriptor_dim", s.descriptor_dim},
              {"descriptor_clusters", s.descriptor_clusters},
              {"descriptor_spread", s.descriptor_spread},
              {"sample_jitter", s.sample_jitter},
              {"groups", s.groups},
              {"extent", {s.extent.width, s.extent.height, s.extent.frames}},
              {"descriptor_profiles", dprof},
              {"location_profiles", lprof},
              {"classes", classes}};
}

inline SynthSpec synth_spec_from_json(const Json& j, ErrorKind kind = ErrorKind::kValidation) {
  StrictObject o(j, "synth", kind);
  SynthSpec s;
  s.name = o.get_or<std::string>("name", s.name);
  s.samples_per_class = o.get<std::size_t>("samples_per_class");
  s.features_per_sample = o.get<std::size_t>("features_per_sample");
  s.descriptor_dim = o.get<std::size_t>("descriptor_dim");
  s.descriptor_clusters = o.get_or<std::size_t>("descriptor_clusters", s.descriptor_clusters);
  s.descriptor_spread = o.get_or<double>("descriptor_spread", s.descriptor_spread);
  s.sample_jitter = o.get_or<double>("sample_jitter", s.sample_jitter);
  s.groups = o.get_or<std::size_t>("groups", s.groups);
  if (o.has("extent")) {
    const auto e = o.get<std::array<double, 3>>("extent");
    s.extent = {e[0], e[1], e[2]};
  }
  if (o.has("descriptor_profiles")) {
    for (const Json& jp : o.at("descriptor_profiles")) {
      StrictObject p(jp, "synth.descriptor_profiles[]", kind);
      s.descriptor_profiles.push_back({p.get_or<std::vector<double>>("weights", {})});
      p.finish();
    }
  }
  if (o.has("location_profiles")) {
    for (const Json& jp : o.at("location_profiles")) {
      StrictObject p(jp, "synth.location_profiles[]", kind);
      LocationProfile lp;
      for (const auto& m : p.get_or<std::vector<std::array<double, 3>>>("means", {}))
        lp.means.emplace_back(m[0], m[1], m[2]);
      lp.spread = p.get_or<double>("spread", lp.spread);
      p.finish();
      s.location_profiles.push_back(std::move(lp));
    }
  }
  for (const Json& jc : o.at("classes")) {
    StrictObject c(jc, "synth.classes[]", kind);
    s.classes.push_back({c.get<std::string>("name"), c.get_or<std::size_t>("descriptor_profile", 0),
                         c.get_or<std::size_t>("location_profile", 0)});
    c.finish();
  }
  o.finish();
  return s;
}

// splitmix64 finalizer; derives independent stream seeds from (seed, stream).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Pure function of (spec, seed). Labels are assigned round-robin over the
/// declared classes; group of sample i is floor(i * groups / n).
inline Dataset synth_generate(const SynthSpec& spec, std::uint64_t seed) {
  spec.validate();
  const std::size_t n_classes = spec.classes.size();
  const std::size_t n = n_classes * spec.samples_per_class;
  const std::size_t groups = spec.groups > 0 ? std::min(spec.groups, n) : std::min<std::size_t>(5, n);
  const auto m = static_cast<Eigen::Index>(spec.descriptor_dim);
  const std::size_t n_clusters = spec.descriptor_clusters;

  std::mt19937_64 param_rng(mix_seed(seed, 1));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> interior(0.15, 0.85);

  std::vector<Eigen::VectorXd> centers(n_clusters);
  for (auto& c : centers) {
    c.resize(m);
    for (Eigen::Index k = 0; k < m; ++k) c[k] = normal(param_rng);
  }

  std::vector<LocationProfile> location_profiles = spec.location_profiles;
  if (location_profiles.empty()) location_profiles.push_back({});
  for (auto& p : location_profiles) {
    if (!p.means.empty()) continue;
    for (std::size_t c = 0; c < n_clusters; ++c) {
      const double x = interior(param_rng);
      const double y = interior(param_rng);
      const double t = interior(param_rng);
      p.means.emplace_back(x, y, t);
    }
  }
  std::vector<std::discrete_distribution<std::size_t>> cluster_pickers;
  auto picker_for = [&](const std::vector<double>& w) {
    const std::vector<double> weights = w.empty() ? std::vector<double>(n_clusters, 1.0) : w;
    return std::discrete_distribution<std::size_t>(weights.begin(), weights.end());
  };
  if (spec.descriptor_profiles.empty()) cluster_pickers.push_back(picker_for({}));
  for (const auto& p : spec.descriptor_profiles) cluster_pickers.push_back(picker_for(p.weights));

  Dataset d;
  d.name = spec.name;
  d.descriptor_dim = spec.descriptor_dim;
  d.seed = seed;
  d.provenance = "synthetic";
  for (const auto& c : spec.classes) d.classes.push_back(c.name);

  std::mt19937_64 rng(mix_seed(seed, 2));
  d.samples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const SynthClass& cls = spec.classes[i % n_classes];
    auto& picker = cluster_pickers[cls.descriptor_profile];
    const LocationProfile& lp = location_profiles[cls.location_profile];
    VideoSample s;
    s.id = "s" + std::to_string(i);
    s.label = cls.name;
    s.group = static_cast<std::int64_t>(i * groups / n);
    s.extent = spec.extent;
    const Location jitter(spec.sample_jitter * normal(rng), spec.sample_jitter * normal(rng),
                          spec.sample_jitter * normal(rng));
    s.features.resize(spec.features_per_sample);
    for (auto& f : s.features) {
      const std::size_t c = picker(rng);
      f.descriptor.resize(m);
      for (Eigen::Index k = 0; k < m; ++k) f.descriptor[k] = centers[c][k] + spec.descriptor_spread * normal(rng);
      const Location& mean = lp.means[c % lp.means.size()];
      for (int a = 0; a < 3; ++a)
        f.location[a] = std::clamp(mean[a] + jitter[a] + lp.spread * normal(rng), 0.0, 1.0);
    }
    d.samples.push_back(std::move(s));
  }
  return d;
}

// Order-sensitive digest over every numeric and string field.
inline std::string dataset_digest(const Dataset& d) {
  io::Hasher h;
  h.str(d.name).u64(d.descriptor_dim).u64(d.seed);
  for (const auto& c : d.classes) h.str(c);
  for (const auto& s : d.samples) {
    h.str(s.id).str(s.label).u64(static_cast<std::uint64_t>(s.group));
    h.f64(s.extent.width).f64(s.extent.height).f64(s.extent.frames).u64(s.features.size());
    for (const auto& f : s.features) {
      for (int a = 0; a < 3; ++a) h.f64(f.location[a]);
      for (Eigen::Index k = 0; k < f.descriptor.size(); ++k) h.f64(f.descriptor[k]);
    }
  }
  return h.hex();
}

}  // namespace stnc

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include <json.hpp>

#include "aerosdf/common/binary_io.hpp"
#include "aerosdf/common/error.hpp"
#include "aerosdf/common/random.hpp"
#include "aerosdf/datagen.hpp"

namespace aerosdf::datagen {

using Json = nlohmann::ordered_json;

std::string split_name(Split split) {
  switch (split) {
    case Split::kTrain:
      return "train";
    case Split::kVal:
      return "val";
    case Split::kTest:
      return "test";
  }
  throw Error("invalid split");
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  throw Error("unknown split '" + std::string(name) + "' (expected train, val or test)");
}

std::size_t DatasetManifest::count(Split split, bool augmented) const {
  return static_cast<std::size_t>(std::count_if(samples.begin(), samples.end(), [&](const SampleRecord& r) {
    return r.split == split && r.augmented == augmented;
  }));
}

namespace {

Json vec_json(const Vec3& v) { return Json::array({v.x, v.y, v.z}); }

Vec3 vec_from(const Json& j, const char* key) {
  const Json& a = j.at(key);
  if (!a.is_array() || a.size() != 3) throw Error(std::string("grid.") + key + " must be a 3-element array");
  return {a[0].get<double>(), a[1].get<double>(), a[2].get<double>()};
}

Json params_json(const ShapeParams& p) {
  return Json{{"length", p.length},   {"width", p.width},           {"height", p.height},
              {"alpha_deg", p.alpha_deg}, {"beta_deg", p.beta_deg}, {"ride_height", p.ride_height},
              {"spoiler", p.spoiler}, {"gamma_deg", p.gamma_deg}};
}

ShapeParams params_from(const Json& j) {
  ShapeParams p;
  p.length = j.at("length").get<double>();
  p.width = j.at("width").get<double>();
  p.height = j.at("height").get<double>();
  p.alpha_deg = j.at("alpha_deg").get<double>();
  p.beta_deg = j.at("beta_deg").get<double>();
  p.ride_height = j.at("ride_height").get<double>();
  p.spoiler = j.at("spoiler").get<bool>();
  p.gamma_deg = j.at("gamma_deg").get<double>();
  return p;
}

void validate_manifest(const DatasetManifest& m) {
  m.grid.validate();
  std::map<std::string, Split> originals;
  for (const auto& r : m.samples) {
    if (r.id.empty()) throw Error("manifest record with an empty id");
    if (r.augmented != r.parent.has_value()) {
      throw Error("record '" + r.id + "': augmented records need a parent and originals must not have one");
    }
    if (r.augmented && r.split != Split::kTrain) throw Error("augmented record '" + r.id + "' is not in train");
    if (!(r.weight > 0.0 && r.weight <= 1.0)) throw Error("record '" + r.id + "': weight outside (0, 1]");
    if (!r.augmented && !originals.emplace(r.id, r.split).second) {
      throw Error("duplicate record id '" + r.id + "'");
    }
  }
  std::map<std::string, int> seen;
  for (const auto& r : m.samples) {
    if (++seen[r.id] > 1) throw Error("duplicate record id '" + r.id + "'");
    if (r.augmented) {
      auto it = originals.find(*r.parent);
      if (it == originals.end()) throw Error("record '" + r.id + "': parent '" + *r.parent + "' not in manifest");
      if (it->second != Split::kTrain) throw Error("record '" + r.id + "': parent is not a train sample");
    }
  }
}

}  // namespace

std::string manifest_to_json(const DatasetManifest& manifest) {
  validate_manifest(manifest);
  Json samples = Json::array();
  for (const auto& r : manifest.samples) {
    Json j;
    j["id"] = r.id;
    j["parent"] = r.parent ? Json(*r.parent) : Json(nullptr);
    j["mesh"] = r.mesh;
    j["sdf"] = r.sdf;
    if (!r.fields.empty()) j["fields"] = r.fields;
    j["cd"] = r.cd;
    j["split"] = split_name(r.split);
    j["weight"] = r.weight;
    j["augmented"] = r.augmented;
    j["params"] = params_json(r.params);
    samples.push_back(std::move(j));
  }
  const auto& g = manifest.grid;
  Json root;
  root["version"] = manifest.version;
  root["grid"] = Json{{"dims", Json::array({g.dims[0], g.dims[1], g.dims[2]})},
                      {"origin", vec_json(g.origin)},
                      {"spacing", vec_json(g.spacing)}};
  root["samples"] = std::move(samples);
  return root.dump(2) + "\n";
}

DatasetManifest manifest_from_json(std::string_view text) {
  Json root;
  try {
    root = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ParseError(std::string("manifest is not valid JSON: ") + e.what(), e.byte, ParseError::Unit::kByte);
  }
  DatasetManifest m;
  try {
    m.version = root.at("version").get<int>();
    if (m.version != kManifestVersion) {
      throw Error("unsupported manifest version " + std::to_string(m.version));
    }
    const Json& g = root.at("grid");
    const Json& dims = g.at("dims");
    if (!dims.is_array() || dims.size() != 3) throw Error("grid.dims must be a 3-element array");
    for (int a = 0; a < 3; ++a) m.grid.dims[a] = dims[a].get<std::uint32_t>();
    m.grid.origin = vec_from(g, "origin");
    m.grid.spacing = vec_from(g, "spacing");
    for (const Json& j : root.at("samples")) {
      SampleRecord r;
      r.id = j.at("id").get<std::string>();
      if (!j.at("parent").is_null()) r.parent = j.at("parent").get<std::string>();
      r.mesh = j.at("mesh").get<std::string>();
      r.sdf = j.at("sdf").get<std::string>();
      if (j.contains("fields")) r.fields = j.at("fields").get<std::string>();
      r.cd = j.at("cd").get<double>();
      r.split = parse_split(j.at("split").get<std::string>());
      r.weight = j.at("weight").get<double>();
      r.augmented = j.at("augmented").get<bool>();
      r.params = params_from(j.at("params"));
      m.samples.push_back(std::move(r));
    }
  } catch (const Json::exception& e) {
    throw Error(std::string("malformed manifest: ") + e.what());
  }
  validate_manifest(m);
  return m;
}

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  const std::string text = manifest_to_json(manifest);
  io::write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  try {
    return manifest_from_json(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

DatasetManifest merge_manifests(const DatasetManifest& a, const DatasetManifest& b) {
  if (!(a.grid == b.grid)) throw Error("cannot merge manifests over different grids");
  DatasetManifest out = a;
  std::map<std::string, const SampleRecord*> by_id;
  for (const auto& r : a.samples) by_id[r.id] = &r;
  for (const auto& r : b.samples) {
    auto it = by_id.find(r.id);
    if (it == by_id.end()) {
      out.samples.push_back(r);
    } else if (!(*it->second == r)) {
      throw Error("record '" + r.id + "' differs between the merged manifests");
    }
  }
  validate_manifest(out);
  return out;
}

std::vector<Split> assign_splits(std::size_t n, std::uint64_t seed) {
  const auto n_train = static_cast<std::size_t>(std::llround(0.7 * static_cast<double>(n)));
  const auto n_val = std::min(n - n_train, static_cast<std::size_t>(std::llround(0.15 * static_cast<double>(n))));
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(derive_seed(seed, 0x5b1175ULL));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
  std::vector<Split> splits(n, Split::kTest);
  for (std::size_t r = 0; r < n; ++r) {
    splits[order[r]] = r < n_train ? Split::kTrain : (r < n_train + n_val ? Split::kVal : Split::kTest);
  }
  return splits;
}

}  // namespace aerosdf::datagen

#include <cmath>
#include <cstdio>
#include <set>
#include <tuple>

#include "aerosdf/common/error.hpp"
#include "aerosdf/common/log.hpp"
#include "aerosdf/common/random.hpp"
#include "aerosdf/datagen.hpp"
#include "aerosdf/mesh_io.hpp"

namespace aerosdf::datagen {

namespace fs = std::filesystem;

namespace {

std::string padded_id(const std::string& prefix, std::size_t index, std::size_t count) {
  int width = 3;
  for (std::size_t c = count; c >= 1000; c /= 10) ++width;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%0*zu", width, index);
  return prefix + buf;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) h = (h ^ c) * 0x100000001b3ULL;
  return h;
}

void make_dirs(const fs::path& dir, bool sdf, bool fields) {
  std::error_code ec;
  fs::create_directories(dir / "meshes", ec);
  if (!ec && sdf) fs::create_directories(dir / "sdf", ec);
  if (!ec && fields) fs::create_directories(dir / "fields", ec);
  if (ec) throw IoError("cannot create dataset directories under " + dir.string() + ": " + ec.message());
}

void record_failure(std::vector<GenerationFailure>* failures, const std::string& id, const std::string& message) {
  log::warn(id + ": " + message);
  if (failures) failures->push_back({id, message});
}

// Mesh and (optionally) SDF of one record; returns the manifest paths.
std::pair<std::string, std::string> write_geometry(const mesh::TriangleMesh& mesh, const std::string& id,
                                                   const fs::path& dir, const sdf::GridSpec& grid, bool voxelize,
                                                   int n_rays) {
  const std::string mesh_rel = "meshes/" + id + ".stl";
  mesh::write_mesh(mesh, dir / mesh_rel, mesh::MeshFormat::kStlBinary);
  std::string sdf_rel;
  if (voxelize) {
    sdf_rel = "sdf/" + id + ".sdf3";
    sdf::write_volume(sdf::generate_sdf(mesh, grid, n_rays), dir / sdf_rel);
  }
  return {mesh_rel, sdf_rel};
}

}  // namespace

DatasetManifest generate_dataset(const DatasetOptions& options, const fs::path& dir,
                                 std::vector<GenerationFailure>* failures) {
  options.grid.validate();
  if (options.n_samples < 1) throw Error("n_samples must be >= 1");
  if (!(options.spoiler_fraction >= 0.0 && options.spoiler_fraction <= 1.0)) {
    throw Error("spoiler_fraction must be in [0, 1]");
  }
  if (options.fields && !options.voxelize) throw Error("field targets need voxelized inputs");
  make_dirs(dir, options.voxelize, options.fields);

  const auto design = sobol_sample(4, options.n_samples, options.sobol_skip);
  const auto splits = assign_splits(options.n_samples, options.seed);

  DatasetManifest manifest;
  manifest.grid = options.grid;
  for (std::size_t i = 0; i < options.n_samples; ++i) {
    const std::string id = padded_id(options.id_prefix, i, options.n_samples);
    const double f = options.spoiler_fraction;
    const bool spoiler = std::floor(static_cast<double>(i + 1) * f) > std::floor(static_cast<double>(i) * f);
    try {
      SampleRecord r;
      r.id = id;
      r.params = params_from_unit(design[i], spoiler);
      r.cd = drag_proxy(r.params);
      r.split = splits[i];
      const auto m = build_shape_mesh(r.params);
      std::tie(r.mesh, r.sdf) = write_geometry(m, id, dir, options.grid, options.voxelize, options.n_rays);
      if (options.fields) {
        r.fields = "fields/" + id + ".sdf3";
        sdf::write_volume(wake_field(r.params, options.grid), dir / r.fields);
      }
      manifest.samples.push_back(std::move(r));
      log::info("generated " + id);
    } catch (const std::exception& e) {
      record_failure(failures, id, e.what());
    }
  }

  if (options.augment) {
    AugmentOptions aug;
    aug.weight = options.augmented_weight;
    aug.seed = options.seed;
    aug.voxelize = options.voxelize;
    aug.n_rays = options.n_rays;
    augment_manifest(manifest, dir, aug, failures);
  }
  return manifest;
}

std::size_t augment_manifest(DatasetManifest& manifest, const fs::path& dir, const AugmentOptions& options,
                             std::vector<GenerationFailure>* failures) {
  if (!(options.weight > 0.0 && options.weight <= 1.0)) throw Error("augmented weight must be in (0, 1]");
  make_dirs(dir, options.voxelize, false);

  std::set<std::string> done;
  for (const auto& r : manifest.samples) {
    if (r.parent) done.insert(*r.parent);
  }
  std::vector<SampleRecord> parents;
  for (std::size_t i = 0; i < manifest.samples.size(); ++i) {
    const auto& r = manifest.samples[i];
    if (!r.augmented && r.split == Split::kTrain && !done.count(r.id)) parents.push_back(r);
  }

  std::size_t added = 0;
  for (const auto& parent : parents) {
    try {
      const auto m = mesh::load_mesh(dir / parent.mesh);
      const auto plan = mesh::standard_preset(m, options.weight, derive_seed(options.seed, fnv1a(parent.id)));
      const auto result = mesh::generate_augmentations(m, plan);
      for (const auto& f : result.failures) {
        char suffix[16];
        std::snprintf(suffix, sizeof suffix, "_a%02zu", f.variant_index);
        record_failure(failures, parent.id + suffix, f.name + ": " + f.message);
      }
      for (const auto& variant : result.meshes) {
        char suffix[16];
        std::snprintf(suffix, sizeof suffix, "_a%02zu", variant.variant_index);
        const std::string id = parent.id + suffix;
        try {
          SampleRecord r = parent;
          r.id = id;
          r.parent = parent.id;
          r.augmented = true;
          r.weight = variant.weight;
          std::tie(r.mesh, r.sdf) = write_geometry(variant.mesh, id, dir, manifest.grid, options.voxelize,
                                                   options.n_rays);
          manifest.samples.push_back(std::move(r));
          ++added;
        } catch (const std::exception& e) {
          record_failure(failures, id, e.what());
        }
      }
      log::info("augmented " + parent.id);
    } catch (const std::exception& e) {
      record_failure(failures, parent.id, std::string("augmentation failed: ") + e.what());
    }
  }
  return added;
}

std::vector<training::Sample> load_split(const DatasetManifest& manifest, const fs::path& dir, Split split,
                                         const LoadOptions& options) {
  const auto norm = sdf::default_normalization(manifest.grid);
  std::vector<training::Sample> out;
  for (const auto& r : manifest.samples) {
    if (r.split != split || (r.augmented && !options.include_augmented)) continue;
    if (r.sdf.empty()) throw Error("record '" + r.id + "' has no SDF volume");
    auto volume = sdf::read_volume(dir / r.sdf);
    if (!(volume.grid == manifest.grid) || volume.components != 1) {
      throw Error("record '" + r.id + "': SDF volume does not match the manifest grid");
    }
    training::Sample s;
    s.id = r.id;
    s.input = training::to_network(sdf::normalize_sdf(volume, norm.clamp, norm.scale));
    s.cd = r.cd;
    s.weight = r.weight;
    s.augmented = r.augmented;
    if (options.fields) {
      if (r.fields.empty()) throw Error("record '" + r.id + "' has no field target");
      auto fields = sdf::read_volume(dir / r.fields);
      if (!(fields.grid == manifest.grid) || fields.components != 3) {
        throw Error("record '" + r.id + "': field volume does not match the manifest grid");
      }
      s.fields = training::to_network(fields);
    }
    out.push_back(std::move(s));
  }
  return out;
}

training::Dataset load_training_data(const DatasetManifest& manifest, const fs::path& dir, bool fields) {
  training::Dataset data;
  data.train = load_split(manifest, dir, Split::kTrain, {fields, true});
  data.val = load_split(manifest, dir, Split::kVal, {fields, false});
  return data;
}

}  // namespace aerosdf::datagen

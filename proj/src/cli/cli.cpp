#include "aerosdf/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <memory>
#include <ostream>
#include <sstream>

#include "aerosdf/common/binary_io.hpp"
#include "aerosdf/common/log.hpp"
#include "aerosdf/common/parallel.hpp"
#include "aerosdf/datagen.hpp"
#include "aerosdf/evaluation.hpp"
#include "aerosdf/gradient_suite.hpp"
#include "aerosdf/mesh_io.hpp"

namespace aerosdf::cli {

namespace fs = std::filesystem;

namespace {

struct GridFlags {
  std::vector<std::uint32_t> dims{64, 16, 16};
  std::vector<double> origin{0.03125, -0.46875, 0.03125};
  std::vector<double> spacing{0.0625, 0.0625, 0.0625};

  sdf::GridSpec spec() const {
    sdf::GridSpec g;
    g.dims = {dims[0], dims[1], dims[2]};
    g.origin = {origin[0], origin[1], origin[2]};
    g.spacing = {spacing[0], spacing[1], spacing[2]};
    g.validate();
    return g;
  }
};

struct Options {
  std::uint64_t seed = 0;
  int workers = 0;
  bool quiet = false;
  bool verbose = false;
  bool dump_config = false;

  struct {
    std::string out;
    std::size_t samples = 40;
    double spoiler_fraction = 0.0;
    GridFlags grid;
    bool augment = false;
    double augmented_weight = 0.5;
    bool fields = false;
    bool no_voxelize = false;
    int rays = 11;
    std::size_t sobol_skip = 1;
    std::string id_prefix = "s";
  } gen;

  struct {
    std::string mesh;
    std::string out;
    std::string manifest;
    GridFlags grid;
    int rays = 11;
  } vox;

  struct {
    std::string manifest;
    std::string plan = "standard";
    double weight = 0.5;
    bool no_voxelize = false;
    int rays = 11;
  } aug;

  struct {
    std::string manifest;
    std::string out;
    bool predict_fields = false;
    std::size_t epochs = 300;
    double lr = 1e-3;
    std::size_t batch = 16;
    std::string optimizer = "adam";
    std::size_t depth = 3;
    std::size_t base_width = 8;
    std::size_t channel_multiplier = 2;
    std::size_t max_width = 512;
    std::size_t kernel = 3;
    std::size_t dilation = 2;
    std::size_t se_reduction = 2;
    std::size_t head_width = 64;
    double dropout = 0.1;
    double field_weight = 0.1;
    double plateau_factor = 0.5;
    std::size_t plateau_patience = 10;
    double min_lr = 1e-6;
    std::size_t early_stop_patience = 30;
  } train;

  struct {
    std::string checkpoint;
    std::string manifest;
    std::string split = "test";
    std::string out;
    std::size_t batch = 16;
  } eval;

  struct {
    std::string checkpoint;
    std::string manifest;
    std::string split = "test";
    std::string out;
    std::size_t edge = 10;
    std::size_t stride = 5;
    bool baseline_relative = false;
    double threshold = 0.1;
  } occ;

  struct {
    bool no_model = false;
  } grad;
};

struct Cli {
  CLI::App app{"Signed-distance-field U-Net surrogate for drag prediction", "aerosdf"};
  Options o;
  CLI::App* gen = nullptr;
  CLI::App* vox = nullptr;
  CLI::App* aug = nullptr;
  CLI::App* train = nullptr;
  CLI::App* eval = nullptr;
  CLI::App* occ = nullptr;
  CLI::App* grad = nullptr;
};

// Existence of input files is checked only for the selected subcommand; config
// sections of the other subcommands may name files that do not exist yet.
void check_input_files(const CLI::App& app) {
  for (const auto* sub : app.get_subcommands()) {
    for (const auto* opt : sub->get_options()) {
      if (opt->get_type_name() != "FILE" || opt->count() == 0) continue;
      const auto path = opt->as<std::string>();
      if (!fs::is_regular_file(path)) throw CLI::ValidationError(opt->get_name(), "File does not exist: " + path);
    }
  }
}

std::string version_string() {
  return std::string("aerosdf ") + kVersion + " (sdf3 v" + std::to_string(sdf::kVolumeVersion) + ", checkpoint v" +
         std::to_string(training::kCheckpointVersion) + ", manifest v" + std::to_string(datagen::kManifestVersion) +
         ")";
}

void add_grid(CLI::App* app, GridFlags& g) {
  app->add_option("--dims", g.dims, "Grid cells along x, y, z")->expected(3)->check(CLI::PositiveNumber)
      ->capture_default_str();
  app->add_option("--origin", g.origin, "Centre of cell (0, 0, 0)")->expected(3)->capture_default_str();
  app->add_option("--spacing", g.spacing, "Cell edge lengths")->expected(3)->check(CLI::PositiveNumber)
      ->capture_default_str();
}

std::unique_ptr<Cli> build() {
  auto c = std::make_unique<Cli>();
  auto& app = c->app;
  auto& o = c->o;
  app.set_version_flag("--version", version_string());
  app.set_config("--config", "", "TOML config file; [section] per subcommand, flags override it");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.require_subcommand(1);
  app.fallthrough();
  app.add_option("--seed", o.seed, "Seed for every random choice")->capture_default_str();
  app.add_option("--workers", o.workers, "Worker threads (0: all cores)")->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  app.add_flag("-q,--quiet", o.quiet, "Only report errors");
  app.add_flag("-v,--verbose", o.verbose, "Report progress");
  app.add_flag("--dump-config", o.dump_config, "Print the effective configuration and exit");

  c->gen = app.add_subcommand("gen-data", "Generate a synthetic data set and its manifest");
  auto* g = c->gen;
  g->add_option("--out", o.gen.out, "Output directory")->required();
  g->add_option("--samples", o.gen.samples, "Number of original shapes")->check(CLI::PositiveNumber)
      ->capture_default_str();
  g->add_option("--spoiler-fraction", o.gen.spoiler_fraction, "Fraction of shapes with a spoiler")
      ->check(CLI::Range(0.0, 1.0))->capture_default_str();
  add_grid(g, o.gen.grid);
  g->add_flag("--augment", o.gen.augment, "Add the 23 standard variants of every training shape");
  g->add_option("--augmented-weight", o.gen.augmented_weight, "Loss weight of augmented samples")
      ->check(CLI::Range(0.0, 1.0))->capture_default_str();
  g->add_flag("--fields", o.gen.fields, "Write velocity field targets");
  g->add_flag("--no-voxelize", o.gen.no_voxelize, "Write meshes only");
  g->add_option("--rays", o.gen.rays, "Sign-vote rays for open meshes")->check(CLI::PositiveNumber)
      ->capture_default_str();
  g->add_option("--sobol-skip", o.gen.sobol_skip, "First Sobol index of the design")->capture_default_str();
  g->add_option("--id-prefix", o.gen.id_prefix, "Sample id prefix")->capture_default_str();

  c->vox = app.add_subcommand("voxelize", "Compute signed distance volumes");
  auto* v = c->vox;
  auto* vmesh = v->add_option("--mesh", o.vox.mesh, "Mesh file (STL or OBJ)")->type_name("FILE");
  auto* vout = v->add_option("--out", o.vox.out, "Output volume for --mesh");
  auto* vman = v->add_option("--manifest", o.vox.manifest, "Fill in missing SDFs of a manifest")
                   ->type_name("FILE");
  vmesh->needs(vout);
  vout->needs(vmesh);
  vman->excludes(vmesh);
  add_grid(v, o.vox.grid);
  v->add_option("--rays", o.vox.rays, "Sign-vote rays for open meshes")->check(CLI::PositiveNumber)
      ->capture_default_str();

  c->aug = app.add_subcommand("augment", "Add augmented variants of the training shapes to a manifest");
  auto* a = c->aug;
  a->add_option("--manifest", o.aug.manifest, "Manifest to extend in place")->required()->type_name("FILE");
  a->add_option("--plan", o.aug.plan, "Augmentation plan")->check(CLI::IsMember({"standard"}))
      ->capture_default_str();
  a->add_option("--weight", o.aug.weight, "Loss weight of augmented samples")->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  a->add_flag("--no-voxelize", o.aug.no_voxelize, "Write meshes only");
  a->add_option("--rays", o.aug.rays, "Sign-vote rays for open meshes")->check(CLI::PositiveNumber)
      ->capture_default_str();

  c->train = app.add_subcommand("train", "Train a model; writes checkpoint.ckpt and epochs.csv");
  auto* t = c->train;
  auto& to = o.train;
  t->add_option("--manifest", to.manifest, "Data set manifest")->required()->type_name("FILE");
  t->add_option("--out", to.out, "Output directory")->required();
  t->add_flag("--predict-fields", to.predict_fields, "Add the three velocity decoders");
  t->add_option("--epochs", to.epochs, "Maximum epochs")->check(CLI::PositiveNumber)->capture_default_str();
  t->add_option("--lr", to.lr, "Initial learning rate")->check(CLI::PositiveNumber)->capture_default_str();
  t->add_option("--batch", to.batch, "Mini-batch size")->check(CLI::Range(2, 4096))->capture_default_str();
  t->add_option("--optimizer", to.optimizer, "adam or nadam")->check(CLI::IsMember({"adam", "nadam"}))
      ->capture_default_str();
  t->add_option("--depth", to.depth, "Encoder blocks")->check(CLI::PositiveNumber)->capture_default_str();
  t->add_option("--base-width", to.base_width, "Channels after the first convolution")->check(CLI::PositiveNumber)
      ->capture_default_str();
  t->add_option("--channel-multiplier", to.channel_multiplier, "Channel growth per block")
      ->check(CLI::PositiveNumber)->capture_default_str();
  t->add_option("--max-width", to.max_width, "Channel cap")->check(CLI::PositiveNumber)->capture_default_str();
  t->add_option("--kernel", to.kernel, "Convolution kernel size")->check(CLI::PositiveNumber)->capture_default_str();
  t->add_option("--dilation", to.dilation, "Encoder convolution dilation")->check(CLI::PositiveNumber)
      ->capture_default_str();
  t->add_option("--se-reduction", to.se_reduction, "Squeeze-excitation reduction")->check(CLI::PositiveNumber)
      ->capture_default_str();
  t->add_option("--head-width", to.head_width, "Hidden units of the drag head")->check(CLI::PositiveNumber)
      ->capture_default_str();
  t->add_option("--dropout", to.dropout, "Dropout rate")->check(CLI::Range(0.0, 0.99))->capture_default_str();
  t->add_option("--field-weight", to.field_weight, "Weight of the field loss")->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  t->add_option("--plateau-factor", to.plateau_factor, "Learning-rate decay factor")
      ->check(CLI::Range(0.0, 1.0))->capture_default_str();
  t->add_option("--plateau-patience", to.plateau_patience, "Epochs without improvement before decay")
      ->capture_default_str();
  t->add_option("--min-lr", to.min_lr, "Learning-rate floor")->check(CLI::NonNegativeNumber)->capture_default_str();
  t->add_option("--early-stop-patience", to.early_stop_patience, "Epochs without improvement before stopping")
      ->check(CLI::PositiveNumber)->capture_default_str();

  c->eval = app.add_subcommand("eval", "Report drag metrics and write the correlation CSV");
  auto* e = c->eval;
  e->add_option("--checkpoint", o.eval.checkpoint, "Trained checkpoint")->required()->type_name("FILE");
  e->add_option("--manifest", o.eval.manifest, "Data set manifest")->required()->type_name("FILE");
  e->add_option("--split", o.eval.split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}))
      ->capture_default_str();
  e->add_option("--out", o.eval.out, "Directory for metrics.txt and correlation.csv");
  e->add_option("--batch", o.eval.batch, "Inference batch size")->check(CLI::PositiveNumber)->capture_default_str();

  c->occ = app.add_subcommand("occlude", "Occlusion sensitivity of the drag prediction");
  auto* oc = c->occ;
  oc->add_option("--checkpoint", o.occ.checkpoint, "Trained checkpoint")->required()->type_name("FILE");
  oc->add_option("--manifest", o.occ.manifest, "Data set manifest")->required()->type_name("FILE");
  oc->add_option("--split", o.occ.split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}))
      ->capture_default_str();
  oc->add_option("--out", o.occ.out, "Directory for occlusion.sdf3 and occlusion.csv")->required();
  oc->add_option("--edge", o.occ.edge, "Cube edge in cells")->check(CLI::PositiveNumber)->capture_default_str();
  oc->add_option("--stride", o.occ.stride, "Cube stride in cells")->check(CLI::PositiveNumber)->capture_default_str();
  oc->add_flag("--baseline-relative", o.occ.baseline_relative, "Scale by the MAE increase over the baseline");
  oc->add_option("--threshold", o.occ.threshold, "Lower bound for the covered-volume report")
      ->check(CLI::Range(0.0, 1.0))->capture_default_str();

  c->grad = app.add_subcommand("gradcheck", "Finite-difference check of every autodiff primitive");
  c->grad->add_flag("--no-model", o.grad.no_model, "Skip the tiny U-Net check");
  return c;
}

void write_text(const fs::path& path, const std::string& text) {
  io::write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

void make_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());
}

void report_failures(const std::vector<datagen::GenerationFailure>& failures, std::ostream& err) {
  if (!failures.empty()) err << failures.size() << " sample(s) failed; see the warnings above\n";
}

int cmd_gen_data(const Options& o, std::ostream& out, std::ostream& err) {
  datagen::DatasetOptions d;
  d.n_samples = o.gen.samples;
  d.spoiler_fraction = o.gen.spoiler_fraction;
  d.grid = o.gen.grid.spec();
  d.augment = o.gen.augment;
  d.augmented_weight = o.gen.augmented_weight;
  d.fields = o.gen.fields;
  d.voxelize = !o.gen.no_voxelize;
  d.n_rays = o.gen.rays;
  d.seed = o.seed;
  d.sobol_skip = o.gen.sobol_skip;
  d.id_prefix = o.gen.id_prefix;
  std::vector<datagen::GenerationFailure> failures;
  const auto manifest = datagen::generate_dataset(d, o.gen.out, &failures);
  const auto path = fs::path(o.gen.out) / "manifest.json";
  datagen::write_manifest(manifest, path);
  report_failures(failures, err);
  out << "manifest=" << path.string() << "\nrecords=" << manifest.samples.size() << "\n";
  return 0;
}

int cmd_voxelize(const Options& o, std::ostream& out) {
  if (!o.vox.mesh.empty()) {
    const auto mesh = mesh::load_mesh(o.vox.mesh);
    sdf::write_volume(sdf::generate_sdf(mesh, o.vox.grid.spec(), o.vox.rays), o.vox.out);
    out << "volume=" << o.vox.out << "\n";
    return 0;
  }
  if (o.vox.manifest.empty()) throw Error("voxelize needs --mesh with --out, or --manifest");
  const fs::path path = o.vox.manifest;
  const fs::path dir = path.parent_path();
  auto manifest = datagen::read_manifest(path);
  std::error_code ec;
  fs::create_directories(dir / "sdf", ec);
  std::size_t written = 0;
  for (auto& r : manifest.samples) {
    if (!r.sdf.empty()) continue;
    r.sdf = "sdf/" + r.id + ".sdf3";
    sdf::write_volume(sdf::generate_sdf(mesh::load_mesh(dir / r.mesh), manifest.grid, o.vox.rays), dir / r.sdf);
    log::info("voxelized " + r.id);
    ++written;
  }
  datagen::write_manifest(manifest, path);
  out << "voxelized=" << written << "\n";
  return 0;
}

int cmd_augment(const Options& o, std::ostream& out, std::ostream& err) {
  const fs::path path = o.aug.manifest;
  auto manifest = datagen::read_manifest(path);
  datagen::AugmentOptions a;
  a.weight = o.aug.weight;
  a.seed = o.seed;
  a.voxelize = !o.aug.no_voxelize;
  a.n_rays = o.aug.rays;
  std::vector<datagen::GenerationFailure> failures;
  const auto added = datagen::augment_manifest(manifest, path.parent_path(), a, &failures);
  datagen::write_manifest(manifest, path);
  report_failures(failures, err);
  out << "added=" << added << "\nrecords=" << manifest.samples.size() << "\n";
  return 0;
}

int cmd_train(const Options& o, std::ostream& out) {
  const auto& t = o.train;
  unet::UNetConfig config;
  training::TrainConfig tc;
  const fs::path path = t.manifest;
  const auto manifest = datagen::read_manifest(path);
  config.dims = {manifest.grid.dims[0], manifest.grid.dims[1], manifest.grid.dims[2]};
  config.base_width = t.base_width;
  config.channel_multiplier = t.channel_multiplier;
  config.max_width = t.max_width;
  config.depth = t.depth;
  config.kernel = t.kernel;
  config.dilation = t.dilation;
  config.se_reduction = t.se_reduction;
  config.head_width = t.head_width;
  config.dropout = t.dropout;
  config.predict_fields = t.predict_fields;
  config.seed = o.seed;
  config.validate();
  tc.optimizer = training::parse_optimizer(t.optimizer);
  tc.learning_rate = t.lr;
  tc.batch_size = t.batch;
  tc.max_epochs = t.epochs;
  tc.plateau_factor = t.plateau_factor;
  tc.plateau_patience = t.plateau_patience;
  tc.min_lr = t.min_lr;
  tc.early_stop_patience = t.early_stop_patience;
  tc.field_loss_weight = t.field_weight;
  tc.seed = o.seed;
  tc.validate();
  make_dir(t.out);

  const auto data = datagen::load_training_data(manifest, path.parent_path(), t.predict_fields);
  unet::UNetModel<float> model(config);
  const auto result = training::train(model, data, tc, [](const training::EpochRecord& r) {
    char line[160];
    std::snprintf(line, sizeof line, "epoch %zu  train %.6g  val %.6g  lr %.3g  %.1fs", r.epoch, r.train_loss,
                  r.val_loss, r.lr, r.seconds);
    log::info(line);
  });
  const fs::path dir = t.out;
  training::save_checkpoint(result.best, dir / "checkpoint.ckpt");
  training::write_epoch_log(result.log, dir / "epochs.csv");
  out << "checkpoint=" << (dir / "checkpoint.ckpt").string() << "\nbest_epoch=" << result.best_epoch
      << "\nbest_val=" << result.best_val << "\n";
  return 0;
}

struct Loaded {
  unet::UNetModel<float> model;
  std::vector<training::Sample> samples;
  sdf::GridSpec grid;
};

Loaded load_for_eval(const std::string& checkpoint, const std::string& manifest_path, const std::string& split,
                     bool need_fields) {
  auto model = training::model_from_checkpoint(training::load_checkpoint(checkpoint));
  const fs::path path = manifest_path;
  const auto manifest = datagen::read_manifest(path);
  const auto& d = manifest.grid.dims;
  const auto& m = model.config().dims;
  if (m[0] != d[0] || m[1] != d[1] || m[2] != d[2]) {
    throw Error("checkpoint grid " + std::to_string(m[0]) + "x" + std::to_string(m[1]) + "x" + std::to_string(m[2]) +
                " does not match the manifest grid");
  }
  datagen::LoadOptions lo;
  lo.fields = need_fields && model.config().predict_fields;
  lo.include_augmented = false;
  auto samples = datagen::load_split(manifest, path.parent_path(), datagen::parse_split(split), lo);
  if (samples.empty()) throw Error("split '" + split + "' of " + manifest_path + " has no samples");
  return {std::move(model), std::move(samples), manifest.grid};
}

int cmd_eval(const Options& o, std::ostream& out) {
  const auto loaded = load_for_eval(o.eval.checkpoint, o.eval.manifest, o.eval.split, true);
  const auto report = evaluation::evaluate(loaded.model, loaded.samples, o.eval.split, o.eval.batch);
  const std::string text = evaluation::report_text(report);
  if (!o.eval.out.empty()) {
    make_dir(o.eval.out);
    write_text(fs::path(o.eval.out) / "metrics.txt", text);
    evaluation::export_correlation_csv(report, fs::path(o.eval.out) / "correlation.csv");
  }
  out << text;
  return 0;
}

int cmd_occlude(const Options& o, std::ostream& out) {
  const auto loaded = load_for_eval(o.occ.checkpoint, o.occ.manifest, o.occ.split, false);
  evaluation::OcclusionOptions opts;
  opts.edge = o.occ.edge;
  opts.stride = o.occ.stride;
  opts.baseline_relative = o.occ.baseline_relative;
  const auto map = evaluation::occlusion_sensitivity(loaded.model, loaded.samples, opts);
  make_dir(o.occ.out);
  const fs::path dir = o.occ.out;
  evaluation::export_occlusion_volume(map, loaded.grid, dir / "occlusion.sdf3");
  write_text(dir / "occlusion.csv", evaluation::occlusion_csv(map));
  const auto selected = evaluation::threshold_map(map, o.occ.threshold, 1.0);
  char text[256];
  std::snprintf(text, sizeof text,
                "positions=%zu\npositions_x=%zu\npositions_y=%zu\npositions_z=%zu\nbaseline_mae=%.17g\n"
                "threshold=%.17g\ncovered_fraction=%.17g\n",
                map.size(), map.dims[0], map.dims[1], map.dims[2], map.baseline_mae, o.occ.threshold,
                selected.covered_fraction);
  out << text;
  return 0;
}

int cmd_gradcheck(const Options& o, std::ostream& out) {
  const auto rows = ad::run_gradient_suite(!o.grad.no_model);
  out << ad::suite_table(rows);
  const bool ok = std::all_of(rows.begin(), rows.end(), [](const ad::SuiteRow& r) { return r.passed(); });
  return ok ? 0 : 1;
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  while (!s.empty() && s.back() == ' ') s.pop_back();
  return s;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  auto cli = build();
  auto& app = cli->app;
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
    check_input_files(app);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << version_string() << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << one_line(e.what()) << "\n";
    return 2;
  }

  const auto& o = cli->o;
  if (o.quiet && o.verbose) {
    err << "error: --quiet and --verbose are mutually exclusive\n";
    return 2;
  }
  if (o.dump_config) {
    out << "seed = " << o.seed << "\nworkers = " << o.workers << "\n";
    if (o.quiet) out << "quiet = true\n";
    if (o.verbose) out << "verbose = true\n";
    for (auto* sub : app.get_subcommands()) out << "\n[" << sub->get_name() << "]\n" << sub->config_to_str(true, false);
    return 0;
  }
  log::set_level(o.quiet ? log::Level::kQuiet : (o.verbose ? log::Level::kInfo : log::Level::kWarning));
  parallel::WorkerScope workers(o.workers > 0 ? o.workers : parallel::max_workers());
  try {
    if (cli->gen->parsed()) return cmd_gen_data(o, out, err);
    if (cli->vox->parsed()) return cmd_voxelize(o, out);
    if (cli->aug->parsed()) return cmd_augment(o, out, err);
    if (cli->train->parsed()) return cmd_train(o, out);
    if (cli->eval->parsed()) return cmd_eval(o, out);
    if (cli->occ->parsed()) return cmd_occlude(o, out);
    if (cli->grad->parsed()) return cmd_gradcheck(o, out);
  } catch (const std::exception& e) {
    err << "error: " << one_line(e.what()) << "\n";
    return 1;
  }
  return 2;
}

std::string help_text(const std::string& subcommand) {
  if (subcommand.empty()) return build()->app.help();
  std::ostringstream out, err;
  if (run({subcommand, "--help"}, out, err) != 0) throw Error("unknown subcommand '" + subcommand + "'");
  return out.str();
}

std::vector<std::string> subcommands() {
  auto cli = build();
  std::vector<std::string> names;
  for (const auto* s : cli->app.get_subcommands({})) names.push_back(s->get_name());
  return names;
}

}  // namespace aerosdf::cli

// gcnn: dataset synthesis, training, cross-validation, rotation/projection
// preprocessing, transfer experiments, statistics and self-verification.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "gcnn/checkpoint.hpp"
#include "gcnn/dataset_io.hpp"
#include "gcnn/error.hpp"
#include "gcnn/experiments.hpp"
#include "gcnn/stats.hpp"
#include "gcnn/surfdata.hpp"
#include "gcnn/verify.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gcnn;

namespace {

constexpr const char* kVersion = "1.0.0";

// ---- manifest -------------------------------------------------------------------

std::string file_hash(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::uint64_t h = 1469598103934665603ull;
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
  }
  std::ostringstream os;
  os << "fnv1a64:" << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

std::string utc_timestamp() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct Manifest {
  std::string command;
  json config = json::object();
  json inputs = json::object();
  json outputs = json::array();
  json provenance = json::object();

  void input(const std::string& role, const fs::path& p) {
    inputs[role] = {{"path", p.string()}, {"hash", file_hash(p)}};
    // Carry the manifest of an upstream command (rotation provenance etc.).
    const fs::path upstream = p.parent_path() / "manifest.json";
    if (fs::exists(upstream)) {
      std::ifstream in(upstream);
      try {
        const json up = json::parse(in);
        provenance[role] = {{"command", up.value("command", "")}, {"config", up.value("config", json::object())},
                            {"provenance", up.value("provenance", json::object())}};
      } catch (const json::exception&) {
      }
    }
  }
  void output(const fs::path& p) { outputs.push_back(p.string()); }

  void write(const fs::path& dir) const {
    json j{{"command", command},          {"config", config},       {"inputs", inputs},
           {"outputs", outputs},          {"provenance", provenance}, {"tool", "gcnn"},
           {"version", kVersion},         {"timestamp", utc_timestamp()}};
    std::ofstream out(dir / "manifest.json");
    if (!out) throw DataError("cannot write " + (dir / "manifest.json").string());
    out << j.dump(2) << '\n';
  }
};

fs::path prepare_out(const std::string& dir) {
  if (dir.empty()) throw ConfigError("--out is required");
  fs::create_directories(dir);
  return dir;
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
}

std::size_t resolve_threads(int flag) {
  if (flag > 0) return static_cast<std::size_t>(flag);
  if (const char* env = std::getenv("GCNN_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return static_cast<std::size_t>(v);
  }
  return 1;
}

// ---- mesh-info ----------------------------------------------------------------

struct MeshInfoArgs {
  int level = 0;
  std::string export_path;
};

int cmd_mesh_info(const MeshInfoArgs& a) {
  if (a.level < 0 || a.level > kMaxIcosphereLevel)
    throw ConfigError("level must lie in 0.." + std::to_string(kMaxIcosphereLevel));
  const IcosphereHierarchy h = IcosphereHierarchy::build(a.level);
  const IcosphereLevel& lvl = h.level(a.level);
  std::map<std::size_t, std::size_t> hist;
  for (std::size_t n = 0; n < lvl.node_count(); ++n) ++hist[lvl.degree(static_cast<NodeIndex>(n))];
  std::cout << "level: " << a.level << '\n'
            << "nodes: " << lvl.node_count() << '\n'
            << "faces: " << lvl.faces.size() << '\n'
            << "edges: " << lvl.edge_count() << '\n'
            << "pentagon nodes: " << hist[5] << ", hexagon nodes: " << hist[6] << '\n'
            << "degree histogram:";
  for (const auto& [deg, count] : hist) std::cout << ' ' << deg << ':' << count;
  std::cout << '\n' << "mean edge length: " << std::setprecision(8) << lvl.mean_edge_length() << " rad\n";
  if (!a.export_path.empty()) {
    std::ofstream out(a.export_path);
    if (!out) throw DataError("cannot write " + a.export_path);
    lvl.write_obj(out);
    std::cout << "wrote " << a.export_path << '\n';
  }
  return 0;
}

// ---- synth --------------------------------------------------------------------

struct SynthArgs {
  int level = 4;
  std::size_t samples = 600;
  std::uint64_t seed = 1;
  bool noise_free = false;
  double noise_scale = 1.0;
  double mask_cap = 0.0;
  std::string out;
};

int cmd_synth(const SynthArgs& a) {
  if (a.level < 0 || a.level > kMaxIcosphereLevel) throw ConfigError("invalid level");
  if (a.noise_scale < 0) throw ConfigError("noise scale must be non-negative");
  SynthSpec spec = a.noise_free ? noise_free_synth_spec(a.level, a.samples, a.seed)
                                : default_synth_spec(a.level, a.samples, a.seed);
  spec.noise.field_amplitude *= a.noise_scale;
  spec.noise.offset_sd *= a.noise_scale;
  spec.noise.pixel_sd *= a.noise_scale;
  spec.noise.center_jitter_degrees *= a.noise_scale;
  spec.noise.amplitude_jitter = std::min(1.0, spec.noise.amplitude_jitter * a.noise_scale);
  spec.mask_cap_degrees = a.mask_cap;
  const fs::path dir = prepare_out(a.out);
  const IcosphereHierarchy h = IcosphereHierarchy::build(a.level);
  const auto maps = synthesize_dataset(h.level(a.level), spec);
  save_node_maps(dir / "dataset.gsrf", maps);
  std::size_t counts[2] = {0, 0};
  for (const auto& m : maps) ++counts[*m.label == 0 ? 0 : 1];

  Manifest man;
  man.command = "synth";
  man.config = {{"level", a.level},         {"samples", a.samples},      {"seed", a.seed},
                {"noise_free", a.noise_free}, {"noise_scale", a.noise_scale}, {"mask_cap_degrees", a.mask_cap}};
  man.output(dir / "dataset.gsrf");
  man.write(dir);
  std::cout << "wrote " << maps.size() << " samples (class 0: " << counts[0] << ", class 1: " << counts[1] << ") to "
            << (dir / "dataset.gsrf").string() << '\n';
  return 0;
}

// ---- rotate / project ------------------------------------------------------------

struct RotateArgs {
  std::string data;
  std::string axis = "z";
  double degrees = 0.0;
  std::string out;
};

int cmd_rotate(const RotateArgs& a) {
  if (a.axis.size() != 1) throw ConfigError("axis must be x, y or z");
  const Rotation q = Rotation::about(a.axis[0], a.degrees);
  const auto maps = load_node_maps(a.data);
  const fs::path dir = prepare_out(a.out);
  std::vector<NodeMap> rotated;
  if (!maps.empty()) {
    const IcosphereHierarchy h = IcosphereHierarchy::build(maps.front().level);
    const MapRotator rot(h.level(maps.front().level), q);
    for (const auto& m : maps) rotated.push_back(rot.apply(m));
  }
  save_node_maps(dir / "dataset.gsrf", rotated);
  Manifest man;
  man.command = "rotate";
  man.config = {{"axis", a.axis}, {"degrees", a.degrees}};
  man.input("data", a.data);
  man.provenance["rotation"] = {{"axis", a.axis}, {"degrees", a.degrees}};
  man.output(dir / "dataset.gsrf");
  man.write(dir);
  std::cout << "rotated " << rotated.size() << " samples by " << a.degrees << " degrees about " << a.axis << '\n';
  return 0;
}

struct ProjectArgs {
  std::string data;
  std::size_t width = 112, height = 112, pad = 5;
  bool demean_first = true;
  std::string out;
};

int cmd_project(const ProjectArgs& a) {
  const auto maps = load_node_maps(a.data);
  const fs::path dir = prepare_out(a.out);
  std::vector<ImageSample> images;
  if (!maps.empty()) {
    const IcosphereHierarchy h = IcosphereHierarchy::build(maps.front().level);
    const EquirectangularProjector proj(h.level(maps.front().level), a.width, a.height, a.pad);
    for (const auto& m : maps)
      images.push_back({proj.apply(a.demean_first ? demean(m) : m), m.label, m.sample_id});
  }
  save_images(dir / "images.gimg", images);
  Manifest man;
  man.command = "project";
  man.config = {{"width", a.width}, {"height", a.height}, {"pad", a.pad}, {"demean", a.demean_first}};
  man.input("data", a.data);
  man.output(dir / "images.gimg");
  man.write(dir);
  std::cout << "projected " << images.size() << " samples to " << a.height + 2 * a.pad << " x "
            << a.width + 2 * a.pad << " images\n";
  return 0;
}

// ---- train / crossval / transfer ---------------------------------------------------

struct RunArgs {
  std::string data, arch = "gcnn", config, out, checkpoint;
  int threads = 0;
  // Overrides; applied only when given on the command line.
  std::size_t folds = 10, fold = 0, batch = 50, epochs = 40, extended = 70, window = 5, filters = 0, hidden = 0;
  std::size_t width = 112, height = 112, pad = 5, freeze = 0;
  int blocks = 0, patch = 0;
  double test_fraction = 63.0 / 733.0, lr = 0.02, lr_fine = 0.001;
  std::uint64_t seed = 1, split_seed = 1;
  bool no_demean = false;
  CLI::App* app = nullptr;
  bool given(const std::string& flag) const {
    try {
      return app->count(flag) > 0;
    } catch (const CLI::OptionNotFound&) {
      return false;
    }
  }
};

struct Resolved {
  json config;
  LabeledSet data;
  int level = -1;
  Shape image_dims;
};

json resolve_config(const RunArgs& a) {
  json cfg = a.config.empty() ? json::object() : read_json_file(a.config);
  auto set = [&](const char* section, const char* key, const std::string& flag, auto value) {
    if (a.given(flag) || !cfg[section].contains(key)) cfg[section][key] = value;
  };
  if (a.given("--arch") || !cfg.contains("arch")) cfg["arch"] = a.arch;
  if (cfg["arch"] != "gcnn" && cfg["arch"] != "pcnn") throw ConfigError("--arch must be gcnn or pcnn");
  set("split", "folds", "--folds", a.folds);
  set("split", "test_fraction", "--test-fraction", a.test_fraction);
  set("split", "seed", "--split-seed", a.split_seed);
  set("train", "batch_size", "--batch", a.batch);
  set("train", "max_epochs", "--epochs", a.epochs);
  set("train", "extended_epochs", "--extended-epochs", a.extended);
  set("train", "lr_initial", "--lr", a.lr);
  set("train", "lr_fine", "--lr-fine", a.lr_fine);
  set("train", "saturation_window", "--window", a.window);
  set("train", "seed", "--seed", a.seed);
  set("projection", "width", "--width", a.width);
  set("projection", "height", "--height", a.height);
  set("projection", "pad", "--pad", a.pad);
  if (a.given("--no-demean") || !cfg.contains("demean")) cfg["demean"] = !a.no_demean;
  if (!cfg.contains("model")) cfg["model"] = json::object();
  if (a.given("--filters")) cfg["model"]["filters"] = a.filters;
  if (a.given("--hidden")) cfg["model"]["hidden"] = a.hidden;
  if (a.given("--blocks")) cfg["model"]["blocks"] = a.blocks;
  if (a.given("--patch")) cfg["model"]["patch"] = {{"kind", "rectangular"}, {"sx", a.patch}, {"sy", a.patch}};
  if (a.given("--seed")) cfg["model"]["seed"] = a.seed;
  return cfg;
}

Resolved load_run_data(const std::string& path, json& cfg) {
  Resolved r;
  const std::string magic = file_magic(path);
  if (magic == "GSRF") {
    const auto maps = load_node_maps(path);
    if (maps.empty()) throw DataError(path + " holds no samples");
    r.level = maps.front().level;
    if (cfg["arch"] == "gcnn") {
      r.data = labeled_from_maps(maps, cfg["demean"].get<bool>());
    } else {
      const IcosphereHierarchy h = IcosphereHierarchy::build(r.level);
      const auto& p = cfg["projection"];
      const EquirectangularProjector proj(h.level(r.level), p["width"], p["height"], p["pad"]);
      std::vector<ImageSample> images;
      for (const auto& m : maps) images.push_back({proj.apply(cfg["demean"].get<bool>() ? demean(m) : m), m.label, m.sample_id});
      r.data = labeled_from_images(images);
    }
  } else if (magic == "GIMG") {
    if (cfg["arch"] != "pcnn") throw ConfigError("image datasets need --arch pcnn");
    r.data = labeled_from_images(load_images(path));
    if (r.data.size() == 0) throw DataError(path + " holds no samples");
  } else {
    throw FormatError(path + ": unknown dataset magic '" + magic + "'");
  }
  if (!r.data.inputs.empty()) r.image_dims = r.data.inputs.front().dims();
  return r;
}

std::size_t class_count(const LabeledSet& s) {
  int m = 1;
  for (int l : s.labels) m = std::max(m, l);
  return static_cast<std::size_t>(m + 1);
}

// Fills model defaults that depend on the data and returns a builder.
ModelBuilder make_builder(json& cfg, const Resolved& r, std::shared_ptr<const IcosphereHierarchy>& hierarchy) {
  json& mc = cfg["model"];
  mc["arch"] = cfg["arch"];
  if (!mc.contains("classes")) mc["classes"] = class_count(r.data);
  if (cfg["arch"] == "gcnn") {
    if (r.image_dims.size() != 2) throw ConfigError("gCNN needs node-map data");
    if (!mc.contains("input_level")) mc["input_level"] = r.level;
    if (!mc.contains("channels")) mc["channels"] = r.image_dims[1];
    if (!mc.contains("blocks")) mc["blocks"] = std::clamp(mc["input_level"].get<int>() - 1, 1, 5);
    GcnnConfig g = mc.get<GcnnConfig>();
    mc = json(g);
    hierarchy = std::make_shared<const IcosphereHierarchy>(IcosphereHierarchy::build(g.input_level));
    auto h = hierarchy;
    return [g, h](std::uint64_t seed) {
      GcnnConfig c = g;
      c.seed = seed;
      return build_gcnn(h, c);
    };
  }
  if (r.image_dims.size() != 3) throw ConfigError("pCNN needs image data");
  mc["height"] = r.image_dims[0];
  mc["width"] = r.image_dims[1];
  mc["channels"] = r.image_dims[2];
  PcnnConfig p = mc.get<PcnnConfig>();
  mc = json(p);
  return [p](std::uint64_t seed) {
    PcnnConfig c = p;
    c.seed = seed;
    return build_pcnn(c);
  };
}

void print_shape_chain(const Model& m) {
  std::cout << "layer table:\n";
  for (const auto& d : m.describe())
    std::cout << "  " << std::setw(2) << d.row << "  " << std::left << std::setw(28) << d.name << std::right << ' '
              << std::setw(16) << d.geometry << "  -> " << shape_string(d.output) << (d.frozen ? "  (frozen)" : "")
              << '\n';
}

void report_folds(const CrossValResult& cv) {
  for (const auto& r : cv.records)
    std::cout << "fold " << r.fold << ": chosen epoch " << r.chosen_epoch << ", val error "
              << r.val_error.at(r.chosen_epoch - 1) << ", test accuracy " << r.test_accuracy << '\n';
  std::cout << "mean test accuracy " << cv.summary.mean << " (sd " << cv.summary.sd << ", " << cv.summary.n
            << " folds)\n";
}

int cmd_train_like(RunArgs& a, const std::string& command) {
  json cfg = resolve_config(a);
  Resolved r = load_run_data(a.data, cfg);
  std::shared_ptr<const IcosphereHierarchy> hierarchy;
  const ModelBuilder builder = make_builder(cfg, r, hierarchy);
  const TrainConfig tc = cfg["train"].get<TrainConfig>();
  tc.validate();
  const FoldPlan plan = stratified_split(r.data.labels, cfg["split"]["folds"], cfg["split"]["test_fraction"],
                                         cfg["split"]["seed"]);
  const fs::path dir = prepare_out(a.out);
  print_shape_chain(builder(tc.seed));
  const std::size_t threads = resolve_threads(a.threads);
  cfg["threads"] = threads;

  CrossValResult cv;
  if (command == "train") {
    if (a.fold >= plan.validation.size()) throw ConfigError("--fold outside the fold plan");
    cfg["fold"] = a.fold;
    Model model = builder(tc.seed);
    RunRecord rec = train(model, r.data.subset(plan.training(a.fold)), r.data.subset(plan.validation[a.fold]), tc);
    rec.fold = a.fold;
    const Evaluation ev = evaluate(model, r.data.subset(plan.test));
    rec.test_accuracy = ev.accuracy();
    rec.confusion = ev.confusion;
    rec.config_hash = config_hash(cfg);
    cv.records.push_back(rec);
    cv.summary = stats::summarize({rec.test_accuracy});
    cv.models.push_back(std::move(model));
  } else {
    cv = cross_validate(builder, r.data, plan, tc, threads, true);
  }
  report_folds(cv);

  std::size_t best = 0;
  for (std::size_t i = 1; i < cv.records.size(); ++i)
    if (cv.records[i].test_accuracy > cv.records[best].test_accuracy) best = i;
  save_checkpoint(cv.models.at(best), dir / "model.ckpt");
  write_records_json(dir / "records.json", cv, {{"command", command}, {"config", cfg}, {"checkpoint_fold", cv.records[best].fold}});
  write_curves_csv(dir / "curves.csv", cv.records);

  Manifest man;
  man.command = command;
  man.config = cfg;
  man.input("data", a.data);
  if (!a.config.empty()) man.input("config", a.config);
  for (const char* f : {"model.ckpt", "records.json", "curves.csv"}) man.output(dir / f);
  man.write(dir);
  return 0;
}

int cmd_transfer(RunArgs& a) {
  if (a.checkpoint.empty()) throw ConfigError("--checkpoint is required");
  const Model base = load_checkpoint(a.checkpoint);
  a.arch = base.is_gcnn() ? "gcnn" : "pcnn";
  json cfg = resolve_config(a);
  cfg["arch"] = a.arch;
  if (!base.is_gcnn()) {
    const auto& p = std::get<PcnnConfig>(base.config());
    // Node-map input is projected to whatever the checkpoint was trained on.
    const auto pad = cfg["projection"]["pad"].get<std::size_t>();
    if (!a.given("--width")) cfg["projection"]["width"] = p.width - 2 * pad;
    if (!a.given("--height")) cfg["projection"]["height"] = p.height - 2 * pad;
  }
  Resolved r = load_run_data(a.data, cfg);
  if (base.is_gcnn() && r.level != std::get<GcnnConfig>(base.config()).input_level)
    throw ConfigError("dataset level " + std::to_string(r.level) + " does not match the checkpoint");
  const std::size_t freeze = a.given("--freeze") ? a.freeze : base.head_start();
  cfg["freeze"] = freeze;
  const TrainConfig tc = cfg["train"].get<TrainConfig>();
  const FoldPlan plan = stratified_split(r.data.labels, cfg["split"]["folds"], cfg["split"]["test_fraction"],
                                         cfg["split"]["seed"]);
  const fs::path dir = prepare_out(a.out);
  Model shown = base;
  shown.freeze_prefix(freeze);
  print_shape_chain(shown);
  const std::size_t threads = resolve_threads(a.threads);
  cfg["threads"] = threads;
  const CrossValResult cv = transfer_experiment(base, r.data, freeze, plan, tc, threads);
  report_folds(cv);
  write_records_json(dir / "records.json", cv, {{"command", "transfer"}, {"config", cfg}});
  write_curves_csv(dir / "curves.csv", cv.records);
  Manifest man;
  man.command = "transfer";
  man.config = cfg;
  man.input("checkpoint", a.checkpoint);
  man.input("data", a.data);
  for (const char* f : {"records.json", "curves.csv"}) man.output(dir / f);
  man.write(dir);
  return 0;
}

// ---- stats ----------------------------------------------------------------------

struct StatsArgs {
  std::vector<std::string> records;
  std::string csv;
};

int cmd_stats(const StatsArgs& a) {
  if (a.records.size() < 2) throw ConfigError("stats needs at least two record files");
  std::vector<std::vector<double>> groups;
  for (const auto& p : a.records) groups.push_back(read_fold_accuracies(p));
  for (std::size_t i = 1; i < groups.size(); ++i)
    if (groups[i].size() != groups[0].size())
      std::cerr << "warning: fold counts differ (" << groups[0].size() << " vs " << groups[i].size()
                << "); running an unbalanced ANOVA\n";
  const auto anova = stats::one_way_anova(groups);
  const auto pairs = stats::bonferroni_pairwise(groups);
  std::cout << std::setprecision(6);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto s = stats::summarize(groups[g]);
    std::cout << "group " << g << " (" << a.records[g] << "): n " << s.n << ", mean " << s.mean << ", sd " << s.sd
              << '\n';
  }
  std::cout << "F(" << anova.df_between << "," << anova.df_within << ") = " << anova.f << " (p = " << anova.p << ")\n";
  std::cout << "pairwise (pooled t, Bonferroni x" << pairs.size() << "):\n";
  for (const auto& p : pairs)
    std::cout << "  " << p.first << " vs " << p.second << ": t(" << p.df << ") = " << p.t << ", p = " << p.p_raw
              << ", corrected p = " << p.p_corrected << '\n';
  if (!a.csv.empty()) {
    std::ofstream out(a.csv);
    if (!out) throw DataError("cannot write " + a.csv);
    out << std::setprecision(17) << "test,first,second,statistic,df1,df2,p,p_corrected\n";
    out << "anova,,," << anova.f << ',' << anova.df_between << ',' << anova.df_within << ',' << anova.p << ','
        << anova.p << '\n';
    for (const auto& p : pairs)
      out << "t," << p.first << ',' << p.second << ',' << p.t << ',' << p.df << ",," << p.p_raw << ','
          << p.p_corrected << '\n';
  }
  return 0;
}

// ---- verify ---------------------------------------------------------------------

int cmd_verify(const std::string& suite) {
  const auto results = verify::run_suite(suite);
  bool ok = true;
  for (const auto& r : results) {
    std::cout << (r.passed ? "PASS" : "FAIL") << "  [" << r.suite << "] " << r.name << ": " << r.detail << '\n';
    ok = ok && r.passed;
  }
  return ok ? 0 : 1;
}

void add_run_options(CLI::App* sub, RunArgs& a, bool with_data_arch) {
  if (with_data_arch) sub->add_option("--arch", a.arch, "gcnn or pcnn")->check(CLI::IsMember({"gcnn", "pcnn"}));
  sub->add_option("--data", a.data, "GSRF node maps or GIMG images")->required();
  sub->add_option("--config", a.config, "JSON config (flags override it)");
  sub->add_option("--out", a.out, "output directory")->required();
  sub->add_option("--threads", a.threads, "worker threads (also GCNN_THREADS)");
  sub->add_option("--folds", a.folds, "k for k-fold cross-validation");
  sub->add_option("--test-fraction", a.test_fraction, "held-out test fraction");
  sub->add_option("--split-seed", a.split_seed, "seed of the stratified split");
  sub->add_option("--seed", a.seed, "base seed for initialization and shuffling");
  sub->add_option("--batch", a.batch, "mini-batch size");
  sub->add_option("--epochs", a.epochs, "epochs before the optional extension");
  sub->add_option("--extended-epochs", a.extended, "epoch cap when not saturated");
  sub->add_option("--lr", a.lr, "initial learning rate");
  sub->add_option("--lr-fine", a.lr_fine, "learning rate after saturation");
  sub->add_option("--window", a.window, "saturation window in epochs");
  sub->add_option("--filters", a.filters, "filters per convolution");
  sub->add_option("--hidden", a.hidden, "hidden units of the first dense layer");
  sub->add_option("--blocks", a.blocks, "gCNN convolution blocks");
  sub->add_option("--patch", a.patch, "gCNN rectangular patch side");
  sub->add_option("--width", a.width, "projection width (pCNN on node maps)");
  sub->add_option("--height", a.height, "projection height");
  sub->add_option("--pad", a.pad, "projection padding");
  sub->add_flag("--no-demean", a.no_demean, "skip per-sample demeaning");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Geometric CNN on icosahedral meshes"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  MeshInfoArgs mesh;
  auto* s_mesh = app.add_subcommand("mesh-info", "icosphere statistics and OBJ export");
  s_mesh->add_option("--level", mesh.level, "icosphere level")->required();
  s_mesh->add_option("--export", mesh.export_path, "write the level as OBJ");

  SynthArgs synth;
  auto* s_synth = app.add_subcommand("synth", "generate a synthetic two-class dataset");
  s_synth->add_option("--level", synth.level, "icosphere level");
  s_synth->add_option("--samples", synth.samples, "sample count");
  s_synth->add_option("--seed", synth.seed, "generator seed");
  s_synth->add_flag("--noise-free", synth.noise_free, "disable every noise source");
  s_synth->add_option("--noise-scale", synth.noise_scale, "multiplier on the default noise");
  s_synth->add_option("--mask-cap", synth.mask_cap, "masked-out cap radius in degrees");
  s_synth->add_option("--out", synth.out, "output directory")->required();

  RunArgs train_args, cv_args, transfer_args;
  auto* s_train = app.add_subcommand("train", "train one fold and write a checkpoint");
  add_run_options(s_train, train_args, true);
  s_train->add_option("--fold", train_args.fold, "validation fold");
  train_args.app = s_train;
  auto* s_cv = app.add_subcommand("crossval", "stratified k-fold cross-validation");
  add_run_options(s_cv, cv_args, true);
  cv_args.app = s_cv;
  auto* s_transfer = app.add_subcommand("transfer", "retrain the head on top of frozen rows");
  add_run_options(s_transfer, transfer_args, false);
  s_transfer->add_option("--checkpoint", transfer_args.checkpoint, "base model")->required();
  s_transfer->add_option("--freeze", transfer_args.freeze, "frozen table rows (default: up to the dense head)");
  transfer_args.app = s_transfer;

  RotateArgs rot;
  auto* s_rot = app.add_subcommand("rotate", "rotate every sample of a dataset");
  s_rot->add_option("--data", rot.data)->required();
  s_rot->add_option("--axis", rot.axis, "x, y or z")->check(CLI::IsMember({"x", "y", "z"}));
  s_rot->add_option("--degrees", rot.degrees)->required();
  s_rot->add_option("--out", rot.out)->required();

  ProjectArgs proj;
  bool proj_no_demean = false;
  auto* s_proj = app.add_subcommand("project", "equirectangular images of a dataset");
  s_proj->add_option("--data", proj.data)->required();
  s_proj->add_option("--width", proj.width);
  s_proj->add_option("--height", proj.height);
  s_proj->add_option("--pad", proj.pad);
  s_proj->add_flag("--no-demean", proj_no_demean);
  s_proj->add_option("--out", proj.out)->required();

  StatsArgs st;
  auto* s_stats = app.add_subcommand("stats", "ANOVA and Bonferroni tests over fold accuracies");
  s_stats->add_option("--records", st.records, "records.json files")->required()->expected(2, -1);
  s_stats->add_option("--csv", st.csv, "write the tests as CSV");

  std::string suite = "all";
  auto* s_verify = app.add_subcommand("verify", "built-in acceptance checks");
  s_verify->add_option("--suite", suite)->check(CLI::IsMember({"geometry", "gradients", "params", "all"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (s_mesh->parsed()) return cmd_mesh_info(mesh);
    if (s_synth->parsed()) return cmd_synth(synth);
    if (s_train->parsed()) return cmd_train_like(train_args, "train");
    if (s_cv->parsed()) return cmd_train_like(cv_args, "crossval");
    if (s_transfer->parsed()) return cmd_transfer(transfer_args);
    if (s_rot->parsed()) return cmd_rotate(rot);
    if (s_proj->parsed()) {
      proj.demean_first = !proj_no_demean;
      return cmd_project(proj);
    }
    if (s_stats->parsed()) return cmd_stats(st);
    if (s_verify->parsed()) return cmd_verify(suite);
  } catch (const gcnn::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: configuration: " << e.what() << '\n';
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 2;
}

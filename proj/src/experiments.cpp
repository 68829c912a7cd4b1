#include "gcnn/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "gcnn/error.hpp"

namespace gcnn {

using nlohmann::json;

// ---- data ---------------------------------------------------------------------

LabeledSet LabeledSet::subset(const std::vector<std::size_t>& indices) const {
  LabeledSet out;
  for (std::size_t i : indices) {
    out.inputs.push_back(inputs.at(i));
    out.labels.push_back(labels.at(i));
    out.ids.push_back(i < ids.size() ? ids[i] : std::string());
  }
  return out;
}

Tensor LabeledSet::batch(const std::vector<std::size_t>& indices, std::size_t begin, std::size_t end) const {
  std::vector<const Tensor*> items;
  for (std::size_t i = begin; i < end; ++i) items.push_back(&inputs.at(indices[i]));
  return stack_batch(items);
}

LabeledSet labeled_from_maps(const std::vector<NodeMap>& maps, bool demean_first) {
  LabeledSet out;
  for (const NodeMap& m : maps) {
    if (!m.label) throw DataError("sample '" + m.sample_id + "' has no label");
    out.inputs.push_back(demean_first ? demean(m).as_tensor() : m.as_tensor());
    out.labels.push_back(*m.label);
    out.ids.push_back(m.sample_id);
  }
  return out;
}

LabeledSet labeled_from_images(const std::vector<ImageSample>& images) {
  LabeledSet out;
  for (const ImageSample& s : images) {
    if (!s.label) throw DataError("image '" + s.sample_id + "' has no label");
    out.inputs.push_back(s.image);
    out.labels.push_back(*s.label);
    out.ids.push_back(s.sample_id);
  }
  return out;
}

// ---- configuration ------------------------------------------------------------

void TrainConfig::validate() const {
  if (batch_size < 2) throw ConfigError("batch size must be at least 2 for batch normalization");
  if (max_epochs == 0 || extended_epochs < max_epochs) throw ConfigError("need 0 < max_epochs <= extended_epochs");
  if (!(lr_initial >= 0.0) || !(lr_fine >= 0.0) || lr_fine > lr_initial)
    throw ConfigError("learning rates must satisfy 0 <= lr_fine <= lr_initial");
  if (saturation_window == 0) throw ConfigError("saturation window must be positive");
}

void to_json(json& j, const TrainConfig& c) {
  j = json{{"batch_size", c.batch_size}, {"max_epochs", c.max_epochs},
           {"extended_epochs", c.extended_epochs}, {"lr_initial", c.lr_initial},
           {"lr_fine", c.lr_fine}, {"saturation_window", c.saturation_window},
           {"seed", c.seed}, {"shuffle", c.shuffle}};
}

void from_json(const json& j, TrainConfig& c) {
  c.batch_size = j.value("batch_size", c.batch_size);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.extended_epochs = j.value("extended_epochs", c.extended_epochs);
  c.lr_initial = j.value("lr_initial", c.lr_initial);
  c.lr_fine = j.value("lr_fine", c.lr_fine);
  c.saturation_window = j.value("saturation_window", c.saturation_window);
  c.seed = j.value("seed", c.seed);
  c.shuffle = j.value("shuffle", c.shuffle);
}

// ---- splitting ----------------------------------------------------------------

std::vector<std::size_t> largest_remainder_quota(const std::vector<std::size_t>& class_counts, std::size_t test_total) {
  const std::size_t n = std::accumulate(class_counts.begin(), class_counts.end(), std::size_t{0});
  if (test_total > n) throw ConfigError("test set larger than the dataset");
  std::vector<std::size_t> quota(class_counts.size());
  std::vector<std::pair<double, std::size_t>> rema;
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < class_counts.size(); ++c) {
    const double exact = static_cast<double>(test_total) * static_cast<double>(class_counts[c]) / static_cast<double>(n);
    quota[c] = static_cast<std::size_t>(std::floor(exact));
    assigned += quota[c];
    rema.push_back({exact - std::floor(exact), c});
  }
  // Larger remainder first; ties go to the lower class id.
  std::stable_sort(rema.begin(), rema.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < test_total; ++i, ++assigned) ++quota[rema[i].second];
  return quota;
}

FoldPlan stratified_split(const std::vector<int>& labels, std::size_t k, double test_fraction, std::uint64_t seed) {
  if (k < 2) throw ConfigError("k-fold split needs k >= 2");
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) throw ConfigError("test fraction must lie in [0, 1)");
  int max_label = -1;
  for (int l : labels) {
    if (l < 0) throw DataError("negative class label");
    max_label = std::max(max_label, l);
  }
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(max_label + 1));
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[static_cast<std::size_t>(labels[i])].push_back(i);
  std::size_t present = 0;
  for (const auto& c : by_class) present += c.empty() ? 0 : 1;
  if (present < 2) throw ConfigError("stratification needs at least two classes");

  std::vector<std::size_t> counts;
  for (const auto& c : by_class) counts.push_back(c.size());
  const auto test_total = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(labels.size())));
  const auto quota = largest_remainder_quota(counts, test_total);

  std::mt19937_64 rng(seed);
  FoldPlan plan;
  plan.k = k;
  plan.labels = labels;
  plan.validation.assign(k, {});
  std::size_t dealer = 0;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto members = by_class[c];
    if (members.empty()) continue;
    std::shuffle(members.begin(), members.end(), rng);
    if (members.size() - quota[c] < k)
      throw ConfigError("class " + std::to_string(c) + " has " + std::to_string(members.size() - quota[c]) +
                        " training samples, fewer than k = " + std::to_string(k));
    plan.test.insert(plan.test.end(), members.begin(), members.begin() + static_cast<long>(quota[c]));
    for (std::size_t i = quota[c]; i < members.size(); ++i) plan.validation[dealer++ % k].push_back(members[i]);
  }
  std::sort(plan.test.begin(), plan.test.end());
  for (auto& f : plan.validation) std::sort(f.begin(), f.end());
  return plan;
}

std::vector<std::size_t> FoldPlan::training(std::size_t fold) const {
  std::vector<std::size_t> out;
  for (std::size_t f = 0; f < validation.size(); ++f)
    if (f != fold) out.insert(out.end(), validation[f].begin(), validation[f].end());
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::size_t> FoldPlan::train_validation() const { return training(validation.size()); }

// ---- training -----------------------------------------------------------------

namespace {

std::size_t argmax_row(const Tensor& logits, std::size_t b) {
  const std::size_t k = logits.dim(1);
  std::size_t best = 0;
  for (std::size_t j = 1; j < k; ++j)
    if (logits[b * k + j] > logits[b * k + best]) best = j;
  return best;
}

}  // namespace

Evaluation evaluate(Model& model, const LabeledSet& set, std::size_t batch_size) {
  const std::size_t k = model.classes();
  Evaluation ev;
  ev.confusion.assign(k, std::vector<std::size_t>(k, 0));
  if (set.size() == 0) return ev;
  std::vector<std::size_t> order(set.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t wrong = 0;
  for (std::size_t begin = 0; begin < set.size(); begin += batch_size) {
    const std::size_t end = std::min(set.size(), begin + batch_size);
    const Tensor logits = model.logits(set.batch(order, begin, end), Mode::Eval);
    for (std::size_t b = 0; b < end - begin; ++b) {
      const std::size_t pred = argmax_row(logits, b);
      const auto truth = static_cast<std::size_t>(set.labels[begin + b]);
      if (truth >= k) throw IndexError("label " + std::to_string(truth) + " outside the model's classes");
      ++ev.confusion[truth][pred];
      if (pred != truth) ++wrong;
    }
  }
  ev.error = static_cast<double>(wrong) / static_cast<double>(set.size());
  return ev;
}

RunRecord train(Model& model, const LabeledSet& train_set, const LabeledSet& val_set, const TrainConfig& config) {
  config.validate();
  if (train_set.size() < 2 || val_set.size() == 0) throw ConfigError("training needs >= 2 training and >= 1 validation samples");
  const auto start = std::chrono::steady_clock::now();
  RunRecord rec;
  rec.seed = config.seed;
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  double lr = config.lr_initial;
  std::size_t limit = config.max_epochs;
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t since_improvement = 0;
  auto best = model.snapshot();

  for (std::size_t epoch = 1; epoch <= limit; ++epoch) {
    if (config.shuffle) std::shuffle(order.begin(), order.end(), rng);
    std::size_t wrong = 0, seen = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      if (end - begin < 2) break;  // batch normalization needs two samples
      const Tensor x = train_set.batch(order, begin, end);
      std::vector<int> y;
      for (std::size_t i = begin; i < end; ++i) y.push_back(train_set.labels[order[i]]);
      model.zero_grads();
      const Tensor logits = model.logits(x, Mode::Train);
      const auto loss = kernels::softmax_cross_entropy(logits, y);
      if (!std::isfinite(loss.loss))
        throw NumericError("non-finite loss in epoch " + std::to_string(epoch) + " at batch " +
                           std::to_string(begin / config.batch_size));
      for (std::size_t b = 0; b < y.size(); ++b)
        if (argmax_row(logits, b) != static_cast<std::size_t>(y[b])) ++wrong;
      seen += y.size();
      model.backward(loss.grad_logits);
      model.sgd_step(lr);
    }
    rec.train_error.push_back(static_cast<double>(wrong) / static_cast<double>(seen));
    rec.learning_rate.push_back(lr);
    const double val = evaluate(model, val_set).error;
    rec.val_error.push_back(val);

    if (val < best_val) {
      best_val = val;
      best = model.snapshot();
      rec.chosen_epoch = epoch;
      since_improvement = 0;
    } else if (++since_improvement >= config.saturation_window && rec.lr_drop_epoch == 0) {
      lr = config.lr_fine;
      rec.lr_drop_epoch = epoch;
      since_improvement = 0;
    }
    if (epoch == limit && rec.lr_drop_epoch == 0 && limit < config.extended_epochs) {
      limit = config.extended_epochs;
      rec.extended = true;
    }
  }
  model.restore(best);
  rec.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

// ---- cross-validation -----------------------------------------------------------

CrossValResult cross_validate(const ModelBuilder& builder, const LabeledSet& data, const FoldPlan& plan,
                              const TrainConfig& config, std::size_t threads, bool keep_models) {
  config.validate();
  if (plan.validation.empty()) throw ConfigError("fold plan has no folds");
  const LabeledSet test = data.subset(plan.test);
  const std::size_t k = plan.validation.size();
  std::vector<RunRecord> records(k);
  std::vector<Model> models(keep_models ? k : 0);
  std::vector<std::exception_ptr> errors(k);

  auto run_fold = [&](std::size_t f) {
    try {
      TrainConfig cfg = config;
      cfg.seed = config.seed + f;
      Model model = builder(cfg.seed);
      RunRecord rec = train(model, data.subset(plan.training(f)), data.subset(plan.validation[f]), cfg);
      rec.fold = f;
      if (test.size() > 0) {
        const Evaluation ev = evaluate(model, test);
        rec.test_accuracy = ev.accuracy();
        rec.confusion = ev.confusion;
      }
      rec.config_hash = config_hash({{"model", config_to_json(model.config())}, {"train", cfg}});
      records[f] = std::move(rec);
      if (keep_models) models[f] = std::move(model);
    } catch (...) {
      errors[f] = std::current_exception();
    }
  };

  const std::size_t workers = std::clamp<std::size_t>(threads, 1, k);
  if (workers == 1) {
    for (std::size_t f = 0; f < k; ++f) run_fold(f);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t f; (f = next++) < k;) run_fold(f);
      });
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  CrossValResult result;
  result.records = std::move(records);
  result.models = std::move(models);
  std::vector<double> acc;
  for (const auto& r : result.records) acc.push_back(r.test_accuracy);
  result.summary = stats::summarize(acc);
  return result;
}

// ---- transfer -------------------------------------------------------------------

LabeledSet prefix_features(Model& model, std::size_t rows, const LabeledSet& data, std::size_t batch_size) {
  LabeledSet out;
  out.labels = data.labels;
  out.ids = data.ids;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t begin = 0; begin < data.size(); begin += batch_size) {
    const std::size_t end = std::min(data.size(), begin + batch_size);
    const Tensor y = model.forward_range(data.batch(order, begin, end), Mode::Eval, 0, rows);
    for (std::size_t b = 0; b < end - begin; ++b) out.inputs.push_back(batch_item(y, b));
  }
  return out;
}

CrossValResult transfer_experiment(const Model& base, const LabeledSet& data, std::size_t freeze_count,
                                   const FoldPlan& plan, const TrainConfig& config, std::size_t threads,
                                   bool keep_models) {
  Model model = base;
  model.freeze_prefix(freeze_count);
  if (data.size() > 0 && data.inputs.front().dims() != model.input_shape())
    throw ConfigError("dataset samples are " + shape_string(data.inputs.front().dims()) + ", model expects " +
                      shape_string(model.input_shape()));
  const LabeledSet features = prefix_features(model, freeze_count, data);
  const Model head = model.suffix(freeze_count);
  ModelBuilder builder = [&head](std::uint64_t seed) {
    Model m = head;
    m.reinitialize_from(0, seed);
    return m;
  };
  return cross_validate(builder, features, plan, config, threads, keep_models);
}

// ---- records --------------------------------------------------------------------

void to_json(json& j, const RunRecord& r) {
  j = json{{"fold", r.fold},
           {"seed", r.seed},
           {"train_error", r.train_error},
           {"val_error", r.val_error},
           {"learning_rate", r.learning_rate},
           {"chosen_epoch", r.chosen_epoch},
           {"lr_drop_epoch", r.lr_drop_epoch},
           {"extended", r.extended},
           {"test_accuracy", r.test_accuracy},
           {"confusion", r.confusion},
           {"wall_clock_seconds", r.wall_clock_seconds},
           {"config_hash", r.config_hash}};
}

void from_json(const json& j, RunRecord& r) {
  r.fold = j.at("fold").get<std::size_t>();
  r.seed = j.value("seed", std::uint64_t{0});
  r.train_error = j.value("train_error", std::vector<double>{});
  r.val_error = j.value("val_error", std::vector<double>{});
  r.learning_rate = j.value("learning_rate", std::vector<double>{});
  r.chosen_epoch = j.value("chosen_epoch", std::size_t{0});
  r.lr_drop_epoch = j.value("lr_drop_epoch", std::size_t{0});
  r.extended = j.value("extended", false);
  r.test_accuracy = j.at("test_accuracy").get<double>();
  r.confusion = j.value("confusion", std::vector<std::vector<std::size_t>>{});
  r.wall_clock_seconds = j.value("wall_clock_seconds", 0.0);
  r.config_hash = j.value("config_hash", std::string());
}

std::string config_hash(const json& config) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : config.dump()) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

void write_records_json(const std::filesystem::path& path, const CrossValResult& result, const json& extra) {
  json j = extra;
  j["records"] = result.records;
  j["summary"] = {{"mean_test_accuracy", result.summary.mean},
                  {"sd_test_accuracy", result.summary.sd},
                  {"folds", result.summary.n}};
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void write_curves_csv(const std::filesystem::path& path, const std::vector<RunRecord>& records) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "fold,epoch,train_err,val_err,lr\n";
  out << std::setprecision(17);
  for (const auto& r : records)
    for (std::size_t e = 0; e < r.val_error.size(); ++e)
      out << r.fold << ',' << e + 1 << ',' << r.train_error[e] << ',' << r.val_error[e] << ',' << r.learning_rate[e]
          << '\n';
}

std::vector<double> read_fold_accuracies(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  if (!j.contains("records") || !j["records"].is_array()) throw FormatError(path.string() + ": no records array");
  std::vector<double> acc;
  for (const json& r : j["records"]) {
    if (!r.contains("test_accuracy") || !r["test_accuracy"].is_number())
      throw FormatError(path.string() + ": record without test_accuracy");
    acc.push_back(r["test_accuracy"].get<double>());
  }
  return acc;
}

}  // namespace gcnn

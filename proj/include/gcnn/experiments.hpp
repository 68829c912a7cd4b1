#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gcnn/dataset_io.hpp"
#include "gcnn/model.hpp"
#include "gcnn/stats.hpp"
#include "gcnn/surfdata.hpp"

namespace gcnn {

/// Per-sample network inputs with class labels.
struct LabeledSet {
  std::vector<Tensor> inputs;
  std::vector<int> labels;
  std::vector<std::string> ids;

  std::size_t size() const { return inputs.size(); }
  LabeledSet subset(const std::vector<std::size_t>& indices) const;
  Tensor batch(const std::vector<std::size_t>& indices, std::size_t begin, std::size_t end) const;
};

/// Node maps as N x C inputs (optionally demeaned first). Every map needs a label.
LabeledSet labeled_from_maps(const std::vector<NodeMap>& maps, bool demean_first = true);
LabeledSet labeled_from_images(const std::vector<ImageSample>& images);

struct TrainConfig {
  std::size_t batch_size = 50;
  std::size_t max_epochs = 40;
  std::size_t extended_epochs = 70;
  double lr_initial = 0.02;
  double lr_fine = 0.001;
  std::size_t saturation_window = 5;
  std::uint64_t seed = 1;
  bool shuffle = true;
  void validate() const;
};
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct FoldPlan {
  std::size_t k = 10;
  std::vector<std::size_t> test;                     // held-out indices, ascending
  std::vector<std::vector<std::size_t>> validation;  // per fold, ascending
  std::vector<int> labels;                           // stratification labels of the whole set

  /// Training indices of fold f: every train-validation index outside fold f.
  std::vector<std::size_t> training(std::size_t fold) const;
  std::vector<std::size_t> train_validation() const;
};

/// Draws the test set first (largest-remainder class quotas), then deals
/// the rest into k class-balanced folds. Deterministic per seed.
FoldPlan stratified_split(const std::vector<int>& labels, std::size_t k, double test_fraction, std::uint64_t seed);
/// Per-class test counts for `test_total` samples by largest remainder.
std::vector<std::size_t> largest_remainder_quota(const std::vector<std::size_t>& class_counts, std::size_t test_total);

struct Evaluation {
  double error = 0.0;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
  double accuracy() const { return 1.0 - error; }
};
Evaluation evaluate(Model& model, const LabeledSet& set, std::size_t batch_size = 64);

struct RunRecord {
  std::size_t fold = 0;
  std::uint64_t seed = 0;
  std::vector<double> train_error;
  std::vector<double> val_error;
  std::vector<double> learning_rate;
  std::size_t chosen_epoch = 0;  // 1-based argmin of val_error, earliest on ties
  std::size_t lr_drop_epoch = 0;  // 0 = never dropped
  bool extended = false;
  double test_accuracy = 0.0;
  std::vector<std::vector<std::size_t>> confusion;
  double wall_clock_seconds = 0.0;
  std::string config_hash;
};
void to_json(nlohmann::json& j, const RunRecord& r);
void from_json(const nlohmann::json& j, RunRecord& r);

/// Mini-batch SGD with the saturation LR drop, optional extension and
/// early-stopping restore. Throws NumericError on a non-finite loss.
RunRecord train(Model& model, const LabeledSet& train_set, const LabeledSet& val_set, const TrainConfig& config);

using ModelBuilder = std::function<Model(std::uint64_t seed)>;

struct CrossValResult {
  std::vector<RunRecord> records;
  stats::Summary summary;  // of test accuracies
  std::vector<Model> models;  // trained fold models, when kept
};

/// One independently initialized model per fold (seed = base + fold),
/// each scored on the common test set. `threads` > 1 runs folds concurrently.
CrossValResult cross_validate(const ModelBuilder& builder, const LabeledSet& data, const FoldPlan& plan,
                              const TrainConfig& config, std::size_t threads = 1, bool keep_models = false);

/// Frozen-prefix outputs of every sample (eval mode), computed once.
LabeledSet prefix_features(Model& model, std::size_t rows, const LabeledSet& data, std::size_t batch_size = 32);

/// Freezes `freeze_count` rows of `base`, precomputes their outputs and
/// cross-validates a freshly initialized copy of the remaining rows.
CrossValResult transfer_experiment(const Model& base, const LabeledSet& data, std::size_t freeze_count,
                                   const FoldPlan& plan, const TrainConfig& config, std::size_t threads = 1,
                                   bool keep_models = false);

std::string config_hash(const nlohmann::json& config);
void write_records_json(const std::filesystem::path& path, const CrossValResult& result, const nlohmann::json& extra);
void write_curves_csv(const std::filesystem::path& path, const std::vector<RunRecord>& records);
/// Reads the per-fold test accuracies from a records file.
std::vector<double> read_fold_accuracies(const std::filesystem::path& path);

}  // namespace gcnn

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "pgmgnn/autodiff.hpp"
#include "pgmgnn/dataset.hpp"
#include "pgmgnn/gnn.hpp"

namespace pgmgnn {

enum class Task { marginals, map };

std::string to_string(Task task);
Task parse_task(const std::string& s);

struct TrainConfig {
  double learning_rate = 1e-3;
  int early_stop_window = 20;
  int max_epochs = 500;
  int batch_size = 10;
  Task task = Task::marginals;
  std::uint64_t seed = 0;
  /// Global gradient-norm clip; off when unset.
  std::optional<double> clip_norm;

  void validate() const;
};

nlohmann::json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct TrainHistory {
  std::vector<double> train_loss;  // per epoch, mean per-graph loss
  std::vector<double> val_loss;    // per validation check
  std::vector<double> val_kl;      // mean per-node KL on validation, per check
  int best_epoch = 0;              // 1-based; 0 means the initial weights
  double best_val_loss = 0.0;
  std::string stop_reason;

  bool operator==(const TrainHistory&) const = default;
};

nlohmann::json history_to_json(const TrainHistory& h);
TrainHistory history_from_json(const nlohmann::json& j);

/// q_i = p_i(+1) for marginals, q_i = [x*_i = +1] for MAP.
std::vector<double> targets_for(Task task, const LabeledModel& model);

/// Binary cross-entropy summed over variables:
/// −Σ_i [q_i log p̂_i + (1 − q_i) log(1 − p̂_i)]. `predictions` is n × 1.
ad::Var cross_entropy_loss(std::span<const double> targets, ad::Var predictions);

/// Stops after `window` consecutive checks without a strict improvement.
class EarlyStopping {
 public:
  explicit EarlyStopping(int window);
  /// Records the next check; returns true if this check is a new best.
  bool observe(double loss);
  bool should_stop() const { return since_best_ >= window_; }
  int checks() const { return checks_; }
  int best_check() const { return best_check_; }
  double best_loss() const { return best_loss_; }

 private:
  int window_;
  int checks_ = 0;
  int best_check_ = 0;
  int since_best_ = 0;
  double best_loss_;
};

/// Loss of one model on a fresh tape, optionally accumulating scale × gradient.
double model_loss(const GnnWeights& weights, const LabeledModel& model, Task task, ad::ParamStore* grad_sink = nullptr,
                  double scale = 1.0);

/// Mean per-graph loss over `models`.
double mean_loss(const GnnWeights& weights, const std::vector<LabeledModel>& models, Task task);

struct TrainResult {
  GnnWeights weights;  // best-validation weights
  TrainHistory history;
};

using EpochCallback = std::function<void(int epoch, double train_loss, double val_loss)>;

/// Adam on mini-batches of whole graphs with gradients averaged per batch,
/// validation once per epoch, early stopping on validation loss.
TrainResult train(const Dataset& dataset, const GnnArchitecture& arch, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = nullptr);

/// Checkpoint file: weights file + train_config + history.
nlohmann::json checkpoint_to_json(const TrainResult& result, const TrainConfig& cfg);
TrainResult checkpoint_from_json(const nlohmann::json& j);

}  // namespace pgmgnn

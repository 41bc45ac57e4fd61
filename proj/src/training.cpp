#include "pgmgnn/training.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "pgmgnn/eval.hpp"
#include "pgmgnn/rng.hpp"

namespace pgmgnn {

std::string to_string(Task task) { return task == Task::marginals ? "marginals" : "map"; }

Task parse_task(const std::string& s) {
  if (s == "marginals") return Task::marginals;
  if (s == "map") return Task::map;
  throw std::invalid_argument("unknown task '" + s + "' (expected marginals or map)");
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: learning rate must be > 0");
  if (early_stop_window < 1) throw std::invalid_argument("TrainConfig: early-stop window must be >= 1");
  if (max_epochs < 1) throw std::invalid_argument("TrainConfig: max_epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch size must be >= 1");
  if (clip_norm && !(*clip_norm > 0.0)) throw std::invalid_argument("TrainConfig: clip norm must be > 0");
}

nlohmann::json train_config_to_json(const TrainConfig& cfg) {
  nlohmann::json j{{"learning_rate", cfg.learning_rate}, {"early_stop_window", cfg.early_stop_window},
                   {"max_epochs", cfg.max_epochs},       {"batch_size", cfg.batch_size},
                   {"task", to_string(cfg.task)},        {"seed", cfg.seed}};
  j["clip_norm"] = cfg.clip_norm ? nlohmann::json(*cfg.clip_norm) : nlohmann::json(nullptr);
  return j;
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig cfg;
  cfg.learning_rate = j.at("learning_rate").get<double>();
  cfg.early_stop_window = j.at("early_stop_window").get<int>();
  cfg.max_epochs = j.at("max_epochs").get<int>();
  cfg.batch_size = j.at("batch_size").get<int>();
  cfg.task = parse_task(j.at("task").get<std::string>());
  cfg.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("clip_norm") && !j.at("clip_norm").is_null()) cfg.clip_norm = j.at("clip_norm").get<double>();
  return cfg;
}

nlohmann::json history_to_json(const TrainHistory& h) {
  return nlohmann::json{{"train_loss", h.train_loss}, {"val_loss", h.val_loss},           {"val_kl", h.val_kl},
                        {"best_epoch", h.best_epoch}, {"best_val_loss", h.best_val_loss}, {"stop_reason", h.stop_reason}};
}

TrainHistory history_from_json(const nlohmann::json& j) {
  TrainHistory h;
  h.train_loss = j.at("train_loss").get<std::vector<double>>();
  h.val_loss = j.at("val_loss").get<std::vector<double>>();
  h.val_kl = j.at("val_kl").get<std::vector<double>>();
  h.best_epoch = j.at("best_epoch").get<int>();
  h.best_val_loss = j.at("best_val_loss").get<double>();
  h.stop_reason = j.at("stop_reason").get<std::string>();
  return h;
}

std::vector<double> targets_for(Task task, const LabeledModel& model) {
  const auto n = static_cast<std::size_t>(model.mrf.num_nodes());
  if (task == Task::marginals) {
    if (model.truth.marginals_p1.size() != n) throw std::invalid_argument("targets_for: model has no ground-truth marginals");
    return model.truth.marginals_p1;
  }
  if (model.truth.map_state.size() != n) throw std::invalid_argument("targets_for: model has no ground-truth MAP state");
  std::vector<double> q(n);
  for (std::size_t i = 0; i < n; ++i) q[i] = model.truth.map_state[i] == 1 ? 1.0 : 0.0;
  return q;
}

ad::Var cross_entropy_loss(std::span<const double> targets, ad::Var predictions) {
  if (predictions.cols() != 1 || predictions.rows() != targets.size())
    throw std::invalid_argument("cross_entropy_loss: " + std::to_string(targets.size()) + " targets for predictions of shape " +
                                predictions.value().shape_string());
  for (double p : predictions.value().values())
    if (!(p > 0.0 && p < 1.0)) throw std::domain_error("cross_entropy_loss: prediction " + std::to_string(p) + " outside (0, 1)");
  ad::Tape& tape = predictions.tape();
  const std::vector<double> q(targets.begin(), targets.end());
  std::vector<double> one_minus_q(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) one_minus_q[i] = 1.0 - q[i];
  ad::Var log_p = ad::log(predictions);
  ad::Var log_not_p = ad::log(ad::add_scalar(ad::scale(predictions, -1.0), 1.0));
  ad::Var terms = tape.constant(ad::Tensor::column(q)) * log_p + tape.constant(ad::Tensor::column(one_minus_q)) * log_not_p;
  return ad::scale(ad::sum(terms), -1.0);
}

EarlyStopping::EarlyStopping(int window) : window_(window), best_loss_(std::numeric_limits<double>::infinity()) {
  if (window < 1) throw std::invalid_argument("EarlyStopping: window must be >= 1");
}

bool EarlyStopping::observe(double loss) {
  ++checks_;
  if (loss < best_loss_) {
    best_loss_ = loss;
    best_check_ = checks_;
    since_best_ = 0;
    return true;
  }
  ++since_best_;
  return false;
}

double model_loss(const GnnWeights& weights, const LabeledModel& model, Task task, ad::ParamStore* grad_sink, double scale) {
  ad::Tape tape;
  const ForwardTrace trace = forward(build_gnn_graph(model.mrf, weights.arch.kind), weights, tape);
  const auto q = targets_for(task, model);
  ad::Var loss = cross_entropy_loss(q, trace.predictions);
  if (grad_sink) {
    tape.backward(loss);
    tape.accumulate_into(*grad_sink, scale);
  }
  return loss.value().item();
}

double mean_loss(const GnnWeights& weights, const std::vector<LabeledModel>& models, Task task) {
  if (models.empty()) throw std::invalid_argument("mean_loss: no models");
  double total = 0.0;
  for (const auto& m : models) total += model_loss(weights, m, task);
  return total / static_cast<double>(models.size());
}

namespace {

double mean_validation_kl(const GnnWeights& weights, const std::vector<LabeledModel>& models) {
  double total = 0.0;
  for (const auto& m : models) {
    const auto p_hat = predict(weights, m.mrf);
    double s = 0.0;
    for (std::size_t i = 0; i < p_hat.size(); ++i) s += kl_per_node(m.truth.marginals_p1[i], p_hat[i]);
    total += s / static_cast<double>(p_hat.size());
  }
  return total / static_cast<double>(models.size());
}

}  // namespace

TrainResult train(const Dataset& dataset, const GnnArchitecture& arch, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  arch.validate();
  if (dataset.train.empty()) throw std::invalid_argument("train: empty training split");
  if (dataset.validation.empty()) throw std::invalid_argument("train: empty validation split");

  GnnWeights weights = init_weights(arch, cfg.seed);
  ad::ParamStore best = weights.params;
  TrainHistory history;
  EarlyStopping stopper(cfg.early_stop_window);
  const ad::AdamConfig adam{cfg.learning_rate};
  const std::size_t n_train = dataset.train.size();
  const auto batch = static_cast<std::size_t>(cfg.batch_size);

  std::vector<std::size_t> order(n_train);
  history.stop_reason = "max_epochs";
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(cfg.seed, {0x5348, static_cast<std::uint64_t>(epoch)}));
    for (std::size_t i = n_train; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);

    double epoch_total = 0.0;
    for (std::size_t start = 0, b = 0; start < n_train; start += batch, ++b) {
      const std::size_t stop = std::min(n_train, start + batch);
      const double scale = 1.0 / static_cast<double>(stop - start);
      double batch_total = 0.0;
      for (std::size_t k = start; k < stop; ++k)
        batch_total += model_loss(weights, dataset.train[order[k]], cfg.task, &weights.params, scale);
      if (!std::isfinite(batch_total))
        throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(b));
      if (cfg.clip_norm) {
        const double norm = weights.params.grad_norm();
        if (norm > *cfg.clip_norm) weights.params.scale_grads(*cfg.clip_norm / norm);
      }
      ad::adam_step(weights.params, adam);
      epoch_total += batch_total;
    }
    const double train_loss = epoch_total / static_cast<double>(n_train);
    const double val_loss = mean_loss(weights, dataset.validation, cfg.task);
    if (!std::isfinite(val_loss)) throw std::runtime_error("train: non-finite validation loss at epoch " + std::to_string(epoch));
    history.train_loss.push_back(train_loss);
    history.val_loss.push_back(val_loss);
    history.val_kl.push_back(mean_validation_kl(weights, dataset.validation));
    if (stopper.observe(val_loss)) {
      best = weights.params;
      history.best_epoch = epoch;
      history.best_val_loss = val_loss;
    }
    if (on_epoch) on_epoch(epoch, train_loss, val_loss);
    if (stopper.should_stop()) {
      history.stop_reason = "early_stop";
      break;
    }
  }
  weights.params = std::move(best);
  return TrainResult{std::move(weights), std::move(history)};
}

nlohmann::json checkpoint_to_json(const TrainResult& result, const TrainConfig& cfg) {
  nlohmann::json j = weights_to_json(result.weights);
  j["train_config"] = train_config_to_json(cfg);
  j["history"] = history_to_json(result.history);
  return j;
}

TrainResult checkpoint_from_json(const nlohmann::json& j) {
  TrainResult r{weights_from_json(j), {}};
  if (j.contains("history")) r.history = history_from_json(j.at("history"));
  return r;
}

}  // namespace pgmgnn

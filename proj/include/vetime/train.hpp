#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "vetime/io.hpp"
#include "vetime/metrics.hpp"
#include "vetime/model.hpp"

namespace vetime {

// ---- RunConfig <-> JSON -----------------------------------------------------

inline json run_config_to_json(const RunConfig& cfg) {
  return json{
      {"seed", cfg.seed},
      {"patch_size", cfg.patch_size},
      {"encoder",
       {{"depth", cfg.encoder.depth},
        {"heads", cfg.encoder.heads},
        {"model_dim", cfg.encoder.model_dim},
        {"ffn_dim", cfg.encoder.ffn_dim},
        {"visual_patch", cfg.encoder.visual_patch},
        {"max_tokens", cfg.encoder.max_tokens},
        {"seed", cfg.encoder.seed}}},
      {"contrastive",
       {{"tau", cfg.contrastive.tau}, {"lambda_aw", cfg.contrastive.lambda_aw}}},
      {"loss",
       {{"lambda_aw", cfg.loss.lambda_aw}, {"lambda_e", cfg.loss.lambda_e}}},
      {"optimizer",
       {{"learning_rate", cfg.optimizer.learning_rate},
        {"weight_decay", cfg.optimizer.weight_decay},
        {"batch_size", cfg.optimizer.batch_size},
        {"max_epochs", cfg.optimizer.max_epochs},
        {"patience", cfg.optimizer.patience}}},
      {"ablation",
       {{"disable_ric", cfg.ablation.disable_ric},
        {"disable_pta", cfg.ablation.disable_pta},
        {"disable_awcl", cfg.ablation.disable_awcl},
        {"disable_intra", cfg.ablation.disable_intra},
        {"disable_inter", cfg.ablation.disable_inter},
        {"fusion", fusion_mode_name(cfg.ablation.fusion)},
        {"recon_head", cfg.ablation.recon_head}}},
      {"ma_kernel", cfg.ma_kernel},
      {"norm_epsilon", cfg.norm_epsilon},
      {"event_threshold", cfg.event_threshold},
      {"vus_max_buffer", cfg.vus_max_buffer}};
}

inline RunConfig run_config_from_json(const json& j) {
  RunConfig cfg;
  cfg.seed = j.value("seed", cfg.seed);
  cfg.patch_size = j.value("patch_size", cfg.patch_size);
  if (j.contains("encoder")) {
    const auto& e = j["encoder"];
    cfg.encoder.depth = e.value("depth", cfg.encoder.depth);
    cfg.encoder.heads = e.value("heads", cfg.encoder.heads);
    cfg.encoder.model_dim = e.value("model_dim", cfg.encoder.model_dim);
    cfg.encoder.ffn_dim = e.value("ffn_dim", cfg.encoder.ffn_dim);
    cfg.encoder.visual_patch = e.value("visual_patch", cfg.encoder.visual_patch);
    cfg.encoder.max_tokens = e.value("max_tokens", cfg.encoder.max_tokens);
    cfg.encoder.seed = e.value("seed", cfg.encoder.seed);
  }
  if (j.contains("contrastive")) {
    cfg.contrastive.tau = j["contrastive"].value("tau", cfg.contrastive.tau);
    cfg.contrastive.lambda_aw =
        j["contrastive"].value("lambda_aw", cfg.contrastive.lambda_aw);
  }
  if (j.contains("loss")) {
    cfg.loss.lambda_aw = j["loss"].value("lambda_aw", cfg.loss.lambda_aw);
    cfg.loss.lambda_e = j["loss"].value("lambda_e", cfg.loss.lambda_e);
  }
  if (j.contains("optimizer")) {
    const auto& o = j["optimizer"];
    cfg.optimizer.learning_rate =
        o.value("learning_rate", cfg.optimizer.learning_rate);
    cfg.optimizer.weight_decay =
        o.value("weight_decay", cfg.optimizer.weight_decay);
    cfg.optimizer.batch_size = o.value("batch_size", cfg.optimizer.batch_size);
    cfg.optimizer.max_epochs = o.value("max_epochs", cfg.optimizer.max_epochs);
    cfg.optimizer.patience = o.value("patience", cfg.optimizer.patience);
  }
  if (j.contains("ablation")) {
    const auto& a = j["ablation"];
    cfg.ablation.disable_ric = a.value("disable_ric", false);
    cfg.ablation.disable_pta = a.value("disable_pta", false);
    cfg.ablation.disable_awcl = a.value("disable_awcl", false);
    cfg.ablation.disable_intra = a.value("disable_intra", false);
    cfg.ablation.disable_inter = a.value("disable_inter", false);
    cfg.ablation.fusion =
        fusion_mode_from_name(a.value("fusion", std::string("router")));
    cfg.ablation.recon_head = a.value("recon_head", true);
  }
  cfg.ma_kernel = j.value("ma_kernel", cfg.ma_kernel);
  cfg.norm_epsilon = j.value("norm_epsilon", cfg.norm_epsilon);
  cfg.event_threshold = j.value("event_threshold", cfg.event_threshold);
  cfg.vus_max_buffer = j.value("vus_max_buffer", cfg.vus_max_buffer);
  return cfg;
}

// ---- optimizer --------------------------------------------------------------

/// Adaptive-moment gradient descent with decoupled weight decay (AdamW).
class AdamW {
 public:
  AdamW(nn::ParamStore& store, double lr, double weight_decay,
        double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : store_(store), lr_(lr), wd_(weight_decay), b1_(beta1), b2_(beta2),
        eps_(eps) {
    for (const auto& [name, v] : store.entries()) {
      m_.push_back(nn::Mat::Zero(v.rows(), v.cols()));
      v_.push_back(nn::Mat::Zero(v.rows(), v.cols()));
    }
  }

  void step() {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, t_);
    const double c2 = 1.0 - std::pow(b2_, t_);
    std::size_t i = 0;
    for (const auto& [name, p] : store_.entries()) {
      nn::Mat g = p.has_grad()
                      ? p.grad()
                      : nn::Mat::Zero(p.rows(), p.cols()).eval();
      m_[i] = b1_ * m_[i] + (1.0 - b1_) * g;
      v_[i] = b2_ * v_[i] + (1.0 - b2_) * g.cwiseProduct(g);
      const nn::Mat m_hat = m_[i] / c1;
      const nn::Mat v_hat = v_[i] / c2;
      nn::Mat update =
          m_hat.cwiseQuotient((v_hat.cwiseSqrt().array() + eps_).matrix());
      update += wd_ * p.val();
      p.mutable_val() -= lr_ * update;
      ++i;
    }
  }

 private:
  nn::ParamStore& store_;
  double lr_, wd_, b1_, b2_, eps_;
  int t_ = 0;
  std::vector<nn::Mat> m_, v_;
};

// ---- checkpoint ---------------------------------------------------------------

struct Checkpoint {
  static constexpr int kVersion = 1;
  RunConfig config;
  int epoch = 0;
  std::vector<std::pair<std::string, nn::Mat>> params;
  json metric_history = json::array();

  static Checkpoint from_model(const VetimeModel& model, int epoch,
                               json history) {
    Checkpoint c;
    c.config = model.config();
    c.epoch = epoch;
    c.metric_history = std::move(history);
    for (const auto& [name, v] : model.params().entries())
      c.params.emplace_back(name, v.val());
    return c;
  }

  void save(const std::string& path) const {
    json params_json = json::object();
    for (const auto& [name, m] : params) {
      std::vector<double> data(m.size());
      for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c)
          data[r * m.cols() + c] = m(r, c);
      params_json[name] = {{"rows", m.rows()}, {"cols", m.cols()},
                           {"data", data}};
    }
    json out{{"format", "vetime-checkpoint"},
             {"version", kVersion},
             {"config", run_config_to_json(config)},
             {"epoch", epoch},
             {"metric_history", metric_history},
             {"params", params_json}};
    std::ofstream f(path);
    require(f.good(), "cannot write checkpoint " + path);
    f << out.dump() << '\n';
  }

  static Checkpoint load(const std::string& path) {
    std::ifstream f(path);
    require(f.good(), "cannot open checkpoint " + path);
    json in;
    f >> in;
    require(in.value("format", "") == "vetime-checkpoint",
            "not a checkpoint file: " + path);
    require(in.value("version", -1) == kVersion,
            "unsupported checkpoint version in " + path);
    Checkpoint c;
    c.config = run_config_from_json(in.at("config"));
    c.epoch = in.value("epoch", 0);
    c.metric_history = in.value("metric_history", json::array());
    for (const auto& [name, entry] : in.at("params").items()) {
      const Eigen::Index rows = entry.at("rows");
      const Eigen::Index cols = entry.at("cols");
      const auto data = entry.at("data").get<std::vector<double>>();
      require(Eigen::Index(data.size()) == rows * cols,
              "corrupt checkpoint tensor " + name);
      nn::Mat m(rows, cols);
      for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index col = 0; col < cols; ++col)
          m(r, col) = data[r * cols + col];
      c.params.emplace_back(name, std::move(m));
    }
    // keep registration order stable regardless of JSON key order
    std::sort(c.params.begin(), c.params.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    return c;
  }

  /// Builds a model from the stored config and overwrites its parameters.
  VetimeModel restore() const {
    VetimeModel model(config);
    std::size_t found = 0;
    for (const auto& [name, v] : model.params().entries()) {
      for (const auto& [pname, pm] : params)
        if (pname == name) {
          require(pm.rows() == v.rows() && pm.cols() == v.cols(),
                  "checkpoint shape mismatch for " + name);
          v.mutable_val() = pm;
          ++found;
          break;
        }
    }
    require(found == model.params().size() && found == params.size(),
            "checkpoint parameter set does not match the model");
    return model;
  }
};

// ---- inference / evaluation ----------------------------------------------------

struct InferenceOutput {
  std::vector<double> scores;
  std::vector<double> reconstruction;
};

/// Zero-shot scoring path: labels are never consumed, contrastive losses
/// are skipped, only the attention blocks run.
inline InferenceOutput infer(const VetimeModel& model,
                             const LabeledSeries& inst) {
  LabeledSeries unlabeled{inst.series, {}};
  const PreparedInstance prep = prepare_instance(unlabeled, model.config());
  const ForwardResult res = model.forward(prep, false);
  return {res.scores(), res.reconstruction()};
}

inline InferenceOutput infer_multivariate(const VetimeModel& model,
                                          const MultiSeries& ms) {
  MultiSeries unlabeled = ms;
  unlabeled.labels.clear();
  const PreparedMulti prep = prepare_multivariate(unlabeled, model.config());
  const auto res = model.forward_multivariate(prep, false);
  InferenceOutput out;
  out.scores = res.combined_scores;
  if (!res.per_variable.empty() && res.per_variable.front().recon.defined())
    out.reconstruction = res.per_variable.front().reconstruction();
  return out;
}

struct EvalReport {
  std::vector<MetricReport> per_series;
  double mean_standard_f1 = 0.0;
  double mean_best_f1 = 0.0;
  double mean_f1_t = 0.0;
  double mean_affiliation_f1 = 0.0;
  double mean_vus_pr = 0.0;
  double positive_prior = 0.0;  // pooled over all points

  json to_json() const {
    json per = json::array();
    for (const auto& r : per_series)
      per.push_back({{"standard_f1",
                      {{"precision", r.standard.precision},
                       {"recall", r.standard.recall},
                       {"f1", r.standard.f1}}},
                     {"best_f1",
                      {{"threshold", r.best_standard.threshold},
                       {"f1", r.best_standard.f1}}},
                     {"f1_t", r.f1_t_score},
                     {"affiliation_f1",
                      {{"precision", r.affiliation.precision},
                       {"recall", r.affiliation.recall},
                       {"f1", r.affiliation.f1}}},
                     {"vus_pr", r.vus_pr_score},
                     {"positive_prior", r.positive_prior}});
    return json{{"per_series", per},
                {"mean",
                 {{"standard_f1", mean_standard_f1},
                  {"best_f1", mean_best_f1},
                  {"f1_t", mean_f1_t},
                  {"affiliation_f1", mean_affiliation_f1},
                  {"vus_pr", mean_vus_pr}}},
                {"positive_prior", positive_prior}};
  }
};

inline EvalReport evaluate(const VetimeModel& model,
                           const std::vector<LabeledSeries>& dataset) {
  const RunConfig& cfg = model.config();
  EvalReport report;
  double pos = 0.0, total = 0.0;
  int counted = 0;
  for (const auto& inst : dataset) {
    require(inst.has_labels(), "evaluation requires labeled series");
    const InferenceOutput out = infer(model, inst);
    const MetricReport r = score_all_metrics(
        out.scores, inst.labels, cfg.event_threshold, cfg.vus_max_buffer);
    report.per_series.push_back(r);
    for (auto l : inst.labels) pos += l;
    total += double(inst.labels.size());
    if (r.positive_prior > 0.0) {
      report.mean_standard_f1 += r.standard.f1;
      report.mean_best_f1 += r.best_standard.f1;
      report.mean_f1_t += r.f1_t_score;
      report.mean_affiliation_f1 += r.affiliation.f1;
      report.mean_vus_pr += r.vus_pr_score;
      ++counted;
    }
  }
  if (counted > 0) {
    report.mean_standard_f1 /= counted;
    report.mean_best_f1 /= counted;
    report.mean_f1_t /= counted;
    report.mean_affiliation_f1 /= counted;
    report.mean_vus_pr /= counted;
  }
  report.positive_prior = total > 0.0 ? pos / total : 0.0;
  return report;
}

// ---- training -------------------------------------------------------------------

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<double> step_losses;      // per optimizer step
  std::vector<double> val_history;      // per-epoch mean VUS-PR
  int epochs_run = 0;
  double best_val_metric = 0.0;
};

namespace detail {

inline std::vector<std::size_t> epoch_order(std::size_t n, Rng rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i)
    std::swap(order[i - 1],
              order[static_cast<std::size_t>(rng.uniform_int(0, i - 1))]);
  return order;
}

inline double val_vus_pr(const VetimeModel& model,
                         const std::vector<PreparedInstance>& val,
                         int vus_max_buffer) {
  double acc = 0.0;
  int counted = 0;
  for (const auto& prep : val) {
    const ForwardResult res = model.forward(prep, false);
    bool any = false;
    for (auto l : prep.labels) any = any || l;
    if (!any) continue;
    const int buffer = vus_max_buffer >= 0
                           ? vus_max_buffer
                           : default_vus_buffer(prep.labels.size());
    acc += vus_pr(res.scores(), prep.labels, buffer);
    ++counted;
  }
  return counted > 0 ? acc / counted : 0.0;
}

}  // namespace detail

/// Mini-batch training on L_total with per-epoch validation VUS-PR and
/// early stopping; the best-validation parameter snapshot is what the
/// returned checkpoint carries. Deterministic given (config, seed, data).
inline TrainResult train(const RunConfig& cfg,
                         const std::vector<LabeledSeries>& train_set,
                         const std::vector<LabeledSeries>& val_set) {
  cfg.validate();
  require(!train_set.empty() && !val_set.empty(), "datasets must be nonempty");

  std::vector<PreparedInstance> train_prep, val_prep;
  train_prep.reserve(train_set.size());
  for (const auto& inst : train_set) {
    require(inst.has_labels(), "training requires labeled series");
    train_prep.push_back(prepare_instance(inst, cfg));
  }
  for (const auto& inst : val_set)
    val_prep.push_back(prepare_instance(inst, cfg));

  VetimeModel model(cfg);
  AdamW opt(model.params(), cfg.optimizer.learning_rate,
            cfg.optimizer.weight_decay);

  TrainResult result;
  double best = -1.0;
  std::vector<nn::Mat> best_params;
  int best_epoch = 0;
  int stale_epochs = 0;
  const Rng order_rng(cfg.seed ^ 0x5eedbeefULL);

  for (int epoch = 1; epoch <= cfg.optimizer.max_epochs; ++epoch) {
    const auto order = detail::epoch_order(
        train_prep.size(), order_rng.fork(static_cast<std::uint64_t>(epoch)));
    for (std::size_t at = 0; at < order.size();
         at += std::size_t(cfg.optimizer.batch_size)) {
      const std::size_t batch_end =
          std::min(order.size(), at + std::size_t(cfg.optimizer.batch_size));
      const double inv_batch = 1.0 / double(batch_end - at);
      model.params().zero_grad();
      double batch_loss = 0.0;
      nn::LossParts last_parts;
      for (std::size_t k = at; k < batch_end; ++k) {
        const ForwardResult res = model.forward(train_prep[order[k]], true);
        batch_loss += res.total.val()(0, 0) * inv_batch;
        last_parts = res.parts;
        ad::backward(res.total, inv_batch);
      }
      if (!std::isfinite(batch_loss)) {
        auto part = [](const ad::Value& v) {
          return v.defined() ? std::to_string(v.val()(0, 0)) : "n/a";
        };
        throw std::runtime_error(
            "non-finite training loss; last instance terms: bce=" +
            part(last_parts.bce) + " mse=" + part(last_parts.mse) +
            " aw=" + part(last_parts.aw) + " entropy=" +
            part(last_parts.entropy));
      }
      opt.step();
      result.step_losses.push_back(batch_loss);
    }

    const double val_metric =
        detail::val_vus_pr(model, val_prep, cfg.vus_max_buffer);
    result.val_history.push_back(val_metric);
    result.epochs_run = epoch;

    if (val_metric > best) {
      best = val_metric;
      best_epoch = epoch;
      best_params.clear();
      for (const auto& [name, v] : model.params().entries())
        best_params.push_back(v.val());
      stale_epochs = 0;
    } else {
      ++stale_epochs;
    }
    if (stale_epochs >= cfg.optimizer.patience) break;
  }

  if (!best_params.empty()) {
    std::size_t i = 0;
    for (const auto& [name, v] : model.params().entries())
      v.mutable_val() = best_params[i++];
  }
  result.best_val_metric = best;

  json history = json::array();
  for (std::size_t e = 0; e < result.val_history.size(); ++e)
    history.push_back({{"epoch", e + 1}, {"val_vus_pr", result.val_history[e]}});
  result.checkpoint = Checkpoint::from_model(model, best_epoch, history);
  return result;
}

}  // namespace vetime

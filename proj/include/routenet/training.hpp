#pragma once

// Training loop with periodic validation and early stopping, plus the
// evaluation metrics: per-KPI mean relative error, signed relative-error
// CDFs and the predicted-vs-true loss-ratio correlation.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "routenet/autodiff.hpp"
#include "routenet/dataset.hpp"
#include "routenet/model.hpp"
#include "routenet/parallel.hpp"
#include "routenet/queueing.hpp"

namespace routenet {

struct TrainConfig {
  ModelConfig model;
  ad::AdamConfig adam{0.001, 0.9, 0.999, 1e-7, 0.1};
  std::size_t batch_size = 16;
  int steps = 20000;
  int validate_every = 500;
  int patience = 10;  // validations without improvement; 0 disables early stopping
  std::uint64_t seed = 1;
  int jobs = 1;
  // A batch is split into this many contiguous chunks whose gradients are
  // summed in order, so results do not depend on `jobs`.
  int grad_chunks = 4;
  std::string nan_report_path = "nan_batch.json";
  std::string dataset_fingerprint;

  void validate() const {
    model.validate();
    require(batch_size >= 1, "batch_size must be >= 1");
    require(steps >= 0, "steps must be >= 0");
    require(validate_every >= 1, "validate_every must be >= 1");
    require(patience >= 0, "patience must be >= 0");
    require(grad_chunks >= 1, "grad_chunks must be >= 1");
    require(adam.lr > 0.0, "learning rate must be positive");
    require(adam.weight_decay >= 0.0, "weight decay must be >= 0");
  }
};

/// Settings of the original full-scale training run.
inline TrainConfig paper_preset(Head head) {
  TrainConfig c;
  c.model.hidden_dim = 32;
  c.model.readout_hidden = 32;
  c.model.iterations = 8;
  c.model.dropout_rate = 0.5;
  c.model.head = head;
  c.adam.lr = 0.001;
  c.adam.weight_decay = 0.1;
  c.batch_size = 16;
  c.steps = 260000;
  c.patience = 0;
  return c;
}

struct TrainLogEntry {
  int step = 0;
  double train_loss = 0.0;  // mean per-sample loss over the last interval
  double val_loss = 0.0;    // mean per-sample eval-mode loss
};

struct TrainResult {
  ModelParams best;
  std::vector<TrainLogEntry> log;
  int steps_run = 0;
  int best_step = 0;
  double best_val = std::numeric_limits<double>::infinity();
  bool early_stopped = false;
};

namespace detail {

/// Head loss of one merged chunk plus gradients w.r.t. every parameter.
inline double chunk_loss_and_grads(const ModelParams& mp, const std::vector<PreparedSample>& data,
                                   const std::vector<std::size_t>& idx, bool train, std::uint64_t seed,
                                   ad::GradStore* grads) {
  const Batch b = make_batch(data, idx);
  ad::Tape tape;
  std::map<std::string, ad::Var> vars;
  if (grads) vars = ad::bind_params(tape, mp.params);
  else
    for (const auto& [name, p] : mp.params) vars.emplace(name, tape.constant(p.value));
  ad::Var raw = forward(tape, vars, mp, b.graph, train, seed);
  ad::Var loss = head_loss(tape, raw, mp.config.head, b.targets);
  const double value = tape.value(loss)[0];
  if (grads && std::isfinite(value)) {
    tape.backward(loss);
    *grads = ad::collect_grads(tape, vars);
  }
  return value;
}

inline std::vector<std::vector<std::size_t>> chunk(const std::vector<std::size_t>& idx, int chunks) {
  std::vector<std::vector<std::size_t>> out;
  const std::size_t k = std::min<std::size_t>(idx.size(), static_cast<std::size_t>(chunks));
  for (std::size_t c = 0; c < k; ++c) {
    const std::size_t lo = idx.size() * c / k;
    const std::size_t hi = idx.size() * (c + 1) / k;
    out.emplace_back(idx.begin() + static_cast<std::ptrdiff_t>(lo), idx.begin() + static_cast<std::ptrdiff_t>(hi));
  }
  return out;
}

}  // namespace detail

/// Summed eval-mode head loss over a dataset divided by its sample count.
inline double mean_loss(const ModelParams& mp, const std::vector<PreparedSample>& data, int jobs = 1,
                        std::size_t batch = 16) {
  if (data.empty()) return 0.0;
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < data.size(); i += batch) {
    std::vector<std::size_t> b;
    for (std::size_t j = i; j < std::min(data.size(), i + batch); ++j) b.push_back(j);
    batches.push_back(std::move(b));
  }
  std::vector<double> part(batches.size());
  parallel_for(batches.size(), jobs, [&](std::size_t k) {
    part[k] = detail::chunk_loss_and_grads(mp, data, batches[k], false, 0, nullptr);
  });
  double total = 0.0;
  for (double v : part) total += v;
  return total / static_cast<double>(data.size());
}

/// Minimizes the selected head's summed negative log-likelihood plus the L2
/// term (applied through Adam's gradient). Returns the parameters with the
/// best validation loss; with an empty validation set, the final ones.
inline TrainResult train(const TrainConfig& cfg, const std::vector<SampleRecord>& train_set,
                         const std::vector<SampleRecord>& val_set, std::optional<FeatureScaling> scaling = {}) {
  cfg.validate();
  require(!train_set.empty(), "training set is empty");
  const auto train_data = prepare(train_set);
  const auto val_data = prepare(val_set);
  const FeatureScaling fs = scaling ? *scaling : compute_scaling(train_set);

  ModelParams mp = init_model(cfg.model, fs, cfg.seed);
  mp.meta["training_seed"] = std::to_string(cfg.seed);
  mp.meta["dataset_fingerprint"] = cfg.dataset_fingerprint;
  mp.meta["steps"] = std::to_string(cfg.steps);

  TrainResult res;
  res.best = mp;
  if (cfg.steps == 0) return res;

  ad::AdamState adam;
  BatchStream stream(train_data.size(), cfg.batch_size, SplitMix64::derive_seed(cfg.seed, 0x42415443));
  double interval_loss = 0.0;
  std::size_t interval_samples = 0;
  int bad_validations = 0;

  for (int step = 1; step <= cfg.steps; ++step) {
    const auto idx = stream.next();
    const auto chunks = detail::chunk(idx, cfg.grad_chunks);
    std::vector<ad::GradStore> grads(chunks.size());
    std::vector<double> losses(chunks.size());
    parallel_for(chunks.size(), cfg.jobs, [&](std::size_t c) {
      const std::uint64_t s = SplitMix64::derive_seed(SplitMix64::derive_seed(cfg.seed, static_cast<std::uint64_t>(step)), c);
      losses[c] = detail::chunk_loss_and_grads(mp, train_data, chunks[c], true, s, &grads[c]);
    });
    double loss = 0.0;
    for (double l : losses) loss += l;
    if (!std::isfinite(loss)) {
      Json rep = {{"step", step}, {"batch", idx}, {"seed", cfg.seed}, {"loss", std::to_string(loss)}};
      std::ofstream(cfg.nan_report_path) << rep.dump() << "\n";
      std::string ids;
      for (std::size_t i : idx) ids += (ids.empty() ? "" : ",") + std::to_string(i);
      fail(ErrorKind::kNumerical, "non-finite training loss at step " + std::to_string(step) + " on batch [" + ids +
                                      "]; details in " + cfg.nan_report_path);
    }
    ad::GradStore total = std::move(grads[0]);
    for (std::size_t c = 1; c < grads.size(); ++c)
      for (auto& [name, g] : total) {
        const auto& o = grads[c].at(name);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o[i];
      }
    ad::adam_step(mp.params, total, adam, cfg.adam);
    interval_loss += loss;
    interval_samples += idx.size();
    res.steps_run = step;

    if (step % cfg.validate_every == 0 || step == cfg.steps) {
      TrainLogEntry e;
      e.step = step;
      e.train_loss = interval_loss / static_cast<double>(interval_samples);
      e.val_loss = val_data.empty() ? e.train_loss : mean_loss(mp, val_data, cfg.jobs);
      res.log.push_back(e);
      interval_loss = 0.0;
      interval_samples = 0;
      spdlog::info("step {} train {:.6g} val {:.6g}", step, e.train_loss, e.val_loss);
      if (e.val_loss < res.best_val || val_data.empty()) {
        res.best_val = e.val_loss;
        res.best_step = step;
        res.best = mp;
        bad_validations = 0;
      } else if (cfg.patience > 0 && ++bad_validations >= cfg.patience) {
        res.early_stopped = true;
        break;
      }
    }
  }
  res.best.meta["best_step"] = std::to_string(res.best_step);
  return res;
}

// ---------------------------------------------------------------------------
// Evaluation.

struct MetricSummary {
  double mre = 0.0;
  std::size_t count = 0;     // pairs entering the mean
  std::size_t excluded = 0;  // pairs with a zero (or undefined) true value
};

struct EvalReport {
  MetricSummary delay;
  MetricSummary jitter;
  MetricSummary loss;  // pairs with at least one observed drop
  double loss_correlation = 0.0;
  bool correlation_degenerate = false;
  std::size_t pairs = 0;
  std::vector<double> delay_errors;  // signed (pred - true) / true
  std::vector<double> jitter_errors;
  std::vector<double> loss_errors;
};

/// Per-pair predictions aligned with SampleRecord::graph() path order.
using Predictor = std::function<std::vector<PathKpi>(const SampleRecord&)>;

inline double pearson(const std::vector<double>& x, const std::vector<double>& y, bool* degenerate = nullptr) {
  require(x.size() == y.size(), "pearson: length mismatch");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  auto constant = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [&](double e) { return e == v.front(); });
  };
  const bool deg = x.size() < 2 || constant(x) || constant(y) || sxx <= 0.0 || syy <= 0.0;
  if (degenerate) *degenerate = deg;
  return deg ? 0.0 : sxy / std::sqrt(sxx * syy);
}

inline EvalReport evaluate(const std::vector<SampleRecord>& data, const Predictor& predict, int jobs = 1) {
  std::vector<std::vector<PathKpi>> preds(data.size());
  parallel_for(data.size(), jobs, [&](std::size_t i) { preds[i] = predict(data[i]); });

  EvalReport r;
  double sd = 0, sj = 0, sl = 0;
  std::vector<double> pred_loss, true_loss;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto pairs = data[i].traffic.active_pairs();
    require(preds[i].size() == pairs.size(), "predictor returned the wrong number of paths");
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      const PairTarget& t = data[i].targets.at(pairs[k]);
      const PathKpi& p = preds[i][k];
      ++r.pairs;
      if (t.delivered > 0 && t.mean_delay > 0.0) {
        const double e = (p.delay - t.mean_delay) / t.mean_delay;
        r.delay_errors.push_back(e);
        sd += std::abs(e);
        ++r.delay.count;
      } else {
        ++r.delay.excluded;
      }
      if (t.delivered > 0 && t.delay_variance > 0.0) {
        const double e = (p.jitter - t.delay_variance) / t.delay_variance;
        r.jitter_errors.push_back(e);
        sj += std::abs(e);
        ++r.jitter.count;
      } else {
        ++r.jitter.excluded;
      }
      if (t.dropped > 0) {
        const double y = t.loss_ratio();
        const double e = (p.loss_ratio - y) / y;
        r.loss_errors.push_back(e);
        sl += std::abs(e);
        ++r.loss.count;
      } else {
        ++r.loss.excluded;
      }
      if (t.delivered + t.dropped > 0) {
        pred_loss.push_back(p.loss_ratio);
        true_loss.push_back(t.loss_ratio());
      }
    }
  }
  if (r.delay.count) r.delay.mre = sd / static_cast<double>(r.delay.count);
  if (r.jitter.count) r.jitter.mre = sj / static_cast<double>(r.jitter.count);
  if (r.loss.count) r.loss.mre = sl / static_cast<double>(r.loss.count);
  r.loss_correlation = pearson(pred_loss, true_loss, &r.correlation_degenerate);
  return r;
}

inline Predictor model_predictor(const ModelParams& delay, const ModelParams& drops) {
  return [&delay, &drops](const SampleRecord& s) { return predict_kpis(&delay, &drops, s.graph()); };
}

inline Predictor baseline_predictor(FixedPointOptions opt = {}) {
  return [opt](const SampleRecord& s) {
    const auto sol = solve_fixed_point(s.topology, s.routing, s.traffic, opt);
    std::vector<PathKpi> out;
    for (const NodePair& p : s.traffic.active_pairs()) {
      const QtPath& q = sol.paths.at(p);
      out.push_back({q.mean_delay, q.delay_variance, q.loss_ratio});
    }
    return out;
  };
}

/// Sorted (error, cumulative fraction) points; ties collapse into one step.
inline std::vector<std::pair<double, double>> export_cdf(std::vector<double> errors) {
  require(!errors.empty(), "export_cdf needs at least one value");
  std::sort(errors.begin(), errors.end());
  std::vector<std::pair<double, double>> out;
  const double n = static_cast<double>(errors.size());
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (i + 1 < errors.size() && errors[i + 1] == errors[i]) continue;
    out.emplace_back(errors[i], static_cast<double>(i + 1) / n);
  }
  return out;
}

inline void write_cdf_csv(const std::string& path, const std::vector<double>& errors) {
  std::ofstream os(path);
  require(os.good(), "cannot write " + path, ErrorKind::kIo);
  os << "relative_error,cdf\n";
  if (errors.empty()) return;
  char buf[64];
  for (const auto& [e, f] : export_cdf(errors)) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", e, f);
    os << buf;
  }
}

inline Json report_to_json(const EvalReport& r) {
  auto m = [](const MetricSummary& s) { return Json{{"mre", s.mre}, {"count", s.count}, {"excluded", s.excluded}}; };
  return {{"pairs", r.pairs},
          {"delay", m(r.delay)},
          {"jitter", m(r.jitter)},
          {"loss", m(r.loss)},
          {"loss_correlation", r.loss_correlation},
          {"correlation_degenerate", r.correlation_degenerate}};
}

}  // namespace routenet

#pragma once

// Message-passing model over paths and links with probabilistic readout
// heads, their negative log-likelihood losses, and checkpoint I/O.
//
// Each iteration runs a GRU along every path, feeding the states of the
// path's links in order; the state after each link is that link's message.
// Links then update with a second GRU whose input is the sum of the messages
// from the paths crossing them. A two-layer selu readout with a residual
// connection from the final path state maps each path to its head outputs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "routenet/autodiff.hpp"
#include "routenet/error.hpp"
#include "routenet/net_core.hpp"

namespace routenet {

enum class Head { kNormalDelay, kGammaDelay, kBinomialDrops };

inline std::string to_string(Head h) {
  switch (h) {
    case Head::kNormalDelay: return "normal-delay";
    case Head::kGammaDelay: return "gamma-delay";
    case Head::kBinomialDrops: return "binomial-drops";
  }
  return "?";
}

inline Head parse_head(const std::string& s) {
  if (s == "normal-delay" || s == "normal") return Head::kNormalDelay;
  if (s == "gamma-delay" || s == "gamma") return Head::kGammaDelay;
  if (s == "binomial-drops" || s == "binomial" || s == "drops") return Head::kBinomialDrops;
  fail(ErrorKind::kInvalidArgument, "unknown head '" + s + "'");
}

inline std::size_t head_width(Head h) { return h == Head::kBinomialDrops ? 1 : 2; }

struct ModelConfig {
  std::size_t hidden_dim = 32;
  int iterations = 8;
  std::size_t readout_hidden = 32;
  double dropout_rate = 0.5;
  Head head = Head::kNormalDelay;
  bool share_weights = true;

  void validate() const {
    require(hidden_dim >= 2, "hidden_dim must be >= feature width + 1 = 2");
    require(iterations >= 1, "iterations must be >= 1");
    require(readout_hidden >= 1, "readout_hidden must be >= 1");
    require(dropout_rate >= 0.0 && dropout_rate < 1.0, "dropout_rate must be in [0,1)");
  }
};

/// z-score statistics for the path (offered bandwidth) and link (capacity)
/// input features.
struct FeatureScaling {
  double demand_mean = 0.0;
  double demand_std = 1.0;
  double capacity_mean = 0.0;
  double capacity_std = 1.0;
};

struct ModelParams {
  ModelConfig config;
  FeatureScaling scaling;
  ad::ParamStore params;
  std::map<std::string, std::string> meta;
};

/// Paths and links of one scenario, or of several scenarios merged into a
/// single disconnected graph.
struct ScenarioGraph {
  std::vector<double> link_capacity;
  std::vector<std::vector<int>> paths;  // link ids, in traversal order
  std::vector<double> path_demand;      // bits per time unit
  std::vector<NodePair> pairs;          // per path, for reporting

  [[nodiscard]] std::size_t path_count() const noexcept { return paths.size(); }
  [[nodiscard]] std::size_t link_count() const noexcept { return link_capacity.size(); }
};

/// One path per pair with positive demand, in lexicographic pair order.
inline ScenarioGraph build_graph(const Topology& topo, const RoutingScheme& routing, const TrafficMatrix& tm) {
  ScenarioGraph g;
  for (const Link& l : topo.links()) g.link_capacity.push_back(l.capacity);
  for (const NodePair& p : tm.active_pairs()) {
    const auto* path = routing.find(p);
    require(path != nullptr, "pair " + to_string(p) + " has demand but no path", ErrorKind::kSchema);
    require(!path->empty(), "pair " + to_string(p) + " has an empty path", ErrorKind::kSchema);
    for (int lid : *path)
      require(lid >= 0 && lid < topo.link_count(),
              "pair " + to_string(p) + " references unknown link " + std::to_string(lid), ErrorKind::kSchema);
    g.paths.push_back(*path);
    g.path_demand.push_back(tm.demand(p.src, p.dst));
    g.pairs.push_back(p);
  }
  return g;
}

/// Disjoint union: link ids of graph i are shifted by the link count of all
/// graphs before it, so no path crosses sample boundaries.
inline ScenarioGraph merge_graphs(const std::vector<const ScenarioGraph*>& parts) {
  ScenarioGraph out;
  int offset = 0;
  for (const ScenarioGraph* g : parts) {
    out.link_capacity.insert(out.link_capacity.end(), g->link_capacity.begin(), g->link_capacity.end());
    for (const auto& p : g->paths) {
      std::vector<int> shifted(p);
      for (int& l : shifted) l += offset;
      out.paths.push_back(std::move(shifted));
    }
    out.path_demand.insert(out.path_demand.end(), g->path_demand.begin(), g->path_demand.end());
    out.pairs.insert(out.pairs.end(), g->pairs.begin(), g->pairs.end());
    offset += static_cast<int>(g->link_capacity.size());
  }
  return out;
}

namespace detail {

inline std::string gru_prefix(const char* base, const ModelConfig& cfg, int t) {
  return cfg.share_weights ? std::string(base) : std::string(base) + ".t" + std::to_string(t);
}

}  // namespace detail

/// Fresh parameters: Glorot-uniform weight matrices, zero biases.
inline ModelParams init_model(const ModelConfig& cfg, const FeatureScaling& scaling, std::uint64_t seed) {
  cfg.validate();
  ModelParams mp;
  mp.config = cfg;
  mp.scaling = scaling;
  SplitMix64 rng(SplitMix64::derive_seed(seed, 0x494e4954));
  const int copies = cfg.share_weights ? 1 : cfg.iterations;
  for (int t = 0; t < copies; ++t) {
    ad::GruCell{routenet::detail::gru_prefix("path_gru", cfg, t), cfg.hidden_dim, cfg.hidden_dim}.init(mp.params, rng);
    ad::GruCell{routenet::detail::gru_prefix("link_gru", cfg, t), cfg.hidden_dim, cfg.hidden_dim}.init(mp.params, rng);
  }
  const std::size_t rh = cfg.readout_hidden;
  mp.params["readout.W1"] = {ad::glorot_uniform(cfg.hidden_dim, rh, rng), true};
  mp.params["readout.b1"] = {ad::Tensor(rh, 0.0), false};
  mp.params["readout.W2"] = {ad::glorot_uniform(rh, rh, rng), true};
  mp.params["readout.b2"] = {ad::Tensor(rh, 0.0), false};
  if (rh != cfg.hidden_dim) {
    mp.params["readout.P"] = {ad::glorot_uniform(cfg.hidden_dim, rh, rng), true};
    mp.params["readout.bP"] = {ad::Tensor(rh, 0.0), false};
  }
  mp.params["readout.Wout"] = {ad::glorot_uniform(rh, head_width(cfg.head), rng), true};
  mp.params["readout.bout"] = {ad::Tensor(head_width(cfg.head), 0.0), false};
  mp.meta["init"] = "glorot-uniform/zero-bias";
  return mp;
}

/// Raw head pre-activations [paths, head_width] in the graph's path order.
inline ad::Var forward(ad::Tape& tape, const std::map<std::string, ad::Var>& vars, const ModelParams& mp,
                       const ScenarioGraph& g, bool train, std::uint64_t seed) {
  using namespace ad;
  const ModelConfig& cfg = mp.config;
  const std::size_t d = cfg.hidden_dim;
  const std::size_t np = g.path_count();
  const std::size_t nl = g.link_count();
  require(np > 0, "forward: scenario has no paths");
  for (std::size_t i = 0; i < np; ++i) {
    require(!g.paths[i].empty(), "forward: empty path", ErrorKind::kSchema);
    for (int l : g.paths[i])
      require(l >= 0 && static_cast<std::size_t>(l) < nl, "forward: path references unknown link",
              ErrorKind::kSchema);
  }

  // Longest paths first so the rows still active at step j form a prefix.
  std::vector<std::size_t> order(np);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return g.paths[a].size() > g.paths[b].size(); });
  const std::size_t max_len = g.paths[order.front()].size();
  std::vector<std::size_t> active(max_len);
  std::vector<std::vector<std::size_t>> step_links(max_len);
  for (std::size_t j = 0; j < max_len; ++j) {
    for (std::size_t r = 0; r < np && g.paths[order[r]].size() > j; ++r)
      step_links[j].push_back(static_cast<std::size_t>(g.paths[order[r]][j]));
    active[j] = step_links[j].size();
  }
  std::vector<std::size_t> message_links;
  for (const auto& s : step_links) message_links.insert(message_links.end(), s.begin(), s.end());

  Tensor hp0(np, d);
  for (std::size_t r = 0; r < np; ++r)
    hp0.at(r, 0) = (g.path_demand[order[r]] - mp.scaling.demand_mean) / mp.scaling.demand_std;
  Tensor hl0(nl, d);
  for (std::size_t l = 0; l < nl; ++l)
    hl0.at(l, 0) = (g.link_capacity[l] - mp.scaling.capacity_mean) / mp.scaling.capacity_std;
  Var hp = tape.constant(std::move(hp0));
  Var hl = tape.constant(std::move(hl0));

  for (int t = 0; t < cfg.iterations; ++t) {
    const GruVars path_gru = GruVars::from({routenet::detail::gru_prefix("path_gru", cfg, t), d, d}, vars);
    const GruVars link_gru = GruVars::from({routenet::detail::gru_prefix("link_gru", cfg, t), d, d}, vars);
    Var state = hp;
    std::vector<Var> messages;
    messages.reserve(max_len);
    for (std::size_t j = 0; j < max_len; ++j) {
      Var x = gather_rows(hl, step_links[j]);
      Var prefix = active[j] == np ? state : slice_rows(state, 0, active[j]);
      Var next = gru_step(path_gru, prefix, x);
      messages.push_back(next);
      state = active[j] == np ? next : concat_rows({next, slice_rows(state, active[j], np)});
    }
    Var all = messages.size() == 1 ? messages.front() : concat_rows(messages);
    Var aggregated = scatter_add_rows(all, message_links, nl);
    hl = gru_step(link_gru, hl, aggregated);
    hp = state;
  }

  const std::uint64_t s1 = SplitMix64::derive_seed(seed, 1);
  const std::uint64_t s2 = SplitMix64::derive_seed(seed, 2);
  Var z1 = dropout(selu(add_bias(matmul(hp, vars.at("readout.W1")), vars.at("readout.b1"))), cfg.dropout_rate,
                   train, s1);
  Var z2 = dropout(selu(add_bias(matmul(z1, vars.at("readout.W2")), vars.at("readout.b2"))), cfg.dropout_rate,
                   train, s2);
  Var residual = cfg.readout_hidden == d
                     ? hp
                     : add_bias(matmul(hp, vars.at("readout.P")), vars.at("readout.bP"));
  Var out = add_bias(matmul(add(z2, residual), vars.at("readout.Wout")), vars.at("readout.bout"));

  std::vector<std::size_t> inverse(np);
  for (std::size_t r = 0; r < np; ++r) inverse[order[r]] = r;
  return gather_rows(out, std::move(inverse));
}

// ---------------------------------------------------------------------------
// Head outputs.

struct NormalOutput {
  double mu = 0.0;
  double sigma = 1.0;
};
struct GammaOutput {
  double alpha = 1.0;
  double beta = 1.0;
};

inline NormalOutput normal_head(double y0, double y1) { return {y0, ad::softplus(y1)}; }
inline GammaOutput gamma_head(double y0, double y1) { return {ad::softplus(y0), ad::softplus(y1)}; }
inline double binomial_head(double y) { return ad::sigmoid(y); }

/// Evaluation-mode (or seeded train-mode) forward returning raw outputs.
inline ad::Tensor forward_values(const ModelParams& mp, const ScenarioGraph& g, bool train = false,
                                 std::uint64_t seed = 0) {
  ad::Tape tape;
  std::map<std::string, ad::Var> vars;
  for (const auto& [name, p] : mp.params) vars.emplace(name, tape.constant(p.value));
  return tape.value(forward(tape, vars, mp, g, train, seed));
}

// ---------------------------------------------------------------------------
// Losses. Double-valued forms operate on head outputs; tape forms operate on
// raw pre-activations and are what training differentiates.

struct PathTargets {
  double delivered = 0.0;  // n_i
  double mean_delay = 0.0;
  double delay_variance = 0.0;  // biased
  double mean_log_delay = 0.0;
  double dropped = 0.0;  // l_i
};

/// sum_i n_i (log sigma_i + s2_i / (2 sigma_i^2) + (wbar_i - mu_i)^2 / (2 sigma_i^2)).
inline double loss_normal(const std::vector<NormalOutput>& out, const std::vector<PathTargets>& tgt) {
  require(out.size() == tgt.size(), "loss_normal: output/target count mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    require(tgt[i].delay_variance >= 0.0, "loss_normal: negative variance target");
    require(tgt[i].delivered >= 0.0, "loss_normal: negative packet count");
    if (tgt[i].delivered == 0.0) continue;
    const double s2 = out[i].sigma * out[i].sigma;
    const double dev = tgt[i].mean_delay - out[i].mu;
    s += tgt[i].delivered * (std::log(out[i].sigma) + tgt[i].delay_variance / (2 * s2) + dev * dev / (2 * s2));
  }
  return s;
}

/// sum_i n_i (lgamma(a_i) + b_i wbar_i + (1 - a_i) mean_log_i - a_i log b_i).
inline double loss_gamma(const std::vector<GammaOutput>& out, const std::vector<PathTargets>& tgt) {
  require(out.size() == tgt.size(), "loss_gamma: output/target count mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (tgt[i].delivered == 0.0) continue;
    require(tgt[i].mean_delay > 0.0, "loss_gamma: non-positive mean delay with delivered packets");
    const double a = out[i].alpha;
    const double b = out[i].beta;
    s += tgt[i].delivered *
         (ad::lanczos_lgamma(a) + b * tgt[i].mean_delay + (1 - a) * tgt[i].mean_log_delay - a * std::log(b));
  }
  return s;
}

/// sum_i -(l_i log p_i + n_i log(1 - p_i)); binomial coefficient omitted.
inline double loss_binomial(const std::vector<double>& p, const std::vector<PathTargets>& tgt) {
  require(p.size() == tgt.size(), "loss_binomial: output/target count mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    s -= tgt[i].dropped * std::log(p[i]) + tgt[i].delivered * std::log1p(-p[i]);
  return s;
}

namespace detail {

inline ad::Var column_constant(ad::Tape& tape, const std::vector<PathTargets>& tgt, double PathTargets::*field) {
  ad::Tensor t(tgt.size(), std::size_t{1});
  for (std::size_t i = 0; i < tgt.size(); ++i) t[i] = tgt[i].*field;
  return tape.constant(std::move(t));
}

inline std::vector<double> delivered_weights(const std::vector<PathTargets>& tgt) {
  std::vector<double> w(tgt.size());
  for (std::size_t i = 0; i < tgt.size(); ++i) w[i] = tgt[i].delivered;
  return w;
}

}  // namespace detail

/// Negative log-likelihood of the selected head on the tape.
inline ad::Var head_loss(ad::Tape& tape, ad::Var raw, Head head, const std::vector<PathTargets>& tgt) {
  using namespace ad;
  require(tape.value(raw).rows() == tgt.size(), "head_loss: output/target count mismatch");
  switch (head) {
    case Head::kNormalDelay: {
      for (const auto& t : tgt) require(t.delay_variance >= 0.0, "loss_normal: negative variance target");
      Var mu = slice_cols(raw, 0, 1);
      Var sigma = softplus(slice_cols(raw, 1, 2));
      Var wbar = routenet::detail::column_constant(tape, tgt, &PathTargets::mean_delay);
      Var s2 = routenet::detail::column_constant(tape, tgt, &PathTargets::delay_variance);
      Var spread = add(s2, square(sub(wbar, mu)));
      Var per_path = add(log(sigma), mul(scale(spread, 0.5), reciprocal(square(sigma))));
      return dot_const(per_path, routenet::detail::delivered_weights(tgt));
    }
    case Head::kGammaDelay: {
      for (const auto& t : tgt)
        require(t.delivered == 0.0 || t.mean_delay > 0.0,
                "loss_gamma: non-positive mean delay with delivered packets");
      Var alpha = softplus(slice_cols(raw, 0, 1));
      Var beta = softplus(slice_cols(raw, 1, 2));
      Var wbar = routenet::detail::column_constant(tape, tgt, &PathTargets::mean_delay);
      Var mlog = routenet::detail::column_constant(tape, tgt, &PathTargets::mean_log_delay);
      Var per_path =
          sub(add(add(lgamma(alpha), mul(beta, wbar)), mul(one_minus(alpha), mlog)), mul(alpha, log(beta)));
      return dot_const(per_path, routenet::detail::delivered_weights(tgt));
    }
    case Head::kBinomialDrops: {
      // -log p = softplus(-y), -log(1-p) = softplus(y).
      std::vector<double> w;
      w.reserve(2 * tgt.size());
      for (const auto& t : tgt) w.push_back(t.dropped);
      for (const auto& t : tgt) w.push_back(t.delivered);
      Var both = concat_rows({softplus(scale(raw, -1.0)), softplus(raw)});
      return dot_const(both, std::move(w));
    }
  }
  fail(ErrorKind::kInvalidArgument, "unknown head");
}

// ---------------------------------------------------------------------------
// Predictions.

struct PathKpi {
  double delay = 0.0;
  double jitter = 0.0;  // delay variance
  double loss_ratio = 0.0;
};

struct DelayPrediction {
  double mean = 0.0;
  double variance = 0.0;
};

inline std::vector<DelayPrediction> predict_delay(const ModelParams& mp, const ScenarioGraph& g) {
  require(mp.config.head != Head::kBinomialDrops, "predict_delay: checkpoint has a drops head");
  const ad::Tensor raw = forward_values(mp, g);
  std::vector<DelayPrediction> out(g.path_count());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (mp.config.head == Head::kNormalDelay) {
      const auto h = normal_head(raw.at(i, 0), raw.at(i, 1));
      out[i] = {h.mu, h.sigma * h.sigma};
    } else {
      const auto h = gamma_head(raw.at(i, 0), raw.at(i, 1));
      out[i] = {h.alpha / h.beta, h.alpha / (h.beta * h.beta)};
    }
  }
  return out;
}

inline std::vector<double> predict_loss_ratio(const ModelParams& mp, const ScenarioGraph& g) {
  require(mp.config.head == Head::kBinomialDrops, "predict_loss_ratio: checkpoint is not a drops head");
  const ad::Tensor raw = forward_values(mp, g);
  std::vector<double> out(g.path_count());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = binomial_head(raw.at(i, 0));
  return out;
}

/// Delay from the delay head, jitter as its variance, loss ratio from the
/// drops head. Dropout is off.
inline std::vector<PathKpi> predict_kpis(const ModelParams* delay, const ModelParams* drops,
                                         const ScenarioGraph& g) {
  require(delay != nullptr, "predict_kpis: missing delay head", ErrorKind::kInvalidArgument);
  require(drops != nullptr, "predict_kpis: missing drops head", ErrorKind::kInvalidArgument);
  const auto d = predict_delay(*delay, g);
  const auto p = predict_loss_ratio(*drops, g);
  std::vector<PathKpi> out(g.path_count());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = {d[i].mean, d[i].variance, p[i]};
  return out;
}

struct HeadSpread {
  std::vector<std::vector<double>> mean;  // [path][output]
  std::vector<std::vector<double>> stddev;
};

/// Monte-Carlo dropout: `samples` train-mode passes with distinct sub-seeds;
/// per-path mean and (population) standard deviation of each head output
/// after its link function.
inline HeadSpread mc_dropout_sample(const ModelParams& mp, const ScenarioGraph& g, int samples,
                                    std::uint64_t seed) {
  require(samples >= 1, "samples must be >= 1");
  const std::size_t w = head_width(mp.config.head);
  HeadSpread out;
  out.mean.assign(g.path_count(), std::vector<double>(w, 0.0));
  out.stddev.assign(g.path_count(), std::vector<double>(w, 0.0));
  std::vector<std::vector<double>> sq(g.path_count(), std::vector<double>(w, 0.0));
  for (int s = 0; s < samples; ++s) {
    const ad::Tensor raw = forward_values(mp, g, true, SplitMix64::derive_seed(seed, static_cast<std::uint64_t>(s)));
    for (std::size_t i = 0; i < g.path_count(); ++i) {
      std::vector<double> v(w);
      if (mp.config.head == Head::kNormalDelay) {
        const auto h = normal_head(raw.at(i, 0), raw.at(i, 1));
        v = {h.mu, h.sigma};
      } else if (mp.config.head == Head::kGammaDelay) {
        const auto h = gamma_head(raw.at(i, 0), raw.at(i, 1));
        v = {h.alpha, h.beta};
      } else {
        v = {binomial_head(raw.at(i, 0))};
      }
      for (std::size_t k = 0; k < w; ++k) {
        out.mean[i][k] += v[k];
        sq[i][k] += v[k] * v[k];
      }
    }
  }
  for (std::size_t i = 0; i < g.path_count(); ++i)
    for (std::size_t k = 0; k < w; ++k) {
      out.mean[i][k] /= samples;
      out.stddev[i][k] = std::sqrt(std::max(0.0, sq[i][k] / samples - out.mean[i][k] * out.mean[i][k]));
    }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints: a single JSON document.
//
//   {"format": "routenet-checkpoint", "version": 1,
//    "config": {...}, "scaling": {...}, "meta": {string: string},
//    "params": {name: {"shape": [...], "weight": bool, "values": [...]}}}

inline constexpr int kCheckpointVersion = 1;

inline nlohmann::json params_to_json(const ad::ParamStore& params) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [name, p] : params)
    j[name] = {{"shape", p.value.shape()},
               {"weight", p.is_weight},
               {"values", std::vector<double>(p.value.values().begin(), p.value.values().end())}};
  return j;
}

inline ad::ParamStore params_from_json(const nlohmann::json& j) {
  ad::ParamStore out;
  for (const auto& [name, v] : j.items())
    out[name] = {ad::Tensor::from_shape(v.at("shape").get<std::vector<std::size_t>>(),
                                        v.at("values").get<std::vector<double>>()),
                 v.at("weight").get<bool>()};
  return out;
}

inline nlohmann::json checkpoint_to_json(const ModelParams& mp) {
  const auto& c = mp.config;
  nlohmann::json j;
  j["format"] = "routenet-checkpoint";
  j["version"] = kCheckpointVersion;
  j["config"] = {{"hidden_dim", c.hidden_dim},       {"iterations", c.iterations},
                 {"readout_hidden", c.readout_hidden}, {"dropout_rate", c.dropout_rate},
                 {"head", to_string(c.head)},          {"share_weights", c.share_weights}};
  j["scaling"] = {{"demand_mean", mp.scaling.demand_mean},
                  {"demand_std", mp.scaling.demand_std},
                  {"capacity_mean", mp.scaling.capacity_mean},
                  {"capacity_std", mp.scaling.capacity_std}};
  j["meta"] = mp.meta;
  j["params"] = params_to_json(mp.params);
  return j;
}

inline ModelParams checkpoint_from_json(const nlohmann::json& j) {
  try {
    require(j.at("format") == "routenet-checkpoint", "not a routenet checkpoint", ErrorKind::kSchema);
    require(j.at("version").get<int>() == kCheckpointVersion, "unsupported checkpoint version",
            ErrorKind::kSchema);
    ModelParams mp;
    const auto& c = j.at("config");
    mp.config.hidden_dim = c.at("hidden_dim").get<std::size_t>();
    mp.config.iterations = c.at("iterations").get<int>();
    mp.config.readout_hidden = c.at("readout_hidden").get<std::size_t>();
    mp.config.dropout_rate = c.at("dropout_rate").get<double>();
    mp.config.head = parse_head(c.at("head").get<std::string>());
    mp.config.share_weights = c.at("share_weights").get<bool>();
    const auto& s = j.at("scaling");
    mp.scaling = {s.at("demand_mean").get<double>(), s.at("demand_std").get<double>(),
                  s.at("capacity_mean").get<double>(), s.at("capacity_std").get<double>()};
    mp.meta = j.at("meta").get<std::map<std::string, std::string>>();
    mp.params = params_from_json(j.at("params"));
    return mp;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kSchema, std::string("malformed checkpoint: ") + e.what());
  }
}

inline void save_checkpoint(const ModelParams& mp, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  require(os.good(), "cannot write " + path, ErrorKind::kIo);
  os << checkpoint_to_json(mp).dump() << "\n";
}

inline ModelParams load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), "cannot read " + path, ErrorKind::kIo);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kSchema, path + ": " + e.what());
  }
  return checkpoint_from_json(j);
}

}  // namespace routenet

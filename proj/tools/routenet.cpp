// routenet: command-line front end for every pipeline stage.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <optional>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>

#include "cli_common.hpp"

using namespace routenet;
using namespace routenet::cli;

namespace {

std::function<void()>& pending_action() {
  static std::function<void()> f;
  return f;
}

// Subcommands run after parsing finishes, so global options such as
// --log-level are already in effect.
void defer(CLI::App* c, std::function<void()> f) {
  c->callback([f = std::move(f)] { pending_action() = f; });
}

// ---------------------------------------------------------------------------
// gen-topo

struct GenTopoArgs {
  std::string kind = "toy5";
  int nodes = 10;
  int chords = 5;
  std::vector<double> capacities{10000.0, 40000.0};
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_gen_topo(CLI::App& app) {
  auto a = std::make_shared<GenTopoArgs>();
  auto* c = app.add_subcommand("gen-topo", "Write a topology file (.topo)");
  c->add_option("--kind", a->kind, "toy5 | toy6 | toy7 | toy8 | nsfnet | ring")->capture_default_str();
  c->add_option("--nodes", a->nodes, "ring: node count")->capture_default_str();
  c->add_option("--chords", a->chords, "ring: random extra bidirectional links")->capture_default_str();
  c->add_option("--capacities", a->capacities, "ring: capacity choices, bits per time unit")->capture_default_str();
  c->add_option("--seed", a->seed, "ring: RNG seed (drawn and recorded if omitted)");
  c->add_option("--out", a->out, "output .topo path")->required();
  defer(c, [a] {
    std::map<std::string, std::uint64_t> seeds;
    Topology t;
    if (a->kind == "ring") {
      const auto seed = resolve_seed(a->seed);
      seeds["seed"] = seed;
      t = topologies::random_ring(a->nodes, a->chords, seed, a->capacities);
    } else if (auto named = topologies::by_name(a->kind)) {
      t = *named;
    } else {
      fail(ErrorKind::kInvalidArgument, "unknown topology kind '" + a->kind + "'");
    }
    const auto meta = make_meta(seeds);
    save_topology(a->out, t, &meta);
  });
}

// ---------------------------------------------------------------------------
// gen-tm

struct GenTmArgs {
  std::string topo;
  double ti = 10.0;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_gen_tm(CLI::App& app) {
  auto a = std::make_shared<GenTmArgs>();
  auto* c = app.add_subcommand("gen-tm", "Write a traffic matrix: demand(i,j) = U(0.1,1) * TI / (N-1) kbit per time unit");
  c->add_option("--topo", a->topo, "topology name or .topo file")->required();
  c->add_option("--ti", a->ti, "traffic intensity, kbit per time unit")->capture_default_str();
  c->add_option("--seed", a->seed, "RNG seed (drawn and recorded if omitted)");
  c->add_option("--out", a->out, "output .tm path")->required();
  defer(c, [a] {
    const auto t = topology_arg(a->topo);
    const auto seed = resolve_seed(a->seed);
    const auto meta = make_meta({{"seed", seed}});
    save_traffic(a->out, generate_traffic_matrix(t, a->ti, seed), &meta);
  });
}

// ---------------------------------------------------------------------------
// gen-routings

struct GenRoutingsArgs {
  std::string topo;
  int count = 10;
  int perturbed = 21;
  double delta = 0.05;
  std::optional<std::uint64_t> seed;
  std::string prefix;
};

void add_gen_routings(CLI::App& app) {
  auto a = std::make_shared<GenRoutingsArgs>();
  auto* c = app.add_subcommand(
      "gen-routings", "Write a family of shortest-path routings: <prefix>-NNN.routing, unit weights first");
  c->add_option("--topo", a->topo, "topology name or .topo file")->required();
  c->add_option("--count", a->count, "number of routings")->capture_default_str();
  c->add_option("--perturbed", a->perturbed, "links drawn (with replacement) per variant")->capture_default_str();
  c->add_option("--delta", a->delta, "weight added to each drawn link")->capture_default_str();
  c->add_option("--seed", a->seed, "RNG seed (drawn and recorded if omitted)");
  c->add_option("--prefix", a->prefix, "output path prefix")->required();
  defer(c, [a] {
    const auto t = topology_arg(a->topo);
    const auto seed = resolve_seed(a->seed);
    const auto meta = make_meta({{"seed", seed}});
    const auto schemes = generate_routing_variants(t, a->count, a->perturbed, a->delta, seed);
    char name[32];
    for (std::size_t i = 0; i < schemes.size(); ++i) {
      std::snprintf(name, sizeof name, "-%03zu.routing", i);
      save_routing(a->prefix + name, schemes[i], t.node_count(), &meta);
    }
  });
}

// ---------------------------------------------------------------------------
// simulate

struct SimArgs {
  double duration = 16000.0;
  double warmup = 0.10;
  std::string sizes = "bimodal";
  bool exclude_service = false;
};

void add_sim_options(CLI::App* c, SimArgs& s, const std::string& prefix = "") {
  c->add_option("--" + prefix + "duration", s.duration, "simulated time units")->capture_default_str();
  c->add_option("--" + prefix + "warmup", s.warmup, "fraction of the run discarded as warm-up")
      ->capture_default_str();
  c->add_option("--" + prefix + "packet-sizes", s.sizes,
                "bimodal (300 or 1700 bits) | exponential (mean 1000 bits)")
      ->capture_default_str();
  c->add_flag("--" + prefix + "buffer-excludes-service", s.exclude_service,
              "buffer size (packets) counts waiting packets only");
}

struct SimulateArgs {
  std::string topo, routing, tm, out;
  SimArgs sim;
  std::optional<std::uint64_t> seed;
};

void add_simulate(CLI::App& app) {
  auto a = std::make_shared<SimulateArgs>();
  auto* c = app.add_subcommand("simulate", "Packet-level simulation; per-pair delay (time units) and loss counts");
  c->add_option("--topo", a->topo, "topology name or .topo file (capacity in bits per time unit, buffer in packets)")
      ->required();
  c->add_option("--routing", a->routing, ".routing file")->required();
  c->add_option("--tm", a->tm, ".tm file (bits per time unit)")->required();
  add_sim_options(c, a->sim);
  c->add_option("--seed", a->seed, "RNG seed (drawn and recorded if omitted)");
  c->add_option("--out", a->out, "output JSON path ('-' for stdout)")->capture_default_str();
  defer(c, [a] {
    const auto t = topology_arg(a->topo);
    const auto r = load_routing(a->routing);
    const auto tm = load_traffic(a->tm);
    const auto seed = resolve_seed(a->seed);
    const auto cfg = sim_config(a->sim.duration, a->sim.warmup, a->sim.sizes, a->sim.exclude_service, seed);
    auto body = sim_result_to_json(simulate(t, r, tm, cfg));
    body["simulator"] = std::string(kSimulatorVersion);
    body["duration"] = cfg.duration;
    body["warmup_fraction"] = cfg.warmup_fraction;
    write_json(a->out, body, make_meta({{"seed", seed}}));
  });
}

// ---------------------------------------------------------------------------
// gen-dataset

struct GenDatasetArgs {
  std::vector<std::string> topos{"toy5", "toy6", "toy8"};
  int schemes = 20;
  int tms = 40;
  double ti_min = 8.0;
  double ti_max = 16.0;
  int perturbed = 21;
  double delta = 0.05;
  SimArgs sim;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_gen_dataset(CLI::App& app) {
  auto a = std::make_shared<GenDatasetArgs>();
  auto* c = app.add_subcommand("gen-dataset", "Simulate topologies x routings x traffic matrices into a sample file");
  c->add_option("--topologies", a->topos, "topology names or .topo files")->capture_default_str();
  c->add_option("--schemes", a->schemes, "routings per topology")->capture_default_str();
  c->add_option("--tms", a->tms, "traffic matrices per routing")->capture_default_str();
  c->add_option("--ti-min", a->ti_min, "lowest traffic intensity, kbit per time unit")->capture_default_str();
  c->add_option("--ti-max", a->ti_max, "highest traffic intensity, kbit per time unit")->capture_default_str();
  c->add_option("--perturbed", a->perturbed, "links drawn per routing variant")->capture_default_str();
  c->add_option("--delta", a->delta, "weight added per drawn link")->capture_default_str();
  add_sim_options(c, a->sim);
  c->add_option("--seed", a->seed, "RNG seed (drawn and recorded if omitted)");
  c->add_option("--out", a->out, "output path; .gz selects gzip shards")->required();
  defer(c, [a] {
    DatasetSpec spec;
    for (const auto& s : a->topos) spec.topologies.push_back(topology_arg(s));
    spec.schemes_per_topo = a->schemes;
    spec.tms_per_scheme = a->tms;
    spec.ti_min = a->ti_min;
    spec.ti_max = a->ti_max;
    spec.perturbed_links = a->perturbed;
    spec.delta = a->delta;
    spec.seed = resolve_seed(a->seed);
    spec.sim = sim_config(a->sim.duration, a->sim.warmup, a->sim.sizes, a->sim.exclude_service, 0);
    spec.jobs = gen_jobs();
    const auto rep = generate_dataset(spec);
    for (const auto& f : rep.failures) spdlog::warn("{}", f);
    const auto meta = make_meta({{"seed", spec.seed}});
    save_samples(a->out, rep.samples, &meta);
    spdlog::info("wrote {} samples ({} failed) fingerprint {}", rep.samples.size(), rep.failures.size(),
                 fingerprint(rep.samples));
  });
}

// ---------------------------------------------------------------------------
// split / inspect

struct SplitArgs {
  std::string data, mode = "hold-out-routing", train_out, test_out;
  double fraction = 0.2;
  std::vector<std::string> holdout;
  std::optional<std::uint64_t> seed;
};

void add_split(CLI::App& app) {
  auto a = std::make_shared<SplitArgs>();
  auto* c = app.add_subcommand("split", "Split a sample file into train and test files");
  c->add_option("--data", a->data, "input sample file")->required();
  c->add_option("--mode", a->mode, "random | hold-out-topology | hold-out-routing")->capture_default_str();
  c->add_option("--test-fraction", a->fraction, "target test share (ignored by hold-out-topology)")
      ->capture_default_str();
  c->add_option("--holdout", a->holdout, "hold-out-topology: topology names for the test side");
  c->add_option("--seed", a->seed, "RNG seed (drawn and recorded if omitted)");
  c->add_option("--train-out", a->train_out, "train sample file")->required();
  c->add_option("--test-out", a->test_out, "test sample file")->required();
  defer(c, [a] {
    const auto mode = parse_split_mode(a->mode);
    const auto data = load_samples(a->data);
    const auto seed = resolve_seed(a->seed);
    const auto sp = split_dataset(data, a->fraction, mode, seed, a->holdout);
    const auto meta = make_meta({{"seed", seed}});
    save_samples(a->train_out, select(data, sp.train), &meta);
    save_samples(a->test_out, select(data, sp.test), &meta);
    spdlog::info("train {} test {}", sp.train.size(), sp.test.size());
  });
}

void add_inspect(CLI::App& app) {
  auto path = std::make_shared<std::string>();
  auto* c = app.add_subcommand("inspect", "Summarize a sample file as JSON on stdout");
  c->add_option("--data", *path, "sample file")->required();
  defer(c, [path] {
    const auto data = load_samples(*path);
    std::map<std::string, std::size_t> per_topo;
    std::size_t pairs = 0, with_drops = 0;
    double ti_lo = std::numeric_limits<double>::infinity(), ti_hi = 0, max_loss = 0;
    for (const auto& s : data) {
      ++per_topo[s.topology.name()];
      ti_lo = std::min(ti_lo, s.traffic.ti());
      ti_hi = std::max(ti_hi, s.traffic.ti());
      for (const auto& [p, t] : s.targets) {
        ++pairs;
        with_drops += t.dropped > 0;
        max_loss = std::max(max_loss, t.loss_ratio());
      }
    }
    Json j = {{"samples", data.size()},  {"topologies", per_topo},     {"pairs", pairs},
              {"pairs_with_drops", with_drops}, {"max_loss_ratio", max_loss}, {"fingerprint", fingerprint(data)}};
    if (!data.empty()) j["ti_range"] = {ti_lo, ti_hi};
    std::printf("%s\n", j.dump(1).c_str());
  });
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string train, val, out, log, head = "normal", preset = "desk";
  std::optional<int> steps, hidden, readout, iterations, validate_every, patience;
  std::optional<std::size_t> batch;
  std::optional<double> lr, weight_decay, dropout;
  std::optional<std::uint64_t> seed;
};

void print_hyperparameters(const TrainConfig& c) {
  std::printf("hyperparameters:\n");
  std::printf("  head              %s\n", to_string(c.model.head).c_str());
  std::printf("  hidden_dim        %zu\n", c.model.hidden_dim);
  std::printf("  readout_hidden    %zu\n", c.model.readout_hidden);
  std::printf("  iterations (T)    %d\n", c.model.iterations);
  std::printf("  dropout           %g\n", c.model.dropout_rate);
  std::printf("  optimizer         Adam lr=%g beta1=%g beta2=%g eps=%g\n", c.adam.lr, c.adam.beta1, c.adam.beta2,
              c.adam.epsilon);
  std::printf("  l2 weight decay   %g\n", c.adam.weight_decay);
  std::printf("  batch_size        %zu\n", c.batch_size);
  std::printf("  steps             %d\n", c.steps);
  std::printf("  validate_every    %d\n", c.validate_every);
  std::printf("  patience          %d%s\n", c.patience, c.patience == 0 ? " (off)" : "");
  std::fflush(stdout);
}

void add_train(CLI::App& app) {
  auto a = std::make_shared<TrainArgs>();
  auto* c = app.add_subcommand("train", "Train one head (delay or drops) and write the best checkpoint");
  c->add_option("--train", a->train, "training sample file")->required();
  c->add_option("--val", a->val, "validation sample file (defaults to training loss)");
  c->add_option("--head", a->head, "normal | gamma | binomial")->capture_default_str();
  c->add_option("--preset", a->preset, "desk | paper (full-scale settings, no early stopping)")
      ->capture_default_str();
  c->add_option("--steps", a->steps, "optimizer steps");
  c->add_option("--batch", a->batch, "samples per minibatch");
  c->add_option("--lr", a->lr, "Adam learning rate");
  c->add_option("--weight-decay", a->weight_decay, "L2 coefficient");
  c->add_option("--hidden", a->hidden, "path/link state width");
  c->add_option("--readout", a->readout, "readout hidden width");
  c->add_option("--iterations", a->iterations, "message-passing iterations T");
  c->add_option("--dropout", a->dropout, "readout dropout rate");
  c->add_option("--validate-every", a->validate_every, "steps between validations");
  c->add_option("--patience", a->patience, "validations without improvement before stopping; 0 disables");
  c->add_option("--seed", a->seed, "init, batching and dropout seed (drawn and recorded if omitted)");
  c->add_option("--out", a->out, "checkpoint path")->required();
  c->add_option("--log", a->log, "CSV of step,train_loss,val_loss");
  defer(c, [a] {
    const Head head = parse_head(a->head);
    TrainConfig cfg;
    if (a->preset == "paper") cfg = paper_preset(head);
    else if (a->preset != "desk") fail(ErrorKind::kInvalidArgument, "unknown preset '" + a->preset + "'");
    cfg.model.head = head;
    if (a->steps) cfg.steps = *a->steps;
    if (a->batch) cfg.batch_size = *a->batch;
    if (a->lr) cfg.adam.lr = *a->lr;
    if (a->weight_decay) cfg.adam.weight_decay = *a->weight_decay;
    if (a->hidden) cfg.model.hidden_dim = static_cast<std::size_t>(*a->hidden);
    if (a->readout) cfg.model.readout_hidden = static_cast<std::size_t>(*a->readout);
    if (a->iterations) cfg.model.iterations = *a->iterations;
    if (a->dropout) cfg.model.dropout_rate = *a->dropout;
    if (a->validate_every) cfg.validate_every = *a->validate_every;
    if (a->patience) cfg.patience = *a->patience;
    cfg.seed = resolve_seed(a->seed);
    cfg.jobs = train_jobs();
    cfg.nan_report_path = a->out + ".nan.json";
    cfg.validate();
    if (a->preset == "paper") print_hyperparameters(cfg);

    const auto tr = load_samples(a->train);
    const auto val = a->val.empty() ? std::vector<SampleRecord>{} : load_samples(a->val);
    cfg.dataset_fingerprint = fingerprint(tr);
    auto res = train(cfg, tr, val);
    auto& meta = res.best.meta;
    meta["tool"] = std::string(kToolName) + "/" + kToolVersion;
    meta["argv"] = Json(globals().argv).dump();
    meta["early_stopped"] = res.early_stopped ? "true" : "false";
    save_checkpoint(res.best, a->out);
    if (!a->log.empty()) {
      std::string csv = "step,train_loss,val_loss\n";
      char buf[128];
      for (const auto& e : res.log) {
        std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g\n", e.step, e.train_loss, e.val_loss);
        csv += buf;
      }
      write_text(a->log, csv);
    }
    spdlog::info("best step {} val {:.6g} ({} steps run{})", res.best_step, res.best_val, res.steps_run,
                 res.early_stopped ? ", early stop" : "");
  });
}

// ---------------------------------------------------------------------------
// eval / compare / baseline

struct EvalArgs {
  std::string delay, drops, data, report, cdf_prefix;
  bool with_baseline = false;
};

void print_table(const std::string& label, const EvalReport& rn, const EvalReport* qt) {
  if (qt) {
    std::printf("%-16s %-19s %-19s %-19s\n", "", "Delay", "Jitter", "Drops");
    std::printf("%-16s %-9s %-9s %-9s %-9s %-9s %-9s\n", "", "RN", "QT", "RN", "QT", "RN", "QT");
    std::printf("%-16s %-9.4f %-9.4f %-9.4f %-9.4f %-9.4f %-9.4f\n", label.c_str(), rn.delay.mre, qt->delay.mre,
                rn.jitter.mre, qt->jitter.mre, rn.loss.mre, qt->loss.mre);
    std::printf("loss-ratio correlation: RN %.4f QT %.4f (%zu pairs; drops MRE over %zu pairs with drops)\n",
                rn.loss_correlation, qt->loss_correlation, rn.pairs, rn.loss.count);
  } else {
    std::printf("%-16s %-9s %-9s %-9s\n", "", "Delay", "Jitter", "Drops");
    std::printf("%-16s %-9.4f %-9.4f %-9.4f\n", label.c_str(), rn.delay.mre, rn.jitter.mre, rn.loss.mre);
    std::printf("loss-ratio correlation: %.4f%s (%zu pairs)\n", rn.loss_correlation,
                rn.correlation_degenerate ? " degenerate" : "", rn.pairs);
  }
}

void write_cdfs(const std::string& prefix, const EvalReport& r) {
  if (prefix.empty()) return;
  if (!r.delay_errors.empty()) write_cdf_csv(prefix + "delay_cdf.csv", r.delay_errors);
  if (!r.jitter_errors.empty()) write_cdf_csv(prefix + "jitter_cdf.csv", r.jitter_errors);
  if (!r.loss_errors.empty()) write_cdf_csv(prefix + "loss_cdf.csv", r.loss_errors);
}

void run_eval(const EvalArgs& a, bool force_baseline) {
  const auto data = load_samples(a.data);
  const auto d = load_checkpoint(a.delay);
  const auto p = load_checkpoint(a.drops);
  const auto rn = evaluate(data, model_predictor(d, p), gen_jobs());
  std::optional<EvalReport> qt;
  if (a.with_baseline || force_baseline) qt = evaluate(data, baseline_predictor(), gen_jobs());
  print_table(std::filesystem::path(a.data).filename().string(), rn, qt ? &*qt : nullptr);
  write_cdfs(a.cdf_prefix, rn);
  if (qt && !a.cdf_prefix.empty()) write_cdfs(a.cdf_prefix + "qt_", *qt);
  if (!a.report.empty()) {
    Json body = {{"data", a.data}, {"dataset_fingerprint", fingerprint(data)}, {"rn", report_to_json(rn)}};
    if (qt) body["qt"] = report_to_json(*qt);
    write_json(a.report, body, make_meta());
  }
}

void add_eval(CLI::App& app, const char* name, bool force_baseline) {
  auto a = std::make_shared<EvalArgs>();
  auto* c = app.add_subcommand(name, force_baseline ? "Model vs queueing baseline MRE table"
                                                    : "Mean relative error of a checkpoint pair on a sample file");
  c->add_option("--delay", a->delay, "delay-head checkpoint")->required();
  c->add_option("--drops", a->drops, "drops-head checkpoint")->required();
  c->add_option("--data", a->data, "sample file")->required();
  if (!force_baseline) c->add_flag("--with-baseline", a->with_baseline, "add queueing-baseline columns");
  c->add_option("--report", a->report, "JSON report path");
  c->add_option("--cdf-prefix", a->cdf_prefix, "write <prefix>{delay,jitter,loss}_cdf.csv of signed errors");
  defer(c, [a, force_baseline] { run_eval(*a, force_baseline); });
}

struct ScenarioArgs {
  std::string topo, routing, tm, out;
};

void add_scenario_options(CLI::App* c, ScenarioArgs& s) {
  c->add_option("--topo", s.topo, "topology name or .topo file")->required();
  c->add_option("--routing", s.routing, ".routing file")->required();
  c->add_option("--tm", s.tm, ".tm file (bits per time unit)")->required();
  c->add_option("--out", s.out, "output JSON path ('-' for stdout)")->capture_default_str();
}

void add_baseline(CLI::App& app) {
  auto a = std::make_shared<ScenarioArgs>();
  auto data = std::make_shared<std::string>();
  auto report = std::make_shared<std::string>();
  auto* c = app.add_subcommand(
      "baseline", "Queueing baseline: per-pair delay (time units), jitter (time units^2), loss ratio; or MRE on --data");
  c->add_option("--data", *data, "sample file: report baseline MRE instead of per-pair values");
  c->add_option("--topo", a->topo, "topology name or .topo file");
  c->add_option("--routing", a->routing, ".routing file");
  c->add_option("--tm", a->tm, ".tm file (bits per time unit)");
  c->add_option("--out", a->out, "output JSON path ('-' for stdout)")->capture_default_str();
  defer(c, [a, data] {
    if (!data->empty()) {
      const auto samples = load_samples(*data);
      const auto r = evaluate(samples, baseline_predictor(), gen_jobs());
      print_table(std::filesystem::path(*data).filename().string(), r, nullptr);
      if (!a->out.empty() && a->out != "-")
        write_json(a->out, {{"data", *data}, {"qt", report_to_json(r)}}, make_meta());
      return;
    }
    require(!a->topo.empty() && !a->routing.empty() && !a->tm.empty(),
            "baseline needs --data or all of --topo, --routing, --tm");
    const auto t = topology_arg(a->topo);
    const auto sol = solve_fixed_point(t, load_routing(a->routing), load_traffic(a->tm));
    PairKpis k;
    for (const auto& [p, q] : sol.paths) k[p] = {q.mean_delay, q.delay_variance, q.loss_ratio};
    write_json(a->out,
               {{"converged", sol.converged}, {"iterations", sol.iterations}, {"residual", sol.residual},
                {"pairs", kpis_to_json(k)}},
               make_meta());
  });
}

// ---------------------------------------------------------------------------
// predict

void add_predict(CLI::App& app) {
  auto a = std::make_shared<ScenarioArgs>();
  auto ck = std::make_shared<std::pair<std::string, std::string>>();
  auto mc = std::make_shared<int>(0);
  auto seed = std::make_shared<std::optional<std::uint64_t>>();
  auto* c = app.add_subcommand("predict",
                               "Model KPIs per pair: delay (time units), jitter (time units^2), loss ratio");
  add_scenario_options(c, *a);
  c->add_option("--delay", ck->first, "delay-head checkpoint")->required();
  c->add_option("--drops", ck->second, "drops-head checkpoint")->required();
  c->add_option("--mc-samples", *mc, "also report MC-dropout spread with this many passes")->capture_default_str();
  c->add_option("--seed", *seed, "MC-dropout seed (drawn and recorded if omitted)");
  defer(c, [a, ck, mc, seed] {
    const auto t = topology_arg(a->topo);
    const auto d = load_checkpoint(ck->first);
    const auto p = load_checkpoint(ck->second);
    const auto r = load_routing(a->routing);
    const auto tm = load_traffic(a->tm);
    Json body = {{"pairs", kpis_to_json(model_provider(d, p).evaluate(t, r, tm))}};
    std::map<std::string, std::uint64_t> seeds;
    if (*mc > 0) {
      const auto s = resolve_seed(*seed);
      seeds["seed"] = s;
      const auto g = build_graph(t, r, tm);
      const auto sd = mc_dropout_sample(d, g, *mc, s);
      const auto sp = mc_dropout_sample(p, g, *mc, SplitMix64::derive_seed(s, 1));
      Json spread = Json::array();
      for (std::size_t i = 0; i < g.path_count(); ++i)
        spread.push_back({{"src", g.pairs[i].src}, {"dst", g.pairs[i].dst}, {"delay_head_mean", sd.mean[i]},
                          {"delay_head_std", sd.stddev[i]}, {"loss_mean", sp.mean[i][0]},
                          {"loss_std", sp.stddev[i][0]}});
      body["mc_dropout"] = spread;
    }
    write_json(a->out, body, make_meta(seeds));
  });
}

// ---------------------------------------------------------------------------
// optimize-routing / plan-link

struct ProviderArgs {
  std::string provider = "baseline", delay, drops;
  SimArgs sim;
  std::optional<std::uint64_t> sim_seed;
  double loss_threshold = 1e-3, jitter_threshold = 0.2;
  int candidates = 20, perturbed = 21;
  double delta = 0.05;
  std::optional<std::uint64_t> variant_seed;
};

void add_provider_options(CLI::App* c, ProviderArgs& p) {
  c->add_option("--provider", p.provider, "model | baseline | simulator")->capture_default_str();
  c->add_option("--delay", p.delay, "model provider: delay-head checkpoint");
  c->add_option("--drops", p.drops, "model provider: drops-head checkpoint");
  add_sim_options(c, p.sim, "sim-");
  c->add_option("--sim-seed", p.sim_seed, "simulator seed, shared by all candidates (drawn if omitted)");
  c->add_option("--loss-threshold", p.loss_threshold, "bound on mean loss ratio")->capture_default_str();
  c->add_option("--jitter-threshold", p.jitter_threshold, "bound on mean(jitter/delay), time units")
      ->capture_default_str();
  c->add_option("--candidates", p.candidates, "routing variants to consider")->capture_default_str();
  c->add_option("--perturbed", p.perturbed, "links drawn per routing variant")->capture_default_str();
  c->add_option("--delta", p.delta, "weight added per drawn link")->capture_default_str();
  c->add_option("--variant-seed", p.variant_seed, "routing-variant seed (drawn and recorded if omitted)");
}

/// Owns the checkpoints a model provider refers to.
struct ProviderHandle {
  std::optional<ModelParams> delay, drops;
  KpiProvider provider;
};

std::unique_ptr<ProviderHandle> make_provider(const ProviderArgs& p, std::map<std::string, std::uint64_t>& seeds) {
  auto h = std::make_unique<ProviderHandle>();
  if (p.provider == "model") {
    require(!p.delay.empty() && !p.drops.empty(), "--provider model needs --delay and --drops");
    h->delay = load_checkpoint(p.delay);
    h->drops = load_checkpoint(p.drops);
    h->provider = model_provider(*h->delay, *h->drops);
  } else if (p.provider == "baseline") {
    h->provider = baseline_provider();
  } else if (p.provider == "simulator") {
    const auto s = resolve_seed(p.sim_seed, "sim-seed");
    seeds["sim_seed"] = s;
    h->provider = simulator_provider(sim_config(p.sim.duration, p.sim.warmup, p.sim.sizes, p.sim.exclude_service, s));
  } else {
    fail(ErrorKind::kInvalidArgument, "unknown provider '" + p.provider + "'");
  }
  return h;
}

OptimizationPolicy policy_of(const ProviderArgs& p) {
  OptimizationPolicy pol{p.loss_threshold, p.jitter_threshold};
  pol.validate();
  return pol;
}

struct OptimizeArgs {
  ProviderArgs prov;
  std::string topo, tm, out, csv, routing_out;
  bool study = false;
  std::vector<double> tis{10, 13, 16};
  int tms_per_ti = 10;
  std::optional<std::uint64_t> seed;
};

void add_optimize(CLI::App& app) {
  auto a = std::make_shared<OptimizeArgs>();
  auto* c = app.add_subcommand("optimize-routing",
                               "Pick a routing under loss and jitter/delay bounds, or run a routing study (--study)");
  c->add_option("--topo", a->topo, "topology name or .topo file")->required();
  c->add_option("--tm", a->tm, ".tm file (single selection)");
  add_provider_options(c, a->prov);
  c->add_option("--out", a->out, "decision trace or study summary JSON ('-' for stdout)")->capture_default_str();
  c->add_option("--routing-out", a->routing_out, "single selection: write the chosen .routing");
  c->add_flag("--study", a->study, "simulate provider choices over many traffic matrices");
  c->add_option("--tis", a->tis, "study: traffic intensities, kbit per time unit")->capture_default_str();
  c->add_option("--tms-per-ti", a->tms_per_ti, "study: traffic matrices per intensity")->capture_default_str();
  c->add_option("--seed", a->seed, "study: scenario seed (drawn and recorded if omitted)");
  c->add_option("--csv", a->csv, "study: per-scenario outcomes for boxplots");
  defer(c, [a] {
    const auto t = topology_arg(a->topo);
    const auto pol = policy_of(a->prov);
    std::map<std::string, std::uint64_t> seeds;
    if (a->study) {
      StudyConfig cfg;
      cfg.topology = t;
      cfg.tis = a->tis;
      cfg.tms_per_ti = a->tms_per_ti;
      cfg.candidates = a->prov.candidates;
      cfg.perturbed_links = a->prov.perturbed;
      cfg.delta = a->prov.delta;
      cfg.sim = sim_config(a->prov.sim.duration, a->prov.sim.warmup, a->prov.sim.sizes, a->prov.sim.exclude_service,
                           0);
      cfg.policy = pol;
      cfg.seed = resolve_seed(a->seed);
      cfg.jobs = gen_jobs();
      seeds["seed"] = cfg.seed;
      std::unique_ptr<ProviderHandle> model;
      if (!a->prov.delay.empty() || !a->prov.drops.empty()) {
        ProviderArgs p = a->prov;
        p.provider = "model";
        model = make_provider(p, seeds);
      }
      const auto rep = run_routing_study(cfg, model ? &model->provider : nullptr);
      Json summary = Json::object();
      std::vector<std::string> names{"sp-average", "utilization", "optimal"};
      if (model) names.push_back("routenet");
      for (const auto& n : names)
        summary[n] = {{"mean_delay", rep.mean_delay(n)}, {"loss_satisfaction", rep.loss_satisfaction(n)}};
      Json errors = Json::array();
      for (const auto& sc : rep.scenarios)
        if (!sc.error.empty()) errors.push_back({{"ti", sc.ti}, {"tm", sc.tm_index}, {"error", sc.error}});
      if (!a->csv.empty()) write_text(a->csv, study_csv(rep));
      write_json(a->out, {{"summary", summary}, {"scenarios", rep.scenarios.size()}, {"errors", errors}},
                 make_meta(seeds));
      return;
    }
    require(!a->tm.empty(), "optimize-routing needs --tm (or --study)");
    const auto tm = load_traffic(a->tm);
    const auto vseed = resolve_seed(a->prov.variant_seed, "variant-seed");
    seeds["variant_seed"] = vseed;
    const auto cands = generate_routing_variants(t, a->prov.candidates, a->prov.perturbed, a->prov.delta, vseed);
    const auto h = make_provider(a->prov, seeds);
    const auto trace = select_routing(t, cands, tm, h->provider, pol, gen_jobs());
    if (!a->routing_out.empty()) {
      const auto meta = make_meta(seeds);
      save_routing(a->routing_out, cands[trace.decision.chosen], t.node_count(), &meta);
    }
    write_json(a->out, {{"trace", trace_to_json(trace)}}, make_meta(seeds));
  });
}

struct PlanArgs {
  ProviderArgs prov;
  std::string topo, tm, out, csv;
  double capacity = 10000.0;
  bool use_cascade = false;
};

void add_plan(CLI::App& app) {
  auto a = std::make_shared<PlanArgs>();
  auto* c = app.add_subcommand("plan-link", "Best placement of one new bidirectional link (mean delay objective)");
  c->add_option("--topo", a->topo, "topology name or .topo file")->required();
  c->add_option("--tm", a->tm, ".tm file (bits per time unit)")->required();
  c->add_option("--capacity", a->capacity, "new link capacity, bits per time unit")->capture_default_str();
  c->add_flag("--cascade", a->use_cascade, "apply the loss and jitter/delay cascade per placement");
  add_provider_options(c, a->prov);
  c->add_option("--out", a->out, "report JSON ('-' for stdout)")->capture_default_str();
  c->add_option("--csv", a->csv, "one-row placement table");
  defer(c, [a] {
    const auto t = topology_arg(a->topo);
    const auto tm = load_traffic(a->tm);
    std::map<std::string, std::uint64_t> seeds;
    const auto vseed = resolve_seed(a->prov.variant_seed, "variant-seed");
    seeds["variant_seed"] = vseed;
    const auto h = make_provider(a->prov, seeds);
    const VariantConfig vc{a->prov.candidates, a->prov.perturbed, a->prov.delta, vseed};
    const auto res = plan_link(t, tm, a->capacity, vc, h->provider, policy_of(a->prov), a->use_cascade, gen_jobs());
    const auto& r = res.report;
    if (!a->csv.empty()) write_text(a->csv, plan_csv_header() + plan_csv_row(r));
    write_json(a->out,
               {{"placement", {r.placement.src, r.placement.dst}},
                {"chosen_candidate", r.chosen_candidate},
                {"original_delay", r.original_delay},
                {"original_jitter_ratio", r.original_jitter_ratio},
                {"new_delay", r.new_delay},
                {"new_jitter_ratio", r.new_jitter_ratio},
                {"upgraded_link", r.upgraded_link},
                {"baseline_delay", r.baseline_delay},
                {"baseline_jitter_ratio", r.baseline_jitter_ratio},
                {"delay_reduction_vs_original", r.delay_reduction_vs_original},
                {"delay_reduction_vs_baseline", r.delay_reduction_vs_baseline},
                {"placements_evaluated", r.placements_evaluated}},
               make_meta(seeds));
  });
}

// ---------------------------------------------------------------------------
// bench

void add_bench(CLI::App& app) {
  auto topo = std::make_shared<std::string>("nsfnet");
  auto ckpt = std::make_shared<std::string>();
  auto repeats = std::make_shared<int>(20);
  auto ti = std::make_shared<double>(10.0);
  auto* c = app.add_subcommand("bench", "Inference latency of one forward pass (milliseconds)");
  c->add_option("--topo", *topo, "topology name or .topo file")->capture_default_str();
  c->add_option("--checkpoint", *ckpt, "checkpoint (a fresh model if omitted)");
  c->add_option("--repeats", *repeats, "timed passes")->capture_default_str();
  c->add_option("--ti", *ti, "traffic intensity, kbit per time unit")->capture_default_str();
  defer(c, [topo, ckpt, repeats, ti] {
    require(*repeats >= 1, "--repeats must be >= 1");
    const auto t = topology_arg(*topo);
    const auto mp = ckpt->empty() ? init_model({}, {}, 1) : load_checkpoint(*ckpt);
    const auto g = build_graph(t, shortest_path_routing(t), generate_traffic_matrix(t, *ti, 1));
    std::vector<double> ms;
    for (int i = 0; i < *repeats; ++i) {
      const auto t0 = std::chrono::steady_clock::now();
      const auto out = forward_values(mp, g);
      ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
      require(out.size() > 0, "empty forward output", ErrorKind::kRuntime);
    }
    std::sort(ms.begin(), ms.end());
    std::printf("%s: %d nodes, %zu paths, %d links; median %.3f ms, min %.3f ms over %d passes\n",
                t.name().c_str(), t.node_count(), g.path_count(), t.link_count(), ms[ms.size() / 2], ms.front(),
                *repeats);
  });
}

}  // namespace

int main(int argc, char** argv) {
  globals().argv.assign(argv, argv + argc);
  spdlog::set_default_logger(spdlog::stderr_color_mt("routenet"));

  CLI::App app{"routenet: network KPI prediction, simulation and routing optimization.\n"
               "Units: bandwidth and capacity in bits per time unit, traffic intensity in kbit per time unit,\n"
               "delay in time units, jitter in time units^2, buffers in packets."};
  app.require_subcommand(1);
  app.set_config("--config", "", "key=value file; keys of a subcommand go under [name]; flags win");
  app.add_option("--jobs", globals().jobs, "worker threads (default: all cores, 1 for training)");
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace | debug | info | warn | error | off")->capture_default_str();

  add_gen_topo(app);
  add_gen_tm(app);
  add_gen_routings(app);
  add_simulate(app);
  add_gen_dataset(app);
  add_split(app);
  add_inspect(app);
  add_train(app);
  add_eval(app, "eval", false);
  add_eval(app, "compare", true);
  add_baseline(app);
  add_predict(app);
  add_optimize(app);
  add_plan(app);
  add_bench(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error(ErrorKind::kInvalidArgument, e.what());
  }
  try {
    spdlog::set_level(spdlog::level::from_str(log_level));
    pending_action()();
  } catch (const Error& e) {
    return report_error(e.kind(), e.what());
  } catch (const std::bad_alloc&) {
    return report_error(ErrorKind::kRuntime, "out of memory");
  } catch (const std::exception& e) {
    return report_error(ErrorKind::kRuntime, e.what());
  }
  return 0;
}

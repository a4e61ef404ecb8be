// Generate a small dataset, train both heads for a few hundred steps, and
// compare the model with the queueing baseline on held-out routings.

#include <cstdio>

#include "routenet/training.hpp"

using namespace routenet;

int main() {
  DatasetSpec spec;
  spec.topologies = {topologies::toy5(), topologies::toy6()};
  spec.schemes_per_topo = 6;
  spec.tms_per_scheme = 10;
  spec.delta = 0.5;
  spec.sim.duration = 4000;
  spec.seed = 3;
  spec.jobs = default_jobs();
  const auto data = generate_dataset(spec).samples;
  std::printf("%zu samples, fingerprint %s\n", data.size(), fingerprint(data).substr(0, 16).c_str());

  const auto split = split_dataset(data, 0.25, SplitMode::kHoldOutRouting, 1);
  const auto train_set = select(data, split.train);
  const auto test_set = select(data, split.test);

  TrainConfig cfg;
  cfg.model.hidden_dim = 16;
  cfg.model.readout_hidden = 16;
  cfg.model.iterations = 4;
  cfg.steps = 600;
  cfg.validate_every = 200;
  cfg.seed = 5;
  cfg.jobs = default_jobs();
  cfg.model.head = Head::kNormalDelay;
  const auto delay = train(cfg, train_set, test_set);
  cfg.model.head = Head::kBinomialDrops;
  const auto drops = train(cfg, train_set, test_set);

  const auto rn = evaluate(test_set, model_predictor(delay.best, drops.best));
  const auto qt = evaluate(test_set, baseline_predictor());
  std::printf("%-8s %-8s %-8s %-8s\n", "", "delay", "jitter", "drops");
  std::printf("%-8s %-8.4f %-8.4f %-8.4f\n", "RN", rn.delay.mre, rn.jitter.mre, rn.loss.mre);
  std::printf("%-8s %-8.4f %-8.4f %-8.4f\n", "QT", qt.delay.mre, qt.jitter.mre, qt.loss.mre);
  std::printf("loss-ratio correlation RN %.3f QT %.3f\n", rn.loss_correlation, qt.loss_correlation);
}

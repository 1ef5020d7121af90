// Trains a sparse meta network online on a short synthetic task stream, then
// scores it on a held-out stream with fast-weights only.

#include <cstdio>

#include "smnet/checkpoint.hpp"
#include "smnet/stream_experiment.hpp"

using namespace smnet;

int main() {
  stream::ExperimentConfig cfg;
  cfg.synth_classes = 40;
  cfg.synth_per_class = 200;
  cfg.feature_dim = 16;
  cfg.hidden = {64, 32};
  cfg.stream.total_tasks = 60;
  cfg.validate_every = 20;
  cfg.validation_tasks = 10;
  cfg.trainer.k = 3;
  cfg.trainer.fast = {0.99, 0.5, 0.5, 0.3, 0.5, CarryMode::carry};

  const auto splits = stream::load_splits(cfg);
  FastWeightModel model = stream::make_classifier(cfg, cfg.feature_dim, true, 1);
  const stream::TrainResult trained = stream::train_online(cfg, splits, model, cfg.trainer, true, 1);
  std::printf("training: %zu tasks, accuracy %.3f, best snapshot after %zu tasks\n", trained.train.tasks.size(),
              trained.train.metrics.mean_task_accuracy(), trained.best_tasks);

  for (const stream::LengthRange r : {stream::LengthRange{1, 15}, stream::LengthRange{20, 35}}) {
    const auto s = stream::evaluate_fast_only(trained.model, cfg.trainer, splits[2], cfg.stream, r, 40, 1);
    std::printf("eval %-6s accuracy %.3f  perseveration %.3f  interference %+.3f\n", r.label().c_str(), s.accuracy,
                s.perseveration_rate, s.interference);
  }

  save_checkpoint("quickstart.smnet", trained.model, cfg.trainer);
  const Checkpoint back = load_checkpoint("quickstart.smnet");
  std::printf("checkpoint round-trip exact: %s\n", same_state(back.model, trained.model) ? "yes" : "no");
}

#pragma once

#include "path_engine/config.hpp"

namespace test {

using namespace path_engine;

inline DatasetSpec tiny_dataset(const std::string& task, const std::string& dataset, TaskFamily family,
                                std::uint64_t seed) {
  DatasetSpec s;
  s.task = task;
  s.dataset = dataset;
  s.family = family;
  s.batch_per_replica = 4;
  s.data.height = 16;
  s.data.width = 16;
  s.data_seed = seed;
  s.num_samples = 32;
  s.head.family = family;
  s.head.num_outputs = family == TaskFamily::Counting ? 1 : default_num_classes(family);
  s.head.hidden = 8;
  return s;
}

/// Two pretraining datasets over two tasks, depth-3 toy backbone, short plans.
inline ExperimentConfig tiny_experiment(std::uint64_t seed = 3) {
  ExperimentConfig c;
  c.seed = seed;
  c.model.backbone.embed_dim = 16;
  c.model.backbone.depth = 3;
  c.model.backbone.heads = 2;
  c.model.backbone.mlp_ratio = 2;
  c.model.backbone.canonical_image = 16;
  c.plan.max_iter = 3;
  c.plan.warmup_steps = 1;
  c.plan.warmup_lr = 1e-3;
  c.plan.lr_mults = {};
  c.plan.lr_steps = {};
  c.plan.num_layers = 3;
  c.plan.seed = seed;
  c.datasets = {tiny_dataset("reid", "r1", TaskFamily::ReID, 1),
                tiny_dataset("attribute", "a1", TaskFamily::Attribute, 2)};
  c.evaluation.steps = 6;
  c.evaluation.batch_size = 8;
  c.evaluation.train_samples = 16;
  c.evaluation.test_samples = 8;
  c.evaluation.unseen = tiny_dataset("counting", "crowd", TaskFamily::Counting, 9);
  c.evaluation.transfer_dataset = "a1";
  return c;
}

}  // namespace test

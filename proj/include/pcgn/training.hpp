#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "pcgn/autodiff.hpp"
#include "pcgn/data.hpp"
#include "pcgn/model.hpp"
#include "pcgn/random.hpp"

namespace pcgn {

struct OptimizerConfig {
  double learning_rate = 0.001;
  std::size_t batch_size = 128;
  std::size_t epochs = 1;
  double clip_norm = 5.0;  // <= 0 disables clipping
  std::uint64_t seed = 1;

  void validate() const;
};

/// Teacher-forced negative log-likelihood (nats) summed over the comment tokens after BOS,
/// EOS included.
Var sequence_loss(Tape& tape, const Model& model, const EncodedExample& example);
double sequence_loss(const Model& model, const EncodedExample& example);

/// Per-position negative log-likelihoods; their sum is sequence_loss.
std::vector<double> token_losses(const Model& model, const EncodedExample& example);

struct UpdateStats {
  double gradient_norm = 0.0;
  double applied_scale = 1.0;  // clip factor applied to the gradients
};

/// Clips by global L2 norm when above `clip_norm`, then theta -= lr * g.
UpdateStats sgd_update(ParameterStore& params, const GradientSet& grads, double learning_rate, double clip_norm);

struct EpochMetrics {
  std::size_t epoch = 0;
  double mean_loss = 0.0;  // per token
  std::size_t tokens = 0;
  double ppl = 0.0;
  double seconds = 0.0;
};

/// Mini-batch SGD over a fixed dataset. Batches are drawn from a seeded shuffle each epoch;
/// the final partial batch is kept. Gradients are averaged per target token in the batch.
class Trainer {
 public:
  Trainer(Model& model, OptimizerConfig config);

  EpochMetrics train_epoch(std::span<const EncodedExample> data);
  std::size_t step() const { return step_; }
  std::size_t epoch() const { return epoch_; }

 private:
  Model& model_;
  OptimizerConfig config_;
  Rng rng_;
  std::size_t step_ = 0;
  std::size_t epoch_ = 0;
};

/// Sum of sequence losses and of target tokens over a dataset.
struct LossTotals {
  double loss = 0.0;
  std::size_t tokens = 0;
};
LossTotals total_loss(const Model& model, std::span<const EncodedExample> data);

}  // namespace pcgn

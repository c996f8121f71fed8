#include "pcgn/training.hpp"

#include <chrono>
#include <cmath>
#include <numeric>

namespace pcgn {

void OptimizerConfig::validate() const {
  if (!(learning_rate >= 0.0)) throw DomainError("optimizer: learning rate must be non-negative");
  if (batch_size < 1) throw DomainError("optimizer: batch size must be >= 1");
}

namespace {

void check_targets(const Model& model, const EncodedExample& example) {
  if (example.comment.size() < 2) throw DomainError("sequence_loss: comment must hold BOS and at least one target");
  for (TokenId id : example.comment) {
    if (id >= model.dims().vocab_size) {
      throw IndexError("sequence_loss: token id " + std::to_string(id) + " >= vocab size " +
                       std::to_string(model.dims().vocab_size));
    }
  }
}

/// Negative log-probabilities of each gold token under teacher forcing.
std::vector<Var> step_losses(Tape& tape, const Model& model, const EncodedExample& example) {
  check_targets(model, example);
  Encoding enc = encode_input(tape, model, example);
  DecoderState state = enc.initial;
  std::vector<Var> losses;
  losses.reserve(example.comment.size() - 1);
  for (std::size_t t = 1; t < example.comment.size(); ++t) {
    DecoderStep step = decoder_step(tape, model, enc, state, example.comment[t - 1]);
    losses.push_back(scale(pick(log_softmax(step.logits), example.comment[t]), -1.0));
    state = std::move(step.state);
  }
  return losses;
}

}  // namespace

Var sequence_loss(Tape& tape, const Model& model, const EncodedExample& example) {
  std::vector<Var> losses = step_losses(tape, model, example);
  Var total = losses.front();
  for (std::size_t i = 1; i < losses.size(); ++i) total = add(total, losses[i]);
  return total;
}

double sequence_loss(const Model& model, const EncodedExample& example) {
  Tape tape;
  return sequence_loss(tape, model, example).value().item();
}

std::vector<double> token_losses(const Model& model, const EncodedExample& example) {
  Tape tape;
  std::vector<double> out;
  for (Var v : step_losses(tape, model, example)) out.push_back(v.value().item());
  return out;
}

LossTotals total_loss(const Model& model, std::span<const EncodedExample> data) {
  LossTotals totals;
  for (const EncodedExample& ex : data) {
    totals.loss += sequence_loss(model, ex);
    totals.tokens += ex.target_tokens();
  }
  return totals;
}

UpdateStats sgd_update(ParameterStore& params, const GradientSet& grads, double learning_rate, double clip_norm) {
  UpdateStats stats;
  for (const auto& [id, g] : grads) {
    if (id >= params.size() || g.shape() != params.value(id).shape()) {
      throw DimensionError("sgd_update: gradient for parameter " + std::to_string(id) + " does not match its shape");
    }
  }
  if (!grads.all_finite()) throw NumericError("sgd_update: non-finite gradient");
  stats.gradient_norm = grads.global_norm();
  if (clip_norm > 0.0 && stats.gradient_norm > clip_norm) stats.applied_scale = clip_norm / stats.gradient_norm;
  const double step = learning_rate * stats.applied_scale;
  for (const auto& [id, g] : grads) {
    double* theta = params.value(id).data().data();
    const double* grad = g.data().data();
    for (std::size_t i = 0; i < g.size(); ++i) theta[i] -= step * grad[i];
  }
  return stats;
}

Trainer::Trainer(Model& model, OptimizerConfig config) : model_(model), config_(config), rng_(config.seed) {
  config_.validate();
}

EpochMetrics Trainer::train_epoch(std::span<const EncodedExample> data) {
  if (data.empty()) throw DataError("train_epoch: empty dataset");
  const auto start = std::chrono::steady_clock::now();
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng_.shuffle(order);

  std::vector<double> losses(data.size(), 0.0);
  std::size_t batch_index = 0;
  for (std::size_t begin = 0; begin < order.size(); begin += config_.batch_size, ++batch_index) {
    const std::size_t end = std::min(order.size(), begin + config_.batch_size);
    GradientSet batch;
    std::size_t tokens = 0;
    for (std::size_t k = begin; k < end; ++k) {
      const EncodedExample& ex = data[order[k]];
      Tape tape;
      Var loss = sequence_loss(tape, model_, ex);
      const double value = loss.value().item();
      if (!std::isfinite(value)) {
        throw NumericError("train_epoch: non-finite loss in batch " + std::to_string(batch_index) + " (epoch " +
                           std::to_string(epoch_ + 1) + ")");
      }
      losses[order[k]] = value;
      tokens += ex.target_tokens();
      batch.accumulate(backprop(tape, loss));
    }
    batch.scale(1.0 / static_cast<double>(tokens));
    try {
      sgd_update(model_.params(), batch, config_.learning_rate, config_.clip_norm);
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + " in batch " + std::to_string(batch_index) + " (epoch " +
                         std::to_string(epoch_ + 1) + ")");
    }
    ++step_;
  }

  EpochMetrics m;
  m.epoch = ++epoch_;
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    total += losses[i];
    m.tokens += data[i].target_tokens();
  }
  m.mean_loss = total / static_cast<double>(m.tokens);
  m.ppl = std::exp(m.mean_loss);
  m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return m;
}

}  // namespace pcgn

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "headprune/errors.hpp"
#include "headprune/grad.hpp"

namespace headprune {

double mean_loss(const EncoderModel& model, std::span<const TokenSequence> dataset) {
  if (dataset.empty()) throw InputError("mean_loss: empty dataset");
  double total = 0.0;
  for (const auto& x : dataset) total += objective(model, x, Scalarization::cross_entropy_loss);
  return total / static_cast<double>(dataset.size());
}

TrainResult train(EncoderModel model, std::span<const TokenSequence> dataset, const TrainOptions& opts) {
  if (dataset.empty()) throw InputError("train: empty dataset");
  if (!(opts.lr >= 0.0) || !std::isfinite(opts.lr)) throw InputError("train: lr must be finite and >= 0");
  if (opts.batch == 0) throw InputError("train: batch must be >= 1");

  std::mt19937_64 rng(opts.seed);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult result{std::move(model), {}};
  auto& m = result.model;
  for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += opts.batch) {
      const std::size_t end = std::min(order.size(), start + opts.batch);
      Parameters batch_grad = m.params().zeros_like();
      for (std::size_t i = start; i < end; ++i) {
        BackwardResult r;
        try {
          r = backward(m, dataset[order[i]], Scalarization::cross_entropy_loss);
        } catch (const NumericalError& e) {
          throw TrainingError("train: diverged in epoch " + std::to_string(epoch + 1) + ": " + e.what());
        }
        epoch_total += r.value;
        batch_grad.add_scaled(r.grads, 1.0);
      }
      m.params().add_scaled(batch_grad, -opts.lr / static_cast<double>(end - start));
    }
    const double epoch_mean = epoch_total / static_cast<double>(dataset.size());
    if (!std::isfinite(epoch_mean) || !m.params().all_finite()) {
      throw TrainingError("train: diverged in epoch " + std::to_string(epoch + 1));
    }
    result.epoch_loss.push_back(epoch_mean);
  }
  return result;
}

}  // namespace headprune

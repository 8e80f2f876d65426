#pragma once

#include <functional>

#include "oscope/nn/model.hpp"
#include "oscope/signalprep.hpp"
#include "oscope/types.hpp"

namespace oscope::nn {

struct EpochStats {
  std::size_t epoch = 0;
  double loss = 0.0;      // mean sparse categorical cross-entropy
  double accuracy = 0.0;  // on the training split
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
};

// Mean sparse categorical cross-entropy of logits against integer labels,
// and (optionally) the gradient at the logits, (softmax - one_hot) / B.
double sparse_ce_loss(const Tensor& logits, const std::vector<int>& labels,
                      Tensor* dlogits = nullptr);

using ProgressFn = std::function<void(const EpochStats&)>;

// Adam (beta1 0.9, beta2 0.999, eps 1e-7) over seeded per-epoch shuffles of
// the training split. Windows are normalized with the model's method on the
// fly. Deterministic given the model seed; aborts on non-finite loss.
TrainHistory train(Model& model, const Dataset& ds, const ProgressFn& progress = {});

// Same entry point for callers that already hold plain tensors.
TrainHistory train_tensors(Model& model, const Tensor& x, const std::vector<int>& labels,
                           const ProgressFn& progress = {});

struct EvalResult {
  double accuracy = 0.0;
  std::size_t correct = 0, total = 0;
  std::vector<std::size_t> confusion;  // c x c, row = true class
  double mean_latency_us = 0.0;
};

// Accuracy and confusion on the dataset's test split (or train split).
EvalResult evaluate(Model& model, const Dataset& ds, bool test_split = true,
                    std::size_t batch = 64);

// Single-window inference with measured latency.
ClassificationResult classify(Model& model, const prep::NormalizedWindow& window);

// Convenience: batch tensor from dataset windows (normalized per the model).
Tensor batch_from_windows(const Model& model, const Dataset& ds,
                          const std::vector<std::size_t>& indices, std::vector<int>* labels);

}  // namespace oscope::nn

#ifndef ADACBM_TRAINER_HPP_
#define ADACBM_TRAINER_HPP_

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "adacbm/classifier.hpp"
#include "adacbm/concept_selector.hpp"
#include "adacbm/embedding_io.hpp"
#include "adacbm/train_config.hpp"

namespace adacbm {

struct Sample {
  std::span<const double> x;
  std::size_t label = 0;
};

// One trainable tensor of a model, viewed flat. `mask`, when non-empty, marks
// entries that are frozen at their current value (mask == 0): they receive
// neither gradient nor weight decay.
struct ParamBlock {
  std::string name;
  std::span<double> values;
  bool weight_decay = false;
  std::span<const double> mask;
};

// Trainable tensors in a fixed order:
//   adacbm:       layer{l}.weight, layer{l}.bias for each layer, V, alpha_prime, beta
//   linear_probe: weight, bias
//   labo_head:    weights, bias
std::vector<ParamBlock> parameter_blocks(AnyModel& model);

// Gradients aligned with parameter_blocks(): blocks[b][i] is d(loss)/d(param).
struct GradientSet {
  std::vector<Vector> blocks;
};

// -log softmax(logits)[label] with log-sum-exp stabilization.
double cross_entropy_loss(std::span<const double> logits, std::size_t label);

struct BackwardResult {
  double loss = 0.0;  // mean over the batch
  GradientSet gradients;
  std::size_t correct = 0;  // argmax hits, evaluated before any update
};

// Analytic gradient of the mean cross-entropy over `batch`.
BackwardResult backward(const AnyModel& model, std::span<const Sample> batch);

// Linear decay from lr0 at epoch 0 to lr0 * lr_final_fraction at the last
// epoch; both endpoints are exact.
double lr_at(std::size_t epoch, const TrainConfig& config);

// p <- p - lr * (g + wd * p) for decayed blocks, p <- p - lr * g otherwise.
// Masked-off entries are left untouched.
void sgd_step(std::span<const ParamBlock> params, const GradientSet& gradients,
              double lr, double weight_decay);
void sgd_step(AnyModel& model, const GradientSet& gradients, double lr,
              double weight_decay);

// Concepts and mask a bottleneck model is initialized from.
struct BottleneckInit {
  ConceptBank bank;
  Matrix mask;
  std::size_t k = 0;
  double gamma = 0.0;
  TStatMode mode = TStatMode::kPaper;
};

// Gathers the selected concepts from the candidate pool in mask row order.
BottleneckInit bottleneck_from_selection(const SelectionResult& selection,
                                         const EmbeddingMatrix& pool,
                                         std::span<const ConceptRecord> records);

// Freshly initialized model of config.model_kind. Bottleneck kinds require
// `init` (kMissingSelection otherwise).
AnyModel initial_model(std::size_t dims, const std::optional<BottleneckInit>& init,
                       const TrainConfig& config,
                       std::vector<std::string> class_names);

struct EpochLog {
  std::size_t epoch = 0;
  double lr = 0.0;
  double mean_loss = 0.0;
  double train_acc = 0.0;
};

struct TrainResult {
  AnyModel model;
  std::vector<EpochLog> log;
};

// Seeded minibatch SGD; the returned model is the one after the last epoch.
// Empty `class_names` means class_0..class_{n-1}.
TrainResult train(const Dataset& dataset, const std::optional<BottleneckInit>& init,
                  const TrainConfig& config,
                  std::vector<std::string> class_names = {});

// {epoch, lr, mean_loss, train_acc} per line.
std::string epoch_log_jsonl(std::span<const EpochLog> log);

}  // namespace adacbm

#endif  // ADACBM_TRAINER_HPP_

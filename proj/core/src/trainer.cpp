#include "adacbm/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "adacbm/error.hpp"
#include "json.hpp"

namespace adacbm {

namespace {

std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

void check_sample(const Sample& s, std::size_t dims, std::size_t n_classes) {
  if (s.x.size() != dims) {
    throw Error(ErrorCode::kDimensionMismatch,
                "sample has " + std::to_string(s.x.size()) + " dims, model expects " +
                    std::to_string(dims));
  }
  if (s.label >= n_classes) {
    throw Error(ErrorCode::kLabelOutOfRange, "sample label " + std::to_string(s.label));
  }
}

// (softmax(z) - onehot(label)) / batch_size, plus loss and hit bookkeeping.
Vector logit_gradient(std::span<const double> logits, std::size_t label,
                      double inv_batch, BackwardResult& acc) {
  acc.loss += cross_entropy_loss(logits, label);
  if (argmax(logits) == label) ++acc.correct;
  Vector g = softmax(logits);
  g[label] -= 1.0;
  for (double& v : g) v *= inv_batch;
  return g;
}

void backward_adacbm(const AdaCbmModel& m, std::span<const Sample> batch,
                     BackwardResult& out) {
  const std::size_t d = m.dims();
  const std::size_t k = m.n_concepts();
  const std::size_t n = m.n_classes();
  const std::size_t layers = m.adapter.layers.size();
  const double slope = m.adapter.negative_slope;
  const auto& head = m.head;
  const double inv_batch = 1.0 / static_cast<double>(batch.size());

  auto& blocks = out.gradients.blocks;
  for (const auto& layer : m.adapter.layers) {
    blocks.emplace_back(layer.weight.size(), 0.0);
    blocks.emplace_back(layer.bias.size(), 0.0);
  }
  blocks.emplace_back(k * n, 0.0);
  blocks.emplace_back(k, 0.0);
  blocks.emplace_back(n, 0.0);
  Vector& g_v = blocks[2 * layers];
  Vector& g_alpha = blocks[2 * layers + 1];
  Vector& g_beta = blocks[2 * layers + 2];

  std::vector<Vector> inputs(layers + 1);
  std::vector<Vector> pre(layers);
  for (const auto& sample : batch) {
    check_sample(sample, d, n);

    inputs[0].assign(sample.x.begin(), sample.x.end());
    for (std::size_t l = 0; l < layers; ++l) {
      const auto& layer = m.adapter.layers[l];
      pre[l].resize(d);
      inputs[l + 1].resize(d);
      for (std::size_t r = 0; r < d; ++r) {
        pre[l][r] = dot(layer.weight.row(r), inputs[l]) + layer.bias[r];
        inputs[l + 1][r] = l + 1 == layers ? pre[l][r] : leaky_relu(pre[l][r], slope);
      }
    }
    const Vector& adapted = inputs[layers];

    Vector shifted(k);
    for (std::size_t j = 0; j < k; ++j) {
      shifted[j] = dot(adapted, m.concepts.embeddings.row(j)) + head.alpha_prime[j];
    }
    Vector logits(n);
    for (std::size_t i = 0; i < n; ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        if (head.mask(j, i) != 0.0) sum += head.weights(j, i) * shifted[j];
      }
      logits[i] = sum + head.beta[i];
    }

    const Vector g_z = logit_gradient(logits, sample.label, inv_batch, out);
    for (std::size_t i = 0; i < n; ++i) g_beta[i] += g_z[i];

    Vector g_shifted(k, 0.0);
    for (std::size_t j = 0; j < k; ++j) {
      for (std::size_t i = 0; i < n; ++i) {
        if (head.mask(j, i) == 0.0) continue;
        g_v[j * n + i] += g_z[i] * shifted[j];
        g_shifted[j] += head.weights(j, i) * g_z[i];
      }
      g_alpha[j] += g_shifted[j];
    }

    Vector g_h(d, 0.0);
    for (std::size_t j = 0; j < k; ++j) {
      auto t = m.concepts.embeddings.row(j);
      for (std::size_t c = 0; c < d; ++c) g_h[c] += g_shifted[j] * t[c];
    }

    for (std::size_t l = layers; l-- > 0;) {
      const auto& layer = m.adapter.layers[l];
      Vector g_pre = g_h;
      if (l + 1 != layers) {
        for (std::size_t r = 0; r < d; ++r) {
          if (pre[l][r] < 0.0) g_pre[r] *= slope;
        }
      }
      Vector& g_w = blocks[2 * l];
      Vector& g_b = blocks[2 * l + 1];
      for (std::size_t r = 0; r < d; ++r) {
        g_b[r] += g_pre[r];
        for (std::size_t c = 0; c < d; ++c) g_w[r * d + c] += g_pre[r] * inputs[l][c];
      }
      if (l == 0) break;
      std::fill(g_h.begin(), g_h.end(), 0.0);
      for (std::size_t r = 0; r < d; ++r) {
        auto w_row = layer.weight.row(r);
        for (std::size_t c = 0; c < d; ++c) g_h[c] += w_row[c] * g_pre[r];
      }
    }
  }
}

void backward_linear(const LinearProbe& m, std::span<const Sample> batch,
                     BackwardResult& out) {
  const std::size_t d = m.weight.cols();
  const std::size_t n = m.weight.rows();
  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  out.gradients.blocks = {Vector(n * d, 0.0), Vector(n, 0.0)};
  auto& g_w = out.gradients.blocks[0];
  auto& g_b = out.gradients.blocks[1];
  for (const auto& sample : batch) {
    check_sample(sample, d, n);
    const auto g_z = logit_gradient(linear_probe_logits(m, sample.x), sample.label,
                                    inv_batch, out);
    for (std::size_t i = 0; i < n; ++i) {
      g_b[i] += g_z[i];
      for (std::size_t c = 0; c < d; ++c) g_w[i * d + c] += g_z[i] * sample.x[c];
    }
  }
}

void backward_labo(const LaboHead& m, std::span<const Sample> batch,
                   BackwardResult& out) {
  const std::size_t k = m.concepts.size();
  const std::size_t n = m.bias.size();
  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  out.gradients.blocks = {Vector(k * n, 0.0), Vector(n, 0.0)};
  auto& g_w = out.gradients.blocks[0];
  auto& g_b = out.gradients.blocks[1];
  for (const auto& sample : batch) {
    check_sample(sample, m.concepts.embeddings.cols(), n);
    const auto s = labo_similarities(m, sample.x);
    Vector logits(n);
    for (std::size_t i = 0; i < n; ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < k; ++j) sum += m.weights(j, i) * s[j];
      logits[i] = sum + m.bias[i];
    }
    const auto g_z = logit_gradient(logits, sample.label, inv_batch, out);
    for (std::size_t i = 0; i < n; ++i) g_b[i] += g_z[i];
    for (std::size_t j = 0; j < k; ++j) {
      for (std::size_t i = 0; i < n; ++i) g_w[j * n + i] += g_z[i] * s[j];
    }
  }
}

}  // namespace

std::vector<ParamBlock> parameter_blocks(AnyModel& any) {
  std::vector<ParamBlock> blocks;
  if (auto* m = std::get_if<AdaCbmModel>(&any)) {
    for (std::size_t l = 0; l < m->adapter.layers.size(); ++l) {
      auto& layer = m->adapter.layers[l];
      const auto prefix = "layer" + std::to_string(l);
      blocks.push_back({prefix + ".weight", layer.weight.values(), true, {}});
      blocks.push_back({prefix + ".bias", layer.bias, false, {}});
    }
    blocks.push_back({"V", m->head.weights.values(), true, m->head.mask.values()});
    blocks.push_back({"alpha_prime", m->head.alpha_prime, false, {}});
    blocks.push_back({"beta", m->head.beta, false, {}});
  } else if (auto* m = std::get_if<LinearProbe>(&any)) {
    blocks.push_back({"weight", m->weight.values(), true, {}});
    blocks.push_back({"bias", m->bias, false, {}});
  } else {
    auto& labo = std::get<LaboHead>(any);
    blocks.push_back({"weights", labo.weights.values(), true, {}});
    blocks.push_back({"bias", labo.bias, false, {}});
  }
  return blocks;
}

double cross_entropy_loss(std::span<const double> logits, std::size_t label) {
  if (label >= logits.size()) {
    throw Error(ErrorCode::kLabelOutOfRange,
                "label " + std::to_string(label) + " with " +
                    std::to_string(logits.size()) + " logits");
  }
  const double max = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double z : logits) total += std::exp(z - max);
  return max + std::log(total) - logits[label];
}

BackwardResult backward(const AnyModel& model, std::span<const Sample> batch) {
  if (batch.empty()) throw Error(ErrorCode::kEmptyDataset, "backward on an empty batch");
  BackwardResult out;
  if (const auto* m = std::get_if<AdaCbmModel>(&model)) {
    backward_adacbm(*m, batch, out);
  } else if (const auto* m = std::get_if<LinearProbe>(&model)) {
    backward_linear(*m, batch, out);
  } else {
    backward_labo(std::get<LaboHead>(model), batch, out);
  }
  out.loss /= static_cast<double>(batch.size());
  return out;
}

double lr_at(std::size_t epoch, const TrainConfig& config) {
  if (config.epochs <= 1) return config.lr0;
  const double t = static_cast<double>(epoch) / static_cast<double>(config.epochs - 1);
  return config.lr0 * ((1.0 - t) + t * config.lr_final_fraction);
}

void sgd_step(std::span<const ParamBlock> params, const GradientSet& gradients,
              double lr, double weight_decay) {
  if (params.size() != gradients.blocks.size()) {
    throw Error(ErrorCode::kLengthMismatch, "gradient set does not match parameters");
  }
  for (std::size_t b = 0; b < params.size(); ++b) {
    const auto& block = params[b];
    const auto& grad = gradients.blocks[b];
    if (grad.size() != block.values.size()) {
      throw Error(ErrorCode::kLengthMismatch, "gradient shape mismatch for " + block.name);
    }
    const double decay = block.weight_decay ? weight_decay : 0.0;
    for (std::size_t i = 0; i < grad.size(); ++i) {
      if (!block.mask.empty() && block.mask[i] == 0.0) continue;
      double& p = block.values[i];
      p -= lr * (grad[i] + decay * p);
    }
  }
}

void sgd_step(AnyModel& model, const GradientSet& gradients, double lr,
              double weight_decay) {
  const auto blocks = parameter_blocks(model);
  sgd_step(blocks, gradients, lr, weight_decay);
}

BottleneckInit bottleneck_from_selection(const SelectionResult& selection,
                                         const EmbeddingMatrix& pool,
                                         std::span<const ConceptRecord> records) {
  if (pool.rows() != records.size()) {
    throw Error(ErrorCode::kLengthMismatch,
                std::to_string(pool.rows()) + " concept embeddings vs " +
                    std::to_string(records.size()) + " concept records");
  }
  BottleneckInit init;
  const auto& order = selection.mask.concept_order;
  init.bank.embeddings = Matrix(order.size(), pool.dims());
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (order[r] >= pool.rows()) {
      throw Error(ErrorCode::kUnknownConcept, "selection row outside the concept pool");
    }
    auto src = pool.row(order[r]);
    std::copy(src.begin(), src.end(), init.bank.embeddings.row(r).begin());
    init.bank.ids.push_back(records[order[r]].id);
    init.bank.texts.push_back(records[order[r]].text);
  }
  init.mask = selection.mask.mask;
  init.k = selection.k;
  init.gamma = selection.gamma;
  init.mode = selection.mode;
  return init;
}

AnyModel initial_model(std::size_t dims, const std::optional<BottleneckInit>& init,
                       const TrainConfig& config,
                       std::vector<std::string> class_names) {
  config.validate();
  AnyModel model;
  if (config.model_kind == ModelKind::kLinearProbe) {
    model = make_linear_probe(dims, std::move(class_names));
  } else {
    if (!init) {
      throw Error(ErrorCode::kMissingSelection,
                  std::string(model_kind_name(config.model_kind)) +
                      " needs a concept selection");
    }
    if (init->bank.embeddings.cols() != dims) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "concept dims " + std::to_string(init->bank.embeddings.cols()) +
                      " != image dims " + std::to_string(dims));
    }
    if (init->mask.cols() != class_names.size()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "selection covers " + std::to_string(init->mask.cols()) +
                      " classes, dataset has " + std::to_string(class_names.size()));
    }
    if (config.model_kind == ModelKind::kAdaCbm) {
      model = make_adacbm(init->bank, init->mask, std::move(class_names),
                          config.adapter_layers);
    } else {
      model = make_labo_head(init->bank, init->mask, std::move(class_names));
    }
  }
  auto& provenance = model_provenance(model);
  provenance.config = config;
  if (init && config.model_kind != ModelKind::kLinearProbe) {
    provenance.selection_k = init->k;
    provenance.selection_gamma = init->gamma;
    provenance.selection_mode = init->mode;
  }
  return model;
}

TrainResult train(const Dataset& dataset, const std::optional<BottleneckInit>& init,
                  const TrainConfig& config, std::vector<std::string> class_names) {
  config.validate();
  if (dataset.size() == 0) throw Error(ErrorCode::kEmptyDataset, "training set is empty");
  if (class_names.empty()) class_names = default_class_names(dataset.n_classes);
  if (class_names.size() != dataset.n_classes) {
    throw Error(ErrorCode::kInvalidArgument, "class_names does not match n_classes");
  }

  TrainResult result{initial_model(dataset.dims(), init, config, std::move(class_names)),
                     {}};
  const Matrix features = dataset.embeddings.to_matrix();
  std::vector<Sample> samples;
  samples.reserve(dataset.size());
  for (std::size_t r = 0; r < dataset.size(); ++r) {
    samples.push_back({features.row(r), dataset.records[r].label});
  }

  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<Sample> batch;
  batch.reserve(config.batch_size);
  const auto blocks = parameter_blocks(result.model);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    const double lr = lr_at(epoch, config);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      batch.clear();
      for (std::size_t i = start; i < stop; ++i) batch.push_back(samples[order[i]]);
      const auto step = backward(result.model, batch);
      loss_sum += step.loss * static_cast<double>(batch.size());
      correct += step.correct;
      sgd_step(blocks, step.gradients, lr, config.weight_decay);
    }
    const double total = static_cast<double>(samples.size());
    result.log.push_back({epoch, lr, loss_sum / total, static_cast<double>(correct) / total});
  }
  return result;
}

std::string epoch_log_jsonl(std::span<const EpochLog> log) {
  std::string out;
  for (const auto& entry : log) {
    out += nlohmann::json{{"epoch", entry.epoch},
                          {"lr", entry.lr},
                          {"mean_loss", entry.mean_loss},
                          {"train_acc", entry.train_acc}}
               .dump();
    out += '\n';
  }
  return out;
}

}  // namespace adacbm

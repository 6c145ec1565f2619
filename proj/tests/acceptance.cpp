// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
// failure.

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>

#include "adacbm/checkpoint.hpp"
#include "adacbm/concept_selector.hpp"
#include "adacbm/evaluator.hpp"
#include "adacbm/synthetic.hpp"
#include "adacbm/trainer.hpp"
#include "test_support.hpp"

using namespace adacbm;
using namespace adacbm::testing;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* pattern, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, pattern, args...);
  return buf;
}

EmbeddingMatrix to_embeddings(const Matrix& m) {
  std::vector<float> data(m.values().begin(), m.values().end());
  return EmbeddingMatrix(m.rows(), m.cols(), std::move(data));
}

std::vector<ConceptRecord> untagged(std::size_t k) {
  std::vector<ConceptRecord> out;
  for (std::size_t j = 0; j < k; ++j) out.push_back({"k" + std::to_string(j), "t", {}, {}});
  return out;
}

// ---------------------------------------------------------------------------

Outcome gradient_correctness() {
  const auto start = Clock::now();
  std::mt19937_64 rng(2024);
  double worst = 0.0;
  const int instances = 40;
  for (int trial = 0; trial < instances; ++trial) {
    const std::size_t d = 1 + rng() % 4, k = 1 + rng() % 6, n = 1 + rng() % 3;
    const std::size_t layers = 1 + trial % 2;
    AnyModel model = random_model(d, k, n, layers, rng);
    std::vector<Vector> xs;
    std::vector<Sample> batch;
    const std::size_t b = 1 + rng() % 4;
    for (std::size_t s = 0; s < b; ++s) xs.push_back(random_vector(d, rng, -2.0, 2.0));
    for (std::size_t s = 0; s < b; ++s) batch.push_back({xs[s], rng() % n});
    worst = std::max(worst, worst_fd_error(model, batch));
  }
  const double secs = seconds_since(start);
  return {worst < 1e-6 && secs < 10.0,
          fmt("%d instances, max rel err %.2e, %.2fs", instances, worst, secs)};
}

Outcome decomposition_identity() {
  const auto start = Clock::now();
  std::mt19937_64 rng(7);
  double worst_sum = 0.0, worst_dot = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t d = 1 + rng() % 8, k = 1 + rng() % 8, n = 1 + rng() % 5;
    const auto model = random_model(d, k, n, 1 + rng() % 2, rng);
    const Vector x = random_vector(d, rng, -2.0, 2.0);
    const auto interp = decompose(model, x);
    const auto z = forward_logits(model, x);
    Vector sums = model.head.beta;
    for (const auto& t : interp.terms) {
      sums[t.class_index] += t.contribution;
      worst_dot = std::max(worst_dot, std::abs(t.dot - t.image_norm * t.text_norm * t.cosine));
    }
    for (std::size_t i = 0; i < n; ++i) worst_sum = std::max(worst_sum, std::abs(sums[i] - z[i]));
  }
  const double secs = seconds_since(start);
  return {worst_sum <= 1e-9 && worst_dot <= 1e-9 && secs < 5.0,
          fmt("1000 pairs, recompose %.1e, dot %.1e, %.2fs", worst_sum, worst_dot, secs)};
}

Outcome mask_invariant() {
  SyntheticSpec spec;
  spec.seed = 5;
  const auto problem = make_synthetic_problem(spec);
  const auto sel = select_concepts(problem.train, problem.concept_embeddings, problem.concepts,
                                   {4, 0.9, TStatMode::kPaper});
  const auto init = bottleneck_from_selection(sel, problem.concept_embeddings, problem.concepts);
  const TrainConfig cfg;  // full default schedule
  const auto res = train(problem.train, init, cfg);
  const auto& model = std::get<AdaCbmModel>(res.model);
  std::size_t masked = 0, nonzero = 0;
  for (std::size_t j = 0; j < model.n_concepts(); ++j) {
    for (std::size_t i = 0; i < model.n_classes(); ++i) {
      if (model.head.mask(j, i) != 0.0) continue;
      ++masked;
      nonzero += model.head.weights(j, i) != 0.0;
    }
  }
  return {masked > 0 && nonzero == 0,
          fmt("%zu epochs, %zu masked entries, %zu non-zero", cfg.epochs, masked, nonzero)};
}

Outcome initialization_transparency() {
  std::mt19937_64 rng(11);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t d = 1 + rng() % 8, k = 1 + rng() % 8, n = 1 + rng() % 5;
    const auto model = make_adacbm(random_bank(k, d, rng), random_mask(k, n, rng),
                                   default_class_names(n), 1);
    const Vector x = random_vector(d, rng, -2.0, 2.0);
    const auto z = forward_logits(model, x);
    for (std::size_t i = 0; i < n; ++i) {
      double want = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        if (model.head.mask(j, i) == 0.0) continue;
        for (std::size_t c = 0; c < d; ++c) want += x[c] * model.concepts.embeddings(j, c);
      }
      worst = std::max(worst, std::abs(z[i] - want));
    }
  }
  return {worst <= 1e-9, fmt("200 fresh models, max |z - masked x.t| %.1e", worst)};
}

Outcome tstat_oracle() {
  std::mt19937_64 rng(13);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t na = 2 + rng() % 40, nb = 2 + rng() % 40;
    Vector responses;
    std::vector<std::size_t> labels;
    std::vector<double> a, b;
    const double scale_a = uniform(rng, 0.1, 3.0), scale_b = uniform(rng, 0.1, 3.0);
    for (std::size_t i = 0; i < na + nb; ++i) {
      const bool in = i < na;
      const double v = in ? uniform(rng, -1.0, 1.0) * scale_a + 0.3
                          : uniform(rng, -1.0, 1.0) * scale_b;
      responses.push_back(v);
      labels.push_back(in ? 0 : 1);
      (in ? a : b).push_back(v);
    }
    const double t = utility_tstat(responses, labels, 0, TStatMode::kWelch).t_value;
    worst = std::max(worst, std::abs(t - welch_reference(a, b)));
  }
  const Vector ex{2.0, 4.0, 1.0, 3.0};
  const std::vector<std::size_t> ex_labels{0, 0, 1, 1};
  const double sum_roots = utility_tstat(ex, ex_labels, 0, TStatMode::kPaper).t_value;
  // sqrt(2/2) + sqrt(2/2) = 2, (3 - 2) / 2 = 0.5
  return {worst <= 1e-10 && std::abs(sum_roots - 0.5) <= 1e-15,
          fmt("welch max diff %.1e over 100 pairs, worked example %.17g", worst, sum_roots)};
}

Outcome selection_behavior() {
  std::mt19937_64 rng(17);
  std::size_t co_selected = 0, topk_mismatch = 0, fills = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto ds = random_dataset(60, 6, 3, rng);
    Matrix pool = random_matrix(12, 6, rng);
    const std::size_t a = rng() % 12;
    std::size_t b = rng() % 12;
    if (b == a) b = (a + 1) % 12;
    for (std::size_t c = 0; c < 6; ++c) pool(b, c) = pool(a, c);
    const auto res =
        select_concepts(ds, to_embeddings(pool), untagged(12), {3, 0.9, TStatMode::kPaper});
    fills += !res.warnings.empty();
    for (const auto& cls : res.per_class) {
      bool has_a = false, has_b = false;
      for (const auto& s : cls.selected) {
        has_a = has_a || s.concept_index == a;
        has_b = has_b || s.concept_index == b;
      }
      co_selected += has_a && has_b;
    }

    const Matrix distinct = random_matrix(10, 6, rng);
    const auto emb = to_embeddings(distinct);
    const auto top = select_concepts(ds, emb, untagged(10), {4, 1.0, TStatMode::kPaper});
    const auto labels = ds.labels();
    for (std::size_t c = 0; c < 3; ++c) {
      std::vector<std::pair<double, std::size_t>> ranked;
      for (std::size_t j = 0; j < 10; ++j) {
        const auto resp = concept_responses(ds, emb.row_as_vector(j));
        ranked.push_back({utility_tstat(resp, labels, c, TStatMode::kPaper).t_value, j});
      }
      std::stable_sort(ranked.begin(), ranked.end(),
                       [](const auto& x, const auto& y) { return x.first > y.first; });
      for (std::size_t r = 0; r < 4; ++r) {
        topk_mismatch += top.per_class[c].selected[r].concept_index != ranked[r].second;
      }
    }
  }
  return {co_selected == 0 && topk_mismatch == 0 && fills == 0,
          fmt("50 trials: %zu duplicate co-selections, %zu top-k mismatches", co_selected,
              topk_mismatch)};
}

Outcome domain_gap() {
  const auto start = Clock::now();
  int passed = 0;
  std::string rows;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SyntheticSpec spec;
    spec.rotate = true;
    spec.noise = 0.5;
    spec.seed = seed;
    const auto problem = make_synthetic_problem(spec);
    const auto sel = select_concepts(problem.train, problem.concept_embeddings, problem.concepts,
                                     {4, 0.9, TStatMode::kPaper});
    const auto init =
        bottleneck_from_selection(sel, problem.concept_embeddings, problem.concepts);
    double acc[3] = {0, 0, 0};
    const ModelKind kinds[3] = {ModelKind::kAdaCbm, ModelKind::kLaboHead,
                                ModelKind::kLinearProbe};
    for (int m = 0; m < 3; ++m) {
      TrainConfig cfg;
      cfg.model_kind = kinds[m];
      cfg.epochs = 100;
      cfg.lr0 = 1e-2;
      cfg.batch_size = 32;
      cfg.seed = seed;
      acc[m] = 100.0 * evaluate(train(problem.train, init, cfg).model, problem.test)
                           .overall_accuracy;
    }
    const bool ok = acc[0] - acc[1] >= 10.0 && std::abs(acc[0] - acc[2]) <= 2.0;
    passed += ok;
    rows += fmt(" s%llu:%.1f/%.1f/%.1f%s", static_cast<unsigned long long>(seed), acc[0], acc[1],
                acc[2], ok ? "" : "*");
  }
  const double secs = seconds_since(start);
  return {passed >= 3 && secs < 120.0,
          fmt("%d/5 seeds (adacbm/labo/linear %%):", passed) + rows + fmt(", %.1fs", secs)};
}

Outcome intervention_exactness() {
  std::mt19937_64 rng(19);
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = 1 + rng() % 6, k = 1 + rng() % 8, n = 1 + rng() % 4;
    const auto model = random_model(d, k, n, 1 + rng() % 2, rng);
    const Vector x = random_vector(d, rng, -2.0, 2.0);
    std::vector<std::size_t> excluded;
    for (std::size_t j = 0; j < k; ++j) {
      if (rng() % 2) excluded.push_back(j);
    }
    const auto interp = decompose(model, x);
    Vector want = interp.logits;
    for (std::size_t i = 0; i < n; ++i) {
      double removed = 0.0;
      for (std::size_t j : excluded) {
        for (const auto& t : interp.terms) {
          if (t.class_index == i && t.concept_row == j) removed += t.contribution;
        }
      }
      want[i] = interp.logits[i] - removed;
    }
    const auto got = intervene_rows(model, x, excluded).logits;
    for (std::size_t i = 0; i < n; ++i) mismatches += got[i] != want[i];
  }
  return {mismatches == 0, fmt("100 triples, %zu inexact logits", mismatches)};
}

Outcome inhibition_mechanics() {
  SyntheticSpec spec;
  spec.seed = 3;
  spec.text_norm_min = 0.5;
  spec.text_norm_max = 2.0;
  const auto problem = make_synthetic_problem(spec);
  const auto sel = select_concepts(problem.train, problem.concept_embeddings, problem.concepts,
                                   {4, 0.9, TStatMode::kPaper});
  const auto init = bottleneck_from_selection(sel, problem.concept_embeddings, problem.concepts);
  TrainConfig cfg;
  cfg.epochs = 100;
  cfg.lr0 = 1e-2;
  cfg.batch_size = 32;
  const auto res = train(problem.train, init, cfg);
  const auto report = inhibition_report(std::get<AdaCbmModel>(res.model), problem.test);
  const double base = report.at("baseline");
  const double d_img = base - report.at("image_norm");
  const double d_txt = base - report.at("text_norm");
  const double d_cos = base - report.at("cosine");
  return {d_cos > d_img && d_cos > d_txt,
          fmt("baseline %.3f, drops: image_norm %.3f, text_norm %.3f, cosine %.3f", base, d_img,
              d_txt, d_cos)};
}

Outcome determinism() {
  auto run = [] {
    SyntheticSpec spec;
    spec.seed = 9;
    const auto problem = make_synthetic_problem(spec);
    const auto sel = select_concepts(problem.train, problem.concept_embeddings, problem.concepts,
                                     {4, 0.9, TStatMode::kPaper});
    const auto text = selection_to_json(sel);
    const auto reloaded = selection_from_json(text, problem.concepts);
    const auto init =
        bottleneck_from_selection(reloaded, problem.concept_embeddings, problem.concepts);
    TrainConfig cfg;
    cfg.epochs = 30;
    cfg.batch_size = 64;
    cfg.seed = 77;
    const auto model = train(problem.train, init, cfg).model;
    const auto bytes = encode_checkpoint(model);
    const auto report = eval_report_to_json(evaluate(decode_checkpoint(bytes), problem.test),
                                            model_class_names(model));
    return std::make_tuple(text, bytes, report);
  };
  const auto a = run();
  const auto b = run();
  const bool same_sel = std::get<0>(a) == std::get<0>(b);
  const bool same_ckpt = std::get<1>(a) == std::get<1>(b);
  const bool same_eval = std::get<2>(a) == std::get<2>(b);
  return {same_sel && same_ckpt && same_eval,
          fmt("selection %s, checkpoint %s (%zu bytes), eval %s", same_sel ? "equal" : "DIFFER",
              same_ckpt ? "equal" : "DIFFER", std::get<1>(a).size(),
              same_eval ? "equal" : "DIFFER")};
}

Outcome lr_endpoints() {
  const TrainConfig cfg;
  const double first = lr_at(0, cfg);
  const double last = lr_at(cfg.epochs - 1, cfg);
  return {first == 5e-4 && last == 5e-6, fmt("lr(0) = %.17g, lr(%zu) = %.17g", first,
                                             cfg.epochs - 1, last)};
}

}  // namespace

int main() {
  const std::pair<const char*, std::function<Outcome()>> criteria[] = {
      {"gradient-correctness", gradient_correctness},
      {"decomposition-identity", decomposition_identity},
      {"mask-invariant", mask_invariant},
      {"initialization-transparency", initialization_transparency},
      {"tstat-oracle", tstat_oracle},
      {"selection-behavior", selection_behavior},
      {"domain-gap", domain_gap},
      {"intervention-exactness", intervention_exactness},
      {"inhibition-mechanics", inhibition_mechanics},
      {"determinism", determinism},
      {"lr-schedule-endpoints", lr_endpoints},
  };
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    Outcome outcome;
    try {
      outcome = check();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    failures += !outcome.pass;
    std::printf("%s %-28s %s\n", outcome.pass ? "PASS" : "FAIL", name, outcome.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(std::size(criteria)) - failures,
              std::size(criteria));
  return failures == 0 ? 0 : 1;
}

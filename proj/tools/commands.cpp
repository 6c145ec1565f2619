#include "commands.hpp"

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "adacbm/checkpoint.hpp"
#include "adacbm/concept_selector.hpp"
#include "adacbm/error.hpp"
#include "adacbm/evaluator.hpp"
#include "adacbm/synthetic.hpp"
#include "adacbm/trainer.hpp"
#include "httplib.h"
#include "render.hpp"
#include "service.hpp"

namespace adacbm::tools {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

Dataset load_dataset(const fs::path& emb, const fs::path& meta,
                     std::optional<std::size_t> n_classes = std::nullopt) {
  auto matrix = read_embedding_matrix(emb);
  auto records = read_image_metadata(meta, n_classes);
  const std::size_t n = n_classes ? *n_classes : infer_class_count(records);
  return pair_dataset(std::move(matrix), std::move(records), n);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream ss(text);
  while (std::getline(ss, item, ',')) out.push_back(item);
  return out;
}

Vector parse_vector(const std::string& text) {
  std::string cleaned = text;
  for (char& ch : cleaned) {
    if (ch == ',' || ch == '[' || ch == ']') ch = ' ';
  }
  std::istringstream ss(cleaned);
  Vector out;
  std::string token;
  while (ss >> token) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(token, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != token.size() || !std::isfinite(v)) {
      throw Error(ErrorCode::kInvalidArgument, "bad number \"" + token + "\" in --vector");
    }
    out.push_back(v);
  }
  if (out.empty()) throw Error(ErrorCode::kInvalidArgument, "--vector is empty");
  return out;
}

AdaCbmModel require_adacbm(AnyModel model, const char* command) {
  if (auto* m = std::get_if<AdaCbmModel>(&model)) return std::move(*m);
  throw Error(ErrorCode::kInvalidArgument,
              std::string(command) + " needs an adacbm checkpoint, got " +
                  std::string(model_kind_name(model_kind(model))));
}

// ---------------------------------------------------------------------------

struct SynthOptions {
  std::string out_dir;
  SyntheticSpec spec;
};

void run_synth(const SynthOptions& opt, std::ostream& out) {
  const auto problem = make_synthetic_problem(opt.spec);
  const fs::path dir(opt.out_dir);
  fs::create_directories(dir);
  write_embedding_matrix(problem.train.embeddings, dir / "train.aemb");
  write_image_metadata(problem.train.records, dir / "train.jsonl");
  write_embedding_matrix(problem.test.embeddings, dir / "test.aemb");
  write_image_metadata(problem.test.records, dir / "test.jsonl");
  write_embedding_matrix(problem.concept_embeddings, dir / "concepts.aemb");
  write_concept_metadata(problem.concepts, dir / "concepts.jsonl");
  out << "wrote " << problem.train.size() << " train, " << problem.test.size()
      << " test images and " << problem.concepts.size() << " concepts to " << dir.string()
      << "\n";
}

struct SelectOptions {
  std::string image_emb, image_meta, concept_emb, concept_meta, out;
  std::size_t k = 10;
  double gamma = 0.9;
  std::string tstat = "paper";
};

void run_select(const SelectOptions& opt, std::ostream& out, std::ostream& err) {
  const auto dataset = load_dataset(opt.image_emb, opt.image_meta);
  const auto concepts = read_embedding_matrix(opt.concept_emb);
  const auto records = read_concept_metadata(opt.concept_meta, dataset.n_classes);
  const auto result = select_concepts(dataset, concepts, records,
                                      {opt.k, opt.gamma, parse_tstat_mode(opt.tstat)});
  for (const auto& w : result.warnings) err << "warning: " << w << "\n";
  write_text(opt.out, selection_to_json(result));
  out << "selected " << result.mask.concept_order.size() << " concepts (k=" << result.k
      << " per class, " << result.n_classes << " classes) -> " << opt.out << "\n";
}

struct TrainOptions {
  std::string selection, image_emb, image_meta, concept_emb, concept_meta, out;
  std::string model = "adacbm";
  std::string class_names;
  TrainConfig config;
};

void run_train(const TrainOptions& opt, std::ostream& out, std::ostream& err) {
  TrainConfig config = opt.config;
  config.model_kind = parse_model_kind(opt.model);
  config.validate();

  auto records = read_image_metadata(opt.image_meta);
  std::size_t n_classes = infer_class_count(records);

  std::optional<BottleneckInit> init;
  if (config.model_kind == ModelKind::kLinearProbe) {
    if (!opt.selection.empty()) err << "warning: --model linear ignores --selection\n";
  } else {
    if (opt.selection.empty()) {
      throw Error(ErrorCode::kMissingSelection,
                  "--model " + opt.model + " requires --selection");
    }
    if (opt.concept_emb.empty() || opt.concept_meta.empty()) {
      throw Error(ErrorCode::kMissingSelection,
                  "--model " + opt.model + " requires --concept-emb and --concept-meta");
    }
    const auto pool = read_embedding_matrix(opt.concept_emb);
    const auto concept_records = read_concept_metadata(opt.concept_meta);
    const auto selection = selection_from_json(read_text(opt.selection), concept_records);
    n_classes = std::max(n_classes, selection.n_classes);
    init = bottleneck_from_selection(selection, pool, concept_records);
    config.k = selection.k;
    config.denominator_mode = selection.mode;
  }

  auto dataset = pair_dataset(read_embedding_matrix(opt.image_emb), std::move(records),
                              n_classes);
  std::vector<std::string> names;
  if (!opt.class_names.empty()) {
    names = split_list(opt.class_names);
    if (names.size() != n_classes) {
      throw Error(ErrorCode::kInvalidArgument,
                  "--class-names lists " + std::to_string(names.size()) +
                      " names for " + std::to_string(n_classes) + " classes");
    }
  }

  auto result = train(dataset, init, config, std::move(names));
  save_checkpoint(result.model, opt.out);
  const std::string log_path = opt.out + ".log.jsonl";
  write_text(log_path, epoch_log_jsonl(result.log));
  const auto& last = result.log.back();
  out << model_kind_name(config.model_kind) << ": " << config.epochs << " epochs, final loss "
      << last.mean_loss << ", train acc " << last.train_acc << " -> " << opt.out
      << " (log " << log_path << ")\n";
}

struct EvalOptions {
  std::string model, image_emb, image_meta, inhibit, confusion_csv;
};

void run_eval(const EvalOptions& opt, std::ostream& out) {
  const auto model = load_checkpoint(opt.model);
  const auto& names = model_class_names(model);
  const auto dataset = load_dataset(opt.image_emb, opt.image_meta, names.size());
  EvalReport report;
  json extra{{"model_kind", std::string(model_kind_name(model_kind(model)))}};
  if (opt.inhibit.empty()) {
    report = evaluate(model, dataset);
    extra["inhibit"] = nullptr;
  } else {
    const auto quantity = parse_inhibited_quantity(opt.inhibit);
    const auto* cbm = std::get_if<AdaCbmModel>(&model);
    if (cbm == nullptr) {
      throw Error(ErrorCode::kInvalidArgument, "--inhibit needs an adacbm checkpoint");
    }
    report = evaluate_inhibited(*cbm, dataset, quantity);
    extra["inhibit"] = std::string(inhibited_quantity_name(quantity));
  }
  auto doc = json::parse(eval_report_to_json(report, names));
  doc.update(extra);
  out << doc.dump(2) << "\n";
  if (!opt.confusion_csv.empty()) write_text(opt.confusion_csv, confusion_to_csv(report, names));
}

struct ExplainOptions {
  std::string model, image_emb, image_meta, image_id, vector;
  std::size_t topk = 3;
  std::string format = "text";
};

void run_explain(const ExplainOptions& opt, std::ostream& out) {
  const auto model = require_adacbm(load_checkpoint(opt.model), "explain");
  Vector x;
  std::optional<std::string> image_id;
  if (!opt.vector.empty()) {
    x = parse_vector(opt.vector);
  } else {
    if (opt.image_emb.empty() || opt.image_meta.empty() || opt.image_id.empty()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "explain needs --vector or --image-emb, --image-meta and --image-id");
    }
    const auto dataset = load_dataset(opt.image_emb, opt.image_meta);
    for (std::size_t r = 0; r < dataset.size() && x.empty(); ++r) {
      if (dataset.records[r].id == opt.image_id) x = dataset.embeddings.row_as_vector(r);
    }
    if (x.empty()) throw Error(ErrorCode::kUnknownId, "unknown image id \"" + opt.image_id + "\"");
    image_id = opt.image_id;
  }
  const auto interp = decompose(model, x);
  const std::size_t cls = predicted_class(interp.logits);
  const auto top = top_contributors(interp, cls, opt.topk);

  if (opt.format == "json") {
    json top_json = json::array();
    for (std::size_t r = 0; r < top.size(); ++r) {
      auto t = term_json(model, top[r]);
      t["rank"] = r + 1;
      top_json.push_back(std::move(t));
    }
    json terms = json::array();
    for (const auto& term : interp.terms) {
      if (term.class_index == cls) terms.push_back(term_json(model, term));
    }
    json doc{{"image_id", image_id ? json(*image_id) : json(nullptr)},
             {"predicted_class", cls},
             {"class_name", model.class_names[cls]},
             {"logit", interp.logits[cls]},
             {"probability", interp.probabilities[cls]},
             {"beta", model.head.beta[cls]},
             {"logits", interp.logits},
             {"probs", interp.probabilities},
             {"top", std::move(top_json)},
             {"class_terms", std::move(terms)}};
    out << doc.dump(2) << "\n";
    return;
  }
  if (opt.format != "text") {
    throw Error(ErrorCode::kInvalidArgument, "--format must be text or json");
  }
  out << (image_id ? "image " + *image_id + ": " : std::string()) << "predicted "
      << model.class_names[cls] << " (p=" << std::fixed << std::setprecision(4)
      << interp.probabilities[cls] << ", logit=" << interp.logits[cls]
      << ", bias=" << model.head.beta[cls] << ")\n";
  out << std::left << std::setw(5) << "rank" << std::setw(20) << "concept" << std::right
      << std::setw(14) << "contribution" << std::setw(10) << "cosine" << std::setw(10)
      << "|F(x)|" << std::setw(10) << "|t|" << std::setw(10) << "shift" << "  text\n";
  for (std::size_t r = 0; r < top.size(); ++r) {
    const auto& t = top[r];
    out << std::left << std::setw(5) << r + 1 << std::setw(20)
        << model.concepts.ids[t.concept_row] << std::right << std::setw(14) << t.contribution
        << std::setw(10) << t.cosine << std::setw(10) << t.image_norm << std::setw(10)
        << t.text_norm << std::setw(10) << t.shift << "  " << model.concepts.texts[t.concept_row]
        << "\n";
  }
}

struct ServeOptions {
  std::string model, browse_emb, browse_meta, static_dir;
  std::string host = "127.0.0.1";
  int port = 8080;
};

void run_serve(const ServeOptions& opt, std::ostream& err) {
  auto model = require_adacbm(load_checkpoint(opt.model), "serve");
  std::optional<Dataset> browse;
  if (!opt.browse_emb.empty() || !opt.browse_meta.empty()) {
    if (opt.browse_emb.empty() || opt.browse_meta.empty()) {
      throw Error(ErrorCode::kInvalidArgument, "--browse-emb and --browse-meta go together");
    }
    browse = load_dataset(opt.browse_emb, opt.browse_meta, model.n_classes());
  }
  const ExplanationService service(std::move(model), std::move(browse));
  std::optional<fs::path> static_dir;
  if (!opt.static_dir.empty()) static_dir = opt.static_dir;
  auto server = make_http_server(service, static_dir);
  err << "serving on http://" << opt.host << ":" << opt.port << "\n" << std::flush;
  if (!server->listen(opt.host, opt.port)) {
    throw Error(ErrorCode::kIo, "cannot listen on " + opt.host + ":" + std::to_string(opt.port));
  }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Adaptive concept bottleneck models over precomputed embeddings", "adacbm"};
  app.require_subcommand(1);

  SynthOptions synth;
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic planted-concept problem");
  synth_cmd->add_option("--out-dir", synth.out_dir, "Output directory")->required();
  synth_cmd->add_option("--seed", synth.spec.seed, "RNG seed");
  synth_cmd->add_flag("--rotate", synth.spec.rotate,
                      "Rotate image embeddings away from the concept directions");
  synth_cmd->add_option("--classes", synth.spec.n_classes, "Number of classes");
  synth_cmd->add_option("--dims", synth.spec.dims, "Embedding dimension");
  synth_cmd->add_option("--planted", synth.spec.planted_per_class, "Planted concepts per class");
  synth_cmd->add_option("--distractors", synth.spec.distractors_per_class,
                        "Distractor concepts per class");
  synth_cmd->add_option("--train-per-class", synth.spec.train_per_class);
  synth_cmd->add_option("--test-per-class", synth.spec.test_per_class);
  synth_cmd->add_option("--signal", synth.spec.signal);
  synth_cmd->add_option("--noise", synth.spec.noise);
  synth_cmd->add_option("--offset", synth.spec.shared_offset, "Shared image offset norm");

  SelectOptions select;
  auto* select_cmd = app.add_subcommand("select", "Rank and select concepts per class");
  select_cmd->add_option("--image-emb", select.image_emb)->required();
  select_cmd->add_option("--image-meta", select.image_meta)->required();
  select_cmd->add_option("--concept-emb", select.concept_emb)->required();
  select_cmd->add_option("--concept-meta", select.concept_meta)->required();
  select_cmd->add_option("--k", select.k, "Concepts per class")->capture_default_str();
  select_cmd->add_option("--gamma", select.gamma, "Pearson |r| rejection threshold")
      ->capture_default_str();
  select_cmd->add_option("--tstat", select.tstat, "paper|welch")->capture_default_str();
  select_cmd->add_option("--out", select.out, "Selection JSON path")->required();

  TrainOptions train_opt;
  auto* train_cmd = app.add_subcommand("train", "Train a model on image embeddings");
  train_cmd->add_option("--selection", train_opt.selection);
  train_cmd->add_option("--image-emb", train_opt.image_emb)->required();
  train_cmd->add_option("--image-meta", train_opt.image_meta)->required();
  train_cmd->add_option("--concept-emb", train_opt.concept_emb);
  train_cmd->add_option("--concept-meta", train_opt.concept_meta);
  train_cmd->add_option("--model", train_opt.model, "adacbm|linear|labo")->capture_default_str();
  train_cmd->add_option("--layers", train_opt.config.adapter_layers)->capture_default_str();
  train_cmd->add_option("--epochs", train_opt.config.epochs)->capture_default_str();
  train_cmd->add_option("--lr", train_opt.config.lr0)->capture_default_str();
  train_cmd->add_option("--lr-final-fraction", train_opt.config.lr_final_fraction)
      ->capture_default_str();
  train_cmd->add_option("--weight-decay", train_opt.config.weight_decay)->capture_default_str();
  train_cmd->add_option("--batch-size", train_opt.config.batch_size)->capture_default_str();
  train_cmd->add_option("--seed", train_opt.config.seed)->capture_default_str();
  train_cmd->add_option("--class-names", train_opt.class_names, "Comma-separated class names");
  train_cmd->add_option("--out", train_opt.out, "Checkpoint path")->required();

  EvalOptions eval_opt;
  auto* eval_cmd = app.add_subcommand("eval", "Report accuracy of a checkpoint");
  eval_cmd->add_option("--model", eval_opt.model)->required();
  eval_cmd->add_option("--image-emb", eval_opt.image_emb)->required();
  eval_cmd->add_option("--image-meta", eval_opt.image_meta)->required();
  eval_cmd->add_option("--inhibit", eval_opt.inhibit, "image-norm|text-norm|cosine");
  eval_cmd->add_option("--confusion-csv", eval_opt.confusion_csv);

  ExplainOptions explain;
  auto* explain_cmd = app.add_subcommand("explain", "Top concept contributions for one input");
  explain_cmd->add_option("--model", explain.model)->required();
  explain_cmd->add_option("--image-emb", explain.image_emb);
  explain_cmd->add_option("--image-meta", explain.image_meta);
  explain_cmd->add_option("--image-id", explain.image_id);
  explain_cmd->add_option("--vector", explain.vector, "Inline embedding, comma separated");
  explain_cmd->add_option("--topk", explain.topk)->capture_default_str();
  explain_cmd->add_option("--format", explain.format, "text|json")->capture_default_str();

  ServeOptions serve;
  auto* serve_cmd = app.add_subcommand("serve", "HTTP JSON explanation service");
  serve_cmd->add_option("--model", serve.model)->required();
  serve_cmd->add_option("--browse-emb", serve.browse_emb);
  serve_cmd->add_option("--browse-meta", serve.browse_meta);
  serve_cmd->add_option("--host", serve.host)->capture_default_str();
  serve_cmd->add_option("--port", serve.port)->capture_default_str();
  serve_cmd->add_option("--static", serve.static_dir, "Frontend asset directory");

  std::vector<std::string> argv_storage{"adacbm"};
  argv_storage.insert(argv_storage.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_storage) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*synth_cmd) run_synth(synth, out);
    else if (*select_cmd) run_select(select, out, err);
    else if (*train_cmd) run_train(train_opt, out, err);
    else if (*eval_cmd) run_eval(eval_opt, out);
    else if (*explain_cmd) run_explain(explain, out);
    else if (*serve_cmd) run_serve(serve, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace adacbm::tools

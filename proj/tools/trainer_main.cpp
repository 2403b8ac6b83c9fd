// SPDX-License-Identifier: Apache-2.0
// sentinel-trainer: align | train | enroll-operators | synth

#include <iostream>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "sentinel/config.hpp"
#include "sentinel/errors.hpp"
#include "sentinel/trainer.hpp"

using namespace sentinel;

namespace {

std::pair<std::string, std::string> split_password(const std::string& arg) {
  const auto eq = arg.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("--password expects name=secret, got '" + arg + "'");
  return {arg.substr(0, eq), arg.substr(eq + 1)};
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("sentinel"));
  CLI::App app{"Offline tooling: corpus alignment, embedder training, operator enrollment"};
  app.require_subcommand(1);
  std::string config_path;
  std::string log_level = "info";
  app.add_option("--config", config_path, "Gateway config file; detector and crop_size keys are reused")
      ->check(CLI::ExistingFile);
  app.add_option("--log-level", log_level)->capture_default_str();

  auto* align = app.add_subcommand("align", "Detect and crop faces from raw images");
  std::string raw_dir;
  std::string out_dir;
  align->add_option("--raw", raw_dir, "Raw images, one subdirectory per subject")->required();
  align->add_option("--out", out_dir, "Where aligned crops are written")->required();

  auto* train = app.add_subcommand("train", "Train the embedder and report holdout accuracy");
  std::string corpus_dir;
  std::string network_out = "embedder.json";
  std::string predictions_out;
  std::string registry_out;
  EvaluationOptions eval;
  train->add_option("--corpus", corpus_dir, "Aligned corpus")->required();
  train->add_option("--out", network_out, "Network file")->capture_default_str();
  train->add_option("--epochs", eval.epochs)->capture_default_str();
  train->add_option("--lr", eval.learning_rate)->capture_default_str();
  train->add_option("--margin", eval.margin)->capture_default_str();
  train->add_option("--seed", eval.seed)->capture_default_str();
  train->add_option("--hidden", eval.hidden_dim)->capture_default_str();
  train->add_option("--holdout", eval.holdout_fraction, "Held-out fraction per subject")->capture_default_str();
  train->add_option("--predictions", predictions_out, "Per-image holdout predictions (JSON lines)");
  train->add_option("--registry", registry_out, "Registry of train-split galleries");

  auto* enroll = app.add_subcommand("enroll-operators", "Build the operator registry");
  std::string op_corpus;
  std::string embedder_path = "embedder.json";
  std::string operators_out = "operators.jsonl";
  std::vector<std::string> passwords;
  enroll->add_option("--corpus", op_corpus, "Aligned crops, one subdirectory per operator")->required();
  enroll->add_option("--embedder", embedder_path)->capture_default_str();
  enroll->add_option("--out", operators_out)->capture_default_str();
  enroll->add_option("--password", passwords, "name=secret (repeatable)");

  auto* synth = app.add_subcommand("synth", "Write a synthetic raw corpus for align");
  std::string synth_out;
  SyntheticCorpusOptions sopt;
  synth->add_option("--out", synth_out)->required();
  synth->add_option("--subjects", sopt.subjects)->capture_default_str();
  synth->add_option("--images", sopt.images_per_subject, "Images per subject")->capture_default_str();
  synth->add_option("--first-identity", sopt.first_identity)->capture_default_str();
  synth->add_option("--seed", sopt.seed)->capture_default_str();

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    const GatewayConfig cfg = load_config(config_path);
    if (*align) {
      const auto r = align_corpus(raw_dir, out_dir, template_cascade(), cfg.detector, cfg.crop_size);
      std::cout << nlohmann::json{{"scanned", r.scanned},
                                  {"detected", r.detected},
                                  {"skipped", r.skipped},
                                  {"skipped_files", r.skipped_files}}
                       .dump(2)
                << '\n';
    } else if (*train) {
      const Corpus corpus = load_corpus(corpus_dir, cfg.crop_size);
      spdlog::info("training on {} images of {} subjects", corpus.images.size(), corpus.subjects.size());
      const auto out = train_and_evaluate(corpus, eval);
      save_network(out.network, network_out);
      if (!predictions_out.empty()) write_predictions(predictions_out, out.report.predictions);
      if (!registry_out.empty()) save_registry(out.registry, registry_out);
      std::cout << out.report.summary().dump(2) << '\n';
    } else if (*enroll) {
      const Corpus corpus = load_corpus(op_corpus, cfg.crop_size);
      std::vector<std::pair<std::string, std::string>> creds;
      for (const auto& p : passwords) creds.push_back(split_password(p));
      const Registry ops = enroll_operators(load_network(embedder_path), corpus, creds);
      save_registry(ops, operators_out);
      std::cout << "enrolled " << ops.size() << " operators into " << operators_out << '\n';
    } else if (*synth) {
      const auto n = write_synthetic_corpus(synth_out, sopt);
      std::cout << "wrote " << n << " images to " << synth_out << '\n';
    }
    return 0;
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
}

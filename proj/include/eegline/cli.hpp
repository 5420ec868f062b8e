#pragma once

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "eegline/baseline.hpp"
#include "eegline/errors.hpp"
#include "eegline/formats.hpp"
#include "eegline/hyperopt.hpp"
#include "eegline/pipeline.hpp"
#include "eegline/service.hpp"
#include "eegline/synth.hpp"

namespace eegline::cli {

using json = nlohmann::json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

namespace detail {

inline std::string default_data_dir() {
  const char* env = std::getenv("EEGLINE_DATA_DIR");
  return env ? env : "";
}

inline edf::DatasetManifest* maybe_load_manifest(
    const std::string& path, edf::DatasetManifest& storage) {
  if (path.empty()) return nullptr;
  storage = io::load_manifest(path);
  return &storage;
}

inline void print_leaderboard(std::ostream& out, const hyper::Ledger& ledger,
                              std::size_t top) {
  out << "rank  hidden  accuracy  configuration\n";
  for (const hyper::LeaderboardRow& row : hyper::leaderboard(ledger, top)) {
    char line[64];
    std::snprintf(line, sizeof line, "%-4d  %-6d  %-8s  ", row.rank,
                  row.hidden_layers,
                  hyper::format_accuracy_percent(row.accuracy).c_str());
    out << line << (row.rendering.empty() ? "(no hidden layers)" : row.rendering)
        << "\n";
  }
}

}  // namespace detail

// Operator entry point; returns the process exit code (0 success, 1 usage,
// 2 data/processing error).
inline int cli_dispatch(const std::vector<std::string>& args,
                        std::ostream& out = std::cout,
                        std::ostream& err = std::cerr) {
  CLI::App app{"EEG motor-imagery pipeline: EDF ingest, spectro-temporal "
               "features, CNN training with random architecture search, "
               "baselines and a classification service"};
  app.name("eegline");
  app.require_subcommand(1);

  // --- ingest ---------------------------------------------------------
  auto* ingest = app.add_subcommand(
      "ingest", "Parse and validate a data directory, freeze the trial split");
  std::string ingest_dir = detail::default_data_dir();
  std::string ingest_manifest = "manifest.json";
  double ingest_ratio = 0.7;
  std::uint64_t ingest_seed = 1;
  ingest->add_option("data_dir", ingest_dir, "Directory with S###R##.edf files")
      ->required(detail::default_data_dir().empty());
  ingest->add_option("--manifest", ingest_manifest, "Manifest output path");
  ingest->add_option("--ratio", ingest_ratio, "Train fraction")
      ->check(CLI::Range(0.01, 0.99));
  ingest->add_option("--seed", ingest_seed, "Split seed");

  // --- preprocess -----------------------------------------------------
  auto* preprocess = app.add_subcommand(
      "preprocess", "Build the feature cache for a frozen manifest");
  std::string pre_manifest, pre_out = "features.eegt", pre_data;
  preprocess->add_option("--manifest", pre_manifest, "Manifest path")->required();
  preprocess->add_option("--out", pre_out, "Feature cache output path");
  preprocess->add_option("--data-dir", pre_data,
                         "Override the manifest's data directory");

  // --- train ----------------------------------------------------------
  auto* train = app.add_subcommand("train", "Train one configuration");
  std::string train_cache, train_config, train_out = "model.eegm",
              train_manifest;
  int train_epochs = 30, train_batch = 64;
  std::uint64_t train_seed = 1;
  train->add_option("--cache", train_cache, "Feature cache")->required();
  train->add_option("--config", train_config, "ModelConfig JSON file")
      ->required();
  train->add_option("--out", train_out, "Checkpoint output path");
  train->add_option("--manifest", train_manifest,
                    "Manifest providing the train/test split");
  train->add_option("--epochs", train_epochs)->check(CLI::Range(0, 100000));
  train->add_option("--batch", train_batch)->check(CLI::PositiveNumber);
  train->add_option("--seed", train_seed);

  // --- search ---------------------------------------------------------
  auto* search = app.add_subcommand(
      "search", "Random architecture search within declared bounds");
  std::string search_cache, search_space, search_ledger = "ledger.ndjson",
              search_manifest;
  std::uint64_t search_budget = 0, search_seed = 1;
  int search_epochs = 30, search_batch = 64;
  search->add_option("--cache", search_cache, "Feature cache")->required();
  search->add_option("--space", search_space,
                     "Search space JSON (defaults shipped in configs/)");
  search->add_option("--budget", search_budget, "Iterations")
      ->required()
      ->check(CLI::PositiveNumber);
  search->add_option("--seed", search_seed, "Base seed");
  search->add_option("--ledger", search_ledger, "Append-only ledger path");
  search->add_option("--manifest", search_manifest,
                     "Manifest providing the train/test split");
  search->add_option("--epochs", search_epochs)->check(CLI::PositiveNumber);
  search->add_option("--batch", search_batch)->check(CLI::PositiveNumber);

  // --- baseline -------------------------------------------------------
  auto* baseline_cmd = app.add_subcommand(
      "baseline", "PCA + linear SVM comparison on the same split");
  std::string base_cache, base_out = "baseline.json", base_manifest;
  int base_k = 500, base_epochs = 100;
  double base_reg = 1e-4;
  std::uint64_t base_seed = 1;
  bool base_handcrafted = false;
  int base_cnn_epochs = 30;
  baseline_cmd->add_option("--cache", base_cache, "Feature cache")->required();
  baseline_cmd->add_option("--out", base_out, "Report output path");
  baseline_cmd->add_option("--manifest", base_manifest,
                           "Manifest providing the train/test split");
  baseline_cmd->add_option("--k", base_k, "PCA components")
      ->check(CLI::PositiveNumber);
  baseline_cmd->add_option("--reg", base_reg, "SVM L2 regularization");
  baseline_cmd->add_option("--epochs", base_epochs, "SVM epochs")
      ->check(CLI::PositiveNumber);
  baseline_cmd->add_option("--seed", base_seed);
  baseline_cmd->add_flag("--handcrafted", base_handcrafted,
                         "Also train the fixed reference CNN");
  baseline_cmd->add_option("--cnn-epochs", base_cnn_epochs,
                           "Epochs for the reference CNN");

  // --- report ---------------------------------------------------------
  auto* report = app.add_subcommand(
      "report", "Leaderboard and accuracy trace from a search ledger");
  std::string report_ledger, report_trace;
  std::size_t report_top = 5;
  report->add_option("--ledger", report_ledger, "Ledger path")->required();
  report->add_option("--top", report_top, "Rows to show")
      ->check(CLI::PositiveNumber);
  report->add_option("--trace", report_trace, "Write iteration CSV here");

  // --- serve ----------------------------------------------------------
  auto* serve = app.add_subcommand("serve", "HTTP classification service");
  std::string serve_model, serve_listen = "127.0.0.1:8080";
  std::string serve_cache, serve_manifest, serve_work = ".";
  std::size_t serve_max_body = 32ull * 1024 * 1024;
  serve->add_option("--model", serve_model, "Checkpoint to serve")->required();
  serve->add_option("--listen", serve_listen, "host:port");
  serve->add_option("--cache", serve_cache,
                    "Feature cache enabling /v1/search jobs");
  serve->add_option("--manifest", serve_manifest, "Split for search jobs");
  serve->add_option("--work-dir", serve_work, "Directory for job ledgers");
  serve->add_option("--max-body", serve_max_body, "Upload size cap in bytes");

  // --- synth ----------------------------------------------------------
  auto* synth_cmd = app.add_subcommand(
      "synth", "Write a synthetic two-class corpus for demos and tests");
  std::string synth_out;
  int synth_subjects = 10, synth_events = 20;
  std::uint64_t synth_seed = 7;
  synth_cmd->add_option("--out", synth_out, "Output directory")->required();
  synth_cmd->add_option("--subjects", synth_subjects)
      ->check(CLI::PositiveNumber);
  synth_cmd->add_option("--events", synth_events, "Events per run")
      ->check(CLI::PositiveNumber);
  synth_cmd->add_option("--seed", synth_seed);

  std::vector<const char*> argv;
  argv.push_back("eegline");
  for (const std::string& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (ingest->parsed()) {
      const edf::DatasetManifest manifest =
          pipeline::ingest(ingest_dir, ingest_ratio, ingest_seed);
      io::save_manifest(ingest_manifest, manifest);
      out << "manifest " << io::manifest_id(manifest) << ": "
          << manifest.trial_count << " trials from "
          << manifest.included_subjects.size() << " subjects ("
          << manifest.excluded_subjects.size() << " excluded), "
          << manifest.train_indices.size() << "/"
          << manifest.test_indices.size() << " train/test -> "
          << ingest_manifest << "\n";
    } else if (preprocess->parsed()) {
      const edf::DatasetManifest manifest = io::load_manifest(pre_manifest);
      const std::string dir = pre_data.empty() ? manifest.data_dir : pre_data;
      const io::FeatureCache cache = pipeline::build_cache(manifest, dir);
      io::save_cache(pre_out, cache);
      out << "cache: " << cache.size() << " tensors -> " << pre_out << "\n";
    } else if (train->parsed()) {
      const io::FeatureCache cache = io::load_cache(train_cache);
      edf::DatasetManifest storage;
      const pipeline::Split split = pipeline::split_dataset(
          cache, detail::maybe_load_manifest(train_manifest, storage));
      std::ifstream cfg(train_config);
      if (!cfg) fail(errc::io_error, "cannot open " + train_config);
      const nn::ModelConfig config = io::config_from_json(json::parse(cfg));
      const nn::ShapeCheck check = nn::infer_shapes(config);
      if (!check.feasible) fail(errc::infeasible_config, check.reason);
      auto [model, train_report] =
          nn::train(config, split.train, split.test, train_epochs, train_batch,
                    train_seed);
      io::save_checkpoint(train_out, model);
      out << "trained " << nn::render_config(config) << " for " << train_epochs
          << " epochs on split " << split.manifest_id << "\n";
      out << "best validation accuracy "
          << hyper::format_accuracy_percent(train_report.best_val_acc)
          << "% at epoch " << train_report.best_epoch << " -> " << train_out
          << "\n";
    } else if (search->parsed()) {
      const io::FeatureCache cache = io::load_cache(search_cache);
      edf::DatasetManifest storage;
      const pipeline::Split split = pipeline::split_dataset(
          cache, detail::maybe_load_manifest(search_manifest, storage),
          0.7, search_seed);
      const hyper::SearchSpace space = search_space.empty()
                                           ? hyper::SearchSpace{}
                                           : hyper::load_space(search_space);
      hyper::RunOptions options;
      options.epochs = search_epochs;
      options.batch_size = search_batch;
      options.on_record = [&](std::uint64_t done, std::uint64_t budget) {
        out << "iteration " << done << "/" << budget << "\n";
      };
      const hyper::Ledger ledger =
          hyper::run_search(space, split.train, split.test, search_budget,
                            search_seed, search_ledger, options);
      out << "ledger " << ledger.search_id << " (" << ledger.records.size()
          << " records, split " << split.manifest_id << ") -> "
          << search_ledger << "\n";
      detail::print_leaderboard(out, ledger,
                                std::min<std::size_t>(5, ledger.records.size()));
    } else if (baseline_cmd->parsed()) {
      const io::FeatureCache cache = io::load_cache(base_cache);
      edf::DatasetManifest storage;
      const pipeline::Split split = pipeline::split_dataset(
          cache, detail::maybe_load_manifest(base_manifest, storage));
      const baseline::PcaModel pca =
          baseline::fit_pca(split.train.x, split.train.size(),
                            split.train.sample_numel(), base_k,
                            {.seed = base_seed});
      const std::vector<double> train_proj =
          baseline::project_all(pca, split.train.x, split.train.size());
      const std::vector<double> test_proj =
          baseline::project_all(pca, split.test.x, split.test.size());
      const baseline::SvmModel svm = baseline::train_svm(
          train_proj, split.train.size(), pca.k, split.train.y, base_reg,
          base_epochs, base_seed);
      json report_json = {
          {"manifest_id", split.manifest_id},
          {"k", pca.k},
          {"rank_deficient", pca.rank_deficient},
          {"regularization", base_reg},
          {"svm_epochs", base_epochs},
          {"seed", base_seed},
          {"train_accuracy", baseline::svm_accuracy(svm, train_proj,
                                                    split.train.size(),
                                                    split.train.y)},
          {"test_accuracy", baseline::svm_accuracy(svm, test_proj,
                                                   split.test.size(),
                                                   split.test.y)}};
      if (base_handcrafted) {
        auto [model, train_report] =
            nn::train(baseline::handcrafted_config(), split.train, split.test,
                      base_cnn_epochs, 64, base_seed);
        report_json["handcrafted"] = {
            {"config", nn::render_config(baseline::handcrafted_config())},
            {"epochs", base_cnn_epochs},
            {"best_val_accuracy", train_report.best_val_acc},
            {"final_train_accuracy", train_report.train_acc.empty()
                                         ? 0.0
                                         : train_report.train_acc.back()}};
      }
      std::ofstream rep(base_out, std::ios::trunc);
      if (!rep) fail(errc::io_error, "cannot write " + base_out);
      rep << report_json.dump(2) << "\n";
      out << "baseline on split " << split.manifest_id << ": SVM train "
          << hyper::format_accuracy_percent(
                 report_json["train_accuracy"].get<double>())
          << "%, test "
          << hyper::format_accuracy_percent(
                 report_json["test_accuracy"].get<double>())
          << "% -> " << base_out << "\n";
    } else if (report->parsed()) {
      hyper::Ledger ledger;
      ledger.records = hyper::read_ledger_records(report_ledger);
      if (ledger.records.empty())
        fail(errc::empty_ledger, report_ledger + " has no records");
      detail::print_leaderboard(out, ledger, report_top);
      if (!report_trace.empty()) {
        std::ofstream csv(report_trace, std::ios::trunc);
        if (!csv) fail(errc::io_error, "cannot write " + report_trace);
        csv << hyper::trace_to_csv(hyper::accuracy_trace(ledger));
        out << "trace -> " << report_trace << "\n";
      }
    } else if (serve->parsed()) {
      service::ServiceConfig config;
      const std::size_t colon = serve_listen.rfind(':');
      if (colon == std::string::npos)
        fail(errc::io_error, "--listen expects host:port");
      config.host = serve_listen.substr(0, colon);
      config.port = std::stoi(serve_listen.substr(colon + 1));
      config.model_path = serve_model;
      config.cache_path = serve_cache;
      config.manifest_path = serve_manifest;
      config.work_dir = serve_work;
      config.max_body_bytes = serve_max_body;
      service::Service svc(config);
      const int port = svc.start();
      out << "serving on " << config.host << ":" << port << "\n";
      svc.run();
    } else if (synth_cmd->parsed()) {
      synth::SynthSpec spec;
      spec.subjects = synth_subjects;
      spec.events_per_run = synth_events;
      spec.seed = synth_seed;
      synth::write_corpus(spec, synth_out);
      out << "synthetic corpus: " << spec.subjects << " subjects x "
          << spec.runs.size() << " runs x " << spec.events_per_run
          << " events -> " << synth_out << "\n";
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitOk;
}

}  // namespace eegline::cli

// Command-line driver: data generation, training regimes, evaluation,
// gradient checks, and map export.

#include "ptocluster/assignment_export.hpp"
#include "ptocluster/checkpoint.hpp"
#include "ptocluster/errors.hpp"
#include "ptocluster/gradcheck.hpp"
#include "ptocluster/kv_config.hpp"
#include "ptocluster/pipeline.hpp"
#include "ptocluster/report_io.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/cfg/env.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

namespace fs = std::filesystem;
using json = nlohmann::json;

#ifndef PTOC_VERSION
#define PTOC_VERSION "0.0.0"
#endif

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

struct RunInputs {
  fs::path config;
  fs::path graph;
  fs::path orders;
  fs::path out;
};

void add_run_inputs(CLI::App* cmd, RunInputs& in) {
  cmd->add_option("--config", in.config, "Run configuration (key = value)")->check(CLI::ExistingFile);
  cmd->add_option("--graph", in.graph, "AOI graph JSON")->required()->check(CLI::ExistingFile);
  cmd->add_option("--orders", in.orders, "Weekly order CSV")->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", in.out, "Output directory")->required();
}

struct Loaded {
  ptoc::RunConfig config;
  std::string config_text;
  ptoc::Experiment exp;
};

Loaded load_inputs(const RunInputs& in) {
  ptoc::RunConfig config =
      in.config.empty() ? ptoc::RunConfig{} : ptoc::load_run_config(in.config);
  const ptoc::AoiGraph graph = ptoc::load_graph(in.graph);
  const ptoc::OrderSeries series = ptoc::load_series(in.orders);
  ptoc::Experiment exp = ptoc::prepare_experiment(graph, series, config);
  return {config, ptoc::run_config_to_text(config), std::move(exp)};
}

void write_manifest(const fs::path& out, const std::string& command, const std::string& config_text,
                    std::uint64_t seed, const json& inputs, double seconds) {
  json doc = {{"command", command},
              {"version", PTOC_VERSION},
              {"config", config_text},
              {"config_hash", hex64(ptoc::fnv1a64(config_text))},
              {"seed", seed},
              {"inputs", inputs},
              {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                            std::to_string(EIGEN_MAJOR_VERSION) + "." +
                            std::to_string(EIGEN_MINOR_VERSION)},
              {"seconds", seconds}};
  ptoc::write_text_file(out / ("manifest_" + command + ".json"), doc.dump(1) + "\n");
}

json file_inputs(std::initializer_list<std::pair<const char*, fs::path>> files) {
  json doc = json::object();
  for (const auto& [key, path] : files) {
    if (path.empty()) continue;
    doc[key] = {{"path", path.string()},
                {"fnv1a64", hex64(ptoc::fnv1a64(ptoc::read_text_file(path)))}};
  }
  return doc;
}

void write_run_outputs(const fs::path& out, const std::string& stem, const ptoc::RunReport& report) {
  ptoc::write_text_file(out / "reports" / (stem + ".json"), ptoc::run_report_to_json(report));
  ptoc::write_text_file(out / "reports" / (stem + "_metrics.json"), ptoc::metrics_to_json(report));
  if (!report.curves.empty()) {
    ptoc::write_text_file(out / "curves" / (stem + ".csv"), ptoc::curves_to_csv(report.curves));
  }
}

void print_summary(const char* label, const ptoc::EvalSummary& s) {
  std::cout << label << ": mean hard Q " << s.mean_hard_q << ", mean soft Q " << s.mean_soft_q
            << ", RMSE " << s.regression.rmse << ", failed " << s.failed.size() << "\n";
}

double elapsed(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

int main(int argc, char** argv) {
  auto logger = spdlog::stderr_color_mt("ptocluster");
  spdlog::set_default_logger(logger);
  spdlog::cfg::load_env_levels();  // SPDLOG_LEVEL=debug|info|warn|...

  CLI::App app{"Predict-then-optimize AOI clustering"};
  app.require_subcommand(1);
  app.set_version_flag("--version", PTOC_VERSION);

  fs::path synth_config;
  fs::path gen_out;
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic AOI graph and order series");
  gen->add_option("--config", synth_config, "Synthetic data configuration")->check(CLI::ExistingFile);
  gen->add_option("--out", gen_out, "Output directory")->required();

  RunInputs pre_in;
  auto* pre = app.add_subcommand("pretrain", "Train the predictor on MSE");
  add_run_inputs(pre, pre_in);

  RunInputs two_in;
  fs::path two_ckpt;
  auto* two = app.add_subcommand("two-stage", "Cluster frozen predictions on the test split");
  add_run_inputs(two, two_in);
  two->add_option("--checkpoint", two_ckpt, "Predictor checkpoint")->required()->check(CLI::ExistingFile);

  RunInputs pto_in;
  fs::path pto_ckpt;
  auto* pto = app.add_subcommand("train-pto", "Fine-tune end to end on modularity");
  add_run_inputs(pto, pto_in);
  pto->add_option("--pretrained", pto_ckpt, "Pretrained predictor checkpoint")
      ->required()
      ->check(CLI::ExistingFile);

  RunInputs eval_in;
  fs::path eval_ckpt;
  std::string eval_split = "test";
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on one split");
  add_run_inputs(eval, eval_in);
  eval->add_option("--checkpoint", eval_ckpt, "Predictor checkpoint")->required()->check(CLI::ExistingFile);
  eval->add_option("--split", eval_split, "train, val or test")
      ->check(CLI::IsMember({"train", "val", "test"}));

  std::uint64_t gc_seed = 1;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient suites");
  gc->add_option("--seed", gc_seed, "Random seed");

  RunInputs geo_in;
  fs::path geo_ckpt;
  int geo_sample = 0;
  auto* geo = app.add_subcommand("export-geojson", "Write one test sample's assignment map");
  add_run_inputs(geo, geo_in);
  geo->add_option("--checkpoint", geo_ckpt, "Predictor checkpoint")->required()->check(CLI::ExistingFile);
  geo->add_option("--sample", geo_sample, "Position within the test split")->check(CLI::NonNegativeNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  const auto start = std::chrono::steady_clock::now();
  try {
    if (*gen) {
      const ptoc::SyntheticConfig cfg = synth_config.empty()
                                            ? ptoc::SyntheticConfig{}
                                            : ptoc::load_synthetic_config(synth_config);
      const ptoc::SyntheticData data = ptoc::generate_synthetic(cfg);
      ptoc::write_text_file(gen_out / "graph.json", ptoc::graph_to_json(data.graph));
      ptoc::write_text_file(gen_out / "orders.csv", ptoc::series_to_csv(data.series));
      const std::string text = ptoc::synthetic_config_to_text(cfg);
      json meta = {{"config", text},
                   {"config_hash", hex64(ptoc::fnv1a64(text))},
                   {"seed_used", data.seed_used},
                   {"regenerations", data.regenerations},
                   {"community", data.community}};
      ptoc::write_text_file(gen_out / "metadata.json", meta.dump(1) + "\n");
      std::cout << "wrote " << data.graph.size() << " AOIs, " << data.series.weeks()
                << " weeks to " << gen_out.string() << "\n";
    } else if (*pre) {
      const Loaded in = load_inputs(pre_in);
      const ptoc::PretrainResult result = ptoc::pretrain(in.exp, in.config);
      ptoc::save_checkpoint(result.params, pre_in.out / "checkpoints" / "pretrained.ckpt");
      write_run_outputs(pre_in.out, "pretrain", result.report);
      print_summary("pretrain test", result.report.test);
      write_manifest(pre_in.out, "pretrain", in.config_text, in.config.seed,
                     file_inputs({{"graph", pre_in.graph}, {"orders", pre_in.orders}}),
                     elapsed(start));
    } else if (*two) {
      const Loaded in = load_inputs(two_in);
      const ptoc::PredictorParams params = ptoc::load_checkpoint(two_ckpt);
      const ptoc::RunReport report = ptoc::run_two_stage(params, in.exp, in.config);
      write_run_outputs(two_in.out, "two_stage", report);
      print_summary("two-stage test", report.test);
      write_manifest(two_in.out, "two-stage", in.config_text, in.config.seed,
                     file_inputs({{"graph", two_in.graph},
                                  {"orders", two_in.orders},
                                  {"checkpoint", two_ckpt}}),
                     elapsed(start));
    } else if (*pto) {
      const Loaded in = load_inputs(pto_in);
      const ptoc::PredictorParams initial = ptoc::load_checkpoint(pto_ckpt);
      const ptoc::PtoResult result = ptoc::train_ptocluster(initial, in.exp, in.config);
      ptoc::save_checkpoint(result.params, pto_in.out / "checkpoints" / "ptocluster.ckpt");
      write_run_outputs(pto_in.out, "ptocluster", result.report);
      print_summary("two-stage test", *result.report.baseline);
      print_summary("ptocluster test", result.report.test);
      if (const auto pct = result.report.improvement_pct()) {
        std::cout << "improvement " << *pct << "%\n";
      }
      write_manifest(pto_in.out, "train-pto", in.config_text, in.config.seed,
                     file_inputs({{"graph", pto_in.graph},
                                  {"orders", pto_in.orders},
                                  {"pretrained", pto_ckpt}}),
                     elapsed(start));
    } else if (*eval) {
      const Loaded in = load_inputs(eval_in);
      const ptoc::PredictorParams params = ptoc::load_checkpoint(eval_ckpt);
      const ptoc::Split which = eval_split == "train" ? ptoc::Split::Train
                                : eval_split == "val" ? ptoc::Split::Val
                                                      : ptoc::Split::Test;
      const ptoc::EvalSummary summary = ptoc::evaluate(params, in.exp, in.config, which);
      ptoc::write_text_file(eval_in.out / "reports" / ("eval_" + eval_split + ".json"),
                            ptoc::eval_summary_to_json(summary));
      print_summary(eval_split.c_str(), summary);
      write_manifest(eval_in.out, "eval", in.config_text, in.config.seed,
                     file_inputs({{"graph", eval_in.graph},
                                  {"orders", eval_in.orders},
                                  {"checkpoint", eval_ckpt}}),
                     elapsed(start));
    } else if (*gc) {
      bool all_pass = true;
      std::printf("%-11s %-20s %8s %8s %12s %10s  %s\n", "suite", "item", "checked", "skipped",
                  "max error", "threshold", "result");
      for (const auto& r : ptoc::gradcheck_all(gc_seed)) {
        all_pass = all_pass && r.passed();
        std::printf("%-11s %-20s %8d %8d %12.3e %10.0e  %s\n", r.suite.c_str(), r.item.c_str(),
                    r.checked, r.skipped, r.max_error, r.threshold, r.passed() ? "PASS" : "FAIL");
      }
      return all_pass ? kOk : kNumeric;
    } else if (*geo) {
      const Loaded in = load_inputs(geo_in);
      const ptoc::PredictorParams params = ptoc::load_checkpoint(geo_ckpt);
      const auto test = in.exp.dataset.indices(ptoc::Split::Test);
      if (geo_sample >= static_cast<int>(test.size())) {
        throw ptoc::ValidationError("--sample must be below the test split size " +
                                    std::to_string(test.size()));
      }
      const int index = test[geo_sample];
      const ptoc::SampleForward fwd = ptoc::forward(params, in.exp.a_hat, in.exp.dataset.inputs[index]);
      const ptoc::LayerForward lf = ptoc::layer_forward(
          in.exp.points, fwd.y, in.config.layer(), ptoc::sample_seed(in.config.seed, index));
      const ptoc::HardAssignment hard = ptoc::harden(lf.result.soft, lf.weights, lf.config);
      const std::string stem = "sample_" + std::to_string(geo_sample);
      ptoc::write_text_file(geo_in.out / "maps" / (stem + ".geojson"),
                            ptoc::assignment_to_geojson(in.exp.graph, hard, fwd.y));
      ptoc::write_text_file(geo_in.out / "maps" / (stem + "_assignment.json"),
                            ptoc::assignment_to_json(hard, lf.result.centers, &lf.result.soft, lf.config));
      std::cout << "wrote " << (geo_in.out / "maps" / (stem + ".geojson")).string() << "\n";
    }
  } catch (const ptoc::DataError& e) {
    spdlog::error("{}", e.what());
    return kData;
  } catch (const fs::filesystem_error& e) {
    spdlog::error("{}", e.what());
    return kData;
  } catch (const ptoc::NumericalError& e) {
    spdlog::error("{}", e.what());
    return kNumeric;
  } catch (const std::exception& e) {
    spdlog::error("internal error: {}", e.what());
    return kNumeric;
  }
  return kOk;
}

#include "ptocluster/report_io.hpp"

#include "ptocluster/errors.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <limits>
#include <sstream>

namespace ptoc {

using json = nlohmann::json;

namespace {

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json summary_json(const EvalSummary& s) {
  json samples = json::array();
  for (const auto& o : s.samples) {
    samples.push_back({{"index", o.index},
                       {"soft_q", o.soft_q},
                       {"hard_q", o.hard_q},
                       {"fractional_share", o.fractional_share},
                       {"iterations", o.iterations},
                       {"bound_violation", o.bound_violation},
                       {"monotonicity_violations", o.monotonicity_violations},
                       {"labels", o.labels}});
  }
  return {{"mean_soft_q", s.mean_soft_q},
          {"mean_hard_q", s.mean_hard_q},
          {"fractional_share", s.fractional_share},
          {"monotonicity_violations", s.monotonicity_violations},
          {"failed", s.failed},
          {"regression",
           {{"rmse", s.regression.rmse},
            {"mae", s.regression.mae},
            {"wmape", optional_number(s.regression.wmape)},
            {"r2", optional_number(s.regression.r2)}}},
          {"samples", std::move(samples)}};
}

}  // namespace

std::string eval_summary_to_json(const EvalSummary& summary) {
  return summary_json(summary).dump(1) + "\n";
}

std::string run_report_to_json(const RunReport& r) {
  json curves = json::array();
  for (const auto& e : r.curves) {
    curves.push_back({{"epoch", e.epoch},
                      {"train_loss", e.train_loss},
                      {"val_loss", e.val_loss},
                      {"lr", e.lr},
                      {"failures", e.failures}});
  }
  json doc = {{"regime", r.regime},
              {"best_epoch", r.best_epoch},
              {"final_lr", r.final_lr},
              {"fell_back", r.fell_back},
              {"curves", std::move(curves)},
              {"test", summary_json(r.test)}};
  if (r.baseline) {
    doc["baseline"] = summary_json(*r.baseline);
    doc["improvement_pct"] = optional_number(r.improvement_pct());
  }
  return doc.dump(1) + "\n";
}

std::string curves_to_csv(const std::vector<EpochRecord>& curves) {
  std::ostringstream out;
  out.precision(std::numeric_limits<double>::max_digits10);
  out << "epoch,train_loss,val_loss,lr,failures\n";
  for (const auto& e : curves) {
    out << e.epoch << ',' << e.train_loss << ',' << e.val_loss << ',' << e.lr << ','
        << e.failures << '\n';
  }
  return out.str();
}

std::string metrics_to_json(const RunReport& r) {
  json flat = json::object();
  for (const auto& e : r.curves) {
    flat["train/epoch_" + std::to_string(e.epoch) + "/loss"] = e.train_loss;
    flat["val/epoch_" + std::to_string(e.epoch) + "/loss"] = e.val_loss;
  }
  auto put = [&flat](const std::string& prefix, const EvalSummary& s) {
    flat[prefix + "/rmse"] = s.regression.rmse;
    flat[prefix + "/mae"] = s.regression.mae;
    flat[prefix + "/wmape"] = optional_number(s.regression.wmape);
    flat[prefix + "/r2"] = optional_number(s.regression.r2);
    flat[prefix + "/soft_q"] = s.mean_soft_q;
    flat[prefix + "/hard_q"] = s.mean_hard_q;
    flat[prefix + "/fractional_share"] = s.fractional_share;
    flat[prefix + "/failed"] = s.failed.size();
  };
  put("test", r.test);
  if (r.baseline) {
    put("baseline_test", *r.baseline);
    flat["test/improvement_pct"] = optional_number(r.improvement_pct());
  }
  return flat.dump(1) + "\n";
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ParseError("cannot write " + path.string());
  out << text;
  if (!out) throw ParseError("failed writing " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace ptoc

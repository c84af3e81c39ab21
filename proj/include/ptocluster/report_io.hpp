#pragma once

#include "ptocluster/pipeline.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace ptoc {

std::string eval_summary_to_json(const EvalSummary& summary);

// Deterministic given the run: wall time is left out.
std::string run_report_to_json(const RunReport& report);

// epoch,train_loss,val_loss,lr,failures
std::string curves_to_csv(const std::vector<EpochRecord>& curves);

// Flat {"<split>/<metric>": value, "<split>/epoch_<k>/loss": value}.
std::string metrics_to_json(const RunReport& report);

void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace ptoc

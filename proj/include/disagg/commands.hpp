#pragma once

// The four pipelines behind the CLI subcommands. Each reads its inputs
// per the run configuration, writes CSV/JSON reports into the output
// directory, and throws disagg::Error on failure.

#include "disagg/config.hpp"
#include "disagg/core_data.hpp"
#include "disagg/csv.hpp"

#include <string>
#include <vector>

namespace disagg {

// CSV rows -> records using the configured column mapping. Missing
// columns raise "column not found: <name>".
std::vector<EvalRecord> records_from_csv(const CsvTable& table, const RunConfig& config);

void cmd_evaluate(const RunConfig& config);
void cmd_gof(const RunConfig& config);
void cmd_benchmark(const RunConfig& config);
void cmd_synth(const RunConfig& config);

} // namespace disagg

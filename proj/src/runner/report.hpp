#pragma once

#include <string>
#include <vector>

#include "harness/session.hpp"
#include "json.hpp"

namespace drift::runner {

// Column order of the emitted CSV files. Stable; extend only at the end.
inline const std::vector<std::string> kEpochColumns = {"run_id", "phase",      "epoch", "rank",       "batch_time_s",
                                                        "loss",   "nel",        "mode",  "new_labels", "weights_hash"};
inline const std::vector<std::string> kCheckpointColumns = {"run_id", "iteration", "sr", "msd_mean", "msd_std", "nel"};
inline const std::vector<std::string> kSweepColumns = {"axis",  "value",     "seed",     "strategy", "iteration",
                                                        "sr",    "msd_mean",  "msd_std",  "nel",      "final_loss",
                                                        "mbt_offline_s", "mbt_online_s", "mbt_all_s", "ct_s"};
inline const std::vector<std::string> kBenchColumns = {
    "label",        "mode",          "rank",       "fwd_flops",  "weight_flops", "adapter_flops", "trainable_params",
    "fwd_ms_median", "fwd_ms_iqr",   "bwd_ms_median", "bwd_ms_iqr", "batches"};
inline const std::vector<std::string> kScheduleColumns = {"epoch", "rank"};

std::string csv_header(const std::vector<std::string>& columns);
std::string epochs_csv(const std::string& run_id, const std::vector<harness::EpochRecord>& epochs);
std::string checkpoints_csv(const std::string& run_id, const std::vector<harness::CheckpointRecord>& checkpoints);

// Shortest text that parses back to the same double.
std::string format_double(double v);

// Splits a CSV document (no quoting) into rows of fields.
std::vector<std::vector<std::string>> parse_csv(const std::string& text);

nlohmann::json report_json(const harness::MetricsReport& r);

}  // namespace drift::runner

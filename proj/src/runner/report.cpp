#include "runner/report.hpp"

#include <charconv>
#include <sstream>

namespace drift::runner {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string csv_header(const std::vector<std::string>& columns) {
  std::string s;
  for (std::size_t i = 0; i < columns.size(); ++i) s += (i ? "," : "") + columns[i];
  return s + "\n";
}

std::string epochs_csv(const std::string& run_id, const std::vector<harness::EpochRecord>& epochs) {
  std::ostringstream out;
  out << csv_header(kEpochColumns);
  for (const auto& e : epochs) {
    out << run_id << ',' << e.phase << ',' << e.epoch << ',' << e.rank << ',' << format_double(e.batch_time_s) << ','
        << format_double(e.loss) << ',' << e.nel << ',' << diffusion::to_string(e.mode) << ',' << e.new_labels << ','
        << e.weights_hash << '\n';
  }
  return out.str();
}

std::string checkpoints_csv(const std::string& run_id, const std::vector<harness::CheckpointRecord>& checkpoints) {
  std::ostringstream out;
  out << csv_header(kCheckpointColumns);
  for (const auto& c : checkpoints) {
    out << run_id << ',' << c.iteration << ',' << format_double(c.sr) << ',' << format_double(c.msd_mean) << ','
        << format_double(c.msd_std) << ',' << c.nel << '\n';
  }
  return out.str();
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
      if (c == ',') {
        fields.push_back(cur);
        cur.clear();
      } else {
        cur += c;
      }
    }
    fields.push_back(cur);
    rows.push_back(std::move(fields));
  }
  return rows;
}

nlohmann::json report_json(const harness::MetricsReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  nlohmann::json j{{"nel", r.nel},
                   {"offline_labels", r.offline_labels},
                   {"online_labels", r.online_labels},
                   {"mbt_offline_s", opt(r.mbt_offline)},
                   {"mbt_online_s", opt(r.mbt_online)},
                   {"mbt_all_s", opt(r.mbt_all)},
                   {"ct_s", r.ct_s}};
  if (r.final_checkpoint) {
    const auto& c = *r.final_checkpoint;
    j["final_checkpoint"] = {{"iteration", c.iteration}, {"sr", c.sr}, {"msd_mean", c.msd_mean},
                             {"msd_std", c.msd_std}, {"nel", c.nel}};
  } else {
    j["final_checkpoint"] = nullptr;
  }
  return j;
}

}  // namespace drift::runner

#include "runner/commands.hpp"

#include <time.h>

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "diffusion/ddpm.hpp"
#include "harness/learner.hpp"
#include "numerics/flops.hpp"
#include "numerics/log.hpp"
#include "runner/checkpoint.hpp"
#include "runner/report.hpp"

namespace drift::runner {

namespace fs = std::filesystem;
using diffusion::BlockMode;
using diffusion::PolicyNet;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  out << text;
  if (!out) throw std::ios_base::failure("cannot write " + path.string());
}

std::string iteration_name(int it) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "iter_%04d.drft", it);
  return buf;
}

std::size_t conv_trainable(const PolicyNet<float>& net) {
  std::size_t n = 0;
  for (const auto* b : net.conv_blocks()) n += b->trainable_params();
  return n;
}

}  // namespace

nlohmann::json train(const RunConfig& cfg_in, const TrainOptions& opts) {
  RunConfig cfg = cfg_in;
  std::unique_ptr<harness::DaggerSession> session;
  if (!opts.resume.empty()) {
    LoadedSession loaded = load_checkpoint(opts.resume);
    cfg = loaded.config;
    session = std::move(loaded.session);
    log_info("resumed " + opts.resume);
  } else {
    session = std::make_unique<harness::DaggerSession>(cfg.session);
  }
  const fs::path dir = opts.output_dir.empty() ? fs::path(cfg.output_dir) : fs::path(opts.output_dir);
  fs::create_directories(dir / "checkpoints");
  write_text(dir / "config.resolved.json", to_json(cfg).dump(2) + "\n");

  const auto& run_id = cfg.session.run_id;
  long units = 0;
  while (!session->done() && (opts.max_units < 0 || units < opts.max_units)) {
    const std::size_t evals = session->state().checkpoints.size();
    const bool had_setup = session->state().setup_done;
    session->advance();
    ++units;
    if (!had_setup) log_info("gate threshold: " + format_double(session->state().gate_threshold));
    if (session->state().checkpoints.size() > evals) {
      const auto& c = session->state().checkpoints.back();
      save_checkpoint((dir / "checkpoints" / iteration_name(c.iteration)).string(), cfg, *session);
      log_info("iteration " + std::to_string(c.iteration) + ": sr " + format_double(c.sr) + ", nel " +
               std::to_string(c.nel));
    }
  }
  save_checkpoint((dir / "latest.drft").string(), cfg, *session);
  write_text(dir / "epochs.csv", epochs_csv(run_id, session->state().epochs));
  write_text(dir / "checkpoints.csv", checkpoints_csv(run_id, session->state().checkpoints));

  nlohmann::json summary;
  summary["run_id"] = run_id;
  summary["strategy"] = harness::to_string(cfg.session.strategy);
  summary["seed"] = cfg.session.seed;
  summary["done"] = session->done();
  summary["units"] = units;
  summary["gate_threshold"] = session->state().gate_threshold;
  summary["weights_hash"] = session->state().learner ? harness::weights_hash(session->state().learner->net) : 0;
  summary["metrics"] = report_json(harness::metrics_aggregate(*session));
  summary["output_dir"] = dir.string();
  write_text(dir / "summary.json", summary.dump(2) + "\n");
  return summary;
}

nlohmann::json evaluate_checkpoint(const std::string& path, const EvalOptions& opts) {
  LoadedSession loaded = load_checkpoint(path);
  RunConfig cfg = loaded.config;
  if (!opts.env_overrides.empty()) {
    for (const auto& o : opts.env_overrides)
      if (o.rfind("env.", 0) != 0) throw ConfigError("override '" + o + "': only env.* keys apply to evaluation");
    cfg = parse_config(canonical_config(loaded.config), opts.env_overrides, "checkpoint config", false);
  }
  const harness::PointReach2D env(cfg.session.env);
  const harness::ScriptedExpert expert{1.0, cfg.session.env.v_max};
  const auto seeds = harness::eval_seeds(opts.seed, opts.episodes);
  harness::Metrics m;
  if (opts.expert) {
    m = harness::evaluate(harness::expert_planner(expert), env, seeds, cfg.session.exec_steps);
  } else {
    auto& s = loaded.session->state();
    if (!s.learner) throw ContractError("checkpoint holds no trained policy (saved before setup)");
    m = harness::evaluate(s.learner->planner(), env, seeds, cfg.session.exec_steps);
  }
  return {{"checkpoint", path},
          {"policy", opts.expert ? "expert" : "learner"},
          {"seed", opts.seed},
          {"episodes", m.episodes},
          {"successes", m.successes},
          {"sr", m.sr},
          {"msd_mean", m.msd_mean},
          {"msd_std", m.msd_std},
          {"durations", m.durations}};
}

std::pair<double, double> median_iqr(std::vector<double> v) {
  if (v.empty()) return {0, 0};
  std::sort(v.begin(), v.end());
  auto q = [&](double p) {
    const double pos = p * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
  };
  return {q(0.5), q(0.75) - q(0.25)};
}

namespace {

double thread_cpu_ms() {
  timespec t{};
  clock_gettime(CLOCK_THREAD_CPUTIME_ID, &t);
  return static_cast<double>(t.tv_sec) * 1e3 + static_cast<double>(t.tv_nsec) * 1e-6;
}

}  // namespace

std::vector<BenchRow> bench(const RunConfig& cfg, const BenchOptions& opts) {
  const auto& net_cfg = cfg.session.net;
  const auto ns = diffusion::NoiseSchedule::linear(cfg.session.diffusion_steps, cfg.session.beta_start,
                                                   cfg.session.beta_end);
  const std::size_t B = cfg.session.batch_size, A = net_cfg.action_dim, H = net_cfg.horizon;
  const std::size_t oc = net_cfg.obs_cond_dim();
  num::Rng data_rng(cfg.session.seed ^ 0xBE4C4ULL);
  num::Array<float> x0({B, A, H}), obs({B, oc});
  for (auto& v : x0.data) v = static_cast<float>(data_rng.uniform(-1, 1));
  for (auto& v : obs.data) v = static_cast<float>(data_rng.uniform(-1, 1));

  auto count = [&](const PolicyNet<float>& net) {
    num::FlopCounter::reset();
    num::Rng rng(0);
    diffusion::ddpm_loss(net, x0, obs, ns, rng);
    return num::FlopCounter::read();
  };
  diffusion::NetConfig plain_cfg = net_cfg;
  plain_cfg.mode = BlockMode::kPlain;
  const std::uint64_t plain_flops = count(PolicyNet<float>(plain_cfg, 0)).data;

  std::vector<std::unique_ptr<PolicyNet<float>>> nets;
  std::vector<BenchRow> rows;
  for (const auto& label : opts.ranks) {
    auto net = std::make_unique<PolicyNet<float>>(net_cfg, 0);
    num::Rng adapter(1);
    std::size_t divisor = 0, absolute = 0;
    if (label == "p") {
      divisor = 1;
    } else if (label.rfind("p/", 0) == 0) {
      try {
        divisor = std::stoul(label.substr(2));
      } catch (const std::exception&) {
        divisor = 0;
      }
      if (divisor == 0) throw ConfigError("bench rank '" + label + "': expected p/<positive integer>");
    } else {
      try {
        absolute = std::stoul(label);
      } catch (const std::exception&) {
        absolute = 0;
      }
      if (absolute == 0) throw ConfigError("bench rank '" + label + "': expected a positive integer, p or p/<d>");
    }
    if (net->mode() == BlockMode::kPlain) {
      if (divisor != 1) throw ConfigError("bench rank '" + label + "': plain nets only run at full rank (p)");
    } else if (divisor) {
      diffusion::set_policy_rank_divisor(*net, divisor, adapter);
    } else {
      diffusion::set_policy_rank(*net, absolute, adapter);
    }
    BenchRow row;
    row.label = label;
    row.mode = diffusion::to_string(net->mode());
    row.rank = net->current_rank();
    const auto flops = count(*net);
    row.fwd_flops = flops.data;
    row.weight_flops = flops.weight;
    row.adapter_flops = net->mode() == BlockMode::kLora ? flops.data - plain_flops : 0;
    row.trainable_params = conv_trainable(*net);
    rows.push_back(row);
    nets.push_back(std::move(net));
  }

  std::vector<std::vector<double>> fwd(rows.size()), bwd(rows.size());
  for (std::size_t round = 0; round < opts.warmup + opts.batches; ++round) {
    for (std::size_t i = 0; i < nets.size(); ++i) {
      const auto params = nets[i]->parameters();
      for (const auto& p : params) p.tensor.node()->grad.clear();
      num::Rng rng(round);
      const double t0 = thread_cpu_ms();
      auto loss = diffusion::ddpm_loss(*nets[i], x0, obs, ns, rng);
      const double t1 = thread_cpu_ms();
      num::backward(loss);
      const double t2 = thread_cpu_ms();
      if (round < opts.warmup) continue;
      fwd[i].push_back(t1 - t0);
      bwd[i].push_back(t2 - t1);
    }
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::tie(rows[i].fwd_ms_median, rows[i].fwd_ms_iqr) = median_iqr(fwd[i]);
    std::tie(rows[i].bwd_ms_median, rows[i].bwd_ms_iqr) = median_iqr(bwd[i]);
    rows[i].batches = fwd[i].size();
  }
  return rows;
}

std::string bench_csv(const std::vector<BenchRow>& rows) {
  std::ostringstream out;
  out << csv_header(kBenchColumns);
  for (const auto& r : rows) {
    out << r.label << ',' << r.mode << ',' << r.rank << ',' << r.fwd_flops << ',' << r.weight_flops << ','
        << r.adapter_flops << ',' << r.trainable_params << ',' << format_double(r.fwd_ms_median) << ','
        << format_double(r.fwd_ms_iqr) << ',' << format_double(r.bwd_ms_median) << ','
        << format_double(r.bwd_ms_iqr) << ',' << r.batches << '\n';
  }
  return out.str();
}

std::vector<std::string> default_sweep_values(const std::string& axis) {
  if (axis == "decay_fn")
    return {"linear", "cosine", "exponential:0.1", "exponential:0.5", "sigmoid:0.1", "sigmoid:0.5", "hg_full"};
  if (axis == "r_min") return {"8", "16", "32", "64"};
  throw ConfigError("sweep axis '" + axis + "': expected decay_fn or r_min");
}

namespace {

harness::SessionConfig sweep_point(const RunConfig& base, const std::string& axis, const std::string& value,
                                   std::size_t seed_index) {
  harness::SessionConfig s = base.session;
  s.seed = base.session.seed + seed_index;
  if (axis == "decay_fn") {
    if (value == "hg_full") {
      s.strategy = harness::Strategy::kHgFull;
      s.net.mode = BlockMode::kPlain;
    } else {
      const auto colon = value.find(':');
      const auto kind = sched::parse_decay_kind(value.substr(0, colon));
      if (!kind) throw ConfigError("sweep value '" + value + "': unknown decay kind");
      s.schedule.kind = *kind;
      if (colon != std::string::npos) {
        try {
          s.schedule.steepness = std::stod(value.substr(colon + 1));
        } catch (const std::exception&) {
          throw ConfigError("sweep value '" + value + "': bad steepness");
        }
      }
    }
  } else {
    try {
      s.schedule.r_min = std::stoi(value);
    } catch (const std::exception&) {
      throw ConfigError("sweep value '" + value + "': expected an integer");
    }
  }
  s.run_id = base.session.run_id + "-" + value + "-s" + std::to_string(s.seed);
  return harness::resolve(s);
}

}  // namespace

std::string sweep(const RunConfig& cfg, const SweepOptions& opts) {
  const auto values = opts.values.empty() ? default_sweep_values(opts.axis) : opts.values;
  if (opts.axis != "decay_fn" && opts.axis != "r_min")
    throw ConfigError("sweep axis '" + opts.axis + "': expected decay_fn or r_min");
  if (opts.seeds < 1) throw ConfigError("sweep: seeds must be >= 1");

  struct Job {
    std::string value;
    harness::SessionConfig session;
    std::string rows;
  };
  std::vector<Job> jobs;
  for (const auto& v : values)
    for (std::size_t s = 0; s < opts.seeds; ++s) jobs.push_back({v, sweep_point(cfg, opts.axis, v, s), {}});

  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr error;
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      try {
        harness::DaggerSession session(jobs[i].session);
        session.run();
        const auto rep = harness::metrics_aggregate(session);
        const auto& st = session.state();
        const double final_loss = st.epochs.empty() ? 0.0 : st.epochs.back().loss;
        auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
        std::ostringstream out;
        for (const auto& c : st.checkpoints) {
          out << opts.axis << ',' << jobs[i].value << ',' << jobs[i].session.seed << ','
              << harness::to_string(jobs[i].session.strategy) << ',' << c.iteration << ',' << format_double(c.sr)
              << ',' << format_double(c.msd_mean) << ',' << format_double(c.msd_std) << ',' << c.nel << ','
              << format_double(final_loss) << ',' << opt(rep.mbt_offline) << ',' << opt(rep.mbt_online) << ','
              << opt(rep.mbt_all) << ',' << format_double(rep.ct_s) << '\n';
        }
        jobs[i].rows = out.str();
        log_info("sweep: finished " + jobs[i].session.run_id);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  const std::size_t n_workers = std::clamp<std::size_t>(opts.jobs, 1, jobs.size());
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < n_workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);

  std::string csv = csv_header(kSweepColumns);
  for (const auto& j : jobs) csv += j.rows;
  return csv;
}

std::string schedule_preview_csv(const sched::RankSchedule& s) {
  std::ostringstream out;
  out << csv_header(kScheduleColumns);
  for (const auto& [i, r] : sched::schedule_table(s)) out << i << ',' << r << '\n';
  return out.str();
}

}  // namespace drift::runner

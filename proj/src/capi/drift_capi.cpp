#include "drift/drift.h"

#include <yaml-cpp/yaml.h>

#include <cstring>
#include <filesystem>
#include <ios>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "harness/learner.hpp"
#include "numerics/errors.hpp"
#include "numerics/log.hpp"
#include "runner/checkpoint.hpp"
#include "runner/commands.hpp"
#include "runner/config.hpp"
#include "runner/report.hpp"

struct drift_session {
  drift::runner::RunConfig config;
  std::unique_ptr<drift::harness::DaggerSession> session;
};

namespace {

using namespace drift;

thread_local std::string g_last_error;

drift_status fail(drift_status code, const std::string& msg) {
  g_last_error = msg;
  return code;
}

template <typename F>
drift_status guarded(F&& f) {
  g_last_error.clear();
  try {
    f();
    return DRIFT_OK;
  } catch (const ConfigError& e) {
    return fail(DRIFT_ERR_CONFIG, e.what());
  } catch (const runner::CheckpointVersionError& e) {
    return fail(DRIFT_ERR_VERSION, e.what());
  } catch (const runner::CheckpointCorruptError& e) {
    return fail(DRIFT_ERR_CORRUPT, e.what());
  } catch (const YAML::Exception& e) {
    return fail(DRIFT_ERR_CONFIG, e.what());
  } catch (const std::ios_base::failure& e) {
    return fail(DRIFT_ERR_IO, e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(DRIFT_ERR_IO, e.what());
  } catch (const ContractError& e) {
    return fail(DRIFT_ERR_ARGUMENT, e.what());
  } catch (const DimensionError& e) {
    return fail(DRIFT_ERR_ARGUMENT, e.what());
  } catch (const std::exception& e) {
    return fail(DRIFT_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(DRIFT_ERR_INTERNAL, "unknown error");
  }
}

char* dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void require(bool ok, const char* what) {
  if (!ok) throw ContractError(what);
}

std::vector<std::string> strings(const char* const* v, std::size_t n) {
  require(n == 0 || v != nullptr, "string list is NULL");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) {
    require(v[i] != nullptr, "string list entry is NULL");
    out.emplace_back(v[i]);
  }
  return out;
}

runner::RunConfig parse(const char* text, const char* source, const char* const* overrides, std::size_t n) {
  require(text != nullptr, "config text is NULL");
  return runner::parse_config(text, strings(overrides, n), source ? source : "config");
}

int g_log_level = 0;

}  // namespace

extern "C" {

const char* drift_version(void) { return "1.0.0"; }

const char* drift_last_error(void) { return g_last_error.c_str(); }

void drift_string_free(char* s) { std::free(s); }

void drift_set_log_level(int level) {
  g_log_level = level;
  drift::set_log_sink([](drift::LogLevel lvl, const std::string& msg) {
    if (g_log_level >= 2 || (g_log_level == 1 && lvl == drift::LogLevel::kInfo)) return;
    std::cerr << "[drift] " << msg << "\n";
  });
}

drift_status drift_config_resolve(const char* text, const char* source, const char* const* overrides,
                                  size_t n_overrides, char** json_out) {
  return guarded([&] {
    require(json_out != nullptr, "output pointer is NULL");
    *json_out = dup(runner::to_json(parse(text, source, overrides, n_overrides)).dump(2));
  });
}

drift_status drift_session_create(const char* text, const char* source, const char* const* overrides,
                                  size_t n_overrides, drift_session** out) {
  return guarded([&] {
    require(out != nullptr, "output pointer is NULL");
    auto s = std::make_unique<drift_session>();
    s->config = parse(text, source, overrides, n_overrides);
    s->session = std::make_unique<harness::DaggerSession>(s->config.session);
    *out = s.release();
  });
}

drift_status drift_session_load(const char* checkpoint_path, drift_session** out) {
  return guarded([&] {
    require(out != nullptr && checkpoint_path != nullptr, "NULL argument");
    auto loaded = runner::load_checkpoint(checkpoint_path);
    *out = new drift_session{std::move(loaded.config), std::move(loaded.session)};
  });
}

void drift_session_destroy(drift_session* session) { delete session; }

drift_status drift_session_advance(drift_session* session, long units, int* done_out) {
  return guarded([&] {
    require(session != nullptr, "session is NULL");
    for (long i = 0; (units < 0 || i < units) && !session->session->done(); ++i) session->session->advance();
    if (done_out) *done_out = session->session->done() ? 1 : 0;
  });
}

drift_status drift_session_save(const drift_session* session, const char* path) {
  return guarded([&] {
    require(session != nullptr && path != nullptr, "NULL argument");
    runner::save_checkpoint(path, session->config, *session->session);
  });
}

drift_status drift_session_weights_hash(const drift_session* session, uint64_t* out) {
  return guarded([&] {
    require(session != nullptr && out != nullptr, "NULL argument");
    const auto& st = session->session->state();
    require(st.learner != nullptr, "session has not been set up yet");
    *out = harness::weights_hash(st.learner->net);
  });
}

drift_status drift_session_metrics_json(const drift_session* session, char** out) {
  return guarded([&] {
    require(session != nullptr && out != nullptr, "NULL argument");
    auto j = runner::report_json(harness::metrics_aggregate(*session->session));
    const auto& st = session->session->state();
    j["done"] = session->session->done();
    j["gate_threshold"] = st.gate_threshold;
    j["offline_epochs_done"] = st.offline_done;
    j["online_iterations_done"] = st.online_done;
    *out = dup(j.dump(2));
  });
}

drift_status drift_session_epochs_csv(const drift_session* session, char** out) {
  return guarded([&] {
    require(session != nullptr && out != nullptr, "NULL argument");
    *out = dup(runner::epochs_csv(session->config.session.run_id, session->session->state().epochs));
  });
}

drift_status drift_session_checkpoints_csv(const drift_session* session, char** out) {
  return guarded([&] {
    require(session != nullptr && out != nullptr, "NULL argument");
    *out = dup(runner::checkpoints_csv(session->config.session.run_id, session->session->state().checkpoints));
  });
}

drift_status drift_train(const char* text, const char* source, const char* const* overrides, size_t n_overrides,
                         const char* output_dir, const char* resume_path, long max_units, char** summary_json) {
  return guarded([&] {
    runner::TrainOptions opts;
    opts.output_dir = output_dir ? output_dir : "";
    opts.resume = resume_path ? resume_path : "";
    opts.max_units = max_units;
    runner::RunConfig cfg;
    if (opts.resume.empty()) cfg = parse(text, source, overrides, n_overrides);
    const auto summary = runner::train(cfg, opts);
    if (summary_json) *summary_json = dup(summary.dump(2));
  });
}

drift_status drift_eval(const char* checkpoint_path, size_t episodes, uint64_t seed, int expert,
                        const char* const* env_overrides, size_t n_overrides, char** json_out) {
  return guarded([&] {
    require(checkpoint_path != nullptr && json_out != nullptr, "NULL argument");
    require(episodes > 0, "episodes must be positive");
    runner::EvalOptions opts;
    opts.episodes = episodes;
    opts.seed = seed;
    opts.expert = expert != 0;
    opts.env_overrides = strings(env_overrides, n_overrides);
    *json_out = dup(runner::evaluate_checkpoint(checkpoint_path, opts).dump(2));
  });
}

drift_status drift_bench(const char* text, const char* source, const char* const* overrides, size_t n_overrides,
                         const char* const* ranks, size_t n_ranks, size_t batches, char** csv_out) {
  return guarded([&] {
    require(csv_out != nullptr, "output pointer is NULL");
    runner::BenchOptions opts;
    if (n_ranks > 0) opts.ranks = strings(ranks, n_ranks);
    if (batches > 0) opts.batches = batches;
    *csv_out = dup(runner::bench_csv(runner::bench(parse(text, source, overrides, n_overrides), opts)));
  });
}

drift_status drift_sweep(const char* text, const char* source, const char* const* overrides, size_t n_overrides,
                         const char* axis, const char* const* values, size_t n_values, size_t seeds, size_t jobs,
                         char** csv_out) {
  return guarded([&] {
    require(csv_out != nullptr && axis != nullptr, "NULL argument");
    runner::SweepOptions opts;
    opts.axis = axis;
    opts.values = strings(values, n_values);
    opts.seeds = seeds;
    opts.jobs = jobs;
    *csv_out = dup(runner::sweep(parse(text, source, overrides, n_overrides), opts));
  });
}

drift_status drift_schedule_preview(const char* kind, int r_max, int r_min, int total_epochs, double steepness,
                                    int has_midpoint, double midpoint, char** csv_out) {
  return guarded([&] {
    require(csv_out != nullptr && kind != nullptr, "NULL argument");
    const auto k = sched::parse_decay_kind(kind);
    if (!k) throw ConfigError(std::string("unknown decay kind '") + kind + "'");
    sched::RankSchedule s{*k, r_max, r_min, total_epochs, steepness, std::nullopt};
    if (has_midpoint) s.midpoint = midpoint;
    try {
      sched::validate(s);
    } catch (const ContractError& e) {
      throw ConfigError(e.what());
    }
    *csv_out = dup(runner::schedule_preview_csv(s));
  });
}

drift_status drift_checkpoint_inspect(const char* checkpoint_path, char** json_out) {
  return guarded([&] {
    require(checkpoint_path != nullptr && json_out != nullptr, "NULL argument");
    *json_out = dup(runner::inspect_checkpoint(checkpoint_path).dump(2));
  });
}

}  // extern "C"

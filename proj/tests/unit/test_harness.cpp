#include <cmath>
#include <set>

#include "doctest.h"
#include "harness/session.hpp"
#include "numerics/errors.hpp"

using namespace drift;
using diffusion::BlockMode;
using harness::Strategy;
using harness::Vec;

namespace {

harness::SessionConfig tiny_session(Strategy s) {
  harness::SessionConfig c;
  c.strategy = s;
  c.net.channels = {8, 16};
  c.net.cond_dim = 16;
  c.net.time_embed_dim = 8;
  c.net.mode = harness::default_mode(s);
  c.offline_epochs = 3;
  c.online_iterations = 2;
  c.offline_rollouts = 4;
  c.eval_rollouts = 4;
  c.checkpoint_every = 1;
  c.diffusion_steps = 5;
  c.batch_size = 16;
  c.optimizer.lr = 1e-3;
  c.schedule.r_min = 4;
  return c;
}

harness::Trajectory make_traj(std::vector<bool> labels) {
  harness::Trajectory t;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double v = static_cast<double>(i);
    t.push({v, -v}, {10 + v, 20 + v}, labels[i]);
  }
  return t;
}

}  // namespace

TEST_CASE("environment resets deterministically with separated waypoints") {
  harness::PointReach2D a, b;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const Vec oa = a.reset(seed), ob = b.reset(seed);
    CHECK(oa == ob);
    REQUIRE(oa.size() == 6);
    CHECK(std::hypot(oa[0] - oa[2], oa[1] - oa[3]) >= 0.3);
    CHECK(std::abs(oa[2]) <= 0.8);
    CHECK(oa[4] == 1.0);
    CHECK(oa[5] == 0.0);
    for (int k = 0; k < 5; ++k) {
      const Vec act{std::sin(k + seed * 1.0), std::cos(k * 2.0)};
      CHECK(a.step(act).obs == b.step(act).obs);
    }
  }
  harness::PointReach2D c;
  CHECK_THROWS_AS(c.step({0, 0}), ContractError);
  c.reset(0);
  CHECK_THROWS_AS(c.step({0, 0, 0}), DimensionError);
}

TEST_CASE("actions are clipped to the speed limit") {
  harness::PointReach2D env({.dt = 0.5, .v_max = 0.25, .tolerance = 1e-9, .max_steps = 60, .min_separation = 0.3});
  const Vec o = env.reset(7);
  const Vec n = env.step({30.0, 40.0}).obs;
  const double dx = n[0] - o[0], dy = n[1] - o[1];
  CHECK(std::hypot(dx, dy) == doctest::Approx(0.125).epsilon(1e-12));
  CHECK(dy / dx == doctest::Approx(4.0 / 3.0));
  CHECK(harness::clip_norm({0.1, 0.0}, 0.25) == Vec{0.1, 0.0});
  CHECK(harness::clip_norm({NAN, 1.0}, 0.25) == Vec{0.0, 0.0});
}

TEST_CASE("episode ends at max_steps and phases advance in order") {
  harness::PointReach2D env({.dt = 0.5, .v_max = 0.25, .tolerance = 0.05, .max_steps = 7, .min_separation = 0.3});
  env.reset(3);
  harness::StepResult r;
  for (int i = 0; i < 7; ++i) r = env.step({0, 0});
  CHECK(r.done);
  CHECK_FALSE(r.success);
  CHECK(env.steps() == 7);
}

TEST_CASE("scripted expert solves nearly every episode") {
  harness::PointReach2D env;
  const auto d = harness::collect_offline(env, harness::ScriptedExpert{}, 300, 11);
  std::size_t ok = 0;
  for (const auto& t : d.trajectories) {
    ok += t.success;
    CHECK(t.label_count() == t.size());
  }
  CHECK(static_cast<double>(ok) / 300.0 >= 0.99);
  CHECK(d.label_count() == d.steps());
  const auto again = harness::collect_offline(env, harness::ScriptedExpert{}, 300, 11);
  CHECK(again.labeled_actions() == d.labeled_actions());
}

TEST_CASE("cosine similarity conventions") {
  CHECK(harness::cosine_similarity({1, 0}, {2, 0}) == doctest::Approx(1.0));
  CHECK(harness::cosine_similarity({1, 0}, {-3, 0}) == doctest::Approx(-1.0));
  CHECK(harness::cosine_similarity({1, 0}, {0, 5}) == doctest::Approx(0.0));
  CHECK(harness::cosine_similarity({0, 0}, {0, 0}) == 1.0);
  CHECK(harness::cosine_similarity({0, 0}, {1, 1}) == 0.0);
  CHECK_THROWS_AS(harness::cosine_similarity({1}, {1, 2}), DimensionError);
  harness::ExpertGate gate{0.5};
  CHECK(gate.intervene({1, 0}, {0, 1}));
  CHECK_FALSE(gate.intervene({1, 0.1}, {1, 0}));
}

TEST_CASE("gate threshold averages consecutive labeled pairs") {
  harness::Dataset d;
  harness::Trajectory t;
  t.push({0}, {1, 0}, true);
  t.push({0}, {0, 1}, true);   // pair cos 0
  t.push({0}, {0, 2}, true);   // pair cos 1
  t.push({0}, {-1, 0}, false);  // unlabeled pairs skipped
  t.push({0}, {1, 0}, true);
  d.add(t);
  harness::Trajectory u;
  u.push({0}, {1, 1}, true);
  u.push({0}, {-1, -1}, true);  // pair cos -1
  d.add(u);
  CHECK(harness::compute_gate_threshold(d) == doctest::Approx(0.0));
  harness::Dataset lonely;
  lonely.add(make_traj({true}));
  CHECK_THROWS_AS(harness::compute_gate_threshold(lonely), ContractError);
}

TEST_CASE("sample windows pad observations and truncate at unlabeled steps") {
  harness::Dataset d;
  d.add(make_traj({true, true, false, true, true}));
  const auto idx = harness::labeled_samples(d);
  REQUIRE(idx.size() == 4);
  CHECK(idx[2].step == 3);
  double obs[6], act[8];
  harness::sample_window(d, {0, 0}, 3, 4, obs, act);
  CHECK(std::vector<double>(obs, obs + 6) == std::vector<double>{0, 0, 0, 0, 0, 0});
  // labeled run 0..1, then repeats action 1
  CHECK(std::vector<double>(act, act + 8) == std::vector<double>{10, 11, 11, 11, 20, 21, 21, 21});
  harness::sample_window(d, {0, 4}, 3, 4, obs, act);
  CHECK(std::vector<double>(obs, obs + 6) == std::vector<double>{2, -2, 3, -3, 4, -4});
  CHECK(std::vector<double>(act, act + 8) == std::vector<double>{14, 14, 14, 14, 24, 24, 24, 24});
  CHECK(harness::stack_history({{1, 2}}, 3) == std::vector<double>{1, 2, 1, 2, 1, 2});
  CHECK(harness::stack_history({{1}, {2}, {3}, {4}}, 2) == std::vector<double>{3, 4});
}

TEST_CASE("evaluation is deterministic and separates good from bad policies") {
  harness::PointReach2D env;
  const auto seeds = harness::eval_seeds(5, 50);
  CHECK(std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() == 50);
  const auto expert = harness::evaluate(harness::expert_planner({}), env, seeds, 1);
  CHECK(expert.sr == 1.0);
  CHECK(expert.episodes == 50);
  const auto rnd1 = harness::evaluate(harness::random_planner(0.25), env, seeds, 1);
  const auto rnd2 = harness::evaluate(harness::random_planner(0.25), env, seeds, 1);
  CHECK(rnd1 == rnd2);
  CHECK(rnd1.sr < 0.2);
  // durations: failures count as the step limit
  double mean = 0;
  for (std::size_t i = 0; i < rnd1.durations.size(); ++i) mean += rnd1.durations[i];
  mean /= static_cast<double>(rnd1.durations.size());
  CHECK(rnd1.msd_mean == doctest::Approx(mean));
  double var = 0;
  for (int d : rnd1.durations) var += (d - mean) * (d - mean);
  CHECK(rnd1.msd_std == doctest::Approx(std::sqrt(var / static_cast<double>(rnd1.durations.size()))));
  CHECK(rnd1.msd_mean > expert.msd_mean);
  // executing several planned steps per replan changes nothing for the expert's success
  CHECK(harness::evaluate(harness::expert_planner({}), env, seeds, 4).sr == 1.0);
}

TEST_CASE("gated rollout labels only the expert's takeovers") {
  harness::PointReach2D env;
  num::Rng rng(1);
  const harness::ScriptedExpert expert;
  // threshold -2: never intervene; threshold 2: always
  auto never = harness::rollout_with_gate(env, harness::random_planner(0.25), expert, {-2.0}, 4, rng);
  CHECK(never.trajectory.label_count() == 0);
  CHECK(never.labeled.empty());
  auto always = harness::rollout_with_gate(env, harness::random_planner(0.25), expert, {2.0}, 4, rng);
  CHECK(always.trajectory.label_count() == always.trajectory.size());
  CHECK(always.labeled.label_count() == always.trajectory.size());
  const auto ex = harness::expert_rollout(env, expert, 4);
  CHECK(ex.trajectory.actions == always.trajectory.actions);
}

TEST_CASE("resolve rejects inconsistent configurations") {
  auto c = tiny_session(Strategy::kDriftRm);
  c.net.mode = BlockMode::kLora;
  CHECK_THROWS_AS(harness::resolve(c), ConfigError);
  c = tiny_session(Strategy::kHgFull);
  c.net.mode = BlockMode::kFactored;
  CHECK_NOTHROW(harness::resolve(c));
  c.net.mode = BlockMode::kLora;
  CHECK_THROWS_AS(harness::resolve(c), ConfigError);
  c = tiny_session(Strategy::kDriftRm);
  c.schedule.r_min = 10000;
  CHECK_THROWS_AS(harness::resolve(c), ConfigError);
  c = tiny_session(Strategy::kDriftRm);
  c.offline_epochs = -1;
  CHECK_THROWS_AS(harness::resolve(c), ConfigError);
  c = tiny_session(Strategy::kDriftRm);
  c.gate_threshold = 1.5;
  CHECK_THROWS_AS(harness::resolve(c), ConfigError);
  const auto r = harness::resolve(tiny_session(Strategy::kDriftRm));
  CHECK(r.schedule.total_epochs == 3 + 2);  // combined span: offline epochs plus online iterations
  auto offline_only = tiny_session(Strategy::kDriftRm);
  offline_only.schedule_span = harness::ScheduleSpan::kOffline;
  CHECK(harness::resolve(offline_only).schedule.total_epochs == 3);
  CHECK(r.schedule.r_max == 24);  // up0.conv1: 8 * 3 output rows vs 32 input channels
  for (const char* n : {"drift_rm", "fpmo", "mplo", "drift_lora_static", "drift_lora_sched", "hg_full", "bc"})
    CHECK(harness::to_string(*harness::parse_strategy(n)) == n);
  CHECK_FALSE(harness::parse_strategy("dagger"));
}

TEST_CASE("each strategy follows its rank and mode plan") {
  struct Expect {
    Strategy s;
    BlockMode offline, online;
    bool scheduled_offline;
    int online_rank;  // 0: full
  };
  const std::vector<Expect> table{
      {Strategy::kDriftRm, BlockMode::kFactored, BlockMode::kFactored, true, 4},
      {Strategy::kFpmo, BlockMode::kFactored, BlockMode::kFactored, false, 4},
      {Strategy::kMplo, BlockMode::kFactored, BlockMode::kLora, true, 4},
      {Strategy::kDriftLoraStatic, BlockMode::kPlain, BlockMode::kLora, false, 4},
      {Strategy::kDriftLoraSched, BlockMode::kLora, BlockMode::kLora, true, 4},
      {Strategy::kHgFull, BlockMode::kPlain, BlockMode::kPlain, false, 0},
      {Strategy::kBc, BlockMode::kPlain, BlockMode::kPlain, false, 0},
  };
  for (const auto& e : table) {
    INFO("strategy " << harness::to_string(e.s));
    harness::DaggerSession s(tiny_session(e.s));
    int units = 0;
    while (!s.done()) {
      s.advance();
      ++units;
    }
    CHECK(units == 1 + 3 + 2);
    const auto& cfg = s.config();
    const auto& ep = s.state().epochs;
    REQUIRE(ep.size() == 5);
    for (int i = 0; i < 3; ++i) {
      CHECK(ep[i].phase == "offline");
      CHECK(ep[i].mode == e.offline);
      const int want = e.scheduled_offline ? sched::scheduled_rank(cfg.schedule, i) : cfg.schedule.r_max;
      CHECK(ep[i].rank == want);
    }
    for (int j = 3; j < 5; ++j) {
      CHECK(ep[j].phase == "online");
      CHECK(ep[j].epoch == j - 2);
      CHECK(ep[j].mode == e.online);
      CHECK(ep[j].rank == (e.online_rank ? e.online_rank : cfg.schedule.r_max));
    }
    CHECK(ep[0].new_labels == s.state().offline_data.label_count());
    CHECK(ep[4].nel == ep[3].nel + ep[4].new_labels);
    if (e.s == Strategy::kBc) CHECK(ep[3].new_labels > 0);
    const auto& cp = s.state().checkpoints;
    REQUIRE(cp.size() == 3);
    for (int k = 0; k < 3; ++k) CHECK(cp[k].iteration == k);
    CHECK(cp.back().nel == ep.back().nel);
  }
}

TEST_CASE("aggregate metrics follow the per-epoch records") {
  harness::DaggerSession s(tiny_session(Strategy::kDriftRm));
  s.run();
  const auto rep = harness::metrics_aggregate(s);
  double t_off = 0, t_on = 0;
  std::size_t b_off = 0, b_on = 0;
  for (const auto& e : s.state().epochs) {
    (e.phase == "offline" ? t_off : t_on) += e.train_time_s;
    (e.phase == "offline" ? b_off : b_on) += e.batches;
  }
  CHECK(rep.offline_labels == s.state().offline_data.label_count());
  CHECK(rep.nel == s.state().data.label_count());
  CHECK(rep.online_labels == rep.nel - rep.offline_labels);
  REQUIRE(rep.mbt_offline);
  REQUIRE(rep.mbt_online);
  CHECK(*rep.mbt_offline == doctest::Approx(t_off / b_off));
  CHECK(*rep.mbt_online == doctest::Approx(t_on / b_on));
  const double expect_all = (*rep.mbt_offline * rep.offline_labels + *rep.mbt_online * rep.online_labels) /
                            static_cast<double>(rep.nel);
  CHECK(*rep.mbt_all == doctest::Approx(expect_all));
  CHECK(rep.ct_s == doctest::Approx(t_off + t_on + s.state().reparam_time_s));
  CHECK(rep.final_checkpoint->iteration == 2);
}

TEST_CASE("identical configurations produce identical runs") {
  harness::DaggerSession a(tiny_session(Strategy::kMplo)), b(tiny_session(Strategy::kMplo));
  a.run();
  b.run();
  REQUIRE(a.state().epochs.size() == b.state().epochs.size());
  for (std::size_t i = 0; i < a.state().epochs.size(); ++i) {
    CHECK(a.state().epochs[i].weights_hash == b.state().epochs[i].weights_hash);
    CHECK(a.state().epochs[i].loss == b.state().epochs[i].loss);
  }
  CHECK(a.state().checkpoints.back().sr == b.state().checkpoints.back().sr);
  auto c = tiny_session(Strategy::kMplo);
  c.seed = 1;
  harness::DaggerSession other(c);
  other.run();
  CHECK(other.state().epochs.back().weights_hash != a.state().epochs.back().weights_hash);
}

TEST_CASE("constant-schedule drift_rm reproduces the standalone HG-DAgger driver") {
  auto c = tiny_session(Strategy::kDriftRm);
  c.schedule.kind = sched::DecayKind::kConstant;
  c.checkpoint_every = 0;
  harness::DaggerSession s(c);
  s.run();
  const auto ref = harness::hg_dagger(c);
  REQUIRE(ref.update_hashes.size() == s.state().epochs.size());
  for (std::size_t i = 0; i < ref.update_hashes.size(); ++i) CHECK(ref.update_hashes[i] == s.state().epochs[i].weights_hash);
  CHECK(ref.nel == s.state().data.label_count());
}

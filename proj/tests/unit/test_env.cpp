#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "lyapgdm/env.hpp"
#include "lyapgdm/errors.hpp"
#include "oracles.hpp"

using namespace lyapgdm;
using namespace lyapgdm::env;
using doctest::Approx;

namespace {

std::vector<double> raw_of(std::initializer_list<double> xs) { return std::vector<double>(xs); }

}  // namespace

TEST_CASE("config defaults and validation") {
  EnvConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.obs_dim() == 8);
  CHECK(cfg.action_dim() == 5);
  CHECK(cfg.diagonal() == 750.0);

  auto bad = [](auto mutate, const char* key) {
    EnvConfig c;
    mutate(c);
    try {
      c.validate();
      FAIL("expected ConfigError for " << key);
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find(key) != std::string::npos);
    }
  };
  bad([](EnvConfig& c) { c.v_max = -1.0; }, "env.v_max");
  bad([](EnvConfig& c) { c.horizon = 0; }, "env.horizon");
  bad([](EnvConfig& c) { c.dt = 0.0; }, "env.dt");
  bad([](EnvConfig& c) { c.bandwidth = 0.0; }, "env.bandwidth");
  bad([](EnvConfig& c) { c.tx_power = -0.1; }, "env.tx_power");
  bad([](EnvConfig& c) { c.energy_budget = 0.0; }, "env.energy_budget");
  bad([](EnvConfig& c) { c.altitude = 0.0; }, "env.altitude");
  bad([](EnvConfig& c) { c.device_positions.clear(); }, "env.device_positions");
  bad([](EnvConfig& c) { c.device_positions[1] = {700.0, 10.0}; }, "env.device_positions");
  bad([](EnvConfig& c) { c.dest = {600.0, 500.0}; }, "env.dest");
  bad([](EnvConfig& c) { c.horizon = 20; }, "env.dest");
}

TEST_CASE("random device layout is seeded") {
  EnvConfig a;
  a.device_layout = DeviceLayout::random;
  a.device_count = 5;
  a.device_seed = 11;
  EnvConfig b = a;
  a.materialize_devices();
  b.materialize_devices();
  CHECK(a.device_positions == b.device_positions);
  CHECK(a.num_devices() == 5);
  CHECK_NOTHROW(a.validate());
  b.device_seed = 12;
  b.materialize_devices();
  CHECK(a.device_positions != b.device_positions);
}

TEST_CASE("channel gain") {
  EnvConfig cfg;
  CHECK(channel_gain({100.0, 150.0}, {100.0, 150.0}, cfg) == Approx(1e-9).epsilon(1e-14));
  CHECK(channel_gain({0.0, 0.0}, {500.0, 100.0}, cfg) == Approx(3.703703703703704e-11).epsilon(1e-12));
  // (d^2 + h^2) doubled -> gain halved: 100^2 + 100^2 = 2 * 100^2
  const double g0 = channel_gain({0.0, 0.0}, {0.0, 0.0}, cfg);
  const double g1 = channel_gain({0.0, 0.0}, {100.0, 0.0}, cfg);
  CHECK(g1 == Approx(g0 / 2.0).epsilon(1e-14));
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 400.0);
  for (int i = 0; i < 1000; ++i) {
    const double d = u(rng);
    CHECK(channel_gain({d, 0.0}, {0.0, 0.0}, cfg) > channel_gain({d + 1.0, 0.0}, {0.0, 0.0}, cfg));
    CHECK(channel_gain({d, 0.0}, {0.0, 0.0}, cfg) == Approx(oracle::channel_gain(d, 0.0, cfg)).epsilon(1e-14));
  }
}

TEST_CASE("uplink rates") {
  EnvConfig cfg;
  const std::vector<double> third(3, 1.0 / 3.0);
  const auto above = uplink_rates({100.0, 150.0}, cfg, third);
  CHECK(above[0] == Approx(4957574.323101274).epsilon(1e-12));
  CHECK(above[0] == Approx(4.958e6).epsilon(1e-3));
  const auto corner = uplink_rates({0.0, 0.0}, cfg, third);
  CHECK(corner[2] == Approx(3373028.4065675945).epsilon(1e-12));
  CHECK(corner[2] == Approx(3.373e6).epsilon(1e-3));

  const std::vector<double> one_hot{1.0, 0.0, 0.0};
  const auto r = uplink_rates({300.0, 200.0}, cfg, one_hot);
  CHECK(r[1] == 0.0);
  CHECK(r[2] == 0.0);
  CHECK(r[0] > 0.0);

  // strictly increasing in b_n
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.01, 0.98);
  for (int i = 0; i < 200; ++i) {
    const double b = u(rng);
    const std::vector<double> lo{b, 1.0 - b, 0.0};
    const std::vector<double> hi{b + 0.01, 0.99 - b, 0.0};
    CHECK(uplink_rates({250.0, 250.0}, cfg, hi)[0] > uplink_rates({250.0, 250.0}, cfg, lo)[0]);
  }
  CHECK_THROWS_AS(uplink_rates({0.0, 0.0}, cfg, std::vector<double>{1.0}), UsageError);
}

TEST_CASE("sum rate is nondecreasing in total bandwidth") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> ux(0.0, 600.0);
  std::uniform_real_distribution<double> uy(0.0, 450.0);
  std::uniform_real_distribution<double> ub(0.0, 1.0);
  for (int i = 0; i < 500; ++i) {
    const Vec2 p{ux(rng), uy(rng)};
    std::vector<double> ratios{ub(rng), ub(rng), ub(rng)};
    const double s = ratios[0] + ratios[1] + ratios[2];
    for (double& r : ratios) r /= s;
    double prev = -1.0;
    for (double bw : {0.5e6, 1e6, 1.5e6, 2e6}) {
      EnvConfig cfg;
      cfg.bandwidth = bw;
      double sum = 0.0;
      for (double r : uplink_rates(p, cfg, ratios)) sum += r;
      CHECK(sum >= prev);
      prev = sum;
    }
  }
}

TEST_CASE("propulsion power") {
  CHECK(propulsion_power(0.0) == Approx(168.4842).epsilon(1e-12));
  CHECK(propulsion_power(10.0) == Approx(126.0).epsilon(1e-3));
  for (double v : {0.0, 5.0, 10.0, 15.0, 20.0, 25.0}) {
    CHECK(propulsion_power(v) == Approx(oracle::propulsion_power(v)).epsilon(1e-12));
  }
  CHECK(propulsion_power(5.0) == Approx(143.6082976905478).epsilon(1e-12));
  CHECK(propulsion_power(25.0) == Approx(248.95227098756294).epsilon(1e-12));
  EnvConfig cfg;
  CHECK(propulsion_power(0.0) * cfg.dt > cfg.energy_budget);
  CHECK(propulsion_power(10.0) * cfg.dt < cfg.energy_budget);
  for (double v = 0.0; v <= 40.0; v += 0.25) CHECK(propulsion_power(v) > 0.0);
  CHECK_THROWS_AS(propulsion_power(-1.0), DomainError);
  CHECK_THROWS_AS(propulsion_power(std::numeric_limits<double>::quiet_NaN()), DomainError);
}

TEST_CASE("squash raw action") {
  EnvConfig cfg;
  const Action zero = squash_raw_action(raw_of({0, 0, 0, 0, 0}), cfg);
  CHECK(zero.velocity == Vec2{0.0, 0.0});
  for (double r : zero.bandwidth_ratios) CHECK(r == Approx(1.0 / 3.0).epsilon(1e-15));

  const double big = 1e300;
  const Action sat = squash_raw_action(raw_of({big, big, 0, 0, 0}), cfg);
  CHECK(sat.velocity.norm() == Approx(cfg.v_max).epsilon(1e-12));
  const Action sat1 = squash_raw_action(raw_of({big, 0, 0, 0, 0}), cfg);
  CHECK(sat1.velocity.norm() == Approx(cfg.v_max).epsilon(1e-12));

  for (double c : {-700.0, -3.0, 0.5, 40.0, 900.0}) {
    const Action a = squash_raw_action(raw_of({0.1, -0.2, c, c, c}), cfg);
    for (double r : a.bandwidth_ratios) CHECK(r == Approx(1.0 / 3.0).epsilon(1e-15));
  }
  const Action skew = squash_raw_action(raw_of({0, 0, 1000, 0, -1000}), cfg);
  CHECK(skew.bandwidth_ratios[0] == Approx(1.0));
  CHECK(skew.bandwidth_ratios[2] == 0.0);
  CHECK_THROWS_AS(squash_raw_action(raw_of({0, 0, 0}), cfg), UsageError);
}

TEST_CASE("reachability clamp") {
  EnvConfig cfg;
  CHECK(reachability_clamp(cfg.dest, {3.0, 4.0}, 10, cfg) == Vec2{3.0, 4.0});
  const Vec2 forced = reachability_clamp({590.0, 0.0}, {-5.0, 5.0}, cfg.horizon - 1, cfg);
  CHECK(forced.x == Approx(10.0));
  CHECK(forced.y == Approx(0.0));
  const Vec2 far = reachability_clamp({100.0, 300.0}, {0.0, 0.0}, cfg.horizon - 1, cfg);
  CHECK(far.norm() == Approx(cfg.v_max));
  const Vec2 dir = (cfg.dest - Vec2{100.0, 300.0}) * (1.0 / (cfg.dest - Vec2{100.0, 300.0}).norm());
  CHECK(far.x / far.norm() == Approx(dir.x));
  CHECK(far.y / far.norm() == Approx(dir.y));
  CHECK(reachability_clamp({0.0, 0.0}, {-25.0, 0.0}, 0, cfg) == Vec2{-25.0, 0.0});
  CHECK(reachability_clamp({0.0, 0.0}, {0.0, 25.0}, 0, cfg) == Vec2{0.0, 25.0});
  CHECK(reachability_clamp(cfg.dest, {5.0, 0.0}, cfg.horizon - 1, cfg) == Vec2{0.0, 0.0});
}

TEST_CASE("reset and observation") {
  EnvConfig cfg;
  const ResetResult r = reset(cfg);
  CHECK(r.state.position == Vec2{0.0, 0.0});
  CHECK(r.state.t == 0);
  CHECK(r.state.queue.queue(0) == 0.0);
  CHECK_FALSE(r.state.done);
  REQUIRE(r.obs.size() == 8);
  CHECK(r.obs[0] == 0.0);
  CHECK(r.obs[1] == 0.0);
  CHECK(r.obs[2] == 0.0);
  CHECK(r.obs[3] == 0.0);
  CHECK(r.obs[4] == Approx(0.1858055349748442).epsilon(1e-12));
  CHECK(r.obs[5] == Approx(-0.17366500765847537).epsilon(1e-12));
  CHECK(r.obs[6] == Approx(-0.2156818820794939).epsilon(1e-12));
  CHECK(r.obs[7] == Approx(0.8).epsilon(1e-15));
  CHECK(r.obs == build_observation(r.state, cfg));

  EnvState end;
  end.position = cfg.dest;
  end.t = cfg.horizon;
  end.done = true;
  const Observation o = build_observation(end, cfg);
  CHECK(o[0] == 1.0);
  CHECK(o[1] == 0.0);
  CHECK(o[2] == 1.0);
  CHECK(o[7] == 0.0);

  CHECK(normalized_log_gain(1e-12) == Approx(-1.0).epsilon(1e-15));
  CHECK(normalized_log_gain(1e-8) == Approx(1.0).epsilon(1e-15));
  CHECK(normalized_log_gain(1e-14) == -1.0);
  CHECK(normalized_log_gain(1e-6) == 1.0);

  EnvConfig broken;
  broken.v_max = -1.0;
  CHECK_THROWS_AS(reset(broken), ConfigError);
}

TEST_CASE("hover slot with V = 0") {
  EnvConfig cfg;
  cfg.v_weight = 0.0;
  auto [state, obs] = reset(cfg);
  Action hover{{0.0, 0.0}, {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0}};
  const StepResult s = step_action(state, hover, cfg);
  CHECK(s.info.energy_j == Approx(168.48).epsilon(1e-4));
  CHECK(s.info.queue == Approx(0.2035).epsilon(1e-3));
  CHECK(s.info.queue == Approx(0.20345857142857135).epsilon(1e-12));
  CHECK(s.info.drift == Approx(0.020697695143877533).epsilon(1e-12));
  CHECK(s.reward == Approx(-0.02070).epsilon(1e-3));
  CHECK(s.reward == -s.info.drift);
}

TEST_CASE("slot at exactly the budget") {
  EnvConfig cfg;
  cfg.energy_budget = propulsion_power(10.0);
  auto [state, obs] = reset(cfg);
  const Action a{{10.0, 0.0}, {0.2, 0.3, 0.5}};
  const StepResult s = step_action(state, a, cfg);
  CHECK(s.info.energy_j == cfg.energy_budget);
  CHECK(s.info.drift == 0.0);
  CHECK(s.reward == Approx(cfg.v_weight * s.info.sum_rate_mbps).epsilon(1e-15));
}

TEST_CASE("reward is assembled from the lyapunov functions") {
  EnvConfig cfg;
  std::mt19937_64 rng(21);
  std::normal_distribution<double> n(0.0, 1.0);
  auto [state, obs] = reset(cfg);
  while (!state.done) {
    std::vector<double> raw(5);
    for (double& x : raw) x = 2.0 * n(rng);
    const StepResult s = step(state, raw, cfg);
    CHECK(s.reward ==
          lyapunov::reward_from_dpp(lyapunov::drift_plus_penalty(s.info.drift, s.info.penalty, {cfg.v_weight})));
    CHECK(s.info.penalty == -s.info.sum_rate_mbps);
    CHECK(s.info.energy_j == Approx(oracle::propulsion_power(s.info.velocity.norm())).epsilon(1e-12));
    state = s.state;
  }
}

TEST_CASE("step errors") {
  EnvConfig cfg;
  auto [state, obs] = reset(cfg);
  std::vector<double> raw(5, 0.0);
  raw[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(step(state, raw, cfg), DomainError);
  CHECK_THROWS_AS(step_action(state, Action{{30.0, 0.0}, {1.0, 0.0, 0.0}}, cfg), DomainError);
  CHECK_THROWS_AS(step_action(state, Action{{0.0, 0.0}, {0.5, 0.0, 0.0}}, cfg), DomainError);
  state.done = true;
  state.t = cfg.horizon;
  CHECK_THROWS_AS(step(state, std::vector<double>(5, 0.0), cfg), UsageError);
}

TEST_CASE("episodes terminate at dest after T steps") {
  EnvConfig cfg;
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 3.0);
  for (int ep = 0; ep < 20; ++ep) {
    auto [state, obs] = reset(cfg);
    int steps = 0;
    while (!state.done) {
      std::vector<double> raw(5);
      for (double& x : raw) x = n(rng);
      const StepResult s = step(state, raw, cfg);
      const auto& inv = oracle::check_slot(state, s, cfg);
      CHECK_MESSAGE(inv.empty(), inv);
      state = s.state;
      ++steps;
    }
    CHECK(steps == cfg.horizon);
    CHECK((state.position - cfg.dest).norm() <= cfg.v_max * cfg.dt);
  }
}

TEST_CASE("identical action sequences give bit-identical trajectories") {
  EnvConfig cfg;
  auto run = [&] {
    std::mt19937_64 rng(99);
    std::normal_distribution<double> n(0.0, 1.0);
    auto [state, obs] = reset(cfg);
    std::vector<double> xs;
    while (!state.done) {
      std::vector<double> raw(5);
      for (double& x : raw) x = n(rng);
      const StepResult s = step(state, raw, cfg);
      xs.insert(xs.end(), {s.info.position.x, s.info.position.y, s.reward, s.info.queue});
      state = s.state;
    }
    return xs;
  };
  CHECK(run() == run());
}

TEST_CASE("energy bookkeeping replays exactly") {
  EnvConfig cfg;
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(0.0, 1.0);
  auto [state, obs] = reset(cfg);
  std::vector<double> energies;
  while (!state.done) {
    std::vector<double> raw(5);
    for (double& x : raw) x = 0.5 * n(rng);
    const StepResult s = step(state, raw, cfg);
    energies.push_back(s.info.energy_j);
    state = s.state;
  }
  double q = 0.0;
  for (double e : energies) q = lyapunov::virtual_queue_update(q, e, cfg.energy_budget);
  CHECK(q == state.queue.queue(0));
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "lyapgdm/agent.hpp"
#include "lyapgdm/errors.hpp"
#include "lyapgdm/replay_buffer.hpp"
#include "lyapgdm/trainer.hpp"

using namespace lyapgdm;
using namespace lyapgdm::rl;
using nn::Mat;
using doctest::Approx;

namespace {

env::Transition tagged(double tag, int obs_dim = 3, int act_dim = 4) {
  env::Transition t;
  t.obs.assign(obs_dim, tag);
  t.obs_next.assign(obs_dim, tag + 0.5);
  t.action_raw.assign(act_dim, -tag);
  t.reward = tag;
  return t;
}

AgentSpec toy_spec(AgentKind kind, double clip = 0.0) {
  AgentSpec s;
  s.kind = kind;
  s.obs_dim = 3;
  s.action_dim = 4;
  s.denoiser_hidden = {16, 16};
  s.critic_hidden = {16, 16};
  s.mlp_actor_hidden = {16, 16};
  s.embed_dim = 4;
  s.x0_clip = clip;
  return s;
}

Batch<double> random_batch(int n, std::uint64_t seed, double done_fraction = 0.3) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d;
  std::uniform_real_distribution<double> u;
  std::vector<env::Transition> ts(n);
  std::vector<const env::Transition*> ptrs;
  for (auto& t : ts) {
    t.obs = {d(rng), d(rng), d(rng)};
    t.obs_next = {d(rng), d(rng), d(rng)};
    t.action_raw = {d(rng), d(rng), d(rng), d(rng)};
    t.reward = d(rng);
    t.done = u(rng) < done_fraction;
    ptrs.push_back(&t);
  }
  return make_batch<double>(ptrs);
}

double q_value(const AgentNets<double>& nets, const Mat<double>& obs, const Mat<double>& act) {
  Mat<double> in(obs.rows() + act.rows(), obs.cols());
  in << obs, act;
  return nn::mlp_forward_batch(nets.critic, nets.critic_spec, in)(0, 0);
}

void make_constant(nn::ParamTensor<double>& p, double c) {
  std::fill(p.values.begin(), p.values.end(), 0.0);
  p.values[p.layers.back().bias_offset] = c;
  p.touch();
}

TrainerConfig quick_trainer() {
  TrainerConfig t;
  t.episodes = 3;
  t.warmup = 60;
  t.batch = 16;
  t.buffer_capacity = 1000;
  t.seed = 11;
  return t;
}

NetworkConfig small_networks() {
  NetworkConfig n;
  n.denoiser_hidden = {16, 16};
  n.critic_hidden = {16, 16};
  n.mlp_actor_hidden = {16, 16};
  return n;
}

void check_same_metrics(const std::vector<EpisodeMetrics>& a, const std::vector<EpisodeMetrics>& b) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].episode == b[i].episode);
    CHECK(a[i].reward_mean == b[i].reward_mean);
    CHECK(a[i].dpp_mean == b[i].dpp_mean);
    CHECK(a[i].rate_mean_mbps == b[i].rate_mean_mbps);
    CHECK(a[i].energy_mean_j == b[i].energy_mean_j);
    CHECK(a[i].queue_final == b[i].queue_final);
    CHECK(a[i].actor_loss == b[i].actor_loss);
    CHECK(a[i].critic_loss == b[i].critic_loss);
    CHECK(a[i].updates == b[i].updates);
  }
}

}  // namespace

TEST_CASE("replay buffer ring semantics") {
  ReplayBuffer buf(2);
  CHECK(buf.size() == 0);
  buf.push(tagged(1));
  CHECK(buf.size() == 1);
  CHECK(buf.cursor() == 1);
  buf.push(tagged(2));
  CHECK(buf.size() == 2);
  CHECK(buf.cursor() == 0);
  buf.push(tagged(3));
  CHECK(buf.size() == 2);
  std::vector<double> held{buf.at(0).reward, buf.at(1).reward};
  std::sort(held.begin(), held.end());
  CHECK(held == std::vector<double>{2.0, 3.0});

  ReplayBuffer ring(5);
  for (int i = 0; i < 5; ++i) ring.push(tagged(i));
  CHECK(ring.cursor() == 0);
  for (int i = 5; i < 23; ++i) {
    ring.push(tagged(i));
    REQUIRE(ring.size() == 5);
    REQUIRE(ring.cursor() == static_cast<std::size_t>((i + 1) % 5));
  }
}

TEST_CASE("replay buffer sampling") {
  ReplayBuffer one(4);
  one.push(tagged(7));
  std::mt19937_64 rng(1);
  const auto s = one.sample(1, rng);
  REQUIRE(s.size() == 1);
  CHECK(s[0]->reward == 7.0);

  ReplayBuffer buf(100);
  std::mt19937_64 empty_rng(0);
  CHECK_THROWS_AS(buf.sample(1, empty_rng), UsageError);
  for (int i = 0; i < 37; ++i) buf.push(tagged(i));
  CHECK_THROWS_AS(buf.sample(38, empty_rng), UsageError);
  std::mt19937_64 a(5), b(5);
  for (int round = 0; round < 50; ++round) {
    const auto ia = buf.sample_indices(32, a);
    const auto ib = buf.sample_indices(32, b);
    REQUIRE(ia == ib);
    for (std::size_t i : ia) REQUIRE(i < buf.size());
  }
  // Uniform: every slot gets hit over many draws.
  std::vector<int> hits(buf.size(), 0);
  for (int round = 0; round < 600; ++round) {
    for (std::size_t i : buf.sample_indices(32, a)) ++hits[i];
  }
  for (int h : hits) CHECK(h > 0);
}

TEST_CASE("make_batch packs columns") {
  std::vector<env::Transition> ts{tagged(1), tagged(2)};
  ts[1].done = true;
  const std::vector<const env::Transition*> ptrs{&ts[0], &ts[1]};
  const Batch<double> b = make_batch<double>(ptrs);
  CHECK(b.obs.cols() == 2);
  CHECK(b.obs(0, 1) == 2.0);
  CHECK(b.obs_next(2, 0) == 1.5);
  CHECK(b.actions(3, 1) == -2.0);
  CHECK(b.rewards(1) == 2.0);
  CHECK(b.done(0) == 0.0);
  CHECK(b.done(1) == 1.0);
  CHECK_THROWS_AS(make_batch<double>(std::vector<const env::Transition*>{}), UsageError);
}

TEST_CASE("agent construction") {
  for (AgentKind kind : {AgentKind::gdm_ddpg, AgentKind::mlp_ddpg}) {
    const auto nets = make_agent<double>(toy_spec(kind), 3);
    CHECK(nets.target_actor.params.values == nets.actor.params.values);
    CHECK(nets.target_actor.spec == nets.actor.spec);
    CHECK(nets.target_critic.values == nets.critic.values);
    CHECK(nets.critic_spec.input_width() == 7);
    CHECK(nets.critic_spec.output_width() == 1);
    CHECK(make_agent<double>(toy_spec(kind), 3).actor.params.values == nets.actor.params.values);
  }
  CHECK(agent_kind_from_string("gdm-ddpg") == AgentKind::gdm_ddpg);
  CHECK(agent_kind_from_string("mlp-ddpg") == AgentKind::mlp_ddpg);
  CHECK_THROWS_AS(agent_kind_from_string("td3"), ConfigError);
}

TEST_CASE("critic target examples") {
  auto nets = make_agent<double>(toy_spec(AgentKind::gdm_ddpg), 4);
  const Batch<double> batch = random_batch(8, 9);
  UpdateConfig cfg;
  std::mt19937_64 rng(1);

  // gamma = 0: y = r, so the loss is the mean squared gap to the rewards.
  cfg.gamma = 0.0;
  double want = 0.0;
  for (int j = 0; j < 8; ++j) {
    const double q = q_value(nets, batch.obs.col(j), batch.actions.col(j));
    want += (q - batch.rewards(j)) * (q - batch.rewards(j));
  }
  nets.critic.zero_grads();
  CHECK(critic_loss_and_grad(nets, batch, cfg, rng) == Approx(want / 8.0).epsilon(1e-12));

  // All-terminal batch: bootstrap dropped for any gamma.
  Batch<double> terminal = batch;
  terminal.done.setOnes();
  cfg.gamma = 0.99;
  nets.critic.zero_grads();
  CHECK(critic_loss_and_grad(nets, terminal, cfg, rng) == Approx(want / 8.0).epsilon(1e-12));

  // Non-terminal with a constant target critic: y = r + gamma * c.
  make_constant(nets.target_critic, 2.0);
  Batch<double> live = batch;
  live.done.setZero();
  double want_live = 0.0;
  for (int j = 0; j < 8; ++j) {
    const double q = q_value(nets, batch.obs.col(j), batch.actions.col(j));
    const double y = batch.rewards(j) + 0.99 * 2.0;
    want_live += (q - y) * (q - y);
  }
  nets.critic.zero_grads();
  CHECK(critic_loss_and_grad(nets, live, cfg, rng) == Approx(want_live / 8.0).epsilon(1e-12));
}

TEST_CASE("zero critic with zero targets gives zero loss and zero grads") {
  auto nets = make_agent<double>(toy_spec(AgentKind::mlp_ddpg), 4);
  make_constant(nets.critic, 0.0);
  make_constant(nets.target_critic, 0.0);
  Batch<double> batch = random_batch(6, 2);
  batch.rewards.setZero();
  UpdateConfig cfg;
  std::mt19937_64 rng(1);
  nets.critic.zero_grads();
  CHECK(critic_loss_and_grad(nets, batch, cfg, rng) == 0.0);
  for (double g : nets.critic.grads) REQUIRE(g == 0.0);
}

TEST_CASE("critic gradient matches central differences") {
  auto nets = make_agent<double>(toy_spec(AgentKind::gdm_ddpg), 8);
  const Batch<double> batch = random_batch(5, 4);
  UpdateConfig cfg;
  auto loss = [&] {
    std::mt19937_64 rng(3);
    return critic_loss_and_grad(nets, batch, cfg, rng);
  };
  nets.critic.zero_grads();
  loss();
  const auto analytic = nets.critic.grads;
  const double h = 1e-6;
  double worst = 0.0;
  for (std::size_t i = 0; i < nets.critic.size(); ++i) {
    const double saved = nets.critic.values[i];
    nets.critic.values[i] = saved + h;
    nets.critic.touch();
    const double up = loss();
    nets.critic.values[i] = saved - h;
    nets.critic.touch();
    const double down = loss();
    nets.critic.values[i] = saved;
    nets.critic.touch();
    worst = std::max(worst, nn::relative_error(analytic[i], (up - down) / (2.0 * h)));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("critic update changes only the critic") {
  auto nets = make_agent<double>(toy_spec(AgentKind::gdm_ddpg, 1.0), 5);
  const auto actor = nets.actor.params.values;
  const auto target_actor = nets.target_actor.params.values;
  const auto target_critic = nets.target_critic.values;
  const auto critic = nets.critic.values;
  std::mt19937_64 rng(2);
  const double loss = critic_update(nets, random_batch(8, 3), UpdateConfig{}, rng);
  CHECK(std::isfinite(loss));
  CHECK(nets.critic.values != critic);
  CHECK(nets.actor.params.values == actor);
  CHECK(nets.target_actor.params.values == target_actor);
  CHECK(nets.target_critic.values == target_critic);
  for (double g : nets.critic.grads) REQUIRE(g == 0.0);
}

TEST_CASE("actor loss examples") {
  for (AgentKind kind : {AgentKind::gdm_ddpg, AgentKind::mlp_ddpg}) {
    auto nets = make_agent<double>(toy_spec(kind, 1.0), 6);
    make_constant(nets.critic, 3.25);
    const Batch<double> batch = random_batch(7, 5);
    std::mt19937_64 rng(1);
    nets.actor.params.zero_grads();
    CHECK(actor_loss_and_grad(nets, batch.obs, UpdateConfig{}, rng) == -3.25);
    for (double g : nets.actor.params.grads) REQUIRE(g == 0.0);
  }
  for (AgentKind kind : {AgentKind::gdm_ddpg, AgentKind::mlp_ddpg}) {
    auto nets = make_agent<double>(toy_spec(kind, 1.0), 6);
    const Batch<double> single = random_batch(1, 8);
    std::mt19937_64 r1(4), r2(4);
    const Mat<double> action = policy_act(nets.actor, single.obs, r1, true);
    nets.actor.params.zero_grads();
    CHECK(actor_loss_and_grad(nets, single.obs, UpdateConfig{}, r2) ==
          Approx(-q_value(nets, single.obs, action)).epsilon(1e-14));
  }
}

TEST_CASE("actor gradient through critic and policy matches central differences") {
  struct Case {
    AgentKind kind;
    double clip;
  };
  for (const Case c : {Case{AgentKind::gdm_ddpg, 0.0}, Case{AgentKind::gdm_ddpg, 1.0}, Case{AgentKind::mlp_ddpg, 0.0}}) {
    CAPTURE(static_cast<int>(c.kind));
    CAPTURE(c.clip);
    auto nets = make_agent<double>(toy_spec(c.kind, c.clip), 12);
    const Batch<double> batch = random_batch(3, 6);
    UpdateConfig cfg;
    auto loss = [&] {
      std::mt19937_64 rng(9);
      return actor_loss_and_grad(nets, batch.obs, cfg, rng);
    };
    nets.actor.params.zero_grads();
    loss();
    const auto analytic = nets.actor.params.grads;
    auto& p = nets.actor.params;
    const double h = 1e-6;
    double worst = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double saved = p.values[i];
      p.values[i] = saved + h;
      p.touch();
      const double up = loss();
      p.values[i] = saved - h;
      p.touch();
      const double down = loss();
      p.values[i] = saved;
      p.touch();
      worst = std::max(worst, nn::relative_error(analytic[i], (up - down) / (2.0 * h)));
    }
    CHECK(worst < 1e-3);
  }
}

TEST_CASE("actor update changes only the actor") {
  for (AgentKind kind : {AgentKind::gdm_ddpg, AgentKind::mlp_ddpg}) {
    auto nets = make_agent<double>(toy_spec(kind, 1.0), 5);
    const auto actor = nets.actor.params.values;
    const auto critic = nets.critic.values;
    const auto target_critic = nets.target_critic.values;
    const auto target_actor = nets.target_actor.params.values;
    std::mt19937_64 rng(2);
    const double loss = actor_update(nets, random_batch(8, 3), UpdateConfig{}, rng);
    CHECK(std::isfinite(loss));
    CHECK(nets.actor.params.values != actor);
    CHECK(nets.critic.values == critic);
    CHECK(nets.target_critic.values == target_critic);
    CHECK(nets.target_actor.params.values == target_actor);
    for (double g : nets.actor.params.grads) REQUIRE(g == 0.0);
    for (double g : nets.critic.grads) REQUIRE(g == 0.0);
  }
}

TEST_CASE("soft update") {
  const nn::MlpSpec spec = nn::MlpSpec::make({1, 1}, nn::Activation::identity, nn::Activation::identity);
  nn::ParamTensor<double> target(spec), online(spec);
  target.values = {1.0, 1.0};
  online.values = {3.0, 3.0};
  soft_update(target, online, 0.5);
  CHECK(target.values == nn::FlatVec<double>{2.0, 2.0});
  soft_update(target, online, 0.0);
  CHECK(target.values == nn::FlatVec<double>{2.0, 2.0});
  soft_update(target, online, 1.0);
  CHECK(target.values == online.values);

  const nn::MlpSpec big = nn::MlpSpec::make({4, 8, 2}, nn::Activation::relu, nn::Activation::identity);
  CHECK_THROWS_AS(soft_update(target, nn::mlp_init<double>(big, 1), 0.5), UsageError);
  CHECK_THROWS_AS(soft_update(target, online, 1.5), UsageError);

  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto t = nn::mlp_init<double>(big, seed);
    const auto o = nn::mlp_init<double>(big, seed + 100);
    const auto old = t.values;
    const double tau = 0.005 * (seed + 1);
    soft_update(t, o, tau);
    double moved = 0.0, gap = 0.0;
    for (std::size_t i = 0; i < old.size(); ++i) {
      moved = std::max(moved, std::abs(t.values[i] - old[i]));
      gap = std::max(gap, std::abs(o.values[i] - old[i]));
    }
    CHECK(moved <= tau * gap * (1.0 + 1e-12));
  }
}

TEST_CASE("trainer config validation names the key") {
  TrainerConfig t;
  CHECK_NOTHROW(t.validate());
  t.tau = 0.0;
  CHECK_THROWS_WITH_AS(t.validate(), doctest::Contains("trainer.tau"), ConfigError);
  t = {};
  t.gamma = 1.5;
  CHECK_THROWS_WITH_AS(t.validate(), doctest::Contains("trainer.gamma"), ConfigError);
  t = {};
  t.buffer_capacity = 10;
  CHECK_THROWS_WITH_AS(t.validate(), doctest::Contains("trainer.buffer_capacity"), ConfigError);
  DiffusionConfig d;
  d.embed_dim = 15;
  CHECK_THROWS_WITH_AS(d.validate(), doctest::Contains("diffusion.embed_dim"), ConfigError);
  CHECK(exploration_sigma(TrainerConfig{}, 0) == Approx(0.2));
  CHECK(exploration_sigma(TrainerConfig{}, 999) == Approx(0.01));
  CHECK(exploration_sigma(TrainerConfig{}, 5000) == Approx(0.01));
  TrainerConfig off;
  off.explore = false;
  CHECK(exploration_sigma(off, 0) == 0.0);
}

TEST_CASE("warmup gate: no updates before the buffer fills") {
  TrainerConfig t = quick_trainer();
  t.episodes = 1;
  t.warmup = 1000;
  int calls = 0;
  const TrainResult r = train_run(env::EnvConfig{}, t, DiffusionConfig{}, small_networks(), AgentKind::gdm_ddpg,
                                  [&](const EpisodeMetrics&, const AgentNets<Real>&) { ++calls; });
  CHECK(calls == 1);
  REQUIRE(r.metrics.size() == 1);
  CHECK(r.metrics[0].updates == 0);
  CHECK(r.total_updates == 0);
  CHECK(r.metrics[0].steps == 100);
  CHECK(r.metrics[0].actor_loss == 0.0);
  CHECK(r.metrics[0].critic_loss == 0.0);
  CHECK(std::isfinite(r.metrics[0].reward_mean));
}

TEST_CASE("training is deterministic per seed") {
  for (AgentKind kind : {AgentKind::gdm_ddpg, AgentKind::mlp_ddpg}) {
    const TrainerConfig t = quick_trainer();
    const TrainResult a = train_run(env::EnvConfig{}, t, DiffusionConfig{}, small_networks(), kind);
    const TrainResult b = train_run(env::EnvConfig{}, t, DiffusionConfig{}, small_networks(), kind);
    check_same_metrics(a.metrics, b.metrics);
    CHECK(a.total_updates == b.total_updates);
    // Updates begin on the step whose push brings the buffer to `warmup`.
    CHECK(a.total_updates == 300 - 60 + 1);
    CHECK(a.nets.actor.params.values == b.nets.actor.params.values);
    CHECK(a.nets.critic.values == b.nets.critic.values);
    for (const auto& m : a.metrics) {
      CHECK(std::isfinite(m.actor_loss));
      CHECK(std::isfinite(m.critic_loss));
    }
    TrainerConfig other = t;
    other.seed = 12;
    const TrainResult c = train_run(env::EnvConfig{}, other, DiffusionConfig{}, small_networks(), kind);
    CHECK(c.metrics.back().reward_mean != a.metrics.back().reward_mean);
  }
}

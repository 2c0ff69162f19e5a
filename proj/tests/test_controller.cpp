#include <doctest.h>

#include <cmath>

#include "nases/controller.hpp"
#include "nases/grad_check.hpp"

using namespace nases;

namespace {

const SpaceConfig kSpace{3, true};

AutoencoderModel pretrained_stub(std::uint64_t seed = 5) {
  AutoencoderModel m = make_autoencoder(kSpace, 4, 12, seed);
  m.pretrained = true;  // weights as-initialized; enough for wiring tests
  return m;
}

OriginVector random_origin(std::uint64_t seed, std::size_t dim) {
  Rng rng(seed);
  OriginVector v(dim);
  for (double& x : v) x = rng.uniform();
  return v;
}

}  // namespace

TEST_CASE("init_from_simulator copies weights and validates inputs") {
  AutoencoderModel ae = pretrained_stub();
  CHECK_THROWS_AS(init_from_simulator(ae, 0.0, 0.95), Error);
  CHECK_THROWS_AS(init_from_simulator(ae, -1.0, 0.95), Error);
  CHECK_THROWS_AS(init_from_simulator(ae, 0.1, 1.0), Error);

  AutoencoderModel cold = make_autoencoder(kSpace, 4, 12, 6);
  CHECK_THROWS_AS(init_from_simulator(cold, 0.1, 0.95), Error);

  ControllerModel c = init_from_simulator(ae, 0.1, 0.95);
  // warm start: controller forward == simulator forward, bitwise
  for (std::uint64_t s = 0; s < 20; ++s) {
    OriginVector x = random_origin(s, ae.origin_dim);
    Embedding via_ctrl = policy_mean(c, x);
    Embedding via_sim = simulate(ae, x);
    REQUIRE(via_ctrl.size() == via_sim.size());
    for (std::size_t i = 0; i < via_ctrl.size(); ++i) CHECK(via_ctrl[i] == via_sim[i]);
  }
}

TEST_CASE("controller updates never mutate the autoencoder") {
  AutoencoderModel ae = pretrained_stub(8);
  ControllerModel c = init_from_simulator(ae, 0.2, 0.9);

  OriginVector x = random_origin(1, ae.origin_dim);
  Embedding before = simulate(ae, x);

  PolicySample s = sample_action(c, x, 99);
  reinforce_update(c, s, /*reward=*/1.0, /*lr=*/1e-2);
  PolicySample s2 = sample_action(c, x, 100);
  reinforce_update(c, s2, 0.0, 1e-2);

  Embedding after = simulate(ae, x);
  for (std::size_t i = 0; i < before.size(); ++i) CHECK(before[i] == after[i]);
  // and the controller did move
  Embedding moved = policy_mean(c, x);
  bool any = false;
  for (std::size_t i = 0; i < moved.size(); ++i) any = any || moved[i] != before[i];
  CHECK(any);
}

TEST_CASE("sample_action: degenerate sigma collapses to the mean") {
  AutoencoderModel ae = pretrained_stub(9);
  ControllerModel c = init_from_simulator(ae, 1e-12, 0.95);
  OriginVector x = random_origin(2, ae.origin_dim);
  PolicySample s = sample_action(c, x, 7);
  for (std::size_t i = 0; i < s.mean.size(); ++i)
    CHECK(std::abs(s.action[i] - s.mean[i]) < 1e-9);
}

TEST_CASE("log_prob at the mode equals the Gaussian normalizer") {
  const double sigma = 0.3;
  Embedding mean{0.1, -0.4, 2.0};
  const double lp = gaussian_log_prob(mean, mean, sigma);
  const double expected = -1.5 * std::log(2.0 * 3.14159265358979323846 * sigma * sigma);
  CHECK(lp == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("sampled action spread matches sigma") {
  AutoencoderModel ae = pretrained_stub(10);
  const double sigma = 0.25;
  ControllerModel c = init_from_simulator(ae, sigma, 0.95);
  OriginVector x = random_origin(3, ae.origin_dim);
  Embedding mean = policy_mean(c, x);

  const int n = 10000;
  double var = 0.0;
  for (int i = 0; i < n; ++i) {
    PolicySample s = sample_action(c, x, derive_seed(5, 6, static_cast<std::uint64_t>(i)));
    const double d = s.action[0] - mean[0];
    var += d * d;
  }
  const double sd = std::sqrt(var / n);
  CHECK(sd == doctest::Approx(sigma).epsilon(0.03));
}

TEST_CASE("reinforce: zero advantage leaves a fresh controller unchanged") {
  AutoencoderModel ae = pretrained_stub(11);
  ControllerModel c = init_from_simulator(ae, 0.1, 0.95);
  update_baseline(c, 0.5);
  OriginVector x = random_origin(4, ae.origin_dim);
  Embedding before = policy_mean(c, x);
  PolicySample s = sample_action(c, x, 1);
  UpdateReport r = reinforce_update(c, s, /*reward=*/0.5, /*lr=*/1e-2);
  CHECK(r.advantage == 0.0);
  Embedding after = policy_mean(c, x);
  for (std::size_t i = 0; i < before.size(); ++i) CHECK(before[i] == after[i]);
}

TEST_CASE("reinforce: positive advantage raises the action's log prob") {
  AutoencoderModel ae = pretrained_stub(12);
  ControllerModel c = init_from_simulator(ae, 0.2, 0.95);
  update_baseline(c, 0.0);
  OriginVector x = random_origin(5, ae.origin_dim);
  PolicySample s = sample_action(c, x, 21);
  const double before = gaussian_log_prob(s.action, policy_mean(c, x), c.sigma);
  reinforce_update(c, s, /*reward=*/1.0, /*lr=*/1e-3);
  const double after = gaussian_log_prob(s.action, policy_mean(c, x), c.sigma);
  CHECK(after > before);
}

TEST_CASE("reinforce gradient matches finite differences on a tiny controller") {
  const SpaceConfig tiny{2, true};
  ControllerModel c = make_controller(tiny, /*embed_dim=*/3, /*hidden=*/4, 0.3, 0.9, 77);
  OriginVector x = random_origin(6, c.origin_dim);
  PolicySample s = sample_action(c, x, 31);

  auto f = [&](const ParamSet& p) {
    ControllerModel probe = c;
    probe.params = p;
    Embedding mean = policy_mean(probe, x);
    return gaussian_log_prob(s.action, mean, c.sigma);
  };

  // analytic: backprop (action - mean)/sigma^2 through the encoder
  EncoderCache cache;
  TensorBuf xt = controller_input(c, x);
  TensorBuf mean = encoder_forward(c.params, c.dims, xt, &cache);
  TensorBuf d_mean = TensorBuf::zeros(mean.shape());
  for (std::size_t i = 0; i < d_mean.size(); ++i)
    d_mean[i] = (s.action[i] - mean[i]) / (c.sigma * c.sigma);
  GradMap analytic;
  encoder_backward(c.params, c.dims, cache, d_mean, analytic);

  GradMap numeric = finite_diff_grad(f, c.params);
  CHECK(max_relative_error(analytic, numeric) < 1e-4);
}

TEST_CASE("stale samples are rejected beyond one update") {
  AutoencoderModel ae = pretrained_stub(13);
  ControllerModel c = init_from_simulator(ae, 0.1, 0.95);
  OriginVector x = random_origin(7, ae.origin_dim);
  PolicySample old = sample_action(c, x, 1);
  PolicySample mid = sample_action(c, x, 2);
  reinforce_update(c, old, 0.3, 1e-3);   // one update; old now one step stale
  reinforce_update(c, mid, 0.3, 1e-3);   // mid is one step stale: allowed
  PolicySample stale = old;              // now two updates old
  CHECK_THROWS_AS(reinforce_update(c, stale, 0.3, 1e-3), Error);
}

TEST_CASE("baseline follows the EMA closed form") {
  AutoencoderModel ae = pretrained_stub(14);
  ControllerModel c = init_from_simulator(ae, 0.1, 0.95);
  CHECK(read_baseline(c) == 0.0);
  update_baseline(c, 0.5);
  CHECK(read_baseline(c) == 0.5);  // initialized to the first observation

  // constant rewards converge to the reward
  for (int i = 0; i < 400; ++i) update_baseline(c, 0.8);
  CHECK(read_baseline(c) == doctest::Approx(0.8).epsilon(1e-4));

  // alternating 0/1 rewards ripple around 1/2
  ControllerModel d = init_from_simulator(ae, 0.1, 0.95);
  double expected = -1.0;
  for (int i = 0; i < 500; ++i) {
    const double r = (i % 2 == 0) ? 0.0 : 1.0;
    if (expected < 0.0) expected = r;
    else expected = 0.95 * expected + 0.05 * r;
    update_baseline(d, r);
  }
  CHECK(read_baseline(d) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(read_baseline(d) == doctest::Approx(0.5).epsilon(0.06));
}

TEST_CASE("controller checkpoint round trip") {
  AutoencoderModel ae = pretrained_stub(15);
  ControllerModel c = init_from_simulator(ae, 0.17, 0.93);
  OriginVector x = random_origin(8, ae.origin_dim);
  PolicySample s = sample_action(c, x, 3);
  reinforce_update(c, s, 0.9, 1e-3);

  const std::string dir =
      (std::filesystem::temp_directory_path() / "nases_ctrl_ckpt_test").string();
  save_controller(c, dir);
  ControllerModel back = load_controller(dir);
  CHECK(back.sigma == c.sigma);
  CHECK(back.baseline == c.baseline);
  CHECK(back.baseline_set == c.baseline_set);
  CHECK(back.updates == c.updates);
  Embedding a = policy_mean(c, x);
  Embedding b = policy_mean(back, x);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
  std::filesystem::remove_all(dir);
}

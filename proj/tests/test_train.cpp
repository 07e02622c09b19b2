#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "doctest.h"

#include "alignlab/kernels.hpp"
#include "alignlab/optim.hpp"
#include "test_util.hpp"

using namespace alignlab;
using alignlab::test::dataset;
using alignlab::test::vec;

namespace {

Dataset gauss(std::size_t n, std::size_t d, std::uint64_t seed) {
  Vec beta = Vec::Zero(static_cast<Eigen::Index>(d));
  beta[0] = 1.0;
  return gen_dataset(InputSpec::gaussian(d), TeacherSpec::linear(beta, 0.3), n, seed);
}

NetParams gauss_init(std::size_t m, std::size_t d, Activation act, std::uint64_t seed, double var = 1.0) {
  return init_params(InitSpec{GaussianIID{VarianceRule::OverM, var}, m, d, act}, seed);
}

std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

}  // namespace

TEST_CASE("production kernels agree with the serial reference") {
  for (Activation act : {Activation::ReLU, Activation::GeLU}) {
    for (std::size_t d : {1, 3, 5, 8, 13}) {
      for (std::size_t m : {1, 7, 64, 301}) {
        const Dataset data = gauss(600, d, d + m);
        const NetParams p = gauss_init(m, d, act, m);
        std::vector<std::size_t> batch;
        for (std::size_t k = 0; k < 600; k += 3) batch.push_back(k);
        batch.push_back(5);  // repeated index
        kernels::Workspace ws;
        Vec ga, ga_ref;
        NeuronMat gW, gW_ref;
        const double l = kernels::batch_gradient(p, data.X, data.y, batch, ws, ga, gW);
        const double l_ref = reference::batch_gradient(p, data.X, data.y, batch, ga_ref, gW_ref);
        CHECK(l == doctest::Approx(l_ref).epsilon(1e-12));
        CHECK((ga - ga_ref).norm() <= 1e-12 * (1.0 + ga_ref.norm()));
        CHECK((gW - gW_ref).norm() <= 1e-12 * (1.0 + gW_ref.norm()));
        CHECK(kernels::loss(p, data.X, data.y, ws) == doctest::Approx(reference::loss(p, data.X, data.y)).epsilon(1e-12));
        Vec h;
        kernels::predict(p, data.X, ws, h);
        CHECK(h[17] == doctest::Approx(forward(p, data.X.row(17).transpose())));
      }
    }
  }
}

TEST_CASE("kernels match the analytic gradient and reject bad shapes") {
  const Dataset data = gauss(50, 3, 1);
  const NetParams p = gauss_init(9, 3, Activation::ReLU, 2);
  const auto batch = iota(50);
  const Gradient g = grad(p, data, batch);
  kernels::Workspace ws;
  Vec ga;
  NeuronMat gW;
  kernels::batch_gradient(p, data.X, data.y, batch, ws, ga, gW);
  CHECK(ga.isApprox(g.grad_a));
  CHECK(gW.isApprox(g.grad_W));
  CHECK_THROWS_AS(kernels::batch_gradient(gauss_init(9, 4, Activation::ReLU, 2), data.X, data.y, batch, ws, ga, gW),
                  DimensionError);
}

TEST_CASE("pairwise_sum") {
  std::vector<double> v(1000);
  std::iota(v.begin(), v.end(), 1.0);
  CHECK(kernels::pairwise_sum(v) == 500500.0);
  CHECK(kernels::pairwise_sum(std::span<const double>()) == 0.0);
  std::vector<double> tiny(1 << 20, 0.1);
  CHECK(kernels::pairwise_sum(tiny) == doctest::Approx(0.1 * (1 << 20)).epsilon(1e-14));
}

TEST_CASE("optimizer specs") {
  OptimizerSpec o{SGD{0.1, 16}, GeometricSchedule{0.5, 10}};
  CHECK(o.base_lr() == 0.1);
  CHECK(o.lr_at(9) == doctest::Approx(0.1));
  CHECK(o.lr_at(10) == doctest::Approx(0.05));
  CHECK(o.lr_at(35) == doctest::Approx(0.0125));
  CHECK(o.batch_size(100) == 16);
  CHECK(o.batch_size(8) == 8);
  CHECK(OptimizerSpec{GD{0.1}, ConstantSchedule{}}.batch_size(77) == 77);
  CHECK(OptimizerSpec{Adam{1e-3, 0.9, 0.999, 1e-8, 0}, ConstantSchedule{}}.batch_size(77) == 77);
  CHECK_THROWS(OptimizerSpec{SGD{-1.0, 16}, ConstantSchedule{}}.validate());
  CHECK_THROWS(OptimizerSpec{Adam{1e-3, 1.0, 0.999, 1e-8, 4}, ConstantSchedule{}}.validate());
  CHECK(to_json(optimizer_from_json(to_json(o))) == to_json(o));
  const StopSpec s{123, 1e-3, 1e-4, 7};
  CHECK(to_json(stop_from_json(to_json(s))) == to_json(s));
}

TEST_CASE("update rules by hand") {
  std::vector<double> p{1.0, 2.0};
  sgd_update(0.5, p, std::vector<double>{2.0, -2.0});
  CHECK(p == std::vector<double>{0.0, 3.0});

  // first Adam step moves each coordinate by lr * sign(g) (up to eps)
  Adam hyper;
  AdamMoments mom;
  std::vector<double> q{0.0, 0.0};
  adam_update(hyper, 0.1, 1, mom, q, std::vector<double>{3.0, -0.01});
  CHECK(q[0] == doctest::Approx(-0.1).epsilon(1e-6));
  CHECK(q[1] == doctest::Approx(0.1).epsilon(1e-5));
  // second step by the closed form
  adam_update(hyper, 0.1, 2, mom, q, std::vector<double>{1.0, -0.01});
  const double m1 = 0.9 * 0.1 * 3.0 + 0.1 * 1.0;
  const double v1 = 0.999 * 0.001 * 9.0 + 0.001 * 1.0;
  const double mh = m1 / (1 - 0.81), vh = v1 / (1 - 0.999 * 0.999);
  CHECK(q[0] == doctest::Approx(-0.1 - 0.1 * mh / (std::sqrt(vh) + 1e-8)));

  NetParams net = NetParams::zeros(1, 1);
  OptState st;
  Vec ga = vec({std::nan("")});
  NeuronMat gW = NeuronMat::Zero(1, 1);
  CHECK_THROWS_AS(apply_step(OptimizerSpec{SGD{}, ConstantSchedule{}}, 0.1, net, st, ga, gW), RunError);
}

TEST_CASE("full-batch GD decreases the loss monotonically for a small step") {
  const Dataset data = gauss(200, 3, 2);
  Trainer t(gauss_init(20, 3, Activation::ReLU, 5), data, OptimizerSpec{GD{0.05}, ConstantSchedule{}}, 1);
  double prev = t.full_loss();
  for (int i = 0; i < 200; ++i) {
    t.step();
    const double now = t.full_loss();
    CHECK(now <= prev + 1e-15);
    prev = now;
  }
  CHECK(t.steps_done() == 200);
}

TEST_CASE("SGD sweeps every sample once per epoch") {
  const Dataset data = gauss(10, 2, 3);
  Trainer t(NetParams::zeros(1, 2), data, OptimizerSpec{SGD{1e-12, 4}, ConstantSchedule{}}, 9);
  const Checkpoint before = t.checkpoint();
  for (int i = 0; i < 5; ++i) t.step();
  const Checkpoint after = t.checkpoint();
  CHECK(after.step == 5);
  CHECK(after.perm.size() == 10);
  std::vector<std::size_t> sorted = after.perm;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == iota(10));
  CHECK(before.rng != after.rng);
}

TEST_CASE("training is deterministic and checkpoints resume bit-exactly") {
  const Dataset data = gauss(300, 4, 7);
  for (OptimizerSpec opt : {OptimizerSpec{SGD{0.05, 16}, ConstantSchedule{}},
                            OptimizerSpec{Adam{1e-2, 0.9, 0.999, 1e-8, 16}, GeometricSchedule{0.9, 25}}}) {
    const NetParams init = gauss_init(30, 4, Activation::ReLU, 3, 0.1);
    Trainer full(init, data, opt, 11);
    for (int i = 0; i < 200; ++i) full.step();

    Trainer part(init, data, opt, 11);
    for (int i = 0; i < 77; ++i) part.step();
    const auto path = std::filesystem::temp_directory_path() / "alignlab_unit_ck.json";
    save_checkpoint(part.checkpoint("fp"), path);
    const Checkpoint ck = load_checkpoint(path, 4);
    CHECK(ck.fingerprint == "fp");
    CHECK(ck.data_n == 300);
    Trainer resumed = Trainer::resume(ck, data);
    for (int i = 77; i < 200; ++i) resumed.step();
    CHECK(resumed.params().a == full.params().a);
    CHECK(resumed.params().W == full.params().W);
    CHECK(resumed.current_lr() == full.current_lr());
  }
}

TEST_CASE("checkpoint integrity") {
  const Dataset data = gauss(40, 2, 1);
  Trainer t(gauss_init(3, 2, Activation::ReLU, 1), data, OptimizerSpec{SGD{0.01, 8}, ConstantSchedule{}}, 2);
  t.step();
  auto j = checkpoint_to_json(t.checkpoint());
  CHECK_NOTHROW(checkpoint_from_json(j));
  CHECK_THROWS_AS(checkpoint_from_json(j, 3), DimensionError);
  auto tampered = j;
  tampered["payload"]["step"] = 999;
  CHECK_THROWS_AS(checkpoint_from_json(tampered), FormatError);
  auto version = j;
  version["version"] = kCheckpointVersion + 1;
  CHECK_THROWS_AS(checkpoint_from_json(version), FormatError);
  CHECK_THROWS_AS(Trainer::resume(t.checkpoint(), gauss(41, 2, 1)), DimensionError);
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("train: stop rules, trajectory and probes") {
  const Dataset data = gauss(100, 3, 4);
  const NetParams init = gauss_init(10, 3, Activation::ReLU, 4, 0.1);
  const OptimizerSpec opt{SGD{0.05, 10}, ConstantSchedule{}};
  ProbeSpec probes;
  probes.every = 50;
  std::vector<std::size_t> seen;
  probes.snapshot_steps = {33};
  probes.on_probe = [&](const TrainSnapshot& s) { seen.push_back(s.step); };
  const TrainResult r = train(init, data, opt, StopSpec{500, 0.0, 0.0, 100}, probes, 1);
  CHECK(r.steps == 500);
  CHECK(r.stop_reason == "max_steps");
  CHECK_FALSE(r.converged);
  CHECK(r.trajectory.front().step == 0);
  CHECK(r.trajectory.back().step == 500);
  CHECK(r.trajectory.size() == 11);
  CHECK(std::find(seen.begin(), seen.end(), 33) != seen.end());
  CHECK(r.final_loss < r.initial_loss);
  CHECK(r.final_loss == doctest::Approx(train_loss(r.params, data)));

  // a zero learning rate converges at the first window
  const TrainResult z = train(init, data, OptimizerSpec{SGD{1e-300, 10}, ConstantSchedule{}},
                              StopSpec{10000, 1e-8, 1e-7, 100}, ProbeSpec{0, {}, {}}, 1);
  CHECK(z.converged);
  CHECK(z.steps == 100);
}

TEST_CASE("train: divergence raises") {
  const Dataset data = gauss(100, 3, 4);
  CHECK_THROWS_AS(train(gauss_init(10, 3, Activation::ReLU, 4), data, OptimizerSpec{GD{50.0}, ConstantSchedule{}},
                        StopSpec{1000, 0.0, 0.0, 100}, ProbeSpec{0, {}, {}}, 1),
                  RunError);
}

TEST_CASE("restart_with resets the schedule origin") {
  const Dataset data = gauss(50, 2, 1);
  Trainer t(gauss_init(3, 2, Activation::ReLU, 1), data, OptimizerSpec{SGD{0.1, 10}, ConstantSchedule{}}, 2);
  for (int i = 0; i < 30; ++i) t.step();
  t.restart_with(OptimizerSpec{SGD{0.1, 10}, GeometricSchedule{0.5, 10}});
  CHECK(t.current_lr() == doctest::Approx(0.1));
  for (int i = 0; i < 10; ++i) t.step();
  CHECK(t.current_lr() == doctest::Approx(0.05));
}

TEST_CASE("trajectory CSV") {
  const auto path = std::filesystem::temp_directory_path() / "alignlab_unit_traj.csv";
  write_trajectory_csv({{0, 0.1, 0.5, 0, 0.0}, {10, 0.1, 0.25, 1, 1e-3}}, path);
  std::ifstream in(path);
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  CHECK(header == "step,lr,train_loss,sign_flips,balancedness_gap");
  CHECK(row.rfind("0,", 0) == 0);
}

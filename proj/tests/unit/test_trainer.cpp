#include <cmath>
#include <sstream>

#include "doctest.h"
#include "unit/fixtures.hpp"
#include "sentmask/error.hpp"
#include "sentmask/trainer.hpp"

using namespace sentmask;
using fixtures::grid_doc;

namespace {

DatasetSplit small_split(int labeled = 12, int unlabeled = 8) {
  DatasetSplit s;
  Rng rng(4);
  auto lengths = [&] {
    std::vector<int> l(4);
    for (auto& x : l) x = static_cast<int>(rng.below(6));
    l[0] = std::max(l[0], 1);
    return l;
  };
  for (int i = 0; i < labeled; ++i) s.labeled.push_back(grid_doc("l" + std::to_string(i), 4, 5, lengths(), 20, i, i % 2));
  for (int i = 0; i < unlabeled; ++i) s.unlabeled.push_back(grid_doc("u" + std::to_string(i), 4, 5, lengths(), 20, 50 + i));
  for (int i = 0; i < 4; ++i) s.test.push_back(grid_doc("t" + std::to_string(i), 4, 5, lengths(), 20, 90 + i, i % 2));
  return s;
}

TrainingConfig small_config(int epochs = 3) {
  auto c = fixtures::tiny_config(4, 5);
  c.train.epochs = epochs;
  c.train.labeled_batch = 4;
  c.train.unlabeled_batch = 4;
  c.train.lr = 1e-2;
  c.train.heldout_fraction = 0.25;
  c.mask.top_n = 2;
  return c;
}

std::vector<StepLog> collect(const DatasetSplit& split, const TrainingConfig& cfg) {
  std::vector<StepLog> steps;
  Rng init(1);
  Model model(cfg, 20, init);
  Trainer trainer(model, 9);
  const auto labeled = fixtures::ptrs(split.labeled);
  const auto unlabeled = fixtures::ptrs(split.unlabeled);
  for (int e = 0; e < cfg.train.epochs; ++e) {
    trainer.train_epoch(labeled, unlabeled, e, cfg.train.epochs, [&](const StepLog& s) { steps.push_back(s); });
  }
  return steps;
}

}  // namespace

TEST_CASE("Adam update matches a hand computation") {
  OptimConfig oc;
  oc.clip_norm = 0;
  Parameter p("p", Matrix::Constant(1, 2, 1.0));
  Adam adam(oc, 0.1);
  p.grad << 0.5, -2.0;
  CHECK(adam.step({&p}) == doctest::Approx(std::sqrt(4.25)));
  CHECK(p.value(0, 0) == doctest::Approx(1.0 - 0.1 * 0.5 / (0.5 + 1e-8)).epsilon(1e-14));
  CHECK(p.value(0, 1) == doctest::Approx(1.0 + 0.1 * 2.0 / (2.0 + 1e-8)).epsilon(1e-14));
  // Second step with a new gradient, moments from the first.
  p.grad << 1.0, 0.0;
  const double m = 0.9 * 0.05 + 0.1 * 1.0, v = 0.999 * 0.00025 + 0.001 * 1.0;
  const double expect = p.value(0, 0) - 0.1 * (m / (1 - 0.81)) / (std::sqrt(v / (1 - 0.998001)) + 1e-8);
  adam.step({&p});
  CHECK(p.value(0, 0) == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("Adam clips by global norm and skips frozen parameters") {
  OptimConfig oc;
  oc.clip_norm = 1.0;
  Parameter a("a", Matrix::Zero(1, 1));
  Parameter frozen("f", Matrix::Zero(1, 1), false);
  a.grad << 3.0;
  frozen.grad << 4.0;
  Adam adam(oc, 0.1);
  CHECK(adam.step({&a, &frozen}) == doctest::Approx(3.0));
  CHECK(frozen.value(0, 0) == 0.0);
  CHECK(a.value(0, 0) < 0.0);
}

TEST_CASE("decoupled weight decay shrinks parameters") {
  OptimConfig oc;
  oc.weight_decay = 0.5;
  Parameter p("p", Matrix::Constant(1, 1, 2.0));
  p.grad.setZero();
  Adam adam(oc, 0.1);
  adam.step({&p});
  CHECK(p.value(0, 0) == doctest::Approx(2.0 * (1 - 0.05)));
}

TEST_CASE("checkpoint round-trips exactly") {
  const auto split = small_split();
  auto cfg = small_config(1);
  Rng init(1);
  Model model(cfg, 20, init);
  Trainer trainer(model, 3);
  trainer.train_epoch(fixtures::ptrs(split.labeled), {}, 0, 1);
  auto ck = trainer.checkpoint(1);
  ck.best_heldout_accuracy = 0.75;
  fixtures::TempDir dir;
  save_checkpoint(ck, dir.file("a.ckpt"));
  const auto back = load_checkpoint(dir.file("a.ckpt"));
  CHECK(back.names == ck.names);
  REQUIRE(back.values.size() == ck.values.size());
  for (std::size_t i = 0; i < ck.values.size(); ++i) CHECK(back.values[i] == ck.values[i]);
  CHECK(back.adam.steps == ck.adam.steps);
  CHECK(back.adam.m.size() == ck.adam.m.size());
  CHECK(back.rng_state == ck.rng_state);
  CHECK(back.best_heldout_accuracy == 0.75);
  CHECK(back.config.to_json() == ck.config.to_json());
  const auto rebuilt = back.build_model();
  CHECK(rebuilt->fingerprint() == model.fingerprint());
  CHECK(rebuilt->checkpoint_id() == ck.id);

  fixtures::write_text(dir.file("bad.ckpt"), "SMCK\x02\0\0\0");
  CHECK_THROWS_AS(load_checkpoint(dir.file("bad.ckpt")), Error);
  CHECK_THROWS_AS(load_checkpoint(dir.file("missing.ckpt")), Error);
}

TEST_CASE("epochs = 0 returns the initialisation checkpoint") {
  const auto split = small_split();
  const auto cfg = small_config(0);
  const auto r = fit(split, cfg, 20);
  CHECK(r.epochs.empty());
  CHECK(r.best.epoch == 0);
  CHECK(r.best.global_step == 0);
  const auto model = r.best.build_model();
  CHECK(model->fingerprint() == r.best.id);
}

TEST_CASE("same seed, same losses; step log ordering labeled then unlabeled") {
  const auto split = small_split();
  const auto cfg = small_config(2);
  const auto a = collect(split, cfg);
  const auto b = collect(split, cfg);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].loss.total == b[i].loss.total);
  // 12 labeled / batch 4 = 3 steps, 8 unlabeled / batch 4 = 2 steps per epoch.
  REQUIRE(a.size() == 10);
  const char* expect[] = {"labeled", "labeled", "labeled", "unlabeled", "unlabeled"};
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].phase == expect[i % 5]);
  for (const auto& s : a) {
    CHECK(s.loss.total == s.loss.supervised + s.alpha * s.loss.unsupervised);
    CHECK(s.loss.kl_labeled >= 0.0);
    CHECK(s.loss.kl_unlabeled >= 0.0);
  }
}

TEST_CASE("alpha = 0 and an empty unlabeled pool reduce to supervised training") {
  const auto split = small_split();
  auto cfg = small_config(2);
  cfg.loss.alpha = 0.0;
  auto empty_pool = split;
  empty_pool.unlabeled.clear();
  const auto with_pool = fit(split, cfg, 20);
  const auto without = fit(empty_pool, cfg, 20);
  CHECK(with_pool.last.id == without.last.id);
  for (const auto& e : with_pool.epochs) CHECK(e.unlabeled_steps == 0);

  cfg.loss.alpha = 1.0;
  const auto alpha_one_empty = fit(empty_pool, cfg, 20);
  CHECK(alpha_one_empty.last.id == without.last.id);
}

TEST_CASE("resumed run matches an uninterrupted run") {
  const auto split = small_split();
  const auto cfg = small_config(4);
  fixtures::TempDir full_dir, part_dir;
  std::ostringstream full_log, part_log;
  FitOptions full_opts;
  full_opts.out_dir = full_dir.path.string();
  full_opts.step_log = &full_log;
  const auto full = fit(split, cfg, 20, full_opts);

  FitOptions first;
  first.out_dir = part_dir.path.string();
  first.step_log = &part_log;
  first.stop_after = 2;
  const auto half = fit(split, cfg, 20, first);
  CHECK(half.epochs.size() == 2);
  const auto last = load_checkpoint(part_dir.file("last.ckpt"));
  FitOptions second;
  second.out_dir = part_dir.path.string();
  second.step_log = &part_log;
  second.resume = &last;
  const auto rest = fit(split, cfg, 20, second);
  REQUIRE(rest.epochs.size() == 2);
  for (int i = 0; i < 2; ++i) {
    CHECK(rest.epochs[i].mean_supervised == full.epochs[2 + i].mean_supervised);
    CHECK(rest.epochs[i].mean_unsupervised == full.epochs[2 + i].mean_unsupervised);
  }
  CHECK(rest.last.id == full.last.id);
  CHECK(rest.best.id == full.best.id);
  CHECK(part_log.str() == full_log.str());
}

TEST_CASE("non-finite loss aborts after logging the step") {
  const auto split = small_split();
  const auto cfg = small_config(1);
  Rng init(1);
  Model model(cfg, 20, init);
  for (auto* p : model.parameters()) {
    if (p->name == "head.out.bias") p->value(0, 0) = std::nan("");
  }
  Trainer trainer(model, 1);
  std::vector<StepLog> seen;
  try {
    trainer.train_epoch(fixtures::ptrs(split.labeled), {}, 0, 1, [&](const StepLog& s) { seen.push_back(s); });
    FAIL("expected divergence");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kDiverged);
  }
  REQUIRE(seen.size() == 1);
  CHECK_FALSE(std::isfinite(seen[0].loss.total));
}

TEST_CASE("no labeled documents is an error") {
  auto split = small_split();
  split.labeled.clear();
  CHECK_THROWS_AS(fit(split, small_config(1), 20), Error);
}

TEST_CASE("held-out carving") {
  const auto split = small_split(20, 0);
  const auto a = carve_heldout(split.labeled, 0.1, 5);
  CHECK(a.heldout.size() == 2);
  CHECK(a.train.size() == 18);
  CHECK(std::is_sorted(a.heldout.begin(), a.heldout.end()));
  const auto b = carve_heldout(split.labeled, 0.1, 5);
  CHECK(a.heldout == b.heldout);
  CHECK(carve_heldout(split.labeled, 1.0, 5).train.size() == 1);
  CHECK(carve_heldout(split.labeled, 0.0, 5).heldout.empty());
}

TEST_CASE("best checkpoint tracks held-out accuracy") {
  const auto split = small_split();
  const auto r = fit(split, small_config(3), 20);
  double best = r.epochs.empty() ? 0 : -1;
  for (const auto& e : r.epochs) best = std::max(best, e.heldout_accuracy);
  CHECK(r.best.best_heldout_accuracy >= best);
  CHECK(r.last.epoch == 3);
}

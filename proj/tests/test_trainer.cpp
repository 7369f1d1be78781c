#include "support.hpp"

#include <cfct/augment.hpp>
#include <cfct/losses.hpp>
#include <cfct/trainer.hpp>

#include <doctest.h>
#include <json.hpp>

#include <filesystem>
#include <map>
#include <set>
#include <sstream>

using namespace cfct;

namespace {

double oracle_cos(std::span<const double> a, std::span<const double> b) {
  long double ab = 0, aa = 0, bb = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    ab += static_cast<long double>(a[k]) * b[k];
    aa += static_cast<long double>(a[k]) * a[k];
    bb += static_cast<long double>(b[k]) * b[k];
  }
  return static_cast<double>(ab / std::sqrt(aa * bb));
}

// Proposed objective evaluated straight from the table for a fixed triple.
double oracle_proposed(const EmbeddingTable& t, const AugmentedTriple& tr, double tau) {
  std::vector<double> c(t.dim(), 0.0);
  for (ItemId i : tr.center.source_items) {
    for (std::size_t k = 0; k < t.dim(); ++k) c[k] += t.item(i)[k];
  }
  for (auto& v : c) v /= static_cast<double>(tr.center.source_items.size());
  const double x_up = oracle_cos(t.user(tr.user), c) / tau;
  const double x_uq = oracle_cos(t.user(tr.user), t.item(tr.neg_choice.selected)) / tau;
  return std::log1p(std::exp(-(x_up - x_uq)));
}

std::span<double> row_of(EmbeddingTable& t, std::uint64_t key) {
  const auto id = static_cast<std::uint32_t>(key & 0xffffffffu);
  return (key & kItemRowTag) ? t.item(id) : t.user(id);
}

// Checks every coordinate of every gradient row in ws against central differences of f.
void check_rows_against_fd(EmbeddingTable& t, const StepWorkspace& ws,
                           const std::function<double()>& f, double tol) {
  const std::size_t d = t.dim();
  for (std::size_t r = 0; r < ws.row_keys.size(); ++r) {
    auto row = row_of(t, ws.row_keys[r]);
    for (std::size_t k = 0; k < d; ++k) {
      const double keep = row[k];
      const double h = 1e-5;
      row[k] = keep + h;
      const double up = f();
      row[k] = keep - h;
      const double down = f();
      row[k] = keep;
      const double numeric = (up - down) / (2 * h);
      CHECK(test::rel_err(ws.row_grads[r * d + k], numeric) < tol);
    }
  }
}

AugmentedTriple fixed_triple(UserId u, std::vector<ItemId> sources, ItemId q,
                             const EmbeddingTable& t) {
  AugmentedTriple tr;
  tr.user = u;
  tr.center.source_items = std::move(sources);
  tr.center.vec.assign(t.dim(), 0.0);
  for (ItemId i : tr.center.source_items) {
    for (std::size_t k = 0; k < t.dim(); ++k) tr.center.vec[k] += t.item(i)[k];
  }
  for (auto& v : tr.center.vec) v /= static_cast<double>(tr.center.source_items.size());
  tr.neg_choice.candidates = {q, q};
  tr.neg_choice.selected = q;
  return tr;
}

double max_abs_diff(const EmbeddingTable& a, const EmbeddingTable& b) {
  double worst = 0.0;
  for (auto [x, y] : {std::pair{a.user_data(), b.user_data()}, std::pair{a.item_data(), b.item_data()}}) {
    for (std::size_t k = 0; k < x.size(); ++k) worst = std::max(worst, std::abs(x[k] - y[k]));
  }
  return worst;
}

// Sequential training loop written with the public step API only.
EmbeddingTable reference_training(const InteractionDataset& data, const HyperParams& hp) {
  auto table = init_embeddings(data.num_users, data.num_items, hp.dim, hp.seed);
  std::vector<std::pair<UserId, ItemId>> order;
  for (UserId u = 0; u < data.num_users; ++u) {
    for (ItemId i : data.train_pos[u]) order.push_back({u, i});
  }
  std::seed_seq seq{hp.seed, std::uint64_t{0x5eed}};
  Rng rng(seq);
  StepWorkspace ws;
  std::map<std::uint64_t, std::vector<double>> batch;
  std::size_t in_batch = 0;
  auto flush = [&] {
    if (in_batch == 0) return;
    StepWorkspace mean;
    for (auto& [key, g] : batch) {
      mean.row_keys.push_back(key);
      for (double v : g) mean.row_grads.push_back(v / static_cast<double>(in_batch));
    }
    apply_gradients(table, mean, hp);
    batch.clear();
    in_batch = 0;
  };
  for (std::size_t e = 0; e < hp.epochs; ++e) {
    std::shuffle(order.begin(), order.end(), rng);
    for (auto [u, i] : order) {
      if (hp.loss == LossKind::Proposed) {
        sample_augmented_triple(table, data, u, hp, rng, ws.triple);
        proposed_gradients(table, ws.triple, hp, ws);
      } else {
        std::vector<ItemId> negs(hp.loss == LossKind::Bpr ? 1 : hp.num_negatives);
        for (auto& j : negs) j = sample_negative(data.train_pos[u], data.num_items, rng);
        baseline_gradients(table, u, i, negs, hp, ws);
      }
      for (std::size_t r = 0; r < ws.row_keys.size(); ++r) {
        auto& g = batch[ws.row_keys[r]];
        g.resize(hp.dim, 0.0);
        for (std::size_t k = 0; k < hp.dim; ++k) g[k] += ws.row_grads[r * hp.dim + k];
      }
      if (++in_batch == hp.batch_size) flush();
    }
    flush();
  }
  return table;
}

} // namespace

TEST_CASE("proposed step descends at small lr") {
  Rng rng(1);
  HyperParams hp;
  hp.lr = 1e-3;
  hp.l2 = 0.0;
  for (int rep = 0; rep < 50; ++rep) {
    auto t = init_embeddings(2, 12, 8, 100 + rep);
    const auto tr = fixed_triple(0, {1, 4, 7}, 9, t);
    const double before = oracle_proposed(t, tr, hp.tau);
    const double reported = train_step_proposed(t, tr, hp);
    CHECK(reported == doctest::Approx(before).epsilon(1e-12));
    CHECK(oracle_proposed(t, tr, hp.tau) < before);
  }
}

TEST_CASE("proposed chain gradients match central differences") {
  HyperParams hp;
  hp.l2 = 0.0;
  Rng rng(2);
  for (int rep = 0; rep < 100; ++rep) {
    auto t = init_embeddings(3, 15, 6, 200 + rep);
    std::vector<ItemId> all{0, 2, 3, 5, 8, 11, 13};
    std::shuffle(all.begin(), all.end(), rng);
    const std::size_t m = 1 + rep % 4;
    std::vector<ItemId> sources(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(m));
    const auto tr = fixed_triple(static_cast<UserId>(rep % 3), sources, 14, t);
    StepWorkspace ws;
    proposed_gradients(t, tr, hp, ws);
    CHECK(ws.row_keys.size() == 2 + m);
    check_rows_against_fd(t, ws, [&] { return oracle_proposed(t, tr, hp.tau); }, 1e-4);
  }
}

TEST_CASE("baseline gradients match central differences") {
  Rng rng(3);
  for (auto kind : {LossKind::Bpr, LossKind::InfoNce, LossKind::Dcl, LossKind::Hcl}) {
    CAPTURE(to_string(kind));
    HyperParams hp;
    hp.loss = kind;
    hp.l2 = 0.0;
    hp.tau = 0.5;
    for (int rep = 0; rep < 100; ++rep) {
      auto t = init_embeddings(2, 20, 5, 300 + rep);
      for (double& v : t.user(1)) v *= 5.0;
      const UserId u = rep % 2;
      const ItemId i = 1;
      std::vector<ItemId> negs;
      if (kind == LossKind::Bpr) negs = {7};
      else negs = {3, 7, 7, 12};
      std::vector<ItemId> extras;
      if (rep % 2 == 1 && kind != LossKind::Bpr && kind != LossKind::InfoNce) extras = {2, 4};

      auto scores_of = [&](std::span<const ItemId> ids) {
        std::vector<double> s;
        for (ItemId j : ids) s.push_back(dot(t.user(u), t.item(j)));
        return s;
      };
      // HCL weights are constants in the gradient, so the oracle freezes them here.
      const auto frozen = hcl_weights(scores_of(negs), hp.beta);
      auto f = [&]() {
        const double xp = dot(t.user(u), t.item(i));
        const auto xn = scores_of(negs);
        std::vector<double> xe = extras.empty() ? std::vector<double>{xp} : scores_of(extras);
        switch (kind) {
        case LossKind::Bpr: return loss_bpr(xp, xn[0]).value;
        case LossKind::InfoNce: return loss_infonce(xp, xn).value;
        case LossKind::Dcl: return loss_dcl(xp, xn, xe, hp.tau_plus, hp.tau).value;
        case LossKind::Hcl:
          return loss_dcl_weighted(xp, xn, frozen, xe, hp.tau_plus, hp.tau).value;
        default: return 0.0;
        }
      };
      StepWorkspace ws;
      const double loss = baseline_gradients(t, u, i, negs, hp, ws, extras);
      CHECK(loss == doctest::Approx(f()).epsilon(1e-12));
      check_rows_against_fd(t, ws, f, 1e-4);
    }
  }
}

TEST_CASE("baseline step with a zero user starts at ln 2") {
  auto t = init_embeddings(1, 4, 3, 5);
  for (double& v : t.user(0)) v = 0.0;
  HyperParams hp;
  hp.loss = LossKind::Bpr;
  const std::vector<ItemId> negs{2};
  CHECK(train_step_baseline(t, 0, 1, negs, hp) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
}

TEST_CASE("baseline entry point rejects the proposed loss") {
  auto t = init_embeddings(1, 4, 3, 5);
  HyperParams hp;
  hp.loss = LossKind::Proposed;
  const std::vector<ItemId> negs{2};
  CHECK_THROWS_AS(train_step_baseline(t, 0, 1, negs, hp), UsageError);
  hp.loss = LossKind::Bpr;
  const std::vector<ItemId> two{2, 3};
  CHECK_THROWS_AS(train_step_baseline(t, 0, 1, two, hp), UsageError);
}

TEST_CASE("degenerate vectors are reported") {
  auto t = init_embeddings(1, 5, 3, 5);
  for (double& v : t.user(0)) v = 0.0;
  const auto tr = fixed_triple(0, {1}, 3, t);
  HyperParams hp;
  CHECK_THROWS_WITH(train_step_proposed(t, tr, hp), doctest::Contains("degenerate embedding"));
}

TEST_CASE("single-source step touches three rows") {
  auto t = init_embeddings(2, 6, 4, 9);
  const auto before = t;
  const auto tr = fixed_triple(1, {2}, 5, t);
  HyperParams hp;
  train_step_proposed(t, tr, hp);
  std::set<std::pair<char, std::size_t>> changed;
  for (UserId u = 0; u < 2; ++u) {
    if (!std::equal(t.user(u).begin(), t.user(u).end(), before.user(u).begin())) changed.insert({'u', u});
  }
  for (ItemId i = 0; i < 6; ++i) {
    if (!std::equal(t.item(i).begin(), t.item(i).end(), before.item(i).begin())) changed.insert({'i', i});
  }
  CHECK(changed == std::set<std::pair<char, std::size_t>>{{'u', 1}, {'i', 2}, {'i', 5}});
}

TEST_CASE("steps touch at most 1 + M_eff + max(N, 1) rows") {
  Rng rng(4);
  const auto data = test::random_dataset(10, 50, 12, rng);
  const auto t = init_embeddings(10, 50, 4, 1);
  for (auto kind : {LossKind::Proposed, LossKind::Bpr, LossKind::InfoNce, LossKind::Hcl}) {
    HyperParams hp;
    hp.loss = kind;
    hp.M = 3;
    hp.num_negatives = 5;
    StepWorkspace ws;
    for (UserId u = 0; u < 10; ++u) {
      std::size_t bound = 0;
      if (kind == LossKind::Proposed) {
        sample_augmented_triple(t, data, u, hp, rng, ws.triple);
        CHECK_FALSE(data.is_train_positive(u, ws.triple.neg_choice.selected));
        CHECK(ws.triple.neg_choice.candidates[0] != ws.triple.neg_choice.candidates[1]);
        proposed_gradients(t, ws.triple, hp, ws);
        bound = 1 + ws.triple.center.source_items.size() + 1;
      } else {
        std::vector<ItemId> negs(kind == LossKind::Bpr ? 1 : hp.num_negatives);
        for (auto& j : negs) j = sample_negative(data.train_pos[u], data.num_items, rng);
        baseline_gradients(t, u, data.train_pos[u][0], negs, hp, ws);
        bound = 1 + 1 + negs.size();
      }
      CHECK(ws.row_keys.size() <= bound);
    }
  }
}

TEST_CASE("zero loss gradient leaves pure weight decay") {
  HyperParams hp;
  hp.lr = 0.1;
  hp.l2 = 0.01;
  const double factor = 1.0 - hp.lr * hp.l2;

  hp.loss = LossKind::Bpr;
  auto t = test::table_from(2, {{20, 20}}, {{20, 20}, {-20, -20}});
  const auto before = t;
  const std::vector<ItemId> negs{1};
  train_step_baseline(t, 0, 0, negs, hp);
  for (std::size_t k = 0; k < 2; ++k) {
    CHECK(t.user(0)[k] == doctest::Approx(before.user(0)[k] * factor).epsilon(1e-15));
    CHECK(t.item(0)[k] == doctest::Approx(before.item(0)[k] * factor).epsilon(1e-15));
    CHECK(t.item(1)[k] == doctest::Approx(before.item(1)[k] * factor).epsilon(1e-15));
  }

  hp.loss = LossKind::Proposed;
  hp.tau = 1e-3;
  auto p = test::table_from(2, {{1, 0}}, {{2, 0}, {3, 0}, {-1, 0}});
  const auto pb = p;
  train_step_proposed(p, fixed_triple(0, {0, 1}, 2, p), hp);
  for (ItemId i = 0; i < 3; ++i) {
    CHECK(p.item(i)[0] == doctest::Approx(pb.item(i)[0] * factor).epsilon(1e-15));
  }
  CHECK(p.user(0)[0] == doctest::Approx(factor).epsilon(1e-15));
}

TEST_CASE("hyperparameter validation") {
  auto bad = [](auto mutate) {
    HyperParams hp;
    mutate(hp);
    return hp;
  };
  CHECK_THROWS_AS(bad([](HyperParams& h) { h.M = 0; }).validate(), UsageError);
  CHECK_THROWS_AS(bad([](HyperParams& h) { h.alpha = 1.5; }).validate(), UsageError);
  CHECK_THROWS_AS(bad([](HyperParams& h) { h.tau = 0; }).validate(), UsageError);
  CHECK_THROWS_AS(bad([](HyperParams& h) { h.lr = 0; }).validate(), UsageError);
  CHECK_THROWS_AS(bad([](HyperParams& h) { h.l2 = -1; }).validate(), UsageError);
  CHECK_THROWS_AS(bad([](HyperParams& h) { h.num_negatives = 0; }).validate(), UsageError);
  CHECK_THROWS_AS(bad([](HyperParams& h) { h.tau_plus = 1.0; }).validate(), UsageError);
  CHECK_NOTHROW(HyperParams{}.validate());
  CHECK(parse_loss_kind("hcl") == LossKind::Hcl);
  CHECK_THROWS_AS(parse_loss_kind("mse"), UsageError);
}

TEST_CASE("zero epochs returns the initial table") {
  Rng rng(5);
  const auto data = test::random_dataset(8, 30, 10, rng);
  HyperParams hp;
  hp.epochs = 0;
  hp.dim = 4;
  const auto out = run_training(data, hp);
  CHECK(out.table == init_embeddings(8, 30, 4, hp.seed));
  CHECK(out.report.epochs.empty());
}

TEST_CASE("training loop matches the public step API") {
  Rng rng(6);
  const auto data = test::random_dataset(12, 40, 10, rng);
  for (auto kind : {LossKind::Proposed, LossKind::Bpr, LossKind::InfoNce, LossKind::Dcl}) {
    for (std::size_t batch : {1u, 4u}) {
      CAPTURE(to_string(kind));
      CAPTURE(batch);
      HyperParams hp;
      hp.loss = kind;
      hp.dim = 8;
      hp.epochs = 2;
      hp.batch_size = batch;
      hp.num_negatives = 3;
      const auto fast = run_training(data, hp);
      const auto slow = reference_training(data, hp);
      CHECK(max_abs_diff(fast.table, slow) < 1e-12);
    }
  }
}

TEST_CASE("sequential training is bit-deterministic") {
  Rng rng(7);
  const auto data = test::random_dataset(15, 40, 10, rng);
  for (auto kind : {LossKind::Proposed, LossKind::Hcl}) {
    HyperParams hp;
    hp.loss = kind;
    hp.dim = 8;
    hp.epochs = 3;
    const auto a = run_training(data, hp);
    const auto b = run_training(data, hp);
    CHECK(a.table == b.table);
    hp.seed += 1;
    CHECK_FALSE(run_training(data, hp).table == a.table);
  }
}

TEST_CASE("parallel training stays finite") {
  Rng rng(8);
  const auto data = test::random_dataset(30, 60, 15, rng);
  HyperParams hp;
  hp.dim = 8;
  hp.epochs = 3;
  TrainOptions opt;
  opt.parallel = true;
  opt.threads = 3;
  const auto out = run_training(data, hp, opt);
  CHECK(out.table.all_finite());
  CHECK(out.report.epochs.size() == 3);
}

TEST_CASE("epoch report lines") {
  Rng rng(9);
  const auto data = test::random_dataset(10, 30, 8, rng);
  HyperParams hp;
  hp.dim = 4;
  hp.epochs = 2;
  std::vector<std::size_t> seen;
  TrainOptions opt;
  opt.on_epoch = [&](const EpochStats& e) { seen.push_back(e.epoch); };
  const auto out = run_training(data, hp, opt);
  CHECK(seen == std::vector<std::size_t>{1, 2});
  std::ostringstream lines;
  write_train_jsonl(lines, out.report);
  std::istringstream in(lines.str());
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j.at("epoch") == ++n);
    CHECK(std::isfinite(j.at("mean_loss").get<double>()));
    CHECK(j.at("seconds").get<double>() >= 0.0);
  }
  CHECK(n == 2);
}

#ifdef CFCT_ML100K_PATH
TEST_CASE("bpr loss falls over the first epochs on MovieLens-100k") {
  if (!std::filesystem::exists(CFCT_ML100K_PATH)) {
    MESSAGE("MovieLens-100k not present; skipped");
    return;
  }
  const auto raw = load_interactions(CFCT_ML100K_PATH, InputFormat::Tsv4);
  const auto data = build_dataset(raw, 0.2, 2024);
  HyperParams hp;
  hp.loss = LossKind::Bpr;
  hp.epochs = 5;
  const auto out = run_training(data, hp);
  CHECK(out.report.epochs[4].mean_loss < out.report.epochs[0].mean_loss);
}
#endif

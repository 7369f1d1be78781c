#pragma once

#include <cfct/common.hpp>
#include <cfct/encoder.hpp>
#include <cfct/eval.hpp>
#include <cfct/ingest.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <vector>

namespace cfct::test {

// Central difference of f at x along coordinate k.
inline double central_diff(const std::function<double(std::vector<double>&)>& f,
                           std::vector<double> x, std::size_t k, double h = 1e-5) {
  const double x0 = x[k];
  x[k] = x0 + h;
  const double up = f(x);
  x[k] = x0 - h;
  const double down = f(x);
  return (up - down) / (2.0 * h);
}

inline double rel_err(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1.0, std::max(std::abs(analytic), std::abs(numeric)));
}

inline std::vector<double> normals(std::size_t n, Rng& rng, double stddev = 1.0) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> out(n);
  for (auto& v : out) v = dist(rng);
  return out;
}

// Dataset with explicit per-user lists; the lists are sorted here.
inline InteractionDataset make_dataset(std::size_t num_items,
                                       std::vector<std::vector<ItemId>> train,
                                       std::vector<std::vector<ItemId>> test = {}) {
  InteractionDataset data;
  data.num_users = train.size();
  data.num_items = num_items;
  test.resize(train.size());
  for (auto& v : train) std::sort(v.begin(), v.end());
  for (auto& v : test) std::sort(v.begin(), v.end());
  data.train_pos = std::move(train);
  data.test_pos = std::move(test);
  return data;
}

// Random dataset: each user gets between 3 and max_pos distinct train items and up to 3 test
// items disjoint from them.
inline InteractionDataset random_dataset(std::size_t users, std::size_t items, std::size_t max_pos,
                                         Rng& rng) {
  std::vector<std::vector<ItemId>> train(users), test(users);
  std::vector<ItemId> all(items);
  for (std::size_t i = 0; i < items; ++i) all[i] = static_cast<ItemId>(i);
  std::uniform_int_distribution<std::size_t> count(3, max_pos);
  std::uniform_int_distribution<std::size_t> tcount(0, 3);
  for (std::size_t u = 0; u < users; ++u) {
    std::shuffle(all.begin(), all.end(), rng);
    const std::size_t n = count(rng);
    const std::size_t t = std::min(tcount(rng), items - n - 2);
    train[u].assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n));
    test[u].assign(all.begin() + static_cast<std::ptrdiff_t>(n),
                   all.begin() + static_cast<std::ptrdiff_t>(n + t));
  }
  return make_dataset(items, std::move(train), std::move(test));
}

inline EmbeddingTable table_from(std::size_t dim, const std::vector<std::vector<double>>& users,
                                 const std::vector<std::vector<double>>& items) {
  EmbeddingTable t(users.size(), items.size(), dim);
  for (std::size_t u = 0; u < users.size(); ++u) {
    std::copy(users[u].begin(), users[u].end(), t.user(static_cast<UserId>(u)).begin());
  }
  for (std::size_t i = 0; i < items.size(); ++i) {
    std::copy(items[i].begin(), items[i].end(), t.item(static_cast<ItemId>(i)).begin());
  }
  return t;
}

// Full sort of every non-train item, then the textbook metric definitions.
inline RankingReport brute_force_report(const EmbeddingTable& t, const InteractionDataset& data,
                                        const std::vector<std::size_t>& cutoffs, bool cosine) {
  RankingReport out;
  for (auto K : cutoffs) out.precision[K] = out.recall[K] = out.ndcg[K] = 0.0;
  for (UserId u = 0; u < data.num_users; ++u) {
    const auto& test = data.test_pos[u];
    if (test.empty()) continue;
    ++out.num_evaluated_users;
    std::vector<std::pair<double, ItemId>> ranked;
    for (ItemId i = 0; i < data.num_items; ++i) {
      if (std::find(data.train_pos[u].begin(), data.train_pos[u].end(), i) !=
          data.train_pos[u].end()) {
        continue;
      }
      double s = dot(t.user(u), t.item(i));
      if (cosine) s /= norm(t.user(u)) * norm(t.item(i));
      ranked.push_back({s, i});
    }
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (auto K : cutoffs) {
      double hits = 0.0, dcg = 0.0, idcg = 0.0;
      for (std::size_t r = 1; r <= K; ++r) {
        if (r <= ranked.size() &&
            std::find(test.begin(), test.end(), ranked[r - 1].second) != test.end()) {
          hits += 1.0;
          dcg += 1.0 / std::log2(static_cast<double>(r) + 1.0);
        }
        if (r <= test.size()) idcg += 1.0 / std::log2(static_cast<double>(r) + 1.0);
      }
      out.precision[K] += hits / static_cast<double>(K);
      out.recall[K] += hits / static_cast<double>(test.size());
      out.ndcg[K] += dcg / idcg;
    }
  }
  if (out.num_evaluated_users > 0) {
    const double n = static_cast<double>(out.num_evaluated_users);
    for (auto* m : {&out.precision, &out.recall, &out.ndcg}) {
      for (auto& [_, v] : *m) v /= n;
    }
  }
  return out;
}

// Random instance with at most max_users users and max_items items. With integer_grid the
// embeddings take small integer values, so exact score ties occur often.
inline std::pair<EmbeddingTable, InteractionDataset>
random_eval_instance(Rng& rng, std::size_t max_users, std::size_t max_items, bool integer_grid) {
  std::uniform_int_distribution<std::size_t> users_d(1, max_users), items_d(6, max_items);
  const std::size_t users = users_d(rng), items = items_d(rng);
  std::vector<std::vector<ItemId>> train(users), test(users);
  std::bernoulli_distribution coin(0.25);
  for (std::size_t u = 0; u < users; ++u) {
    for (ItemId i = 0; i < items; ++i) {
      if (coin(rng)) (coin(rng) ? train : test)[u].push_back(i);
    }
  }
  EmbeddingTable t(users, items, 3);
  std::uniform_int_distribution<int> grid(-3, 3);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto fill = [&](std::span<double> row) {
    for (auto& v : row) v = integer_grid ? grid(rng) : gauss(rng);
    if (norm(row) == 0.0) row[0] = 1.0;
  };
  for (UserId u = 0; u < users; ++u) fill(t.user(u));
  for (ItemId i = 0; i < items; ++i) fill(t.item(i));
  return {std::move(t), make_dataset(items, std::move(train), std::move(test))};
}

} // namespace cfct::test

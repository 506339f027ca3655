#include <gtest/gtest.h>

#include <random>
#include <set>

#include "cegnn/clustering.hpp"

using namespace cegnn;

namespace {

std::vector<Point> blobs(const std::vector<Point>& centers, std::size_t per, double spread, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(-spread, spread);
  std::vector<Point> out;
  for (const auto& c : centers)
    for (std::size_t i = 0; i < per; ++i) {
      Point p = c;
      for (double& x : p) x += U(rng);
      out.push_back(std::move(p));
    }
  return out;
}

/// Silhouette written directly from the definition, for comparison.
double silhouette_oracle(const std::vector<Point>& pts, const std::vector<std::size_t>& a, std::size_t k) {
  double total = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    std::vector<double> sum(k, 0.0);
    std::vector<std::size_t> cnt(k, 0);
    for (std::size_t j = 0; j < pts.size(); ++j) {
      if (j == i) continue;
      sum[a[j]] += sup_distance(pts[i], pts[j]);
      ++cnt[a[j]];
    }
    if (cnt[a[i]] == 0) continue;
    const double in = sum[a[i]] / static_cast<double>(cnt[a[i]]);
    double out = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c)
      if (c != a[i] && cnt[c] > 0) out = std::min(out, sum[c] / static_cast<double>(cnt[c]));
    total += (out - in) / std::max(in, out);
  }
  return total / static_cast<double>(pts.size());
}

std::vector<Candidate> as_candidates(const std::vector<Point>& pts, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(-1.0, 0.0);
  std::vector<Candidate> out;
  for (const auto& p : pts) out.push_back({p, U(rng)});
  return out;
}

}  // namespace

TEST(KMeans, SeparatedBlobs1D) {
  const std::vector<Point> pts{{0.0}, {0.1}, {10.0}, {10.1}};
  const auto r = kmeans(pts, 2, 1);
  EXPECT_EQ(r.assign[0], r.assign[1]);
  EXPECT_EQ(r.assign[2], r.assign[3]);
  EXPECT_NE(r.assign[0], r.assign[2]);
}

TEST(KMeans, EveryPointItsOwnCluster) {
  const auto pts = blobs({{0, 0}, {3, 3}}, 4, 1.0, 2);
  const auto r = kmeans(pts, pts.size(), 3);
  EXPECT_EQ(r.inertia, 0.0);
  EXPECT_EQ(std::set<std::size_t>(r.assign.begin(), r.assign.end()).size(), pts.size());
}

TEST(KMeans, IdenticalPointsAreDegenerate) {
  const std::vector<Point> pts(5, Point{1.0, 2.0});
  const auto r = kmeans(pts, 2, 4);
  EXPECT_TRUE(r.degenerate);
  EXPECT_EQ(r.k, 1u);
  const auto s = silhouette_select_k(pts, 4);
  EXPECT_EQ(s.k, 1u);
}

TEST(KMeans, TooManyClusters) { EXPECT_THROW(kmeans({{0.0}, {1.0}}, 3, 1), std::invalid_argument); }

TEST(KMeans, DeterministicAndInertiaNonIncreasing) {
  const auto pts = blobs({{0, 0}, {5, 0}, {0, 5}, {5, 5}}, 12, 1.5, 5);
  const auto a = kmeans(pts, 4, 9), b = kmeans(pts, 4, 9);
  EXPECT_EQ(a.assign, b.assign);
  EXPECT_EQ(a.centroids, b.centroids);
  for (std::size_t i = 1; i < a.inertia_history.size(); ++i) EXPECT_LE(a.inertia_history[i], a.inertia_history[i - 1]);
}

TEST(Silhouette, MatchesDefinition) {
  const auto pts = blobs({{0, 0}, {4, 1}, {1, 6}}, 6, 1.2, 6);
  for (std::size_t k = 2; k <= 5; ++k) {
    const auto r = kmeans(pts, k, 1);
    EXPECT_NEAR(silhouette(pts, r.assign, r.k), silhouette_oracle(pts, r.assign, r.k), 1e-12);
  }
}

TEST(Silhouette, TwoBlobs) {
  const std::vector<Point> pts{{0.0}, {0.2}, {0.4}, {9.0}, {9.2}, {9.4}};
  const auto s = silhouette_select_k(pts, 1);
  EXPECT_EQ(s.k, 2u);
  // by hand for the two-blob split: a = 0.3 or 0.2, b about 9
  EXPECT_GT(s.scores.at(2), s.scores.at(3));
}

TEST(Silhouette, ThreeBlobs) {
  const auto pts = blobs({{0.0}, {10.0}, {20.0}}, 5, 0.5, 7);
  EXPECT_EQ(silhouette_select_k(pts, 2).k, 3u);
}

TEST(Silhouette, TwoPointsForced) {
  const auto s = silhouette_select_k({{0.0}, {1.0}}, 1);
  EXPECT_EQ(s.k, 2u);
  EXPECT_TRUE(s.scores.empty());
}

TEST(Select, PureExploitation) {
  std::vector<Candidate> c{{{0.0}, -0.1}, {{0.01}, -0.5}, {{0.02}, -0.3}, {{0.03}, -0.9}, {{0.04}, -0.2}};
  SelectionConfig cfg;
  cfg.delta = 0.0;
  cfg.k_rho = 3;
  // identical standardised layout in one blob: force one cluster by k_max
  cfg.k_max = 1;
  const auto s = select_cex(c, cfg);
  ASSERT_EQ(s.clusters.k, 1u);
  EXPECT_EQ(s.chosen, (std::vector<std::size_t>{3, 1, 2}));
}

TEST(Select, LargeDeltaTakesWorstPerCluster) {
  const auto pts = blobs({{0, 0}, {10, 0}, {0, 10}}, 6, 0.5, 8);
  const auto c = as_candidates(pts, 9);
  SelectionConfig cfg;
  cfg.delta = 100.0;
  const auto s = select_cex(c, cfg);
  ASSERT_EQ(s.clusters.k, 3u);
  EXPECT_EQ(s.chosen.size(), 3u);
  for (const auto& m : s.members) {
    std::size_t worst = m.front();
    for (std::size_t i : m)
      if (c[i].rho < c[worst].rho) worst = i;
    EXPECT_NE(std::find(s.chosen.begin(), s.chosen.end(), worst), s.chosen.end());
  }
}

TEST(Select, ManyCounterexamplesInNineBlobs) {
  std::vector<Point> centers;
  for (double a : {8.5, 10.0, 11.5})
    for (double b : {8.5, 10.0, 11.5}) centers.push_back({10.0, a, b});
  std::vector<Point> pts;
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> U(-0.15, 0.15);
  for (std::size_t i = 0; i < 262; ++i) {
    Point p = centers[i % 9];
    p[1] += U(rng);
    p[2] += U(rng);
    pts.push_back(p);
  }
  const auto c = as_candidates(pts, 11);
  SelectionConfig cfg;
  cfg.delta = 0.5;
  cfg.k_rho = 3;
  const auto s = select_cex(c, cfg);
  EXPECT_EQ(s.clusters.k, 9u);
  EXPECT_EQ(s.chosen.size(), 9u);
  std::set<std::size_t> blobs_hit;
  for (std::size_t i : s.chosen) blobs_hit.insert(i % 9);
  EXPECT_EQ(blobs_hit.size(), 9u);
}

TEST(Select, InvariantsOnRandomBatches) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto pts = blobs({{0, 0, 0}, {3, 0, 1}, {0, 4, 2}, {5, 5, 5}}, 8, 1.0, 100 + seed);
    const auto c = as_candidates(pts, 200 + seed);
    SelectionConfig cfg;
    cfg.delta = 0.8;
    cfg.k_rho = 3;
    cfg.seed = seed;
    const auto s = select_cex(c, cfg);
    const auto again = select_cex(c, cfg);
    EXPECT_EQ(s.chosen, again.chosen);
    EXPECT_LE(s.chosen.size(), s.clusters.k * cfg.k_rho);
    std::vector<std::size_t> per(s.clusters.k, 0);
    for (std::size_t i : s.chosen) ++per[s.clusters.clustering.assign[i]];
    for (std::size_t n : per) EXPECT_LE(n, cfg.k_rho);
    for (const auto& m : s.members) EXPECT_NE(std::find(s.chosen.begin(), s.chosen.end(), m.front()), s.chosen.end());
    std::vector<Point> chosen;
    for (std::size_t i : s.chosen) chosen.push_back(c[i].embedding);
    EXPECT_TRUE(is_delta_separated(chosen, cfg.delta).separated) << "seed " << seed;
  }
}

TEST(Select, PassThrough) {
  const auto c = as_candidates(blobs({{0, 0}}, 7, 1.0, 12), 13);
  SelectionConfig cfg;
  cfg.cluster = false;
  const auto s = select_cex(c, cfg);
  EXPECT_EQ(s.chosen, (std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6}));
  EXPECT_FALSE(s.clustered);
}

TEST(Select, ExamplesBestFirstAndSeparated) {
  std::vector<Candidate> c{{{0.0}, 0.1}, {{0.1}, 0.9}, {{2.0}, 0.5}, {{2.05}, 0.7}, {{5.0}, 0.2}};
  EXPECT_EQ(select_examples(c, 0.5, 3), (std::vector<std::size_t>{1, 3, 4}));
  EXPECT_EQ(select_examples(c, 0.5, 1), (std::vector<std::size_t>{1}));
}

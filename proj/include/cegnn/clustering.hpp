#pragma once

// Counterexample reduction: k-means under the sup metric with silhouette-based
// choice of k, then per-cluster selection of the worst, mutually separated
// members.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>
#include <vector>

#include "cegnn/coverage.hpp"
#include "json.hpp"

namespace cegnn {

struct ClusteringResult {
  std::size_t k = 0;
  std::vector<std::size_t> assign;
  std::vector<Point> centroids;
  double inertia = 0.0;                // sum of squared sup distances to the assigned centroid
  std::vector<double> inertia_history;  // after every half step
  bool degenerate = false;              // fewer distinct points than requested clusters
};

/// Per-axis z-score over the batch; constant axes map to 0.
inline std::vector<Point> standardize(const std::vector<Point>& pts) {
  if (pts.empty()) return {};
  const std::size_t d = pts.front().size();
  std::vector<double> mean(d, 0.0), sd(d, 0.0);
  for (const auto& p : pts)
    for (std::size_t i = 0; i < d; ++i) mean[i] += p[i];
  for (double& m : mean) m /= static_cast<double>(pts.size());
  for (const auto& p : pts)
    for (std::size_t i = 0; i < d; ++i) sd[i] += (p[i] - mean[i]) * (p[i] - mean[i]);
  for (double& s : sd) s = std::sqrt(s / static_cast<double>(pts.size()));
  std::vector<Point> out(pts.size(), Point(d));
  for (std::size_t n = 0; n < pts.size(); ++n)
    for (std::size_t i = 0; i < d; ++i) out[n][i] = sd[i] > 1e-12 ? (pts[n][i] - mean[i]) / sd[i] : 0.0;
  return out;
}

namespace detail {

inline double cost(const std::vector<Point>& pts, const std::vector<std::size_t>& assign, const std::vector<Point>& c) {
  double s = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double d = sup_distance(pts[i], c[assign[i]]);
    s += d * d;
  }
  return s;
}

inline std::size_t nearest(const Point& p, const std::vector<Point>& c) {
  std::size_t best = 0;
  double bd = stl::kInf;
  for (std::size_t j = 0; j < c.size(); ++j) {
    const double d = sup_distance(p, c[j]);
    if (d < bd) {
      bd = d;
      best = j;
    }
  }
  return best;
}

}  // namespace detail

/// k-means++ seeding then alternating assignment / update under the sup
/// metric. The update moves a centroid to its cluster mean only when that
/// lowers the cluster's cost (the mean is not the sup-metric minimiser), so
/// inertia never increases. Empty clusters are reseeded from the point
/// farthest from its centroid.
inline ClusteringResult kmeans(const std::vector<Point>& pts, std::size_t k, std::uint64_t seed, std::size_t max_iter = 100) {
  const std::size_t n = pts.size();
  if (k == 0) throw std::invalid_argument("k must be >= 1");
  if (k > n) throw std::invalid_argument("k = " + std::to_string(k) + " exceeds the number of points " + std::to_string(n));
  ClusteringResult res;
  const std::set<Point> distinct(pts.begin(), pts.end());
  if (distinct.size() < k) {
    res.degenerate = true;
    k = 1;
  }
  res.k = k;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);

  std::vector<Point> c;
  c.push_back(pts[std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)]);
  std::vector<double> d2(n);
  while (c.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = stl::kInf;
      for (const auto& cj : c) best = std::min(best, sup_distance(pts[i], cj));
      d2[i] = best * best;
      total += d2[i];
    }
    std::size_t pick = n - 1;
    const double target = U(rng) * total;
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      acc += d2[i];
      if (d2[i] > 0.0 && acc >= target) {
        pick = i;
        break;
      }
    }
    if (d2[pick] == 0.0) {  // numerical tail: take the farthest point
      pick = static_cast<std::size_t>(std::max_element(d2.begin(), d2.end()) - d2.begin());
    }
    c.push_back(pts[pick]);
  }

  res.assign.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) res.assign[i] = detail::nearest(pts[i], c);
  res.inertia_history.push_back(detail::cost(pts, res.assign, c));
  for (std::size_t it = 0; it < max_iter; ++it) {
    bool moved = false;
    // update
    std::vector<std::vector<std::size_t>> members(k);
    for (std::size_t i = 0; i < n; ++i) members[res.assign[i]].push_back(i);
    for (std::size_t j = 0; j < k; ++j) {
      if (members[j].empty()) {
        std::size_t far = 0;
        double fd = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double d = sup_distance(pts[i], c[res.assign[i]]);
          if (members[res.assign[i]].size() > 1 && d > fd) {
            fd = d;
            far = i;
          }
        }
        if (fd <= 0.0) continue;
        const std::size_t from = res.assign[far];
        members[from].erase(std::find(members[from].begin(), members[from].end(), far));
        members[j].push_back(far);
        res.assign[far] = j;
        c[j] = pts[far];
        moved = true;
        continue;
      }
      Point mean(pts.front().size(), 0.0);
      for (std::size_t i : members[j])
        for (std::size_t q = 0; q < mean.size(); ++q) mean[q] += pts[i][q];
      for (double& m : mean) m /= static_cast<double>(members[j].size());
      double old_cost = 0.0, new_cost = 0.0;
      for (std::size_t i : members[j]) {
        const double a = sup_distance(pts[i], c[j]), b = sup_distance(pts[i], mean);
        old_cost += a * a;
        new_cost += b * b;
      }
      if (new_cost < old_cost) {
        c[j] = std::move(mean);
        moved = true;
      }
    }
    res.inertia_history.push_back(detail::cost(pts, res.assign, c));
    // assignment, keeping the current cluster on ties
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = res.assign[i];
      double bd = sup_distance(pts[i], c[best]);
      for (std::size_t j = 0; j < k; ++j) {
        const double d = sup_distance(pts[i], c[j]);
        if (d < bd) {
          bd = d;
          best = j;
        }
      }
      if (best != res.assign[i]) {
        res.assign[i] = best;
        changed = true;
      }
    }
    res.inertia_history.push_back(detail::cost(pts, res.assign, c));
    if (!changed && !moved) break;
  }
  res.centroids = std::move(c);
  res.inertia = res.inertia_history.back();
  return res;
}

/// Mean silhouette coefficient under the sup metric. A point alone in its
/// cluster scores 0.
inline double silhouette(const std::vector<Point>& pts, const std::vector<std::size_t>& assign, std::size_t k) {
  const std::size_t n = pts.size();
  if (n == 0) return 0.0;
  std::vector<std::size_t> size(k, 0);
  for (std::size_t a : assign) ++size[a];
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (size[assign[i]] <= 1) continue;
    std::vector<double> sum(k, 0.0);
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) sum[assign[j]] += sup_distance(pts[i], pts[j]);
    const double a = sum[assign[i]] / static_cast<double>(size[assign[i]] - 1);
    double b = stl::kInf;
    for (std::size_t c = 0; c < k; ++c)
      if (c != assign[i] && size[c] > 0) b = std::min(b, sum[c] / static_cast<double>(size[c]));
    if (!std::isfinite(b)) continue;
    const double m = std::max(a, b);
    total += m > 0.0 ? (b - a) / m : 0.0;
  }
  return total / static_cast<double>(n);
}

struct KSelection {
  std::size_t k = 1;
  std::map<std::size_t, double> scores;  // silhouette per examined k
  ClusteringResult clustering;
};

/// Sweeps k over [k_min, min(k_max, n-1)] and keeps the best mean silhouette
/// (ties to the smaller k). Fewer than three points: k = n.
inline KSelection silhouette_select_k(const std::vector<Point>& pts, std::uint64_t seed, std::size_t k_min = 2,
                                      std::size_t k_max = 10) {
  const std::size_t n = pts.size();
  KSelection out;
  if (n < 3) {
    out.k = n;
    if (n > 0) out.clustering = kmeans(pts, n, seed);
    out.k = out.clustering.k;
    return out;
  }
  double best = -stl::kInf;
  const std::size_t hi = std::min(k_max, n - 1);
  for (std::size_t k = std::max<std::size_t>(2, k_min); k <= hi; ++k) {
    ClusteringResult r = kmeans(pts, k, seed);
    if (r.degenerate) continue;
    const double s = silhouette(pts, r.assign, r.k);
    out.scores[k] = s;
    if (s > best) {
      best = s;
      out.k = k;
      out.clustering = std::move(r);
    }
  }
  if (out.scores.empty()) {
    out.clustering = kmeans(pts, 1, seed);
    out.k = 1;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Selection

struct Candidate {
  Point embedding;  // raw setting coordinates
  double rho = 0.0;
};

struct SelectionConfig {
  double delta = 0.5;      // minimum sup distance between selected members
  std::size_t k_rho = 3;   // per cluster
  bool cluster = true;     // false: keep every candidate
  std::size_t k_max = 10;
  std::uint64_t seed = 0;
};

struct Selection {
  std::vector<std::size_t> chosen;  // indices into the candidates
  KSelection clusters;
  std::vector<std::vector<std::size_t>> members;  // per cluster
  bool clustered = false;
};

/// Clusters the standardised embeddings, then within each cluster walks the
/// members by ascending robustness and takes those farther than delta from
/// everything taken so far, up to k_rho. The worst member of every cluster is
/// always taken.
inline Selection select_cex(const std::vector<Candidate>& cands, const SelectionConfig& cfg) {
  Selection sel;
  if (cands.empty()) return sel;
  if (!cfg.cluster) {
    sel.chosen.resize(cands.size());
    std::iota(sel.chosen.begin(), sel.chosen.end(), 0);
    sel.members.push_back(sel.chosen);
    return sel;
  }
  sel.clustered = true;
  std::vector<Point> raw, z;
  for (const auto& c : cands) raw.push_back(c.embedding);
  z = standardize(raw);
  sel.clusters = silhouette_select_k(z, cfg.seed, 2, cfg.k_max);
  const std::size_t k = sel.clusters.k;
  sel.members.assign(k, {});
  for (std::size_t i = 0; i < cands.size(); ++i) sel.members[sel.clusters.clustering.assign[i]].push_back(i);
  for (auto& m : sel.members) {
    std::stable_sort(m.begin(), m.end(), [&](std::size_t a, std::size_t b) { return cands[a].rho < cands[b].rho; });
  }
  std::vector<std::size_t> cluster_order(k);
  std::iota(cluster_order.begin(), cluster_order.end(), 0);
  std::stable_sort(cluster_order.begin(), cluster_order.end(), [&](std::size_t a, std::size_t b) {
    return cands[sel.members[a].front()].rho < cands[sel.members[b].front()].rho;
  });
  for (std::size_t c : cluster_order) {
    std::size_t taken = 0;
    for (std::size_t i : sel.members[c]) {
      if (taken == cfg.k_rho) break;
      bool ok = true;
      if (taken > 0) {
        for (std::size_t j : sel.chosen) {
          if (!(sup_distance(raw[i], raw[j]) > cfg.delta)) {
            ok = false;
            break;
          }
        }
      }
      if (ok) {
        sel.chosen.push_back(i);
        ++taken;
      }
    }
  }
  return sel;
}

/// Mirror image for satisfying examples: highest robustness first, separated
/// by delta, at most `count`.
inline std::vector<std::size_t> select_examples(const std::vector<Candidate>& cands, double delta, std::size_t count) {
  std::vector<std::size_t> order(cands.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return cands[a].rho > cands[b].rho; });
  std::vector<std::size_t> out;
  for (std::size_t i : order) {
    if (out.size() >= count) break;
    bool ok = true;
    for (std::size_t j : out) {
      if (!(sup_distance(cands[i].embedding, cands[j].embedding) > delta)) {
        ok = false;
        break;
      }
    }
    if (ok) out.push_back(i);
  }
  return out;
}

inline nlohmann::json selection_report(const Selection& s, const std::vector<Candidate>& cands) {
  nlohmann::json clusters = nlohmann::json::array();
  for (std::size_t c = 0; c < s.members.size(); ++c) {
    nlohmann::json m = nlohmann::json::array();
    for (std::size_t i : s.members[c]) m.push_back({{"index", i}, {"rho", cands[i].rho}, {"embedding", cands[i].embedding}});
    clusters.push_back({{"cluster", c}, {"members", m}});
  }
  nlohmann::json sil = nlohmann::json::object();
  for (const auto& [k, v] : s.clusters.scores) sil[std::to_string(k)] = v;
  return {{"clustered", s.clustered},
          {"k", s.clustered ? s.clusters.k : 0},
          {"silhouette", sil},
          {"clusters", clusters},
          {"chosen", s.chosen},
          {"candidates", cands.size()}};
}

}  // namespace cegnn

#include "fundcast/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <set>

namespace fundcast {

FeatureSeriesMatrix feature_series_matrix(const Corpus& corpus, std::size_t feature) {
  if (feature >= kSeriesFeatures)
    throw UsageError("feature_series_matrix: feature index " + std::to_string(feature) +
                     " outside 0..7");
  FeatureSeriesMatrix out;
  out.feature_index = feature;
  out.values = Matrix(corpus.size(), kHorizonDays, 0.0);
  for (std::size_t i = 0; i < corpus.size(); ++i)
    for (std::size_t t = 0; t < corpus[i].series.cols; ++t)
      out.values.at(i, t) = corpus[i].series.at(feature, t);
  return out;
}

namespace {

double sq_dist(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

std::size_t count_distinct_rows(const Matrix& m) {
  std::set<std::vector<double>> seen;
  for (std::size_t i = 0; i < m.rows; ++i)
    seen.emplace(m.row(i).begin(), m.row(i).end());
  return seen.size();
}

KmeansResult lloyd_once(const Matrix& points, std::size_t k, Rng& rng) {
  const std::size_t n = points.rows;
  const std::size_t dim = points.cols;

  // k-means++ seeding
  Matrix centers(k, dim);
  std::vector<double> min_sq(n, std::numeric_limits<double>::infinity());
  std::size_t first = rng.uniform_int(n);
  for (std::size_t j = 0; j < dim; ++j) centers.at(0, j) = points.at(first, j);
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = sq_dist(points.row(i), centers.row(c - 1));
      min_sq[i] = std::min(min_sq[i], d);
      total += min_sq[i];
    }
    std::size_t chosen = 0;
    if (total > 0.0) {
      double r = rng.uniform() * total;
      for (std::size_t i = 0; i < n; ++i) {
        r -= min_sq[i];
        if (r <= 0.0) {
          chosen = i;
          break;
        }
      }
    } else {
      chosen = rng.uniform_int(n);
    }
    for (std::size_t j = 0; j < dim; ++j) centers.at(c, j) = points.at(chosen, j);
  }

  std::vector<int> labels(n, -1);
  KmeansResult result;
  constexpr std::size_t kMaxIter = 300;
  for (std::size_t iter = 0; iter < kMaxIter; ++iter) {
    bool changed = false;
    double pass_inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      int best_c = 0;
      for (std::size_t c = 0; c < k; ++c) {
        const double d = sq_dist(points.row(i), centers.row(c));
        if (d < best) {
          best = d;
          best_c = static_cast<int>(c);
        }
      }
      pass_inertia += best;
      if (labels[i] != best_c) {
        labels[i] = best_c;
        changed = true;
      }
    }
    result.iterations = iter + 1;
    result.inertia_trace.push_back(pass_inertia);
    if (!changed && iter > 0) break;

    Matrix sums(k, dim, 0.0);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = static_cast<std::size_t>(labels[i]);
      ++counts[c];
      for (std::size_t j = 0; j < dim; ++j) sums.at(c, j) += points.at(i, j);
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) {
        // re-seed an empty cluster at the point farthest from its center
        std::size_t far = 0;
        double far_d = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double d =
              sq_dist(points.row(i), centers.row(static_cast<std::size_t>(labels[i])));
          if (d > far_d) {
            far_d = d;
            far = i;
          }
        }
        for (std::size_t j = 0; j < dim; ++j) centers.at(c, j) = points.at(far, j);
        continue;
      }
      for (std::size_t j = 0; j < dim; ++j)
        centers.at(c, j) = sums.at(c, j) / static_cast<double>(counts[c]);
    }
  }

  double inertia = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    inertia += sq_dist(points.row(i), centers.row(static_cast<std::size_t>(labels[i])));
  result.labels = std::move(labels);
  result.centers = std::move(centers);
  result.inertia = inertia;
  return result;
}

}  // namespace

KmeansResult kmeans_series(const FeatureSeriesMatrix& m, std::size_t k, Rng& rng) {
  const Matrix& points = m.values;
  if (k < 2) throw UsageError("kmeans_series: k must be at least 2");
  if (k > points.rows)
    throw DegenerateError("kmeans_series: k=" + std::to_string(k) + " exceeds " +
                          std::to_string(points.rows) + " cases");
  if (k > count_distinct_rows(points))
    throw DegenerateError("kmeans_series: k=" + std::to_string(k) +
                          " exceeds the number of distinct series");
  constexpr int kRestarts = 10;
  KmeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < kRestarts; ++r) {
    Rng restart_rng = rng.split(static_cast<std::uint64_t>(r) + 1);
    KmeansResult candidate = lloyd_once(points, k, restart_rng);
    if (candidate.inertia < best.inertia) best = std::move(candidate);
  }
  return best;
}

double mean_silhouette(const Matrix& points, const std::vector<int>& labels,
                       std::size_t k) {
  const std::size_t n = points.rows;
  std::vector<std::size_t> counts(k, 0);
  for (int l : labels) ++counts[static_cast<std::size_t>(l)];
  double total = 0.0;
  std::vector<double> dist_sum(k);
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(dist_sum.begin(), dist_sum.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      dist_sum[static_cast<std::size_t>(labels[j])] +=
          std::sqrt(sq_dist(points.row(i), points.row(j)));
    }
    const std::size_t own = static_cast<std::size_t>(labels[i]);
    if (counts[own] <= 1) continue;  // singleton: silhouette 0 by convention
    const double a = dist_sum[own] / static_cast<double>(counts[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c) {
      if (c == own || counts[c] == 0) continue;
      b = std::min(b, dist_sum[c] / static_cast<double>(counts[c]));
    }
    const double denom = std::max(a, b);
    if (denom > 0.0) total += (b - a) / denom;
  }
  return total / static_cast<double>(n);
}

SilhouetteSelection silhouette_select_k(const FeatureSeriesMatrix& m, std::size_t k_lo,
                                        std::size_t k_hi, Rng& rng,
                                        std::size_t subsample_limit) {
  const std::size_t n = m.values.rows;
  if (k_lo < 2 || k_hi < k_lo || k_hi > n - 1)
    throw UsageError("silhouette_select_k: need 2 <= k_lo <= k_hi <= cases-1");

  // seeded uniform subsample for the quadratic silhouette computation
  std::vector<std::size_t> sample(n);
  for (std::size_t i = 0; i < n; ++i) sample[i] = i;
  if (n > subsample_limit) {
    Rng sub_rng = rng.split(0x5a3b);
    for (std::size_t i = n; i > 1; --i)
      std::swap(sample[i - 1], sample[sub_rng.uniform_int(i)]);
    sample.resize(subsample_limit);
    std::sort(sample.begin(), sample.end());
  }

  SilhouetteSelection sel;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t k = k_lo; k <= k_hi; ++k) {
    Rng k_rng = rng.split(0x55 + k);
    KmeansResult res;
    try {
      res = kmeans_series(m, k, k_rng);
    } catch (const DegenerateError&) {
      break;  // fewer distinct series than k; larger k is hopeless too
    }
    Matrix pts(sample.size(), m.values.cols);
    std::vector<int> lbl(sample.size());
    for (std::size_t i = 0; i < sample.size(); ++i) {
      std::copy(m.values.row(sample[i]).begin(), m.values.row(sample[i]).end(),
                pts.row(i).begin());
      lbl[i] = res.labels[sample[i]];
    }
    const double score = mean_silhouette(pts, lbl, k);
    sel.scores.emplace_back(k, score);
    if (score > best_score) {
      best_score = score;
      sel.k = k;
      sel.best = std::move(res);
    }
  }
  if (sel.scores.empty())
    throw DegenerateError("silhouette_select_k: no feasible k in range");
  sel.low_separation = best_score < 0.25;
  return sel;
}

// ---------------------------------------------------------------------------
// k-modes

namespace {

std::size_t hamming(const std::vector<int>& a, const std::vector<int>& b) {
  std::size_t d = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) ++d;
  return d;
}

std::vector<int> column_modes(const std::vector<std::vector<int>>& rows,
                              const std::vector<std::size_t>& members,
                              std::size_t cols) {
  std::vector<int> mode(cols, 0);
  for (std::size_t j = 0; j < cols; ++j) {
    std::map<int, std::size_t> freq;
    for (std::size_t i : members) ++freq[rows[i][j]];
    std::size_t best = 0;
    for (const auto& [value, count] : freq) {
      if (count > best) {  // ties resolve to the smallest label (map order)
        best = count;
        mode[j] = value;
      }
    }
  }
  return mode;
}

}  // namespace

KmodesResult kmodes_cases(const std::vector<std::vector<int>>& rows, std::size_t K) {
  if (rows.empty()) throw UsageError("kmodes_cases: no rows");
  const std::size_t n = rows.size();
  const std::size_t cols = rows.front().size();
  for (const auto& r : rows)
    if (r.size() != cols) throw ShapeError("kmodes_cases: ragged label rows");
  if (K < 2) throw UsageError("kmodes_cases: K must be at least 2");
  std::set<std::vector<int>> distinct(rows.begin(), rows.end());
  if (K > distinct.size())
    throw DegenerateError("kmodes_cases: K=" + std::to_string(K) + " exceeds " +
                          std::to_string(distinct.size()) + " distinct label vectors");

  // Cao density initialization: density from per-column value frequencies;
  // first center is the densest row, later centers maximize
  // density * distance-to-nearest-chosen-center.
  std::vector<std::map<int, std::size_t>> freq(cols);
  for (const auto& r : rows)
    for (std::size_t j = 0; j < cols; ++j) ++freq[j][r[j]];
  std::vector<double> density(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < cols; ++j)
      acc += static_cast<double>(freq[j].at(rows[i][j]));
    density[i] = acc / (static_cast<double>(n) * static_cast<double>(cols));
  }

  std::vector<std::vector<int>> centers;
  std::vector<std::size_t> chosen;
  {
    std::size_t first = 0;
    for (std::size_t i = 1; i < n; ++i)
      if (density[i] > density[first]) first = i;
    chosen.push_back(first);
    centers.push_back(rows[first]);
  }
  while (centers.size() < K) {
    double best_score = -1.0;
    std::size_t best_i = 0;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t nearest = cols + 1;
      for (const auto& c : centers) nearest = std::min(nearest, hamming(rows[i], c));
      const double score = density[i] * static_cast<double>(nearest);
      if (score > best_score) {
        best_score = score;
        best_i = i;
      }
    }
    // skip duplicates of already-chosen centers (distance 0 scores 0)
    chosen.push_back(best_i);
    centers.push_back(rows[best_i]);
  }

  std::vector<int> labels(n, -1);
  KmodesResult result;
  constexpr std::size_t kMaxIter = 100;
  for (std::size_t iter = 0; iter < kMaxIter; ++iter) {
    bool changed = false;
    double pass_cost = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best_d = cols + 1;
      int best_c = 0;
      for (std::size_t c = 0; c < K; ++c) {
        const std::size_t d = hamming(rows[i], centers[c]);
        if (d < best_d) {
          best_d = d;
          best_c = static_cast<int>(c);
        }
      }
      pass_cost += static_cast<double>(best_d);
      if (labels[i] != best_c) {
        labels[i] = best_c;
        changed = true;
      }
    }
    result.iterations = iter + 1;
    result.cost_trace.push_back(pass_cost);
    if (!changed && iter > 0) break;
    for (std::size_t c = 0; c < K; ++c) {
      std::vector<std::size_t> members;
      for (std::size_t i = 0; i < n; ++i)
        if (labels[i] == static_cast<int>(c)) members.push_back(i);
      if (members.empty()) {
        // repair: grab the row farthest from its assigned center
        std::size_t far = 0;
        std::size_t far_d = 0;
        for (std::size_t i = 0; i < n; ++i) {
          const std::size_t d =
              hamming(rows[i], centers[static_cast<std::size_t>(labels[i])]);
          if (d > far_d) {
            far_d = d;
            far = i;
          }
        }
        centers[c] = rows[far];
        continue;
      }
      centers[c] = column_modes(rows, members, cols);
    }
  }

  double cost = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    cost += static_cast<double>(hamming(rows[i], centers[static_cast<std::size_t>(labels[i])]));
  result.labels = std::move(labels);
  result.centers = std::move(centers);
  result.cost = cost;
  return result;
}

double kmodes_cost(const std::vector<std::vector<int>>& rows, const KmodesResult& result) {
  double cost = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i)
    cost += static_cast<double>(
        hamming(rows[i], result.centers[static_cast<std::size_t>(result.labels[i])]));
  return cost;
}

ElbowSelection elbow_select_K(const std::vector<std::vector<int>>& rows, std::size_t K_lo,
                              std::size_t K_hi) {
  if (K_lo < 2 || K_hi < K_lo)
    throw UsageError("elbow_select_K: need 2 <= K_lo <= K_hi");
  ElbowSelection sel;
  for (std::size_t K = K_lo; K <= K_hi; ++K) {
    try {
      sel.costs.emplace_back(K, kmodes_cases(rows, K).cost);
    } catch (const DegenerateError&) {
      break;
    }
  }
  if (sel.costs.empty()) throw DegenerateError("elbow_select_K: no feasible K in range");
  // discrete curvature over interior points of the curve
  double best_curv = 0.0;
  std::size_t best_K = 0;
  for (std::size_t i = 1; i + 1 < sel.costs.size(); ++i) {
    const double curv =
        sel.costs[i - 1].second - 2.0 * sel.costs[i].second + sel.costs[i + 1].second;
    if (curv > best_curv + 1e-12) {
      best_curv = curv;
      best_K = sel.costs[i].first;
    }
  }
  if (best_K == 0) {
    sel.no_elbow = true;  // flat or linear curve
    sel.K = sel.costs.front().first;
  } else {
    sel.K = best_K;
  }
  return sel;
}

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) throw ShapeError("adjusted_rand_index: length mismatch");
  const std::size_t n = a.size();
  if (n < 2) return 1.0;
  std::map<std::pair<int, int>, double> joint;
  std::map<int, double> ca, cb;
  for (std::size_t i = 0; i < n; ++i) {
    ++joint[{a[i], b[i]}];
    ++ca[a[i]];
    ++cb[b[i]];
  }
  auto choose2 = [](double m) { return m * (m - 1.0) / 2.0; };
  double sum_joint = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (const auto& [key, m] : joint) sum_joint += choose2(m);
  for (const auto& [key, m] : ca) sum_a += choose2(m);
  for (const auto& [key, m] : cb) sum_b += choose2(m);
  const double total = choose2(static_cast<double>(n));
  const double expected = sum_a * sum_b / total;
  const double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) return 1.0;
  return (sum_joint - expected) / (max_index - expected);
}

// ---------------------------------------------------------------------------
// Pipeline and profiling

ClusterProfile profile_clusters(const ClusterAssignment& assignment, const Corpus& corpus) {
  if (assignment.case_labels.size() != corpus.size())
    throw UsageError("profile_clusters: assignment does not cover the corpus");
  int max_label = 0;
  for (int l : assignment.case_labels) max_label = std::max(max_label, l);
  const std::size_t n_clusters = static_cast<std::size_t>(max_label) + 1;

  ClusterProfile profile;
  for (const char* name : kSeriesFeatureNames) profile.metrics.push_back(name);
  profile.metrics.insert(profile.metrics.end(),
                         {"age", "pct_female", "target_amount", "content_length",
                          "title_length", "fulfillment"});
  const std::size_t n_metrics = profile.metrics.size();
  profile.values = Matrix(n_metrics, 1 + n_clusters, 0.0);
  profile.cluster_sizes.assign(n_clusters, 0);

  auto case_metrics = [](const CaseRecord& rec) {
    Vector v;
    for (std::size_t f = 0; f < kSeriesFeatures; ++f)
      v.push_back(series_cumulative(rec, kHorizonDays, f));
    v.push_back(rec.statics.age);
    v.push_back(rec.statics.is_female ? 100.0 : 0.0);
    v.push_back(rec.statics.target_amount);
    v.push_back(rec.statics.content_length);
    v.push_back(rec.statics.title_length);
    v.push_back(100.0 * rec.total_donations / rec.statics.target_amount);
    return v;
  };

  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const Vector v = case_metrics(corpus[i]);
    const std::size_t c = static_cast<std::size_t>(assignment.case_labels[i]);
    ++profile.cluster_sizes[c];
    for (std::size_t mrow = 0; mrow < n_metrics; ++mrow) {
      profile.values.at(mrow, 0) += v[mrow];
      profile.values.at(mrow, 1 + c) += v[mrow];
    }
  }
  for (std::size_t mrow = 0; mrow < n_metrics; ++mrow)
    profile.values.at(mrow, 0) /= static_cast<double>(corpus.size());
  for (std::size_t c = 0; c < n_clusters; ++c) {
    if (profile.cluster_sizes[c] == 0) {
      profile.empty_clusters.push_back(c);
      continue;
    }
    for (std::size_t mrow = 0; mrow < n_metrics; ++mrow)
      profile.values.at(mrow, 1 + c) /= static_cast<double>(profile.cluster_sizes[c]);
  }
  return profile;
}

namespace {

void zscore_in_place(Matrix& values) {
  double mean = 0.0, m2 = 0.0, count = 0.0;
  for (double v : values.data) {
    count += 1.0;
    const double delta = v - mean;
    mean += delta / count;
    m2 += delta * (v - mean);
  }
  const double sd = std::sqrt(std::max(m2 / std::max(count, 1.0), 0.0));
  const double scale = sd > 1e-12 ? 1.0 / sd : 1.0;
  for (double& v : values.data) v = (v - mean) * scale;
}

}  // namespace

TwoStepResult run_two_step_clustering(const Corpus& corpus, std::size_t k_lo,
                                      std::size_t k_hi, std::size_t K_lo,
                                      std::size_t K_hi, Rng& rng,
                                      std::size_t subsample_limit,
                                      bool zscore_features) {
  if (corpus.size() < std::max(k_hi + 1, K_hi))
    throw DegenerateError("run_two_step_clustering: corpus of " +
                          std::to_string(corpus.size()) +
                          " cases is too small for the requested ranges");
  TwoStepResult result;
  result.assignment.feature_labels.assign(corpus.size(), {});
  for (std::size_t f = 0; f < kSeriesFeatures; ++f) {
    FeatureSeriesMatrix m = feature_series_matrix(corpus, f);
    if (zscore_features) zscore_in_place(m.values);
    Rng feature_rng = rng.split(0xfea7 + f);
    result.per_feature[f] =
        silhouette_select_k(m, k_lo, k_hi, feature_rng, subsample_limit);
    result.assignment.feature_k[f] = result.per_feature[f].k;
    result.assignment.feature_centers[f] = result.per_feature[f].best.centers;
    for (std::size_t i = 0; i < corpus.size(); ++i)
      result.assignment.feature_labels[i][f] = result.per_feature[f].best.labels[i];
  }
  std::vector<std::vector<int>> rows(corpus.size(),
                                     std::vector<int>(kSeriesFeatures, 0));
  for (std::size_t i = 0; i < corpus.size(); ++i)
    for (std::size_t f = 0; f < kSeriesFeatures; ++f)
      rows[i][f] = result.assignment.feature_labels[i][f];
  result.elbow = elbow_select_K(rows, K_lo, K_hi);
  KmodesResult km = kmodes_cases(rows, result.elbow.K);
  result.assignment.case_labels = km.labels;
  result.assignment.case_centers = km.centers;
  result.profile = profile_clusters(result.assignment, corpus);
  return result;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::ofstream open_csv(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << std::setprecision(12);
  return out;
}

}  // namespace

void write_centers_csv(const TwoStepResult& result, const std::string& path) {
  auto out = open_csv(path);
  out << "feature,cluster,day,value\n";
  for (std::size_t f = 0; f < kSeriesFeatures; ++f) {
    const Matrix& centers = result.assignment.feature_centers[f];
    for (std::size_t c = 0; c < centers.rows; ++c)
      for (std::size_t t = 0; t < centers.cols; ++t)
        out << kSeriesFeatureNames[f] << ',' << c << ',' << (t + 1) << ','
            << centers.at(c, t) << '\n';
  }
}

void write_assignments_csv(const Corpus& corpus, const ClusterAssignment& assignment,
                           const std::string& path) {
  auto out = open_csv(path);
  out << "case_id";
  for (std::size_t f = 1; f <= kSeriesFeatures; ++f) out << ",L" << f;
  out << ",case_cluster\n";
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    out << corpus[i].case_id;
    for (std::size_t f = 0; f < kSeriesFeatures; ++f)
      out << ',' << assignment.feature_labels[i][f];
    out << ',' << assignment.case_labels[i] << '\n';
  }
}

void write_profile_csv(const ClusterProfile& profile, const std::string& path) {
  auto out = open_csv(path);
  out << "metric,all";
  for (std::size_t c = 0; c + 1 < profile.values.cols; ++c) out << ",cluster" << c;
  out << '\n';
  out << "cases," << [&] {
    std::size_t total = 0;
    for (std::size_t s : profile.cluster_sizes) total += s;
    return total;
  }();
  for (std::size_t s : profile.cluster_sizes) out << ',' << s;
  out << '\n';
  for (std::size_t mrow = 0; mrow < profile.metrics.size(); ++mrow) {
    out << profile.metrics[mrow];
    for (std::size_t c = 0; c < profile.values.cols; ++c)
      out << ',' << profile.values.at(mrow, c);
    out << '\n';
  }
}

void write_elbow_csv(const ElbowSelection& elbow, const std::string& path) {
  auto out = open_csv(path);
  out << "K,cost,chosen\n";
  for (const auto& [K, cost] : elbow.costs)
    out << K << ',' << cost << ',' << (K == elbow.K ? 1 : 0) << '\n';
}

}  // namespace fundcast

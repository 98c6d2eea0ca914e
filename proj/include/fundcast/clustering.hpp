#pragma once

#include <array>
#include <string>
#include <vector>

#include "fundcast/data.hpp"

namespace fundcast {

/// One time-series feature across all cases: rows are cases, 42 daily values
/// per row (shorter series zero-padded).
struct FeatureSeriesMatrix {
  std::size_t feature_index = 0;  // 0..7
  Matrix values;
};

FeatureSeriesMatrix feature_series_matrix(const Corpus& corpus, std::size_t feature);

struct KmeansResult {
  std::vector<int> labels;
  Matrix centers;  // k x 42
  double inertia = 0.0;
  std::size_t iterations = 0;
  std::vector<double> inertia_trace;  // after each assignment pass; non-increasing
};

/// Lloyd's algorithm with k-means++ seeding, best of 10 restarts by inertia;
/// converges when assignments are stable or after 300 iterations.
KmeansResult kmeans_series(const FeatureSeriesMatrix& m, std::size_t k, Rng& rng);

struct SilhouetteSelection {
  std::size_t k = 0;
  KmeansResult best;
  std::vector<std::pair<std::size_t, double>> scores;  // (k, mean silhouette)
  bool low_separation = false;  // best silhouette under 0.25
};

/// Runs kmeans_series for each k in [k_lo, k_hi] and keeps the k with the
/// highest mean silhouette; silhouettes on corpora larger than
/// subsample_limit are estimated on a seeded uniform subsample.
SilhouetteSelection silhouette_select_k(const FeatureSeriesMatrix& m, std::size_t k_lo,
                                        std::size_t k_hi, Rng& rng,
                                        std::size_t subsample_limit = 2000);

/// Mean silhouette coefficient (a/b formulation) of a labeled points matrix.
double mean_silhouette(const Matrix& points, const std::vector<int>& labels,
                       std::size_t k);

struct KmodesResult {
  std::vector<int> labels;
  std::vector<std::vector<int>> centers;  // K modal label vectors
  double cost = 0.0;                      // total Hamming mismatches
  std::size_t iterations = 0;
  std::vector<double> cost_trace;  // after each assignment pass; non-increasing
};

/// K-modes over categorical label rows: Hamming dissimilarity, per-column
/// modal center updates, Cao-style density initialization (deterministic, so
/// no rng is needed).
KmodesResult kmodes_cases(const std::vector<std::vector<int>>& rows, std::size_t K);

double kmodes_cost(const std::vector<std::vector<int>>& rows,
                   const KmodesResult& result);

struct ElbowSelection {
  std::size_t K = 0;
  std::vector<std::pair<std::size_t, double>> costs;  // full curve, always emitted
  bool no_elbow = false;
};

/// Chooses K maximizing the discrete curvature (second difference) of the
/// k-modes cost curve over [K_lo, K_hi]; a flat curvature falls back to the
/// smallest K with a warning flag.
ElbowSelection elbow_select_K(const std::vector<std::vector<int>>& rows,
                              std::size_t K_lo, std::size_t K_hi);

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b);

struct ClusterAssignment {
  std::vector<std::array<int, kSeriesFeatures>> feature_labels;  // per case
  std::vector<int> case_labels;                                  // per case
  std::array<std::size_t, kSeriesFeatures> feature_k{};
  std::array<Matrix, kSeriesFeatures> feature_centers;
  std::vector<std::vector<int>> case_centers;
};

struct ClusterProfile {
  std::vector<std::string> metrics;        // row names
  std::vector<std::size_t> cluster_sizes;  // per cluster
  Matrix values;                           // metrics x (1 + n_clusters); col 0 = all
  std::vector<std::size_t> empty_clusters;
};

/// Table of per-cluster means: summed time-series features, age, share of
/// female patients, target amount, content/title length and fulfillment.
ClusterProfile profile_clusters(const ClusterAssignment& assignment, const Corpus& corpus);

struct TwoStepResult {
  ClusterAssignment assignment;
  std::array<SilhouetteSelection, kSeriesFeatures> per_feature;
  ElbowSelection elbow;
  ClusterProfile profile;
};

/// Full pipeline: per-feature k-means with silhouette-selected k, then
/// k-modes over the 8 label columns with elbow-selected K, then profiling.
/// Series are clustered on raw daily values (centers stay in RMB/counts);
/// zscore_features enables per-feature standardization for experimentation.
TwoStepResult run_two_step_clustering(const Corpus& corpus, std::size_t k_lo,
                                      std::size_t k_hi, std::size_t K_lo,
                                      std::size_t K_hi, Rng& rng,
                                      std::size_t subsample_limit = 2000,
                                      bool zscore_features = false);

void write_centers_csv(const TwoStepResult& result, const std::string& path);
void write_assignments_csv(const Corpus& corpus, const ClusterAssignment& assignment,
                           const std::string& path);
void write_profile_csv(const ClusterProfile& profile, const std::string& path);
void write_elbow_csv(const ElbowSelection& elbow, const std::string& path);

}  // namespace fundcast

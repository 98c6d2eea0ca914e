#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "fundcast/data.hpp"

namespace fundcast {

/// Per-day predictions of case totals joined to the true totals. At most one
/// entry per (case, day); days in 1..41.
struct PredictionLog {
  struct Entry {
    std::string case_id;
    int day = 0;
    double prediction = 0.0;
  };

  std::vector<Entry> entries;
  std::map<std::string, double> truths;
  std::set<std::pair<std::string, int>> keys;  // duplicate guard

  void add_prediction(const std::string& case_id, int day, double prediction);
  void set_truth(const std::string& case_id, double total);
  double truth_of(const std::string& case_id) const;
};

/// MAE over cases with an entry at each day; days without entries omitted.
std::map<int, double> mae_by_day(const PredictionLog& log);

/// |y - yhat| / y; cases with y <= 0 are excluded from percentage-error
/// metrics (nullopt), not an error.
std::optional<double> abs_pct_error(double y, double yhat);

/// Fraction of deltas at or below the threshold.
double empirical_confidence(const std::vector<double>& deltas, double epsilon);

struct TimelinessCurve {
  double confidence = 0.0;
  std::map<int, double> epsilon_by_day;
  std::vector<int> skipped_days;     // days with no valid case
  std::size_t excluded_cases = 0;    // y <= 0 exclusions across all days
};

/// Smallest in-sample percentage error achievable with the given confidence,
/// per day: the ceil(c*n)-th order statistic of the day's deltas.
TimelinessCurve timeliness_epsilon(const PredictionLog& log, double confidence);

struct NaturalWait {
  int day = 0;
  bool capped = false;  // hit the 42-day horizon
};

/// Smallest day by which a fraction >= c of cases have accumulated at least
/// (1-gamma) of their final donation total; capped at the 42-day horizon.
NaturalWait natural_wait(const Corpus& cases, double gamma, double confidence);

struct SavedDaysCell {
  double gamma = 0.0;
  double confidence = 0.0;
  int natural = 0;
  bool natural_capped = false;
  std::optional<int> model_day;  // first day with epsilon <= gamma; nullopt if never
  std::optional<int> saved;      // natural - model_day
};

std::vector<SavedDaysCell> saved_days_report(const PredictionLog& log,
                                             const Corpus& corpus,
                                             const std::vector<double>& gamma_grid,
                                             const std::vector<double>& confidence_grid);

// ---------------------------------------------------------------------------
// CSV emitters (fixed column sets; one file per metric, and per-model files
// where the column set has no model tag)

void write_mae_csv(const std::vector<std::pair<std::string, const PredictionLog*>>& logs,
                   const std::string& path);
void write_timeliness_csv(const std::vector<TimelinessCurve>& curves,
                          const std::string& path);
void write_saved_days_csv(const std::vector<SavedDaysCell>& cells,
                          const std::string& path);

}  // namespace fundcast

#include "fundcast/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>

namespace fundcast {

void PredictionLog::add_prediction(const std::string& case_id, int day,
                                   double prediction) {
  if (day < 1 || day > kPredictionDays)
    throw UsageError("PredictionLog: day " + std::to_string(day) + " outside 1.." +
                     std::to_string(kPredictionDays));
  if (!keys.emplace(case_id, day).second)
    throw UsageError("PredictionLog: duplicate entry for case " + case_id + " day " +
                     std::to_string(day));
  entries.push_back({case_id, day, prediction});
}

void PredictionLog::set_truth(const std::string& case_id, double total) {
  truths[case_id] = total;
}

double PredictionLog::truth_of(const std::string& case_id) const {
  auto it = truths.find(case_id);
  if (it == truths.end())
    throw UsageError("PredictionLog: no true total recorded for case " + case_id);
  return it->second;
}

std::map<int, double> mae_by_day(const PredictionLog& log) {
  std::map<int, std::pair<double, std::size_t>> acc;
  for (const auto& e : log.entries) {
    auto& [sum, n] = acc[e.day];
    sum += std::abs(log.truth_of(e.case_id) - e.prediction);
    ++n;
  }
  std::map<int, double> out;
  for (const auto& [day, sn] : acc) out[day] = sn.first / static_cast<double>(sn.second);
  return out;
}

std::optional<double> abs_pct_error(double y, double yhat) {
  if (y <= 0.0) return std::nullopt;
  return std::abs(y - yhat) / y;
}

double empirical_confidence(const std::vector<double>& deltas, double epsilon) {
  if (deltas.empty()) throw UsageError("empirical_confidence: empty delta set");
  std::size_t hits = 0;
  for (double d : deltas)
    if (d <= epsilon) ++hits;
  return static_cast<double>(hits) / static_cast<double>(deltas.size());
}

TimelinessCurve timeliness_epsilon(const PredictionLog& log, double confidence) {
  if (confidence <= 0.0 || confidence >= 1.0)
    throw UsageError("timeliness_epsilon: confidence must be in (0,1)");
  TimelinessCurve curve;
  curve.confidence = confidence;
  std::map<int, std::vector<double>> deltas_by_day;
  std::set<int> days_seen;
  for (const auto& e : log.entries) {
    days_seen.insert(e.day);
    const auto delta = abs_pct_error(log.truth_of(e.case_id), e.prediction);
    if (!delta) {
      ++curve.excluded_cases;
      continue;
    }
    deltas_by_day[e.day].push_back(*delta);
  }
  for (int day : days_seen) {
    auto it = deltas_by_day.find(day);
    if (it == deltas_by_day.end()) {
      curve.skipped_days.push_back(day);
      continue;
    }
    auto& deltas = it->second;
    std::sort(deltas.begin(), deltas.end());
    const std::size_t n = deltas.size();
    // smallest observed delta whose empirical confidence reaches c:
    // the ceil(c*n)-th order statistic
    const std::size_t rank = static_cast<std::size_t>(
        std::ceil(confidence * static_cast<double>(n)));
    curve.epsilon_by_day[day] = deltas[std::max<std::size_t>(rank, 1) - 1];
  }
  return curve;
}

NaturalWait natural_wait(const Corpus& cases, double gamma, double confidence) {
  if (gamma <= 0.0 || gamma >= 1.0)
    throw UsageError("natural_wait: gamma must be in (0,1)");
  if (confidence <= 0.0 || confidence >= 1.0)
    throw UsageError("natural_wait: confidence must be in (0,1)");
  std::vector<const CaseRecord*> qualifying;
  for (const auto& rec : cases)
    if (rec.total_donations > 0.0) qualifying.push_back(&rec);
  if (qualifying.empty())
    throw UsageError("natural_wait: no cases with positive totals");
  const double n = static_cast<double>(qualifying.size());
  for (int day = 1; day <= kHorizonDays; ++day) {
    std::size_t reached = 0;
    for (const CaseRecord* rec : qualifying) {
      const double cum = series_cumulative(*rec, day, 0);
      if (cum / rec->total_donations >= 1.0 - gamma) ++reached;
    }
    if (static_cast<double>(reached) / n >= confidence)
      return {day, day == kHorizonDays};
  }
  return {kHorizonDays, true};  // cumulative sums always reach the total by day 42
}

std::vector<SavedDaysCell> saved_days_report(const PredictionLog& log,
                                             const Corpus& corpus,
                                             const std::vector<double>& gamma_grid,
                                             const std::vector<double>& confidence_grid) {
  if (gamma_grid.empty() || confidence_grid.empty())
    throw UsageError("saved_days_report: empty grid");
  std::vector<SavedDaysCell> cells;
  for (double c : confidence_grid) {
    const TimelinessCurve curve = timeliness_epsilon(log, c);
    for (double gamma : gamma_grid) {
      SavedDaysCell cell;
      cell.gamma = gamma;
      cell.confidence = c;
      const NaturalWait nat = natural_wait(corpus, gamma, c);
      cell.natural = nat.day;
      cell.natural_capped = nat.capped;
      for (const auto& [day, eps] : curve.epsilon_by_day) {
        if (eps <= gamma) {
          cell.model_day = day;
          break;
        }
      }
      if (cell.model_day) cell.saved = cell.natural - *cell.model_day;
      cells.push_back(cell);
    }
  }
  return cells;
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

void write_mae_csv(const std::vector<std::pair<std::string, const PredictionLog*>>& logs,
                   const std::string& path) {
  auto out = open_csv(path);
  out << "day,model,mae\n";
  for (const auto& [name, log] : logs)
    for (const auto& [day, mae] : mae_by_day(*log))
      out << day << ',' << name << ',' << mae << '\n';
}

void write_timeliness_csv(const std::vector<TimelinessCurve>& curves,
                          const std::string& path) {
  auto out = open_csv(path);
  out << "day,confidence,epsilon\n";
  for (const auto& curve : curves)
    for (const auto& [day, eps] : curve.epsilon_by_day)
      out << day << ',' << curve.confidence << ',' << eps << '\n';
}

void write_saved_days_csv(const std::vector<SavedDaysCell>& cells,
                          const std::string& path) {
  auto out = open_csv(path);
  out << "gamma,confidence,natural,model,saved\n";
  for (const auto& cell : cells) {
    out << cell.gamma << ',' << cell.confidence << ',' << cell.natural << ',';
    if (cell.model_day)
      out << *cell.model_day;
    else
      out << "not_reached";
    out << ',';
    if (cell.saved)
      out << *cell.saved;
    else
      out << "";
    out << '\n';
  }
}

}  // namespace fundcast

#pragma once

#include <cstddef>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace ltcnn {

// Rows are the true class, columns the predicted class.
struct ConfusionMatrix {
  std::vector<std::string> class_names;
  std::vector<std::vector<std::size_t>> counts;

  std::size_t total() const {
    std::size_t n = 0;
    for (const auto& row : counts)
      for (std::size_t v : row) n += v;
    return n;
  }
};

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct EvalReport {
  std::vector<ClassMetrics> per_class;
  double accuracy = 0.0;
  ClassMetrics macro_avg;     // unweighted class mean (support = total)
  ClassMetrics weighted_avg;  // support-weighted mean (support = total)
  ConfusionMatrix confusion;
  bool zero_division_hit = false;  // some precision/recall had a 0 denominator
};

inline EvalReport metrics_from_confusion(const ConfusionMatrix& cm);

// Per-class precision/recall/F1 from a label pairing. A zero denominator
// yields 0 for that metric (flagged in the report rather than skipped).
inline EvalReport compute_metrics(const std::vector<std::size_t>& true_labels,
                                  const std::vector<std::size_t>& pred_labels,
                                  std::size_t n_classes,
                                  std::vector<std::string> class_names = {}) {
  if (true_labels.size() != pred_labels.size())
    throw std::invalid_argument("compute_metrics: label vectors differ in length");
  if (true_labels.empty())
    throw std::invalid_argument("compute_metrics: no samples");
  EvalReport r;
  if (class_names.empty())
    for (std::size_t c = 0; c < n_classes; ++c)
      class_names.push_back("class" + std::to_string(c));
  r.confusion.class_names = class_names;
  r.confusion.counts.assign(n_classes, std::vector<std::size_t>(n_classes, 0));
  for (std::size_t i = 0; i < true_labels.size(); ++i) {
    if (true_labels[i] >= n_classes || pred_labels[i] >= n_classes)
      throw std::invalid_argument("compute_metrics: label out of range at sample " +
                                  std::to_string(i));
    r.confusion.counts[true_labels[i]][pred_labels[i]]++;
  }
  return metrics_from_confusion(r.confusion);
}

inline EvalReport metrics_from_confusion(const ConfusionMatrix& cm) {
  const std::size_t n = cm.counts.size();
  EvalReport r;
  r.confusion = cm;
  const std::size_t total = cm.total();
  if (total == 0) throw std::invalid_argument("metrics: empty confusion matrix");

  std::size_t correct = 0;
  for (std::size_t c = 0; c < n; ++c) correct += cm.counts[c][c];
  r.accuracy = static_cast<double>(correct) / static_cast<double>(total);

  r.per_class.resize(n);
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t tp = cm.counts[c][c], row = 0, col = 0;
    for (std::size_t k = 0; k < n; ++k) {
      row += cm.counts[c][k];  // tp + fn
      col += cm.counts[k][c];  // tp + fp
    }
    ClassMetrics& m = r.per_class[c];
    m.support = row;
    if (col == 0 || row == 0) r.zero_division_hit = true;
    m.precision = col ? static_cast<double>(tp) / static_cast<double>(col) : 0.0;
    m.recall = row ? static_cast<double>(tp) / static_cast<double>(row) : 0.0;
    m.f1 = (m.precision + m.recall) > 0.0
               ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
               : 0.0;
  }

  for (std::size_t c = 0; c < n; ++c) {
    const ClassMetrics& m = r.per_class[c];
    r.macro_avg.precision += m.precision / static_cast<double>(n);
    r.macro_avg.recall += m.recall / static_cast<double>(n);
    r.macro_avg.f1 += m.f1 / static_cast<double>(n);
    const double w = static_cast<double>(m.support) / static_cast<double>(total);
    r.weighted_avg.precision += m.precision * w;
    r.weighted_avg.recall += m.recall * w;
    r.weighted_avg.f1 += m.f1 * w;
  }
  r.macro_avg.support = total;
  r.weighted_avg.support = total;
  return r;
}

namespace detail {
inline std::string fixed(double v, int decimals) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(decimals) << v;
  return os.str();
}
}  // namespace detail

// JSON mirror of the report, floats at 4 decimals.
inline nlohmann::json report_to_json(const EvalReport& r) {
  auto round4 = [](double v) {
    return std::stod(detail::fixed(v, 4));
  };
  nlohmann::json per_class = nlohmann::json::object();
  for (std::size_t c = 0; c < r.per_class.size(); ++c) {
    const ClassMetrics& m = r.per_class[c];
    per_class[r.confusion.class_names[c]] = {{"precision", round4(m.precision)},
                                             {"recall", round4(m.recall)},
                                             {"f1", round4(m.f1)},
                                             {"support", m.support}};
  }
  auto avg = [&](const ClassMetrics& m) {
    return nlohmann::json{{"precision", round4(m.precision)},
                          {"recall", round4(m.recall)},
                          {"f1", round4(m.f1)},
                          {"support", m.support}};
  };
  return {{"per_class", per_class},
          {"accuracy", round4(r.accuracy)},
          {"macro_avg", avg(r.macro_avg)},
          {"weighted_avg", avg(r.weighted_avg)},
          {"zero_division_hit", r.zero_division_hit},
          {"confusion",
           {{"class_names", r.confusion.class_names},
            {"counts", r.confusion.counts}}}};
}

// CSV in the classification-report layout: one row per class, then
// Accuracy / Macro Avg / Weighted Avg, floats at 2 decimals.
inline std::string report_to_csv(const EvalReport& r) {
  std::ostringstream os;
  os << "class,precision,recall,f1-score,support\n";
  for (std::size_t c = 0; c < r.per_class.size(); ++c) {
    const ClassMetrics& m = r.per_class[c];
    os << r.confusion.class_names[c] << "," << detail::fixed(m.precision, 2)
       << "," << detail::fixed(m.recall, 2) << "," << detail::fixed(m.f1, 2)
       << "," << m.support << "\n";
  }
  os << "Accuracy,,," << detail::fixed(r.accuracy, 3) << ","
     << r.macro_avg.support << "\n";
  os << "Macro Avg," << detail::fixed(r.macro_avg.precision, 2) << ","
     << detail::fixed(r.macro_avg.recall, 2) << ","
     << detail::fixed(r.macro_avg.f1, 2) << "," << r.macro_avg.support << "\n";
  os << "Weighted Avg," << detail::fixed(r.weighted_avg.precision, 2) << ","
     << detail::fixed(r.weighted_avg.recall, 2) << ","
     << detail::fixed(r.weighted_avg.f1, 2) << "," << r.weighted_avg.support
     << "\n";
  return os.str();
}

inline std::string confusion_to_csv(const ConfusionMatrix& cm) {
  std::ostringstream os;
  os << "true\\pred";
  for (const auto& name : cm.class_names) os << "," << name;
  os << "\n";
  for (std::size_t i = 0; i < cm.counts.size(); ++i) {
    os << cm.class_names[i];
    for (std::size_t v : cm.counts[i]) os << "," << v;
    os << "\n";
  }
  return os.str();
}

inline void write_report(const EvalReport& r, const std::string& path_json,
                         const std::string& path_csv) {
  std::ofstream fj(path_json);
  if (!fj) throw std::runtime_error("write_report: cannot open " + path_json);
  fj << report_to_json(r).dump(2) << "\n";
  std::ofstream fc(path_csv);
  if (!fc) throw std::runtime_error("write_report: cannot open " + path_csv);
  fc << report_to_csv(r);
}

}  // namespace ltcnn

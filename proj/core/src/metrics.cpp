#include "lsnet/metrics.hpp"

#include "lsnet/report.hpp"

namespace lsnet {

ConfusionCounts& ConfusionCounts::merge(const ConfusionCounts& other) {
  tp += other.tp;
  fp += other.fp;
  fn += other.fn;
  tn += other.tn;
  return *this;
}

ConfusionCounts confusion(const Tensor& pred, const Tensor& gt, float threshold) {
  if (!pred.same_shape(gt)) {
    throw ShapeError("confusion: prediction shape " + pred.shape().str() +
                     " does not match ground truth " + gt.shape().str());
  }
  ConfusionCounts c;
  auto p = pred.data();
  auto g = gt.data();
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (g[i] != 0.0f && g[i] != 1.0f) {
      throw ValueError("confusion: ground truth contains non-binary value " +
                       std::to_string(g[i]));
    }
    const bool positive = p[i] >= threshold;
    const bool actual = g[i] == 1.0f;
    if (positive && actual) {
      ++c.tp;
    } else if (positive && !actual) {
      ++c.fp;
    } else if (!positive && actual) {
      ++c.fn;
    } else {
      ++c.tn;
    }
  }
  return c;
}

MetricsReport prf1_oa(const ConfusionCounts& c) {
  if (c.total() == 0) {
    throw ValueError("prf1_oa: empty confusion counts");
  }
  MetricsReport r;
  const double tp = static_cast<double>(c.tp);
  if (c.tp + c.fp > 0) {
    r.precision = 100.0 * tp / static_cast<double>(c.tp + c.fp);
  } else {
    r.precision_degenerate = true;
  }
  if (c.tp + c.fn > 0) {
    r.recall = 100.0 * tp / static_cast<double>(c.tp + c.fn);
  } else {
    r.recall_degenerate = true;
  }
  if (r.precision + r.recall > 0.0 && !r.precision_degenerate && !r.recall_degenerate) {
    r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
  } else {
    r.f1_degenerate = true;
  }
  r.oa = 100.0 * static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
  return r;
}

MetricsReport average_reports(const std::vector<MetricsReport>& reports) {
  if (reports.empty()) throw ValueError("average_reports: no reports");
  MetricsReport mean;
  for (const auto& r : reports) {
    mean.precision += r.precision;
    mean.recall += r.recall;
    mean.f1 += r.f1;
    mean.oa += r.oa;
    mean.precision_degenerate |= r.precision_degenerate;
    mean.recall_degenerate |= r.recall_degenerate;
    mean.f1_degenerate |= r.f1_degenerate;
  }
  const double n = static_cast<double>(reports.size());
  mean.precision /= n;
  mean.recall /= n;
  mean.f1 /= n;
  mean.oa /= n;
  return mean;
}

Tensor binarize(const Tensor& scores, float threshold) {
  Tensor out(scores.shape());
  auto s = scores.data();
  auto o = out.data();
  for (std::size_t i = 0; i < s.size(); ++i) o[i] = s[i] >= threshold ? 1.0f : 0.0f;
  return out;
}

std::string MetricsReport::to_table() const {
  TextTable t({"metric", "value"});
  auto cell = [](double v, bool degenerate) {
    return degenerate ? format_float(v, 2) + " (degenerate)" : format_float(v, 2);
  };
  t.add_row({"precision", cell(precision, precision_degenerate)});
  t.add_row({"recall", cell(recall, recall_degenerate)});
  t.add_row({"f1", cell(f1, f1_degenerate)});
  t.add_row({"oa", format_float(oa, 2)});
  return t.str();
}

std::string MetricsReport::to_kv() const {
  KvWriter kv("metrics");
  kv.add({"precision", format_float(precision, 4), precision_degenerate ? "degenerate" : "ok"});
  kv.add({"recall", format_float(recall, 4), recall_degenerate ? "degenerate" : "ok"});
  kv.add({"f1", format_float(f1, 4), f1_degenerate ? "degenerate" : "ok"});
  kv.add({"oa", format_float(oa, 4), "ok"});
  return kv.str();
}

}  // namespace lsnet

#include "duocast/metrics.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace duocast {

namespace {

void check_pair(const Field& a, const Field& b, const char* what) {
  require(a.same_shape(b), std::string(what) + ": prediction and truth differ in shape");
}

std::vector<double> gaussian_window(int k, double sigma) {
  std::vector<double> g(static_cast<std::size_t>(k) * k);
  const int r = k / 2;
  double s = 0.0;
  for (int y = 0; y < k; ++y)
    for (int x = 0; x < k; ++x) {
      const double v = std::exp(-((y - r) * (y - r) + (x - r) * (x - r)) / (2.0 * sigma * sigma));
      g[static_cast<std::size_t>(y) * k + x] = v;
      s += v;
    }
  for (double& v : g) v /= s;
  return g;
}

}  // namespace

ConfusionCounts confusion(const Field& pred, const Field& truth, double tau) {
  check_pair(pred, truth, "confusion");
  ConfusionCounts c;
  const auto p = pred.values();
  const auto t = truth.values();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const bool fp = p[i] >= tau, ft = t[i] >= tau;
    if (fp && ft) ++c.hits;
    else if (!fp && ft) ++c.misses;
    else if (fp && !ft) ++c.false_alarms;
    else ++c.correct_negatives;
  }
  return c;
}

ConfusionCounts confusion(const SequenceField& pred, const SequenceField& truth, double tau) {
  require(pred.same_shape(truth), "confusion: prediction and truth differ in shape");
  ConfusionCounts c;
  for (int i = 0; i < pred.length(); ++i) c += confusion(pred[i], truth[i], tau);
  return c;
}

double csi(const ConfusionCounts& c) {
  const std::int64_t den = c.hits + c.misses + c.false_alarms;
  return den == 0 ? 1.0 : static_cast<double>(c.hits) / static_cast<double>(den);
}

double hss(const ConfusionCounts& c) {
  const double tp = static_cast<double>(c.hits), fn = static_cast<double>(c.misses);
  const double fp = static_cast<double>(c.false_alarms), tn = static_cast<double>(c.correct_negatives);
  const double den = (tp + fn) * (fn + tn) + (tp + fp) * (fp + tn);
  return den == 0.0 ? 0.0 : 2.0 * (tp * tn - fn * fp) / den;
}

double csi_m(const SequenceField& pred, const SequenceField& truth, const std::vector<double>& thresholds) {
  require(!thresholds.empty(), "csi_m: threshold list is empty");
  double s = 0.0;
  for (double tau : thresholds) s += csi(confusion(pred, truth, tau));
  return s / static_cast<double>(thresholds.size());
}

double csi_m(const Field& pred, const Field& truth, const std::vector<double>& thresholds) {
  return csi_m(SequenceField({pred}), SequenceField({truth}), thresholds);
}

double ssim(const Field& pred, const Field& truth) {
  check_pair(pred, truth, "ssim");
  int k = std::min({11, pred.height(), pred.width()});
  if (k % 2 == 0) --k;
  const std::vector<double> g = gaussian_window(k, 1.5);
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const int h = pred.height(), w = pred.width();
  double total = 0.0;
  std::int64_t windows = 0;
  for (int c = 0; c < pred.channels(); ++c)
    for (int y0 = 0; y0 + k <= h; ++y0)
      for (int x0 = 0; x0 + k <= w; ++x0) {
        double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
        for (int dy = 0; dy < k; ++dy)
          for (int dx = 0; dx < k; ++dx) {
            const double wt = g[static_cast<std::size_t>(dy) * k + dx];
            const double a = pred(c, y0 + dy, x0 + dx), b = truth(c, y0 + dy, x0 + dx);
            mx += wt * a;
            my += wt * b;
            sxx += wt * a * a;
            syy += wt * b * b;
            sxy += wt * a * b;
          }
        const double vx = sxx - mx * mx, vy = syy - my * my, cxy = sxy - mx * my;
        total += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        ++windows;
      }
  return total / static_cast<double>(windows);
}

double ssim(const SequenceField& pred, const SequenceField& truth) {
  require(pred.same_shape(truth), "ssim: prediction and truth differ in shape");
  double s = 0.0;
  for (int i = 0; i < pred.length(); ++i) s += ssim(pred[i], truth[i]);
  return s / pred.length();
}

double mse(const Field& pred, const Field& truth) {
  check_pair(pred, truth, "mse");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred.values()[i] - truth.values()[i];
    s += d * d;
  }
  return s / static_cast<double>(pred.size());
}

double mse(const SequenceField& pred, const SequenceField& truth) {
  require(pred.same_shape(truth), "mse: prediction and truth differ in shape");
  double s = 0.0;
  for (int i = 0; i < pred.length(); ++i) s += mse(pred[i], truth[i]);
  return s / pred.length();
}

std::vector<double> default_thresholds() { return {0.125, 0.25, 0.375, 0.5, 0.71, 0.86}; }

std::vector<MetricRow> event_metrics(int event_id, const SequenceField& pred, const SequenceField& truth,
                                     const std::vector<double>& thresholds) {
  require(pred.same_shape(truth), "event_metrics: prediction and truth differ in shape");
  require(!thresholds.empty(), "event_metrics: threshold list is empty");
  const double none = std::numeric_limits<double>::quiet_NaN();
  std::vector<MetricRow> rows;
  for (int lead = 0; lead < pred.length(); ++lead) {
    const Field& p = pred[lead];
    const Field& t = truth[lead];
    double sum_csi = 0.0;
    for (double tau : thresholds) {
      const ConfusionCounts c = confusion(p, t, tau);
      rows.push_back({event_id, lead + 1, "csi", tau, csi(c)});
      rows.push_back({event_id, lead + 1, "hss", tau, hss(c)});
      sum_csi += csi(c);
    }
    rows.push_back({event_id, lead + 1, "csi_m", none, sum_csi / static_cast<double>(thresholds.size())});
    rows.push_back({event_id, lead + 1, "ssim", none, ssim(p, t)});
    rows.push_back({event_id, lead + 1, "mse", none, mse(p, t)});
  }
  return rows;
}

MetricAccumulator::MetricAccumulator(std::vector<double> thresholds, int lead_times)
    : thresholds_(std::move(thresholds)),
      lead_times_(lead_times),
      pooled_(thresholds_.size()),
      per_lead_(static_cast<std::size_t>(lead_times), std::vector<ConfusionCounts>(thresholds_.size())) {
  require(!thresholds_.empty(), "metric accumulator needs thresholds");
  require(lead_times >= 1, "metric accumulator needs at least one lead time");
}

void MetricAccumulator::add(const SequenceField& pred, const SequenceField& truth) {
  require(pred.same_shape(truth), "metric accumulator: prediction and truth differ in shape");
  require(pred.length() == lead_times_, "metric accumulator: expected " + std::to_string(lead_times_) + " lead times");
  for (int lead = 0; lead < lead_times_; ++lead) {
    for (std::size_t k = 0; k < thresholds_.size(); ++k) {
      const ConfusionCounts c = confusion(pred[lead], truth[lead], thresholds_[k]);
      pooled_[k] += c;
      per_lead_[static_cast<std::size_t>(lead)][k] += c;
    }
    ssim_sum_ += ssim(pred[lead], truth[lead]);
    mse_sum_ += mse(pred[lead], truth[lead]);
    ++frames_;
  }
  ++events_;
}

double MetricAccumulator::csi_at(std::size_t k) const { return csi(pooled_.at(k)); }
double MetricAccumulator::hss_at(std::size_t k) const { return hss(pooled_.at(k)); }

double MetricAccumulator::csi_m() const {
  double s = 0.0;
  for (std::size_t k = 0; k < thresholds_.size(); ++k) s += csi_at(k);
  return s / static_cast<double>(thresholds_.size());
}

double MetricAccumulator::csi_m_at_lead(int lead) const {
  const auto& counts = per_lead_.at(static_cast<std::size_t>(lead));
  double s = 0.0;
  for (const auto& c : counts) s += csi(c);
  return s / static_cast<double>(counts.size());
}

double MetricAccumulator::mean_ssim() const { return frames_ ? ssim_sum_ / static_cast<double>(frames_) : 0.0; }
double MetricAccumulator::mean_mse() const { return frames_ ? mse_sum_ / static_cast<double>(frames_) : 0.0; }

void write_metrics_csv(const std::string& path, const std::vector<MetricRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write metrics file '" + path + "'");
  out << "event_id,lead_time,metric,threshold,value\n";
  out << std::setprecision(9);
  for (const MetricRow& r : rows) {
    out << r.event_id << ',' << r.lead_time << ',' << r.metric << ',';
    if (!std::isnan(r.threshold)) out << r.threshold;
    out << ',' << r.value << '\n';
  }
  if (!out) throw IoError("failed writing metrics file '" + path + "'");
}

}  // namespace duocast

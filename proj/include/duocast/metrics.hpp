#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "duocast/field.hpp"

namespace duocast {

struct ConfusionCounts {
  std::int64_t hits = 0;               // TP
  std::int64_t misses = 0;             // FN
  std::int64_t false_alarms = 0;       // FP
  std::int64_t correct_negatives = 0;  // TN

  std::int64_t total() const { return hits + misses + false_alarms + correct_negatives; }
  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    hits += o.hits;
    misses += o.misses;
    false_alarms += o.false_alarms;
    correct_negatives += o.correct_negatives;
    return *this;
  }
};

// Pixels are events where value >= tau.
ConfusionCounts confusion(const Field& pred, const Field& truth, double tau);
ConfusionCounts confusion(const SequenceField& pred, const SequenceField& truth, double tau);

// TP / (TP + FN + FP); 1 when nothing was observed or forecast.
double csi(const ConfusionCounts& c);
// 2 (TP TN - FN FP) / ((TP + FN)(FN + TN) + (TP + FP)(FP + TN)); 0 on a zero denominator.
double hss(const ConfusionCounts& c);
double csi_m(const SequenceField& pred, const SequenceField& truth, const std::vector<double>& thresholds);
double csi_m(const Field& pred, const Field& truth, const std::vector<double>& thresholds);

// Mean SSIM over valid 11x11 Gaussian (sigma 1.5) windows, dynamic range 1.
// Frames smaller than 11 pixels use the largest odd window that fits.
double ssim(const Field& pred, const Field& truth);
// Mean of per-frame SSIM.
double ssim(const SequenceField& pred, const SequenceField& truth);

double mse(const Field& pred, const Field& truth);
double mse(const SequenceField& pred, const SequenceField& truth);

std::vector<double> default_thresholds();

// One CSV row: (event_id, lead_time, metric, threshold, value). Threshold-free
// metrics (csi_m, ssim, mse) carry NaN in the threshold column.
struct MetricRow {
  int event_id = 0;
  int lead_time = 0;
  std::string metric;
  double threshold = 0.0;
  double value = 0.0;
};

// Rows for every lead time of one event: csi and hss per threshold, then
// csi_m, ssim and mse.
std::vector<MetricRow> event_metrics(int event_id, const SequenceField& pred, const SequenceField& truth,
                                     const std::vector<double>& thresholds);

// Pools confusion counts over events and lead times.
class MetricAccumulator {
 public:
  MetricAccumulator(std::vector<double> thresholds, int lead_times);
  void add(const SequenceField& pred, const SequenceField& truth);

  const std::vector<double>& thresholds() const { return thresholds_; }
  int lead_times() const { return lead_times_; }
  std::int64_t events() const { return events_; }
  // CSI from counts pooled over all events and lead times.
  double csi_at(std::size_t threshold_index) const;
  double hss_at(std::size_t threshold_index) const;
  double csi_m() const;
  // Pooled CSI-M restricted to one lead time (0-based).
  double csi_m_at_lead(int lead) const;
  double mean_ssim() const;
  double mean_mse() const;

 private:
  std::vector<double> thresholds_;
  int lead_times_;
  std::vector<ConfusionCounts> pooled_;
  std::vector<std::vector<ConfusionCounts>> per_lead_;
  double ssim_sum_ = 0.0;
  double mse_sum_ = 0.0;
  std::int64_t frames_ = 0;
  std::int64_t events_ = 0;
};

void write_metrics_csv(const std::string& path, const std::vector<MetricRow>& rows);

}  // namespace duocast

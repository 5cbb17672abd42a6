#pragma once

// Pixel-level change classifiers: a threshold sweep with exact ROC/AUC and a
// linear hinge-loss SVC.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "diforge/raster.hpp"

namespace diforge {

/// One difference image with its ground-truth change mask.
struct LabeledImage {
  std::string sample_id;
  Raster di;     // 1 (scalar) or 2 (vector) channels
  Raster truth;  // one channel {0,1}
};

struct PixelDataset {
  Eigen::MatrixXd features;           // one row per pixel
  Eigen::VectorXi labels;             // {0,1}
  std::vector<std::int32_t> group;    // index into group_ids per row
  std::vector<std::string> group_ids;
  std::vector<SplitTag> group_split;  // per group

  Index rows() const { return features.rows(); }
  Index dim() const { return features.cols(); }
  std::vector<Index> rows_on(SplitTag side) const;
};

/// Train/test assignment per group id. It depends only on the ids and the
/// seed, so two datasets over the same samples always agree.
std::vector<SplitTag> group_split(const std::vector<std::string>& ids, std::uint64_t seed, double train_fraction = 0.7);

PixelDataset assemble_pixel_dataset(const std::vector<LabeledImage>& images, std::uint64_t split_seed,
                                    double train_fraction = 0.7);

/// 48-bit digest of the (group id, side) assignment.
std::uint64_t split_hash(const PixelDataset& data);
/// Throws unless both datasets cover the same groups with the same sides.
void require_same_groups(const PixelDataset& a, const PixelDataset& b);

/// Mann-Whitney AUC with half credit for ties.
double auc(std::span<const double> scores, std::span<const int> labels);

struct RocPoint {
  double threshold = 0.0;
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;  // (0,0) first, (1,1) last
  double auc = 0.0;
};

/// Sweeps the distinct scores in descending order; a pixel is flagged when
/// its score is at least the threshold.
RocCurve roc_curve(std::span<const double> scores, std::span<const int> labels);
/// Trapezoidal area under the curve.
double trapezoid_auc(const RocCurve& curve);
/// Keeps the end points and about `max_points` evenly spaced points.
RocCurve thin_roc(const RocCurve& curve, std::size_t max_points);
void write_roc_csv(const std::filesystem::path& path, const RocCurve& curve);

struct Standardizer {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd std;

  /// Reads only `rows` of `features`. Std is floored at 1e-9.
  static Standardizer fit(const Eigen::MatrixXd& features, std::span<const Index> rows);
  static Standardizer fit(const Eigen::MatrixXd& features);
  Eigen::MatrixXd apply(const Eigen::MatrixXd& features) const;
};

inline constexpr double kStandardizerFloor = 1e-9;

/// Rows with the minority class kept whole and the majority class subsampled
/// without replacement to the same count, returned in ascending order.
std::vector<Index> balance_rows(const Eigen::VectorXi& labels, std::span<const Index> rows, std::uint64_t seed);

struct SvcOptions {
  double C = 1.0;
  Index epochs = 20;
  std::uint64_t seed = 1;
};

struct LinearSvc {
  Eigen::VectorXd w;
  double b = 0.0;
  double C = 1.0;
  Standardizer scaler;

  /// Decision value on raw (unstandardized) features.
  Eigen::VectorXd decision(const Eigen::MatrixXd& raw) const;
};

/// (1/2)|w|^2 + C * sum hinge(y (w.x + b)), labels {0,1} mapped to -1/+1.
double svc_objective(const Eigen::VectorXd& w, double b, double C, const Eigen::MatrixXd& x,
                     const Eigen::VectorXi& labels);

/// Stochastic subgradient descent on already standardized features with a
/// seeded shuffle per epoch, step 1/(lambda t), lambda = 1/(C N), and the
/// average of the second half of the iterates returned.
LinearSvc svc_fit(const Eigen::MatrixXd& x, const Eigen::VectorXi& labels, const SvcOptions& options);

/// Balances the train side, standardizes with train statistics, then fits.
LinearSvc svc_train(const PixelDataset& data, const SvcOptions& options);

struct SvcScore {
  double accuracy = 0.0;
  Index rows = 0;
};

/// Accuracy on the balanced test side (same balancing rule as training).
SvcScore svc_accuracy(const LinearSvc& model, const PixelDataset& data, std::uint64_t seed);
/// Accuracy on explicit rows, without balancing.
double svc_accuracy(const LinearSvc& model, const Eigen::MatrixXd& raw, const Eigen::VectorXi& labels);

}  // namespace diforge

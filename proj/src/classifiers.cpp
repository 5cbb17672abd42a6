#include "diforge/classifiers.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "diforge/rng.hpp"
#include "diforge/text_io.hpp"

namespace diforge {

namespace {

struct ClassCounts {
  std::int64_t pos = 0;
  std::int64_t neg = 0;
};

ClassCounts count_classes(std::span<const double> scores, std::span<const int> labels) {
  require(scores.size() == labels.size(), Errc::dimension_mismatch, "scores and labels differ in length");
  ClassCounts c;
  for (int y : labels) {
    require(y == 0 || y == 1, Errc::invalid_argument, "labels must be 0 or 1");
    (y ? c.pos : c.neg) += 1;
  }
  require(c.pos > 0 && c.neg > 0, Errc::insufficient_data, "both classes must be present");
  for (double s : scores) require(std::isfinite(s), Errc::non_finite, "scores must be finite");
  return c;
}

std::vector<std::size_t> order_by_score(std::span<const double> scores, bool descending) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return descending ? scores[a] > scores[b] : scores[a] < scores[b];
  });
  return order;
}

}  // namespace

std::vector<Index> PixelDataset::rows_on(SplitTag side) const {
  std::vector<Index> out;
  for (Index r = 0; r < rows(); ++r) {
    if (group_split[static_cast<std::size_t>(group[static_cast<std::size_t>(r)])] == side) out.push_back(r);
  }
  return out;
}

std::vector<SplitTag> group_split(const std::vector<std::string>& ids, std::uint64_t seed, double train_fraction) {
  require(train_fraction > 0.0 && train_fraction < 1.0, Errc::invalid_argument, "train fraction must lie in (0, 1)");
  std::vector<std::pair<std::uint64_t, std::size_t>> keyed;
  for (std::size_t i = 0; i < ids.size(); ++i) keyed.emplace_back(fnv1a(ids[i], splitmix64(seed)), i);
  std::sort(keyed.begin(), keyed.end());
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(ids.size())));
  std::vector<SplitTag> out(ids.size(), SplitTag::test);
  for (std::size_t k = 0; k < n_train && k < keyed.size(); ++k) out[keyed[k].second] = SplitTag::train;
  return out;
}

PixelDataset assemble_pixel_dataset(const std::vector<LabeledImage>& images, std::uint64_t split_seed,
                                    double train_fraction) {
  require(!images.empty(), Errc::insufficient_data, "no images to assemble");
  const Index d = images.front().di.channels();
  Index total = 0;
  std::map<std::string, int> seen;
  for (const auto& im : images) {
    require(im.di.channels() == d, Errc::dimension_mismatch, "difference images mix scalar and vector forms");
    require(im.truth.channels() == 1 && im.truth.same_grid(im.di), Errc::dimension_mismatch,
            im.sample_id + ": ground truth does not match the difference image");
    require(seen.emplace(im.sample_id, 0).second, Errc::invalid_argument, "duplicate sample id " + im.sample_id);
    total += im.di.pixels();
  }
  PixelDataset data;
  data.features.resize(total, d);
  data.labels.resize(total);
  data.group.reserve(static_cast<std::size_t>(total));
  Index row = 0;
  for (std::size_t g = 0; g < images.size(); ++g) {
    const auto& im = images[g];
    data.group_ids.push_back(im.sample_id);
    for (Index p = 0; p < im.di.pixels(); ++p, ++row) {
      for (Index c = 0; c < d; ++c) data.features(row, c) = im.di.data()[p * d + c];
      data.labels[row] = im.truth.data()[p] != 0.0f ? 1 : 0;
      data.group.push_back(static_cast<std::int32_t>(g));
    }
  }
  data.group_split = group_split(data.group_ids, split_seed, train_fraction);
  return data;
}

std::uint64_t split_hash(const PixelDataset& data) {
  std::vector<std::pair<std::string, SplitTag>> pairs;
  for (std::size_t g = 0; g < data.group_ids.size(); ++g) pairs.emplace_back(data.group_ids[g], data.group_split[g]);
  std::sort(pairs.begin(), pairs.end());
  std::string text;
  for (const auto& [id, side] : pairs) text += id + "\t" + to_string(side) + "\n";
  return fnv1a(text) & 0xffffffffffffULL;
}

void require_same_groups(const PixelDataset& a, const PixelDataset& b) {
  auto ids_a = a.group_ids, ids_b = b.group_ids;
  std::sort(ids_a.begin(), ids_a.end());
  std::sort(ids_b.begin(), ids_b.end());
  require(ids_a == ids_b, Errc::invalid_argument, "datasets cover different samples");
  require(split_hash(a) == split_hash(b), Errc::invalid_argument, "datasets split the samples differently");
}

double auc(std::span<const double> scores, std::span<const int> labels) {
  const ClassCounts counts = count_classes(scores, labels);
  const auto order = order_by_score(scores, false);
  // Twice the positive rank sum, so average ranks of tie blocks stay integral.
  std::int64_t twice_rank_sum = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    std::int64_t pos_in_block = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) pos_in_block += labels[order[j++]];
    // Ranks i+1..j average to (i+1+j)/2.
    twice_rank_sum += pos_in_block * static_cast<std::int64_t>(i + 1 + j);
    i = j;
  }
  const std::int64_t twice_u = twice_rank_sum - counts.pos * (counts.pos + 1);
  return static_cast<double>(twice_u) / (2.0 * static_cast<double>(counts.pos) * static_cast<double>(counts.neg));
}

RocCurve roc_curve(std::span<const double> scores, std::span<const int> labels) {
  const ClassCounts counts = count_classes(scores, labels);
  const auto order = order_by_score(scores, true);
  RocCurve curve;
  curve.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  std::int64_t tp = 0, fp = 0, prev_tp = 0, prev_fp = 0;
  std::int64_t twice_area = 0;  // in units of 1/(pos*neg)
  std::size_t i = 0;
  while (i < order.size()) {
    const double thr = scores[order[i]];
    while (i < order.size() && scores[order[i]] == thr) (labels[order[i++]] ? tp : fp) += 1;
    twice_area += (fp - prev_fp) * (tp + prev_tp);
    curve.points.push_back({thr, static_cast<double>(fp) / static_cast<double>(counts.neg),
                            static_cast<double>(tp) / static_cast<double>(counts.pos)});
    prev_tp = tp;
    prev_fp = fp;
  }
  curve.auc = static_cast<double>(twice_area) /
              (2.0 * static_cast<double>(counts.pos) * static_cast<double>(counts.neg));
  return curve;
}

double trapezoid_auc(const RocCurve& curve) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    const auto& a = curve.points[i - 1];
    const auto& b = curve.points[i];
    area += (b.fpr - a.fpr) * (b.tpr + a.tpr) * 0.5;
  }
  return area;
}

RocCurve thin_roc(const RocCurve& curve, std::size_t max_points) {
  if (curve.points.size() <= max_points || max_points < 2) return curve;
  RocCurve out;
  out.auc = curve.auc;
  const std::size_t n = curve.points.size();
  std::size_t last = n;
  for (std::size_t k = 0; k < max_points; ++k) {
    const std::size_t i = k * (n - 1) / (max_points - 1);
    if (i != last) out.points.push_back(curve.points[i]);
    last = i;
  }
  return out;
}

void write_roc_csv(const std::filesystem::path& path, const RocCurve& curve) {
  std::string text = "threshold,fpr,tpr\n";
  for (const auto& p : curve.points) {
    text += (std::isinf(p.threshold) ? std::string("inf") : format_number(p.threshold)) + "," + format_number(p.fpr) +
            "," + format_number(p.tpr) + "\n";
  }
  write_text_file(path, text);
}

Standardizer Standardizer::fit(const Eigen::MatrixXd& features, std::span<const Index> rows) {
  require(rows.size() >= 2, Errc::insufficient_data, "standardizer needs at least two rows");
  const Index d = features.cols();
  Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(d);
  for (Index r : rows) sum += features.row(r);
  const auto n = static_cast<double>(rows.size());
  Standardizer s;
  s.mean = sum / n;
  Eigen::RowVectorXd sq = Eigen::RowVectorXd::Zero(d);
  for (Index r : rows) sq += (features.row(r) - s.mean).array().square().matrix();
  s.std = (sq / n).array().sqrt().max(kStandardizerFloor).matrix();
  return s;
}

Standardizer Standardizer::fit(const Eigen::MatrixXd& features) {
  std::vector<Index> rows(static_cast<std::size_t>(features.rows()));
  std::iota(rows.begin(), rows.end(), Index{0});
  return fit(features, rows);
}

Eigen::MatrixXd Standardizer::apply(const Eigen::MatrixXd& features) const {
  require(features.cols() == mean.size(), Errc::dimension_mismatch, "standardizer feature count");
  return (features.rowwise() - mean).array().rowwise() / std.array();
}

std::vector<Index> balance_rows(const Eigen::VectorXi& labels, std::span<const Index> rows, std::uint64_t seed) {
  std::vector<Index> pos, neg;
  for (Index r : rows) (labels[r] ? pos : neg).push_back(r);
  require(!pos.empty() && !neg.empty(), Errc::insufficient_data, "balancing needs both classes");
  auto& major = pos.size() > neg.size() ? pos : neg;
  const auto& minor = pos.size() > neg.size() ? neg : pos;
  Rng rng = make_rng(seed, {0x62616c});
  // Partial Fisher-Yates picks a uniform subset of the majority class.
  for (std::size_t i = 0; i < minor.size(); ++i) {
    const std::size_t j = std::uniform_int_distribution<std::size_t>(i, major.size() - 1)(rng);
    std::swap(major[i], major[j]);
  }
  major.resize(minor.size());
  std::vector<Index> out = pos;
  out.insert(out.end(), neg.begin(), neg.end());
  std::sort(out.begin(), out.end());
  return out;
}

Eigen::VectorXd LinearSvc::decision(const Eigen::MatrixXd& raw) const {
  return (scaler.apply(raw) * w).array() + b;
}

double svc_objective(const Eigen::VectorXd& w, double b, double C, const Eigen::MatrixXd& x,
                     const Eigen::VectorXi& labels) {
  const Eigen::ArrayXd y = labels.cast<double>().array() * 2.0 - 1.0;
  const Eigen::ArrayXd margin = y * ((x * w).array() + b);
  return 0.5 * w.squaredNorm() + C * (1.0 - margin).max(0.0).sum();
}

LinearSvc svc_fit(const Eigen::MatrixXd& x, const Eigen::VectorXi& labels, const SvcOptions& options) {
  require(x.rows() == labels.size(), Errc::dimension_mismatch, "svc: feature and label counts differ");
  require(options.C > 0.0 && options.epochs >= 1, Errc::invalid_argument, "svc: C must be positive, epochs >= 1");
  const Index n = x.rows();
  const Index pos = labels.sum();
  require(pos > 0 && pos < n, Errc::insufficient_data, "svc needs both classes");

  const double lambda = 1.0 / (options.C * static_cast<double>(n));
  const double radius = 1.0 / std::sqrt(lambda);
  const std::int64_t total = options.epochs * n;
  const std::int64_t average_from = total / 2 + 1;

  Eigen::VectorXd w = Eigen::VectorXd::Zero(x.cols());
  double b = 0.0;
  Eigen::VectorXd w_sum = Eigen::VectorXd::Zero(x.cols());
  double b_sum = 0.0;
  std::int64_t averaged = 0;

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  Rng rng = make_rng(options.seed, {0x737663});
  std::int64_t t = 0;
  for (Index epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (Index i : order) {
      ++t;
      const double eta = 1.0 / (lambda * static_cast<double>(t));
      const double y = labels[i] ? 1.0 : -1.0;
      const bool violated = y * (x.row(i).dot(w) + b) < 1.0;
      w *= 1.0 - eta * lambda;
      if (violated) {
        w += (eta * y) * x.row(i).transpose();
        b += eta * y;
      }
      const double norm = w.norm();
      if (norm > radius) w *= radius / norm;
      if (t >= average_from) {
        w_sum += w;
        b_sum += b;
        ++averaged;
      }
    }
  }
  LinearSvc model;
  model.w = w_sum / static_cast<double>(averaged);
  model.b = b_sum / static_cast<double>(averaged);
  model.C = options.C;
  model.scaler.mean = Eigen::RowVectorXd::Zero(x.cols());
  model.scaler.std = Eigen::RowVectorXd::Ones(x.cols());
  return model;
}

LinearSvc svc_train(const PixelDataset& data, const SvcOptions& options) {
  const auto train_rows = data.rows_on(SplitTag::train);
  const auto rows = balance_rows(data.labels, train_rows, derive_seed(options.seed, {1}));
  const Standardizer scaler = Standardizer::fit(data.features, rows);
  Eigen::MatrixXd x(static_cast<Index>(rows.size()), data.dim());
  Eigen::VectorXi y(static_cast<Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    x.row(static_cast<Index>(i)) = data.features.row(rows[i]);
    y[static_cast<Index>(i)] = data.labels[rows[i]];
  }
  LinearSvc model = svc_fit(scaler.apply(x), y, options);
  model.scaler = scaler;
  return model;
}

double svc_accuracy(const LinearSvc& model, const Eigen::MatrixXd& raw, const Eigen::VectorXi& labels) {
  require(raw.rows() == labels.size() && raw.rows() > 0, Errc::dimension_mismatch, "svc_accuracy: empty or mismatched");
  const Eigen::VectorXd f = model.decision(raw);
  Index correct = 0;
  for (Index i = 0; i < f.size(); ++i) correct += (f[i] >= 0.0 ? 1 : 0) == labels[i];
  return static_cast<double>(correct) / static_cast<double>(f.size());
}

SvcScore svc_accuracy(const LinearSvc& model, const PixelDataset& data, std::uint64_t seed) {
  const auto rows = balance_rows(data.labels, data.rows_on(SplitTag::test), derive_seed(seed, {2}));
  Eigen::MatrixXd x(static_cast<Index>(rows.size()), data.dim());
  Eigen::VectorXi y(static_cast<Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    x.row(static_cast<Index>(i)) = data.features.row(rows[i]);
    y[static_cast<Index>(i)] = data.labels[rows[i]];
  }
  return {svc_accuracy(model, x, y), static_cast<Index>(rows.size())};
}

}  // namespace diforge

#include "diforge/change_sim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "diforge/rng.hpp"

namespace diforge {

namespace {

struct Ellipse {
  double ox, oy;  // offset from the blob centre, in units of the scale
  double a, b;    // semi-axes, same units
  double theta;
};

/// Pixels covered by the blob scaled by `s` around (cy, cx), clipped to the grid.
Eigen::ArrayXf rasterize(const std::vector<Ellipse>& shape, double cy, double cx, double s, Index h, Index w) {
  Eigen::ArrayXf out = Eigen::ArrayXf::Zero(h * w);
  for (const Ellipse& e : shape) {
    const double ey = cy + s * e.oy, ex = cx + s * e.ox;
    const double a = s * e.a, b = s * e.b;
    if (a <= 0.0 || b <= 0.0) continue;
    const double c = std::cos(e.theta), sn = std::sin(e.theta);
    const double reach = std::max(a, b);
    const Index r0 = std::max<Index>(0, static_cast<Index>(std::floor(ey - reach)));
    const Index r1 = std::min<Index>(h - 1, static_cast<Index>(std::ceil(ey + reach)));
    const Index c0 = std::max<Index>(0, static_cast<Index>(std::floor(ex - reach)));
    const Index c1 = std::min<Index>(w - 1, static_cast<Index>(std::ceil(ex + reach)));
    for (Index r = r0; r <= r1; ++r) {
      for (Index col = c0; col <= c1; ++col) {
        const double dx = static_cast<double>(col) - ex, dy = static_cast<double>(r) - ey;
        const double u = (dx * c + dy * sn) / a, v = (-dx * sn + dy * c) / b;
        if (u * u + v * v <= 1.0) out[r * w + col] = 1.0f;
      }
    }
  }
  return out;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

}  // namespace

const char* to_string(ChangeMethod method) noexcept {
  return method == ChangeMethod::offset ? "offset" : "statistical";
}

ChangeMethod parse_change_method(const std::string& text) {
  if (text == "offset") return ChangeMethod::offset;
  if (text == "statistical") return ChangeMethod::statistical;
  throw Error(Errc::config, "unknown change method '" + text + "' (expected offset or statistical)");
}

Raster gen_mask(std::uint64_t seed, const Raster& class_map, const MaskOptions& options) {
  require(class_map.channels() == 1 && class_map.pixels() > 0, Errc::invalid_argument, "class map must be one channel");
  require(options.min_fraction > 0.0 && options.min_fraction <= options.max_fraction && options.max_fraction < 1.0,
          Errc::invalid_argument, "mask area fractions must satisfy 0 < min <= max < 1");
  const Index h = class_map.height(), w = class_map.width();
  std::vector<Index> forest;
  for (Index i = 0; i < class_map.pixels(); ++i) {
    if (class_map.data()[i] == static_cast<float>(kForest)) forest.push_back(i);
  }
  require(!forest.empty(), Errc::insufficient_data, "class map has no forest pixels");
  const Eigen::ArrayXf is_forest = (class_map.data() == static_cast<float>(kForest)).cast<float>();
  const double total = static_cast<double>(h * w);

  Rng rng = make_rng(seed, {0x6d61736b});
  for (int attempt = 0; attempt < options.max_retries; ++attempt) {
    const double target_area = total * std::uniform_real_distribution<double>(options.min_fraction, options.max_fraction)(rng);
    const int n = std::uniform_int_distribution<int>(2, 5)(rng);
    std::vector<Ellipse> shape;
    std::normal_distribution<double> offset(0.0, 0.5);
    for (int i = 0; i < n; ++i) {
      const double aspect = std::uniform_real_distribution<double>(0.4, 1.0)(rng);
      shape.push_back({offset(rng), offset(rng), 1.0, aspect,
                       std::uniform_real_distribution<double>(0.0, std::numbers::pi)(rng)});
    }
    const Index centre = forest[std::uniform_int_distribution<std::size_t>(0, forest.size() - 1)(rng)];
    const double cy = static_cast<double>(centre / w), cx = static_cast<double>(centre % w);

    // Raw area grows monotonically with the scale, so bisect the scale onto the target.
    double lo = 0.0, hi = static_cast<double>(std::max(h, w));
    Eigen::ArrayXf blob;
    for (int it = 0; it < 40; ++it) {
      const double mid = 0.5 * (lo + hi);
      blob = rasterize(shape, cy, cx, mid, h, w);
      (blob.sum() < target_area ? lo : hi) = mid;
    }
    blob = rasterize(shape, cy, cx, hi, h, w);
    const double raw = blob.sum();
    if (raw < options.min_fraction * total || raw > options.max_fraction * total) continue;

    Eigen::ArrayXf mask = blob * is_forest;
    if (mask.sum() < static_cast<float>(options.min_pixels)) continue;
    return Raster(h, w, 1, std::move(mask));
  }
  throw Error(Errc::retries_exhausted,
              "no mask with " + std::to_string(options.min_pixels) + " forest pixels after " +
                  std::to_string(options.max_retries) + " attempts");
}

SarImage apply_offset_change(const SarImage& image, const Raster& mask, double offset_db) {
  require(mask.same_grid(image.raster()) && mask.channels() == 1, Errc::dimension_mismatch,
          "mask does not match the image grid");
  Raster out = image.raster();
  const auto off = static_cast<float>(offset_db);
  for (Index p = 0; p < mask.pixels(); ++p) {
    if (mask.data()[p] == 0.0f) continue;
    for (Index b = 0; b < 2; ++b) out.data()[p * 2 + b] += off;
  }
  return SarImage::clamped(std::move(out));
}

Kde::Kde(Eigen::ArrayXd samples, double bandwidth) : samples_(std::move(samples)), h_(bandwidth) {
  require(samples_.size() >= 1, Errc::insufficient_data, "kde needs at least one sample");
  require(h_ > 0.0 && std::isfinite(h_), Errc::invalid_argument, "kde bandwidth must be positive");
  require(samples_.isFinite().all(), Errc::non_finite, "kde samples must be finite");
  std::sort(samples_.begin(), samples_.end());
}

double Kde::silverman(const Eigen::ArrayXd& sorted) {
  const auto n = static_cast<double>(sorted.size());
  const double mean = sorted.mean();
  const double sigma = n > 1 ? std::sqrt((sorted - mean).square().sum() / (n - 1.0)) : 0.0;
  auto quantile = [&](double q) {
    const double pos = q * (n - 1.0);
    const auto i = static_cast<Index>(std::floor(pos));
    const Index j = std::min<Index>(i + 1, sorted.size() - 1);
    return sorted[i] + (pos - static_cast<double>(i)) * (sorted[j] - sorted[i]);
  };
  const double iqr = quantile(0.75) - quantile(0.25);
  const double spread = iqr > 0.0 ? std::min(sigma, iqr / 1.34) : sigma;
  return std::max(1e-3, 0.9 * spread * std::pow(n, -0.2));
}

Kde Kde::fit(Eigen::ArrayXd samples) {
  require(samples.size() >= 10, Errc::insufficient_data,
          "kde needs at least 10 samples, got " + std::to_string(samples.size()));
  std::sort(samples.begin(), samples.end());
  const double h = silverman(samples);
  return Kde(std::move(samples), h);
}

double Kde::cdf(double x) const {
  double acc = 0.0;
  const double inv = 1.0 / h_;
  for (double s : samples_) acc += normal_cdf((x - s) * inv);
  return acc / static_cast<double>(samples_.size());
}

double Kde::pdf(double x) const {
  double acc = 0.0;
  const double inv = 1.0 / h_;
  for (double s : samples_) {
    const double z = (x - s) * inv;
    acc += std::exp(-0.5 * z * z);
  }
  return acc * inv / (std::sqrt(2.0 * std::numbers::pi) * static_cast<double>(samples_.size()));
}

double Kde::icdf(double u) const {
  require(u > 0.0 && u < 1.0, Errc::invalid_argument, "icdf argument must lie in (0, 1)");
  double lo = lower(), hi = upper();
  const double f_lo = cdf(lo), f_hi = cdf(hi);
  if (u <= f_lo) return lo;
  if (u >= f_hi) return hi;
  // Start from the empirical quantile, which is usually within a bandwidth.
  const double pos = u * static_cast<double>(samples_.size() - 1);
  double x = samples_[static_cast<Index>(std::llround(pos))];
  for (int it = 0; it < 200; ++it) {
    const double err = cdf(x) - u;
    if (std::abs(err) < 1e-12) break;
    (err < 0.0 ? lo : hi) = x;
    if (hi - lo < 1e-12 * std::max(1.0, std::abs(x))) break;
    const double d = pdf(x);
    double next = d > 0.0 ? x - err / d : lo - 1.0;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    x = next;
  }
  return x;
}

BandPopulations class_population(const SarImage& image, const Raster& class_map, LandClass land_class) {
  require(class_map.same_grid(image.raster()), Errc::dimension_mismatch, "class map does not match the image grid");
  std::vector<Index> pixels;
  for (Index p = 0; p < class_map.pixels(); ++p) {
    if (class_map.data()[p] == static_cast<float>(land_class)) pixels.push_back(p);
  }
  BandPopulations out;
  for (Index b = 0; b < 2; ++b) {
    auto& pop = out[static_cast<std::size_t>(b)];
    pop.resize(static_cast<Index>(pixels.size()));
    for (std::size_t i = 0; i < pixels.size(); ++i) pop[static_cast<Index>(i)] = image.raster().data()[pixels[i] * 2 + b];
  }
  return out;
}

StatisticalChange apply_statistical_change(const SarImage& image, const Raster& mask, const BandPopulations& source,
                                           const BandPopulations& target) {
  require(mask.same_grid(image.raster()) && mask.channels() == 1, Errc::dimension_mismatch,
          "mask does not match the image grid");
  Raster out = image.raster();
  double shift = 0.0;
  Index changed = 0;
  for (std::size_t b = 0; b < 2; ++b) {
    require(source[b].size() >= 10 && target[b].size() >= 10, Errc::insufficient_data,
            "statistical change needs at least 10 source and 10 target pixels per band");
    const Kde src = Kde::fit(source[b]);
    const Kde tgt = Kde::fit(target[b]);
    for (Index p = 0; p < mask.pixels(); ++p) {
      if (mask.data()[p] == 0.0f) continue;
      float& v = out.data()[p * 2 + static_cast<Index>(b)];
      const double u = std::clamp(src.cdf(v), kCdfClamp, 1.0 - kCdfClamp);
      const double mapped = tgt.icdf(u);
      shift += mapped - v;
      ++changed;
      v = static_cast<float>(mapped);
    }
  }
  StatisticalChange result{SarImage::clamped(std::move(out)), changed ? shift / static_cast<double>(changed) : 0.0};
  return result;
}

ChangeResult simulate_changes(const SceneSample& sample, const Raster& class_map, std::uint64_t seed,
                              const ChangeConfig& config) {
  sample.validate();
  require(class_map.same_grid(sample.target.raster()), Errc::dimension_mismatch, "class map does not match the sample");
  ChangeResult result;
  result.target = sample.target;
  result.truth = Raster(class_map.height(), class_map.width(), 1);

  Rng rng = make_rng(seed, {0x6b});
  result.requested = std::uniform_int_distribution<int>(0, 3)(rng);
  for (int i = 0; i < result.requested; ++i) {
    try {
      const Raster m = gen_mask(derive_seed(seed, {0x6d, static_cast<std::uint64_t>(i)}), class_map, config.mask);
      result.truth.data() = result.truth.data().max(m.data());
      ++result.applied;
    } catch (const Error& e) {
      if (e.code() != Errc::retries_exhausted) throw;
      result.warnings.push_back(sample.sample_id + ": change " + std::to_string(i) + " skipped: " + e.what());
    }
  }
  if (result.applied == 0) return result;

  if (config.method == ChangeMethod::offset) {
    result.target = apply_offset_change(sample.target, result.truth, config.offset_db);
    Index n = 0;
    double shift = 0.0;
    for (Index p = 0; p < result.truth.pixels(); ++p) {
      if (result.truth.data()[p] == 0.0f) continue;
      for (Index b = 0; b < 2; ++b) shift += result.target.raster().data()[p * 2 + b] - sample.target.raster().data()[p * 2 + b];
      n += 2;
    }
    result.mean_shift_db = shift / static_cast<double>(n);
  } else {
    const auto source = class_population(sample.target, class_map, kForest);
    const auto target = class_population(sample.target, class_map, config.target_class);
    auto changed = apply_statistical_change(sample.target, result.truth, source, target);
    result.target = std::move(changed.image);
    result.mean_shift_db = changed.mean_shift_db;
  }
  return result;
}

double ks_statistic(Eigen::ArrayXd a, Eigen::ArrayXd b) {
  require(a.size() > 0 && b.size() > 0, Errc::insufficient_data, "ks_statistic needs two non-empty samples");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const auto na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  Index i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == x) ++i;
    while (j < b.size() && b[j] == x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

}  // namespace diforge

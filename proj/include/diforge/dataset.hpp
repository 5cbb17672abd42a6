#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "diforge/raster.hpp"
#include "diforge/scene_sim.hpp"
#include "diforge/text_io.hpp"

namespace diforge {

/// Manifest line: `<sample_id>\t<split>\t<relative_path>`.
struct ManifestEntry {
  std::string sample_id;
  SplitTag split = SplitTag::train;
  std::string relative_path;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

using Manifest = std::vector<ManifestEntry>;

void write_manifest(const std::filesystem::path& path, const Manifest& manifest);
Manifest read_manifest(const std::filesystem::path& path);

struct DatasetSpec {
  std::uint64_t seed = 1;
  Index num_worlds = 24;
  Index dates_per_world = 100;
  double train_fraction = 0.87;
  Index image_size = 64;
  BackscatterParams params = BackscatterParams::defaults();
  WeatherParams weather{};
};

/// First date index tagged `test`: floor(train_fraction * dates).
Index split_date(Index dates_per_world, double train_fraction);

/// Renders every world/date once and writes one sidecar per sliding window.
/// Sample windows end at dates 4..dates-1; the split is by date only.
Manifest gen_dataset(const DatasetSpec& spec, const std::filesystem::path& out_dir);

/// Lazily loaded dataset directory. Rasters are cached after the first read,
/// so a single instance must not be shared between threads.
class DatasetStore final : public SampleSource {
 public:
  explicit DatasetStore(std::filesystem::path root);

  std::size_t size() const override { return manifest_.size(); }
  SplitTag split(std::size_t i) const override { return manifest_.at(i).split; }
  SceneSample load(std::size_t i) const override;

  const ManifestEntry& entry(std::size_t i) const { return manifest_.at(i); }
  const Manifest& manifest() const { return manifest_; }
  const std::filesystem::path& root() const { return root_; }
  std::vector<std::size_t> indices(SplitTag tag) const;

  /// Land-class raster of the world the sample was rendered from.
  Raster class_map(std::size_t i) const;
  Index date_index(std::size_t i) const;

 private:
  const Raster& cached(const std::string& relative) const;
  const KeyValues& sidecar(std::size_t i) const;

  std::filesystem::path root_;
  Manifest manifest_;
  mutable std::map<std::string, Raster> rasters_;
  mutable std::map<std::size_t, KeyValues> sidecars_;
};

/// View over a subset of another source's indices.
class SubsetSource final : public SampleSource {
 public:
  SubsetSource(const SampleSource& base, std::vector<std::size_t> indices)
      : base_(base), indices_(std::move(indices)) {}
  std::size_t size() const override { return indices_.size(); }
  SplitTag split(std::size_t i) const override { return base_.split(indices_.at(i)); }
  SceneSample load(std::size_t i) const override { return base_.load(indices_.at(i)); }
  std::size_t base_index(std::size_t i) const { return indices_.at(i); }

 private:
  const SampleSource& base_;
  std::vector<std::size_t> indices_;
};

KeyValues conditions_to_keys(const std::string& prefix, const AcquisitionConditions& c);
AcquisitionConditions conditions_from_keys(const KeyValues& kv, const std::string& prefix);

}  // namespace diforge

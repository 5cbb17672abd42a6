#include "diforge/dataset.hpp"

#include <cmath>
#include <cstdio>

#include "diforge/rng.hpp"

namespace fs = std::filesystem;

namespace diforge {

namespace {

constexpr std::array<const char*, AcquisitionConditions::kLength> kConditionKeys = {
    "mean_temp", "snow_depth", "orbit_ascending", "incidence_angle", "satellite_id",
    "precip0",   "precip1",    "precip2",         "precip3"};

std::string padded(Index value, int width) {
  std::string s = std::to_string(value);
  if (static_cast<int>(s.size()) < width) s.insert(0, static_cast<std::size_t>(width) - s.size(), '0');
  return s;
}

std::string world_dir(Index w) { return "worlds/w" + padded(w, 3); }
std::string date_file(Index w, Index d) { return world_dir(w) + "/date_" + padded(d, 4) + ".dras"; }

const std::string& lookup(const KeyValues& kv, const std::string& key) {
  const auto it = kv.find(key);
  if (it == kv.end()) throw Error(Errc::corrupt, "sample sidecar is missing key '" + key + "'");
  return it->second;
}

}  // namespace

void write_manifest(const fs::path& path, const Manifest& manifest) {
  std::string text;
  for (const auto& e : manifest) {
    text += e.sample_id + '\t' + to_string(e.split) + '\t' + e.relative_path + '\n';
  }
  write_text_file(path, text);
}

Manifest read_manifest(const fs::path& path) {
  Manifest manifest;
  const std::string text = read_text_file(path);
  std::size_t line_no = 0;
  for (const auto& line : split(text, '\n')) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cols = split(line, '\t');
    if (cols.size() != 3) {
      throw Error(Errc::corrupt, path.string() + ":" + std::to_string(line_no) + ": expected 3 tab-separated columns");
    }
    manifest.push_back({cols[0], parse_split_tag(cols[1]), cols[2]});
  }
  return manifest;
}

Index split_date(Index dates_per_world, double train_fraction) {
  require(train_fraction > 0.0 && train_fraction < 1.0, Errc::invalid_argument, "train_fraction must lie in (0, 1)");
  return static_cast<Index>(std::floor(train_fraction * static_cast<double>(dates_per_world)));
}

KeyValues conditions_to_keys(const std::string& prefix, const AcquisitionConditions& c) {
  KeyValues kv;
  const auto flat = c.flatten();
  for (std::size_t i = 0; i < flat.size(); ++i) kv[prefix + "." + kConditionKeys[i]] = format_number(flat[i]);
  return kv;
}

AcquisitionConditions conditions_from_keys(const KeyValues& kv, const std::string& prefix) {
  std::array<double, AcquisitionConditions::kLength> flat{};
  for (std::size_t i = 0; i < flat.size(); ++i) {
    const std::string key = prefix + "." + kConditionKeys[i];
    flat[i] = parse_double(lookup(kv, key), key);
  }
  return AcquisitionConditions::unflatten(flat);
}

Manifest gen_dataset(const DatasetSpec& spec, const fs::path& out_dir) {
  require(spec.num_worlds >= 1, Errc::invalid_argument, "need at least one world");
  require(spec.dates_per_world >= kPreviousImages + 1, Errc::invalid_argument, "need at least 5 dates per world");
  const Index boundary = split_date(spec.dates_per_world, spec.train_fraction);
  fs::create_directories(out_dir);

  Manifest manifest;
  for (Index w = 0; w < spec.num_worlds; ++w) {
    const World world = gen_world(derive_seed(spec.seed, {1, static_cast<std::uint64_t>(w)}), spec.image_size,
                                  spec.image_size);
    const WeatherSeries weather =
        gen_weather(derive_seed(spec.seed, {2, static_cast<std::uint64_t>(w)}), spec.dates_per_world, spec.weather);
    write_raster(out_dir / world_dir(w) / "dem.dras", world.dem);
    write_raster(out_dir / world_dir(w) / "class_map.dras", world.class_map);
    for (Index d = 0; d < spec.dates_per_world; ++d) {
      const SarImage img =
          render_sar(world, weather.dates[static_cast<std::size_t>(d)], spec.params, date_noise_seed(world, d));
      write_raster(out_dir / date_file(w, d), img.raster());
    }

    for (Index d = kPreviousImages; d < spec.dates_per_world; ++d) {
      const std::string id = "w" + padded(w, 3) + "_d" + padded(d, 4);
      KeyValues kv;
      kv["sample_id"] = id;
      kv["date_index"] = std::to_string(d);
      kv["dem"] = world_dir(w) + "/dem.dras";
      kv["class_map"] = world_dir(w) + "/class_map.dras";
      for (Index i = 0; i < kPreviousImages; ++i) {
        const Index date = d - kPreviousImages + i;
        const std::string prefix = "prev" + std::to_string(i);
        kv[prefix + ".image"] = date_file(w, date);
        kv.merge(conditions_to_keys(prefix, weather.dates[static_cast<std::size_t>(date)]));
      }
      kv["target.image"] = date_file(w, d);
      kv.merge(conditions_to_keys("target", weather.dates[static_cast<std::size_t>(d)]));
      const std::string rel = "samples/" + id + ".txt";
      write_text_file(out_dir / rel, render_key_values(kv));
      manifest.push_back({id, d < boundary ? SplitTag::train : SplitTag::test, rel});
    }
  }
  write_manifest(out_dir / "manifest.tsv", manifest);
  return manifest;
}

DatasetStore::DatasetStore(fs::path root) : root_(std::move(root)) {
  const fs::path manifest_path = root_ / "manifest.tsv";
  require(fs::exists(manifest_path), Errc::missing_artifact, manifest_path.string());
  manifest_ = read_manifest(manifest_path);
}

const KeyValues& DatasetStore::sidecar(std::size_t i) const {
  auto it = sidecars_.find(i);
  if (it == sidecars_.end()) {
    const auto& e = manifest_.at(i);
    it = sidecars_.emplace(i, parse_key_values(read_text_file(root_ / e.relative_path), e.relative_path)).first;
  }
  return it->second;
}

const Raster& DatasetStore::cached(const std::string& relative) const {
  auto it = rasters_.find(relative);
  if (it == rasters_.end()) it = rasters_.emplace(relative, read_raster(root_ / relative)).first;
  return it->second;
}

SceneSample DatasetStore::load(std::size_t i) const {
  const KeyValues& kv = sidecar(i);
  SceneSample s;
  s.sample_id = manifest_.at(i).sample_id;
  s.split_tag = manifest_.at(i).split;
  s.dem = cached(lookup(kv, "dem"));
  for (Index k = 0; k < kPreviousImages; ++k) {
    const std::string prefix = "prev" + std::to_string(k);
    s.prev_images[static_cast<std::size_t>(k)] = SarImage(cached(lookup(kv, prefix + ".image")));
    s.prev_conditions[static_cast<std::size_t>(k)] = conditions_from_keys(kv, prefix);
  }
  s.target = SarImage(cached(lookup(kv, "target.image")));
  s.target_conditions = conditions_from_keys(kv, "target");
  s.validate();
  return s;
}

Raster DatasetStore::class_map(std::size_t i) const { return cached(lookup(sidecar(i), "class_map")); }

Index DatasetStore::date_index(std::size_t i) const {
  return parse_int(lookup(sidecar(i), "date_index"), "date_index");
}

std::vector<std::size_t> DatasetStore::indices(SplitTag tag) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < manifest_.size(); ++i) {
    if (manifest_[i].split == tag) out.push_back(i);
  }
  return out;
}

}  // namespace diforge

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dualface/common.hpp"

namespace dualface {

using LabelId = std::uint8_t;
inline constexpr LabelId kBackgroundLabel = 0;

// Rank used to resolve overlapping regions after sketch-to-mask replacement: lower wins.
namespace precedence {
inline constexpr int kEyes = 0;
inline constexpr int kBrows = 1;
inline constexpr int kNose = 2;
inline constexpr int kMouth = 3;
inline constexpr int kSkin = 4;
inline constexpr int kHair = 5;
inline constexpr int kOther = 6;
inline constexpr int kBackground = 7;
}  // namespace precedence

int default_precedence(std::string_view label_name);

struct PaletteEntry {
  LabelId id = 0;
  std::string name;
  int precedence = precedence::kOther;
  bool contour = true;  // false: region boundaries produce no corpus ink

  friend bool operator==(const PaletteEntry&, const PaletteEntry&) = default;
};

class Palette {
 public:
  Palette();  // background only
  explicit Palette(std::vector<PaletteEntry> entries);

  // The 19-label CelebAMask-HQ convention.
  static Palette celebamask_hq();

  static Palette parse(std::string_view text);
  std::string to_text() const;

  const std::vector<PaletteEntry>& entries() const { return entries_; }
  bool contains(LabelId id) const { return index_[id] >= 0; }
  const PaletteEntry& entry(LabelId id) const;
  const std::string& name(LabelId id) const { return entry(id).name; }
  int precedence(LabelId id) const;
  std::optional<LabelId> find(std::string_view name) const;

  friend bool operator==(const Palette& a, const Palette& b) { return a.entries_ == b.entries_; }

 private:
  std::vector<PaletteEntry> entries_;
  std::array<int, 256> index_{};
};

Palette load_palette(const std::filesystem::path& path);

class LabelMask {
 public:
  LabelMask() = default;
  // Throws ValidationError listing every label value absent from the palette.
  LabelMask(Grid<LabelId> labels, Palette palette);

  const Grid<LabelId>& labels() const { return labels_; }
  const Palette& palette() const { return palette_; }
  int width() const { return labels_.width(); }
  int height() const { return labels_.height(); }
  CanvasSize size() const { return labels_.size(); }
  LabelId at(int x, int y) const { return labels_.at(x, y); }

  std::map<LabelId, std::size_t> histogram() const;
  // Ascending label ids with at least one pixel.
  std::vector<LabelId> present_labels() const;

  friend bool operator==(const LabelMask&, const LabelMask&) = default;

 private:
  Grid<LabelId> labels_;
  Palette palette_;
};

LabelMask load_label_mask(const std::filesystem::path& path, const Palette& palette,
                          std::optional<CanvasSize> expected_size = std::nullopt);

// Inner 4-connected boundaries of every non-background region whose palette entry has contour ink.
ContourSketch extract_contours(const LabelMask& mask);

struct DatasetEntry {
  std::string entry_id;
  std::filesystem::path contour_path;
  std::filesystem::path mask_path;
  std::filesystem::path image_path;

  friend bool operator==(const DatasetEntry&, const DatasetEntry&) = default;
};

struct DatasetManifest {
  CanvasSize canvas = kDefaultCanvas;
  Palette palette;
  std::vector<DatasetEntry> entries;
  // Directory relative entry paths resolve against. Not serialized.
  std::filesystem::path base_dir;

  std::filesystem::path resolve(const std::filesystem::path& p) const;
  const DatasetEntry* find(std::string_view entry_id) const;
  // Resolved copy of an entry: all paths absolute.
  DatasetEntry resolved(const DatasetEntry& entry) const;
};

std::string save_manifest_text(const DatasetManifest& manifest);
DatasetManifest parse_manifest(std::string_view text, const std::filesystem::path& base_dir);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest load_manifest(const std::filesystem::path& path);

struct DatasetBuildReport {
  DatasetManifest manifest;
  std::vector<std::string> warnings;
  std::size_t skipped = 0;
};

// Pairs masks and images by file stem, writes `<out>/contours/<id>.png` and `<out>/manifest.json`.
DatasetBuildReport build_dataset(const std::filesystem::path& mask_dir, const std::filesystem::path& image_dir,
                                 const std::filesystem::path& out_dir, const Palette& palette,
                                 CanvasSize canvas = kDefaultCanvas);

}  // namespace dualface

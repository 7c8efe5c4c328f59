#include "dualface/mask_pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "dualface/image_io.hpp"

namespace dualface {
namespace fs = std::filesystem;

int default_precedence(std::string_view name) {
  static const std::map<std::string_view, int> kByName = {
      {"background", precedence::kBackground},
      {"l_eye", precedence::kEyes},
      {"r_eye", precedence::kEyes},
      {"left_eye", precedence::kEyes},
      {"right_eye", precedence::kEyes},
      {"eye", precedence::kEyes},
      {"l_brow", precedence::kBrows},
      {"r_brow", precedence::kBrows},
      {"left_eyebrow", precedence::kBrows},
      {"right_eyebrow", precedence::kBrows},
      {"eyebrow", precedence::kBrows},
      {"nose", precedence::kNose},
      {"mouth", precedence::kMouth},
      {"u_lip", precedence::kMouth},
      {"l_lip", precedence::kMouth},
      {"lips", precedence::kMouth},
      {"skin", precedence::kSkin},
      {"hair", precedence::kHair},
  };
  auto it = kByName.find(name);
  return it == kByName.end() ? precedence::kOther : it->second;
}

Palette::Palette() : Palette(std::vector<PaletteEntry>{}) {}

Palette::Palette(std::vector<PaletteEntry> entries) : entries_(std::move(entries)) {
  index_.fill(-1);
  if (std::none_of(entries_.begin(), entries_.end(), [](const auto& e) { return e.id == kBackgroundLabel; })) {
    entries_.insert(entries_.begin(), PaletteEntry{kBackgroundLabel, "background", precedence::kBackground, false});
  }
  std::sort(entries_.begin(), entries_.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    auto& e = entries_[i];
    if (index_[e.id] >= 0) throw ValidationError("palette has duplicate label id " + std::to_string(e.id));
    index_[e.id] = static_cast<int>(i);
    if (e.id == kBackgroundLabel) {
      e.precedence = precedence::kBackground;
      e.contour = false;
    }
  }
}

Palette Palette::celebamask_hq() {
  static const char* kNames[] = {"background", "skin",  "nose",   "eye_g", "l_eye", "r_eye", "l_brow",
                                 "r_brow",     "l_ear", "r_ear",  "mouth", "u_lip", "l_lip", "hair",
                                 "hat",        "ear_r", "neck_l", "neck",  "cloth"};
  std::vector<PaletteEntry> entries;
  for (int i = 0; i < 19; ++i) {
    entries.push_back({static_cast<LabelId>(i), kNames[i], default_precedence(kNames[i]), true});
  }
  return Palette(std::move(entries));
}

const PaletteEntry& Palette::entry(LabelId id) const {
  if (!contains(id)) throw NotFoundError("label id " + std::to_string(id) + " not in palette");
  return entries_[index_[id]];
}

int Palette::precedence(LabelId id) const { return entry(id).precedence; }

std::optional<LabelId> Palette::find(std::string_view name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e.id;
  }
  return std::nullopt;
}

Palette Palette::parse(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("palette is not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("labels") || !doc["labels"].is_array()) {
    throw ParseError("palette: missing field 'labels'");
  }
  std::vector<PaletteEntry> entries;
  for (const auto& js : doc["labels"]) {
    if (!js.is_object() || !js.contains("id") || !js["id"].is_number_integer()) {
      throw ParseError("palette: each label needs an integer 'id'");
    }
    if (!js.contains("name") || !js["name"].is_string()) throw ParseError("palette: each label needs a 'name'");
    const int id = js["id"].get<int>();
    if (id < 0 || id > 255) throw ParseError("palette: label id out of range 0..255");
    PaletteEntry e;
    e.id = static_cast<LabelId>(id);
    e.name = js["name"].get<std::string>();
    e.precedence = js.contains("precedence") ? js["precedence"].get<int>() : default_precedence(e.name);
    e.contour = js.value("contour", true);
    entries.push_back(std::move(e));
  }
  try {
    return Palette(std::move(entries));
  } catch (const ValidationError& e) {
    throw ParseError(std::string("palette: ") + e.what());
  }
}

namespace {

nlohmann::ordered_json palette_json(const Palette& palette) {
  nlohmann::ordered_json doc;
  doc["version"] = 1;
  auto labels = nlohmann::ordered_json::array();
  for (const auto& e : palette.entries()) {
    nlohmann::ordered_json js;
    js["id"] = e.id;
    js["name"] = e.name;
    js["precedence"] = e.precedence;
    js["contour"] = e.contour;
    labels.push_back(std::move(js));
  }
  doc["labels"] = std::move(labels);
  return doc;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

}  // namespace

std::string Palette::to_text() const { return palette_json(*this).dump(2); }

Palette load_palette(const fs::path& path) { return Palette::parse(read_text(path)); }

LabelMask::LabelMask(Grid<LabelId> labels, Palette palette) : labels_(std::move(labels)), palette_(std::move(palette)) {
  std::array<bool, 256> seen{};
  for (auto v : labels_.cells()) seen[v] = true;
  std::vector<int> unknown;
  for (int v = 0; v < 256; ++v) {
    if (seen[v] && !palette_.contains(static_cast<LabelId>(v))) unknown.push_back(v);
  }
  if (!unknown.empty()) {
    std::string msg = "label mask contains values not in the palette:";
    for (int v : unknown) msg += " " + std::to_string(v);
    throw ValidationError(msg);
  }
}

std::map<LabelId, std::size_t> LabelMask::histogram() const {
  std::array<std::size_t, 256> counts{};
  for (auto v : labels_.cells()) ++counts[v];
  std::map<LabelId, std::size_t> out;
  for (int v = 0; v < 256; ++v) {
    if (counts[v] > 0) out[static_cast<LabelId>(v)] = counts[v];
  }
  return out;
}

std::vector<LabelId> LabelMask::present_labels() const {
  std::vector<LabelId> out;
  for (const auto& [id, count] : histogram()) out.push_back(id);
  return out;
}

LabelMask load_label_mask(const fs::path& path, const Palette& palette, std::optional<CanvasSize> expected_size) {
  GrayImage raster = read_gray8(path);
  if (expected_size && raster.size() != *expected_size) {
    throw ValidationError(path.string() + ": mask is " + std::to_string(raster.width()) + "x" +
                          std::to_string(raster.height()) + ", expected " + std::to_string(expected_size->width) +
                          "x" + std::to_string(expected_size->height));
  }
  try {
    return LabelMask(std::move(raster), palette);
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

ContourSketch extract_contours(const LabelMask& mask) {
  const auto& labels = mask.labels();
  const auto& palette = mask.palette();
  std::array<bool, 256> inks{};
  for (const auto& e : palette.entries()) inks[e.id] = e.id != kBackgroundLabel && e.contour;

  ContourSketch out(mask.size(), 0);
  const int w = mask.width();
  const int h = mask.height();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const LabelId k = labels.at(x, y);
      if (!inks[k]) continue;
      const bool boundary = (x > 0 && labels.at(x - 1, y) != k) || (x + 1 < w && labels.at(x + 1, y) != k) ||
                            (y > 0 && labels.at(x, y - 1) != k) || (y + 1 < h && labels.at(x, y + 1) != k);
      if (boundary) out.at(x, y) = 1;
    }
  }
  return out;
}

fs::path DatasetManifest::resolve(const fs::path& p) const {
  if (p.is_absolute() || base_dir.empty()) return p;
  return (base_dir / p).lexically_normal();
}

const DatasetEntry* DatasetManifest::find(std::string_view entry_id) const {
  for (const auto& e : entries) {
    if (e.entry_id == entry_id) return &e;
  }
  return nullptr;
}

DatasetEntry DatasetManifest::resolved(const DatasetEntry& entry) const {
  return {entry.entry_id, resolve(entry.contour_path), resolve(entry.mask_path), resolve(entry.image_path)};
}

std::string save_manifest_text(const DatasetManifest& manifest) {
  nlohmann::ordered_json doc;
  doc["version"] = 1;
  doc["canvas"] = {manifest.canvas.width, manifest.canvas.height};
  doc["palette"] = palette_json(manifest.palette);
  auto entries = nlohmann::ordered_json::array();
  for (const auto& e : manifest.entries) {
    nlohmann::ordered_json js;
    js["id"] = e.entry_id;
    js["contour"] = e.contour_path.generic_string();
    js["mask"] = e.mask_path.generic_string();
    js["image"] = e.image_path.generic_string();
    entries.push_back(std::move(js));
  }
  doc["entries"] = std::move(entries);
  return doc.dump(2);
}

DatasetManifest parse_manifest(std::string_view text, const fs::path& base_dir) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("manifest is not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || doc.value("version", 0) != 1) throw ParseError("manifest: unsupported or missing 'version'");
  DatasetManifest m;
  m.base_dir = base_dir;
  if (!doc.contains("canvas") || !doc["canvas"].is_array() || doc["canvas"].size() != 2) {
    throw ParseError("manifest: missing field 'canvas'");
  }
  m.canvas = {doc["canvas"][0].get<int>(), doc["canvas"][1].get<int>()};
  if (!doc.contains("palette")) throw ParseError("manifest: missing field 'palette'");
  m.palette = Palette::parse(doc["palette"].dump());
  if (!doc.contains("entries") || !doc["entries"].is_array()) throw ParseError("manifest: missing field 'entries'");
  std::set<std::string> ids;
  for (const auto& js : doc["entries"]) {
    for (const char* field : {"id", "contour", "mask", "image"}) {
      if (!js.contains(field) || !js[field].is_string()) {
        throw ParseError(std::string("manifest entry: missing field '") + field + "'");
      }
    }
    DatasetEntry e{js["id"].get<std::string>(), js["contour"].get<std::string>(), js["mask"].get<std::string>(),
                   js["image"].get<std::string>()};
    if (!ids.insert(e.entry_id).second) throw ParseError("manifest: duplicate entry id " + e.entry_id);
    m.entries.push_back(std::move(e));
  }
  return m;
}

void save_manifest(const DatasetManifest& manifest, const fs::path& path) {
  write_text(path, save_manifest_text(manifest));
}

DatasetManifest load_manifest(const fs::path& path) {
  return parse_manifest(read_text(path), fs::absolute(path).parent_path());
}

namespace {

std::map<std::string, fs::path> list_rasters(const fs::path& dir, std::initializer_list<std::string_view> exts) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::map<std::string, fs::path> out;
  for (const auto& item : fs::directory_iterator(dir)) {
    if (!item.is_regular_file()) continue;
    std::string ext = item.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (std::find(exts.begin(), exts.end(), ext) == exts.end()) continue;
    out.emplace(item.path().stem().string(), item.path());
  }
  return out;
}

}  // namespace

DatasetBuildReport build_dataset(const fs::path& mask_dir, const fs::path& image_dir, const fs::path& out_dir,
                                 const Palette& palette, CanvasSize canvas) {
  const auto masks = list_rasters(mask_dir, {".png", ".bmp", ".tif", ".tiff"});
  const auto images = list_rasters(image_dir, {".png", ".jpg", ".jpeg", ".bmp"});

  DatasetBuildReport report;
  report.manifest.canvas = canvas;
  report.manifest.palette = palette;
  fs::create_directories(out_dir / "contours");
  const fs::path base = fs::weakly_canonical(fs::absolute(out_dir));
  report.manifest.base_dir = base;

  auto relative_to_base = [&](const fs::path& p) { return fs::weakly_canonical(fs::absolute(p)).lexically_relative(base); };

  for (const auto& [stem, mask_path] : masks) {
    auto image_it = images.find(stem);
    if (image_it == images.end()) {
      report.warnings.push_back("mask without matching image skipped: " + mask_path.string());
      ++report.skipped;
      continue;
    }
    try {
      const LabelMask mask = load_label_mask(mask_path, palette, canvas);
      const GrayImage image = read_gray8(image_it->second, true);
      if (image.size() != canvas) {
        throw ValidationError(image_it->second.string() + ": image size differs from canvas");
      }
      const fs::path contour_path = out_dir / "contours" / (stem + ".png");
      write_gray8(contour_path, to_gray8(extract_contours(mask)));
      report.manifest.entries.push_back(
          {stem, relative_to_base(contour_path), relative_to_base(mask_path), relative_to_base(image_it->second)});
    } catch (const Error& e) {
      report.warnings.push_back(std::string("entry skipped: ") + e.what());
      ++report.skipped;
    }
  }
  for (const auto& [stem, image_path] : images) {
    if (!masks.contains(stem)) {
      report.warnings.push_back("image without matching mask skipped: " + image_path.string());
      ++report.skipped;
    }
  }
  if (report.manifest.entries.empty()) report.warnings.push_back("dataset is empty");
  save_manifest(report.manifest, out_dir / "manifest.json");
  return report;
}

}  // namespace dualface

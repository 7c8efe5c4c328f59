#include "dualface/portrait_synth.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <limits>

#include <sys/wait.h>
#include <unistd.h>

#include <opencv2/imgproc.hpp>

#include "dualface/image_io.hpp"

namespace dualface {

BinaryBackgroundMask background_mask(const LabelMask& mask) {
  BinaryBackgroundMask out(mask.size(), 0);
  auto src = mask.labels().cells();
  auto dst = out.cells();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] != kBackgroundLabel;
  return out;
}

std::string to_string(PortraitStyle style) { return style == PortraitStyle::kPhoto ? "photo" : "sketch-lines"; }

PortraitStyle parse_portrait_style(std::string_view text) {
  if (text == "photo") return PortraitStyle::kPhoto;
  if (text == "sketch-lines") return PortraitStyle::kSketchLines;
  throw ValidationError("unknown portrait style '" + std::string(text) + "'");
}

namespace {

struct Box {
  int x0 = std::numeric_limits<int>::max();
  int y0 = std::numeric_limits<int>::max();
  int x1 = -1;
  int y1 = -1;

  bool empty() const { return x1 < x0; }
  void add(int x, int y) {
    x0 = std::min(x0, x);
    y0 = std::min(y0, y);
    x1 = std::max(x1, x);
    y1 = std::max(y1, y);
  }
};

std::array<Box, 256> label_boxes(const LabelMask& mask) {
  std::array<Box, 256> boxes;
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) boxes[mask.at(x, y)].add(x, y);
  }
  return boxes;
}

// Bilinear sample that only blends neighbours carrying `k`; falls back to `fallback` when none do.
double sample_label(const GrayImage& image, const LabelMask& labels, LabelId k, double x, double y, double fallback) {
  x = std::clamp(x, 0.0, image.width() - 1.0);
  y = std::clamp(y, 0.0, image.height() - 1.0);
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int xs[2] = {x0, std::min(x0 + 1, image.width() - 1)};
  const int ys[2] = {y0, std::min(y0 + 1, image.height() - 1)};
  const double wx[2] = {1.0 - (x - x0), x - x0};
  const double wy[2] = {1.0 - (y - y0), y - y0};
  double sum = 0.0;
  double weight = 0.0;
  for (int j = 0; j < 2; ++j) {
    for (int i = 0; i < 2; ++i) {
      const double w = wx[i] * wy[j];
      if (w <= 0.0 || labels.at(xs[i], ys[j]) != k) continue;
      sum += w * image.at(xs[i], ys[j]);
      weight += w;
    }
  }
  return weight > 0.0 ? sum / weight : fallback;
}

GrayImage read_template_image(const DatasetEntry& entry, CanvasSize size) {
  if (!std::filesystem::exists(entry.image_path)) {
    throw IoError("template image missing for '" + entry.entry_id + "': " + entry.image_path.string());
  }
  GrayImage image = read_gray8(entry.image_path, true);
  if (image.size() != size) throw ValidationError("template image for '" + entry.entry_id + "' differs from mask size");
  return image;
}

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out += c;
    }
  }
  return out + "'";
}

void replace_all(std::string& text, const std::string& from, const std::string& to) {
  for (std::size_t pos = text.find(from); pos != std::string::npos; pos = text.find(from, pos + to.size())) {
    text.replace(pos, from.size(), to);
  }
}

}  // namespace

GrayImage RegionCompositeSynthesizer::synthesize(const SynthesisRequest& request) const {
  const LabelMask& merged = request.merged_mask;
  const LabelMask& source = request.template_mask;
  if (merged.size() != source.size()) throw ValidationError("merged and template masks differ in size");
  const GrayImage image = read_template_image(request.template_entry, merged.size());

  const auto dst_boxes = label_boxes(merged);
  const auto src_boxes = label_boxes(source);
  std::array<double, 256> sums{};
  std::array<double, 256> counts{};
  for (int y = 0; y < source.height(); ++y) {
    for (int x = 0; x < source.width(); ++x) {
      sums[source.at(x, y)] += image.at(x, y);
      counts[source.at(x, y)] += 1.0;
    }
  }
  GrayImage out(merged.size(), 255);
  for (int y = 0; y < merged.height(); ++y) {
    for (int x = 0; x < merged.width(); ++x) {
      const LabelId k = merged.at(x, y);
      if (k == kBackgroundLabel) continue;
      const Box& d = dst_boxes[k];
      const Box& s = src_boxes[k];
      if (s.empty()) continue;  // label unknown to the template: leave paper white
      const double sx_scale = double(s.x1 - s.x0 + 1) / double(d.x1 - d.x0 + 1);
      const double sy_scale = double(s.y1 - s.y0 + 1) / double(d.y1 - d.y0 + 1);
      const double sx = s.x0 + (x - d.x0 + 0.5) * sx_scale - 0.5;
      const double sy = s.y0 + (y - d.y0 + 0.5) * sy_scale - 0.5;
      const double v = sample_label(image, source, k, sx, sy, sums[k] / counts[k]);
      out.at(x, y) = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
    }
  }
  return out;
}

ExternalProcessSynthesizer::ExternalProcessSynthesizer(std::string command_template, std::filesystem::path work_dir)
    : command_template_(std::move(command_template)), work_dir_(std::move(work_dir)) {
  if (command_template_.empty()) throw ValidationError("external synthesizer needs a command");
  if (command_template_.find("{out}") == std::string::npos) {
    throw ValidationError("external synthesizer command must contain {out}");
  }
}

GrayImage ExternalProcessSynthesizer::synthesize(const SynthesisRequest& request) const {
  static std::atomic<unsigned> counter{0};
  namespace fs = std::filesystem;
  const fs::path base = work_dir_.empty() ? fs::temp_directory_path() : work_dir_;
  const fs::path dir = base / ("dualface-synth-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  fs::create_directories(dir);
  const fs::path mask_path = dir / "mask.png";
  const fs::path out_path = dir / "out.png";
  write_gray8(mask_path, request.merged_mask.labels());

  std::string command = command_template_;
  replace_all(command, "{mask}", shell_quote(mask_path.string()));
  replace_all(command, "{image}", shell_quote(request.template_entry.image_path.string()));
  replace_all(command, "{out}", shell_quote(out_path.string()));
  const int status = std::system(command.c_str());
  const bool ok = status != -1 && WIFEXITED(status) && WEXITSTATUS(status) == 0;
  GrayImage result;
  std::string failure;
  if (!ok) {
    failure = "external synthesizer exited with status " +
              std::to_string(status != -1 && WIFEXITED(status) ? WEXITSTATUS(status) : -1);
  } else {
    try {
      result = read_gray8(out_path, true);
      if (result.size() != request.merged_mask.size()) failure = "external synthesizer output has the wrong size";
    } catch (const Error& e) {
      failure = std::string("external synthesizer output unreadable: ") + e.what();
    }
  }
  std::error_code ec;
  fs::remove_all(dir, ec);
  if (!failure.empty()) throw Error(failure);
  return result;
}

SynthesizerRegistry SynthesizerRegistry::with_builtins() {
  SynthesizerRegistry r;
  r.add("region-composite", [](const SynthConfig&) { return std::make_unique<RegionCompositeSynthesizer>(); });
  r.add("external", [](const SynthConfig& c) {
    return std::make_unique<ExternalProcessSynthesizer>(c.external_command, c.work_dir);
  });
  return r;
}

void SynthesizerRegistry::add(std::string name, Factory factory) { factories_[std::move(name)] = std::move(factory); }

std::vector<std::string> SynthesizerRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [name, f] : factories_) out.push_back(name);
  return out;
}

std::unique_ptr<PortraitSynthesizer> SynthesizerRegistry::create(const SynthConfig& config) const {
  auto it = factories_.find(config.impl);
  if (it == factories_.end()) throw NotFoundError("no synthesizer registered as '" + config.impl + "'");
  return it->second(config);
}

GrayImage stylize_lines(const GrayImage& portrait, const StylizeParams& params) {
  if (!(params.sigma > 0.0) || !(params.k > 1.0)) throw ValidationError("stylize needs sigma > 0 and k > 1");
  if (portrait.empty()) return portrait;
  cv::Mat src(portrait.height(), portrait.width(), CV_32F);
  for (int y = 0; y < portrait.height(); ++y) {
    auto row = portrait.row(y);
    float* dst = src.ptr<float>(y);
    for (int x = 0; x < portrait.width(); ++x) dst[x] = row[x];
  }
  cv::Mat narrow;
  cv::Mat wide;
  cv::GaussianBlur(src, narrow, cv::Size(), params.sigma, params.sigma, cv::BORDER_REPLICATE);
  cv::GaussianBlur(src, wide, cv::Size(), params.sigma * params.k, params.sigma * params.k, cv::BORDER_REPLICATE);
  GrayImage out(portrait.size(), params.paper);
  for (int y = 0; y < portrait.height(); ++y) {
    const float* a = narrow.ptr<float>(y);
    const float* b = wide.ptr<float>(y);
    for (int x = 0; x < portrait.width(); ++x) {
      if (a[x] - b[x] < -params.threshold) out.at(x, y) = params.ink;
    }
  }
  return out;
}

CandidateSet generate_candidates(const StrokeSet& strokes, std::span<const DatasetEntry> templates,
                                 const Palette& palette, const PortraitSynthesizer& synthesizer,
                                 const CandidateOptions& options,
                                 const std::function<void(const GuidanceCandidate&)>& on_candidate) {
  if (templates.empty()) throw ValidationError("candidate generation needs at least one template");
  CandidateSet out;
  for (std::size_t i = 0; i < templates.size(); ++i) {
    const DatasetEntry& entry = templates[i];
    try {
      const auto start = std::chrono::steady_clock::now();
      LabelMask template_mask = load_label_mask(entry.mask_path, palette, strokes.canvas());
      GuidanceCandidate c;
      c.candidate_id = "c" + std::to_string(i + 1);
      c.template_entry_id = entry.entry_id;
      c.rank = static_cast<int>(i + 1);
      c.template_score =
          strokes.empty() ? std::numeric_limits<double>::quiet_NaN() : template_score(strokes, template_mask);
      if (options.mapping) {
        c.merged = map_sketch_to_mask(strokes, template_mask, options.mapping_options);
      } else {
        c.merged.mask = template_mask;
        for (LabelId k : template_mask.present_labels()) {
          if (k != kBackgroundLabel) c.merged.provenance[k] = RegionSource::kTemplate;
        }
      }
      for (const auto& w : c.merged.warnings) out.warnings.push_back(entry.entry_id + ": " + w);
      c.photo = synthesizer.synthesize({c.merged.mask, std::move(template_mask), entry, options.style});
      c.portrait = options.style == PortraitStyle::kPhoto ? c.photo : stylize_lines(c.photo, options.stylize);
      c.synthesis_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
      if (on_candidate) on_candidate(c);
      out.candidates.push_back(std::move(c));
    } catch (const Error& e) {
      out.warnings.push_back("candidate for '" + entry.entry_id + "' skipped: " + e.what());
    }
  }
  if (out.candidates.empty()) {
    std::string msg = "every candidate failed";
    if (!out.warnings.empty()) msg += " (last: " + out.warnings.back() + ")";
    throw Error(msg);
  }
  return out;
}

}  // namespace dualface

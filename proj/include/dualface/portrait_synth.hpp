#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dualface/mask_pipeline.hpp"
#include "dualface/sketch_mask_mapper.hpp"

namespace dualface {

// 1 = foreground (any non-background label), 0 = background.
using BinaryBackgroundMask = BinaryRaster;

BinaryBackgroundMask background_mask(const LabelMask& mask);

enum class PortraitStyle { kPhoto, kSketchLines };

std::string to_string(PortraitStyle style);
PortraitStyle parse_portrait_style(std::string_view text);

struct SynthesisRequest {
  LabelMask merged_mask;
  LabelMask template_mask;
  DatasetEntry template_entry;  // image_path must be readable
  PortraitStyle style = PortraitStyle::kSketchLines;
};

class PortraitSynthesizer {
 public:
  virtual ~PortraitSynthesizer() = default;
  virtual std::string name() const = 0;
  // Grayscale portrait (before line stylization), same size as the merged mask.
  virtual GrayImage synthesize(const SynthesisRequest& request) const = 0;
};

// Per label, resamples the template image's content from the template region's bounding box onto
// the merged region's bounding box (bilinear over same-label source pixels; the label's mean tone
// where the mapped point falls outside it). Background is white.
class RegionCompositeSynthesizer final : public PortraitSynthesizer {
 public:
  std::string name() const override { return "region-composite"; }
  GrayImage synthesize(const SynthesisRequest& request) const override;
};

// Runs a shell command built from a template with {mask}, {image} and {out} placeholders. The mask
// is written as an 8-bit label raster; success means exit status 0 and a readable raster at {out}.
class ExternalProcessSynthesizer final : public PortraitSynthesizer {
 public:
  ExternalProcessSynthesizer(std::string command_template, std::filesystem::path work_dir = {});
  std::string name() const override { return "external"; }
  GrayImage synthesize(const SynthesisRequest& request) const override;

 private:
  std::string command_template_;
  std::filesystem::path work_dir_;
};

struct SynthConfig {
  std::string impl = "region-composite";
  std::string external_command;
  std::filesystem::path work_dir;
};

class SynthesizerRegistry {
 public:
  using Factory = std::function<std::unique_ptr<PortraitSynthesizer>(const SynthConfig&)>;

  // Pre-populated with "region-composite" and "external".
  static SynthesizerRegistry with_builtins();

  void add(std::string name, Factory factory);
  bool contains(const std::string& name) const { return factories_.contains(name); }
  std::vector<std::string> names() const;
  // Throws NotFoundError for names never registered.
  std::unique_ptr<PortraitSynthesizer> create(const SynthConfig& config) const;

 private:
  std::map<std::string, Factory> factories_;
};

struct StylizeParams {
  double sigma = 1.0;
  double k = 1.6;         // ratio of the wide to the narrow Gaussian
  double threshold = 4.0; // gray levels of negative DoG response needed for ink
  std::uint8_t ink = 0;
  std::uint8_t paper = 255;
};

// Difference-of-Gaussians line drawing: ink where the narrow blur is darker than the wide one.
GrayImage stylize_lines(const GrayImage& portrait, const StylizeParams& params = {});

struct GuidanceCandidate {
  std::string candidate_id;
  std::string template_entry_id;
  int rank = 0;           // retrieval rank of the template, 1-based
  GrayImage portrait;     // the guidance underlay (stylized unless style is photo)
  GrayImage photo;        // synthesizer output before stylization
  MergedMask merged;
  double template_score = 0.0;  // shape fit of the strokes to this template; NaN without strokes
  double synthesis_ms = 0.0;
};

struct CandidateOptions {
  PortraitStyle style = PortraitStyle::kSketchLines;
  bool mapping = true;  // false: template mask passed through unchanged
  MappingOptions mapping_options;
  StylizeParams stylize;
};

struct CandidateSet {
  std::vector<GuidanceCandidate> candidates;  // retrieval-rank order
  std::vector<std::string> warnings;
};

// Templates are given in retrieval-rank order. A failing template is skipped with a warning;
// if none succeed an Error is thrown. `on_candidate` fires as each candidate completes.
CandidateSet generate_candidates(const StrokeSet& strokes, std::span<const DatasetEntry> templates,
                                 const Palette& palette, const PortraitSynthesizer& synthesizer,
                                 const CandidateOptions& options = {},
                                 const std::function<void(const GuidanceCandidate&)>& on_candidate = {});

}  // namespace dualface

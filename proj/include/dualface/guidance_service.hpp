#pragma once

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "dualface/portrait_synth.hpp"
#include "dualface/retrieval_index.hpp"
#include "dualface/shadow.hpp"
#include "dualface/sketch.hpp"

namespace dualface {

enum class TemplateSelection { kScore, kRank };

struct ServiceConfig {
  std::filesystem::path index_path;
  std::filesystem::path codebook_path;
  std::filesystem::path manifest_path;
  int top_n = 3;
  SynthConfig synth;
  std::string listen = "127.0.0.1:8080";
  std::chrono::seconds session_ttl{3600};
  std::filesystem::path data_dir;  // empty: sessions live in memory only
  ShadowWeighting weighting = ShadowWeighting::kEqual;
  PortraitStyle style = PortraitStyle::kSketchLines;
  TemplateSelection selection = TemplateSelection::kScore;
  int hull_k = 5;

  void validate() const;
};

// Relative paths resolve against `base_dir`.
ServiceConfig parse_service_config(std::string_view text, const std::filesystem::path& base_dir);
ServiceConfig load_service_config(const std::filesystem::path& path);
// DUALFACE_INDEX and DUALFACE_LISTEN take precedence over the file.
void apply_env_overrides(ServiceConfig& config,
                         const std::function<const char*(const char*)>& getenv_fn = [](const char* k) {
                           return std::getenv(k);
                         });

struct HostPort {
  std::string host;
  int port = 0;
};
HostPort parse_listen(const std::string& listen);

// Shared read-only resources: index, palette, synthesizer, and a contour cache.
class GuidanceEngine {
 public:
  struct Options {
    int top_n = 3;
    ShadowWeighting weighting = ShadowWeighting::kEqual;
    PortraitStyle style = PortraitStyle::kSketchLines;
    TemplateSelection selection = TemplateSelection::kScore;
    int hull_k = 5;
  };

  GuidanceEngine(std::shared_ptr<const RetrievalIndex> index, Palette palette,
                 std::shared_ptr<const PortraitSynthesizer> synthesizer, Options options);

  static std::shared_ptr<GuidanceEngine> from_config(const ServiceConfig& config);

  const RetrievalIndex& index() const { return *index_; }
  const Palette& palette() const { return palette_; }
  const Options& options() const { return options_; }

  struct Shadow {
    std::vector<RetrievalResult> results;
    std::optional<ShadowImage> image;  // absent for a blank sketch
    double retrieval_ms = 0.0;
  };
  Shadow shadow_for(const StrokeSet& sketch) const;

  CandidateSet candidates_for(const StrokeSet& sketch, const std::vector<std::string>& template_ids,
                              const std::function<void(const GuidanceCandidate&)>& on_candidate = {}) const;

  // Index of the default candidate: lowest template score, or rank 1 under kRank.
  std::size_t default_candidate(const std::vector<GuidanceCandidate>& candidates) const;

 private:
  std::shared_ptr<const ContourSketch> contour(const IndexEntry& entry) const;

  std::shared_ptr<const RetrievalIndex> index_;
  Palette palette_;
  std::shared_ptr<const PortraitSynthesizer> synthesizer_;
  Options options_;
  mutable std::mutex cache_mutex_;
  mutable std::map<std::string, std::shared_ptr<const ContourSketch>> contours_;
};

enum class Stage { kGlobal, kLocal };
std::string to_string(Stage stage);
Stage parse_stage(std::string_view text);

struct Edit {
  enum class Kind { kAdd, kErase, kUndo };
  Kind kind = Kind::kAdd;
  std::vector<Vertex> points;  // add
  double width = 3.0;          // add
  Vertex click;                // erase
  double tolerance = kDefaultEraseTolerance;
};

// `{"version":1,"op":"add","points":[[x,y],...],"width":w}`, `{"op":"erase","point":[x,y]}`, `{"op":"undo"}`.
Edit parse_edit(std::string_view text);

struct SessionState {
  std::string session_id;
  Stage stage = Stage::kGlobal;
  StrokeSet sketch;
  std::optional<StrokeSet> saved_global_sketch;
  std::vector<GuidanceCandidate> candidates;
  std::optional<std::string> selected_candidate;
  std::optional<ShadowImage> shadow;
  std::vector<RetrievalResult> last_results;
  std::vector<std::string> warnings;  // from the last stage switch
};

struct EditOutcome {
  Stage stage = Stage::kGlobal;
  std::size_t stroke_count = 0;
  std::vector<RetrievalResult> results;  // global stage only
  bool shadow = false;
  double retrieval_ms = 0.0;
};

// Export bundle: the global sketch, the contour of the merged mask, the guidance underlay and
// the final drawing. Rasters are PNG bytes; empty when not applicable.
struct SessionExport {
  std::string sketch_document;
  std::string stage;
  std::vector<std::uint8_t> user_sketch_png;
  std::vector<std::uint8_t> revised_contour_png;
  std::vector<std::uint8_t> merged_mask_png;
  std::vector<std::uint8_t> local_guidance_png;
  std::vector<std::uint8_t> final_result_png;
  std::vector<std::uint8_t> shadow_png;
  std::optional<std::string> selected_candidate;
};

class GuidanceService {
 public:
  using Clock = std::function<std::chrono::steady_clock::time_point()>;

  struct Options {
    std::filesystem::path data_dir;
    std::chrono::seconds session_ttl{3600};
    Clock clock = [] { return std::chrono::steady_clock::now(); };
  };

  GuidanceService(std::shared_ptr<const GuidanceEngine> engine, Options options);

  const GuidanceEngine& engine() const { return *engine_; }

  std::string create_session();
  std::string create_session(const StrokeSet& initial);
  SessionState session(const std::string& id);
  EditOutcome apply_edit(const std::string& id, const Edit& edit);
  std::optional<ShadowImage> shadow(const std::string& id);
  // Switching to local with an empty sketch throws ValidationError and leaves the stage alone.
  SessionState switch_stage(const std::string& id, Stage target,
                            const std::function<void(const GuidanceCandidate&)>& on_candidate = {});
  std::vector<GuidanceCandidate> list_candidates(const std::string& id);
  GuidanceCandidate select_candidate(const std::string& id, const std::string& candidate_id);
  SessionExport export_session(const std::string& id);

  std::size_t cached_sessions();
  void evict_expired();

 private:
  struct Slot {
    std::mutex mutex;
    SessionState state;
    std::chrono::steady_clock::time_point last_access;
    std::vector<std::string> candidate_templates;
  };

  std::shared_ptr<Slot> acquire(const std::string& id);
  std::shared_ptr<Slot> restore(const std::string& id);
  void persist(const Slot& slot) const;
  void refresh_shadow(SessionState& state) const;
  std::string fresh_id();

  std::shared_ptr<const GuidanceEngine> engine_;
  Options options_;
  std::mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<Slot>> sessions_;
  std::uint64_t id_counter_ = 0;
  std::uint64_t id_salt_ = 0;
};

// Persisted session document (sketches and stage metadata).
std::string session_document(const SessionState& state, const std::vector<std::string>& candidate_templates);

}  // namespace dualface

#include "dualface/guidance_service.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "dualface/image_io.hpp"

namespace dualface {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_atomic(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << text;
    if (!out) throw IoError("cannot write " + tmp.string());
  }
  fs::rename(tmp, path);
}

double elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

Vertex parse_point(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
    throw ParseError(where + ": expected [x, y]");
  }
  return {j[0].get<double>(), j[1].get<double>()};
}

}  // namespace

void ServiceConfig::validate() const {
  if (top_n < 1) throw ValidationError("top_n must be at least 1");
  if (hull_k < 3) throw ValidationError("hull_k must be at least 3");
  if (session_ttl.count() <= 0) throw ValidationError("session_ttl must be positive");
  parse_listen(listen);
}

ServiceConfig parse_service_config(std::string_view text, const fs::path& base_dir) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ParseError("config must be a JSON object");
  ServiceConfig c;
  auto path_of = [&](const char* key) -> fs::path {
    if (!doc.contains(key)) return {};
    fs::path p = doc.at(key).get<std::string>();
    return p.is_absolute() || p.empty() ? p : base_dir / p;
  };
  try {
    c.index_path = path_of("index");
    c.codebook_path = path_of("codebook");
    c.manifest_path = path_of("manifest");
    c.data_dir = path_of("data_dir");
    c.top_n = doc.value("top_n", c.top_n);
    c.listen = doc.value("listen", c.listen);
    c.session_ttl = std::chrono::seconds(doc.value("session_ttl_s", static_cast<long>(c.session_ttl.count())));
    c.hull_k = doc.value("hull_k", c.hull_k);
    const std::string weighting = doc.value("weighting", std::string("equal"));
    if (weighting == "equal") {
      c.weighting = ShadowWeighting::kEqual;
    } else if (weighting == "similarity") {
      c.weighting = ShadowWeighting::kSimilarity;
    } else {
      throw ValidationError("unknown weighting '" + weighting + "'");
    }
    c.style = parse_portrait_style(doc.value("style", std::string("sketch-lines")));
    const std::string selection = doc.value("template_selection", std::string("score"));
    if (selection == "score") {
      c.selection = TemplateSelection::kScore;
    } else if (selection == "rank") {
      c.selection = TemplateSelection::kRank;
    } else {
      throw ValidationError("unknown template_selection '" + selection + "'");
    }
    if (doc.contains("synth")) {
      const json& s = doc.at("synth");
      c.synth.impl = s.value("impl", c.synth.impl);
      c.synth.external_command = s.value("command", std::string());
      if (s.contains("work_dir")) c.synth.work_dir = s.at("work_dir").get<std::string>();
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("config field has the wrong type: ") + e.what());
  }
  c.validate();
  return c;
}

ServiceConfig load_service_config(const fs::path& path) {
  return parse_service_config(read_text(path), fs::absolute(path).parent_path());
}

void apply_env_overrides(ServiceConfig& config, const std::function<const char*(const char*)>& getenv_fn) {
  if (const char* v = getenv_fn("DUALFACE_INDEX"); v && *v) config.index_path = v;
  if (const char* v = getenv_fn("DUALFACE_LISTEN"); v && *v) config.listen = v;
  config.validate();
}

HostPort parse_listen(const std::string& listen) {
  const auto colon = listen.rfind(':');
  if (colon == std::string::npos || colon == 0) throw ValidationError("listen must be host:port, got '" + listen + "'");
  HostPort hp{listen.substr(0, colon), 0};
  try {
    std::size_t used = 0;
    hp.port = std::stoi(listen.substr(colon + 1), &used);
    if (used != listen.size() - colon - 1) throw std::invalid_argument("trailing");
  } catch (const std::exception&) {
    throw ValidationError("listen port is not a number: '" + listen + "'");
  }
  if (hp.port < 0 || hp.port > 65535) throw ValidationError("listen port out of range: '" + listen + "'");
  return hp;
}

GuidanceEngine::GuidanceEngine(std::shared_ptr<const RetrievalIndex> index, Palette palette,
                               std::shared_ptr<const PortraitSynthesizer> synthesizer, Options options)
    : index_(std::move(index)), palette_(std::move(palette)), synthesizer_(std::move(synthesizer)), options_(options) {
  if (!index_) throw ValidationError("engine needs an index");
  if (!synthesizer_) throw ValidationError("engine needs a synthesizer");
  if (options_.top_n < 1) throw ValidationError("top_n must be at least 1");
}

std::shared_ptr<GuidanceEngine> GuidanceEngine::from_config(const ServiceConfig& config) {
  config.validate();
  if (config.codebook_path.empty() || config.index_path.empty() || config.manifest_path.empty()) {
    throw ValidationError("config needs index, codebook and manifest paths");
  }
  auto codebook = std::make_shared<const Codebook>(load_codebook(config.codebook_path));
  auto index = std::make_shared<const RetrievalIndex>(load_index(config.index_path, codebook));
  const DatasetManifest manifest = load_manifest(config.manifest_path);
  std::shared_ptr<const PortraitSynthesizer> synth = SynthesizerRegistry::with_builtins().create(config.synth);
  return std::make_shared<GuidanceEngine>(std::move(index), manifest.palette, std::move(synth),
                                          Options{config.top_n, config.weighting, config.style, config.selection,
                                                  config.hull_k});
}

std::shared_ptr<const ContourSketch> GuidanceEngine::contour(const IndexEntry& entry) const {
  {
    std::lock_guard lock(cache_mutex_);
    auto it = contours_.find(entry.entry_id);
    if (it != contours_.end()) return it->second;
  }
  auto loaded = std::make_shared<const ContourSketch>(from_gray8(read_gray8(entry.contour_path)));
  if (loaded->size() != index_->canvas()) throw ValidationError("contour for '" + entry.entry_id + "' has the wrong size");
  std::lock_guard lock(cache_mutex_);
  return contours_.emplace(entry.entry_id, std::move(loaded)).first->second;
}

GuidanceEngine::Shadow GuidanceEngine::shadow_for(const StrokeSet& sketch) const {
  const auto start = std::chrono::steady_clock::now();
  Shadow out;
  out.results = index_->query(rasterize(sketch, index_->canvas()), options_.top_n);
  if (!out.results.empty()) {
    std::vector<ContourSketch> sources;
    for (const auto& r : out.results) sources.push_back(*contour(*index_->find(r.entry_id)));
    const auto weights = shadow_weights(out.results, options_.weighting);
    out.image = blend_shadow(sources, std::span<const double>(weights));
  }
  out.retrieval_ms = elapsed_ms(start);
  return out;
}

CandidateSet GuidanceEngine::candidates_for(const StrokeSet& sketch, const std::vector<std::string>& template_ids,
                                            const std::function<void(const GuidanceCandidate&)>& on_candidate) const {
  std::vector<DatasetEntry> templates;
  for (const auto& id : template_ids) {
    const IndexEntry* e = index_->find(id);
    if (!e) throw NotFoundError("template '" + id + "' is not in the index");
    templates.push_back(e->dataset_entry());
  }
  CandidateOptions opts;
  opts.style = options_.style;
  opts.mapping_options.hull_k = options_.hull_k;
  return generate_candidates(sketch, templates, palette_, *synthesizer_, opts, on_candidate);
}

std::size_t GuidanceEngine::default_candidate(const std::vector<GuidanceCandidate>& candidates) const {
  if (candidates.empty()) throw ValidationError("no candidates");
  if (options_.selection == TemplateSelection::kRank) return 0;
  std::size_t best = 0;
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    if (candidates[i].template_score < candidates[best].template_score) best = i;
  }
  return best;
}

std::string to_string(Stage stage) { return stage == Stage::kGlobal ? "global" : "local"; }

Stage parse_stage(std::string_view text) {
  if (text == "global") return Stage::kGlobal;
  if (text == "local") return Stage::kLocal;
  throw ValidationError("unknown stage '" + std::string(text) + "'");
}

Edit parse_edit(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("edit is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ParseError("edit must be a JSON object");
  if (doc.contains("version") && doc.at("version") != 1) throw ParseError("edit: unsupported version");
  if (!doc.contains("op") || !doc.at("op").is_string()) throw ParseError("edit: missing field 'op'");
  const std::string op = doc.at("op").get<std::string>();
  Edit e;
  if (op == "add") {
    e.kind = Edit::Kind::kAdd;
    if (!doc.contains("points") || !doc.at("points").is_array()) throw ParseError("edit: missing field 'points'");
    for (std::size_t i = 0; i < doc.at("points").size(); ++i) {
      e.points.push_back(parse_point(doc.at("points")[i], "edit.points[" + std::to_string(i) + "]"));
    }
    if (doc.contains("width")) {
      if (!doc.at("width").is_number()) throw ParseError("edit: 'width' must be a number");
      e.width = doc.at("width").get<double>();
    }
  } else if (op == "erase") {
    e.kind = Edit::Kind::kErase;
    if (!doc.contains("point")) throw ParseError("edit: missing field 'point'");
    e.click = parse_point(doc.at("point"), "edit.point");
    if (doc.contains("tolerance")) {
      if (!doc.at("tolerance").is_number()) throw ParseError("edit: 'tolerance' must be a number");
      e.tolerance = doc.at("tolerance").get<double>();
    }
  } else if (op == "undo") {
    e.kind = Edit::Kind::kUndo;
  } else {
    throw ParseError("edit: unknown op '" + op + "'");
  }
  return e;
}

std::string session_document(const SessionState& state, const std::vector<std::string>& candidate_templates) {
  json doc = json::object();
  doc["version"] = 1;
  doc["session_id"] = state.session_id;
  doc["stage"] = to_string(state.stage);
  doc["sketch"] = json::parse(save_sketch(state.sketch));
  doc["saved_global_sketch"] =
      state.saved_global_sketch ? json::parse(save_sketch(*state.saved_global_sketch)) : json(nullptr);
  doc["candidate_templates"] = candidate_templates;
  doc["selected_candidate"] = state.selected_candidate ? json(*state.selected_candidate) : json(nullptr);
  return doc.dump(2);
}

GuidanceService::GuidanceService(std::shared_ptr<const GuidanceEngine> engine, Options options)
    : engine_(std::move(engine)), options_(std::move(options)) {
  if (!engine_) throw ValidationError("service needs an engine");
  if (!options_.data_dir.empty()) fs::create_directories(options_.data_dir);
  id_salt_ = (std::uint64_t(std::random_device{}()) << 32) ^ std::random_device{}() ^
             static_cast<std::uint64_t>(std::chrono::system_clock::now().time_since_epoch().count());
}

std::string GuidanceService::fresh_id() {
  // splitmix64 over a salted counter: unique per process, unpredictable across restarts.
  std::uint64_t z = id_salt_ + 0x9e3779b97f4a7c15ULL * ++id_counter_;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  z ^= z >> 31;
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(z));
  return buf;
}

std::string GuidanceService::create_session() { return create_session(StrokeSet(engine_->index().canvas())); }

std::string GuidanceService::create_session(const StrokeSet& initial) {
  if (initial.canvas() != engine_->index().canvas()) throw ValidationError("sketch canvas differs from the index canvas");
  auto slot = std::make_shared<Slot>();
  slot->state.sketch = initial;
  if (!initial.empty()) refresh_shadow(slot->state);
  slot->last_access = options_.clock();
  std::lock_guard lock(sessions_mutex_);
  std::string id;
  do {
    id = fresh_id();
  } while (sessions_.contains(id) || (!options_.data_dir.empty() && fs::exists(options_.data_dir / (id + ".json"))));
  slot->state.session_id = id;
  persist(*slot);
  sessions_.emplace(id, slot);
  return id;
}

void GuidanceService::evict_expired() {
  std::lock_guard lock(sessions_mutex_);
  const auto now = options_.clock();
  for (auto it = sessions_.begin(); it != sessions_.end();) {
    // A slot held by an in-flight request is never dropped.
    if (it->second.use_count() == 1 && now - it->second->last_access > options_.session_ttl) {
      it = sessions_.erase(it);
    } else {
      ++it;
    }
  }
}

std::size_t GuidanceService::cached_sessions() {
  std::lock_guard lock(sessions_mutex_);
  return sessions_.size();
}

std::shared_ptr<GuidanceService::Slot> GuidanceService::acquire(const std::string& id) {
  evict_expired();
  {
    std::lock_guard lock(sessions_mutex_);
    auto it = sessions_.find(id);
    if (it != sessions_.end()) {
      it->second->last_access = options_.clock();
      return it->second;
    }
  }
  auto slot = restore(id);
  std::lock_guard lock(sessions_mutex_);
  auto [it, inserted] = sessions_.emplace(id, slot);
  it->second->last_access = options_.clock();
  return it->second;
}

std::shared_ptr<GuidanceService::Slot> GuidanceService::restore(const std::string& id) {
  const bool plausible = !id.empty() && id.size() <= 64 && std::all_of(id.begin(), id.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_';
  });
  if (options_.data_dir.empty() || !plausible || !fs::exists(options_.data_dir / (id + ".json"))) {
    throw NotFoundError("no session '" + id + "'");
  }
  json doc;
  try {
    doc = json::parse(read_text(options_.data_dir / (id + ".json")));
  } catch (const json::parse_error& e) {
    throw ParseError("session '" + id + "' is corrupt: " + e.what());
  }
  auto slot = std::make_shared<Slot>();
  SessionState& s = slot->state;
  s.session_id = id;
  s.stage = parse_stage(doc.at("stage").get<std::string>());
  s.sketch = load_sketch(doc.at("sketch").dump()).sketch;
  if (!doc.at("saved_global_sketch").is_null()) {
    s.saved_global_sketch = load_sketch(doc.at("saved_global_sketch").dump()).sketch;
  }
  slot->candidate_templates = doc.value("candidate_templates", std::vector<std::string>{});
  if (!doc.at("selected_candidate").is_null()) s.selected_candidate = doc.at("selected_candidate").get<std::string>();
  if (s.stage == Stage::kGlobal) {
    refresh_shadow(s);
  } else if (s.saved_global_sketch && !slot->candidate_templates.empty()) {
    // Candidates are deterministic in (sketch, templates), so they are rebuilt rather than stored.
    CandidateSet set = engine_->candidates_for(*s.saved_global_sketch, slot->candidate_templates);
    s.candidates = std::move(set.candidates);
    s.warnings = std::move(set.warnings);
  }
  return slot;
}

void GuidanceService::persist(const Slot& slot) const {
  if (options_.data_dir.empty()) return;
  write_text_atomic(options_.data_dir / (slot.state.session_id + ".json"),
                    session_document(slot.state, slot.candidate_templates));
}

void GuidanceService::refresh_shadow(SessionState& state) const {
  GuidanceEngine::Shadow shadow = engine_->shadow_for(state.sketch);
  state.last_results = std::move(shadow.results);
  state.shadow = std::move(shadow.image);
}

SessionState GuidanceService::session(const std::string& id) {
  auto slot = acquire(id);
  std::lock_guard lock(slot->mutex);
  return slot->state;
}

EditOutcome GuidanceService::apply_edit(const std::string& id, const Edit& edit) {
  auto slot = acquire(id);
  std::lock_guard lock(slot->mutex);
  SessionState& s = slot->state;
  switch (edit.kind) {
    case Edit::Kind::kAdd:
      s.sketch = add_stroke(s.sketch, edit.points, edit.width);
      break;
    case Edit::Kind::kErase:
      if (!(edit.tolerance >= 0.0)) throw ValidationError("erase tolerance must be non-negative");
      s.sketch = erase_stroke(s.sketch, edit.click, edit.tolerance);
      break;
    case Edit::Kind::kUndo:
      s.sketch = undo(s.sketch);
      break;
  }
  EditOutcome out;
  out.stage = s.stage;
  out.stroke_count = s.sketch.size();
  if (s.stage == Stage::kGlobal) {
    const auto start = std::chrono::steady_clock::now();
    refresh_shadow(s);
    out.retrieval_ms = elapsed_ms(start);
    out.results = s.last_results;
    out.shadow = s.shadow.has_value();
  }
  persist(*slot);
  return out;
}

std::optional<ShadowImage> GuidanceService::shadow(const std::string& id) {
  auto slot = acquire(id);
  std::lock_guard lock(slot->mutex);
  return slot->state.shadow;
}

SessionState GuidanceService::switch_stage(const std::string& id, Stage target,
                                           const std::function<void(const GuidanceCandidate&)>& on_candidate) {
  auto slot = acquire(id);
  std::lock_guard lock(slot->mutex);
  SessionState& s = slot->state;
  if (s.stage == target) return s;
  if (target == Stage::kLocal) {
    if (s.sketch.empty()) {
      throw ValidationError("draw the face contours first: local guidance needs a global-stage sketch");
    }
    std::vector<RetrievalResult> results = s.last_results;
    if (results.empty()) results = engine_->shadow_for(s.sketch).results;
    if (results.empty()) throw ValidationError("the sketch matched no templates");
    std::vector<std::string> ids;
    for (const auto& r : results) ids.push_back(r.entry_id);
    // Generate before touching state so a failure leaves the session in the global stage.
    CandidateSet set = engine_->candidates_for(s.sketch, ids, on_candidate);
    s.saved_global_sketch = s.sketch;
    s.candidates = std::move(set.candidates);
    s.warnings = std::move(set.warnings);
    slot->candidate_templates.clear();
    for (const auto& c : s.candidates) slot->candidate_templates.push_back(c.template_entry_id);
    s.selected_candidate = s.candidates[engine_->default_candidate(s.candidates)].candidate_id;
    s.stage = Stage::kLocal;
  } else {
    if (s.saved_global_sketch) s.sketch = *s.saved_global_sketch;
    s.stage = Stage::kGlobal;
    s.candidates.clear();
    s.selected_candidate.reset();
    s.warnings.clear();
    slot->candidate_templates.clear();
    refresh_shadow(s);
  }
  persist(*slot);
  return s;
}

std::vector<GuidanceCandidate> GuidanceService::list_candidates(const std::string& id) {
  auto slot = acquire(id);
  std::lock_guard lock(slot->mutex);
  if (slot->state.stage != Stage::kLocal) throw ConflictError("candidates exist only in the local stage");
  return slot->state.candidates;
}

GuidanceCandidate GuidanceService::select_candidate(const std::string& id, const std::string& candidate_id) {
  auto slot = acquire(id);
  std::lock_guard lock(slot->mutex);
  SessionState& s = slot->state;
  if (s.stage != Stage::kLocal) throw ConflictError("candidates can only be selected in the local stage");
  for (const auto& c : s.candidates) {
    if (c.candidate_id == candidate_id) {
      s.selected_candidate = candidate_id;
      persist(*slot);
      return c;
    }
  }
  throw NotFoundError("no candidate '" + candidate_id + "' in session '" + id + "'");
}

SessionExport GuidanceService::export_session(const std::string& id) {
  auto slot = acquire(id);
  std::lock_guard lock(slot->mutex);
  const SessionState& s = slot->state;
  SessionExport out;
  out.sketch_document = save_sketch(s.sketch);
  out.stage = to_string(s.stage);
  const CanvasSize canvas = s.sketch.canvas();
  const StrokeSet& global = s.saved_global_sketch ? *s.saved_global_sketch : s.sketch;
  out.user_sketch_png = encode_png(to_gray8(rasterize(global, canvas)));
  out.final_result_png = encode_png(to_gray8(rasterize(s.sketch, canvas)));
  if (s.shadow) out.shadow_png = encode_png(shadow_to_gray8(*s.shadow));
  out.selected_candidate = s.selected_candidate;
  for (const auto& c : s.candidates) {
    if (s.selected_candidate && c.candidate_id == *s.selected_candidate) {
      out.merged_mask_png = encode_png(c.merged.mask.labels());
      out.revised_contour_png = encode_png(to_gray8(extract_contours(c.merged.mask)));
      out.local_guidance_png = encode_png(c.portrait);
    }
  }
  return out;
}

}  // namespace dualface

#include "structfill/pipeline.hpp"

#include <charconv>
#include <chrono>
#include <fstream>
#include <functional>
#include <sstream>

#include "json.hpp"
#include "structfill/debug.hpp"

namespace structfill::pipeline {

namespace fs = std::filesystem;
using imagery::MaskRegion;
using imagery::RasterImage;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end || !std::isfinite(out))
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

long long parse_int(const std::string& key, const std::string& v) {
  long long out = 0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return out;
}

int parse_small_int(const std::string& key, const std::string& v) {
  const long long n = parse_int(key, v);
  if (n < -1000000000LL || n > 1000000000LL) throw ConfigError(key + ": value out of range [-1e9, 1e9]");
  return static_cast<int>(n);
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "on" || v == "yes" || v == "1") return true;
  if (v == "false" || v == "off" || v == "no" || v == "0") return false;
  throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

std::string fmt(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

struct Setting {
  std::string key;
  std::function<void(JobConfig&, const std::string&)> set;
  std::function<std::string(const JobConfig&)> get;
};

#define SF_DOUBLE(name, field) \
  Setting{name, [](JobConfig& c, const std::string& v) { c.field = parse_double(name, v); }, \
          [](const JobConfig& c) { return fmt(c.field); }}
#define SF_INT(name, field) \
  Setting{name, [](JobConfig& c, const std::string& v) { c.field = parse_small_int(name, v); }, \
          [](const JobConfig& c) { return std::to_string(c.field); }}
#define SF_BOOL(name, field) \
  Setting{name, [](JobConfig& c, const std::string& v) { c.field = parse_bool(name, v); }, \
          [](const JobConfig& c) { return std::string(c.field ? "true" : "false"); }}
#define SF_STRING(name, field) \
  Setting{name, [](JobConfig& c, const std::string& v) { c.field = v; }, \
          [](const JobConfig& c) { return c.field; }}

const std::vector<Setting>& settings() {
  static const std::vector<Setting> table{
      SF_STRING("input", input),
      SF_STRING("mask", mask),
      SF_STRING("output", output),
      SF_INT("patch_size", patch_size),
      Setting{"seed", [](JobConfig& c, const std::string& v) { c.seed = parse_u64("seed", v); },
              [](const JobConfig& c) { return std::to_string(c.seed); }},
      SF_STRING("debug_dir", debug_dir),
      SF_BOOL("structure", use_structure),
      SF_DOUBLE("gpb.sigma", gpb.sigma),
      SF_DOUBLE("gpb.beta", gpb.beta),
      SF_DOUBLE("gpb.gamma", gpb.gamma),
      SF_INT("gpb.orientations", gpb.orientations),
      SF_INT("gpb.radius", gpb.radius),
      SF_INT("gpb.bins", gpb.bins),
      SF_DOUBLE("structure.t_init", structure.t_init),
      SF_DOUBLE("structure.dt", structure.dt),
      SF_DOUBLE("structure.delta_t", structure.delta_t),
      SF_DOUBLE("structure.delta_h", structure.delta_h),
      SF_DOUBLE("structure.eps_l", structure.eps_l),
      SF_DOUBLE("structure.kappa_u", structure.kappa_u),
      SF_DOUBLE("structure.sample_spacing", structure.sample_spacing),
      SF_DOUBLE("structure.eps_fit", structure.eps_fit),
      SF_DOUBLE("structure.seg_penalty", structure.seg_penalty),
      SF_INT("structure.tangent_window", structure.tangent_window),
      SF_INT("structure.trace_length", structure.trace_length),
      SF_DOUBLE("structure.twin_gap", structure.twin_gap),
      SF_DOUBLE("structure.max_end_curvature", structure.max_end_curvature),
      SF_DOUBLE("structure.escape_tolerance", structure.escape_tolerance),
      SF_DOUBLE("structure.join_tolerance", structure.join_tolerance),
      SF_DOUBLE("structure.min_chord", structure.min_chord),
      SF_INT("propagation.m_max", propagation.m_max),
      SF_INT("propagation.band", propagation.band),
      SF_DOUBLE("propagation.delta", propagation.delta),
      SF_INT("propagation.max_iter", propagation.max_iter),
      SF_DOUBLE("propagation.damping", propagation.damping),
      SF_INT("propagation.rotations", propagation.rotations),
      SF_INT("propagation.label_cap", propagation.label_cap),
      SF_BOOL("propagation.literal_penalty", propagation.literal_penalty),
      Setting{"fill.search",
              [](JobConfig& c, const std::string& v) {
                if (v == "full") c.fill.search = fill::SearchMode::Full;
                else if (v == "band") c.fill.search = fill::SearchMode::Band;
                else throw ConfigError("fill.search: expected full or band, got '" + v + "'");
              },
              [](const JobConfig& c) { return std::string(c.fill.search == fill::SearchMode::Band ? "band" : "full"); }},
      SF_INT("fill.snapshot_every", fill.snapshot_every),
  };
  return table;
}

#undef SF_DOUBLE
#undef SF_INT
#undef SF_BOOL
#undef SF_STRING

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& s : settings()) keys.push_back(s.key);
  return keys;
}

void apply_setting(JobConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& s : settings()) {
    if (s.key == key) {
      s.set(cfg, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

propagation::PropagationParams JobConfig::propagation_params() const {
  auto p = propagation;
  p.patch = patch_size;
  p.seed = seed;
  return p;
}

fill::FillParams JobConfig::fill_params() const {
  auto f = fill;
  f.patch = patch_size;
  return f;
}

void JobConfig::validate() const {
  if (patch_size < 5 || patch_size > 51 || patch_size % 2 == 0)
    throw ConfigError("patch_size must be odd and in [5, 51], got " + std::to_string(patch_size));
  gpb.validate();
  if (gpb.gamma > 0.0) throw ConfigError("gpb.gamma must be 0: no spectral detector is built in");
  structure.validate();
  propagation_params().validate();
  fill_params().validate();
}

std::string JobConfig::to_text() const {
  std::ostringstream out;
  for (const auto& s : settings()) out << s.key << " = " << s.get(*this) << '\n';
  return out.str();
}

JobConfig parse_config_text(const std::string& text, JobConfig base) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    const auto hash = body.find(" #");
    if (hash != std::string::npos) body = trim(body.substr(0, hash));
    const auto eq = body.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = trim(body.substr(0, eq));
    const std::string value = trim(body.substr(eq + 1));
    if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": missing key");
    apply_setting(base, key, value);
  }
  return base;
}

JobConfig load_config(const std::optional<fs::path>& file, const std::map<std::string, std::string>& overrides) {
  JobConfig cfg;
  if (file) {
    std::ifstream in(*file);
    if (!in) throw IoError("cannot read config file: " + file->string());
    std::stringstream buf;
    buf << in.rdbuf();
    cfg = parse_config_text(buf.str(), cfg);
  }
  for (const auto& [k, v] : overrides) apply_setting(cfg, k, v);
  cfg.validate();
  return cfg;
}

std::string JobReport::to_json() const {
  nlohmann::json j;
  j["status"] = ok ? "ok" : "error";
  if (!ok) {
    j["failed_stage"] = failed_stage;
    j["error"] = error;
  }
  j["seed"] = seed;
  j["structure"] = structure;
  j["stage_seconds"] = stage_seconds;
  j["terminals"] = terminals;
  j["pairs"] = pairs;
  j["curves"] = curves;
  j["anchors"] = anchors;
  j["candidates"] = candidates;
  j["energy"] = energy;
  j["recomputed_energy"] = recomputed_energy;
  j["fill_iterations"] = fill_iterations;
  j["warnings"] = warnings;
  return j.dump();
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config: return 2;
    case ErrorKind::Io: return 3;
    case ErrorKind::Stage: return 4;
  }
  return 4;
}

JobResult run_job(const RasterImage& image, const MaskRegion& mask, const JobConfig& config) {
  JobResult result;
  JobReport& report = result.report;
  report.seed = config.seed;
  report.structure = config.use_structure;

  auto stage = [&](const std::string& name, const std::function<void()>& body) {
    const auto start = std::chrono::steady_clock::now();
    try {
      body();
    } catch (const Error& e) {
      report.ok = false;
      report.failed_stage = name;
      report.error = e.what();
      throw JobFailure(e.kind(), name + ": " + e.what(), report);
    } catch (const std::exception& e) {
      report.ok = false;
      report.failed_stage = name;
      report.error = e.what();
      throw JobFailure(ErrorKind::Stage, name + ": " + e.what(), report);
    }
    report.stage_seconds[name] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };

  imagery::Canvas canvas;
  const bool debug = !config.debug_dir.empty();
  const fs::path dir = config.debug_dir;
  StageOutputs& out = result.stages;

  stage("setup", [&] {
    config.validate();
    if (image.width() != mask.width() || image.height() != mask.height())
      throw IoError("mask dimensions do not match the image");
    imagery::validate_job_mask(mask);
    canvas = imagery::Canvas::start(image, mask);
    if (debug) debug::prepare_dir(dir);
  });

  if (config.use_structure) {
    stage("contours", [&] {
      const auto stack = imagery::to_channels(image, &mask);
      out.edges = contours::gpb(stack, config.gpb, {}, &mask);
      out.hierarchy = contours::build_hierarchy(out.edges, mask);
      if (debug) {
        debug::write_edges(dir, out.edges);
        debug::write_hierarchy(dir, out.hierarchy, {0.2, 0.4, 0.6, 0.8});
      }
    });
    stage("structure", [&] {
      out.terminals = structure::collect_terminals(out.hierarchy, mask, image, config.structure);
      out.pairs = structure::match_pairs(out.terminals, config.structure);
      for (const auto& pair : out.pairs) {
        auto r = structure::generate_curve(pair, mask, config.structure);
        if (r.curve) out.curves.push_back(std::move(*r.curve));
        else report.warnings.push_back(r.warning);
      }
      report.terminals = static_cast<int>(out.terminals.size());
      report.pairs = static_cast<int>(out.pairs.size());
      report.curves = static_cast<int>(out.curves.size());
      if (debug) debug::write_structure(dir, image, mask, out.terminals, out.pairs, out.curves);
    });
    stage("propagation", [&] {
      if (out.curves.empty()) {
        report.warnings.push_back("no structure curves; filling without propagation");
        if (debug) debug::write_energy_trace(dir, {});
        return;
      }
      out.propagation = propagation::propagate(canvas, out.curves, config.propagation_params());
      report.anchors = static_cast<int>(out.propagation.graph.anchors.size());
      report.candidates = static_cast<int>(out.propagation.candidates.size());
      report.energy = out.propagation.assignment.total_energy;
      report.recomputed_energy = out.propagation.recomputed_energy;
      for (const auto& w : out.propagation.warnings) report.warnings.push_back(w);
      if (debug) {
        debug::write_anchors(dir, image, mask, out.propagation.graph.anchors);
        debug::write_energy_trace(dir, out.propagation.assignment.traces);
      }
    });
  }

  stage("fill", [&] {
    auto params = config.fill_params();
    fill::SnapshotFn snap;
    if (debug) {
      if (params.snapshot_every == 0) params.snapshot_every = 50;
      snap = [&](int iter, const imagery::Canvas& c) { debug::write_fill_snapshot(dir, iter, c); };
    }
    out.fill = fill::fill_remaining(canvas, params, snap);
    report.fill_iterations = out.fill.iterations;
    if (debug) debug::write_fill_snapshot(dir, out.fill.iterations, canvas);
    if (!canvas.mask.empty()) throw StageError("target pixels left after filling");
    for (int y = 0; y < image.height(); ++y)
      for (int x = 0; x < image.width(); ++x)
        if (!mask.target(x, y))
          for (int c = 0; c < image.channels(); ++c)
            if (canvas.image.at(x, y, c) != image.at(x, y, c)) throw StageError("source pixel modified");
  });

  result.image = std::move(canvas.image);
  return result;
}

PipelineOutcome run_pipeline(const JobConfig& config) {
  PipelineOutcome outcome;
  outcome.report.seed = config.seed;
  outcome.report.structure = config.use_structure;
  auto fail = [&](const std::string& stage, ErrorKind kind, const std::string& what) {
    outcome.report.ok = false;
    outcome.report.failed_stage = stage;
    outcome.report.error = what;
    outcome.exit_code = exit_code_for(kind);
    outcome.image.reset();
  };

  RasterImage image;
  MaskRegion mask;
  try {
    if (config.input.empty() || config.mask.empty() || config.output.empty())
      throw ConfigError("input, mask and output paths are required");
    config.validate();
  } catch (const Error& e) {
    fail("config", e.kind(), e.what());
    return outcome;
  }
  try {
    image = imagery::load_image(config.input);
    mask = imagery::load_mask(config.mask, image.width(), image.height());
  } catch (const Error& e) {
    fail("load", e.kind(), e.what());
    return outcome;
  } catch (const std::exception& e) {
    fail("load", ErrorKind::Io, e.what());
    return outcome;
  }
  try {
    JobResult r = run_job(image, mask, config);
    outcome.report = std::move(r.report);
    outcome.image = std::move(r.image);
  } catch (const JobFailure& e) {
    outcome.report = e.report();
    outcome.exit_code = exit_code_for(e.kind());
    return outcome;
  }
  try {
    const auto start = std::chrono::steady_clock::now();
    imagery::save_image(*outcome.image, config.output);
    outcome.report.stage_seconds["write"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  } catch (const Error& e) {
    fail("write", e.kind(), e.what());
  }
  return outcome;
}

}  // namespace structfill::pipeline

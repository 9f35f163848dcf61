#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "structfill/contours.hpp"
#include "structfill/fill.hpp"
#include "structfill/imagery.hpp"
#include "structfill/propagation.hpp"
#include "structfill/structure.hpp"

namespace structfill::pipeline {

struct JobConfig {
  std::string input;
  std::string mask;
  std::string output;
  int patch_size = 9;
  contours::GpbParams gpb;
  structure::StructureParams structure;
  propagation::PropagationParams propagation;
  fill::FillParams fill;
  std::uint64_t seed = 0;
  std::string debug_dir;
  bool use_structure = true;

  /// Pushes the shared patch size and seed into the stage parameters and checks every range.
  void validate() const;
  propagation::PropagationParams propagation_params() const;
  fill::FillParams fill_params() const;

  friend bool operator==(const JobConfig& a, const JobConfig& b) { return a.to_text() == b.to_text(); }
  /// Flat `key = value` form, one line per key; parses back to an equal config.
  std::string to_text() const;
};

/// Every key accepted in config files and overrides.
std::vector<std::string> config_keys();

/// Defaults, then the file (if any), then the overrides; unknown keys and
/// malformed lines raise ConfigError. The result is validated.
JobConfig load_config(const std::optional<std::filesystem::path>& file,
                      const std::map<std::string, std::string>& overrides);
JobConfig parse_config_text(const std::string& text, JobConfig base = {});
void apply_setting(JobConfig& cfg, const std::string& key, const std::string& value);

struct JobReport {
  std::map<std::string, double> stage_seconds;
  int terminals = 0;
  int pairs = 0;
  int curves = 0;
  int anchors = 0;
  int candidates = 0;
  double energy = 0.0;
  double recomputed_energy = 0.0;
  int fill_iterations = 0;
  std::vector<std::string> warnings;
  std::uint64_t seed = 0;
  bool structure = true;
  bool ok = true;
  std::string failed_stage;
  std::string error;

  /// Single-line JSON.
  std::string to_json() const;
};

/// Intermediate products kept for inspection and debugging.
struct StageOutputs {
  contours::EdgeSignal edges;
  contours::ContourHierarchy hierarchy;
  std::vector<structure::EdgeTerminal> terminals;
  std::vector<structure::EdgePair> pairs;
  std::vector<structure::StructureCurve> curves;
  propagation::PropagationResult propagation;
  fill::FillResult fill;
};

struct JobResult {
  imagery::RasterImage image;
  JobReport report;
  StageOutputs stages;
};

/// A stage failure together with the report gathered up to that point.
class JobFailure : public Error {
 public:
  JobFailure(ErrorKind kind, const std::string& what, JobReport report)
      : Error(kind, what), report_(std::move(report)) {}
  const JobReport& report() const { return report_; }

 private:
  JobReport report_;
};

/// Runs the stages on in-memory data; file paths in the config are ignored
/// except the debug directory. Throws JobFailure naming the stage.
JobResult run_job(const imagery::RasterImage& image, const imagery::MaskRegion& mask, const JobConfig& config);

struct PipelineOutcome {
  std::optional<imagery::RasterImage> image;
  JobReport report;
  int exit_code = 0;
};

/// Loads, runs and writes the job; failures are reported, never thrown.
PipelineOutcome run_pipeline(const JobConfig& config);

int exit_code_for(ErrorKind kind);

}  // namespace structfill::pipeline

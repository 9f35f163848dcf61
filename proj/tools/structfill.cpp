#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "structfill/pipeline.hpp"

using namespace structfill;

int main(int argc, char** argv) {
  CLI::App app{"Structure-guided image completion"};
  std::string input, mask, output, config_path, debug_dir;
  std::optional<int> patch_size;
  std::optional<std::uint64_t> seed;
  bool no_structure = false;
  app.add_option("--input", input, "input image (png/jpg)");
  app.add_option("--mask", mask, "mask png, non-zero marks the region to fill");
  app.add_option("--output", output, "output png");
  app.add_option("--config", config_path, "key = value config file");
  app.add_option("--patch-size", patch_size, "patch side, odd");
  app.add_flag("--no-structure", no_structure, "skip structure estimation and propagation");
  app.add_option("--debug-dir", debug_dir, "write intermediate images here");
  app.add_option("--seed", seed, "seed for candidate subsampling");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  std::map<std::string, std::string> overrides;
  if (!input.empty()) overrides["input"] = input;
  if (!mask.empty()) overrides["mask"] = mask;
  if (!output.empty()) overrides["output"] = output;
  if (patch_size) overrides["patch_size"] = std::to_string(*patch_size);
  if (no_structure) overrides["structure"] = "false";
  if (!debug_dir.empty()) overrides["debug_dir"] = debug_dir;
  if (seed) overrides["seed"] = std::to_string(*seed);

  pipeline::JobConfig config;
  try {
    std::optional<std::filesystem::path> file;
    if (!config_path.empty()) file = config_path;
    config = pipeline::load_config(file, overrides);
  } catch (const Error& e) {
    pipeline::JobReport report;
    report.ok = false;
    report.failed_stage = "config";
    report.error = e.what();
    std::cout << report.to_json() << std::endl;
    std::cerr << "structfill: " << e.what() << '\n';
    return pipeline::exit_code_for(e.kind());
  }

  const auto outcome = pipeline::run_pipeline(config);
  std::cout << outcome.report.to_json() << std::endl;
  if (outcome.exit_code != 0) std::cerr << "structfill: " << outcome.report.failed_stage << ": " << outcome.report.error << '\n';
  return outcome.exit_code;
}

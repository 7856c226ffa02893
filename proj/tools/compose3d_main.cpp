#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "compose3d/config.hpp"
#include "compose3d/errors.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Compose a 3D scene from per-box prompts"};
  std::filesystem::path config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out_dir;
  app.add_option("--config", config_path, "Scene configuration (JSON)")->required();
  app.add_option("--seed", seed, "Override the configured seed");
  app.add_option("--out", out_dir, "Override the output directory");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  compose3d::SceneConfig config;
  try {
    config = compose3d::parse_config_file(config_path);
  } catch (const compose3d::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  }
  if (seed) config.seed = *seed;
  if (out_dir) config.output_dir = *out_dir;
  return compose3d::run(config);
}

#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "deconv/cli.hpp"

namespace {

void configure_logging() {
  auto logger = spdlog::stderr_logger_st("deconv");
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::info);
  if (const char* env = std::getenv("DECONV_LOG")) {
    const std::string name(env);
    const auto level = spdlog::level::from_str(name);
    if (level == spdlog::level::off && name != "off")
      spdlog::warn("DECONV_LOG='{}' is not a log level; using info", name);
    else
      spdlog::set_level(level);
  }
}

}  // namespace

int main(int argc, char** argv) {
  configure_logging();
  CLI::App app{"Bayesian multivariate density deconvolution from replicated measurements"};
  app.require_subcommand(1, 1);

  deconv::cli::Options opt;
  std::string config, out = ".";
  std::uint64_t seed = 0;
  for (auto [name, help] : {std::pair{"simulate", "Draw replicated datasets and write the true density"},
                            std::pair{"fit", "Fit a deconvolution model and write density grids"},
                            std::pair{"evaluate", "Score fitted densities against the truth by MISE"}}) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config, "JSON configuration file")->required();
    sub->add_option("--seed", seed, "Override the configured seed");
    sub->add_option("--jobs", opt.jobs, "Worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--out", out, "Output directory")->capture_default_str();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  const CLI::App* sub = app.get_subcommands().front();
  opt.config = config;
  opt.out = out;
  if (sub->count("--seed")) opt.seed = seed;
  return deconv::cli::run(sub->get_name(), opt, [](const std::string& msg) { spdlog::info(msg); }, std::cerr);
}

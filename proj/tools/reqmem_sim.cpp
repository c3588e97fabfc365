// reqmem_sim: scenario runner and CSV fitting front end.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "reqmem/errors.hpp"
#include "reqmem/io.hpp"
#include "reqmem/parallel.hpp"
#include "reqmem/scenario.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

using reqmem::scenario::Scenario;

Scenario load(const std::string& config, const std::string& preset, std::optional<std::uint64_t> seed) {
  if (!config.empty() && !preset.empty()) throw reqmem::ConfigError("give either --config or --preset, not both");
  if (!preset.empty()) return reqmem::scenario::parse_config(reqmem::scenario::preset_config(preset), {}, seed);
  if (config.empty()) throw reqmem::ConfigError("one of --config or --preset is required");
  return reqmem::scenario::load_config(config, seed);
}

void print_scalar(const std::string& name, const nlohmann::json& value) {
  if (value.is_number_float()) std::cout << name << " = " << reqmem::io::format_double(value.get<double>()) << "\n";
  else std::cout << name << " = " << value.dump() << "\n";
}

template <typename Fn>
int guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const reqmem::NumericError& ex) {
    std::cerr << "numeric error: " << ex.what() << "\n";
    return kExitNumeric;
  } catch (const reqmem::ConfigError& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kExitConfig;
  } catch (const reqmem::InvalidParameter& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kExitConfig;
  } catch (const nlohmann::json::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& ex) {
    std::cerr << "numeric error: " << ex.what() << "\n";
    return kExitNumeric;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Rare-earth ensemble spectroscopy and quantum-memory simulations"};
  app.set_version_flag("--version", std::string(reqmem::scenario::toolkit_version()));
  app.require_subcommand(1);

  unsigned threads = 0;
  app.add_option("--threads", threads, "Worker threads (0 = REQMEM_SIM_THREADS or all cores)");

  std::string config, preset, out_dir;
  std::optional<std::uint64_t> seed;

  auto* run = app.add_subcommand("run", "Run a scenario and write its artifacts");
  run->add_option("--config", config, "Scenario JSON file");
  run->add_option("--preset", preset, "Built-in scenario (see `presets`)");
  run->add_option("--out", out_dir, "Output directory")->required();
  run->add_option("--seed", seed, "Seed overriding the config");
  run->add_option("--threads", threads, "Worker threads (0 = auto)");

  auto* validate = app.add_subcommand("validate", "Check a scenario config without running it");
  validate->add_option("--config", config, "Scenario JSON file");
  validate->add_option("--preset", preset, "Built-in scenario");
  validate->add_option("--seed", seed, "Seed overriding the config");

  std::string show;
  auto* presets = app.add_subcommand("presets", "List built-in scenarios");
  presets->add_option("--show", show, "Print the config of one preset");

  std::string csv_path, model = "lorentzian";
  std::optional<double> fixed_x;
  auto* ingest = app.add_subcommand("ingest", "Fit a measured x,y[,y_err] CSV and print the result as JSON");
  ingest->add_option("csv", csv_path, "Input CSV")->required();
  ingest->add_option("--model", model, "lorentzian, exponential, biexponential or mims");
  ingest->add_option("--fixed-x", fixed_x, "Hold the Mims exponent at this value");
  ingest->add_option("--threads", threads, "Worker threads (0 = auto)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& ex) {
    const int code = app.exit(ex);
    return code == 0 ? 0 : kExitConfig;
  }

  return guarded([&]() -> int {
    reqmem::set_default_threads(reqmem::resolve_thread_count(threads));

    if (*presets) {
      if (!show.empty()) {
        std::cout << reqmem::scenario::preset_config(show).dump(2) << "\n";
        return 0;
      }
      for (const auto& name : reqmem::scenario::preset_names())
        std::cout << name << "  " << reqmem::scenario::preset_config(name).value("description", "") << "\n";
      return 0;
    }

    if (*validate) {
      const auto scenario = load(config, preset, seed);
      std::cout << "ok: kind " << reqmem::scenario::to_string(scenario.kind) << "\n";
      return 0;
    }

    if (*ingest) {
      const auto data = reqmem::io::read_xy_csv(csv_path);
      const auto result = reqmem::fit::fit_by_name(model, data, fixed_x);
      std::cout << reqmem::io::fit_result_json(result).dump(2) << "\n";
      return 0;
    }

    const auto scenario = load(config, preset, seed);
    const auto output = reqmem::scenario::execute(scenario);
    reqmem::scenario::write_outputs(output, out_dir);
    for (const auto& [name, value] : output.derived.items()) print_scalar(name, value);
    return 0;
  });
}

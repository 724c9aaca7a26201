#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "dbmt/config.hpp"
#include "dbmt/error.hpp"
#include "dbmt/experiments.hpp"

namespace {

// Exit codes: 0 ok, 1 usage, 2 bad input, 3 numerical failure, 4 other.
constexpr int kExitInput = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitOther = 4;

struct Common {
  std::string config;
  std::string out = "out";
  int threads = 1;
  long long seed = -1;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("-c,--config", c.config, "INI config file");
  sub->add_option("-o,--out", c.out, "output directory");
  sub->add_option("-j,--threads", c.threads, "worker threads")->check(CLI::PositiveNumber);
  sub->add_option("-s,--seed", c.seed, "seed override for every section that takes one")
      ->check(CLI::NonNegativeNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Diffusion bridge mixture transports"};
  app.footer(
      "Config files are INI: [section] headers with key = value lines; unknown keys are rejected.\n"
      "Image fields are row-major, channel-last H x W x C arrays, either raw little-endian\n"
      "float64 (.bin) or CSV with one row per pixel row and W*C values per line.\n"
      "Exit codes: 0 ok, 2 config or domain error, 3 numerical abort, 4 other failure.");
  app.require_subcommand(1);

  Common common;
  using Command = void (*)(const dbmt::Config&, const dbmt::RunOptions&);
  const std::pair<const char*, Command> commands[] = {
      {"toy", dbmt::cmd_toy},
      {"inspect-weights", dbmt::cmd_inspect_weights},
      {"train", dbmt::cmd_train},
      {"sample", dbmt::cmd_sample},
      {"gp", dbmt::cmd_gp},
      {"variogram", dbmt::cmd_variogram},
  };
  const char* help[] = {
      "three-atom transition matrices, marginal densities and example paths",
      "posterior weights along exact-drift trajectories",
      "fit a drift network",
      "simulate with an exact or learned drift",
      "Gaussian random fields: samples, spectra and sampling cost",
      "empirical variograms and kernel fits",
  };
  std::vector<CLI::App*> subs;
  for (std::size_t i = 0; i < std::size(commands); ++i) {
    subs.push_back(app.add_subcommand(commands[i].first, help[i]));
    add_common(subs.back(), common);
  }

  CLI11_PARSE(app, argc, argv);

  try {
    dbmt::Config cfg = common.config.empty() ? dbmt::Config{} : dbmt::Config::load(common.config);
    if (common.seed >= 0) {
      const std::string s = std::to_string(common.seed);
      for (const char* section : {"sampler", "training", "gp", "variogram"}) cfg.set(section, "seed", s);
    }
    dbmt::RunOptions options;
    options.out_dir = common.out;
    options.threads = common.threads;
    for (std::size_t i = 0; i < subs.size(); ++i)
      if (subs[i]->parsed()) commands[i].second(cfg, options);
  } catch (const dbmt::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitInput;
  } catch (const dbmt::DomainError& e) {
    std::cerr << "domain error: " << e.what() << '\n';
    return kExitInput;
  } catch (const dbmt::UnsupportedError& e) {
    std::cerr << "unsupported: " << e.what() << '\n';
    return kExitInput;
  } catch (const dbmt::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitOther;
  }
  return 0;
}

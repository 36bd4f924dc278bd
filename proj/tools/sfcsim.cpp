#include <CLI11.hpp>

#include "sfcsim/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"microservices-based VNF orchestration simulator"};
  app.require_subcommand(1);

  sfcsim::CliOptions opt;
  std::vector<std::string> sets;
  std::vector<std::uint64_t> seeds;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", opt.config_path, "experiment config file")->required();
    cmd->add_option("--out", opt.out_dir, "output directory");
    cmd->add_option("--seed", seeds, "seed (repeatable, overrides config)");
    cmd->add_option("--set", sets, "override KEY=VALUE (repeatable, dotted keys)");
    cmd->add_option("--threads", opt.threads, "worker threads for seeds");
  };

  auto* run = app.add_subcommand("run", "run the experiment per seed");
  add_common(run);
  auto* compare = app.add_subcommand("compare", "run all config variants side by side");
  add_common(compare);
  auto* selftest = app.add_subcommand("selftest", "fast kernel self-checks");
  bool corrupt = false;
  selftest->add_flag("--corrupt-gradient", corrupt,
                     "negative control: inject a gradient error (test fixture)");

  CLI11_PARSE(app, argc, argv);

  opt.seeds = seeds;
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) {
      std::cerr << "config error: --set expects KEY=VALUE\n";
      return 1;
    }
    opt.sets.push_back({s.substr(0, eq), s.substr(eq + 1)});
  }

  if (run->parsed()) return sfcsim::cmd_run(opt);
  if (compare->parsed()) return sfcsim::cmd_compare(opt);
  return sfcsim::cmd_selftest(corrupt);
}

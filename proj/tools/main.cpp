#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "app.hpp"

int main(int argc, char** argv) {
  using namespace psmpc::app;
  CLI::App cli{"Parallel switched model predictive control: simulation and certification"};
  cli.require_subcommand(1);

  RunOptions run;
  std::uint64_t run_seed = 0;
  std::string run_controller;
  std::string run_mode;
  CLI::App* c_run = cli.add_subcommand("run", "Run one closed-loop scenario");
  c_run->add_option("--scenario", run.scenario, "Scenario TOML file")->required();
  c_run->add_option("--out", run.out, "Output directory")->required();
  auto* o_seed = c_run->add_option("--seed", run_seed, "Override the random seed");
  auto* o_ctrl = c_run->add_option("--controller", run_controller, "pSMPC or single:<id|name>");
  auto* o_mode = c_run->add_option("--mode", run_mode, "nominal or robust")
                     ->check(CLI::IsMember({"nominal", "robust"}));
  c_run->add_option("--threads", run.threads, "Solver threads (default: PSMPC_THREADS)")
      ->check(CLI::NonNegativeNumber);

  CompareOptions cmp;
  std::uint64_t cmp_seed = 0;
  CLI::App* c_cmp =
      cli.add_subcommand("compare", "Run every controller and pSMPC in both modes");
  c_cmp->add_option("--scenario", cmp.scenario, "Scenario TOML file")->required();
  c_cmp->add_option("--out", cmp.out, "Output directory")->required();
  auto* o_cseed = c_cmp->add_option("--seed", cmp_seed, "Override the random seed");
  c_cmp->add_option("--threads", cmp.threads, "Solver threads (default: PSMPC_THREADS)")
      ->check(CLI::NonNegativeNumber);

  CertifyOptions cert;
  CLI::App* c_cert = cli.add_subcommand("certify", "Check the terminal ingredients");
  c_cert->add_option("--scenario", cert.scenario, "Scenario TOML file")->required();
  c_cert->add_flag("--no-repair", cert.no_repair, "Report the terminal sets as synthesized");
  c_cert->add_option("--out", cert.out, "Directory for certificate.json");

  try {
    cli.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return cli.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return cli.exit(e);
  } catch (const CLI::ParseError& e) {
    cli.exit(e);
    return kConfigError;
  }

  if (c_run->parsed()) {
    if (o_seed->count() > 0) run.seed = run_seed;
    if (o_ctrl->count() > 0) run.controller = run_controller;
    if (o_mode->count() > 0) run.mode = run_mode;
    return CmdRun(run, std::cout, std::cerr);
  }
  if (c_cmp->parsed()) {
    if (o_cseed->count() > 0) cmp.seed = cmp_seed;
    return CmdCompare(cmp, std::cout, std::cerr);
  }
  return CmdCertify(cert, std::cout, std::cerr);
}

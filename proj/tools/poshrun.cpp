// poshrun: starts a job of N processing elements on this host.
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "posh/error.hpp"
#include "posh/rte.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Launch a parallel job on the local host"};
  posh::rte::JobSpec spec;
  std::string heap;
  std::optional<int> hold;
  bool safe = false;
  bool unsafe = false;

  app.add_option("-n,--npes", spec.npes, "Number of processing elements")->required()->check(CLI::Range(1, 256));
  app.add_option("--heap", heap, "Symmetric heap size per PE, e.g. 64M");
  app.add_flag("--capture-io", spec.capture_io, "Prefix every output line with \"[rank] \"");
  app.add_option("--debug-hold", hold, "Hold this rank at startup until released");
  app.add_option("--coll", spec.coll_algo, "Collective algorithm override, e.g. linear-put,recursive-doubling");
  app.add_flag("--debug", spec.debug, "Enable runtime debug output in the PEs");
  app.add_flag("--safe", safe, "Enable runtime checks in the PEs");
  app.add_flag("--no-safe", unsafe, "Disable runtime checks in the PEs");
  app.add_option("command", spec.command, "Program and its arguments")->required()->expected(-1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return posh::rte::kExitLauncherError;
  }

  try {
    if (!heap.empty()) spec.heap_size = posh::parse_size(heap);
    if (safe) spec.safe = true;
    if (unsafe) spec.safe = false;
    spec.debug_hold_rank = hold;
    const auto result = posh::rte::launch(spec);
    if (result.exit_code != posh::rte::kExitSuccess) {
      const std::string report = posh::rte::describe_failures(result);
      std::fprintf(stderr, "poshrun: job %s failed\n%s", result.jobid.c_str(), report.c_str());
    }
    return result.exit_code;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "poshrun: %s\n", e.what());
    return posh::rte::kExitLauncherError;
  }
}

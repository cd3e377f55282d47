// posh-release: lets a PE held at startup (poshrun --debug-hold) continue.
#include <cstdio>
#include <string>

#include "CLI11.hpp"
#include "posh/heap.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Release a PE waiting for a debugger"};
  std::string jobid;
  int rank = 0;
  app.add_option("jobid", jobid, "Job identifier printed by the held PE")->required();
  app.add_option("rank", rank, "Rank of the held PE")->required();
  CLI11_PARSE(app, argc, argv);

  try {
    posh::Heap::release_debug_hold(jobid, rank);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "posh-release: %s\n", e.what());
    return 1;
  }
  return 0;
}

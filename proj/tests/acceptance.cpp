// Runs every numbered check at full size and prints one PASS/FAIL/SKIP line
// per check. Check 9 needs MPF_CORA_DIR; MPF_ACCEPT_OUT keeps the sweep CSV.
// Arguments: optional check numbers to run a subset, --quick for small sizes.

#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "mpf/verify.hpp"

int main(int argc, char** argv) {
  mpf::verify::Options opts;
  std::vector<int> ids;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--quick") opts.quick = true;
    else ids.push_back(std::stoi(a));
  }
  if (ids.empty())
    for (int id = 1; id <= mpf::verify::kChecks; ++id) ids.push_back(id);
  if (const char* d = std::getenv("MPF_CORA_DIR"); d && *d) opts.cora_dir = d;
  if (const char* d = std::getenv("MPF_ACCEPT_OUT"); d && *d) opts.out_dir = d;

  int failed = 0;
  for (int id : ids) {
    const auto r = mpf::verify::run_checks(std::vector<int>{id}, opts).front();
    std::cout << mpf::verify::format_line(r) << std::endl;
    failed += r.failed();
  }
  std::cout << (failed ? "FAIL" : "PASS") << " overall: " << failed << " failing check(s)" << std::endl;
  return failed ? 1 : 0;
}

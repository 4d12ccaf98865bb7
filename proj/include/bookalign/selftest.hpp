#pragma once

#include <ostream>
#include <string>
#include <vector>

/// Built-in oracle checks run by `bookalign selftest`.
namespace bookalign::selftest {

struct Check {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// DP against exhaustive enumeration, BLEU against a brute-force counter, and
/// finite-difference checks of the GRU, LSTM and CNN gradients. Each result is
/// also written to `log` as it completes.
std::vector<Check> run(std::ostream& log);

}  // namespace bookalign::selftest

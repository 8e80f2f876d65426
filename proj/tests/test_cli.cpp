// End-to-end checks of the oscope binary: exit codes and byte-identical
// simulate output. The binary path comes from the OSCOPE_BIN environment
// variable, set by the ctest registration.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"

namespace fs = std::filesystem;

namespace {

std::string bin() {
  const char* b = std::getenv("OSCOPE_BIN");
  REQUIRE(b != nullptr);
  return b;
}

int run(const std::string& args) {
  const std::string cmd = bin() + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("simulate twice with one seed emits byte-identical dataset files") {
  const fs::path a = fs::temp_directory_path() / "oscope_cli_a";
  const fs::path b = fs::temp_directory_path() / "oscope_cli_b";
  fs::remove_all(a);
  fs::remove_all(b);

  CHECK(run("simulate --out " + a.string() + " --per-class 3 --seed 1") == 0);
  CHECK(run("simulate --out " + b.string() + " --per-class 3 --seed 1") == 0);

  std::size_t files = 0;
  for (const auto& entry : fs::directory_iterator(a)) {
    const fs::path other = b / entry.path().filename();
    REQUIRE(fs::exists(other));
    CHECK(slurp(entry.path()) == slurp(other));
    ++files;
  }
  CHECK(files == 17 * 3 + 1);  // windows plus dataset.json

  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("exit codes: usage 1, data error 2") {
  CHECK(run("definitely-not-a-subcommand") == 1);
  CHECK(run("eval --model /nonexistent.oscm --data /nonexistent") == 2);
  CHECK(run("classify --model /nonexistent.oscm --trace /nonexistent.trace") == 2);
  CHECK(run("simulate --per-class 3 --seed 1") == 2);  // neither --out nor --save-catalog
}

TEST_CASE("gradcheck subcommand exits zero") {
  CHECK(run("gradcheck") == 0);
}

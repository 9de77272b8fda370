#pragma once

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

namespace dpt::test {

struct CliResult {
  int code = -1;
  std::string out;
};

// Runs the dpt binary with `args`; stdout is captured, stderr discarded.
inline CliResult run_cli(const std::string& args, const std::filesystem::path& scratch) {
  const auto out_file = scratch / "stdout.txt";
  const std::string cmd = std::string(DPT_CLI_PATH) + " " + args + " > " + out_file.string() + " 2> " +
                          (scratch / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  CliResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(out_file);
  r.out.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  return r;
}

inline std::vector<char> file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Every regular file under `dir`, keyed by relative path, compared bytewise.
inline bool same_tree(const std::filesystem::path& a, const std::filesystem::path& b) {
  namespace fs = std::filesystem;
  long n = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), a);
    if (!fs::exists(b / rel) || file_bytes(e.path()) != file_bytes(b / rel)) return false;
    ++n;
  }
  for (const auto& e : fs::recursive_directory_iterator(b))
    if (e.is_regular_file()) --n;
  return n == 0;
}

}  // namespace dpt::test

#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

namespace tsdf::test {

struct RunResult {
  int status = 0;
  std::string err;
};

/// Runs the CLI with `args`, capturing stderr.
inline RunResult run_cli(const std::string& args, const std::string& err_path = "cli_stderr.txt") {
  const std::string cmd = std::string(TSDF_CLI) + " -q " + args + " > /dev/null 2> " + err_path;
  RunResult r;
  const int rc = std::system(cmd.c_str());
  r.status = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  std::ifstream in(err_path);
  r.err.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  return r;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// True when both directory trees hold the same files with identical bytes.
inline bool same_tree(const std::filesystem::path& a, const std::filesystem::path& b) {
  namespace fs = std::filesystem;
  std::size_t n = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const fs::path other = b / fs::relative(e.path(), a);
    if (!fs::exists(other) || slurp(e.path()) != slurp(other)) return false;
    ++n;
  }
  std::size_t m = 0;
  for (const auto& e : fs::recursive_directory_iterator(b)) m += e.is_regular_file();
  return n == m && n > 0;
}

inline std::string small_scene_json() {
  return R"({"primitives": [{"type": "sphere", "center": [0, 0, 0], "radius": 0.5,
             "albedo": {"constant": [0.85, 0.55, 0.35]}}],
            "camera": {"views": 4, "width": 24, "height": 24}, "heldout_views": 1})";
}

/// Reads "key: value" lines.
inline double report_value(const std::string& text, const std::string& key) {
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line))
    if (line.rfind(key + ":", 0) == 0) return std::stod(line.substr(key.size() + 1));
  return std::nan("");
}

}  // namespace tsdf::test

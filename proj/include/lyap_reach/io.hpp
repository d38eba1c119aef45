#pragma once

// Shared I/O plumbing: shortest round-trip double formatting (so CSV/JSON
// outputs are byte-stable across reruns), tiny file helpers, the run manifest,
// and an index-deterministic parallel-for capped by LYAP_REACH_THREADS.

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

namespace lyap_reach {

// Shortest decimal string that round-trips to the same double.
inline std::string format_double(double x) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << content;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// nlohmann::json keeps object keys sorted, so dump() of equal documents is
// byte-identical; this wrapper only pins the indentation convention.
inline std::string json_dump(const nlohmann::json& j) { return j.dump(2) + "\n"; }

inline nlohmann::json json_load(const std::filesystem::path& path) {
  return nlohmann::json::parse(read_text_file(path));
}

// ---------------------------------------------------------------------------
// Threads
// ---------------------------------------------------------------------------

inline unsigned thread_budget() {
  if (const char* env = std::getenv("LYAP_REACH_THREADS")) {
    const long n = std::strtol(env, nullptr, 10);
    if (n >= 1) return static_cast<unsigned>(n);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw ? hw : 1;
}

// Runs fn(i) for i in [0, n). Work is split by index; results must be written
// into preallocated slots so the outcome never depends on scheduling.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const unsigned threads = std::min<std::size_t>(thread_budget(), n ? n : 1);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  pool.reserve(threads);
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < n; i += threads) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (const auto& err : errors)
    if (err) std::rethrow_exception(err);
}

// ---------------------------------------------------------------------------
// Run manifest
// ---------------------------------------------------------------------------

inline std::string iso8601_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::tm tm{};
  gmtime_r(&tt, &tm);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Provenance record written once per output directory. Timestamps are wall
// clock by design; the determinism contract covers the data outputs, and
// comparisons of manifests should ignore the two timestamp fields.
struct RunManifest {
  std::string subcommand;
  nlohmann::json config;
  std::uint64_t seed = 0;
  std::string started_at = iso8601_now();

  void write(const std::filesystem::path& out_dir, const std::vector<std::string>& outputs) const {
    nlohmann::json j;
    j["subcommand"] = subcommand;
    j["config"] = config;
    j["seed"] = seed;
    j["config_hash"] = fnv1a_hex(config.dump());
    j["started_at"] = started_at;
    j["finished_at"] = iso8601_now();
    j["outputs"] = outputs;
    write_text_file(out_dir / "manifest.json", json_dump(j));
  }

  static std::string fnv1a_hex(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
  }
};

}  // namespace lyap_reach

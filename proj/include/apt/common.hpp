#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace apt {

// Error hierarchy. The CLI maps these onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad invocation or configuration detected before any work starts.
class UsageError : public Error {
 public:
  using Error::Error;
};

// Input data violates a documented invariant (malformed rows, bad scores...).
class DataError : public Error {
 public:
  using Error::Error;
};

// Network or provider failure that survived the retry budget.
class TransportError : public Error {
 public:
  using Error::Error;
};

// Provider rejected the request as a client fault (4xx other than 408/429).
class ConfigurationError : public Error {
 public:
  using Error::Error;
};

// A remote service answered with a payload that breaks the wire contract.
class ContractError : public Error {
 public:
  using Error::Error;
};

// A remote service refused the call because a required earlier call is missing.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

// A pipeline stage cannot continue (too many unparsable responses, ...).
class StageAbort : public Error {
 public:
  using Error::Error;
};

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
bool iequals(std::string_view a, std::string_view b);
std::vector<std::string> split_whitespace(std::string_view s);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

// Locale-independent fixed-point rendering ("0.90").
std::string format_fixed(double value, int decimals);

// Hex SHA-256 digest.
std::string sha256_hex(std::string_view data);

// 64-bit mixing hash used for seeded, reproducible pseudo-randomness.
std::uint64_t hash64(std::string_view data, std::uint64_t seed = 0);

// Maps a 64-bit value to [0, 1).
inline double unit_interval(std::uint64_t x) {
  return static_cast<double>(x >> 11) * (1.0 / 9007199254740992.0);
}

enum class LogLevel { quiet, warn, info };
void set_log_level(LogLevel level);
void log_info(std::string_view message);
void log_warn(std::string_view message);

// Uniform draw in [0, bound) from a standardized engine. std::uniform_int_distribution
// is implementation-defined, which would make splits differ across standard libraries.
inline std::uint64_t bounded_draw(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t limit = std::mt19937_64::max() - std::mt19937_64::max() % bound;
  std::uint64_t x = rng();
  while (x >= limit) x = rng();
  return x % bound;
}

template <typename T>
void seeded_shuffle(std::vector<T>& items, std::mt19937_64& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(bounded_draw(rng, i));
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace apt

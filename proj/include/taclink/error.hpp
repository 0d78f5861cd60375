#pragma once

#include <stdexcept>
#include <string>

namespace taclink {

// Argument outside the mathematical domain of an operation (log of a
// non-positive distance, duty cycle above one, ...).
class DomainError : public std::domain_error {
public:
  using std::domain_error::domain_error;
};

// A configuration value is inconsistent or missing. `field()` names the
// offending key so front-ends can point at it.
class ConfigError : public std::runtime_error {
public:
  ConfigError(std::string field, const std::string& what)
      : std::runtime_error(field + ": " + what), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

private:
  std::string field_;
};

enum class PacketErrc {
  crc_mismatch,
  length_malformed,
  bad_version,
  nonce_reuse,
  payload_too_large,
};

inline const char* to_string(PacketErrc e) {
  switch (e) {
    case PacketErrc::crc_mismatch: return "crc mismatch";
    case PacketErrc::length_malformed: return "length malformed";
    case PacketErrc::bad_version: return "bad version";
    case PacketErrc::nonce_reuse: return "nonce reuse";
    case PacketErrc::payload_too_large: return "payload too large";
  }
  return "unknown";
}

class PacketError : public std::runtime_error {
public:
  explicit PacketError(PacketErrc code)
      : std::runtime_error(to_string(code)), code_(code) {}
  PacketError(PacketErrc code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}

  PacketErrc code() const noexcept { return code_; }

private:
  PacketErrc code_;
};

}  // namespace taclink

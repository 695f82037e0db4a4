#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cpm {

enum class Errc {
  syntax,
  duplicate_variable,
  unknown_variable,
  unknown_state,
  malformed_table,
  invalid_network,
  not_same_clique,
  zero_probability,
  invalid_evidence,
  out_of_limits,
  unknown_user,
  duplicate_user,
  busy,
  sequence_gap,
  replay_mismatch,
  storage,
  invalid_argument,
};

inline std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::syntax: return "syntax";
    case Errc::duplicate_variable: return "duplicate_variable";
    case Errc::unknown_variable: return "unknown_variable";
    case Errc::unknown_state: return "unknown_state";
    case Errc::malformed_table: return "malformed_table";
    case Errc::invalid_network: return "invalid_network";
    case Errc::not_same_clique: return "not_same_clique";
    case Errc::zero_probability: return "zero_probability";
    case Errc::invalid_evidence: return "invalid_evidence";
    case Errc::out_of_limits: return "out_of_limits";
    case Errc::unknown_user: return "unknown_user";
    case Errc::duplicate_user: return "duplicate_user";
    case Errc::busy: return "busy";
    case Errc::sequence_gap: return "sequence_gap";
    case Errc::replay_mismatch: return "replay_mismatch";
    case Errc::storage: return "storage";
    case Errc::invalid_argument: return "invalid_argument";
  }
  return "unknown";
}

// All library failures carry a machine-readable code; the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace cpm

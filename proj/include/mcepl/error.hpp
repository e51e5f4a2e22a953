#pragma once

#include <stdexcept>
#include <string>

namespace mcepl {

// Error taxonomy. Each maps to one failure class of the simulator; the CLI
// turns ConfigError into exit code 1 and everything else into exit code 2.

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ArgumentError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ProtocolError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SimulationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GenerationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace mcepl

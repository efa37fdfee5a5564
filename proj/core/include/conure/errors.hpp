#pragma once

#include <stdexcept>
#include <string>

namespace conure {

// Base class for every error the library raises on purpose.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape or axis mismatch between operands.
struct DimensionError : Error {
  using Error::Error;
};

// An id falls outside the vocabulary or label space.
struct VocabularyError : Error {
  using Error::Error;
};

// API misuse: non-scalar loss, backward run twice, and the like.
struct ContractError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

// Illegal task-state transition or an operation run in the wrong phase.
struct LifecycleError : Error {
  using Error::Error;
};

// Unknown task id or a registry ordering violation.
struct RegistryError : Error {
  using Error::Error;
};

struct DataError : Error {
  using Error::Error;
};

struct AuditError : Error {
  using Error::Error;
};

struct CheckpointError : Error {
  using Error::Error;
};

}  // namespace conure

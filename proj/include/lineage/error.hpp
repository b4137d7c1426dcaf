#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lineage {

enum class ErrorKind {
  InvalidPrompt,
  InvalidInput,
  Parse,
  MissingFile,
  DuplicateId,
  MissingVocabulary,
  DimensionMismatch,
  EmptyFingerprint,
  Transport,
  BadResponse,
  InvariantViolation,
  DegenerateColumn,
  Checkpoint,
  Generation,
  ProbeIncomplete,
  UnknownPrompt,
  Config,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the library carries a kind so callers (and the
/// CLI exit-code mapping) can branch without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  /// Transport errors are the only ones a retry loop may swallow.
  bool retryable() const noexcept { return kind_ == ErrorKind::Transport; }

 private:
  ErrorKind kind_;
};

}  // namespace lineage

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gigassl {

enum class ErrorKind {
  EmptyBag,
  DimensionMismatch,
  NonFiniteGradient,
  StaleRulebook,
  NoForwardCache,
  DegenerateBatch,
  FormatError,
  CorruptBank,
  InsufficientTiles,
  DegenerateProjection,
  DegenerateEmbedding,
  DegenerateLabels,
  BudgetTooSmall,
  InvalidArgument,
  Io,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::EmptyBag: return "EmptyBag";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorKind::StaleRulebook: return "StaleRulebook";
    case ErrorKind::NoForwardCache: return "NoForwardCache";
    case ErrorKind::DegenerateBatch: return "DegenerateBatch";
    case ErrorKind::FormatError: return "FormatError";
    case ErrorKind::CorruptBank: return "CorruptBank";
    case ErrorKind::InsufficientTiles: return "InsufficientTiles";
    case ErrorKind::DegenerateProjection: return "DegenerateProjection";
    case ErrorKind::DegenerateEmbedding: return "DegenerateEmbedding";
    case ErrorKind::DegenerateLabels: return "DegenerateLabels";
    case ErrorKind::BudgetTooSmall: return "BudgetTooSmall";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

// Errors caused by bad user input (flags, budgets, labels) as opposed to
// failures while running. The CLI maps these to exit code 1.
inline bool is_validation_error(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::BudgetTooSmall:
    case ErrorKind::InvalidArgument:
    case ErrorKind::DegenerateLabels:
    case ErrorKind::InsufficientTiles:
      return true;
    default:
      return false;
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define GIGASSL_DEFINE_ERROR(Name)                                      \
  class Name : public Error {                                           \
   public:                                                              \
    explicit Name(const std::string& what) : Error(ErrorKind::Name, what) {} \
  };

GIGASSL_DEFINE_ERROR(EmptyBag)
GIGASSL_DEFINE_ERROR(DimensionMismatch)
GIGASSL_DEFINE_ERROR(NonFiniteGradient)
GIGASSL_DEFINE_ERROR(StaleRulebook)
GIGASSL_DEFINE_ERROR(NoForwardCache)
GIGASSL_DEFINE_ERROR(DegenerateBatch)
GIGASSL_DEFINE_ERROR(FormatError)
GIGASSL_DEFINE_ERROR(CorruptBank)
GIGASSL_DEFINE_ERROR(InsufficientTiles)
GIGASSL_DEFINE_ERROR(DegenerateProjection)
GIGASSL_DEFINE_ERROR(DegenerateEmbedding)
GIGASSL_DEFINE_ERROR(DegenerateLabels)
GIGASSL_DEFINE_ERROR(BudgetTooSmall)
GIGASSL_DEFINE_ERROR(InvalidArgument)
GIGASSL_DEFINE_ERROR(Io)

#undef GIGASSL_DEFINE_ERROR

// Throws the concrete error class of `kind`.
[[noreturn]] inline void raise(ErrorKind kind, const std::string& what) {
  switch (kind) {
    case ErrorKind::EmptyBag: throw EmptyBag(what);
    case ErrorKind::DimensionMismatch: throw DimensionMismatch(what);
    case ErrorKind::NonFiniteGradient: throw NonFiniteGradient(what);
    case ErrorKind::StaleRulebook: throw StaleRulebook(what);
    case ErrorKind::NoForwardCache: throw NoForwardCache(what);
    case ErrorKind::DegenerateBatch: throw DegenerateBatch(what);
    case ErrorKind::FormatError: throw FormatError(what);
    case ErrorKind::CorruptBank: throw CorruptBank(what);
    case ErrorKind::InsufficientTiles: throw InsufficientTiles(what);
    case ErrorKind::DegenerateProjection: throw DegenerateProjection(what);
    case ErrorKind::DegenerateEmbedding: throw DegenerateEmbedding(what);
    case ErrorKind::DegenerateLabels: throw DegenerateLabels(what);
    case ErrorKind::BudgetTooSmall: throw BudgetTooSmall(what);
    case ErrorKind::InvalidArgument: throw InvalidArgument(what);
    case ErrorKind::Io: throw Io(what);
  }
  throw Error(kind, what);
}

}  // namespace gigassl

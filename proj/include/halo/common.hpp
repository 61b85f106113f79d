#pragma once

#include <stdexcept>
#include <string>

namespace halo {

enum class Err {
  InvalidParameter,
  EmptyMask,
  EmptyRing,
  ZeroWeight,
  DegeneratePrototype,
  DegenerateGraph,
  DegenerateMask,
  EmptyPrompt,
  ShapeMismatch,
  Generation,
  Load,
  TrainingDivergence,
  Config,
  Io,
};

class Error : public std::runtime_error {
public:
  Error(Err code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Err code() const { return code_; }

private:
  Err code_;
};

[[noreturn]] inline void fail(Err code, const std::string& msg) { throw Error(code, msg); }

inline void require(bool ok, Err code, const std::string& msg) {
  if (!ok) fail(code, msg);
}

}  // namespace halo

#pragma once

#include <stdexcept>
#include <string>

namespace bsp {

/// Failure kinds for the on-disk formats (clip tensors, checkpoints).
enum class FormatErrc {
  io,
  bad_magic,
  truncated,
  shape_mismatch,
  version_mismatch,
  bad_manifest,
};

inline const char* to_string(FormatErrc e) {
  switch (e) {
    case FormatErrc::io: return "io error";
    case FormatErrc::bad_magic: return "bad magic";
    case FormatErrc::truncated: return "truncated";
    case FormatErrc::shape_mismatch: return "shape mismatch";
    case FormatErrc::version_mismatch: return "version mismatch";
    case FormatErrc::bad_manifest: return "bad manifest";
  }
  return "?";
}

class FormatError : public std::runtime_error {
 public:
  FormatError(FormatErrc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}
  FormatErrc code() const noexcept { return code_; }

 private:
  FormatErrc code_;
};

/// A training run produced a non-finite loss.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& trainer, long step)
      : std::runtime_error(trainer + ": loss diverged (non-finite) at step " + std::to_string(step)),
        step_(step) {}
  long step() const noexcept { return step_; }

 private:
  long step_;
};

}  // namespace bsp

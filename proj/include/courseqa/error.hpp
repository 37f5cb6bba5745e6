#pragma once

#include <stdexcept>
#include <string>

namespace courseqa {

// Base for every recoverable failure the library reports. `code` is a short
// machine-readable tag surfaced by the CLI.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& message, std::string code = "error")
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

}  // namespace courseqa

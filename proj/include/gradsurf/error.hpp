#pragma once

#include <stdexcept>
#include <string>

namespace gradsurf {

// Every failure carries the pipeline stage that raised it so the CLI can
// route it ("camera_data", "privacy_operator", "trainer", ...).
class Error : public std::runtime_error {
 public:
  Error(std::string stage, const std::string& message)
      : std::runtime_error("[" + stage + "] " + message), stage_(std::move(stage)) {}

  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace gradsurf

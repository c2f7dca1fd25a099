#pragma once

namespace sdelearn {

/// CLI entry point (run | simulate | kde | evaluate | list).
/// Exit codes: 0 success, 2 input/validation error, 3 numerical failure.
int cli_main(int argc, const char* const* argv);

}  // namespace sdelearn

// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <ostream>

namespace sonic {

// Entry point of the sonic_lab tool. Returns the process exit code: 0 on
// success, 2 for usage errors, 1 for every other failure. Failures print a
// single line "error: <kind>: <message>" to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace sonic

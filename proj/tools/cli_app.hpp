// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <ostream>

namespace kintro {

/// Entry point of the `kintro` command; returns the process exit code.
/// Errors are reported on `err` as "error[<category>]: <message>".
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace kintro

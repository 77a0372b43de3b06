// SPDX-License-Identifier: Apache-2.0
#include "cli_app.hpp"

#include <iostream>

int main(int argc, char** argv) { return kintro::run_cli(argc, argv, std::cout, std::cerr); }

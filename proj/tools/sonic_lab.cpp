// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "sonic/cli.hpp"

int main(int argc, char** argv) { return sonic::run_cli(argc, argv, std::cout, std::cerr); }

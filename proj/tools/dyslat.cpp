// SPDX-License-Identifier: Apache-2.0
#include <dyslat/service/cli.hpp>

int main(int argc, char **argv) { return dyslat::service::run_cli(argc, argv); }

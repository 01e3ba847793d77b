// SPDX-FileCopyrightText: © 2026 The fmcsub Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "fmcsub/cli.hpp"

int main(int argc, char** argv) { return fmcsub::run_cli(argc, argv); }

// SPDX-License-Identifier: Apache-2.0
#include "tinyedit/cli.hpp"

int main(int argc, char** argv)
{
    return tinyedit::run_cli(argc, argv);
}

#include "consplat/cli.hpp"

int main(int argc, char **argv) { return consplat::cli_dispatch(argc, argv); }

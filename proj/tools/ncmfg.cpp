#include "ncmfg/cli.hpp"

int main(int argc, char** argv) { return ncmfg::run_cli(argc, argv); }

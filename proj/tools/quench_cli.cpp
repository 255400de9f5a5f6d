#include "quench/cli.hpp"

int main(int argc, char** argv) { return quench::run_cli(argc, argv); }

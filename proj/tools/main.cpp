#include "smr/cli.hpp"

int main(int argc, char** argv) { return smr::run_cli(argc, argv); }

#include "cli.hpp"

int main(int argc, char** argv) { return avpr::cli::run_cli(argc, argv); }

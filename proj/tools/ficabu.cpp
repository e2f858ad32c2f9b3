#include "ficabu/cli.hpp"

int main(int argc, char** argv) { return ficabu::cli::run_cli(argc, argv); }

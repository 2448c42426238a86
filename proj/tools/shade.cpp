#include "shade/commands.hpp"

int main(int argc, char** argv) { return shade::cli::run_cli(argc, argv); }

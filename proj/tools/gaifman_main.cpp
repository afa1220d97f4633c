#include "gaifman/cli.hpp"

int main(int argc, char** argv) { return gaifman::cli::run(argc, argv); }

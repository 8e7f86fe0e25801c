#include "cli.hpp"

int main(int argc, char** argv) { return segdet::cli::run(argc, argv); }

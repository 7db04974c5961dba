#include "cli.hpp"

int main(int argc, char** argv) { return luna::cli::run(argc, argv); }

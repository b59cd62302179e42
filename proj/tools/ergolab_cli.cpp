#include "cli.hpp"

int main(int argc, char** argv) { return ergolab::cli::run(argc, argv); }

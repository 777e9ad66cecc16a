#include "cli.hpp"

int main(int argc, char** argv) { return morphgan::cli::run(argc, argv); }

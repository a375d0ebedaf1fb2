#include "cli.hpp"

int main(int argc, char** argv) { return hoflow::cli::run(argc, argv); }

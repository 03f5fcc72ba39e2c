#include "defdis/cli.hpp"

int main(int argc, char** argv) { return defdis::cli::run(argc, argv); }

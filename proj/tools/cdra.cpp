#include "cdra/cli.hpp"

int main(int argc, char** argv) { return cdra::cli::run(argc, argv); }

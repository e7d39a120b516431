#include "sigdet/cli.hpp"

int main(int argc, char** argv) { return sigdet::cli::main(argc, argv); }

#include "citerec/cli.hpp"

int main(int argc, char** argv) { return citerec::cli::run(argc, argv); }

#include "cli.hpp"

int main(int argc, char** argv) { return dsta::cli::dispatch(argc, argv); }

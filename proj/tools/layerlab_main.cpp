#include "layerlab/cli.hpp"

int main(int argc, char** argv) { return layerlab::cli::run_main(argc, argv); }

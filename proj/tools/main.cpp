#include "relgraph/cli.hpp"

int main(int argc, char** argv) { return relgraph::cli::dispatch(argc, argv); }

#include "cli.hpp"

int main(int argc, char** argv) { return conure::cli_dispatch(argc, argv); }

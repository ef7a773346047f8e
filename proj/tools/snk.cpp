#include "snk/harness.hpp"

int main(int argc, char** argv) { return snk::cli_main(argc, argv); }

#include "strokescope/cli.hpp"

int main(int argc, char** argv) { return strokescope::cli_main(argc, argv); }

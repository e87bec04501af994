#include "flownorm/cli.hpp"

int main(int argc, char** argv) { return flownorm::cli_main(argc, argv); }

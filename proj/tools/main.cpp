#include "sdelearn/cli.hpp"

int main(int argc, char** argv) { return sdelearn::cli_main(argc, argv); }

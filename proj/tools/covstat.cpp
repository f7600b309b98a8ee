#include "covstat/cli_io.hpp"

int main(int argc, char** argv) { return covstat::run_cli(argc, argv); }
